use proptest::prelude::*;

use qpnls::config::{EigenSourceChoice, RunConfig, REQUIRED};
use qpnls::error::Error;
use qpnls::harness::{exit_code, Overrides, RunOutcome, Status, Subcommand};

fn config_path(e: Error) -> String {
    match e {
        Error::Config { path, .. } => path,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn empty_document_lists_every_required_field() {
    for (text, fmt) in [("", "toml"), ("{}", "json")] {
        let path = config_path(RunConfig::parse(text, fmt).unwrap_err());
        for field in REQUIRED {
            assert!(path.contains(field), "{path}");
        }
    }
}

#[test]
fn partially_missing_fields_are_named() {
    let text = "[model]\nomega_bar = [1.0]\nepsilon = 1e-3\n[truncation]\nnphi = 4\n";
    assert_eq!(config_path(RunConfig::parse(text, "toml").unwrap_err()), "truncation.nx");
}

#[test]
fn minimal_toml_and_json_agree() {
    let toml = "[model]\nomega_bar = [0.6180339887498949]\nepsilon = 1e-3\n[truncation]\nnphi = 8\nnx = 8\n";
    let json = r#"{"model": {"omega_bar": [0.6180339887498949], "epsilon": 1e-3}, "truncation": {"nphi": 8, "nx": 8}}"#;
    let a = RunConfig::parse(toml, "toml").unwrap();
    assert_eq!(a, RunConfig::parse(json, "json").unwrap());
    assert_eq!(a, RunConfig::default());
}

#[test]
fn snapshot_round_trips() {
    let mut c = RunConfig::default();
    c.measure.source = EigenSourceChoice::Reduced;
    c.grid.lambdas = Some(vec![0.9, 1.1]);
    c.stability.epsilons = vec![1e-4, 1e-3];
    assert_eq!(RunConfig::parse(&c.to_toml().unwrap(), "toml").unwrap(), c);
}

#[test]
fn type_errors_carry_the_field_path() {
    let text = "[model]\nomega_bar = [1.0]\nepsilon = 1e-3\n[truncation]\nnphi = 4\nnx = \"eight\"\n";
    assert_eq!(config_path(RunConfig::parse(text, "toml").unwrap_err()), "truncation.nx");
    let text = "[model]\nomega_bar = [1.0]\nepsilon = 1e-3\n[truncation]\nnphi = 4\nnx = 4\n[solver.inversion.kam]\ngamma = \"x\"\n";
    assert_eq!(config_path(RunConfig::parse(text, "toml").unwrap_err()), "solver.inversion.kam.gamma");
}

#[test]
fn unknown_fields_are_rejected() {
    let text = "[model]\nomega_bar = [1.0]\nepsilon = 1e-3\n[truncation]\nnphi = 4\nnx = 4\n[measure]\ngama_list = [0.1]\n";
    let path = config_path(RunConfig::parse(text, "toml").unwrap_err());
    assert!(path.starts_with("measure"), "{path}");
}

#[test]
fn solver_epsilon_is_rejected() {
    let text = "[model]\nomega_bar = [1.0]\nepsilon = 1e-3\n[truncation]\nnphi = 4\nnx = 4\n[solver]\nepsilon = 1e-2\n";
    assert_eq!(config_path(RunConfig::parse(text, "toml").unwrap_err()), "solver.epsilon");
}

#[test]
fn semantic_checks_name_the_field() {
    let mut c = RunConfig::default();
    c.model.epsilon = -1.0;
    assert_eq!(config_path(c.validate().unwrap_err()), "model.epsilon");
    let mut c = RunConfig::default();
    c.grid.lambdas = Some(vec![2.0]);
    assert_eq!(config_path(c.validate().unwrap_err()), "grid.lambdas");
    let c = RunConfig {
        seed: u64::MAX,
        ..RunConfig::default()
    };
    assert_eq!(config_path(c.validate().unwrap_err()), "seed");
}

#[test]
fn overrides_replace_fields_and_revalidate() {
    let ov = Overrides {
        seed: Some(7),
        threads: Some(2),
        gamma_list: Some(vec![0.2, 0.1]),
        epsilon: Some(1e-2),
        truncation: Some((6, 5)),
    };
    let c = ov.apply(RunConfig::default()).unwrap();
    assert_eq!((c.seed, c.threads, c.truncation.nphi, c.truncation.nx), (7, 2, 6, 5));
    assert_eq!(c.measure.gamma_list, vec![0.2, 0.1]);
    assert_eq!(c.solver_config().epsilon, 1e-2);
    let bad = Overrides {
        truncation: Some((0, 4)),
        ..Default::default()
    };
    assert_eq!(config_path(bad.apply(RunConfig::default()).unwrap_err()), "truncation.nphi");
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let ok = |status| {
        Ok(RunOutcome {
            subcommand: Subcommand::Solve,
            status,
            run_dir: ".".into(),
            files: vec![],
            summary: String::new(),
        })
    };
    assert_eq!(exit_code(&ok(Status::Ok)), 0);
    assert_eq!(exit_code(&ok(Status::EmptyCantorSet)), 2);
    assert_eq!(exit_code(&Err(Error::EmptyCantorSet)), 2);
    assert_eq!(exit_code(&Err(Error::Divergence { n: 3, residual: 1.0 })), 3);
    assert_eq!(exit_code(&Err(Error::Divergence { n: 3, residual: 1.0 }.at("solve"))), 3);
    assert_eq!(exit_code(&Err(Error::config("model", "bad"))), 4);
    assert_eq!(exit_code(&Err(Error::InvalidInput("x".into()))), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snapshots_round_trip(eps in 0.0f64..0.05, nphi in 1usize..12, nx in 1usize..12, seed in 0..=i64::MAX as u64, w in 0.3f64..2.0) {
        let mut c = RunConfig::default();
        c.model.epsilon = eps;
        c.model.omega_bar = vec![w];
        c.truncation.nphi = nphi;
        c.truncation.nx = nx;
        c.seed = seed;
        let text = c.to_toml().unwrap();
        prop_assert_eq!(RunConfig::parse(&text, "toml").unwrap(), c.clone());
        let mut json = serde_json::to_value(&c).unwrap();
        json["solver"].as_object_mut().unwrap().remove("epsilon");
        prop_assert_eq!(RunConfig::from_value(json).unwrap(), c);
    }
}
