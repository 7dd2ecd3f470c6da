//! End-to-end runs of the `calibfield` binary on tiny configurations.

use std::path::Path;
use std::process::{Command, Output};

use calibfield::cli::{cmd_evaluate, cmd_train, read_checkpoint, resolve_config, GlobalArgs, Manifest};
use calibfield::config::{RunConfig, RESOLVED_CONFIG_FILE};
use calibfield::dataio::{split, Dataset, NeighbourBank};
use calibfield::field::{FieldModel, Representation};
use serde_json::Value;

const TINY: &str = r#"
[data]
kind = "three_cluster"
n = 600
[train]
max_epochs = 2
batch_size = 128
[grid]
sigmas = [0.1, 0.3]
lambdas = [0.0, 0.01]
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_calibfield"));
    c.env_clear();
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.toml"), TINY).unwrap();
    d
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic_and_records_metadata() {
    let d = setup();
    ok(&run(d.path(), &["generate", "--config", "c.toml", "--out", "a"]));
    ok(&run(d.path(), &["generate", "--config", "c.toml", "--out", "b", "--format", "csv"]));
    let a: Manifest = serde_json::from_value(read_json(&d.path().join("a/manifest.json"))).unwrap();
    let b: Manifest = serde_json::from_value(read_json(&d.path().join("b/manifest.json"))).unwrap();
    assert_eq!(a.files, b.files);
    assert_eq!(a.n, 600);
    let rows = std::fs::read_to_string(d.path().join("a/data.csv")).unwrap().lines().count();
    assert_eq!(rows, 601);
    assert!(d.path().join("a").join(RESOLVED_CONFIG_FILE).exists());

    let o = run(
        d.path(),
        &["generate", "--out", "s", "--format", "bin"],
    );
    ok(&o);
    let s = run_env(d.path(), &[("CALIBFIELD_DATA__KIND", "sinusoidal"), ("CALIBFIELD_DATA__AMPLITUDE", "0.6")], &["generate", "--out", "s2"]);
    ok(&s);
    let m = read_json(&d.path().join("s2/manifest.json"));
    assert_eq!(m["source"]["amplitude"], 0.6);
    assert_eq!(m["source"]["frequency"], 3);
    assert!(m["source"]["direction"].is_array());
}

fn run_env(dir: &Path, env: &[(&str, &str)], args: &[&str]) -> Output {
    let mut c = bin();
    c.current_dir(dir).args(args);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

#[test]
fn invalid_spec_and_missing_inputs_map_to_exit_codes() {
    let d = setup();
    let o = run_env(d.path(), &[("CALIBFIELD_DATA__KIND", "sinusoidal"), ("CALIBFIELD_DATA__FREQUENCY", "0")], &["generate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frequency"));

    assert_eq!(run(d.path(), &["train", "--config", "missing.toml"]).status.code(), Some(2));
    std::fs::write(d.path().join("f.toml"), "[data]\nkind = \"file\"\npath = \"nope.csv\"\n").unwrap();
    assert_eq!(run(d.path(), &["train", "--config", "f.toml"]).status.code(), Some(3));
    std::fs::write(d.path().join("bad.csv"), "f,y,x0\n0.5,2,0.1\n").unwrap();
    std::fs::write(d.path().join("g.toml"), "[data]\nkind = \"file\"\npath = \"bad.csv\"\n").unwrap();
    assert_eq!(run(d.path(), &["train", "--config", "g.toml"]).status.code(), Some(3));
    assert_eq!(run(d.path(), &["sweep", "--jobs", "0"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_is_reproducible_from_its_resolved_config() {
    let d = setup();
    ok(&run(d.path(), &["train", "--config", "c.toml", "--out", "t1", "--seed", "3"]));
    ok(&run(d.path(), &["train", "--config", "t1/resolved_config.toml", "--out", "t2"]));
    let h1 = std::fs::read(d.path().join("t1/history.csv")).unwrap();
    let h2 = std::fs::read(d.path().join("t2/history.csv")).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(
        std::fs::read(d.path().join("t1/phi.cfnet")).unwrap(),
        std::fs::read(d.path().join("t2/phi.cfnet")).unwrap()
    );
    let ck = read_checkpoint(&d.path().join("t1")).unwrap();
    assert_eq!(ck.bank_seed, 3);
    let text = std::fs::read_to_string(d.path().join("t1/history.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "epoch,train_loss,mean_mass,val_proxy");
}

#[test]
fn sweep_writes_one_row_per_cell_and_diagnostics() {
    let d = setup();
    ok(&run(d.path(), &["sweep", "--config", "c.toml", "--out", "s", "--jobs", "2"]));
    let grid = std::fs::read_to_string(d.path().join("s/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 4);
    assert_eq!(grid.lines().next().unwrap(), "sigma,lambda,proxy,oracle_corr");
    let sel = read_json(&d.path().join("s/selection.json"));
    for k in ["spearman", "spread", "regret"] {
        assert!(sel["diagnostics"].get(k).is_some(), "missing {k}");
    }
    assert!(d.path().join("s/phi.cfnet").exists() && d.path().join("s/model.json").exists());

    // Parallelism does not change the result.
    ok(&run(d.path(), &["sweep", "--config", "c.toml", "--out", "s1", "--jobs", "1"]));
    assert_eq!(grid, std::fs::read_to_string(d.path().join("s1/grid.csv")).unwrap());
}

#[test]
fn singleton_sweep_equals_train() {
    let d = setup();
    let env = [("CALIBFIELD_GRID__SIGMAS", "[0.3]"), ("CALIBFIELD_GRID__LAMBDAS", "[0.01]")];
    ok(&run_env(d.path(), &env, &["sweep", "--config", "c.toml", "--out", "s"]));
    ok(&run(d.path(), &["train", "--config", "c.toml", "--out", "t"]));
    assert_eq!(
        std::fs::read(d.path().join("s/history.csv")).unwrap(),
        std::fs::read(d.path().join("t/history.csv")).unwrap()
    );
    let sel = read_json(&d.path().join("s/selection.json"));
    assert_eq!(sel["diagnostics"]["regret"], 0.0);
}

#[test]
fn evaluate_reports_four_conditions_with_bounded_corrections() {
    let d = setup();
    ok(&run(d.path(), &["train", "--config", "c.toml", "--out", "t"]));
    ok(&run(d.path(), &["evaluate", "--config", "c.toml", "--checkpoint", "t", "--out", "e"]));
    let r = read_json(&d.path().join("e/evaluation.json"));
    let names: Vec<&str> = r["conditions"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["raw", "corrected", "isotonic", "temperature"]);
    for c in r["conditions"].as_array().unwrap() {
        assert!(c["slice_smece"].is_object());
    }
    let field = std::fs::read_to_string(d.path().join("e/field.csv")).unwrap();
    let header: Vec<&str> = field.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "corrected").unwrap();
    for line in field.lines().skip(1) {
        let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    for f in ["recal_range_aware.json", "recal_isotonic.json", "recal_temperature.json", "reliability_raw.csv", RESOLVED_CONFIG_FILE] {
        assert!(d.path().join("e").join(f).exists(), "{f}");
    }
}

#[test]
fn test_time_field_depends_only_on_the_train_bank() {
    let d = setup();
    let mut cfg = RunConfig::from_toml_str(TINY).unwrap();
    cmd_train(&mut cfg, &d.path().join("t")).unwrap();
    let ds = cfg.data.load().unwrap();
    let s = split(&ds, &cfg.split).unwrap();
    let (model, _) = calibfield::cli::load_field(&d.path().join("t"), &s.train).unwrap();
    // Same model with val and test rows appended to the training data the
    // bank is drawn from: a bank built only from train must not see them.
    let before = model.estimate_dataset(&s.test).unwrap();
    let all = Dataset::concat(&[&s.train, &s.val, &s.test]).unwrap();
    let b = &model.bank;
    assert!(b.source_indices.iter().all(|&i| i < s.train.len()));
    let sub = all.subset(&b.source_indices);
    let rebuilt = FieldModel::new(
        model.representation.clone(),
        model.kernel,
        NeighbourBank {
            embeddings: sub.embeddings().clone(),
            residuals: sub.residuals(),
            source_indices: b.source_indices.clone(),
            cap: b.cap,
        },
    )
    .unwrap();
    assert_eq!(rebuilt.estimate_dataset(&s.test).unwrap().values, before.values);
    assert!(matches!(model.representation, Representation::Learned(_)));

    let r = cmd_evaluate(&mut cfg, Some(&d.path().join("t")), &d.path().join("e")).unwrap();
    assert_eq!(r.n_test, s.test.len());
}

#[test]
fn audit_flags_enable_suites() {
    let d = setup();
    ok(&run(d.path(), &["train", "--config", "c.toml", "--out", "t"]));
    ok(&run(d.path(), &["audit", "--config", "c.toml", "--checkpoint", "t", "--out", "a0"]));
    let a0 = read_json(&d.path().join("a0/audit.json"));
    assert!(a0["bootstrap"].is_null() && a0["permutation_null"].is_null() && a0["seed_stability"].is_null());

    ok(&run(
        d.path(),
        &[
            "audit", "--config", "c.toml", "--checkpoint", "t", "--out", "a1", "--bootstrap", "100",
            "--permutation-null", "2", "--seeds", "4,5", "--epsilon", "0.03",
        ],
    ));
    let a1 = read_json(&d.path().join("a1/audit.json"));
    assert_eq!(a1["epsilon"], 0.03);
    assert_eq!(a1["bootstrap"]["replicates"], 100);
    let null = &a1["permutation_null"];
    for k in ["real", "null_std_mean", "null_gap_mean", "null_gap_p95"] {
        assert!(!null[k].is_null(), "{k}");
    }
    assert_eq!(null["nulls"].as_array().unwrap().len(), 2);
    let stab = &a1["seed_stability"];
    assert!(stab["correlation_mean"].is_number() && stab["sign_agreement_mean"].is_number());
    assert_eq!(a1["seeds"], serde_json::json!([0, 4, 5]));
    assert_eq!(a1["config"]["regime"]["epsilon"], 0.03);
    let sweep = std::fs::read_to_string(d.path().join("a1/threshold_sweep.csv")).unwrap();
    assert!(sweep.starts_with("epsilon,n_over,n_under,n_good"));
    assert_eq!(run(d.path(), &["audit", "--config", "c.toml", "--checkpoint", "t", "--bootstrap", "10"]).status.code(), Some(2));
}

#[test]
fn flags_override_environment_which_overrides_file() {
    let d = setup();
    let global = GlobalArgs {
        config: Some(d.path().join("c.toml")),
        seed: Some(9),
        ..Default::default()
    };
    let env = [("CALIBFIELD_SEED", "5"), ("CALIBFIELD_TRAIN__MAX_EPOCHS", "4"), ("OTHER", "x")];
    let cfg = resolve_config(&global, &calibfield::cli::Command::Train, env).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.train.seed, 9);
    assert_eq!(cfg.train.max_epochs, 4);
    assert_eq!(cfg.train.batch_size, 128);
    let cfg = resolve_config(&GlobalArgs::default(), &calibfield::cli::Command::Train, [("CALIBFIELD_SEED", "5")]).unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.split.seed, 5);
}
