//! Command-line front end. Each subcommand is also a plain function so it
//! can be driven from code and tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{
    audit_field, bootstrap_ci, permutation_null_audit, raw_vs_learned, run_pipeline, seed_stability_audit,
    slice_regimes, sweep_to_csv, AuditReport, GapMetric, Regime, SliceCounts, SliceMetrics,
};
use crate::config::RunConfig;
use crate::dataio::{sample_bank, save_triples, split, Dataset, Format, Splits};
use crate::error::{Error, Result};
use crate::field::{train, FieldModel, KernelConfig, LossConfig, Representation, TrainHistory};
use crate::geometry::{NetArch, NetParams};
use crate::metrics::{binned_reliability, brier, smece_value};
use crate::recal::{
    apply_isotonic, apply_temperature, fit_isotonic, fit_temperature, range_aware_correct, select_alpha, AlphaChoice,
    Recalibrator,
};
use crate::selection::{grid_search, HyperGrid, SelectionResult};

pub const DEFAULT_OUT_DIR: &str = "calibfield_out";
pub const NETWORK_FILE: &str = "phi.cfnet";
pub const MODEL_FILE: &str = "model.json";
pub const RELIABILITY_BINS: usize = 15;

#[derive(Debug, Parser)]
#[command(name = "calibfield", version, about = "Discover and correct input-dependent miscalibration")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for data, split and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on parallel jobs.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Dataset format written by `generate`.
    #[arg(long, global = true)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write a dataset and its manifest.
    Generate,
    /// Train one field with the configured kernel and loss.
    Train,
    /// Train over the (sigma, lambda) grid and select by the validation proxy.
    Sweep,
    /// Compare raw, corrected, isotonic and temperature-scaled confidences on test.
    Evaluate {
        /// Directory written by `train` or `sweep`; a sweep is run when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Regime slices, gaps and the optional resampling audits.
    Audit {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Bootstrap replicates over test rows.
        #[arg(long)]
        bootstrap: Option<usize>,
        /// Label-permuted reruns of the pipeline.
        #[arg(long = "permutation-null")]
        permutation_null: Option<usize>,
        /// Comma-separated training seeds for the stability audit.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Regime threshold.
        #[arg(long)]
        epsilon: Option<f64>,
    },
}

/// Defaults, then the config file, then `CALIBFIELD_*` variables, then flags.
pub fn resolve_config<I, K, V>(global: &GlobalArgs, command: &Command, env: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let base = match &global.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let env: Vec<(String, String)> = env
        .into_iter()
        .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
        .collect();
    let env_seed = env.iter().any(|(k, _)| k == "CALIBFIELD_SEED");
    let mut cfg = base.with_env_overrides(env)?;
    // The top-level seed fans out to every stream, from either source.
    if let Some(s) = global.seed.or(env_seed.then_some(cfg.seed)) {
        cfg.apply_seed(s);
    }
    if let Some(j) = global.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &global.out {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(f) = global.format {
        cfg.format = f;
    }
    if let Command::Audit {
        bootstrap,
        permutation_null,
        seeds,
        epsilon,
        ..
    } = command
    {
        if let Some(b) = bootstrap {
            cfg.audit.bootstrap = *b;
        }
        if let Some(p) = permutation_null {
            cfg.audit.permutation_null = *p;
        }
        if let Some(s) = seeds {
            cfg.audit.seeds = s.clone();
        }
        if let Some(e) = epsilon {
            cfg.regime.epsilon = *e;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.global, &cli.command, std::env::vars())?;
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    match &cli.command {
        Command::Generate => {
            let m = cmd_generate(&cfg, &out)?;
            eprintln!("wrote {} rows to {}", m.n, out.join(&m.files[0].name).display());
        }
        Command::Train => {
            let t = cmd_train(&mut cfg, &out)?;
            eprintln!("best epoch {} (proxy {:.6})", t.history.best_epoch, best_proxy(&t.history));
        }
        Command::Sweep => {
            let s = cmd_sweep(&mut cfg, &out)?;
            let c = s.chosen_cell();
            eprintln!("chosen sigma={} lambda={} (proxy {:.6})", c.sigma, c.lambda, c.proxy);
        }
        Command::Evaluate { checkpoint } => {
            let r = cmd_evaluate(&mut cfg, checkpoint.as_deref(), &out)?;
            for c in &r.conditions {
                eprintln!("{:<10} smECE {:.4}", c.name, c.global_smece);
            }
        }
        Command::Audit { checkpoint, .. } => {
            let r = cmd_audit(&mut cfg, checkpoint.as_deref(), &out)?;
            eprintln!("global smECE {:.4}, worst-slice gap {:?}", r.global_smece, r.worst_slice_gap);
        }
    }
    Ok(())
}

fn best_proxy(h: &TrainHistory) -> f64 {
    h.best().map_or(f64::NAN, |b| b.val_proxy)
}

fn prepare_out(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.write_resolved(out)?;
    Ok(())
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(v).expect("value serializes"))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

// ---------------------------------------------------------------------------
// generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: crate::config::DataSource,
    pub seed: u64,
    pub n: usize,
    pub dim: usize,
    pub format: Format,
    pub files: Vec<FileChecksum>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Materialise the configured dataset as `data.<ext>` plus a manifest.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let ds = cfg.data.load()?;
    prepare_out(cfg, out)?;
    let name = format!("data.{}", cfg.format.extension());
    let path = out.join(&name);
    save_triples(&ds, &path, cfg.format)?;
    let mut files = vec![FileChecksum {
        sha256: sha256_file(&path)?,
        name: name.clone(),
    }];
    let sidecar = format!("{name}.groups.json");
    if out.join(&sidecar).exists() {
        files.push(FileChecksum {
            sha256: sha256_file(&out.join(&sidecar))?,
            name: sidecar,
        });
    }
    let m = Manifest {
        source: cfg.data.clone(),
        seed: cfg.seed,
        n: ds.len(),
        dim: ds.dim(),
        format: cfg.format,
        files,
    };
    write_json(&out.join(MANIFEST_FILE), &m)?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// checkpoints

/// Everything besides the network weights needed to rebuild a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCheckpoint {
    pub arch: NetArch,
    pub sigma: f64,
    pub lambda: f64,
    pub m_min: f64,
    pub bank_cap: usize,
    pub bank_seed: u64,
    pub network: String,
}

pub fn save_field(dir: &Path, params: &NetParams, kcfg: KernelConfig, lcfg: LossConfig, cfg: &RunConfig) -> Result<()> {
    params.save(&dir.join(NETWORK_FILE))?;
    let ck = FieldCheckpoint {
        arch: params.arch,
        sigma: kcfg.sigma,
        lambda: lcfg.lambda,
        m_min: lcfg.m_min,
        bank_cap: cfg.train.bank_cap,
        bank_seed: cfg.train.seed,
        network: NETWORK_FILE.into(),
    };
    write_json(&dir.join(MODEL_FILE), &ck)
}

pub fn read_checkpoint(dir: &Path) -> Result<FieldCheckpoint> {
    let path = dir.join(MODEL_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Rebuild a trained field; the bank is re-drawn from `train` exactly as
/// during training.
pub fn load_field(dir: &Path, train_ds: &Dataset) -> Result<(FieldModel, FieldCheckpoint)> {
    let ck = read_checkpoint(dir)?;
    let params = NetParams::load(&dir.join(&ck.network))?;
    if params.arch != ck.arch || ck.arch.input_dim != train_ds.dim() {
        return Err(Error::Shape(format!(
            "checkpoint expects input dimension {} but the data has {}",
            ck.arch.input_dim,
            train_ds.dim()
        )));
    }
    let bank = sample_bank(train_ds, ck.bank_cap, ck.bank_seed)?;
    let model = FieldModel::new(Representation::Learned(params), KernelConfig { sigma: ck.sigma }, bank)?;
    Ok((model, ck))
}

fn load_splits(cfg: &mut RunConfig) -> Result<(Splits, NetArch)> {
    let ds = cfg.data.load()?;
    let arch = cfg.resolve(ds.dim())?;
    Ok((split(&ds, &cfg.split)?, arch))
}

// ---------------------------------------------------------------------------
// train / sweep

pub fn cmd_train(cfg: &mut RunConfig, out: &Path) -> Result<crate::field::TrainOutcome> {
    let (s, arch) = load_splits(cfg)?;
    prepare_out(cfg, out)?;
    let t = train(&s.train, &s.val, arch, cfg.kernel, cfg.loss, &cfg.train)?;
    save_field(out, &t.params, cfg.kernel, cfg.loss, cfg)?;
    t.history.write_csv(&out.join("history.csv"))?;
    Ok(t)
}

pub fn cmd_sweep(cfg: &mut RunConfig, out: &Path) -> Result<SelectionResult> {
    let (s, arch) = load_splits(cfg)?;
    prepare_out(cfg, out)?;
    let oracle = s.test.true_field().is_some().then_some(&s.test);
    let g = grid_search(&s.train, &s.val, arch, &cfg.grid, &cfg.train, oracle, cfg.jobs)?;
    let c = g.result.chosen_cell();
    let (kcfg, lcfg) = (
        KernelConfig { sigma: c.sigma },
        LossConfig {
            lambda: c.lambda,
            m_min: cfg.grid.m_min,
        },
    );
    write(&out.join("grid.csv"), g.result.to_csv())?;
    write_json(&out.join("selection.json"), &g.result)?;
    save_field(out, &g.chosen.params, kcfg, lcfg, cfg)?;
    g.chosen.history.write_csv(&out.join("history.csv"))?;
    Ok(g.result)
}

/// The field to evaluate: from a checkpoint, or from a fresh sweep.
fn obtain_field(cfg: &RunConfig, checkpoint: Option<&Path>, s: &Splits, arch: NetArch) -> Result<(FieldModel, HyperGrid)> {
    match checkpoint {
        Some(dir) => {
            let (m, ck) = load_field(dir, &s.train)?;
            let grid = HyperGrid {
                sigmas: vec![ck.sigma],
                lambdas: vec![ck.lambda],
                m_min: ck.m_min,
            };
            Ok((m, grid))
        }
        None => {
            let run = run_pipeline(&s.train, &s.val, s.test.embeddings().view(), &cfg.pipeline(arch), cfg.jobs)?;
            let c = run.selection.chosen_cell();
            let grid = HyperGrid {
                sigmas: vec![c.sigma],
                lambdas: vec![c.lambda],
                m_min: cfg.grid.m_min,
            };
            Ok((run.model, grid))
        }
    }
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMetrics {
    pub name: String,
    pub global_smece: f64,
    pub global_brier: f64,
    /// smECE within each regime slice of the learned field.
    pub slice_smece: SliceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub alpha: AlphaChoice,
    pub temperature: f64,
    pub temperature_fallback: Option<String>,
    pub slice_sizes: SliceCounts,
    /// Signed slice with the largest raw smECE gap.
    pub worst_slice: Option<Regime>,
    pub starved_test_rows: usize,
    pub conditions: Vec<ConditionMetrics>,
}

impl EvalReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionMetrics> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn condition<'a>(name: &str, p: ArrayView1<'a, f64>, test: &'a Dataset, slices: &crate::audit::RegimeSlices) -> Result<ConditionMetrics> {
    let y = test.outcomes().view();
    let obs = crate::selection::Observed {
        confidences: p,
        outcomes: y,
    };
    Ok(ConditionMetrics {
        name: name.into(),
        global_smece: smece_value(p, y)?,
        global_brier: brier(p, y)?,
        slice_smece: SliceMetrics::compute(obs, slices, GapMetric::Smece)?,
    })
}

/// Test-split comparison of the four conditions: raw `f`, range-aware
/// correction (alpha picked on validation), isotonic and temperature
/// scaling (both fitted on train). The field uses the train bank only.
pub fn cmd_evaluate(cfg: &mut RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<EvalReport> {
    let (s, arch) = load_splits(cfg)?;
    prepare_out(cfg, out)?;
    let (model, _) = obtain_field(cfg, checkpoint, &s, arch)?;
    evaluate_field(cfg, &model, &s, out)
}

pub fn evaluate_field(cfg: &RunConfig, model: &FieldModel, s: &Splits, out: &Path) -> Result<EvalReport> {
    let val_field = model.estimate_dataset(&s.val)?;
    let test_field = model.estimate_dataset(&s.test)?;
    let alpha = select_alpha(s.val.observed(), val_field.values.view(), &cfg.correction.alpha_grid)?;

    let f = s.test.confidences().view();
    let corrected = range_aware_correct(f, test_field.values.view(), alpha.alpha)?;
    let ts = fit_temperature(s.train.confidences().view(), s.train.outcomes().view())?;
    let iso = fit_isotonic(s.train.confidences().view(), s.train.outcomes().view())?;
    let p_ts = apply_temperature(f, ts.scaler.temperature());
    let p_iso = apply_isotonic(&iso, f);

    let slices = slice_regimes(test_field.values.view(), cfg.regime.epsilon);
    let worst = crate::audit::worst_slice_gap(s.test.observed(), &slices, GapMetric::Smece)?.worst;
    let preds: [(&str, ArrayView1<f64>); 4] = [
        ("raw", f),
        ("corrected", corrected.view()),
        ("isotonic", p_iso.view()),
        ("temperature", p_ts.view()),
    ];
    let mut conditions = Vec::new();
    for (name, p) in preds {
        conditions.push(condition(name, p, &s.test, &slices)?);
        let rel = binned_reliability(p, s.test.outcomes().view(), RELIABILITY_BINS)?;
        write(&out.join(format!("reliability_{name}.csv")), rel.to_csv())?;
    }

    let mut rows = String::from("index,confidence,outcome,delta_hat,mass,starved,regime,corrected,isotonic,temperature\n");
    for i in 0..s.test.len() {
        rows.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{}\n",
            f[i],
            s.test.outcomes()[i],
            test_field.values[i],
            test_field.masses[i],
            test_field.starved[i],
            slices.labels[i].as_str(),
            corrected[i],
            p_iso[i],
            p_ts[i]
        ));
    }
    write(&out.join("field.csv"), rows)?;
    Recalibrator::RangeAware { alpha: alpha.alpha }.save(&out.join("recal_range_aware.json"))?;
    Recalibrator::from(&ts.scaler).save(&out.join("recal_temperature.json"))?;
    Recalibrator::from(&iso).save(&out.join("recal_isotonic.json"))?;

    let report = EvalReport {
        n_test: s.test.len(),
        epsilon: cfg.regime.epsilon,
        sigma: model.kernel.sigma,
        alpha,
        temperature: ts.scaler.temperature(),
        temperature_fallback: ts.fallback,
        slice_sizes: slices.counts,
        worst_slice: worst,
        starved_test_rows: test_field.starved_count(),
        conditions,
    };
    write_json(&out.join("evaluation.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// audit

/// Regime audit of the field on the test split, plus whichever resampling
/// suites the configuration enables.
pub fn cmd_audit(cfg: &mut RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<AuditReport> {
    let (s, arch) = load_splits(cfg)?;
    prepare_out(cfg, out)?;
    let (model, grid) = obtain_field(cfg, checkpoint, &s, arch)?;
    let test_field = model.estimate_dataset(&s.test)?;
    let mut report = audit_field(s.test.observed(), test_field.values.view(), &cfg.regime)?;
    report.config = serde_json::to_value(&*cfg).expect("config serializes");
    report.seeds = vec![cfg.seed];

    if cfg.audit.bootstrap > 0 {
        let slices = slice_regimes(test_field.values.view(), cfg.regime.epsilon);
        report.bootstrap = Some(bootstrap_ci(
            s.test.observed(),
            &slices,
            GapMetric::Smece,
            cfg.audit.bootstrap,
            cfg.seed,
        )?);
    }
    // Resampling suites rerun training at the selected cell only.
    let mut pipe = cfg.pipeline(arch);
    pipe.grid = grid;
    if cfg.audit.permutation_null > 0 {
        report.permutation_null = Some(permutation_null_audit(
            &s.train,
            &s.val,
            &s.test,
            &pipe,
            cfg.audit.permutation_null,
            cfg.seed,
            cfg.jobs,
        )?);
    }
    if !cfg.audit.seeds.is_empty() {
        report.seeds.extend(cfg.audit.seeds.iter().copied());
        report.seed_stability = Some(seed_stability_audit(&s.train, &s.val, &s.test, &pipe, &cfg.audit.seeds, cfg.jobs)?);
    }
    report.raw_vs_learned = Some(raw_vs_learned(
        &s.train,
        &s.val,
        &s.test,
        &cfg.audit.raw_sigmas,
        &model,
        &cfg.regime,
        cfg.train.bank_cap,
        cfg.train.seed,
    )?);

    write(&out.join("audit.json"), report.to_json())?;
    write(&out.join("threshold_sweep.csv"), sweep_to_csv(&report.threshold_sweep))?;
    write_field_summary(out, test_field.values.view())?;
    Ok(report)
}

fn write_field_summary(out: &Path, field: ArrayView1<f64>) -> Result<()> {
    // 0.05-wide bins keyed by their lower edge.
    let mut hist: BTreeMap<i64, usize> = BTreeMap::new();
    for &d in field {
        *hist.entry((d * 20.0).floor() as i64).or_default() += 1;
    }
    let mut s = String::from("bin_lo,count\n");
    for (k, v) in hist {
        s.push_str(&format!("{:.2},{v}\n", k as f64 / 20.0));
    }
    write(&out.join("field_histogram.csv"), s)
}
