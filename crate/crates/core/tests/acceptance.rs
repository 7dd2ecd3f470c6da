//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs everything by default. `ACCEPTANCE_ONLY=1,4` restricts the run to
//! the listed criteria (for local iteration only).

mod common;

use std::collections::HashMap;
use std::time::Instant;

use calibfield::audit::{permutation_null_audit, seed_stability_audit, PipelineConfig, RegimeConfig};
use calibfield::cli::{cmd_evaluate, cmd_train};
use calibfield::config::{default_arch, DataSource, RunConfig};
use calibfield::dataio::{save_triples, split, Format, Splits};
use calibfield::field::{discovery_loss, kernel_weights, train, KernelConfig, LossConfig, TrainConfig, TrainOutcome};
use calibfield::geometry::{Head, Mode, NetArch, NetParams};
use calibfield::metrics::{pearson, smece, smece_value};
use calibfield::recal::{correct_one, fit_isotonic, fit_temperature, predict_resreg, train_resreg_ladder, Capacity};
use calibfield::selection::{grid_search, HyperGrid, SelectionResult};
use calibfield::synth::{gen_sinusoidal, gen_three_cluster, logit, sigmoid, PseudoLlmSpec, SinusoidSpec, ThreeClusterSpec};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn corr(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    pearson(a.view(), b.view()).unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------------------
// shared runs

struct ClusterRun {
    seed: u64,
    splits: Splits,
    outcome: TrainOutcome,
    test_corr: f64,
}

fn cluster_run(seed: u64) -> ClusterRun {
    let mut cfg = RunConfig::default();
    cfg.apply_seed(seed);
    let ds = cfg.data.load().unwrap();
    let splits = split(&ds, &cfg.split).unwrap();
    let outcome = train(&splits.train, &splits.val, default_arch(2), cfg.kernel, cfg.loss, &cfg.train).unwrap();
    let est = outcome.model.estimate_dataset(&splits.test).unwrap();
    let test_corr = corr(&est.values, splits.test.true_field().unwrap());
    ClusterRun {
        seed,
        splits,
        outcome,
        test_corr,
    }
}

struct PanelCell {
    selection: SelectionResult,
}

impl PanelCell {
    fn chosen_corr(&self) -> f64 {
        self.selection.chosen_cell().oracle_corr.unwrap_or(f64::NAN)
    }
    fn regret(&self) -> f64 {
        self.selection.diagnostics.as_ref().map_or(f64::NAN, |d| d.regret)
    }
}

fn sinusoid_splits(amplitude: f64, frequency: u32) -> Splits {
    let ds = gen_sinusoidal(&SinusoidSpec {
        amplitude,
        frequency,
        ..Default::default()
    })
    .unwrap();
    split(&ds, &RunConfig::default().split).unwrap()
}

fn panel_cell(amplitude: f64, frequency: u32) -> PanelCell {
    let t = Instant::now();
    let s = sinusoid_splits(amplitude, frequency);
    let g = grid_search(
        &s.train,
        &s.val,
        NetArch::synthetic(2),
        &HyperGrid::default(),
        &TrainConfig::default(),
        Some(&s.test),
        1,
    )
    .unwrap();
    let cell = PanelCell {
        selection: g.result,
    };
    let c = cell.selection.chosen_cell();
    eprintln!(
        "  panel A={amplitude} k={frequency}: chosen sigma={} lambda={} corr {:.3}, regret {:.3} ({:.0}s)",
        c.sigma,
        c.lambda,
        cell.chosen_corr(),
        cell.regret(),
        t.elapsed().as_secs_f64()
    );
    cell
}

#[derive(Default)]
struct Shared {
    cluster: Vec<ClusterRun>,
    panel: HashMap<(u64, u32), PanelCell>,
}

fn amp_key(a: f64) -> u64 {
    (a * 10.0).round() as u64
}

impl Shared {
    fn cluster_runs(&mut self) -> &[ClusterRun] {
        if self.cluster.is_empty() {
            for seed in 0..5 {
                let t = Instant::now();
                let r = cluster_run(seed);
                eprintln!(
                    "  3-cluster seed {seed}: corr {:.3}, best epoch {} of {} ({:.0}s)",
                    r.test_corr,
                    r.outcome.history.best_epoch,
                    r.outcome.history.last_epoch(),
                    t.elapsed().as_secs_f64()
                );
                self.cluster.push(r);
            }
        }
        &self.cluster
    }

    fn panel(&mut self, amplitude: f64, frequency: u32) -> &PanelCell {
        self.panel
            .entry((amp_key(amplitude), frequency))
            .or_insert_with(|| panel_cell(amplitude, frequency))
    }
}

// ---------------------------------------------------------------------------
// criteria

fn c1(sh: &mut Shared) -> Verdict {
    let runs = sh.cluster_runs();
    let corrs: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.test_corr)).collect();
    let hits = runs.iter().filter(|r| r.test_corr >= 0.90).count();
    verdict(hits >= 4, format!("test corr per seed [{}]; {hits}/5 >= 0.90", corrs.join(", ")))
}

fn c2(sh: &mut Shared) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in sh.cluster_runs() {
        let t = &r.splits.test;
        let groups = t.group_labels().unwrap();
        let spec = ThreeClusterSpec::default();
        let of_shift = |shift: f64| {
            let g = spec.shifts.iter().position(|&s| s == shift).unwrap() as i64;
            let idx: Vec<usize> = (0..t.len()).filter(|&i| groups[i] == g).collect();
            let f = t.confidences().select(Axis(0), &idx);
            let y = t.outcomes().select(Axis(0), &idx);
            smece_value(f.view(), y.view()).unwrap()
        };
        let global = smece_value(t.confidences().view(), t.outcomes().view()).unwrap();
        let (plus, minus) = (of_shift(1.0), of_shift(-1.0));
        ok &= global < plus && global < minus;
        parts.push(format!("seed {}: {global:.3} vs +1 {plus:.3}, -1 {minus:.3}", r.seed));
    }
    verdict(ok, format!("global smECE vs shifted clusters; {}", parts.join("; ")))
}

fn c3(sh: &mut Shared) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (a, k, need) in [(1.0, 1, 0.8), (1.0, 2, 0.8), (1.0, 3, 0.8), (0.6, 3, 0.5)] {
        let c = sh.panel(a, k).chosen_corr();
        ok &= c >= need;
        parts.push(format!("A={a} k={k}: {c:.3} (>= {need})"));
    }
    verdict(ok, parts.join("; "))
}

fn c4(sh: &mut Shared) -> Verdict {
    let mut regrets = Vec::new();
    for a in [0.4, 0.6, 0.8, 1.0] {
        for k in 1..=3 {
            regrets.push(sh.panel(a, k).regret());
        }
    }
    let mut sorted = regrets.clone();
    sorted.sort_by(f64::total_cmp);
    let median = 0.5 * (sorted[5] + sorted[6]);
    let list: Vec<String> = regrets.iter().map(|r| format!("{r:.3}")).collect();
    verdict(median <= 0.05, format!("median regret {median:.4} over 12 settings [{}]", list.join(", ")))
}

fn c5(sh: &mut Shared) -> Verdict {
    let kernel = sh.panel(1.0, 5).chosen_corr();
    let s = sinusoid_splits(1.0, 5);
    let tcfg = TrainConfig {
        max_epochs: 300,
        ..Default::default()
    };
    let t = Instant::now();
    let ladder = Capacity::default_ladder();
    let fits = train_resreg_ladder(&s.train, &s.val, &ladder, 0.1, &tcfg, 1).unwrap();
    let truth = s.test.true_field().unwrap();
    let rr: Vec<f64> = fits
        .iter()
        .map(|f| corr(&predict_resreg(&f.model, s.test.embeddings().view()).unwrap(), truth))
        .collect();
    let best = rr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    eprintln!("  resreg ladder corr {rr:?} ({:.0}s)", t.elapsed().as_secs_f64());
    verdict(
        kernel - best >= 0.3,
        format!("kernel {kernel:.3} vs best ResReg {best:.3} over {} capacities; margin {:.3}", ladder.len(), kernel - best),
    )
}

fn c6(sh: &mut Shared) -> Verdict {
    let run = &sh.cluster_runs()[0];
    let model = &run.outcome.model;
    let bank = model.mapped_bank();
    let train_ds = &run.splits.train;
    let f: Array1<f64> = bank.source_indices.iter().map(|&i| train_ds.confidences()[i]).collect();
    let eta: Array1<f64> = bank
        .source_indices
        .iter()
        .map(|&i| (train_ds.confidences()[i] + train_ds.true_field().unwrap()[i]).clamp(0.0, 1.0))
        .collect();
    let probes = run.splits.test.embeddings().slice(ndarray::s![..50, ..]).to_owned();
    let q = model.representation.embed(probes.view()).unwrap();
    let w = kernel_weights(q.view(), bank.embeddings.view(), model.kernel).unwrap();
    let m = w.sum_axis(Axis(1));

    let draws = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut sum, mut sumsq) = (Array1::<f64>::zeros(50), Array1::<f64>::zeros(50));
    let mut r = Array1::<f64>::zeros(f.len());
    for _ in 0..draws {
        for j in 0..f.len() {
            let y = if rng.gen::<f64>() < eta[j] { 1.0 } else { 0.0 };
            r[j] = y - f[j];
        }
        let d = w.dot(&r) / &m;
        sum += &d;
        sumsq += &d.mapv(|v| v * v);
    }
    let nd = draws as f64;
    let var = (&sumsq - &(&sum * &sum) / nd) / (nd - 1.0);
    let bound = m.mapv(|mm| 0.25 / mm);
    let violations = var.iter().zip(bound.iter()).filter(|(v, b)| v > b).count();
    let worst = var.iter().zip(bound.iter()).map(|(v, b)| v / b).fold(0.0, f64::max);
    verdict(
        violations == 0,
        format!("{violations} violations at 50 probes over {draws} draws; max Var/bound {worst:.3}; mass range [{:.1}, {:.1}]",
            m.fold(f64::INFINITY, |a, &b| a.min(b)), m.fold(0.0, |a: f64, &b| a.max(b))),
    )
}

fn full_loss(p: &NetParams, x: &Array2<f64>, r: &Array1<f64>, k: KernelConfig, l: LossConfig) -> f64 {
    let z = p.forward(x.view(), Mode::Eval, 0).unwrap();
    discovery_loss(z.view(), r.view(), k, l).unwrap().loss
}

fn c7(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let arch = NetArch {
            input_dim: rng.gen_range(2..5),
            hidden_width: rng.gen_range(3..7),
            hidden_layers: rng.gen_range(1..3),
            output_dim: rng.gen_range(2..5),
            dropout: 0.1,
            head: Head::Normalized,
        };
        let mut p = NetParams::init(arch, inst).unwrap();
        for s in p.slices_mut() {
            for v in s.iter_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
        let n = rng.gen_range(4..9);
        let x = Array2::from_shape_fn((n, arch.input_dim), |_| rng.gen_range(-1.5..1.5));
        let r = Array1::from_shape_fn(n, |_| rng.gen_range(-0.8..0.8));
        let k = KernelConfig {
            sigma: rng.gen_range(0.5..1.5),
        };
        // m_min above the batch size keeps the mass hinge active.
        let l = LossConfig {
            lambda: rng.gen_range(0.001..0.1),
            m_min: n as f64 + 1.0,
        };
        let cache = p.forward_cached(x.view(), Mode::Eval, 0).unwrap();
        let out = discovery_loss(cache.output().view(), r.view(), k, l).unwrap();
        let g = p.backward(&cache, out.grad.view()).unwrap();
        let analytic: Vec<f64> = g.slices().flat_map(|s| s.iter().copied()).collect();

        let h = 1e-6;
        let mut numeric = Vec::with_capacity(analytic.len());
        let total = p.num_params();
        for idx in 0..total {
            let mut q = p.clone();
            let bump = |q: &mut NetParams, d: f64| {
                let mut seen = 0;
                for s in q.slices_mut() {
                    if idx < seen + s.len() {
                        s[idx - seen] += d;
                        return;
                    }
                    seen += s.len();
                }
            };
            bump(&mut q, h);
            let up = full_loss(&q, &x, &r, k, l);
            bump(&mut q, -2.0 * h);
            let down = full_loss(&q, &x, &r, k, l);
            numeric.push((up - down) / (2.0 * h));
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(diff / scale.max(1e-300));
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} over 20 instances"))
}

fn c8(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut pava_bad = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 5.0).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let map = fit_isotonic(Array1::from(f.clone()).view(), Array1::from(y.clone()).view()).unwrap();
        let (levels, fit) = common::monotone_ls_oracle(&f, &y);
        if levels.iter().zip(&fit).any(|(l, v)| (map.eval(*l) - v).abs() > 1e-12) {
            pava_bad += 1;
        }
    }

    let n = 10_000;
    let f: Array1<f64> = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
    let y = f.mapv(|p| if rng.gen::<f64>() < sigmoid(2.0 * logit(p)) { 1.0 } else { 0.0 });
    let t = fit_temperature(f.view(), y.view()).unwrap().scaler.temperature();

    let mut range_bad = 0;
    for _ in 0..100_000 {
        let f = rng.gen_range(0.0..=1.0);
        let d = rng.gen_range(-1.0..=1.0);
        let a = rng.gen_range(0.05..10.0);
        let out = correct_one(f, d, a);
        let bigger = correct_one(f, d * 1.1 + d.signum() * 1e-3, a);
        let in_range = (0.0..=1.0).contains(&out);
        let sign = (d >= 0.0 && out >= f) || (d < 0.0 && out <= f);
        let mono = f <= 0.0 || f >= 1.0 || (bigger - f).abs() > (out - f).abs();
        let identity = correct_one(f, 0.0, a) == f;
        if !(in_range && sign && mono && identity) {
            range_bad += 1;
        }
    }
    verdict(
        pava_bad == 0 && (t - 0.5).abs() <= 0.05 && range_bad == 0,
        format!("PAVA mismatches {pava_bad}/1000; fitted T {t:.4} (target 0.5); correction violations {range_bad}/100000"),
    )
}

fn c9(_: &mut Shared) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let f: Array1<f64> = (0..n).map(|_| rng.gen_range(0.25..0.75)).collect();
    let calibrated = f.mapv(|p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
    let shifted = f.mapv(|p| if rng.gen::<f64>() < p - 0.2 { 1.0 } else { 0.0 });
    let a = smece(f.view(), calibrated.view()).unwrap();
    let b = smece(f.view(), shifted.view()).unwrap();
    let mut worst_residual = a.fixed_point_residual().max(b.fixed_point_residual());
    for _ in 0..50 {
        let m = rng.gen_range(2..400);
        let ff: Array1<f64> = (0..m).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let yy = ff.mapv(|p| if rng.gen::<f64>() < (p + rng.gen_range(-0.3..0.3)) { 1.0 } else { 0.0 });
        let s = smece(ff.view(), yy.view()).unwrap();
        if s.fixed_point_bandwidth < 1.0 {
            worst_residual = worst_residual.max(s.fixed_point_residual());
        }
    }
    verdict(
        a.value <= 0.02 && (b.value - 0.2).abs() <= 0.02 && worst_residual <= 1e-6,
        format!("calibrated {:.4}; shift 0.2 -> {:.4}; max fixed-point residual {worst_residual:.1e}", a.value, b.value),
    )
}

fn cluster_pipeline() -> (RunConfig, Splits, PipelineConfig) {
    let cfg = RunConfig::default();
    let ds = gen_three_cluster(&ThreeClusterSpec::default()).unwrap();
    let s = split(&ds, &cfg.split).unwrap();
    let pipe = PipelineConfig {
        arch: default_arch(2),
        grid: HyperGrid::single(cfg.kernel, cfg.loss),
        train: cfg.train,
        regime: RegimeConfig::default(),
    };
    (cfg, s, pipe)
}

fn c10(_: &mut Shared) -> Verdict {
    let (_, s, pipe) = cluster_pipeline();
    let t = Instant::now();
    let null = permutation_null_audit(&s.train, &s.val, &s.test, &pipe, 20, 0, 1).unwrap();
    eprintln!("  permutation null ({:.0}s)", t.elapsed().as_secs_f64());
    let gap = null.real.gap.unwrap_or(f64::NEG_INFINITY);
    let std_ok = null.real.field_std - null.null_std_mean >= 2.0 * null.null_std_sd;
    verdict(
        std_ok && gap > null.null_gap_p95,
        format!(
            "field std {:.4} vs null {:.4} +- {:.4} ({:.1} sd); gap {gap:.4} vs null p95 {:.4}",
            null.real.field_std, null.null_std_mean, null.null_std_sd, null.std_separation, null.null_gap_p95
        ),
    )
}

fn c11(_: &mut Shared) -> Verdict {
    let (_, s, pipe) = cluster_pipeline();
    let rep = seed_stability_audit(&s.train, &s.val, &s.test, &pipe, &[0, 1, 2], 1).unwrap();
    verdict(
        rep.correlation_mean >= 0.8 && rep.sign_agreement_mean >= 0.8,
        format!(
            "mean pairwise corr {:.3}, sign agreement {:.3}",
            rep.correlation_mean, rep.sign_agreement_mean
        ),
    )
}

fn c12(_: &mut Shared) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pseudo_llm.bin");
    let ds = calibfield::synth::gen_pseudo_llm(&PseudoLlmSpec::default()).unwrap();
    save_triples(&ds, &path, Format::Bin).unwrap();
    let mut cfg = RunConfig {
        data: DataSource::File { path, format: None },
        ..Default::default()
    };
    let t = Instant::now();
    cmd_train(&mut cfg, &dir.path().join("train")).unwrap();
    let r = cmd_evaluate(&mut cfg, Some(&dir.path().join("train")), &dir.path().join("eval")).unwrap();
    eprintln!("  pseudo-LLM train + evaluate ({:.0}s)", t.elapsed().as_secs_f64());
    let raw = r.condition("raw").unwrap();
    let cor = r.condition("corrected").unwrap();
    let Some(worst) = r.worst_slice else {
        return verdict(false, "no signed slice found on test");
    };
    let pick = |c: &calibfield::cli::ConditionMetrics| match worst {
        calibfield::audit::Regime::Over => c.slice_smece.over,
        calibfield::audit::Regime::Under => c.slice_smece.under,
        calibfield::audit::Regime::Good => c.slice_smece.good,
    };
    let (w_raw, w_cor) = (pick(raw).unwrap_or(f64::NAN), pick(cor).unwrap_or(f64::NAN));
    let (g_raw, g_cor) = (raw.slice_smece.good, cor.slice_smece.good);
    let good_ok = match (g_raw, g_cor) {
        (Some(a), Some(b)) => (a - b).abs() <= 0.01,
        _ => false,
    };
    verdict(
        w_cor < w_raw && good_ok,
        format!(
            "worst slice {} smECE {w_raw:.4} -> {w_cor:.4}; good slice {:.4} -> {:.4}; slices over/under/good {}/{}/{}",
            worst.as_str(),
            g_raw.unwrap_or(f64::NAN),
            g_cor.unwrap_or(f64::NAN),
            r.slice_sizes.over,
            r.slice_sizes.under,
            r.slice_sizes.good
        ),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, fn(&mut Shared) -> Verdict); 12] = [
        (1, c1),
        (2, c2),
        (3, c3),
        (4, c4),
        (5, c5),
        (6, c6),
        (7, c7),
        (8, c8),
        (9, c9),
        (10, c10),
        (11, c11),
        (12, c12),
    ];
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    let mut lines = Vec::new();
    for (id, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let v = run(&mut shared);
        let line = format!(
            "criterion {id:>2}: {} ({:.0}s) {}",
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
        println!("{line}");
        lines.push(line);
        if !v.pass {
            failed.push(id);
        }
    }
    println!("\nsummary:");
    for l in &lines {
        println!("{l}");
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
