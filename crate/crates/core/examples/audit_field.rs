//! Audit a learned field: regime slices, threshold sensitivity, bootstrap
//! intervals and a small permutation null.
//!
//! cargo run --release --example audit_field -- [max_epochs] [permutations]

use calibfield::audit::{audit_field, bootstrap_ci, permutation_null_audit, slice_regimes, GapMetric, PipelineConfig, RegimeConfig};
use calibfield::dataio::{split, SplitSpec};
use calibfield::field::{train, KernelConfig, LossConfig, TrainConfig};
use calibfield::geometry::NetArch;
use calibfield::selection::HyperGrid;
use calibfield::synth::{gen_three_cluster, ThreeClusterSpec};

fn main() -> calibfield::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let max_epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let perms = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);

    let ds = gen_three_cluster(&ThreeClusterSpec::default())?;
    let s = split(&ds, &SplitSpec::default())?;
    let tcfg = TrainConfig {
        max_epochs,
        ..Default::default()
    };
    let (kcfg, lcfg) = (KernelConfig::default(), LossConfig::default());
    let arch = NetArch::synthetic(2);
    let out = train(&s.train, &s.val, arch, kcfg, lcfg, &tcfg)?;
    let field = out.model.estimate_dataset(&s.test)?.values;

    let regime = RegimeConfig::default();
    let report = audit_field(s.test.observed(), field.view(), &regime)?;
    println!(
        "global smECE {:.3}; worst slice {:?}, gap {:?} (non-trivial: {})",
        report.global_smece, report.worst_slice, report.worst_slice_gap, report.nontrivial
    );
    println!("field mean {:+.3} std {:.3}", report.heterogeneity.mean, report.heterogeneity.std);
    for r in &report.threshold_sweep {
        println!("  eps {:.2}: over {} under {} good {} gap {:?}", r.epsilon, r.counts.over, r.counts.under, r.counts.good, r.smece_gap);
    }

    let slices = slice_regimes(field.view(), regime.epsilon);
    let b = bootstrap_ci(s.test.observed(), &slices, GapMetric::Smece, 200, 0)?;
    if let Some(g) = b.gap {
        println!("bootstrap gap {:.3} [{:.3}, {:.3}]", g.point, g.lo, g.hi);
    }

    let pipe = PipelineConfig {
        arch,
        grid: HyperGrid::single(kcfg, lcfg),
        train: tcfg,
        regime,
    };
    let null = permutation_null_audit(&s.train, &s.val, &s.test, &pipe, perms, 0, 1)?;
    println!(
        "field std {:.3} vs null {:.3} +- {:.3} ({:.1} sd); gap {:?} vs null p95 {:.3}",
        null.real.field_std, null.null_std_mean, null.null_std_sd, null.std_separation, null.real.gap, null.null_gap_p95
    );
    Ok(())
}
