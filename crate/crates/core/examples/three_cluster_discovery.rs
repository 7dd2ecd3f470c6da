//! Learn the miscalibration field of the 3-cluster benchmark and compare it
//! with the planted one, cluster by cluster.
//!
//! cargo run --release --example three_cluster_discovery -- [max_epochs]

use calibfield::audit::{slice_regimes, worst_slice_gap, GapMetric};
use calibfield::dataio::{split, SplitSpec};
use calibfield::field::{train, KernelConfig, LossConfig, TrainConfig};
use calibfield::geometry::NetArch;
use calibfield::metrics::{pearson, smece_value};
use calibfield::synth::{gen_three_cluster, ThreeClusterSpec};
use ndarray::Axis;

fn main() -> calibfield::Result<()> {
    let max_epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let ds = gen_three_cluster(&ThreeClusterSpec::default())?;
    let s = split(&ds, &SplitSpec::default())?;
    let tcfg = TrainConfig {
        max_epochs,
        ..Default::default()
    };
    let out = train(&s.train, &s.val, NetArch::synthetic(2), KernelConfig::default(), LossConfig::default(), &tcfg)?;
    println!("best epoch {} of {}", out.history.best_epoch, out.history.last_epoch());

    let est = out.model.estimate_dataset(&s.test)?;
    let truth = s.test.true_field().unwrap();
    println!("test Corr(field, truth) = {:.3}", pearson(est.values.view(), truth.view()).unwrap_or(f64::NAN));

    let groups = s.test.group_labels().unwrap();
    for g in 0..3i64 {
        let idx: Vec<usize> = (0..s.test.len()).filter(|&i| groups[i] == g).collect();
        let f = s.test.confidences().select(Axis(0), &idx);
        let y = s.test.outcomes().select(Axis(0), &idx);
        let mean = |v: ndarray::Array1<f64>| v.mean().unwrap();
        println!(
            "  {:<10} n={:4} true {:+.3} estimated {:+.3} smECE {:.3}",
            s.test.group_names().get(&g).map_or("?", String::as_str),
            idx.len(),
            mean(truth.select(Axis(0), &idx)),
            mean(est.values.select(Axis(0), &idx)),
            smece_value(f.view(), y.view())?,
        );
    }
    let slices = slice_regimes(est.values.view(), 0.05);
    let gap = worst_slice_gap(s.test.observed(), &slices, GapMetric::Smece)?;
    println!("global smECE {:.3}, worst slice {:?} gap {:?}", gap.global, gap.worst, gap.gap);
    Ok(())
}
