//! Residual regression, which fits y - f directly with an MLP, against
//! the kernel field on a sinusoidal benchmark.
//!
//! cargo run --release --example resreg_baseline -- [frequency] [max_epochs]

use calibfield::dataio::{split, SplitSpec};
use calibfield::field::{train, KernelConfig, LossConfig, TrainConfig};
use calibfield::geometry::NetArch;
use calibfield::metrics::pearson;
use calibfield::recal::{predict_resreg, train_resreg, Capacity};
use calibfield::synth::{gen_sinusoidal, SinusoidSpec};

fn main() -> calibfield::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let frequency = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let max_epochs = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(100);
    let ds = gen_sinusoidal(&SinusoidSpec {
        amplitude: 1.0,
        frequency,
        ..Default::default()
    })?;
    let s = split(&ds, &SplitSpec::default())?;
    let truth = s.test.true_field().unwrap();
    let tcfg = TrainConfig {
        max_epochs,
        ..Default::default()
    };

    let cap = Capacity {
        hidden_layers: 2,
        hidden_width: 256,
    };
    let rr = train_resreg(&s.train, &s.val, cap.arch(2, 0.1), &tcfg)?;
    let pred = predict_resreg(&rr.model, s.test.embeddings().view())?;
    println!(
        "resreg 2x256: best epoch {}, val MSE {:.4}, test corr {:.3}",
        rr.best_epoch,
        rr.best_val_mse(),
        pearson(pred.view(), truth.view()).unwrap_or(f64::NAN)
    );

    let k = train(&s.train, &s.val, NetArch::synthetic(2), KernelConfig { sigma: 0.05 }, LossConfig::default(), &tcfg)?;
    let est = k.model.estimate_dataset(&s.test)?;
    println!("kernel field sigma=0.05: test corr {:.3}", pearson(est.values.view(), truth.view()).unwrap_or(f64::NAN));
    Ok(())
}
