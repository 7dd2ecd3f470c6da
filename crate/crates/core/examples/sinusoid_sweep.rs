//! Select (sigma, lambda) by the validation proxy on a sinusoidal field and
//! report how the choice compares with the oracle optimum.
//!
//! cargo run --release --example sinusoid_sweep -- [amplitude] [frequency] [max_epochs]

use calibfield::dataio::{split, SplitSpec};
use calibfield::field::TrainConfig;
use calibfield::geometry::NetArch;
use calibfield::selection::{grid_search, HyperGrid};
use calibfield::synth::{gen_sinusoidal, SinusoidSpec};

fn main() -> calibfield::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let amplitude = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let frequency = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let max_epochs = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);

    let ds = gen_sinusoidal(&SinusoidSpec {
        amplitude,
        frequency,
        ..Default::default()
    })?;
    let s = split(&ds, &SplitSpec::default())?;
    let tcfg = TrainConfig {
        max_epochs,
        ..Default::default()
    };
    let out = grid_search(&s.train, &s.val, NetArch::synthetic(2), &HyperGrid::default(), &tcfg, Some(&s.test), 1)?;

    println!("{:>6} {:>7} {:>10} {:>8} {:>5}", "sigma", "lambda", "proxy", "oracle", "best");
    for (i, c) in out.result.cells.iter().enumerate() {
        let mark = if i == out.result.chosen { " <" } else { "" };
        println!(
            "{:>6} {:>7} {:>10.6} {:>8.3} {:>5}{mark}",
            c.sigma,
            c.lambda,
            c.proxy,
            c.oracle_corr.unwrap_or(f64::NAN),
            c.best_epoch
        );
    }
    if let Some(d) = out.result.diagnostics {
        println!("spearman {:?}  spread {:.3}  regret {:.3}", d.spearman, d.spread, d.regret);
    }
    Ok(())
}
