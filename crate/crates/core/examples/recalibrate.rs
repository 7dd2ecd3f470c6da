//! Correct confidences with a learned field and compare against isotonic
//! regression and temperature scaling, globally and per regime slice.
//!
//! cargo run --release --example recalibrate -- [max_epochs]

use calibfield::cli::evaluate_field;
use calibfield::config::RunConfig;
use calibfield::dataio::split;
use calibfield::field::train;
use calibfield::geometry::NetArch;

fn main() -> calibfield::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.train.max_epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let ds = cfg.data.load()?;
    let s = split(&ds, &cfg.split)?;
    let out = train(&s.train, &s.val, NetArch::synthetic(2), cfg.kernel, cfg.loss, &cfg.train)?;

    let dir = std::env::temp_dir().join("calibfield-recalibrate");
    std::fs::create_dir_all(&dir).expect("create output dir");
    let r = evaluate_field(&cfg, &out.model, &s, &dir)?;
    println!("alpha = {} (val smECE {:.4}), T = {:.3}", r.alpha.alpha, r.alpha.val_smece, r.temperature);
    println!("slice sizes {:?}", r.slice_sizes);
    println!("{:<12} {:>7} {:>7} {:>7} {:>7}", "condition", "global", "over", "under", "good");
    let fmt = |v: Option<f64>| v.map_or("   -   ".to_string(), |x| format!("{x:7.4}"));
    for c in &r.conditions {
        println!(
            "{:<12} {:7.4} {} {} {}",
            c.name,
            c.global_smece,
            fmt(c.slice_smece.over),
            fmt(c.slice_smece.under),
            fmt(c.slice_smece.good)
        );
    }
    println!("artifacts in {}", dir.display());
    Ok(())
}
