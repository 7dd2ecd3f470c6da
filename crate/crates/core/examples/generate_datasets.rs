//! Generate the synthetic benchmarks and round-trip them through every
//! on-disk format.
//!
//! cargo run --example generate_datasets -- /tmp/calibfield-data

use calibfield::dataio::{load_triples, save_triples, Format};
use calibfield::synth::{gen_pseudo_llm, gen_sinusoidal, gen_three_cluster, PseudoLlmSpec, SinusoidSpec, ThreeClusterSpec};
use std::path::PathBuf;

fn main() -> calibfield::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "calibfield-data".into()));
    std::fs::create_dir_all(&dir).expect("create output dir");

    let sets = [
        ("three_cluster", gen_three_cluster(&ThreeClusterSpec::default())?),
        (
            "sinusoid_A1_k3",
            gen_sinusoidal(&SinusoidSpec {
                amplitude: 1.0,
                frequency: 3,
                ..Default::default()
            })?,
        ),
        ("pseudo_llm", gen_pseudo_llm(&PseudoLlmSpec { n: 2000, ..Default::default() })?),
    ];
    for (name, ds) in &sets {
        let field = ds.true_field().expect("synthetic data carries its field");
        println!(
            "{name}: n={} d={} mean f={:.3} mean y={:.3} field range [{:+.3}, {:+.3}]",
            ds.len(),
            ds.dim(),
            ds.confidences().mean().unwrap(),
            ds.outcomes().mean().unwrap(),
            field.fold(f64::INFINITY, |a, &b| a.min(b)),
            field.fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
        );
        for fmt in [Format::Csv, Format::Jsonl, Format::Bin] {
            let path = dir.join(format!("{name}.{}", fmt.extension()));
            save_triples(ds, &path, fmt)?;
            let back = load_triples(&path, fmt)?;
            assert_eq!(back.len(), ds.len());
            let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
            println!("  {:<5} {:>10} bytes  {}", fmt.extension(), size, path.display());
        }
    }
    Ok(())
}
