//! File ingestion end to end: write 128-d embeddings with planted topic
//! regimes to disk, then train and evaluate from the file alone.
//!
//! cargo run --release --example pseudo_llm_ingest -- [max_epochs]

use calibfield::cli::{cmd_evaluate, cmd_train};
use calibfield::config::{DataSource, RunConfig};
use calibfield::dataio::{save_triples, Format};
use calibfield::synth::{gen_pseudo_llm, PseudoLlmSpec};

fn main() -> calibfield::Result<()> {
    let max_epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let dir = std::env::temp_dir().join("calibfield-pseudo-llm");
    std::fs::create_dir_all(&dir).expect("create output dir");
    let path = dir.join("embeddings.bin");
    save_triples(&gen_pseudo_llm(&PseudoLlmSpec::default())?, &path, Format::Bin)?;

    let mut cfg = RunConfig {
        data: DataSource::File { path, format: None },
        ..Default::default()
    };
    cfg.train.max_epochs = max_epochs;
    let t = cmd_train(&mut cfg, &dir.join("train"))?;
    println!("trained: best epoch {}", t.history.best_epoch);
    let r = cmd_evaluate(&mut cfg, Some(&dir.join("train")), &dir.join("eval"))?;
    println!("worst slice {:?}, sizes {:?}", r.worst_slice, r.slice_sizes);
    for c in &r.conditions {
        println!("{:<12} global {:.4}  slices {:?}", c.name, c.global_smece, c.slice_smece);
    }
    Ok(())
}
