//! smECE and binned reliability on calibrated, shifted and
//! temperature-distorted predictions.

use calibfield::metrics::{binned_reliability, smece};
use calibfield::synth::{logit, sigmoid};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> calibfield::Result<()> {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f: Array1<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
    let draw = |p: &Array1<f64>, rng: &mut ChaCha8Rng| -> Array1<f64> {
        p.mapv(|q| if rng.gen::<f64>() < q { 1.0 } else { 0.0 })
    };

    let calibrated = draw(&f, &mut rng);
    let shifted = draw(&f.mapv(|q| (q - 0.2).max(0.0)), &mut rng);
    let sharp = draw(&f.mapv(|q| sigmoid(2.0 * logit(q))), &mut rng);

    for (name, y) in [("calibrated", &calibrated), ("overconfident by 0.2", &shifted), ("too soft (T=0.5)", &sharp)] {
        let s = smece(f.view(), y.view())?;
        let rel = binned_reliability(f.view(), y.view(), 10)?;
        println!(
            "{name:<22} smECE {:.4} (fixed-point residual {:.1e}), binned ECE {:.4}",
            s.value,
            s.fixed_point_residual(),
            rel.ece()
        );
    }
    println!("\nreliability, overconfident case:\n{}", binned_reliability(f.view(), shifted.view(), 10)?.to_csv());
    Ok(())
}
