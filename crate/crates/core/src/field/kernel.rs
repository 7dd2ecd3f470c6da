//! Gaussian kernel weights and the Nadaraya-Watson residual smoother.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{FieldEstimate, KernelConfig};
use crate::dataio::NeighbourBank;
use crate::error::{Error, Result};

/// Query rows processed per block when smoothing against a bank.
pub const DEFAULT_CHUNK_ROWS: usize = 1024;

/// Masses below this are treated as "no neighbours".
pub const STARVATION_MASS: f64 = 1e-300;

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    Ok(())
}

/// Squared distances between rows of `q` and rows of `b` via the Gram trick,
/// clamped at zero.
pub(crate) fn sq_distances(q: ArrayView2<f64>, b: ArrayView2<f64>, b_sq: ArrayView1<f64>) -> Array2<f64> {
    let mut d = q.dot(&b.t());
    for (mut row, qi) in d.rows_mut().into_iter().zip(q.rows()) {
        let q_sq = qi.dot(&qi);
        row.zip_mut_with(&b_sq, |g, &bj| *g = (q_sq + bj - 2.0 * *g).max(0.0));
    }
    d
}

fn row_sq_norms(x: ArrayView2<f64>) -> Array1<f64> {
    x.map_axis(Axis(1), |r| r.dot(&r))
}

/// Full `q x b` weight matrix `exp(-|q_i - b_j|^2 / sigma^2)`.
pub fn kernel_weights(q: ArrayView2<f64>, b: ArrayView2<f64>, kcfg: KernelConfig) -> Result<Array2<f64>> {
    check_sigma(kcfg.sigma)?;
    if q.ncols() != b.ncols() {
        return Err(Error::Shape(format!("query dim {} != bank dim {}", q.ncols(), b.ncols())));
    }
    let b_sq = row_sq_norms(b);
    let inv = 1.0 / (kcfg.sigma * kcfg.sigma);
    let mut out = Array2::zeros((q.nrows(), b.nrows()));
    for start in (0..q.nrows()).step_by(DEFAULT_CHUNK_ROWS) {
        let end = (start + DEFAULT_CHUNK_ROWS).min(q.nrows());
        let d = sq_distances(q.slice(s![start..end, ..]), b, b_sq.view());
        out.slice_mut(s![start..end, ..]).assign(&d.mapv(|v| (-v * inv).exp()));
    }
    Ok(out)
}

/// Smooth bank residuals at each query row. `bank.embeddings` must already
/// live in the same space as `queries`.
pub fn estimate_field(queries: ArrayView2<f64>, bank: &NeighbourBank, kcfg: KernelConfig) -> Result<FieldEstimate> {
    estimate_field_chunked(queries, bank, kcfg, DEFAULT_CHUNK_ROWS)
}

pub fn estimate_field_chunked(
    queries: ArrayView2<f64>,
    bank: &NeighbourBank,
    kcfg: KernelConfig,
    chunk_rows: usize,
) -> Result<FieldEstimate> {
    check_sigma(kcfg.sigma)?;
    if bank.is_empty() {
        return Err(Error::Data("neighbour bank is empty".into()));
    }
    if queries.ncols() != bank.embeddings.ncols() {
        return Err(Error::Shape(format!(
            "query dim {} != bank dim {}",
            queries.ncols(),
            bank.embeddings.ncols()
        )));
    }
    let chunk_rows = chunk_rows.max(1);
    let m = queries.nrows();
    let b_sq = row_sq_norms(bank.embeddings.view());
    let inv = 1.0 / (kcfg.sigma * kcfg.sigma);
    let mut values = Array1::zeros(m);
    let mut masses = Array1::zeros(m);
    let mut starved = vec![false; m];
    for start in (0..m).step_by(chunk_rows) {
        let end = (start + chunk_rows).min(m);
        let mut w = sq_distances(queries.slice(s![start..end, ..]), bank.embeddings.view(), b_sq.view());
        w.mapv_inplace(|v| (-v * inv).exp());
        for (k, row) in w.rows().into_iter().enumerate() {
            // Sequential sums keep results independent of the chunking.
            let (mut mass, mut num) = (0.0, 0.0);
            for (wj, rj) in row.iter().zip(bank.residuals.iter()) {
                mass += wj;
                num += wj * rj;
            }
            let i = start + k;
            masses[i] = mass;
            if mass < STARVATION_MASS {
                starved[i] = true;
            } else {
                values[i] = num / mass;
            }
        }
    }
    Ok(FieldEstimate {
        values,
        masses,
        starved,
        sigma: kcfg.sigma,
        bank_size: bank.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};

    fn bank(emb: Array2<f64>, r: Array1<f64>) -> NeighbourBank {
        let n = emb.nrows();
        NeighbourBank {
            embeddings: emb,
            residuals: r,
            source_indices: (0..n).collect(),
            cap: n,
        }
    }

    fn naive(q: &Array2<f64>, b: &Array2<f64>, sigma: f64) -> Array2<f64> {
        let mut w = Array2::zeros((q.nrows(), b.nrows()));
        for i in 0..q.nrows() {
            for j in 0..b.nrows() {
                let mut d = 0.0;
                for k in 0..q.ncols() {
                    d += (q[[i, k]] - b[[j, k]]).powi(2);
                }
                w[[i, j]] = (-d / (sigma * sigma)).exp();
            }
        }
        w
    }

    #[test]
    fn coincident_and_antipodal_points() {
        let q = array![[0.6, 0.8]];
        let b = array![[0.6, 0.8], [-0.6, -0.8]];
        let w = kernel_weights(q.view(), b.view(), KernelConfig { sigma: 1.0 }).unwrap();
        assert_eq!(w[[0, 0]], 1.0);
        assert!((w[[0, 1]] - 0.018_315_638_888_734_18).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_double_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = Array2::from_shape_simple_fn((5, 4), || rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_simple_fn((7, 4), || rng.gen_range(-1.0..1.0));
        for sigma in [0.3, 1.0, 2.5] {
            let w = kernel_weights(q.view(), b.view(), KernelConfig { sigma }).unwrap();
            let o = naive(&q, &b, sigma);
            for (a, e) in w.iter().zip(o.iter()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_sigma_is_rejected() {
        let q = array![[0.0]];
        assert!(kernel_weights(q.view(), q.view(), KernelConfig { sigma: 0.0 }).is_err());
        assert!(kernel_weights(q.view(), q.view(), KernelConfig { sigma: -1.0 }).is_err());
    }

    #[test]
    fn constant_residuals_give_constant_field() {
        let b = bank(array![[0.0, 1.0], [1.0, 0.0], [0.3, 0.3]], array![0.25, 0.25, 0.25]);
        let q = array![[0.0, 0.0], [5.0, 5.0], [0.3, 0.3]];
        let est = estimate_field(q.view(), &b, KernelConfig { sigma: 1.0 }).unwrap();
        for &v in est.values.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn two_point_closed_form() {
        let b = bank(array![[0.0], [1.0]], array![0.5, -0.3]);
        let q = array![[0.25]];
        let est = estimate_field(q.view(), &b, KernelConfig { sigma: 0.7 }).unwrap();
        let w1 = (-0.0625f64 / 0.49).exp();
        let w2 = (-0.5625f64 / 0.49).exp();
        let expect = (w1 * 0.5 + w2 * -0.3) / (w1 + w2);
        assert!((est.values[0] - expect).abs() < 1e-15);
        assert!((est.masses[0] - (w1 + w2)).abs() < 1e-15);
    }

    #[test]
    fn narrow_kernel_concentrates_on_coincident_point() {
        let b = bank(array![[0.0], [0.1], [0.2]], array![0.7, -0.4, 0.1]);
        let q = array![[0.1]];
        let est = estimate_field(q.view(), &b, KernelConfig { sigma: 0.005 }).unwrap();
        assert!((est.values[0] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn starvation_sets_flag_and_zero() {
        let b = bank(array![[0.0]], array![0.9]);
        let q = array![[100.0], [0.0]];
        let est = estimate_field(q.view(), &b, KernelConfig { sigma: 0.01 }).unwrap();
        assert_eq!(est.values[0], 0.0);
        assert!(est.starved[0]);
        assert!(!est.starved[1]);
        assert_eq!(est.values[1], 0.9);
    }

    #[test]
    fn empty_bank_is_an_error() {
        let b = bank(Array2::zeros((0, 2)), Array1::zeros(0));
        assert!(estimate_field(array![[0.0, 0.0]].view(), &b, KernelConfig { sigma: 1.0 }).is_err());
    }

    #[test]
    fn chunking_does_not_change_bits() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let q = Array2::from_shape_simple_fn((37, 6), || rng.gen_range(-1.0..1.0));
        let be = Array2::from_shape_simple_fn((53, 6), || rng.gen_range(-1.0..1.0));
        let r = Array1::from_shape_simple_fn(53, || rng.gen_range(-1.0..1.0));
        let b = bank(be, r);
        let k = KernelConfig { sigma: 0.8 };
        let full = estimate_field_chunked(q.view(), &b, k, 1000).unwrap();
        for chunk in [1, 4, 16, 36] {
            let c = estimate_field_chunked(q.view(), &b, k, chunk).unwrap();
            assert_eq!(c.values, full.values, "chunk {chunk}");
            assert_eq!(c.masses, full.masses, "chunk {chunk}");
        }
    }
}
