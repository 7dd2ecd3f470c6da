//! Minibatch discovery loss: negative mean squared smoothed residual plus a
//! hinge-squared penalty on small neighbourhood mass.
//!
//! Kernel sums run over the whole batch including `j = i`, so every mass is
//! at least 1.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::kernel::sq_distances;
use super::{KernelConfig, LossConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// `dLoss / d embeddings`, same shape as the batch.
    pub grad: Array2<f64>,
    pub masses: Array1<f64>,
    pub field: Array1<f64>,
}

pub fn discovery_loss(
    emb: ArrayView2<f64>,
    residuals: ArrayView1<f64>,
    kcfg: KernelConfig,
    lcfg: LossConfig,
) -> Result<LossOutput> {
    let n = emb.nrows();
    if n < 2 {
        return Err(Error::Data(format!("discovery loss needs a batch of at least 2, got {n}")));
    }
    if residuals.len() != n {
        return Err(Error::Shape(format!("{n} embeddings but {} residuals", residuals.len())));
    }
    if !(kcfg.sigma > 0.0) {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {}", kcfg.sigma)));
    }
    let nf = n as f64;
    let inv_s2 = 1.0 / (kcfg.sigma * kcfg.sigma);
    let r = residuals.to_vec();
    let sq = emb.map_axis(Axis(1), |row| row.dot(&row));
    let mut k = sq_distances(emb, emb, sq.view());
    k.diag_mut().fill(0.0);

    let mut masses = Array1::zeros(n);
    let mut num = Array1::zeros(n);
    for (i, row) in k.outer_iter_mut().enumerate() {
        let row = row.into_slice().expect("fresh matrix is contiguous");
        let (mut m, mut s) = (0.0, 0.0);
        for (w, &rj) in row.iter_mut().zip(&r) {
            *w = (-*w * inv_s2).exp();
            m += *w;
            s += *w * rj;
        }
        masses[i] = m;
        num[i] = s;
    }
    let field = &num / &masses;
    let hinge = masses.mapv(|m| (lcfg.m_min - m).max(0.0));
    let loss = -field.dot(&field) / nf + lcfg.lambda * hinge.dot(&hinge) / nf;

    // dL/dK_ij = a_i r_j + c_i with
    //   a_i = -2 delta_i / (n m_i),  c_i = -a_i delta_i - 2 lambda h_i / n.
    let a: Vec<f64> = field.iter().zip(&masses).map(|(&d, &m)| -2.0 * d / (nf * m)).collect();
    let c: Vec<f64> = (0..n)
        .map(|i| -a[i] * field[i] - 2.0 * lcfg.lambda * hinge[i] / nf)
        .collect();
    // Symmetrised coefficient per pair, A = K o (G + G^T), written over K.
    let mut row_sums = Array1::zeros(n);
    for (i, row) in k.outer_iter_mut().enumerate() {
        let row = row.into_slice().expect("fresh matrix is contiguous");
        let (ai, ri, ci) = (a[i], r[i], c[i]);
        let mut total = 0.0;
        for ((w, &rj), (&aj, &cj)) in row.iter_mut().zip(&r).zip(a.iter().zip(&c)) {
            *w *= ai * rj + ci + aj * ri + cj;
            total += *w;
        }
        row_sums[i] = total;
    }
    let az = k.dot(&emb);
    let scale = -2.0 * inv_s2;
    let mut grad = emb.to_owned();
    Zip::from(grad.rows_mut())
        .and(&row_sums)
        .and(az.rows())
        .for_each(|mut g, &rs, azr| {
            g.zip_mut_with(&azr, |gi, &v| *gi = scale * (rs * *gi - v));
        });
    Ok(LossOutput {
        loss,
        grad,
        masses,
        field,
    })
}
