//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use calibfield::dataio::Dataset;
use ndarray::{Array1, Array2};

/// Exact monotone least squares by enumerating every split of the sorted
/// distinct levels into contiguous blocks. Tied confidences are one level.
/// Returns the fitted value per distinct level, in increasing order.
pub fn monotone_ls_oracle(f: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = f.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut levels, mut w, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for (x, v) in pairs {
        if levels.last() == Some(&x) {
            *w.last_mut().unwrap() += 1.0;
            *s.last_mut().unwrap() += v;
        } else {
            levels.push(x);
            w.push(1.0);
            s.push(v);
        }
    }
    let m = levels.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (m - 1)) {
        // Bit k set: a block boundary between level k and k+1.
        let mut fit = vec![0.0; m];
        let mut means = Vec::new();
        let mut start = 0;
        for k in 0..m {
            if k == m - 1 || mask & (1 << k) != 0 {
                let ww: f64 = w[start..=k].iter().sum();
                let mean = s[start..=k].iter().sum::<f64>() / ww;
                fit[start..=k].iter_mut().for_each(|v| *v = mean);
                means.push(mean);
                start = k + 1;
            }
        }
        if means.windows(2).any(|p| p[0] > p[1] + 1e-15) {
            continue;
        }
        let sse: f64 = f
            .iter()
            .zip(y)
            .map(|(&x, &v)| {
                let i = levels.iter().position(|&l| l == x).unwrap();
                (v - fit[i]).powi(2)
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-15) {
            best = Some((sse, fit));
        }
    }
    (levels, best.unwrap().1)
}

/// Small labelled dataset with a given confidence/outcome pattern and
/// 2-d embeddings on a line.
pub fn tiny_dataset(f: Vec<f64>, y: Vec<f64>) -> Dataset {
    let n = f.len();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { i as f64 / n as f64 } else { 0.0 });
    Dataset::new(x, Array1::from(f), Array1::from(y), None, None).unwrap()
}
