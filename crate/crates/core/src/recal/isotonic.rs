use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear nondecreasing map from confidence to probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl IsotonicMap {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::Data(format!(
                "isotonic map needs matching nonempty breakpoints/values, got {} and {}",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Data("isotonic breakpoints must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| !(w[0] <= w[1])) || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("isotonic values must be nondecreasing in [0,1]".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (bp, v) = (&self.breakpoints, &self.values);
        if x <= bp[0] {
            return v[0];
        }
        if x >= bp[bp.len() - 1] {
            return v[v.len() - 1];
        }
        let hi = bp.partition_point(|&b| b <= x);
        let lo = hi - 1;
        let t = (x - bp[lo]) / (bp[hi] - bp[lo]);
        v[lo] + t * (v[hi] - v[lo])
    }
}

/// Least-squares nondecreasing fit of `y` on `f` by pool-adjacent-violators.
/// Tied confidences share one fitted value.
pub fn fit_isotonic(f: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<IsotonicMap> {
    if f.len() != y.len() {
        return Err(Error::Shape(format!("{} confidences but {} outcomes", f.len(), y.len())));
    }
    if f.is_empty() {
        return Err(Error::Data("cannot fit isotonic regression on an empty split".into()));
    }
    if f.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in isotonic fit input".into()));
    }
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));

    // One entry per distinct confidence: (x, weight, mean y).
    let mut levels: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &order {
        match levels.last_mut() {
            Some((x, w, m)) if *x == f[i] => {
                *w += 1.0;
                *m += (y[i] - *m) / *w;
            }
            _ => levels.push((f[i], 1.0, y[i])),
        }
    }

    // Blocks of pooled levels: (weight, mean, number of levels).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(levels.len());
    for &(_, w, m) in &levels {
        blocks.push((w, m, 1));
        while blocks.len() > 1 {
            let (w2, m2, c2) = blocks[blocks.len() - 1];
            let (w1, m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = (w, (w1 * m1 + w2 * m2) / w, c1 + c2);
        }
    }
    let mut values = Vec::with_capacity(levels.len());
    for &(_, m, c) in &blocks {
        values.extend(std::iter::repeat_n(m.clamp(0.0, 1.0), c));
    }
    let breakpoints = levels.iter().map(|l| l.0).collect();
    IsotonicMap::new(breakpoints, values)
}

pub fn apply_isotonic(map: &IsotonicMap, f: ArrayView1<f64>) -> Array1<f64> {
    f.mapv(|x| map.eval(x))
}
