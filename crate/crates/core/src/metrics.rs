//! Calibration and recovery metrics.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Mean squared difference between forecasts and outcomes.
pub fn brier(f: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    same_len(f.len(), y.len())?;
    if f.is_empty() {
        return Err(Error::Data("brier score of an empty sample".into()));
    }
    Ok(f.iter().zip(y).map(|(p, o)| (o - p) * (o - p)).sum::<f64>() / f.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    /// `None` for an empty bin.
    pub mean_conf: Option<f64>,
    pub accuracy: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDiagram {
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityDiagram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Count-weighted mean |accuracy - confidence| (binned ECE).
    pub fn ece(&self) -> f64 {
        let n = self.total() as f64;
        self.bins
            .iter()
            .filter_map(|b| Some(b.count as f64 * (b.accuracy? - b.mean_conf?).abs()))
            .sum::<f64>()
            / n
    }

    /// Largest |accuracy - confidence| over nonempty bins.
    pub fn max_deviation(&self) -> f64 {
        self.bins
            .iter()
            .filter_map(|b| Some((b.accuracy? - b.mean_conf?).abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut s = String::from("bin_lo,bin_hi,mean_conf,accuracy,count\n");
        for b in &self.bins {
            s.push_str(&format!("{},{},{},{},{}\n", b.lo, b.hi, opt(b.mean_conf), opt(b.accuracy), b.count));
        }
        s
    }
}

/// Equal-width bins on [0,1]; the last bin is closed on the right.
pub fn binned_reliability(f: ArrayView1<f64>, y: ArrayView1<f64>, n_bins: usize) -> Result<ReliabilityDiagram> {
    same_len(f.len(), y.len())?;
    if n_bins == 0 {
        return Err(Error::Config("n_bins must be at least 1".into()));
    }
    let mut conf = vec![0.0; n_bins];
    let mut acc = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &o) in f.iter().zip(y) {
        let b = ((p * n_bins as f64).floor() as usize).min(n_bins - 1);
        conf[b] += p;
        acc[b] += o;
        count[b] += 1;
    }
    let bins = (0..n_bins)
        .map(|b| {
            let c = count[b];
            let mean = |s: f64| (c > 0).then(|| s / c as f64);
            ReliabilityBin {
                lo: b as f64 / n_bins as f64,
                hi: (b + 1) as f64 / n_bins as f64,
                mean_conf: mean(conf[b]),
                accuracy: mean(acc[b]),
                count: c,
            }
        })
        .collect();
    Ok(ReliabilityDiagram { bins })
}

// ---------------------------------------------------------------------------
// smooth ECE

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmeceResult {
    pub value: f64,
    pub fixed_point_bandwidth: f64,
    pub iterations: usize,
}

impl SmeceResult {
    pub fn fixed_point_residual(&self) -> f64 {
        (self.fixed_point_bandwidth - self.value).abs()
    }
}

const SMECE_LO: f64 = 1e-4;
const SMECE_HI: f64 = 1.0;
const SMECE_MAX_ITER: usize = 100;
const SMECE_TOL: f64 = 1e-9;
/// Kernel support is truncated at this many bandwidths (weight < 1e-13).
const WINDOW_SIGMAS: f64 = 8.0;

/// Residuals aggregated over distinct confidence values, plus their
/// reflections about 0 and 1.
struct SmoothingSupport {
    points: Vec<f64>,
    counts: Vec<f64>,
    sums: Vec<f64>,
    n: f64,
}

impl SmoothingSupport {
    fn new(f: ArrayView1<f64>, y: ArrayView1<f64>) -> Self {
        let mut pairs: Vec<(f64, f64)> = f.iter().zip(y).map(|(&p, &o)| (p, o - p)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut points, mut counts, mut sums) = (Vec::new(), Vec::new(), Vec::new());
        for (p, r) in pairs {
            if points.last() == Some(&p) {
                *counts.last_mut().unwrap() += 1.0;
                *sums.last_mut().unwrap() += r;
            } else {
                points.push(p);
                counts.push(1.0);
                sums.push(r);
            }
        }
        Self {
            n: f.len() as f64,
            points,
            counts,
            sums,
        }
    }

    /// Mean of |smoothed residual| over the sample at bandwidth `sigma`.
    fn smece_at(&self, sigma: f64) -> f64 {
        let reach = WINDOW_SIGMAS * sigma;
        // Mirror images near either boundary, merged and sorted.
        let mut aug: Vec<(f64, f64, f64)> = Vec::with_capacity(self.points.len() + 16);
        for k in 0..self.points.len() {
            let (p, c, s) = (self.points[k], self.counts[k], self.sums[k]);
            aug.push((p, c, s));
            if p < reach {
                aug.push((-p, c, s));
            }
            if p > 1.0 - reach {
                aug.push((2.0 - p, c, s));
            }
        }
        aug.sort_by(|a, b| a.0.total_cmp(&b.0));
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut lo = 0;
        let mut total = 0.0;
        for k in 0..self.points.len() {
            let t = self.points[k];
            while aug[lo].0 < t - reach {
                lo += 1;
            }
            let (mut wc, mut ws) = (0.0, 0.0);
            for &(a, c, s) in aug[lo..].iter().take_while(|e| e.0 <= t + reach) {
                let w = (-(t - a) * (t - a) * inv).exp();
                wc += w * c;
                ws += w * s;
            }
            total += self.counts[k] * (ws / wc).abs();
        }
        total / self.n
    }
}

/// Smooth ECE at its fixed-point bandwidth `sigma* = smECE_{sigma*}`.
pub fn smece(f: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<SmeceResult> {
    same_len(f.len(), y.len())?;
    if f.len() < 2 {
        return Err(Error::Data("smECE needs at least 2 points".into()));
    }
    let support = SmoothingSupport::new(f, y);
    let g = |s: f64| support.smece_at(s) - s;
    let done = |bw: f64, gv: f64, iterations| {
        Ok(SmeceResult {
            value: gv + bw,
            fixed_point_bandwidth: bw,
            iterations,
        })
    };

    // Bracket from the small end: wide bandwidths cost O(n^2) per
    // evaluation, narrow ones only O(n * window).
    let mut iterations = 1;
    let (mut lo, mut g_lo) = (SMECE_LO, g(SMECE_LO));
    if g_lo <= 0.0 {
        // A fixed point below the default bracket only happens for
        // near-zero signal; walk down until the sign changes.
        let (mut hi, mut g_hi) = (lo, g_lo);
        loop {
            if g_hi.abs() <= SMECE_TOL {
                return done(hi, g_hi, iterations);
            }
            lo = hi * 0.5;
            g_lo = g(lo);
            iterations += 1;
            if g_lo > 0.0 {
                return refine(&g, (lo, g_lo), (hi, g_hi), iterations);
            }
            if lo < 1e-12 {
                return done(lo, g_lo, iterations);
            }
            hi = lo;
            g_hi = g_lo;
        }
    }
    loop {
        let hi = (lo * 2.0).min(SMECE_HI);
        let g_hi = g(hi);
        iterations += 1;
        if g_hi <= 0.0 {
            return refine(&g, (lo, g_lo), (hi, g_hi), iterations);
        }
        if hi >= SMECE_HI {
            return done(hi, g_hi, iterations);
        }
        lo = hi;
        g_lo = g_hi;
    }
}

/// Illinois-modified regula falsi on a sign-changing bracket
/// `g(lo) > 0 >= g(hi)`; falls back to bisection if the secant point
/// leaves the bracket.
fn refine(g: &impl Fn(f64) -> f64, lo: (f64, f64), hi: (f64, f64), mut iterations: usize) -> Result<SmeceResult> {
    let ((mut a, mut fa), (mut b, mut fb)) = (lo, hi);
    if fb.abs() <= SMECE_TOL {
        return Ok(SmeceResult {
            value: fb + b,
            fixed_point_bandwidth: b,
            iterations,
        });
    }
    let mut side = 0i8;
    for _ in 0..SMECE_MAX_ITER {
        iterations += 1;
        let mut c = b - fb * (b - a) / (fb - fa);
        let w = b - a;
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = g(c);
        if fc.abs() <= SMECE_TOL || w < 1e-15 {
            return Ok(SmeceResult {
                value: fc + c,
                fixed_point_bandwidth: c,
                iterations,
            });
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::Numerical(format!(
        "smECE fixed point did not converge; bracket [{a:e}, {b:e}]"
    )))
}

/// Fixed-point smECE value only.
pub fn smece_value(f: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    smece(f, y).map(|r| r.value)
}

// ---------------------------------------------------------------------------
// correlation

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks(v: ArrayView1<f64>) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

pub fn spearman(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let ra = ndarray::Array1::from(average_ranks(a));
    let rb = ndarray::Array1::from(average_ranks(b));
    pearson(ra.view(), rb.view())
}
