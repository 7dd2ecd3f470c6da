use ndarray::Axis;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{worst_slice_gap, GapMetric, Regime, RegimeSlices};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::selection::Observed;

/// Bootstrap mean with a 95% percentile interval, next to the estimate on
/// the original sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub point: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    fn from_samples(point: f64, samples: &mut [f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        samples.sort_by(f64::total_cmp);
        Some(Self {
            point,
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            lo: percentile(samples, 2.5),
            hi: percentile(samples, 97.5),
        })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 100]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub seed: u64,
    pub metric: GapMetric,
    /// Slice fixed from the original sample.
    pub worst: Option<Regime>,
    pub global: Interval,
    pub worst_slice: Option<Interval>,
    pub gap: Option<Interval>,
    pub slice_fraction: Option<Interval>,
    /// Replicates in which the fixed slice was too small to evaluate.
    pub absent_replicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateStats {
    pub global: f64,
    pub slice: Option<f64>,
    pub gap: Option<f64>,
    pub fraction: f64,
}

/// Metrics on one resample. Slice membership follows the original labels.
pub fn replicate_stats(
    test: Observed<'_>,
    slices: &RegimeSlices,
    worst: Option<Regime>,
    metric: GapMetric,
    indices: &[usize],
) -> Result<ReplicateStats> {
    let f = test.confidences.select(Axis(0), indices);
    let y = test.outcomes.select(Axis(0), indices);
    let sample = Observed {
        confidences: f.view(),
        outcomes: y.view(),
    };
    let global = metric.eval(f.view(), y.view())?;
    let (slice, fraction) = match worst {
        Some(w) => {
            let members: Vec<usize> = (0..indices.len()).filter(|&k| slices.labels[indices[k]] == w).collect();
            let frac = members.len() as f64 / indices.len() as f64;
            (metric.eval_on(sample, &members)?, frac)
        }
        None => (None, 0.0),
    };
    Ok(ReplicateStats {
        global,
        slice,
        gap: slice.map(|s| s - global),
        fraction,
    })
}

/// Percentile bootstrap over held-out rows with the field and slice
/// assignments held fixed.
pub fn bootstrap_ci(
    test: Observed<'_>,
    slices: &RegimeSlices,
    metric: GapMetric,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if replicates < 100 {
        return Err(Error::Config(format!("bootstrap needs at least 100 replicates, got {replicates}")));
    }
    let n = test.confidences.len();
    if n == 0 || slices.labels.len() != n {
        return Err(Error::Shape(format!("{n} test rows but {} slice labels", slices.labels.len())));
    }
    let original = worst_slice_gap(test, slices, metric)?;
    let worst = original.worst;
    let identity: Vec<usize> = (0..n).collect();
    let point = replicate_stats(test, slices, worst, metric, &identity)?;

    let mut rng = rng::stream(seed, Purpose::Bootstrap);
    let (mut globals, mut slice_vals, mut gaps, mut fracs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut absent = 0;
    let mut idx = vec![0usize; n];
    for _ in 0..replicates {
        for v in idx.iter_mut() {
            *v = rng.gen_range(0..n);
        }
        let r = replicate_stats(test, slices, worst, metric, &idx)?;
        globals.push(r.global);
        fracs.push(r.fraction);
        match (r.slice, r.gap) {
            (Some(s), Some(g)) => {
                slice_vals.push(s);
                gaps.push(g);
            }
            _ if worst.is_some() => absent += 1,
            _ => {}
        }
    }
    let global = Interval::from_samples(point.global, &mut globals).expect("replicates >= 100");
    let (worst_slice, gap, slice_fraction) = match (point.slice, point.gap) {
        (Some(s), Some(g)) => (
            Interval::from_samples(s, &mut slice_vals),
            Interval::from_samples(g, &mut gaps),
            Interval::from_samples(point.fraction, &mut fracs),
        ),
        _ => (None, None, None),
    };
    Ok(BootstrapReport {
        replicates,
        seed,
        metric,
        worst,
        global,
        worst_slice,
        gap,
        slice_fraction,
        absent_replicates: absent,
    })
}
