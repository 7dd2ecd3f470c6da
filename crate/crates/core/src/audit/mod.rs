//! Regime slicing and the audits built on it: worst-slice gaps,
//! heterogeneity, bootstrap intervals, permutation nulls, seed stability,
//! threshold sensitivity and raw-versus-learned geometry.

mod bootstrap;
mod pipeline;

pub use bootstrap::{bootstrap_ci, percentile, replicate_stats, BootstrapReport, Interval, ReplicateStats};
pub use pipeline::{
    permutation_null_audit, raw_vs_learned, run_pipeline, seed_stability_audit, GeometryStats, NullSummary,
    PipelineConfig, PipelineRun, RawVsLearned, RunSummary, StabilityReport,
};

use ndarray::{Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{brier, smece_value};
use crate::selection::Observed;

/// Worst-slice gap at or above this marks "non-trivial hidden structure".
pub const NONTRIVIAL_GAP: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeConfig {
    pub epsilon: f64,
    pub sweep: Vec<f64>,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            sweep: vec![0.01, 0.05, 0.10, 0.15],
        }
    }
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |e: f64| e >= 0.0 && e.is_finite();
        if !ok(self.epsilon) || self.sweep.is_empty() || !self.sweep.iter().all(|&e| ok(e)) {
            return Err(Error::Config(format!("epsilon values must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `delta_hat < -epsilon`: confidence too high.
    Over,
    /// `delta_hat > epsilon`: confidence too low.
    Under,
    Good,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Over => "over",
            Regime::Under => "under",
            Regime::Good => "good",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceCounts {
    pub over: usize,
    pub under: usize,
    pub good: usize,
}

impl SliceCounts {
    pub fn get(&self, r: Regime) -> usize {
        match r {
            Regime::Over => self.over,
            Regime::Under => self.under,
            Regime::Good => self.good,
        }
    }

    pub fn total(&self) -> usize {
        self.over + self.under + self.good
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSlices {
    pub epsilon: f64,
    pub labels: Vec<Regime>,
    pub counts: SliceCounts,
}

impl RegimeSlices {
    pub fn indices(&self, r: Regime) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == r).collect()
    }

    pub fn fraction(&self, r: Regime) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.counts.get(r) as f64 / self.labels.len() as f64
    }

    /// `true` when the slice is nonempty.
    pub fn present(&self, r: Regime) -> bool {
        self.counts.get(r) > 0
    }
}

pub fn label(delta: f64, epsilon: f64) -> Regime {
    if delta < -epsilon {
        Regime::Over
    } else if delta > epsilon {
        Regime::Under
    } else {
        Regime::Good
    }
}

pub fn slice_regimes(field: ArrayView1<f64>, epsilon: f64) -> RegimeSlices {
    let labels: Vec<Regime> = field.iter().map(|&d| label(d, epsilon)).collect();
    let mut counts = SliceCounts::default();
    for l in &labels {
        match l {
            Regime::Over => counts.over += 1,
            Regime::Under => counts.under += 1,
            Regime::Good => counts.good += 1,
        }
    }
    RegimeSlices {
        epsilon,
        labels,
        counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMetric {
    #[default]
    Smece,
    Brier,
}

impl GapMetric {
    /// Metric on the rows `idx`; `None` when the slice is too small to
    /// evaluate (smECE needs two points).
    pub fn eval_on(self, test: Observed<'_>, idx: &[usize]) -> Result<Option<f64>> {
        let min = match self {
            GapMetric::Smece => 2,
            GapMetric::Brier => 1,
        };
        if idx.len() < min {
            return Ok(None);
        }
        let f = test.confidences.select(Axis(0), idx);
        let y = test.outcomes.select(Axis(0), idx);
        self.eval(f.view(), y.view()).map(Some)
    }

    pub fn eval(self, f: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        match self {
            GapMetric::Smece => smece_value(f, y),
            GapMetric::Brier => brier(f, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGap {
    pub metric: GapMetric,
    pub global: f64,
    pub over: Option<f64>,
    pub under: Option<f64>,
    pub worst: Option<Regime>,
    /// Worst signed slice minus global; absent when no signed slice exists.
    pub gap: Option<f64>,
}

/// Larger of two optional slice values; ties go to the overconfident slice.
fn worst_of(over: Option<f64>, under: Option<f64>) -> Option<(Regime, f64)> {
    match (over, under) {
        (Some(o), Some(u)) if u > o => Some((Regime::Under, u)),
        (Some(o), _) => Some((Regime::Over, o)),
        (None, Some(u)) => Some((Regime::Under, u)),
        (None, None) => None,
    }
}

pub fn worst_slice_gap(test: Observed<'_>, slices: &RegimeSlices, metric: GapMetric) -> Result<SliceGap> {
    let n = test.confidences.len();
    if slices.labels.len() != n {
        return Err(Error::Shape(format!("{n} test rows but {} slice labels", slices.labels.len())));
    }
    let global = metric.eval(test.confidences, test.outcomes)?;
    let over = metric.eval_on(test, &slices.indices(Regime::Over))?;
    let under = metric.eval_on(test, &slices.indices(Regime::Under))?;
    let worst = worst_of(over, under);
    Ok(SliceGap {
        metric,
        global,
        over,
        under,
        worst: worst.map(|w| w.0),
        gap: worst.map(|w| w.1 - global),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heterogeneity {
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

pub fn heterogeneity_stats(field: ArrayView1<f64>) -> Result<Heterogeneity> {
    if field.is_empty() {
        return Err(Error::Data("heterogeneity of an empty field".into()));
    }
    let mean = field.mean().unwrap();
    let var = field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / field.len() as f64;
    Ok(Heterogeneity { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub counts: SliceCounts,
    /// Signed slice with the larger smECE at this threshold.
    pub worst: Option<Regime>,
    pub smece_gap: Option<f64>,
    /// Brier gap on the smECE-selected slice.
    pub brier_gap: Option<f64>,
    pub slice_fraction: Option<f64>,
}

pub fn threshold_sweep(test: Observed<'_>, field: ArrayView1<f64>, sweep: &[f64]) -> Result<Vec<SweepRow>> {
    if sweep.is_empty() {
        return Err(Error::Config("threshold sweep is empty".into()));
    }
    let global_brier = brier(test.confidences, test.outcomes)?;
    sweep
        .iter()
        .map(|&epsilon| {
            let slices = slice_regimes(field, epsilon);
            let g = worst_slice_gap(test, &slices, GapMetric::Smece)?;
            let brier_gap = match g.worst {
                Some(w) => GapMetric::Brier
                    .eval_on(test, &slices.indices(w))?
                    .map(|b| b - global_brier),
                None => None,
            };
            Ok(SweepRow {
                epsilon,
                counts: slices.counts,
                worst: g.worst,
                smece_gap: g.gap,
                brier_gap,
                slice_fraction: g.worst.map(|w| slices.fraction(w)),
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    let mut s = String::from("epsilon,n_over,n_under,n_good,worst_slice,smece_gap,brier_gap,slice_fraction\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epsilon,
            r.counts.over,
            r.counts.under,
            r.counts.good,
            r.worst.map_or("", Regime::as_str),
            opt(r.smece_gap),
            opt(r.brier_gap),
            opt(r.slice_fraction),
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub over: Option<f64>,
    pub under: Option<f64>,
    pub good: Option<f64>,
}

impl SliceMetrics {
    pub fn compute(test: Observed<'_>, slices: &RegimeSlices, metric: GapMetric) -> Result<Self> {
        Ok(Self {
            over: metric.eval_on(test, &slices.indices(Regime::Over))?,
            under: metric.eval_on(test, &slices.indices(Regime::Under))?,
            good: metric.eval_on(test, &slices.indices(Regime::Good))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Resolved configuration the audit ran under.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub n: usize,
    pub global_smece: f64,
    pub slice_smece: SliceMetrics,
    pub slice_sizes: SliceCounts,
    pub worst_slice: Option<Regime>,
    pub worst_slice_gap: Option<f64>,
    pub brier_gap: Option<f64>,
    pub nontrivial: bool,
    pub heterogeneity: Heterogeneity,
    pub threshold_sweep: Vec<SweepRow>,
    pub bootstrap: Option<BootstrapReport>,
    pub permutation_null: Option<NullSummary>,
    pub seed_stability: Option<StabilityReport>,
    pub raw_vs_learned: Option<RawVsLearned>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Core audit of one field on held-out data. The optional suites are left
/// empty for the caller to fill.
pub fn audit_field(test: Observed<'_>, field: ArrayView1<f64>, cfg: &RegimeConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let slices = slice_regimes(field, cfg.epsilon);
    let smece_gap = worst_slice_gap(test, &slices, GapMetric::Smece)?;
    let brier_gap = match smece_gap.worst {
        Some(w) => {
            let global = brier(test.confidences, test.outcomes)?;
            GapMetric::Brier.eval_on(test, &slices.indices(w))?.map(|b| b - global)
        }
        None => None,
    };
    Ok(AuditReport {
        config: serde_json::Value::Null,
        seeds: Vec::new(),
        epsilon: cfg.epsilon,
        n: field.len(),
        global_smece: smece_gap.global,
        slice_smece: SliceMetrics::compute(test, &slices, GapMetric::Smece)?,
        slice_sizes: slices.counts,
        worst_slice: smece_gap.worst,
        worst_slice_gap: smece_gap.gap,
        brier_gap,
        nontrivial: smece_gap.gap.is_some_and(|g| g >= NONTRIVIAL_GAP),
        heterogeneity: heterogeneity_stats(field)?,
        threshold_sweep: threshold_sweep(test, field, &cfg.sweep)?,
        bootstrap: None,
        permutation_null: None,
        seed_stability: None,
        raw_vs_learned: None,
    })
}

/// Pearson correlation and sign agreement between two fields, the latter
/// over rows where both are nonzero. `None` entries mean undefined.
pub fn field_agreement(a: ArrayView1<f64>, b: ArrayView1<f64>) -> (Option<f64>, Option<f64>) {
    let corr = crate::metrics::pearson(a, b);
    let (mut both, mut agree) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b.iter()) {
        if x != 0.0 && y != 0.0 {
            both += 1;
            if (x > 0.0) == (y > 0.0) {
                agree += 1;
            }
        }
    }
    let sign = (both > 0).then(|| agree as f64 / both as f64);
    (corr, sign)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let a = Array1::from(v.to_vec());
    let m = a.mean().unwrap();
    let var = if v.len() > 1 {
        a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    } else {
        0.0
    };
    (m, var.sqrt())
}
