//! Audits that rerun the whole discovery pipeline: permutation nulls, seed
//! stability, and the raw-embedding comparison.

use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{field_agreement, heterogeneity_stats, mean_std, percentile, slice_regimes, worst_slice_gap};
use super::{GapMetric, Heterogeneity, RegimeConfig};
use crate::dataio::{sample_bank, Dataset};
use crate::error::{Error, Result};
use crate::field::{estimate_field, FieldEstimate, FieldModel, KernelConfig, Representation, TrainConfig, TrainHistory};
use crate::geometry::NetArch;
use crate::parallel::map_ordered;
use crate::rng::{self, Purpose};
use crate::selection::{grid_search, proxy_brier, HyperGrid, Observed, SelectionResult};

/// Everything needed to go from train/val splits to a field on new inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub arch: NetArch,
    pub grid: HyperGrid,
    pub train: TrainConfig,
    pub regime: RegimeConfig,
}

pub struct PipelineRun {
    pub seed: u64,
    pub selection: SelectionResult,
    pub model: FieldModel,
    pub history: TrainHistory,
    pub test_field: FieldEstimate,
}

/// Train and select on `train`/`val`, then evaluate the chosen field at
/// `test_inputs`. Test outcomes never enter this function.
pub fn run_pipeline(
    train: &Dataset,
    val: &Dataset,
    test_inputs: ArrayView2<f64>,
    cfg: &PipelineConfig,
    jobs: usize,
) -> Result<PipelineRun> {
    let out = grid_search(train, val, cfg.arch, &cfg.grid, &cfg.train, None, jobs)?;
    let test_field = out.chosen.model.estimate(test_inputs)?;
    Ok(PipelineRun {
        seed: cfg.train.seed,
        selection: out.result,
        model: out.chosen.model,
        history: out.chosen.history,
        test_field,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub sigma: f64,
    pub lambda: f64,
    pub best_epoch: usize,
    pub last_epoch: usize,
    pub field_mean: f64,
    pub field_std: f64,
    pub gap: Option<f64>,
}

impl PipelineRun {
    pub fn summary(&self, test: Observed<'_>, epsilon: f64) -> Result<RunSummary> {
        let h = heterogeneity_stats(self.test_field.values.view())?;
        let slices = slice_regimes(self.test_field.values.view(), epsilon);
        let gap = worst_slice_gap(test, &slices, GapMetric::Smece)?.gap;
        let cell = self.selection.chosen_cell();
        Ok(RunSummary {
            seed: self.seed,
            sigma: cell.sigma,
            lambda: cell.lambda,
            best_epoch: self.history.best_epoch,
            last_epoch: self.history.last_epoch(),
            field_mean: h.mean,
            field_std: h.std,
            gap,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub permutations: usize,
    pub seed: u64,
    pub real: RunSummary,
    pub nulls: Vec<RunSummary>,
    pub null_std_mean: f64,
    pub null_std_sd: f64,
    pub null_gap_mean: f64,
    pub null_gap_sd: f64,
    pub null_gap_p95: f64,
    /// Null runs with no signed slice; their gap enters the statistics as 0.
    pub absent_null_gaps: usize,
    /// `(real std - null mean std) / null sd of std`.
    pub std_separation: f64,
}

fn permuted(ds: &Dataset, seed: u64, index: u64) -> Result<Dataset> {
    let mut y = ds.outcomes().to_vec();
    y.shuffle(&mut rng::sub_stream(seed, Purpose::Permutation, index));
    ds.with_outcomes(Array1::from(y))
}

/// Rerun the pipeline with labels permuted within train and within val,
/// `p` times, and compare the resulting fields with the real run.
pub fn permutation_null_audit(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    cfg: &PipelineConfig,
    p: usize,
    seed: u64,
    jobs: usize,
) -> Result<NullSummary> {
    if p < 2 {
        return Err(Error::Config(format!("permutation null needs at least 2 permutations, got {p}")));
    }
    let eps = cfg.regime.epsilon;
    let real = run_pipeline(train, val, test.embeddings().view(), cfg, jobs)?.summary(test.observed(), eps)?;
    let idx: Vec<u64> = (0..p as u64).collect();
    let nulls = map_ordered(&idx, jobs, |_, &k| {
        let run = (|| {
            let tr = permuted(train, seed, 2 * k)?;
            let va = permuted(val, seed, 2 * k + 1)?;
            run_pipeline(&tr, &va, test.embeddings().view(), cfg, 1)?.summary(test.observed(), eps)
        })();
        run.map_err(|e| Error::Permutation {
            index: k as usize,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let stds: Vec<f64> = nulls.iter().map(|r| r.field_std).collect();
    let mut gaps: Vec<f64> = nulls.iter().map(|r| r.gap.unwrap_or(0.0)).collect();
    let (null_std_mean, null_std_sd) = mean_std(&stds);
    let (null_gap_mean, null_gap_sd) = mean_std(&gaps);
    gaps.sort_by(f64::total_cmp);
    let std_separation = if null_std_sd > 0.0 {
        (real.field_std - null_std_mean) / null_std_sd
    } else if real.field_std > null_std_mean {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(NullSummary {
        permutations: p,
        seed,
        absent_null_gaps: nulls.iter().filter(|r| r.gap.is_none()).count(),
        real,
        nulls,
        null_std_mean,
        null_std_sd,
        null_gap_mean,
        null_gap_sd,
        null_gap_p95: percentile(&gaps, 95.0),
        std_separation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub seeds: (u64, u64),
    pub correlation: Option<f64>,
    pub sign_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub runs: Vec<RunSummary>,
    pub pairs: Vec<PairStat>,
    pub correlation_mean: f64,
    pub correlation_sd: f64,
    pub sign_agreement_mean: f64,
    pub sign_agreement_sd: f64,
}

impl StabilityReport {
    /// Pairwise agreement of already-trained runs on the same test rows.
    pub fn from_runs(runs: &[PipelineRun], test: Observed<'_>, epsilon: f64) -> Result<Self> {
        if runs.len() < 2 {
            return Err(Error::Config("seed stability needs at least 2 seeds".into()));
        }
        let mut pairs = Vec::new();
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                let (c, s) = field_agreement(runs[i].test_field.values.view(), runs[j].test_field.values.view());
                pairs.push(PairStat {
                    seeds: (runs[i].seed, runs[j].seed),
                    correlation: c,
                    sign_agreement: s,
                });
            }
        }
        let cs: Vec<f64> = pairs.iter().filter_map(|p| p.correlation).collect();
        let ss: Vec<f64> = pairs.iter().filter_map(|p| p.sign_agreement).collect();
        let (correlation_mean, correlation_sd) = mean_std(&cs);
        let (sign_agreement_mean, sign_agreement_sd) = mean_std(&ss);
        Ok(Self {
            runs: runs.iter().map(|r| r.summary(test, epsilon)).collect::<Result<_>>()?,
            pairs,
            correlation_mean,
            correlation_sd,
            sign_agreement_mean,
            sign_agreement_sd,
        })
    }
}

/// Train one field per seed on the same splits and compare them pairwise.
pub fn seed_stability_audit(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    cfg: &PipelineConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<StabilityReport> {
    if seeds.len() < 2 {
        return Err(Error::Config("seed stability needs at least 2 seeds".into()));
    }
    let runs = map_ordered(seeds, jobs, |_, &s| {
        let mut c = cfg.clone();
        c.train.seed = s;
        run_pipeline(train, val, test.embeddings().view(), &c, 1)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    StabilityReport::from_runs(&runs, test.observed(), cfg.regime.epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryStats {
    pub sigma: f64,
    pub val_proxy: f64,
    pub heterogeneity: Heterogeneity,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawVsLearned {
    pub raw: GeometryStats,
    pub learned: GeometryStats,
    /// `gap_learned - gap_raw` when both exist.
    pub gap_difference: Option<f64>,
}

fn geometry_stats(
    model: &FieldModel,
    val: &Dataset,
    test: &Dataset,
    epsilon: f64,
) -> Result<(GeometryStats, FieldEstimate)> {
    let val_proxy = proxy_brier(val.observed(), &model.estimate_dataset(val)?)?;
    let est = model.estimate_dataset(test)?;
    let slices = slice_regimes(est.values.view(), epsilon);
    Ok((
        GeometryStats {
            sigma: model.kernel.sigma,
            val_proxy,
            heterogeneity: heterogeneity_stats(est.values.view())?,
            gap: worst_slice_gap(test.observed(), &slices, GapMetric::Smece)?.gap,
        },
        est,
    ))
}

/// Compare a learned field with kernel smoothing on the raw embeddings,
/// whose bandwidth is chosen from `sigma_grid` by the same validation proxy
/// (ties toward the larger bandwidth).
#[allow(clippy::too_many_arguments)]
pub fn raw_vs_learned(
    train: &Dataset,
    val: &Dataset,
    test: &Dataset,
    sigma_grid: &[f64],
    learned: &FieldModel,
    regime: &RegimeConfig,
    bank_cap: usize,
    seed: u64,
) -> Result<RawVsLearned> {
    if sigma_grid.is_empty() {
        return Err(Error::Config("raw bandwidth grid is empty".into()));
    }
    let bank = sample_bank(train, bank_cap, seed)?;
    let mut best: Option<(f64, f64)> = None;
    for &sigma in sigma_grid {
        let kcfg = KernelConfig { sigma };
        kcfg.validate()?;
        let est = estimate_field(val.embeddings().view(), &bank, kcfg)?;
        let proxy = proxy_brier(val.observed(), &est)?;
        if best.is_none_or(|(p, s)| proxy < p || (proxy == p && sigma > s)) {
            best = Some((proxy, sigma));
        }
    }
    let sigma = best.expect("grid is nonempty").1;
    let raw_model = FieldModel::new(Representation::Identity, KernelConfig { sigma }, bank)?;
    let (raw, _) = geometry_stats(&raw_model, val, test, regime.epsilon)?;
    let (learned, _) = geometry_stats(learned, val, test, regime.epsilon)?;
    let gap_difference = match (learned.gap, raw.gap) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(RawVsLearned {
        raw,
        learned,
        gap_difference,
    })
}
