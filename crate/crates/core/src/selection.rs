//! Hyperparameter selection by the corrected validation Brier score, and the
//! oracle diagnostics used to judge it on synthetic data.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::field::{train, FieldEstimate, KernelConfig, LossConfig, TrainConfig, TrainOutcome};
use crate::geometry::NetArch;
use crate::metrics::{pearson, spearman};
use crate::parallel::map_ordered;

/// The observable part of a dataset: confidences and outcomes only.
#[derive(Debug, Clone, Copy)]
pub struct Observed<'a> {
    pub confidences: ArrayView1<'a, f64>,
    pub outcomes: ArrayView1<'a, f64>,
}

impl Dataset {
    pub fn observed(&self) -> Observed<'_> {
        Observed {
            confidences: self.confidences().view(),
            outcomes: self.outcomes().view(),
        }
    }
}

/// Brier score of the raw additive correction `f + delta_hat` (not clipped).
pub fn proxy_brier(val: Observed<'_>, field: &FieldEstimate) -> Result<f64> {
    let n = val.confidences.len();
    if field.len() != n || val.outcomes.len() != n {
        return Err(Error::Shape(format!("{n} validation rows but field of length {}", field.len())));
    }
    if n == 0 {
        return Err(Error::Data("empty validation split".into()));
    }
    let mut s = 0.0;
    for i in 0..n {
        let e = val.outcomes[i] - (val.confidences[i] + field.values[i]);
        s += e * e;
    }
    Ok(s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub sigmas: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "default_m_min")]
    pub m_min: f64,
}

fn default_m_min() -> f64 {
    LossConfig::default().m_min
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            sigmas: vec![0.02, 0.05, 0.1, 0.3],
            lambdas: vec![0.0, 1e-2],
            m_min: default_m_min(),
        }
    }
}

impl HyperGrid {
    pub fn single(kcfg: KernelConfig, lcfg: LossConfig) -> Self {
        Self {
            sigmas: vec![kcfg.sigma],
            lambdas: vec![lcfg.lambda],
            m_min: lcfg.m_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("grid bandwidths must be positive".into()));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config("grid lambdas must be non-negative".into()));
        }
        Ok(())
    }

    /// Cells in row-major order (sigma outer, lambda inner).
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.sigmas
            .iter()
            .flat_map(|&s| self.lambdas.iter().map(move |&l| (s, l)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub sigma: f64,
    pub lambda: f64,
    pub proxy: f64,
    pub oracle_corr: Option<f64>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    /// Rank agreement of (negated) proxy with oracle; absent when undefined.
    pub spearman: Option<f64>,
    pub spread: f64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub cells: Vec<CellRecord>,
    pub chosen: usize,
    pub diagnostics: Option<SelectionDiagnostics>,
}

impl SelectionResult {
    pub fn chosen_cell(&self) -> &CellRecord {
        &self.cells[self.chosen]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,lambda,proxy,oracle_corr\n");
        for c in &self.cells {
            let o = c.oracle_corr.map(|v| format!("{v}")).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", c.sigma, c.lambda, c.proxy, o));
        }
        s
    }
}

/// Index of the lowest proxy; exact ties go to the larger sigma, then the larger lambda.
pub fn choose_cell(cells: &[CellRecord]) -> Option<usize> {
    (0..cells.len()).min_by(|&i, &j| {
        let (a, b) = (&cells[i], &cells[j]);
        a.proxy
            .total_cmp(&b.proxy)
            .then(b.sigma.total_cmp(&a.sigma))
            .then(b.lambda.total_cmp(&a.lambda))
    })
}

/// Spearman agreement, oracle spread and regret of the proxy-chosen cell.
pub fn selection_diagnostics(proxies: &[f64], oracles: &[f64], chosen: usize) -> Result<SelectionDiagnostics> {
    if proxies.len() != oracles.len() || oracles.is_empty() || chosen >= oracles.len() {
        return Err(Error::Shape("proxy/oracle lists disagree".into()));
    }
    let best = oracles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = oracles.iter().copied().fold(f64::INFINITY, f64::min);
    let neg: Array1<f64> = proxies.iter().map(|p| -p).collect();
    let orc = Array1::from(oracles.to_vec());
    Ok(SelectionDiagnostics {
        spearman: spearman(neg.view(), orc.view()),
        spread: best - worst,
        regret: best - oracles[chosen],
    })
}

/// Per-cell outcome; the full trained model is kept only for the chosen cell.
pub struct GridOutcome {
    pub result: SelectionResult,
    pub chosen: TrainOutcome,
}

/// Train one field per grid cell, all from the same seed, and pick the
/// lowest validation proxy. `oracle` (a held-out split with a true field)
/// is used only to report oracle correlations, never for the choice.
pub fn grid_search(
    train_ds: &Dataset,
    val_ds: &Dataset,
    arch: NetArch,
    grid: &HyperGrid,
    tcfg: &TrainConfig,
    oracle: Option<&Dataset>,
    jobs: usize,
) -> Result<GridOutcome> {
    grid.validate()?;
    let cells = grid.cells();
    let runs = map_ordered(&cells, jobs, |_, &(sigma, lambda)| {
        let out = train(
            train_ds,
            val_ds,
            arch,
            KernelConfig { sigma },
            LossConfig {
                lambda,
                m_min: grid.m_min,
            },
            tcfg,
        )
        .map_err(|e| Error::Cell {
            sigma,
            lambda,
            source: Box::new(e),
        })?;
        let oracle_corr = match oracle.and_then(|d| d.true_field().map(|t| (d, t))) {
            Some((d, t)) => {
                let est = out.model.estimate_dataset(d)?;
                pearson(est.values.view(), t.view())
            }
            None => None,
        };
        let proxy = out.history.best().map(|b| b.val_proxy).unwrap_or(f64::INFINITY);
        Ok((
            CellRecord {
                sigma,
                lambda,
                proxy,
                oracle_corr,
                best_epoch: out.history.best_epoch,
            },
            out,
        ))
    });
    let mut records = Vec::with_capacity(runs.len());
    let mut outcomes = Vec::with_capacity(runs.len());
    for r in runs {
        let (rec, out) = r?;
        records.push(rec);
        outcomes.push(Some(out));
    }
    let chosen = choose_cell(&records).expect("grid is nonempty");
    let diagnostics = if records.iter().all(|c| c.oracle_corr.is_some()) {
        let proxies: Vec<f64> = records.iter().map(|c| c.proxy).collect();
        let oracles: Vec<f64> = records.iter().map(|c| c.oracle_corr.unwrap()).collect();
        Some(selection_diagnostics(&proxies, &oracles, chosen)?)
    } else {
        None
    };
    Ok(GridOutcome {
        chosen: outcomes[chosen].take().unwrap(),
        result: SelectionResult {
            cells: records,
            chosen,
            diagnostics,
        },
    })
}
