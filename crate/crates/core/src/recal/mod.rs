//! Recalibrators: the range-aware field correction, temperature scaling,
//! isotonic regression and the residual-regression baseline.

mod isotonic;
mod resreg;
mod temperature;

pub use isotonic::{apply_isotonic, fit_isotonic, IsotonicMap};
pub use resreg::{
    predict_resreg, train_resreg, train_resreg_ladder, Capacity, ResRegEpoch, ResRegModel, ResRegOutcome,
};
pub use temperature::{apply_temperature, fit_temperature, TempFit, TempScaler, PROB_CLAMP};

use std::path::Path;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{brier, smece_value};
use crate::selection::Observed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionConfig {
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            alpha_grid: vec![0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0],
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a.is_finite();
        if !ok(self.alpha) || self.alpha_grid.is_empty() || !self.alpha_grid.iter().all(|&a| ok(a)) {
            return Err(Error::Config(format!("alpha and every alpha_grid entry must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// `f + Delta` with `Delta = (1-f) tanh(alpha |d|)` for `d >= 0` and
/// `-f tanh(alpha |d|)` otherwise, so the result never leaves `[0,1]`.
pub fn correct_one(f: f64, delta: f64, alpha: f64) -> f64 {
    let t = (alpha * delta.abs()).tanh();
    if delta < 0.0 {
        f - f * t
    } else {
        f + (1.0 - f) * t
    }
}

pub fn range_aware_correct(f: ArrayView1<f64>, delta: ArrayView1<f64>, alpha: f64) -> Result<Array1<f64>> {
    if f.len() != delta.len() {
        return Err(Error::Shape(format!("{} confidences but {} field values", f.len(), delta.len())));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    if let Some(i) = f.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Data(format!("confidence {} at index {i} outside [0,1]", f[i])));
    }
    Ok(ndarray::Zip::from(&f).and(&delta).map_collect(|&fi, &di| correct_one(fi, di, alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub alpha: f64,
    pub val_smece: f64,
    pub val_brier: f64,
}

/// Pick the alpha with the lowest validation smECE of the corrected
/// confidences; ties go to the lower Brier score, then the smaller alpha.
pub fn select_alpha(val: Observed<'_>, field: ArrayView1<f64>, alpha_grid: &[f64]) -> Result<AlphaChoice> {
    if alpha_grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    let mut best: Option<AlphaChoice> = None;
    for &alpha in alpha_grid {
        let corrected = range_aware_correct(val.confidences, field, alpha)?;
        let cand = AlphaChoice {
            alpha,
            val_smece: smece_value(corrected.view(), val.outcomes)?,
            val_brier: brier(corrected.view(), val.outcomes)?,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (cand.val_smece, cand.val_brier, cand.alpha)
                    .partial_cmp(&(b.val_smece, b.val_brier, b.alpha))
                    == Some(std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Serialized form of a fitted recalibrator. The residual regressor's
/// weights live in a checkpoint file next to the JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Recalibrator {
    RangeAware { alpha: f64 },
    Temperature { temperature: f64 },
    Isotonic { breakpoints: Vec<f64>, values: Vec<f64> },
    ResReg { checkpoint: String },
}

impl Recalibrator {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recalibrator serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Recalibrator =
            serde_json::from_str(s).map_err(|e| Error::Data(format!("bad recalibrator document: {e}")))?;
        match &r {
            Recalibrator::Isotonic { breakpoints, values } => {
                IsotonicMap::new(breakpoints.clone(), values.clone())?;
            }
            Recalibrator::Temperature { temperature } => {
                TempScaler::new(*temperature)?;
            }
            Recalibrator::RangeAware { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                return Err(Error::Data(format!("alpha must be positive, got {alpha}")));
            }
            _ => {}
        }
        Ok(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

impl From<&TempScaler> for Recalibrator {
    fn from(t: &TempScaler) -> Self {
        Recalibrator::Temperature {
            temperature: t.temperature(),
        }
    }
}

impl From<&IsotonicMap> for Recalibrator {
    fn from(m: &IsotonicMap) -> Self {
        Recalibrator::Isotonic {
            breakpoints: m.breakpoints().to_vec(),
            values: m.values().to_vec(),
        }
    }
}
