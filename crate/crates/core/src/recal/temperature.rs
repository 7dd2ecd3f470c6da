use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{logit, sigmoid};

/// Confidences are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logits.
pub const PROB_CLAMP: f64 = 1e-6;

const LOG_T_MIN: f64 = -2.995_732_273_553_991; // ln 0.05
const LOG_T_MAX: f64 = 2.995_732_273_553_991; // ln 20
const LOG_T_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempScaler {
    temperature: f64,
}

impl TempScaler {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn apply(&self, f: ArrayView1<f64>) -> Array1<f64> {
        apply_temperature(f, self.temperature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempFit {
    pub scaler: TempScaler,
    /// Set when the fit fell back to `T = 1`.
    pub fallback: Option<String>,
}

fn clamped_logit(p: f64) -> f64 {
    logit(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

fn mean_nll(z: &[f64], y: ArrayView1<f64>, t: f64) -> f64 {
    let mut s = 0.0;
    for (&zi, &yi) in z.iter().zip(y.iter()) {
        let u = zi / t;
        // -log sigm(u) = softplus(-u), -log(1 - sigm(u)) = softplus(u)
        let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
        s += yi * softplus(-u) + (1.0 - yi) * softplus(u);
    }
    s / z.len() as f64
}

/// Fit a single temperature by minimising mean binary NLL with a
/// golden-section search over `log T in [ln 0.05, ln 20]`.
pub fn fit_temperature(f: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<TempFit> {
    if f.len() != y.len() {
        return Err(Error::Shape(format!("{} confidences but {} outcomes", f.len(), y.len())));
    }
    if f.is_empty() {
        return Err(Error::Data("cannot fit a temperature on an empty split".into()));
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == y.len() {
        return Ok(TempFit {
            scaler: TempScaler { temperature: 1.0 },
            fallback: Some("single-class outcomes; temperature left at 1".into()),
        });
    }
    let z: Vec<f64> = f.iter().map(|&p| clamped_logit(p)).collect();
    let obj = |u: f64| mean_nll(&z, y, u.exp());

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (LOG_T_MIN, LOG_T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (obj(c), obj(d));
    while b - a > LOG_T_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj(d);
        }
    }
    Ok(TempFit {
        scaler: TempScaler {
            temperature: (0.5 * (a + b)).exp(),
        },
        fallback: None,
    })
}

/// `sigm(logit(f) / T)` on clamped confidences.
pub fn apply_temperature(f: ArrayView1<f64>, temperature: f64) -> Array1<f64> {
    if temperature == 1.0 {
        return f.to_owned();
    }
    f.mapv(|p| sigmoid(clamped_logit(p) / temperature))
}
