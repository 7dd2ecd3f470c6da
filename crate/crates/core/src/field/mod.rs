//! Miscalibration field estimation: kernel smoothing of residuals in a
//! representation space, the discovery loss, and the training loop.

mod kernel;
mod loss;
mod train;

pub use kernel::{
    estimate_field, estimate_field_chunked, kernel_weights, DEFAULT_CHUNK_ROWS, STARVATION_MASS,
};
pub use loss::{discovery_loss, LossOutput};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, NeighbourBank};
use crate::error::{Error, Result};
use crate::geometry::{Mode, NetParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub sigma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { sigma: 0.3 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub m_min: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            m_min: 20.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.m_min > 0.0 && self.m_min.is_finite()) {
            return Err(Error::Config(format!("m_min must be > 0, got {}", self.m_min)));
        }
        Ok(())
    }
}

/// Smoothed residuals and neighbourhood masses for a set of queries.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEstimate {
    pub values: Array1<f64>,
    pub masses: Array1<f64>,
    /// Queries whose total kernel mass underflowed; their value is 0.
    pub starved: Vec<bool>,
    pub sigma: f64,
    pub bank_size: usize,
}

impl FieldEstimate {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn starved_count(&self) -> usize {
        self.starved.iter().filter(|&&s| s).count()
    }
}

/// How raw inputs are mapped before smoothing.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Learned(NetParams),
    /// Raw embeddings used as-is.
    Identity,
}

impl Representation {
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Representation::Learned(net) => net.forward(x, Mode::Eval, 0),
            Representation::Identity => Ok(x.to_owned()),
        }
    }
}

/// A representation, a bandwidth and a training bank: everything needed to
/// evaluate the field at new inputs.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub representation: Representation,
    pub kernel: KernelConfig,
    /// Bank in raw input space.
    pub bank: NeighbourBank,
    mapped_bank: NeighbourBank,
}

impl FieldModel {
    pub fn new(representation: Representation, kernel: KernelConfig, bank: NeighbourBank) -> Result<Self> {
        kernel.validate()?;
        let mut mapped_bank = bank.clone();
        mapped_bank.embeddings = representation.embed(bank.embeddings.view())?;
        Ok(Self {
            representation,
            kernel,
            bank,
            mapped_bank,
        })
    }

    pub fn estimate(&self, x: ArrayView2<f64>) -> Result<FieldEstimate> {
        let q = self.representation.embed(x)?;
        estimate_field(q.view(), &self.mapped_bank, self.kernel)
    }

    pub fn estimate_dataset(&self, ds: &Dataset) -> Result<FieldEstimate> {
        self.estimate(ds.embeddings().view())
    }

    pub fn mapped_bank(&self) -> &NeighbourBank {
        &self.mapped_bank
    }
}
