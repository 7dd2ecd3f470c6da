//! Residual regression: an MLP fit directly to `y - f` by mean squared error.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::field::TrainConfig;
use crate::geometry::{Head, Mode, NetArch, NetParams};
use crate::optim::{clip_global_norm, max_abs, Adam};
use crate::parallel::map_ordered;
use crate::rng::{self, Purpose};

/// Hidden depth and width of one rung of the capacity ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacity {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Capacity {
    pub fn arch(&self, input_dim: usize, dropout: f64) -> NetArch {
        NetArch {
            input_dim,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            output_dim: 1,
            dropout,
            head: Head::Linear,
        }
    }

    pub fn default_ladder() -> Vec<Capacity> {
        [(2, 64), (2, 256), (3, 512)]
            .into_iter()
            .map(|(hidden_layers, hidden_width)| Capacity {
                hidden_layers,
                hidden_width,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResRegModel {
    pub params: NetParams,
}

impl ResRegModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let params = NetParams::load(path)?;
        check_arch(&params.arch)?;
        Ok(Self { params })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResRegEpoch {
    pub epoch: usize,
    pub train_mse: Option<f64>,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct ResRegOutcome {
    pub model: ResRegModel,
    pub history: Vec<ResRegEpoch>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl ResRegOutcome {
    pub fn best_val_mse(&self) -> f64 {
        self.history
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(f64::INFINITY, |e| e.val_mse)
    }
}

fn check_arch(arch: &NetArch) -> Result<()> {
    arch.validate()?;
    if arch.head != Head::Linear || arch.output_dim != 1 {
        return Err(Error::Config(format!(
            "residual regression needs a linear head with one output, got {:?} with {}",
            arch.head, arch.output_dim
        )));
    }
    Ok(())
}

/// Predicted residuals, clamped to `[-1, 1]`.
pub fn predict_resreg(model: &ResRegModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    let out = model.params.forward(x, Mode::Eval, 0)?;
    Ok(out.column(0).mapv(|v| v.clamp(-1.0, 1.0)))
}

fn mse(model: &ResRegModel, ds: &Dataset) -> Result<f64> {
    let pred = predict_resreg(model, ds.embeddings().view())?;
    let r = ds.residuals();
    Ok((&pred - &r).mapv(|e| e * e).mean().unwrap_or(0.0))
}

/// Fit `g(x) ~ y - f` with the same optimizer, clipping and early-stopping
/// contract as the field trainer, selecting on validation MSE.
pub fn train_resreg(train_ds: &Dataset, val_ds: &Dataset, arch: NetArch, tcfg: &TrainConfig) -> Result<ResRegOutcome> {
    check_arch(&arch)?;
    tcfg.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::Data("residual regression needs nonempty train and validation splits".into()));
    }
    if train_ds.dim() != arch.input_dim || val_ds.dim() != arch.input_dim {
        return Err(Error::Shape(format!(
            "data dimension {} does not match network input {}",
            train_ds.dim(),
            arch.input_dim
        )));
    }
    let mut model = ResRegModel {
        params: NetParams::init(arch, tcfg.seed)?,
    };
    let mut adam = Adam::new(tcfg.adam(), &model.params);
    let x = train_ds.embeddings();
    let r = train_ds.residuals();

    let mut history = vec![ResRegEpoch {
        epoch: 0,
        train_mse: None,
        val_mse: mse(&model, val_ds)?,
    }];
    let mut best = (history[0].val_mse, model.clone(), 0usize);
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng::sub_stream(tcfg.seed, Purpose::Shuffle, epoch as u64));
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, idx) in order.chunks(tcfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let rb = r.select(Axis(0), idx);
            let cache = model.params.forward_cached(xb.view(), Mode::Train, tcfg.step_seed(epoch, b))?;
            let n = idx.len() as f64;
            let err = &cache.output().column(0) - &rb;
            let loss = err.dot(&err) / n;
            let d_out: Array2<f64> = err.mapv(|e| 2.0 * e / n).insert_axis(Axis(1));
            let mut grads = model.params.backward(&cache, d_out.view())?;
            let max_grad = max_abs(&grads);
            if !loss.is_finite() || !max_grad.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    max_abs_grad: max_grad,
                });
            }
            clip_global_norm(&mut grads, tcfg.grad_clip_norm);
            adam.step(&mut model.params, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let val_mse = mse(&model, val_ds)?;
        history.push(ResRegEpoch {
            epoch,
            train_mse: Some(loss_sum / batches.max(1) as f64),
            val_mse,
        });
        if val_mse < best.0 {
            best = (val_mse, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                stopped_early = epoch < tcfg.max_epochs;
                break;
            }
        }
    }
    Ok(ResRegOutcome {
        model: best.1,
        history,
        best_epoch: best.2,
        stopped_early,
    })
}

/// One fit per capacity, in ladder order.
pub fn train_resreg_ladder(
    train_ds: &Dataset,
    val_ds: &Dataset,
    ladder: &[Capacity],
    dropout: f64,
    tcfg: &TrainConfig,
    jobs: usize,
) -> Result<Vec<ResRegOutcome>> {
    if ladder.is_empty() {
        return Err(Error::Config("capacity ladder is empty".into()));
    }
    map_ordered(ladder, jobs, |_, cap| {
        train_resreg(train_ds, val_ds, cap.arch(train_ds.dim(), dropout), tcfg)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn constant_residual_data(n: usize, c: f64, seed: u64) -> Dataset {
        // y = 1 and f = 1 - c give r = c exactly.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        Dataset::new(x, Array1::from_elem(n, 1.0 - c), Array1::ones(n), None, None).unwrap()
    }

    #[test]
    fn constant_residual_is_learned() {
        let tr = constant_residual_data(512, 0.3, 1);
        let va = constant_residual_data(128, 0.3, 2);
        let arch = Capacity {
            hidden_layers: 1,
            hidden_width: 16,
        }
        .arch(2, 0.0);
        let tcfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 128,
            max_epochs: 300,
            ..TrainConfig::default()
        };
        let out = train_resreg(&tr, &va, arch, &tcfg).unwrap();
        let pred = predict_resreg(&out.model, va.embeddings().view()).unwrap();
        assert!(pred.iter().all(|p| (p - 0.3).abs() < 0.02), "{pred:?}");
    }

    #[test]
    fn rejects_normalized_head() {
        let tr = constant_residual_data(16, 0.1, 1);
        let arch = NetArch::synthetic(2);
        assert!(matches!(
            train_resreg(&tr, &tr, arch, &TrainConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let tr = constant_residual_data(64, 0.2, 3);
        let arch = Capacity {
            hidden_layers: 1,
            hidden_width: 8,
        }
        .arch(2, 0.1);
        let tcfg = TrainConfig {
            learning_rate: 0.0,
            weight_decay: 0.0,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let out = train_resreg(&tr, &tr, arch, &tcfg).unwrap();
        assert_eq!(out.model.params, NetParams::init(arch, 0).unwrap());
    }
}
