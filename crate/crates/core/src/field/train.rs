use std::io::Write;
use std::path::Path;

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{discovery_loss, FieldModel, KernelConfig, LossConfig, Representation};
use crate::dataio::{sample_bank, Dataset, DEFAULT_BANK_CAP};
use crate::error::{Error, Result};
use crate::geometry::{Mode, NetArch, NetParams};
use crate::optim::{clip_global_norm, max_abs, Adam, AdamConfig};
use crate::rng::{self, Purpose};
use crate::selection::proxy_brier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub bank_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-5,
            weight_decay: 7e-6,
            batch_size: 1024,
            grad_clip_norm: 1.0,
            max_epochs: 100,
            patience: 20,
            seed: 0,
            bank_cap: DEFAULT_BANK_CAP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.weight_decay >= 0.0
            && self.batch_size >= 2
            && self.grad_clip_norm > 0.0
            && self.max_epochs >= 1
            && self.patience >= 1
            && self.bank_cap >= 1;
        if !ok {
            return Err(Error::Config(format!("invalid training config: {self:?}")));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub(crate) fn step_seed(&self, epoch: usize, batch: usize) -> u64 {
        self.seed
            .wrapping_mul(0x2545_F491_4F6C_DD1D)
            .wrapping_add(((epoch as u64) << 24) ^ batch as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss; absent for the pre-training evaluation (epoch 0).
    pub train_loss: Option<f64>,
    /// Mean validation neighbourhood mass against the bank.
    pub mean_mass: f64,
    pub val_proxy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// Last epoch actually run.
    pub fn last_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,mean_mass,val_proxy\n");
        for e in &self.epochs {
            let tl = e.train_loss.map(|v| format!("{v:.17e}")).unwrap_or_default();
            s.push_str(&format!("{},{},{:.17e},{:.17e}\n", e.epoch, tl, e.mean_mass, e.val_proxy));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub history: TrainHistory,
    pub model: FieldModel,
}

fn evaluate(params: &NetParams, kcfg: KernelConfig, bank: &crate::dataio::NeighbourBank, val: &Dataset) -> Result<(f64, f64, FieldModel)> {
    let model = FieldModel::new(Representation::Learned(params.clone()), kcfg, bank.clone())?;
    let est = model.estimate_dataset(val)?;
    let proxy = proxy_brier(val.observed(), &est)?;
    let mass = est.masses.mean().unwrap_or(0.0);
    Ok((proxy, mass, model))
}

/// Fit the representation by minimising the discovery loss, keeping the
/// parameters with the lowest validation proxy.
///
/// Epoch 0 is the initial network; it takes part in checkpoint selection.
pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    arch: NetArch,
    kcfg: KernelConfig,
    lcfg: LossConfig,
    tcfg: &TrainConfig,
) -> Result<TrainOutcome> {
    arch.validate()?;
    kcfg.validate()?;
    lcfg.validate()?;
    tcfg.validate()?;
    if train_ds.len() < 2 || val_ds.is_empty() {
        return Err(Error::Data("training needs >= 2 train rows and a nonempty validation split".into()));
    }
    if train_ds.dim() != arch.input_dim || val_ds.dim() != arch.input_dim {
        return Err(Error::Shape(format!(
            "data dimension {} does not match network input {}",
            train_ds.dim(),
            arch.input_dim
        )));
    }

    let mut params = NetParams::init(arch, tcfg.seed)?;
    let mut adam = Adam::new(tcfg.adam(), &params);
    let bank = sample_bank(train_ds, tcfg.bank_cap, tcfg.seed)?;
    let residuals = train_ds.residuals();
    let x = train_ds.embeddings();

    let (proxy0, mass0, model0) = evaluate(&params, kcfg, &bank, val_ds)?;
    let mut history = TrainHistory {
        epochs: vec![EpochRecord {
            epoch: 0,
            train_loss: None,
            mean_mass: mass0,
            val_proxy: proxy0,
        }],
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best = (proxy0, params.clone(), model0);
    let mut since_best = 0;

    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    for epoch in 1..=tcfg.max_epochs {
        order.shuffle(&mut rng::sub_stream(tcfg.seed, Purpose::Shuffle, epoch as u64));
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for (b, idx) in order.chunks(tcfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let xb = x.select(Axis(0), idx);
            let rb = residuals.select(Axis(0), idx);
            let cache = params.forward_cached(xb.view(), Mode::Train, tcfg.step_seed(epoch, b))?;
            let out = discovery_loss(cache.output().view(), rb.view(), kcfg, lcfg)?;
            let mut grads = params.backward(&cache, out.grad.view())?;
            let max_grad = max_abs(&grads);
            if !out.loss.is_finite() || !max_grad.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    max_abs_grad: max_grad,
                });
            }
            clip_global_norm(&mut grads, tcfg.grad_clip_norm);
            adam.step(&mut params, &grads);
            loss_sum += out.loss;
            batches += 1;
        }
        let (proxy, mass, model) = evaluate(&params, kcfg, &bank, val_ds)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches.max(1) as f64),
            mean_mass: mass,
            val_proxy: proxy,
        });
        if proxy < best.0 {
            best = (proxy, params.clone(), model);
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                history.stopped_early = epoch < tcfg.max_epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.1,
        history,
        model: best.2,
    })
}
