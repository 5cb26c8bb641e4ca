//! Adam with warmup and decay, parameter averaging, and the training loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{target_stats, Dataset};
use crate::error::{Error, Result};
use crate::model::{featurize, Checkpoint, ModelConfig, MxmNet, ParamStore, Sample, Standardizer};
use crate::par;
use crate::tensor::{Tape, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const EMA_DECAY: f64 = 0.999;
pub const DECAY_RATE: f64 = 0.1;
pub const DECAY_EPOCHS: f64 = 600.0;

/// Adam moment buffers and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Nothing changes if any gradient is non-finite.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut OptimState, lr: f64) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::invalid(format!(
            "{} gradients and {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if g.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (k, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[k].data();
        let m = state.m[k].data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
        }
        let v = state.v[k].data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
        }
        let (m, v) = (state.m[k].data(), state.v[k].data());
        for ((x, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            *x -= lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Linear warmup over the first epoch, then continuous exponential decay by
/// [`DECAY_RATE`] every [`DECAY_EPOCHS`] epochs.
pub fn lr_at(step: u64, steps_per_epoch: u64, base_lr: f64) -> f64 {
    let spe = steps_per_epoch.max(1) as f64;
    let s = step as f64;
    if s < spe {
        base_lr * s / spe
    } else {
        base_lr * DECAY_RATE.powf((s - spe) / spe / DECAY_EPOCHS)
    }
}

/// `shadow ← decay·shadow + (1 − decay)·params`.
pub fn ema_update(shadow: &mut ParamStore, params: &ParamStore, decay: f64) -> Result<()> {
    if shadow.len() != params.len() {
        return Err(Error::invalid("shadow and parameters differ in length"));
    }
    for (s, p) in shadow.tensors_mut().iter_mut().zip(params.tensors()) {
        if s.shape() != p.shape() {
            return Err(Error::Shape {
                op: "ema_update",
                lhs: s.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        for (a, b) in s.data_mut().iter_mut().zip(p.data()) {
            *a = decay * *a + (1.0 - decay) * b;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub std_mae: f64,
    /// `None` when either vector has zero variance or fewer than two entries.
    pub pearson: Option<f64>,
}

pub fn metrics(pred: &[f64], truth: &[f64], sigma: f64) -> Result<Metrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::invalid(format!(
            "metrics need equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let n = pred.len() as f64;
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(Metrics {
        mae,
        std_mae: mae / sigma,
        pearson: pearson(pred, truth),
    })
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mae,
    Mse,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mae" => Ok(Self::Mae),
            "mse" => Ok(Self::Mse),
            other => Err(Error::invalid(format!("unknown loss `{other}` (mae|mse)"))),
        }
    }
}

/// Split used for per-epoch validation and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidateOn {
    Val,
    Train,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub target: String,
    pub epochs: usize,
    pub lr: f64,
    /// Molecules whose gradients are averaged per optimizer step.
    pub group: usize,
    pub seed: u64,
    pub patience: usize,
    pub loss: Loss,
    pub validate_on: ValidateOn,
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            target: "U0".into(),
            epochs: 100,
            lr: 1e-3,
            group: 32,
            seed: 0,
            patience: 50,
            loss: Loss::Mae,
            validate_on: ValidateOn::Val,
            ema_decay: EMA_DECAY,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::invalid("target name is empty"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.group == 0 || self.patience == 0 {
            return Err(Error::invalid("group and patience must be positive"));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::invalid("ema decay must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-molecule loss over the epoch, in target units.
    pub train_loss: f64,
    /// Mean absolute error over the same forward passes, in target units.
    pub train_mae: f64,
    /// MAE of the averaged weights on the validation split.
    pub val_mae: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// MAE of the best checkpoint on the training split.
    pub final_train_mae: Option<f64>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_mae,lr,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{:.3}\n",
                r.epoch, r.train_loss, r.val_mae, r.lr, r.seconds
            ));
        }
        out
    }

    /// Same report with wall times zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        r
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Averaged weights from the best epoch (the initial weights if no epoch ran).
    pub checkpoint: Checkpoint,
    /// Raw weights after the last step.
    pub last_params: ParamStore,
}

/// Featurized molecules with their targets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub samples: Vec<Sample>,
    pub targets: Vec<f64>,
}

pub fn prepare(ds: &Dataset, indices: &[usize], target: &str, cfg: &ModelConfig) -> Result<Prepared> {
    let targets = ds.target_values(target, indices)?;
    let samples = par::try_map(indices, |&i| featurize(ds.molecule(i), cfg))?;
    Ok(Prepared { samples, targets })
}

/// Predictions in target units, in sample order.
pub fn predict_all(net: &MxmNet, params: &ParamStore, std: Standardizer, samples: &[Sample]) -> Result<Vec<f64>> {
    par::try_map(samples, |s| Ok(std.apply(net.predict(params, s)?)))
}

pub fn mae(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len().max(1) as f64
}

/// Per-molecule loss and absolute error in standardized units, with the
/// loss gradient for every parameter.
fn loss_and_grads(
    net: &MxmNet,
    params: &ParamStore,
    s: &Sample,
    target: f64,
    loss: Loss,
) -> Result<(f64, f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let fwd = net.forward(&mut tape, &p, s)?;
    let t = tape.constant(Tensor::scalar(target));
    let diff = tape.sub(fwd.y, t)?;
    let l = match loss {
        Loss::Mae => tape.abs(diff),
        Loss::Mse => tape.mul(diff, diff)?,
    };
    let mut g = tape.backward(l)?;
    let grads = p
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| g.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok((tape.value(l).item(), tape.value(diff).item().abs(), grads))
}

/// Full training run on a split dataset.
pub fn train(ds: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let net = MxmNet::new(model_cfg.clone())?;
    let split = ds
        .split
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset has not been split"))?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let val_idx = match cfg.validate_on {
        ValidateOn::Val => &split.val,
        ValidateOn::Train => &split.train,
    };
    if val_idx.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    let stats = target_stats(ds, &cfg.target)?;
    let standardizer = Standardizer {
        mean: stats.mean,
        std: stats.std,
    };
    let train_set = prepare(ds, &split.train, &cfg.target, model_cfg)?;
    let val_set = prepare(ds, val_idx, &cfg.target, model_cfg)?;
    let norm_targets: Vec<f64> = train_set.targets.iter().map(|t| (t - stats.mean) / stats.std).collect();
    // standardized loss back to target units
    let unit = match cfg.loss {
        Loss::Mae => stats.std,
        Loss::Mse => stats.std * stats.std,
    };

    let mut params = net.init_params(cfg.seed)?;
    let mut ema = params.clone();
    let mut state = OptimState::new(&params);
    let mut best = Checkpoint::new(model_cfg.clone(), standardizer, ema.clone())?;
    let mut best_mae = f64::INFINITY;
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: None,
        final_train_mae: None,
    };

    let n_train = train_set.samples.len();
    let steps_per_epoch = n_train.div_ceil(cfg.group) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n_train).collect();
    let start = Instant::now();
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_abs = 0.0;
        for (step_in_epoch, group) in order.chunks(cfg.group).enumerate() {
            let results = par::try_map(group, |&i| {
                loss_and_grads(&net, &params, &train_set.samples[i], norm_targets[i], cfg.loss)
            })?;
            let scale = 1.0 / group.len() as f64;
            let mut grads: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
            for (l, a, g) in &results {
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        step: step_in_epoch + 1,
                    });
                }
                epoch_loss += l;
                epoch_abs += a;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += scale * b;
                    }
                }
            }
            let lr = lr_at(state.step + 1, steps_per_epoch, cfg.lr);
            adam_step(&mut params, &grads, &mut state, lr)?;
            ema_update(&mut ema, &params, cfg.ema_decay)?;
        }
        let pred = predict_all(&net, &ema, standardizer, &val_set.samples)?;
        let val_mae = mae(&pred, &val_set.targets);
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: unit * epoch_loss / n_train as f64,
            train_mae: stats.std * epoch_abs / n_train as f64,
            val_mae,
            lr: lr_at(state.step, steps_per_epoch, cfg.lr),
            seconds: start.elapsed().as_secs_f64(),
        });
        if val_mae < best_mae {
            best_mae = val_mae;
            best = Checkpoint::new(model_cfg.clone(), standardizer, ema.clone())?;
            report.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let pred = predict_all(&net, &best.params, standardizer, &train_set.samples)?;
    report.final_train_mae = Some(mae(&pred, &train_set.targets));
    Ok(TrainOutcome {
        report,
        checkpoint: best,
        last_params: params,
    })
}
