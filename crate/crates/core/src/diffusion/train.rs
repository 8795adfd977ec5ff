use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{denoising_loss, make_batch, Batch, NoiseSchedule, TargetScale};
use crate::autodiff::{Adam, AdamConfig, ParamStore, PlateauSchedule};
use crate::error::{Error, Result};
use crate::estimators::{average_groups, denoising_samples, regression_predict, NetDenoiser};
use crate::nets::Network;
use crate::rng;
use crate::sde::{DriftSpec, IncrementPairs};

/// Model-selection criterion evaluated after each epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Drift error against the true drift on held-out states.
    #[default]
    Oracle,
    /// Training objective on held-out increment pairs.
    Feasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: NoiseSchedule,
    pub target_scale: TargetScale,
    pub patience: usize,
    pub validation: ValidationMode,
    pub heldout_paths: usize,
    /// Samples averaged by the `τ = 1` estimator during oracle validation.
    pub val_k: usize,
    /// Validate every this many epochs; epochs in between count towards patience.
    pub validate_every: usize,
    pub lr: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    /// Rows of the fixed batch used for gradient diagnostics.
    pub diagnostic_rows: usize,
    /// Restore the parameters of the selected epoch when training ends.
    pub keep_best: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 256,
            schedule: NoiseSchedule::vp_default(),
            target_scale: TargetScale::InverseDelta,
            patience: 100,
            validation: ValidationMode::Oracle,
            heldout_paths: 50,
            val_k: 10,
            validate_every: 1,
            lr: 1e-2,
            plateau_patience: 60,
            plateau_factor: 0.9,
            min_lr: 1e-3,
            diagnostic_rows: 256,
            keep_best: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.val_k == 0 || self.validate_every == 0 {
            return Err(Error::invalid("epochs, batch_size, val_k and validate_every must be positive"));
        }
        if !(self.lr > 0.0) || !(self.min_lr > 0.0) || self.min_lr > self.lr {
            return Err(Error::invalid("need 0 < min_lr ≤ lr"));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::invalid("plateau_factor must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Held-out data for the validation metric.
#[derive(Clone, Debug)]
pub enum Validation<'a> {
    /// States of held-out trajectories and the drift that generated them.
    Oracle { states: &'a [f64], drift: &'a DriftSpec },
    Feasible { pairs: &'a IncrementPairs },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN on epochs without validation.
    pub val_metric: f64,
    pub lr: f64,
    /// Input-gradient norms; NaN for regression nets.
    pub grad_tau: f64,
    pub grad_x: f64,
    pub grad_y: f64,
    /// `‖m_θ‖/‖D_θ‖`; NaN when the net has no time head.
    pub m_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub selected_epoch: usize,
    pub best_metric: f64,
    pub mode: ValidationMode,
}

impl TrainReport {
    pub fn selected(&self) -> &EpochRecord {
        &self.records[self.selected_epoch - 1]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,train_loss,val_metric,lr,grad_tau,grad_x,grad_y,m_ratio")?;
        let f = |v: f64| if v.is_nan() { String::new() } else { format!("{v:.10e}") };
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                f(r.train_loss),
                f(r.val_metric),
                f(r.lr),
                f(r.grad_tau),
                f(r.grad_x),
                f(r.grad_y),
                f(r.m_ratio)
            )?;
        }
        Ok(())
    }
}

/// Drift of the `τ = 1` estimator (or the regression output) at each row of `ys`.
pub fn validation_drift(net: &Network, cfg: &TrainConfig, delta: f64, ys: &[f64], seed: u64) -> Result<Vec<f64>> {
    if !net.kind().is_denoiser() {
        return regression_predict(net, ys);
    }
    let den = NetDenoiser {
        net,
        scale: cfg.target_scale,
        delta,
    };
    let samples = denoising_samples(&den, &cfg.schedule, delta, cfg.val_k, 1.0, 1, ys, seed)?;
    Ok(average_groups(&samples, cfg.val_k, net.dim()))
}

fn validation_metric(net: &Network, cfg: &TrainConfig, delta: f64, val: &Validation) -> Result<f64> {
    match val {
        Validation::Oracle { states, drift } => {
            let est = validation_drift(net, cfg, delta, states, rng::derive_seed(cfg.seed, 0x7a1))?;
            let truth = drift.eval_rows(states)?;
            let rows = states.len() / net.dim();
            Ok(est.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / rows as f64)
        }
        Validation::Feasible { pairs } => {
            denoising_loss(net, pairs, &cfg.schedule, cfg.target_scale, rng::derive_seed(cfg.seed, 0x7a2))
        }
    }
}

fn diagnostics(net: &Network, batch: &Batch) -> Result<(f64, f64, f64, f64)> {
    if !net.kind().is_denoiser() {
        return Ok((f64::NAN, f64::NAN, f64::NAN, f64::NAN));
    }
    let (gt, gx, gy) = net.input_gradient_norms(&batch.input())?;
    let ratio = if net.heads().m.is_some() {
        net.time_head_ratio(&batch.input())?
    } else {
        f64::NAN
    };
    Ok((gt, gx, gy, ratio))
}

/// Train `net` on `pairs`, keeping the parameters with the best validation metric.
///
/// Stops after `epochs` epochs or once `patience` consecutive epochs bring no
/// strict improvement. On return `net` holds the selected parameters unless
/// `keep_best` is off.
pub fn train(net: &mut Network, pairs: &IncrementPairs, val: &Validation, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    if pairs.dim != net.dim() {
        return Err(Error::shape(format!("data dimension {} but network dimension {}", pairs.dim, net.dim())));
    }
    let mode = match val {
        Validation::Oracle { .. } => ValidationMode::Oracle,
        Validation::Feasible { .. } => ValidationMode::Feasible,
    };
    let denoiser = net.kind().is_denoiser();
    let delta = pairs.delta;
    let mut opt = Adam::new(
        net.params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut plateau = PlateauSchedule::new(cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr);
    let shuffle_seed = rng::derive_seed(cfg.seed, 0x5b1f);
    let noise_seed = rng::derive_seed(cfg.seed, 0x0b5e);
    let diag_batch = {
        let mut r = rng::stream(rng::derive_seed(cfg.seed, 0xd1a6), 0);
        let mut idx: Vec<usize> = (0..pairs.len).collect();
        idx.shuffle(&mut r);
        idx.truncate(cfg.diagnostic_rows.max(1));
        make_batch(pairs, &idx, denoiser, &cfg.schedule, cfg.target_scale, &mut r)?
    };
    let prune_every = net.spec().prune_every;
    let mut order: Vec<usize> = (0..pairs.len).collect();
    let mut records = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params: Option<ParamStore> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let mut r = rng::stream(shuffle_seed, epoch as u64);
        order.shuffle(&mut r);
        let mut noise = rng::stream(noise_seed, epoch as u64);
        let lr = opt.lr();
        let mut total = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = make_batch(pairs, rows, denoiser, &cfg.schedule, cfg.target_scale, &mut noise)?;
            let (loss, grads) = net.loss_and_grads(&batch.input(), &batch.target).map_err(|e| {
                Error::NonFinite(format!("training diverged at epoch {epoch}, batch {b} (lr {lr:.3e}): {e}"))
            })?;
            net.step(&mut opt, &grads)?;
            total += loss * rows.len() as f64;
        }
        let train_loss = total / pairs.len as f64;
        let next = plateau.observe(train_loss, lr);
        opt.set_lr(next);
        if net.has_constraints() && prune_every > 0 && epoch % prune_every == 0 {
            net.prune();
        }
        let validate = epoch == 1 || epoch % cfg.validate_every == 0 || epoch == cfg.epochs;
        let val_metric = if validate {
            validation_metric(net, cfg, delta, val)?
        } else {
            f64::NAN
        };
        let (grad_tau, grad_x, grad_y, m_ratio) = diagnostics(net, &diag_batch)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_metric,
            lr,
            grad_tau,
            grad_x,
            grad_y,
            m_ratio,
        });
        if validate && val_metric < best {
            best = val_metric;
            best_epoch = epoch;
            best_params = Some(net.params().clone());
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    match best_params {
        Some(p) if cfg.keep_best => net.load_params(&p)?,
        Some(_) => {}
        None => return Err(Error::NonFinite("validation metric never finite".into())),
    }
    Ok(TrainReport {
        records,
        selected_epoch: best_epoch,
        best_metric: best,
        mode,
    })
}
