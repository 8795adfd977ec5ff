use serde::{Deserialize, Serialize};

use super::NoiseSchedule;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::{NetInput, Network};
use crate::rng::{self, StreamRng};
use crate::sde::IncrementPairs;
use rand::Rng;

/// Scale of the denoiser's regression target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetScale {
    /// The increment `X_0` itself.
    Raw,
    /// `Δ⁻¹X_0`.
    #[default]
    InverseDelta,
}

impl TargetScale {
    /// Factor turning network output back into increment units.
    pub fn output_factor(self, delta: f64) -> f64 {
        match self {
            TargetScale::Raw => 1.0,
            TargetScale::InverseDelta => delta,
        }
    }
}

/// Tensors of one training batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub tau: Option<Tensor>,
    pub x: Option<Tensor>,
    pub y: Tensor,
    pub target: Tensor,
}

impl Batch {
    pub fn input(&self) -> NetInput<'_> {
        NetInput {
            tau: self.tau.as_ref(),
            x: self.x.as_ref(),
            y: &self.y,
        }
    }
}

/// Assemble the rows `rows` of `pairs` into a batch.
///
/// Denoisers get `τ ~ U[ε, 1]` and `X_τ = α_τ X_0 + s_τ ξ` with `X_0` the raw
/// increment; the target is `X_0` rescaled by `target_scale`. Regressors get the
/// target `Z/Δ`.
pub fn make_batch(
    pairs: &IncrementPairs,
    rows: &[usize],
    denoiser: bool,
    schedule: &NoiseSchedule,
    scale: TargetScale,
    rng: &mut StreamRng,
) -> Result<Batch> {
    let d = pairs.dim;
    let b = rows.len();
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut y = Vec::with_capacity(b * d);
    let mut target = Vec::with_capacity(b * d);
    let inv = 1.0 / pairs.delta;
    for &r in rows {
        y.extend_from_slice(pairs.y_row(r));
    }
    if !denoiser {
        for &r in rows {
            target.extend(pairs.z_row(r).iter().map(|z| z * inv));
        }
        return Ok(Batch {
            tau: None,
            x: None,
            y: Tensor::matrix(b, d, y)?,
            target: Tensor::matrix(b, d, target)?,
        });
    }
    let eps = schedule.eps();
    let t_scale = match scale {
        TargetScale::Raw => 1.0,
        TargetScale::InverseDelta => inv,
    };
    let mut tau = Vec::with_capacity(b);
    let mut x = Vec::with_capacity(b * d);
    for &r in rows {
        let t = eps + (1.0 - eps) * rng.random::<f64>();
        let (alpha, s) = schedule.marginal(t);
        tau.push(t);
        for &z in pairs.z_row(r) {
            x.push(alpha * z + s * rng::normal(rng));
            target.push(z * t_scale);
        }
    }
    Ok(Batch {
        tau: Some(Tensor::matrix(b, 1, tau)?),
        x: Some(Tensor::matrix(b, d, x)?),
        y: Tensor::matrix(b, d, y)?,
        target: Tensor::matrix(b, d, target)?,
    })
}

/// Mean over all pairs of the training loss, with draws keyed by `seed`.
pub fn denoising_loss(
    net: &Network,
    pairs: &IncrementPairs,
    schedule: &NoiseSchedule,
    scale: TargetScale,
    seed: u64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to evaluate"));
    }
    let chunk = 2048;
    let mut total = 0.0;
    for (c, start) in (0..pairs.len).step_by(chunk).enumerate() {
        let rows: Vec<usize> = (start..(start + chunk).min(pairs.len)).collect();
        let mut r = rng::stream(seed, c as u64);
        let batch = make_batch(pairs, &rows, net.kind().is_denoiser(), schedule, scale, &mut r)?;
        total += net.loss(&batch.input(), &batch.target)? * rows.len() as f64;
    }
    Ok(total / pairs.len as f64)
}
