use rayon::prelude::*;

use super::Denoiser;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng;

/// Rows processed together by one worker; fixed so results do not depend on threads.
const CHUNK: usize = 512;

/// Reverse-time Euler–Maruyama from `τ = 1` through the descending `stops`.
///
/// Row `r` draws from stream `(seed, stream0 + r)`, starting from
/// `N(0, prior_std²·I)`. `steps` Euler steps are split over the intervals in
/// proportion to their length, with at least one step per interval. Returns
/// the states at every stop, `stops.len() × rows × D`.
pub fn reverse_path(
    den: &dyn Denoiser,
    schedule: &NoiseSchedule,
    y: &[f64],
    stops: &[f64],
    steps: usize,
    seed: u64,
    stream0: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = den.dim();
    if d == 0 || !y.len().is_multiple_of(d) {
        return Err(Error::shape("conditioning rows do not match the denoiser dimension"));
    }
    if steps == 0 {
        return Err(Error::invalid("need at least one reverse step"));
    }
    let mut prev = 1.0;
    for &t in stops {
        schedule.check_tau(t)?;
        if t > prev {
            return Err(Error::invalid("stops must be in descending order"));
        }
        prev = t;
    }
    let plan = step_plan(stops, steps);
    let rows = y.len() / d;
    let chunks: Vec<Result<Vec<Vec<f64>>>> = (0..rows.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(rows);
            integrate(den, schedule, &y[lo * d..hi * d], stops, &plan, seed, stream0 + lo as u64)
        })
        .collect();
    let mut out = vec![Vec::with_capacity(rows * d); stops.len()];
    for c in chunks {
        for (o, part) in out.iter_mut().zip(c?) {
            o.extend(part);
        }
    }
    Ok(out)
}

/// States at `tau_target` after `steps` uniform reverse steps from `τ = 1`.
pub fn reverse_sample(
    den: &dyn Denoiser,
    schedule: &NoiseSchedule,
    y: &[f64],
    tau_target: f64,
    steps: usize,
    seed: u64,
    stream0: u64,
) -> Result<Vec<f64>> {
    Ok(reverse_path(den, schedule, y, &[tau_target], steps, seed, stream0)?
        .pop()
        .expect("one stop"))
}

fn step_plan(stops: &[f64], steps: usize) -> Vec<usize> {
    let mut prev = 1.0;
    stops
        .iter()
        .map(|&t| {
            let len = prev - t;
            prev = t;
            if len <= 0.0 {
                0
            } else {
                ((len * steps as f64).round() as usize).max(1)
            }
        })
        .collect()
}

fn integrate(
    den: &dyn Denoiser,
    schedule: &NoiseSchedule,
    y: &[f64],
    stops: &[f64],
    plan: &[usize],
    seed: u64,
    stream0: u64,
) -> Result<Vec<Vec<f64>>> {
    let d = den.dim();
    let rows = y.len() / d;
    let mut rngs: Vec<_> = (0..rows).map(|r| rng::stream(seed, stream0 + r as u64)).collect();
    let prior = schedule.prior_std();
    let mut x = vec![0.0; rows * d];
    for (r, g) in rngs.iter_mut().enumerate() {
        rng::fill_normal(g, &mut x[r * d..(r + 1) * d]);
    }
    x.iter_mut().for_each(|v| *v *= prior);
    let mut out = Vec::with_capacity(stops.len());
    let mut tau = 1.0;
    let mut noise = vec![0.0; d];
    for (&stop, &n) in stops.iter().zip(plan) {
        let h = if n > 0 { (tau - stop) / n as f64 } else { 0.0 };
        for _ in 0..n {
            let (alpha, s) = schedule.marginal(tau);
            let s2 = s * s;
            let (c, g2) = schedule.sde_coeffs(tau);
            let dn = den.denoise(tau, &x, y)?;
            let sq = (g2 * h).sqrt();
            for r in 0..rows {
                rng::fill_normal(&mut rngs[r], &mut noise);
                for k in 0..d {
                    let i = r * d + k;
                    let score = (alpha * dn[i] - x[i]) / s2;
                    x[i] = x[i] - (c * x[i] - g2 * score) * h + sq * noise[k];
                }
            }
            tau -= h;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("reverse sampler diverged at τ = {tau:.4}")));
            }
        }
        tau = stop;
        out.push(x.clone());
    }
    Ok(out)
}
