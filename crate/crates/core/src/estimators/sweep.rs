use std::io::Write;

use rand::Rng;

use super::{average_groups, reverse_path, single_estimates, Denoiser};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::quantile_sorted;

/// One point of the error curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub k: usize,
    pub e2: f64,
}

/// `n` log-spaced diffusion times from `eps` to 1, ascending.
pub fn log_tau_grid(eps: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let (lo, hi) = (eps.ln(), 0.0f64);
    let mut g: Vec<f64> = (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect();
    g[0] = eps;
    g[n - 1] = 1.0;
    g
}

/// Evaluation points over the 0.5%–99.5% quantile box of `states`.
///
/// A full grid of `per_axis` points per coordinate is used when it has at most
/// `max_points` entries; otherwise `max_points` uniform draws from the box.
pub fn eval_points(states: &[f64], dim: usize, per_axis: usize, max_points: usize, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) {
        return Err(Error::shape("states do not form rows of the given dimension"));
    }
    if per_axis < 2 {
        return Err(Error::invalid("need at least two points per axis"));
    }
    let mut lo = vec![0.0; dim];
    let mut hi = vec![0.0; dim];
    for k in 0..dim {
        let mut col: Vec<f64> = states.iter().skip(k).step_by(dim).copied().collect();
        col.sort_by(f64::total_cmp);
        lo[k] = quantile_sorted(&col, 0.005);
        hi[k] = quantile_sorted(&col, 0.995);
    }
    let full = (per_axis as f64).powi(dim as i32);
    let mut out = Vec::new();
    if full <= max_points as f64 {
        let n = per_axis.pow(dim as u32);
        for idx in 0..n {
            let mut rem = idx;
            for k in 0..dim {
                let i = rem % per_axis;
                rem /= per_axis;
                out.push(lo[k] + (hi[k] - lo[k]) * i as f64 / (per_axis - 1) as f64);
            }
        }
    } else {
        let mut r = rng::stream(seed, 0xe7a1);
        for _ in 0..max_points {
            for k in 0..dim {
                out.push(lo[k] + (hi[k] - lo[k]) * r.random::<f64>());
            }
        }
    }
    Ok(out)
}

/// `e²(τ) = N⁻¹ Σ ‖μ(y_n) − μ̄_K(τ, y_n)‖²` for every `τ` in `taus` and `K` in `ks`.
///
/// One reverse trajectory per `(n, k)` with `k < max K` runs through all grid
/// times, so the estimates for smaller `K` average the first `K` of the same
/// draws. Rows are sorted by `τ`, then `K`.
#[allow(clippy::too_many_arguments)]
pub fn tau_sweep(
    den: &dyn Denoiser,
    schedule: &NoiseSchedule,
    delta: f64,
    ys: &[f64],
    truth: &[f64],
    taus: &[f64],
    ks: &[usize],
    steps: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let d = den.dim();
    if ys.len() != truth.len() || !ys.len().is_multiple_of(d) || ys.is_empty() {
        return Err(Error::shape("evaluation points and true drift differ in shape"));
    }
    if ks.is_empty() || ks.contains(&0) || taus.is_empty() {
        return Err(Error::invalid("need at least one τ and positive K values"));
    }
    let kmax = *ks.iter().max().unwrap();
    let n = ys.len() / d;
    let mut rep = Vec::with_capacity(ys.len() * kmax);
    for row in ys.chunks(d) {
        for _ in 0..kmax {
            rep.extend_from_slice(row);
        }
    }
    let mut stops = taus.to_vec();
    stops.sort_by(|a, b| b.total_cmp(a));
    stops.dedup();
    let states = reverse_path(den, schedule, &rep, &stops, steps, seed, 0)?;
    let mut out = Vec::new();
    for (tau, x) in stops.iter().zip(&states) {
        let single = single_estimates(den, schedule, delta, *tau, x, &rep)?;
        for &k in ks {
            let mut sub = Vec::with_capacity(n * k * d);
            for i in 0..n {
                let base = i * kmax * d;
                sub.extend_from_slice(&single[base..base + k * d]);
            }
            let avg = average_groups(&sub, k, d);
            let e2 = avg.iter().zip(truth).map(|(a, t)| (a - t).powi(2)).sum::<f64>() / n as f64;
            out.push(SweepRow { tau: *tau, k, e2 });
        }
    }
    out.sort_by(|a, b| a.tau.total_cmp(&b.tau).then(a.k.cmp(&b.k)));
    Ok(out)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "tau,K,e2")?;
    for r in rows {
        writeln!(w, "{:.10e},{},{:.10e}", r.tau, r.k, r.e2)?;
    }
    Ok(())
}

/// `max/min` of `e²` over rows with `τ ∈ [lo, hi]` and the given `K`.
pub fn spread(rows: &[SweepRow], k: usize, lo: f64, hi: f64) -> Option<f64> {
    let vals: Vec<f64> = rows.iter().filter(|r| r.k == k && r.tau >= lo && r.tau <= hi).map(|r| r.e2).collect();
    if vals.is_empty() {
        return None;
    }
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(max / min)
}
