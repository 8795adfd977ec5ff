use rayon::prelude::*;

use super::SelectionTrace;
use crate::error::{Error, Result};
use crate::estimators::DriftEstimator;
use crate::sde::TrajectoryDataset;

/// Kernel mass beyond `d₀ + CUTOFF·h` is below `exp(−CUTOFF²/2)` of the nearest point's.
const CUTOFF: f64 = 10.0;

/// Nadaraya–Watson drift estimator pooled over i.i.d. trajectories with an
/// isotropic Gaussian kernel `K_h(u) = (2πh^{2D})^{−1/2} exp(−‖u‖²/(2h²))`.
#[derive(Clone, Debug)]
pub struct NwEstimator {
    pub bandwidth: f64,
    /// Density floor `m`; estimates are set to 0 where `f̂ ≤ m/2`.
    pub truncation: f64,
    dim: usize,
    paths: usize,
    steps: usize,
    horizon: f64,
    /// Left states and increments, path-major.
    y: Vec<f64>,
    z: Vec<f64>,
    /// For `D = 1`: row indices sorted by state.
    order: Vec<usize>,
    sorted_y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NwValue {
    pub drift: Vec<f64>,
    /// Density estimate `f̂(y)`.
    pub density: f64,
    pub truncated: bool,
}

impl NwEstimator {
    pub fn fit(ds: &TrajectoryDataset, bandwidth: f64, truncation: f64) -> Result<Self> {
        let d = ds.dim;
        let mut y = Vec::with_capacity(ds.paths * ds.steps * d);
        let mut z = Vec::with_capacity(ds.paths * ds.steps * d);
        for i in 0..ds.paths {
            for j in 0..ds.steps {
                let (a, b) = (ds.state(i, j), ds.state(i, j + 1));
                y.extend_from_slice(a);
                z.extend(b.iter().zip(a).map(|(p, q)| p - q));
            }
        }
        Self::from_pairs(y, z, d, ds.paths, ds.steps, ds.delta, bandwidth, truncation)
    }

    /// From `paths × steps` pairs `(Y, Z)` laid out path-major.
    #[allow(clippy::too_many_arguments)]
    pub fn from_pairs(
        y: Vec<f64>,
        z: Vec<f64>,
        dim: usize,
        paths: usize,
        steps: usize,
        delta: f64,
        bandwidth: f64,
        truncation: f64,
    ) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        if !(truncation >= 0.0) {
            return Err(Error::invalid("truncation floor must be non-negative"));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("Δ must be positive"));
        }
        if paths == 0 || steps == 0 || dim == 0 {
            return Err(Error::invalid("empty dataset"));
        }
        if y.len() != paths * steps * dim || z.len() != y.len() {
            return Err(Error::shape("pair arrays do not match paths × steps × dim"));
        }
        let (order, sorted_y) = if dim == 1 {
            let mut order: Vec<usize> = (0..y.len()).collect();
            order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
            let sorted = order.iter().map(|&r| y[r]).collect();
            (order, sorted)
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(NwEstimator {
            bandwidth,
            truncation,
            dim,
            paths,
            steps,
            horizon: steps as f64 * delta,
            y,
            z,
            order,
            sorted_y,
        })
    }

    /// Same data, different bandwidth.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth must be positive"));
        }
        Ok(NwEstimator { bandwidth, ..self.clone() })
    }

    fn norm_const(&self) -> f64 {
        (2.0 * std::f64::consts::PI * self.bandwidth.powi(2 * self.dim as i32)).powf(-0.5)
    }

    fn sq_dist(&self, row: usize, y: &[f64]) -> f64 {
        let d = self.dim;
        self.y[row * d..(row + 1) * d].iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
    }

    /// Kernel sums relative to the nearest contributing row: `(d₀², Σw, Σw·Z)`
    /// with `w = exp(−(‖Y − y‖² − d₀²)/(2h²))`. `None` if no row contributes.
    fn sums(&self, y: &[f64], skip_path: Option<usize>) -> Option<(f64, f64, Vec<f64>)> {
        let d = self.dim;
        let per_path = self.steps;
        let keep = |row: usize| skip_path.is_none_or(|p| row / per_path != p);
        let two_h2 = 2.0 * self.bandwidth * self.bandwidth;
        let mut sw = 0.0;
        let mut swz = vec![0.0; d];
        if d == 1 {
            let pos = self.sorted_y.partition_point(|&v| v < y[0]);
            let mut near = f64::INFINITY;
            // nearest kept row, scanning outwards
            let (mut lo, mut hi) = (pos, pos);
            loop {
                let below = (lo > 0).then(|| y[0] - self.sorted_y[lo - 1]);
                let above = (hi < self.sorted_y.len()).then(|| self.sorted_y[hi] - y[0]);
                let (dist, row) = match (below, above) {
                    (None, None) => break,
                    (Some(b), Some(a)) if b <= a => {
                        lo -= 1;
                        (b, self.order[lo])
                    }
                    (Some(b), None) => {
                        lo -= 1;
                        (b, self.order[lo])
                    }
                    (_, Some(a)) => {
                        hi += 1;
                        (a, self.order[hi - 1])
                    }
                };
                if keep(row) {
                    near = dist;
                    break;
                }
            }
            if !near.is_finite() {
                return None;
            }
            let reach = near + CUTOFF * self.bandwidth;
            let start = self.sorted_y.partition_point(|&v| v < y[0] - reach);
            let end = self.sorted_y.partition_point(|&v| v <= y[0] + reach);
            let d02 = near * near;
            for k in start..end {
                let row = self.order[k];
                if !keep(row) {
                    continue;
                }
                let w = (-((self.sorted_y[k] - y[0]).powi(2) - d02) / two_h2).exp();
                sw += w;
                swz[0] += w * self.z[row];
            }
            return Some((d02, sw, swz));
        }
        let rows = self.y.len() / d;
        let d02 = (0..rows).filter(|&r| keep(r)).map(|r| self.sq_dist(r, y)).fold(f64::INFINITY, f64::min);
        if !d02.is_finite() {
            return None;
        }
        for r in (0..rows).filter(|&r| keep(r)) {
            let w = (-(self.sq_dist(r, y) - d02) / two_h2).exp();
            sw += w;
            for (acc, zv) in swz.iter_mut().zip(&self.z[r * d..(r + 1) * d]) {
                *acc += w * zv;
            }
        }
        Some((d02, sw, swz))
    }

    fn value(&self, y: &[f64], skip_path: Option<usize>) -> NwValue {
        let used_paths = self.paths - usize::from(skip_path.is_some());
        let zero = || NwValue {
            drift: vec![0.0; self.dim],
            density: 0.0,
            truncated: true,
        };
        let Some((d02, sw, swz)) = self.sums(y, skip_path) else {
            return zero();
        };
        let h2 = self.bandwidth * self.bandwidth;
        let n = (self.steps * used_paths) as f64;
        let density = self.norm_const() * (-d02 / (2.0 * h2)).exp() * sw / n;
        if density <= self.truncation / 2.0 {
            return NwValue { density, ..zero() };
        }
        // b̂ = [(1/I) Σ K·Z] / [T (1/(JI)) Σ K]; the kernel constant cancels
        let scale = self.steps as f64 / self.horizon;
        NwValue {
            drift: swz.iter().map(|v| scale * v / sw).collect(),
            density,
            truncated: false,
        }
    }

    pub fn eval(&self, y: &[f64]) -> Result<NwValue> {
        if y.len() != self.dim {
            return Err(Error::shape(format!("query of length {} for dimension {}", y.len(), self.dim)));
        }
        Ok(self.value(y, None))
    }

    /// Estimate at `y` from all trajectories except `path`.
    pub fn eval_leave_out(&self, y: &[f64], path: usize) -> Result<NwValue> {
        if self.paths < 2 {
            return Err(Error::invalid("leave-one-out needs at least two trajectories"));
        }
        if path >= self.paths || y.len() != self.dim {
            return Err(Error::invalid("path index or query length out of range"));
        }
        Ok(self.value(y, Some(path)))
    }

    /// `CV(h) = Σ_{i,j} [‖b̂⁻⁽ⁱ⁾(Y)‖²Δ − 2⟨b̂⁻⁽ⁱ⁾(Y), Z⟩]` over the fitted pairs.
    pub fn loo_cv(&self) -> Result<f64> {
        if self.paths < 2 {
            return Err(Error::invalid("leave-one-out needs at least two trajectories"));
        }
        let d = self.dim;
        let delta = self.horizon / self.steps as f64;
        let rows = self.y.len() / d;
        let terms: Vec<f64> = (0..rows)
            .into_par_iter()
            .map(|r| {
                let b = self.value(&self.y[r * d..(r + 1) * d], Some(r / self.steps)).drift;
                let z = &self.z[r * d..(r + 1) * d];
                b.iter().zip(z).map(|(bv, zv)| bv * bv * delta - 2.0 * bv * zv).sum()
            })
            .collect();
        Ok(terms.iter().sum())
    }
}

impl DriftEstimator for NwEstimator {
    fn name(&self) -> String {
        "NW".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn estimate_rows(&self, ys: &[f64], _seed: u64) -> Result<Vec<f64>> {
        let d = self.dim;
        if !ys.len().is_multiple_of(d) {
            return Err(Error::shape("query rows do not divide the dimension"));
        }
        Ok(ys.par_chunks(d).flat_map_iter(|y| self.value(y, None).drift).collect())
    }
}

/// Bandwidth minimising the leave-one-trajectory-out criterion; ties keep the first.
pub fn nw_select_bandwidth(ds: &TrajectoryDataset, grid: &[f64], truncation: f64) -> Result<(f64, SelectionTrace)> {
    if grid.is_empty() {
        return Err(Error::invalid("empty bandwidth grid"));
    }
    if ds.paths < 2 {
        return Err(Error::invalid("bandwidth selection needs at least two trajectories"));
    }
    let base = NwEstimator::fit(ds, grid[0], truncation)?;
    let mut trace = SelectionTrace::new("h", "cv");
    for &h in grid {
        trace.push(h, base.with_bandwidth(h)?.loo_cv()?);
    }
    let best = trace.argmin().ok_or_else(|| Error::Numerical("no finite CV value".into()))?;
    Ok((grid[best], trace))
}
