use crate::error::{Error, Result};
use crate::estimators::DriftEstimator;
use crate::sde::{DriftSpec, TrajectoryDataset};
use crate::stats::{mean, quantile, quantile_sorted};

/// States after each step, `Y_{kΔ}` for `k = 1..J`, path-major.
pub fn visited_states(ds: &TrajectoryDataset) -> Vec<f64> {
    let d = ds.dim;
    let mut out = Vec::with_capacity(ds.paths * ds.steps * d);
    for i in 0..ds.paths {
        out.extend_from_slice(&ds.path(i)[d..]);
    }
    out
}

/// `‖μ̃(Y_{kΔ}) − μ(Y_{kΔ})‖²` for every path and `k = 1..J`, laid out `paths × J`.
pub fn squared_errors(est: &dyn DriftEstimator, ds: &TrajectoryDataset, drift: &DriftSpec, seed: u64) -> Result<Vec<f64>> {
    if est.dim() != ds.dim || drift.dim != ds.dim {
        return Err(Error::shape("estimator, drift and data dimensions differ"));
    }
    let states = visited_states(ds);
    let got = est.estimate_rows(&states, seed)?;
    let truth = drift.eval_rows(&states)?;
    let d = ds.dim;
    Ok(got
        .chunks(d)
        .zip(truth.chunks(d))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum())
        .collect())
}

/// `E_{jΔ} = (1/(j𝓘)) Σ_i Σ_{k≤j} e_{ik}` from the `paths × steps` squared errors.
pub fn drift_error(sq: &[f64], paths: usize, j: usize) -> Result<f64> {
    if j == 0 || paths == 0 || !sq.len().is_multiple_of(paths) {
        return Err(Error::invalid("drift error needs j ≥ 1 and a paths × steps layout"));
    }
    let steps = sq.len() / paths;
    if j > steps {
        return Err(Error::invalid(format!("j = {j} exceeds the {steps} observed steps")));
    }
    let total: f64 = (0..paths).map(|i| sq[i * steps..i * steps + j].iter().sum::<f64>()).sum();
    Ok(total / (j * paths) as f64)
}

/// `E_{jΔ}` for every `j` with type-7 quantiles across trajectories of the
/// per-path running mean.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSeries {
    pub delta: f64,
    pub mean: Vec<f64>,
    /// One vector per requested quantile level.
    pub bands: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
}

impl ErrorSeries {
    pub fn new(sq: &[f64], paths: usize, delta: f64, levels: &[f64]) -> Result<Self> {
        if paths == 0 || sq.is_empty() || !sq.len().is_multiple_of(paths) {
            return Err(Error::invalid("error series needs a non-empty paths × steps layout"));
        }
        let steps = sq.len() / paths;
        let mut running = vec![0.0; paths];
        let mut col = vec![0.0; paths];
        let mut mean_series = Vec::with_capacity(steps);
        let mut bands = vec![Vec::with_capacity(steps); levels.len()];
        for j in 0..steps {
            for i in 0..paths {
                running[i] += sq[i * steps + j];
                col[i] = running[i] / (j + 1) as f64;
            }
            mean_series.push(mean(&col));
            col.sort_by(f64::total_cmp);
            for (b, &p) in bands.iter_mut().zip(levels) {
                b.push(quantile_sorted(&col, p));
            }
        }
        Ok(ErrorSeries {
            delta,
            mean: mean_series,
            bands,
            levels: levels.to_vec(),
        })
    }

    pub fn last(&self) -> f64 {
        *self.mean.last().expect("non-empty series")
    }

    /// Value at time `t`, rounded to the nearest step.
    pub fn at_time(&self, t: f64) -> Option<f64> {
        let j = (t / self.delta).round() as usize;
        (j >= 1).then(|| self.mean.get(j - 1).copied()).flatten()
    }
}

/// `|a − b| / b`.
pub fn relative_change(a: f64, b: f64) -> f64 {
    (a - b).abs() / b
}

/// Points along each coordinate axis through the empirical mean: for each
/// `d`, `n` values of `y_d` spanning the 0.5–99.5% quantiles of that
/// coordinate with the other coordinates held at their means. Layout
/// `dim × n × dim`.
pub fn slice_points(states: &[f64], dim: usize, n: usize) -> Result<Vec<f64>> {
    if dim == 0 || states.is_empty() || !states.len().is_multiple_of(dim) || n < 2 {
        return Err(Error::invalid("slices need states and at least two points"));
    }
    let cols: Vec<Vec<f64>> = (0..dim).map(|d| states.iter().skip(d).step_by(dim).copied().collect()).collect();
    let centre: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let mut out = Vec::with_capacity(dim * n * dim);
    for (d, c) in cols.iter().enumerate() {
        let (lo, hi) = (quantile(c, 0.005), quantile(c, 0.995));
        for q in 0..n {
            let mut p = centre.clone();
            p[d] = lo + (hi - lo) * q as f64 / (n - 1) as f64;
            out.extend_from_slice(&p);
        }
    }
    Ok(out)
}
