use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SelectionTrace;
use crate::error::{Error, Result};
use crate::estimators::DriftEstimator;
use crate::sde::TrajectoryDataset;

/// Orthonormal Hermite functions `h_0..h_{m−1}` at `y`,
/// `h_k(y) = (2^k k! √π)^{−1/2} H_k(y) e^{−y²/2}`, by the stable three-term recurrence.
pub fn hermite_functions(m: usize, y: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(m);
    if m == 0 {
        return h;
    }
    h.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * y * y).exp());
    if m > 1 {
        h.push(std::f64::consts::SQRT_2 * y * h[0]);
    }
    for k in 1..m.saturating_sub(1) {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * y * h[k] - (kf / (kf + 1.0)).sqrt() * h[k - 1];
        h.push(next);
    }
    h
}

/// Least-squares projection of the drift on `span{h_0..h_{m−1}}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermiteEstimator {
    pub m: usize,
    pub theta: Vec<f64>,
    /// `Φ̂_m`, row-major `m × m`.
    pub gram: Vec<f64>,
    /// `Ẑ_m`.
    pub moments: Vec<f64>,
    /// `I·T` of the fitted data.
    pub exposure: f64,
    pub sigma: f64,
}

/// Gram matrix and moments from left-endpoint Riemann sums on the observation grid.
fn gram_and_moments(ds: &TrajectoryDataset, m: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut mom = DVector::<f64>::zeros(m);
    for i in 0..ds.paths {
        for j in 0..ds.steps {
            let y = ds.state(i, j)[0];
            let dy = ds.state(i, j + 1)[0] - y;
            let h = hermite_functions(m, y);
            for u in 0..m {
                mom[u] += h[u] * dy;
                for v in 0..m {
                    gram[(u, v)] += h[u] * h[v] * ds.delta;
                }
            }
        }
    }
    let scale = 1.0 / (ds.paths as f64 * ds.horizon());
    (gram * scale, mom * scale)
}

pub fn hermite_fit(ds: &TrajectoryDataset, m: usize) -> Result<HermiteEstimator> {
    if ds.dim != 1 {
        return Err(Error::invalid("the Hermite estimator is one-dimensional"));
    }
    if m == 0 {
        return Err(Error::invalid("need at least one basis function"));
    }
    if ds.paths == 0 || ds.steps == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    let (gram, mom) = gram_and_moments(ds, m);
    let eig = SymmetricEigen::new(gram.clone());
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e)));
    if !(lo > 0.0) || hi / lo > 1e12 {
        return Err(Error::Numerical(format!(
            "Gram matrix of {m} Hermite functions is numerically singular; use fewer basis functions"
        )));
    }
    let theta = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Gram matrix is not positive definite".into()))?
        .solve(&mom);
    Ok(HermiteEstimator {
        m,
        theta: theta.iter().copied().collect(),
        gram: gram.transpose().iter().copied().collect(),
        moments: mom.iter().copied().collect(),
        exposure: ds.paths as f64 * ds.horizon(),
        sigma: ds.sigma,
    })
}

/// Largest singular value by power iteration on `AᵀA`.
fn op_norm(a: &DMatrix<f64>) -> f64 {
    let ata = a.transpose() * a;
    let mut v = DVector::<f64>::from_element(a.ncols(), 1.0 / (a.ncols() as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..50 {
        let w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        let done = (norm - est).abs() <= 1e-8 * norm;
        est = norm;
        if done {
            break;
        }
    }
    est.sqrt()
}

impl HermiteEstimator {
    fn gram_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &self.gram)
    }

    pub fn eval(&self, y: f64) -> f64 {
        hermite_functions(self.m, y).iter().zip(&self.theta).map(|(h, t)| h * t).sum()
    }

    /// Empirical norm `‖b̂_m‖²_I = θ̂ᵀΦ̂θ̂`.
    pub fn empirical_norm2(&self) -> f64 {
        let t = DVector::from_column_slice(&self.theta);
        (t.transpose() * self.gram_matrix() * &t)[(0, 0)]
    }

    /// `‖Φ̂⁻¹Φ̂_{σ²}‖_op · m/(IT)`; with constant `σ`, `Φ̂_{σ²} = σ²Φ̂`.
    pub fn penalty(&self) -> Result<f64> {
        let g = self.gram_matrix();
        let inv = g.clone().try_inverse().ok_or_else(|| Error::Numerical("singular Gram matrix".into()))?;
        let weighted = g * (self.sigma * self.sigma);
        Ok(op_norm(&(inv * weighted)) * self.m as f64 / self.exposure)
    }

    /// `m ≤ 10` and `m‖Φ̂⁻¹‖_op^{1/4} ≤ IT`.
    pub fn admissible(&self) -> Result<bool> {
        let inv = self
            .gram_matrix()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular Gram matrix".into()))?;
        Ok(self.m <= 10 && self.m as f64 * op_norm(&inv).powf(0.25) <= self.exposure)
    }
}

impl DriftEstimator for HermiteEstimator {
    fn name(&self) -> String {
        "Hermite".into()
    }

    fn dim(&self) -> usize {
        1
    }

    fn estimate_rows(&self, ys: &[f64], _seed: u64) -> Result<Vec<f64>> {
        Ok(ys.iter().map(|&y| self.eval(y)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct HermiteSelection {
    pub estimator: HermiteEstimator,
    pub trace: SelectionTrace,
}

/// Penalised contrast `−‖b̂_m‖²_I + κ·pen(m)` minimised over the admissible candidates.
pub fn hermite_select_m(ds: &TrajectoryDataset, candidates: &[usize], kappa: f64) -> Result<HermiteSelection> {
    if candidates.is_empty() {
        return Err(Error::invalid("empty candidate set"));
    }
    let mut trace = SelectionTrace::new("m", "contrast");
    let mut best: Option<(HermiteEstimator, f64)> = None;
    for &m in candidates {
        let score = match hermite_fit(ds, m) {
            Ok(est) if est.admissible()? => {
                let s = -est.empirical_norm2() + kappa * est.penalty()?;
                if best.as_ref().is_none_or(|b| s < b.1) {
                    best = Some((est, s));
                }
                s
            }
            _ => f64::INFINITY,
        };
        trace.push(m, score);
    }
    let (estimator, _) = best.ok_or_else(|| Error::invalid("no admissible basis size among the candidates"))?;
    Ok(HermiteSelection { estimator, trace })
}
