use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::DriftEstimator;
use crate::sde::TrajectoryDataset;
use crate::stats::quantile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeConfig {
    /// Spline degree `M`.
    pub order: usize,
    /// Interior knot count `K_I`.
    pub knots: usize,
    /// Per-coefficient norm budget `L_I`.
    pub budget: f64,
    /// Half-width `B_I` of the domain; `None` uses the symmetrised 0.5–99.5%
    /// quantiles of the observed states.
    pub bound: Option<f64>,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            order: 3,
            knots: 8,
            budget: 10.0,
            bound: None,
        }
    }
}

/// B-spline least-squares drift estimator on `[−B_I, B_I]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeEstimator {
    pub order: usize,
    pub knots: usize,
    pub bound: f64,
    pub budget: f64,
    pub coef: Vec<f64>,
    pub lambda: f64,
}

/// Knots `u_{−M}, …, u_{K+M}`: `M + 1` copies of each end point and `K − 1`
/// uniform interior points.
fn knot_vector(order: usize, knots: usize, a: f64, b: f64) -> Vec<f64> {
    let m = order as isize;
    let k = knots as isize;
    (-m..=k + m)
        .map(|s| {
            if s <= 0 {
                a
            } else if s <= k {
                a + s as f64 / knots as f64 * (b - a)
            } else {
                b
            }
        })
        .collect()
}

/// Values of the `K_I + M` basis functions `B_{s,M,u}(y)`, `s = −M..K_I−1`.
/// `y` must lie in `[a, b]`.
pub fn bspline_basis(order: usize, knots: usize, a: f64, b: f64, y: f64) -> Result<Vec<f64>> {
    if knots == 0 || !(a < b) {
        return Err(Error::invalid("need at least one interval and a < b"));
    }
    if !(a..=b).contains(&y) {
        return Err(Error::invalid(format!("{y} outside the spline domain [{a}, {b}]")));
    }
    let t = knot_vector(order, knots, a, b);
    let p = order;
    let n = knots + order;
    // span l with t[l] ≤ y < t[l+1]; the right end point uses the last span
    let mut l = p;
    while l + 1 < n && t[l + 1] <= y {
        l += 1;
    }
    let mut nz = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    nz[0] = 1.0;
    for j in 1..=p {
        left[j] = y - t[l + 1 - j];
        right[j] = t[l + j] - y;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = nz[r] / (right[r + 1] + left[j - r]);
            nz[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        nz[j] = saved;
    }
    let mut out = vec![0.0; n];
    for (r, v) in nz.into_iter().enumerate() {
        out[l - p + r] = v;
    }
    Ok(out)
}

fn symmetric_bound(ds: &TrajectoryDataset) -> f64 {
    let left = ds.left_states();
    quantile(&left, 0.005).abs().max(quantile(&left, 0.995).abs())
}

/// `‖(Λ + λ)⁻¹c‖²` in the eigenbasis of `BᵀB`.
/// Coordinates of `â(λ)` in the eigenbasis; at `λ = 0` directions with a
/// (numerically) zero eigenvalue are dropped, giving the minimum-norm fit.
fn coef_coords(eig: &[f64], c: &[f64], lambda: f64, floor: f64) -> Vec<f64> {
    eig.iter()
        .zip(c)
        .map(|(&e, &v)| if lambda == 0.0 && e <= floor { 0.0 } else { v / (e + lambda) })
        .collect()
}

fn coef_norm2(eig: &[f64], c: &[f64], lambda: f64, floor: f64) -> f64 {
    coef_coords(eig, c, lambda, floor).iter().map(|v| v * v).sum()
}

/// Least-squares fit of `Z/Δ` on the spline basis, with a ridge penalty whose
/// weight is chosen so that `‖â‖² = (K_I + M)·L_I` when the minimum-norm
/// least-squares fit exceeds that budget.
pub fn ridge_fit(ds: &TrajectoryDataset, cfg: &RidgeConfig) -> Result<RidgeEstimator> {
    if ds.dim != 1 {
        return Err(Error::invalid("the ridge estimator is one-dimensional"));
    }
    if cfg.knots == 0 || !(cfg.budget > 0.0) {
        return Err(Error::invalid("knots and budget must be positive"));
    }
    if ds.paths == 0 || ds.steps == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    let bound = cfg.bound.unwrap_or_else(|| symmetric_bound(ds));
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid("spline domain half-width must be positive"));
    }
    let n = cfg.knots + cfg.order;
    let mut btb = DMatrix::<f64>::zeros(n, n);
    let mut btz = DVector::<f64>::zeros(n);
    for i in 0..ds.paths {
        for j in 0..ds.steps {
            let y = ds.state(i, j)[0];
            if !(-bound..=bound).contains(&y) {
                continue;
            }
            let z = (ds.state(i, j + 1)[0] - y) / ds.delta;
            let row = bspline_basis(cfg.order, cfg.knots, -bound, bound, y)?;
            for (u, &bu) in row.iter().enumerate() {
                if bu == 0.0 {
                    continue;
                }
                btz[u] += bu * z;
                for (v, &bv) in row.iter().enumerate() {
                    btb[(u, v)] += bu * bv;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(btb);
    let evals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let c: Vec<f64> = (eig.eigenvectors.transpose() * &btz).iter().copied().collect();
    let target = n as f64 * cfg.budget;
    let emax = evals.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-12 * emax;
    let lambda = if coef_norm2(&evals, &c, 0.0, floor) <= target {
        0.0
    } else {
        // ‖â(λ)‖² decreases strictly in λ (unless BᵀZ = 0)
        let mut hi = emax.max(1e-12);
        while coef_norm2(&evals, &c, hi, floor) > target {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numerical("ridge bracket overflow".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if coef_norm2(&evals, &c, mid, floor) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        hi
    };
    let scaled = DVector::from_vec(coef_coords(&evals, &c, lambda, floor));
    let coef = (&eig.eigenvectors * scaled).iter().copied().collect();
    Ok(RidgeEstimator {
        order: cfg.order,
        knots: cfg.knots,
        bound,
        budget: cfg.budget,
        coef,
        lambda,
    })
}

impl RidgeEstimator {
    /// `Σ_s â_s B_{s,M,u}(y)`; an error outside `[−B_I, B_I]`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        let row = bspline_basis(self.order, self.knots, -self.bound, self.bound, y)?;
        Ok(row.iter().zip(&self.coef).map(|(b, a)| b * a).sum())
    }

    pub fn coef_norm2(&self) -> f64 {
        self.coef.iter().map(|a| a * a).sum()
    }
}

impl DriftEstimator for RidgeEstimator {
    fn name(&self) -> String {
        "Ridge".into()
    }

    fn dim(&self) -> usize {
        1
    }

    /// States outside the fitted domain are clamped to its boundary.
    fn estimate_rows(&self, ys: &[f64], _seed: u64) -> Result<Vec<f64>> {
        ys.iter().map(|&y| self.eval(y.clamp(-self.bound, self.bound))).collect()
    }
}
