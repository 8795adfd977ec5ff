use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Forward noising process `x_τ = α_τ·x_0 + s_τ·ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSchedule {
    /// Variance preserving: `α = β_τ`, `s = σ_τ`.
    Vp { gamma0: f64, gamma1: f64, eps: f64 },
    /// Variance exploding: `α = 1`, `s = φ_τ`.
    Ve { phi0: f64, phi1: f64, eps: f64 },
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::vp_default()
    }
}

/// `(β_τ, σ_τ)` of the VP process.
pub fn vp_coeffs(tau: f64, gamma0: f64, gamma1: f64) -> (f64, f64) {
    let log_beta = -0.25 * tau * tau * (gamma1 - gamma0) - 0.5 * tau * gamma0;
    let beta = log_beta.exp();
    // 1 − β² computed without cancellation near τ = 0
    let sigma2 = -(2.0 * log_beta).exp_m1();
    (beta, sigma2.max(0.0).sqrt())
}

/// `φ_τ = φ₀(φ₁/φ₀)^τ`.
pub fn ve_sigma(tau: f64, phi0: f64, phi1: f64) -> f64 {
    phi0 * (phi1 / phi0).powf(tau)
}

impl NoiseSchedule {
    pub fn vp_default() -> Self {
        NoiseSchedule::Vp {
            gamma0: 0.0,
            gamma1: 20.0,
            eps: 1e-3,
        }
    }

    pub fn ve_matched() -> Self {
        NoiseSchedule::Ve {
            phi0: 0.03,
            phi1: 1.0,
            eps: 6.5e-2,
        }
    }

    pub fn ve_larger() -> Self {
        NoiseSchedule::Ve {
            phi0: 0.03,
            phi1: 15.0,
            eps: 5e-2,
        }
    }

    pub fn eps(&self) -> f64 {
        match *self {
            NoiseSchedule::Vp { eps, .. } | NoiseSchedule::Ve { eps, .. } => eps,
        }
    }

    pub fn is_vp(&self) -> bool {
        matches!(self, NoiseSchedule::Vp { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSchedule::Vp { gamma0, gamma1, eps } => {
                if !(gamma0 >= 0.0 && gamma1 >= gamma0 && gamma1 > 0.0) {
                    return Err(Error::invalid(format!(
                        "VP schedule needs 0 <= gamma0 <= gamma1 and gamma1 > 0, got ({gamma0}, {gamma1})"
                    )));
                }
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::invalid("eps must lie in (0, 1)"));
                }
            }
            NoiseSchedule::Ve { phi0, phi1, eps } => {
                if !(phi0 > 0.0 && phi1 > phi0) {
                    return Err(Error::invalid(format!(
                        "VE schedule needs 0 < phi0 < phi1, got ({phi0}, {phi1})"
                    )));
                }
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(Error::invalid("eps must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// `(α_τ, s_τ)`: mean coefficient and standard deviation of `x_τ | x_0`.
    pub fn marginal(&self, tau: f64) -> (f64, f64) {
        match *self {
            NoiseSchedule::Vp { gamma0, gamma1, .. } => vp_coeffs(tau, gamma0, gamma1),
            NoiseSchedule::Ve { phi0, phi1, .. } => (1.0, ve_sigma(tau, phi0, phi1)),
        }
    }

    /// Drift coefficient `f(x, τ) = c_τ·x` and squared diffusion `g²(τ)` of the forward SDE.
    pub fn sde_coeffs(&self, tau: f64) -> (f64, f64) {
        match *self {
            NoiseSchedule::Vp { gamma0, gamma1, .. } => {
                let gamma = gamma0 + tau * (gamma1 - gamma0);
                (-0.5 * gamma, gamma)
            }
            NoiseSchedule::Ve { phi0, phi1, .. } => {
                let phi = ve_sigma(tau, phi0, phi1);
                (0.0, 2.0 * phi * phi * (phi1 / phi0).ln())
            }
        }
    }

    /// Standard deviation of the reference draw at `τ = 1`.
    pub fn prior_std(&self) -> f64 {
        match *self {
            NoiseSchedule::Vp { .. } => 1.0,
            NoiseSchedule::Ve { phi0, phi1, .. } => ve_sigma(1.0, phi0, phi1),
        }
    }

    pub fn check_tau(&self, tau: f64) -> Result<()> {
        if !(tau >= self.eps() && tau <= 1.0) {
            return Err(Error::invalid(format!(
                "diffusion time {tau} outside [{}, 1]",
                self.eps()
            )));
        }
        Ok(())
    }

    /// Draw `x_τ` given `x_0`.
    pub fn forward_sample(&self, x0: &[f64], tau: f64, rng: &mut rng::StreamRng) -> Result<Vec<f64>> {
        self.check_tau(tau)?;
        let (alpha, s) = self.marginal(tau);
        Ok(x0.iter().map(|&v| alpha * v + s * rng::normal(rng)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vp_closed_form_values() {
        assert_eq!(vp_coeffs(0.0, 0.0, 20.0), (1.0, 0.0));
        let (b, s) = vp_coeffs(0.5, 0.0, 20.0);
        assert!((b - (-1.25f64).exp()).abs() < 1e-15);
        assert!((b - 0.286_504_8).abs() < 1e-7);
        assert!((s * s - 0.917_915_0).abs() < 1e-7);
        let (b1, _) = vp_coeffs(1.0, 0.0, 20.0);
        assert!((b1 - 6.737_95e-3).abs() < 1e-8);
    }

    #[test]
    fn ve_values() {
        assert_eq!(ve_sigma(0.0, 0.03, 15.0), 0.03);
        assert!((ve_sigma(1.0, 0.03, 1.0) - 1.0).abs() < 1e-15);
        assert!((ve_sigma(1.0, 0.03, 15.0) - 15.0).abs() < 1e-12);
        assert!((ve_sigma(0.5, 0.03, 15.0) - 0.45f64.sqrt()).abs() < 1e-12);
        assert!((ve_sigma(0.5, 0.03, 15.0) - 0.670_82).abs() < 1e-5);
    }

    #[test]
    fn sde_coefficients_match_marginals() {
        // d/dτ log α = c_τ and d/dτ s² = g² + 2 c_τ s²
        for sched in [NoiseSchedule::vp_default(), NoiseSchedule::Vp { gamma0: 0.1, gamma1: 5.0, eps: 1e-3 }, NoiseSchedule::ve_larger()] {
            for &t in &[0.2, 0.5, 0.9] {
                let h = 1e-6;
                let (a1, s1) = sched.marginal(t + h);
                let (a0, s0) = sched.marginal(t - h);
                let (c, g2) = sched.sde_coeffs(t);
                let dlog = (a1.ln() - a0.ln()) / (2.0 * h);
                assert!((dlog - c).abs() < 1e-6);
                let (_, s) = sched.marginal(t);
                let ds2 = (s1 * s1 - s0 * s0) / (2.0 * h);
                assert!((ds2 - (g2 + 2.0 * c * s * s)).abs() < 1e-5 * (1.0 + g2));
            }
        }
    }

    #[test]
    fn forward_sample_guards_eps() {
        let mut r = rng::stream(0, 0);
        let s = NoiseSchedule::vp_default();
        assert!(s.forward_sample(&[1.0], 1e-4, &mut r).is_err());
        assert!(s.forward_sample(&[1.0], 0.5, &mut r).is_ok());
    }

    #[test]
    fn forward_sample_is_reproducible() {
        let s = NoiseSchedule::vp_default();
        let a = s.forward_sample(&[0.3, -1.0], 0.4, &mut rng::stream(5, 1)).unwrap();
        let b = s.forward_sample(&[0.3, -1.0], 0.4, &mut rng::stream(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_sample_variance() {
        let s = NoiseSchedule::vp_default();
        let tau = 0.3;
        let (_, sig) = s.marginal(tau);
        let mut r = rng::stream(42, 0);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| s.forward_sample(&[0.0], tau, &mut r).unwrap()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / (sig * sig) - 1.0).abs() < 0.05);
    }

    #[test]
    fn validation() {
        assert!(NoiseSchedule::Vp { gamma0: 2.0, gamma1: 1.0, eps: 1e-3 }.validate().is_err());
        assert!(NoiseSchedule::Ve { phi0: 1.0, phi1: 0.5, eps: 1e-3 }.validate().is_err());
        assert!(NoiseSchedule::ve_matched().validate().is_ok());
    }
}
