use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

/// Constants turning a denoiser output into a drift estimate, `μ = a·x + b·D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorCoeffs {
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    pub delta: f64,
}

/// `a = −α/s²`, `b = (s² + α²Δ)/(s²Δ)` for the marginal `x_τ = α x_0 + s ξ`.
///
/// For the VP process `α = β_τ` and `s = σ_τ`; the VE process uses `α = 1`,
/// `s = φ_τ`.
pub fn coeffs(tau: f64, delta: f64, schedule: &NoiseSchedule) -> Result<EstimatorCoeffs> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("Δ must be positive"));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("diffusion time {tau} outside [0, 1]")));
    }
    let (alpha, s) = schedule.marginal(tau);
    let s2 = s * s;
    if !(s2 > 0.0) {
        return Err(Error::Numerical(format!(
            "noise level vanishes at τ = {tau}; the coefficients are singular"
        )));
    }
    Ok(EstimatorCoeffs {
        a: -alpha / s2,
        b: (s2 + alpha * alpha * delta) / (s2 * delta),
        tau,
        delta,
    })
}

/// Conditional mean `E[X_0 | x_τ]` when `X_0 ~ N(μΔ, Δ)` under the VP process.
pub fn analytic_em_denoiser(x: &[f64], mu: &[f64], tau: f64, delta: f64, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if !schedule.is_vp() {
        return Err(Error::invalid("the closed-form denoiser is derived for the VP process only"));
    }
    em_posterior_mean(x, mu, tau, delta, schedule)
}

/// Same posterior mean for any schedule with Gaussian marginals.
pub(crate) fn em_posterior_mean(x: &[f64], mu: &[f64], tau: f64, delta: f64, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if x.len() != mu.len() {
        return Err(Error::shape("x and μ differ in length"));
    }
    let (alpha, s) = schedule.marginal(tau);
    let s2 = s * s;
    if !(s2 > 0.0) {
        return Err(Error::Numerical(format!("noise level vanishes at τ = {tau}")));
    }
    let k = s2 * delta / (s2 + alpha * alpha * delta);
    Ok(x.iter().zip(mu).map(|(&xv, &m)| k * (m + alpha * xv / s2)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_at_tau_one() {
        let c = coeffs(1.0, 1.0 / 256.0, &NoiseSchedule::vp_default()).unwrap();
        let beta = (-5f64).exp();
        let s2 = 1.0 - beta * beta;
        assert!((c.a - (-beta / s2)).abs() < 1e-18);
        assert!((c.a - (-6.738_26e-3)).abs() < 1e-8);
        // 1/Δ + β²/σ²
        assert!((c.b - 256.000_045_4).abs() < 1e-7);
    }

    #[test]
    fn large_delta_limit() {
        let s = NoiseSchedule::vp_default();
        let c = coeffs(0.4, 1e6, &s).unwrap();
        let (b, sg) = s.marginal(0.4);
        let limit = b * b / (sg * sg);
        assert!((c.b - limit).abs() < 1e-5 * limit.max(1.0));
    }

    #[test]
    fn singular_at_zero() {
        assert!(coeffs(0.0, 0.01, &NoiseSchedule::vp_default()).is_err());
        let small = coeffs(1e-6, 0.01, &NoiseSchedule::vp_default()).unwrap();
        assert!(small.a.abs() > 1e9);
    }

    #[test]
    fn ve_rejected_by_closed_form() {
        assert!(analytic_em_denoiser(&[0.0], &[0.0], 0.5, 0.01, &NoiseSchedule::ve_matched()).is_err());
        assert_eq!(analytic_em_denoiser(&[0.0], &[0.0], 0.5, 0.01, &NoiseSchedule::vp_default()).unwrap(), vec![0.0]);
    }
}
