//! Drift estimators built on a trained conditional denoiser.

mod coeffs;
mod estimator;
mod sampler;
mod sweep;

pub use coeffs::{analytic_em_denoiser, coeffs, EstimatorCoeffs};
pub(crate) use coeffs::em_posterior_mean;
pub use estimator::{
    denoising_samples, Denoiser, DenoisingConfig, DenoisingEstimator, DriftEstimator, EmDenoiser, GaussianDenoiser, NetDenoiser,
    regression_predict, RegressionEstimator, TrueDrift,
};
pub(crate) use estimator::{average_groups, single_estimates};
pub use sampler::{reverse_path, reverse_sample};
pub use sweep::{eval_points, log_tau_grid, spread, tau_sweep, write_sweep_csv, SweepRow};

use crate::stats::quantile_sorted;

/// Per-row `(lo, hi)` quantiles of `rows × K × D` single-sample estimates, laid out `rows × D`.
pub fn quantile_envelope(samples: &[f64], k: usize, d: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mut qlo = Vec::with_capacity(samples.len() / k);
    let mut qhi = Vec::with_capacity(samples.len() / k);
    let mut col = vec![0.0; k];
    for group in samples.chunks(k * d) {
        for j in 0..d {
            for i in 0..k {
                col[i] = group[i * d + j];
            }
            col.sort_by(f64::total_cmp);
            qlo.push(quantile_sorted(&col, lo));
            qhi.push(quantile_sorted(&col, hi));
        }
    }
    (qlo, qhi)
}
