use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{coeffs, em_posterior_mean, reverse_path};
use crate::autodiff::{read_params, write_params, Tensor};
use crate::diffusion::{NoiseSchedule, TargetScale};
use crate::error::{Error, Result};
use crate::nets::{ArchSpec, NetInput, Network};
use crate::sde::DriftSpec;

const CHUNK: usize = 512;

/// Conditional mean of the raw increment given `(τ, x_τ, y)`.
pub trait Denoiser: Sync {
    fn dim(&self) -> usize;

    /// Row-wise denoised values for flat `x` and `y` of equal length.
    fn denoise(&self, tau: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>>;
}

/// A trained denoiser network, with its output mapped back to increment units.
pub struct NetDenoiser<'a> {
    pub net: &'a Network,
    pub scale: TargetScale,
    pub delta: f64,
}

impl Denoiser for NetDenoiser<'_> {
    fn dim(&self) -> usize {
        self.net.dim()
    }

    fn denoise(&self, tau: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let rows = y.len() / d;
        let factor = self.scale.output_factor(self.delta);
        let parts: Vec<Result<Vec<f64>>> = (0..rows.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(rows);
                let n = hi - lo;
                let t = Tensor::filled(&[n, 1], tau);
                let xt = Tensor::matrix(n, d, x[lo * d..hi * d].to_vec())?;
                let yt = Tensor::matrix(n, d, y[lo * d..hi * d].to_vec())?;
                let mut out = self.net.predict(&NetInput::denoising(&t, &xt, &yt))?.into_data();
                out.iter_mut().for_each(|v| *v *= factor);
                Ok(out)
            })
            .collect();
        let mut out = Vec::with_capacity(x.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// Exact posterior mean when increments follow `N(μ(y)Δ, Δ)`.
pub struct EmDenoiser {
    pub drift: DriftSpec,
    pub delta: f64,
    pub schedule: NoiseSchedule,
}

impl Denoiser for EmDenoiser {
    fn dim(&self) -> usize {
        self.drift.dim
    }

    fn denoise(&self, tau: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mu = self.drift.eval_rows(y)?;
        em_posterior_mean(x, &mu, tau, self.delta, &self.schedule)
    }
}

/// Posterior mean for a Gaussian clean law `N(mean, var)` in every coordinate, ignoring `y`.
pub struct GaussianDenoiser {
    pub dim: usize,
    pub mean: f64,
    pub var: f64,
    pub schedule: NoiseSchedule,
}

impl Denoiser for GaussianDenoiser {
    fn dim(&self) -> usize {
        self.dim
    }

    fn denoise(&self, tau: f64, x: &[f64], _y: &[f64]) -> Result<Vec<f64>> {
        let (alpha, s) = self.schedule.marginal(tau);
        let gain = alpha * self.var / (alpha * alpha * self.var + s * s);
        Ok(x.iter().map(|&v| self.mean + gain * (v - alpha * self.mean)).collect())
    }
}

/// Common contract of every fitted drift estimator.
pub trait DriftEstimator: Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    /// Estimates at each `dim`-sized row of `ys`; random draws are keyed by `seed`
    /// and the row index, so results do not depend on chunking or threads.
    fn estimate_rows(&self, ys: &[f64], seed: u64) -> Result<Vec<f64>>;

    fn estimate(&self, y: &[f64], seed: u64) -> Result<Vec<f64>> {
        self.estimate_rows(y, seed)
    }
}

/// Settings of the denoising estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoisingConfig {
    pub schedule: NoiseSchedule,
    pub delta: f64,
    /// Number of averaged single-sample estimates.
    pub k: usize,
    /// Diffusion time at which the estimate is formed.
    pub tau_star: f64,
    pub target_scale: TargetScale,
    /// Reverse-SDE steps from `τ = 1` to `τ*` (unused at `τ* = 1`).
    pub steps: usize,
}

impl DenoisingConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        self.schedule.check_tau(self.tau_star)?;
        if !(self.delta > 0.0) {
            return Err(Error::invalid("Δ must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("reverse steps must be positive"));
        }
        Ok(())
    }
}

/// Drift estimator averaging `K` single-sample inversions of a trained denoiser.
#[derive(Clone, Debug)]
pub struct DenoisingEstimator {
    pub net: Network,
    pub config: DenoisingConfig,
}

impl DenoisingEstimator {
    pub fn new(net: Network, config: DenoisingConfig) -> Result<Self> {
        config.validate()?;
        if !net.kind().is_denoiser() {
            return Err(Error::invalid(format!("{} is not a denoiser", net.kind().name())));
        }
        Ok(DenoisingEstimator { net, config })
    }

    pub fn denoiser(&self) -> NetDenoiser<'_> {
        NetDenoiser {
            net: &self.net,
            scale: self.config.target_scale,
            delta: self.config.delta,
        }
    }

    /// `a·x + b·Δ_scale·net(τ, x, y)` for each row.
    pub fn estimate_single(&self, tau: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        single_estimates(&self.denoiser(), &self.config.schedule, self.config.delta, tau, x, y)
    }

    /// All `K` single-sample estimates per row, laid out `rows × K × D`.
    pub fn estimate_samples(&self, ys: &[f64], seed: u64) -> Result<Vec<f64>> {
        let c = &self.config;
        denoising_samples(&self.denoiser(), &c.schedule, c.delta, c.k, c.tau_star, c.steps, ys, seed)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let meta = HandleMeta {
            arch: self.net.spec().clone(),
            estimator: self.config.clone(),
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Format(format!("cannot encode estimator: {e}")))?;
        w.write_all(HANDLE_MAGIC)?;
        w.write_all(&(text.len() as u64).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
        write_params(self.net.params(), w)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| Error::Format("not an estimator file".into()))?;
        if &magic != HANDLE_MAGIC {
            return Err(Error::Format("not an estimator file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| Error::Format("truncated estimator file".into()))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 20 {
            return Err(Error::Format("corrupt estimator header".into()));
        }
        let mut text = vec![0u8; len];
        r.read_exact(&mut text).map_err(|_| Error::Format("truncated estimator file".into()))?;
        let text = String::from_utf8(text).map_err(|_| Error::Format("estimator header is not UTF-8".into()))?;
        let meta: HandleMeta = toml::from_str(&text).map_err(|e| Error::Format(format!("bad estimator header: {e}")))?;
        let mut net = Network::build(&meta.arch)?;
        net.load_params(&read_params(r)?)?;
        DenoisingEstimator::new(net, meta.estimator)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const HANDLE_MAGIC: &[u8; 6] = b"SDEST1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HandleMeta {
    arch: ArchSpec,
    estimator: DenoisingConfig,
}

/// `K` single-sample estimates per row of `ys` at diffusion time `tau`, laid out `rows × K × D`.
///
/// Sample `k` of row `n` draws from stream `(seed, n·K + k)`; at `τ = 1` the draw
/// is the prior sample itself, otherwise it is carried down by `steps` reverse steps.
#[allow(clippy::too_many_arguments)]
pub fn denoising_samples(
    den: &dyn Denoiser,
    schedule: &NoiseSchedule,
    delta: f64,
    k: usize,
    tau: f64,
    steps: usize,
    ys: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let d = den.dim();
    let mut rep = Vec::with_capacity(ys.len() * k);
    for row in ys.chunks(d) {
        for _ in 0..k {
            rep.extend_from_slice(row);
        }
    }
    let x = reverse_path(den, schedule, &rep, &[tau], steps, seed, 0)?.pop().expect("one stop");
    single_estimates(den, schedule, delta, tau, &x, &rep)
}

pub(crate) fn single_estimates(
    den: &dyn Denoiser,
    schedule: &NoiseSchedule,
    delta: f64,
    tau: f64,
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let c = coeffs(tau, delta, schedule)?;
    let dn = den.denoise(tau, x, y)?;
    Ok(x.iter().zip(&dn).map(|(&xv, &dv)| c.a * xv + c.b * dv).collect())
}

/// Average consecutive groups of `k` rows of width `d`.
pub(crate) fn average_groups(samples: &[f64], k: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len() / k);
    for group in samples.chunks(k * d) {
        for j in 0..d {
            let s: f64 = (0..k).map(|i| group[i * d + j]).sum();
            out.push(s / k as f64);
        }
    }
    out
}

impl DriftEstimator for DenoisingEstimator {
    fn name(&self) -> String {
        self.net.kind().name().to_string()
    }

    fn dim(&self) -> usize {
        self.net.dim()
    }

    fn estimate_rows(&self, ys: &[f64], seed: u64) -> Result<Vec<f64>> {
        let samples = self.estimate_samples(ys, seed)?;
        Ok(average_groups(&samples, self.config.k, self.net.dim()))
    }
}

/// Regression network evaluated directly at `y`.
#[derive(Clone, Debug)]
pub struct RegressionEstimator {
    pub net: Network,
}

impl DriftEstimator for RegressionEstimator {
    fn name(&self) -> String {
        self.net.kind().name().to_string()
    }

    fn dim(&self) -> usize {
        self.net.dim()
    }

    fn estimate_rows(&self, ys: &[f64], _seed: u64) -> Result<Vec<f64>> {
        regression_predict(&self.net, ys)
    }
}

/// Direct network output at each row of `ys`, evaluated in fixed chunks.
pub fn regression_predict(net: &Network, ys: &[f64]) -> Result<Vec<f64>> {
    let d = net.dim();
    let rows = ys.len() / d;
    let parts: Vec<Result<Vec<f64>>> = (0..rows.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(rows);
            let y = Tensor::matrix(hi - lo, d, ys[lo * d..hi * d].to_vec())?;
            Ok(net.predict(&NetInput::regression(&y))?.into_data())
        })
        .collect();
    let mut out = Vec::with_capacity(ys.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// The true drift, a zero-error control.
#[derive(Clone, Debug)]
pub struct TrueDrift(pub DriftSpec);

impl DriftEstimator for TrueDrift {
    fn name(&self) -> String {
        "Oracle".into()
    }

    fn dim(&self) -> usize {
        self.0.dim
    }

    fn estimate_rows(&self, ys: &[f64], _seed: u64) -> Result<Vec<f64>> {
        self.0.eval_rows(ys)
    }
}
