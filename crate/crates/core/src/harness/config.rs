use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::TrainConfig;
use crate::error::{Error, Result};
use crate::nets::{ArchKind, ArchSpec};
use crate::sde::{DriftSpec, InitialLaw};

/// Scale of an experiment. `desk` runs on a laptop CPU in minutes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Config(format!("unknown preset `{s}` (expected desk or full)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The true drift; a zero-error control.
    Oracle,
    Dn,
    DnLin,
    Fc,
    FcPlus,
    FcPlusConv,
    FcPlusConvMlpsm,
    Nw,
    Ridge,
    Hermite,
}

impl EstimatorKind {
    pub fn arch(self) -> Option<ArchKind> {
        Some(match self {
            EstimatorKind::Dn => ArchKind::Dn,
            EstimatorKind::DnLin => ArchKind::DnLin,
            EstimatorKind::Fc => ArchKind::Fc,
            EstimatorKind::FcPlus => ArchKind::FcPlus,
            EstimatorKind::FcPlusConv => ArchKind::FcPlusConv,
            EstimatorKind::FcPlusConvMlpsm => ArchKind::FcPlusConvMlpsm,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "Oracle",
            EstimatorKind::Nw => "NW",
            EstimatorKind::Ridge => "Ridge",
            EstimatorKind::Hermite => "Hermite",
            k => k.arch().expect("network kind").name(),
        }
    }

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Dn => "dn",
            EstimatorKind::DnLin => "dn_lin",
            EstimatorKind::Fc => "fc",
            EstimatorKind::FcPlus => "fc_plus",
            EstimatorKind::FcPlusConv => "fc_plus_conv",
            EstimatorKind::FcPlusConvMlpsm => "fc_plus_conv_mlpsm",
            EstimatorKind::Nw => "nw",
            EstimatorKind::Ridge => "ridge",
            EstimatorKind::Hermite => "hermite",
        }
    }

    pub fn one_dimensional(self) -> bool {
        matches!(self, EstimatorKind::Ridge | EstimatorKind::Hermite)
    }
}

/// How baseline hyperparameters are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Grid search on the drift error over held-out states.
    #[default]
    Oracle,
    /// Leave-one-trajectory-out CV for NW, penalised contrast for Hermite.
    /// Ridge has no data-driven criterion and always uses the oracle grid.
    Criterion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub preset: Preset,
    pub seed: u64,
    pub roster: Vec<EstimatorKind>,
    /// Also write the trained estimators (`<slug>.sdest`).
    pub save_models: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: "experiment".into(),
            preset: Preset::Desk,
            seed: 0,
            roster: vec![EstimatorKind::Oracle, EstimatorKind::Dn],
            save_models: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Training paths `I`; preset default when absent.
    pub paths: Option<usize>,
    /// Steps per path `J`.
    pub steps: usize,
    pub delta: f64,
    pub sigma: f64,
    /// Held-out paths for model selection.
    pub heldout_paths: usize,
    pub initial: InitialLaw,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            paths: None,
            steps: 256,
            delta: 1.0 / 256.0,
            sigma: 1.0,
            heldout_paths: 50,
            initial: InitialLaw::Default,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Evaluation paths `𝓘`; preset default when absent.
    pub paths: Option<usize>,
    /// Out-of-sample horizon; preset default when absent.
    pub oos_horizon: Option<f64>,
    /// Quantile levels of the envelope across trajectories.
    pub quantiles: Vec<f64>,
    /// Points per coordinate in the drift-slice output.
    pub slice_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            paths: None,
            oos_horizon: None,
            quantiles: vec![0.1, 0.5, 0.9],
            slice_points: 101,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub k: usize,
    pub tau_star: f64,
    /// Reverse-SDE steps when `tau_star < 1`.
    pub steps: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            k: 100,
            tau_star: 1.0,
            steps: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub selection: Selection,
    pub nw_bandwidths: Vec<f64>,
    pub nw_truncation: f64,
    pub ridge_order: usize,
    pub ridge_knots: Vec<usize>,
    pub ridge_budgets: Vec<f64>,
    pub hermite_m: Vec<usize>,
    pub hermite_kappa: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            selection: Selection::Oracle,
            nw_bandwidths: vec![0.02, 0.03, 0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.5, 0.75, 1.0],
            nw_truncation: 0.0,
            ridge_order: 3,
            ridge_knots: vec![2, 4, 8, 16, 32],
            ridge_budgets: vec![1.0, 10.0, 100.0],
            hermite_m: (1..=20).collect(),
            hermite_kappa: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Number of log-spaced diffusion times in `[ε, 1]`.
    pub taus: usize,
    pub ks: Vec<usize>,
    pub per_axis: usize,
    pub max_points: usize,
    /// Total reverse steps from `τ = 1` to `ε`.
    pub steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            taus: 40,
            ks: vec![1, 10, 100],
            per_axis: 100,
            max_points: 10_000,
            steps: 500,
        }
    }
}

/// Complete experiment description. Every section is optional; unknown keys
/// are errors. `train.seed` and `arch.init_seed` are derived from
/// `experiment.seed` when the config is resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub drift: DriftSpec,
    pub data: DataSection,
    pub eval: EvalSection,
    pub train: TrainConfig,
    /// Network widths; preset widths when absent. `kind` and `dim` are set per roster entry.
    pub arch: Option<ArchSpec>,
    pub estimator: EstimatorSection,
    pub baselines: BaselineSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentSection::default(),
            drift: DriftSpec::mu3(),
            data: DataSection::default(),
            eval: EvalSection::default(),
            train: TrainConfig::default(),
            arch: None,
            estimator: EstimatorSection::default(),
            baselines: BaselineSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

const DESK_EPOCH_CAP: usize = 300;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fill preset defaults, apply overrides, derive seeds and validate.
    pub fn resolve(mut self, seed: Option<u64>, preset: Option<Preset>) -> Result<ResolvedConfig> {
        if let Some(s) = seed {
            self.experiment.seed = s;
        }
        if let Some(p) = preset {
            self.experiment.preset = p;
        }
        let desk = self.experiment.preset == Preset::Desk;
        self.data.paths.get_or_insert(if desk { 200 } else { 1000 });
        self.eval.paths.get_or_insert(if desk { 100 } else { 1000 });
        self.eval.oos_horizon.get_or_insert(if desk { 5.0 } else { 20.0 });
        if desk {
            self.train.epochs = self.train.epochs.min(DESK_EPOCH_CAP);
        }
        self.train.heldout_paths = self.data.heldout_paths;
        self.train.seed = crate::rng::derive_seed(self.experiment.seed, 0x7a17);
        self.validate()?;
        let text = toml::to_string(&self).map_err(|e| Error::Config(e.to_string()))?;
        let digest = Sha256::digest(text.as_bytes());
        let hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Ok(ResolvedConfig { config: self, hash })
    }

    fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Error::Config(m);
        self.drift.validate().map_err(|e| cfg_err(e.to_string()))?;
        self.train.validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.experiment.roster.is_empty() {
            return Err(cfg_err("empty roster".into()));
        }
        for k in &self.experiment.roster {
            if k.one_dimensional() && self.drift.dim != 1 {
                return Err(cfg_err(format!("{} is one-dimensional but the drift has D = {}", k.name(), self.drift.dim)));
            }
        }
        let d = &self.data;
        if d.steps == 0 || !(d.delta > 0.0) || !(d.sigma >= 0.0) || d.paths == Some(0) || d.heldout_paths == 0 {
            return Err(cfg_err("data needs positive paths, steps, Δ and held-out paths".into()));
        }
        let e = &self.eval;
        let horizon = e.oos_horizon.unwrap_or(1.0);
        let ratio = horizon / d.delta;
        if !(horizon > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(cfg_err(format!("OOS horizon {horizon} is not a multiple of Δ")));
        }
        let in_ratio = 1.0 / d.delta;
        if (in_ratio - in_ratio.round()).abs() > 1e-9 * in_ratio {
            return Err(cfg_err("Δ must divide the in-sample horizon 1".into()));
        }
        if horizon < 1.0 {
            return Err(cfg_err("OOS horizon must be at least the in-sample horizon 1".into()));
        }
        if e.paths == Some(0) || e.slice_points < 2 || e.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(cfg_err("eval needs paths, ≥2 slice points and quantiles in [0, 1]".into()));
        }
        if self.estimator.k == 0 || self.estimator.steps == 0 {
            return Err(cfg_err("estimator K and steps must be positive".into()));
        }
        self.train
            .schedule
            .check_tau(self.estimator.tau_star)
            .map_err(|e| cfg_err(e.to_string()))?;
        let b = &self.baselines;
        if b.nw_bandwidths.iter().any(|h| !(*h > 0.0)) || b.ridge_budgets.iter().any(|l| !(*l > 0.0)) {
            return Err(cfg_err("bandwidths and ridge budgets must be positive".into()));
        }
        if let Some(a) = &self.arch {
            a.with_kind(ArchKind::Dn).validate().map_err(|e| cfg_err(e.to_string()))?;
        }
        let s = &self.sweep;
        if s.taus < 2 || s.ks.is_empty() || s.ks.contains(&0) || s.per_axis == 0 || s.max_points == 0 || s.steps == 0 {
            return Err(cfg_err("sweep needs ≥2 τ values, positive K values, points and steps".into()));
        }
        Ok(())
    }
}

/// A validated configuration with every preset default filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    /// First 16 hex digits of the SHA-256 of the resolved TOML.
    pub hash: String,
}

impl ResolvedConfig {
    pub fn seed(&self) -> u64 {
        self.config.experiment.seed
    }

    pub fn training_paths(&self) -> usize {
        self.config.data.paths.expect("resolved")
    }

    pub fn eval_paths(&self) -> usize {
        self.config.eval.paths.expect("resolved")
    }

    pub fn oos_steps(&self) -> usize {
        (self.config.eval.oos_horizon.expect("resolved") / self.config.data.delta).round() as usize
    }

    pub fn in_sample_steps(&self) -> usize {
        (1.0 / self.config.data.delta).round() as usize
    }

    /// Comment line opening every output file.
    pub fn header(&self) -> String {
        format!("# config_hash={} seed={}", self.hash, self.seed())
    }

    /// Architecture of roster entry `kind`.
    pub fn arch(&self, kind: ArchKind) -> ArchSpec {
        let dim = self.config.drift.dim;
        let mut spec = match &self.config.arch {
            Some(a) => ArchSpec { kind, dim, ..a.clone() },
            None if self.config.experiment.preset == Preset::Desk => ArchSpec::desk(kind, dim),
            None => ArchSpec::new(kind, dim),
        };
        spec.init_seed = crate::rng::derive_seed(self.seed(), 0x1a17 ^ kind as u64);
        spec
    }
}
