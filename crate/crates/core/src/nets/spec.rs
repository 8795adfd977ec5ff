use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    /// Denoiser `f(Y) + g(X_τ, Y) + m(g, τ)` with a state-mapper `f`.
    Dn,
    /// As `Dn` with a single linear layer for `f`.
    DnLin,
    /// ReLU regressor on `Y` with pruning and weight clamping.
    Fc,
    /// `Fc` deepened until it has more parameters than `Dn`.
    FcPlus,
    /// Fully connected backbone plus a convolutional module, sized to `Dn`.
    FcPlusConv,
    /// State mapper plus convolutional module.
    FcPlusConvMlpsm,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Dn => "DN",
            ArchKind::DnLin => "DN-Lin",
            ArchKind::Fc => "FC",
            ArchKind::FcPlus => "FC+",
            ArchKind::FcPlusConv => "FC+-Conv",
            ArchKind::FcPlusConvMlpsm => "FC+-Conv-MLPSM",
        }
    }

    /// Denoisers take `(τ, X_τ, Y)`; the rest regress `Z/Δ` on `Y`.
    pub fn is_denoiser(self) -> bool {
        matches!(self, ArchKind::Dn | ArchKind::DnLin)
    }

    pub const ALL: [ArchKind; 6] = [
        ArchKind::Dn,
        ArchKind::DnLin,
        ArchKind::Fc,
        ArchKind::FcPlus,
        ArchKind::FcPlusConv,
        ArchKind::FcPlusConvMlpsm,
    ];
}

/// Architecture hyperparameters. Widths default to the full-size networks;
/// [`ArchSpec::desk`] halves them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub dim: usize,
    /// Hidden width of the state mapper blocks.
    pub mapper_width: usize,
    pub fourier_features: usize,
    pub gate_init: f64,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    /// Must be even: half sines, half cosines.
    pub time_embedding: usize,
    pub time_width: usize,
    pub fc_width: usize,
    pub fc_depth: usize,
    pub clamp: f64,
    pub prune_fraction: f64,
    pub prune_every: usize,
    pub init_seed: u64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            kind: ArchKind::Dn,
            dim: 1,
            mapper_width: 64,
            fourier_features: 8,
            gate_init: 0.1,
            conv_channels: 16,
            conv_kernel: 5,
            time_embedding: 32,
            time_width: 64,
            fc_width: 128,
            fc_depth: 4,
            clamp: 5.0,
            prune_fraction: 0.2,
            prune_every: 50,
            init_seed: 0,
        }
    }
}

impl ArchSpec {
    pub fn new(kind: ArchKind, dim: usize) -> Self {
        ArchSpec {
            kind,
            dim,
            ..ArchSpec::default()
        }
    }

    /// Reduced preset for small datasets: halved widths and no Fourier features,
    /// which fit observation noise when trained on a few hundred paths.
    pub fn desk(kind: ArchKind, dim: usize) -> Self {
        let full = ArchSpec::new(kind, dim);
        ArchSpec {
            fourier_features: 0,
            mapper_width: full.mapper_width / 2,
            conv_channels: full.conv_channels / 2,
            time_embedding: full.time_embedding / 2,
            time_width: full.time_width / 2,
            fc_width: full.fc_width / 2,
            ..full
        }
    }

    pub fn with_kind(&self, kind: ArchKind) -> Self {
        ArchSpec { kind, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("mapper_width", self.mapper_width),
            ("conv_channels", self.conv_channels),
            ("conv_kernel", self.conv_kernel),
            ("time_width", self.time_width),
            ("fc_width", self.fc_width),
            ("fc_depth", self.fc_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.time_embedding == 0 || !self.time_embedding.is_multiple_of(2) {
            return Err(Error::invalid("time_embedding must be a positive even number"));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::invalid("clamp bound must be positive"));
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(Error::invalid("prune_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}
