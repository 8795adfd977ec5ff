//! Denoiser and regression architectures.

mod build;
mod check;
mod network;
mod spec;

pub use check::{gradient_check, randomize_params};
pub use network::{HeadValues, Heads, NetInput, Network};
pub use spec::{ArchKind, ArchSpec};

/// Scalar parameter count of `spec` without building the graph.
pub fn expected_param_count(spec: &ArchSpec) -> crate::Result<usize> {
    build::expected_count(spec)
}

/// `(depth, width)` of the fully connected backbone used by `kind`.
pub fn backbone_shape(spec: &ArchSpec) -> crate::Result<Option<(usize, usize)>> {
    Ok(match spec.kind {
        ArchKind::Fc => Some((spec.fc_depth, spec.fc_width)),
        ArchKind::FcPlus => Some((build::fc_plus_depth(spec), spec.fc_width)),
        ArchKind::FcPlusConv => Some(build::fc_plus_conv_shape(spec)?),
        _ => None,
    })
}
