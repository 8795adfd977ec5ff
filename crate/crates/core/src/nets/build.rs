use rand::Rng;

use super::{ArchKind, ArchSpec};
use crate::autodiff::{Conv1dSpec, Graph, NodeId, PadMode, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Graph plus the random stream used for initial weights.
pub(crate) struct Builder {
    pub graph: Graph,
    rng: StreamRng,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`
    Uniform(usize),
    Zero,
}

impl Builder {
    pub fn new(seed: u64) -> Self {
        Builder {
            graph: Graph::new(),
            rng: rng::stream(seed, 0x1417),
        }
    }

    fn tensor(&mut self, shape: &[usize], init: Init) -> Tensor {
        let mut t = Tensor::zeros(shape);
        if let Init::Uniform(fan_in) = init {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in t.data_mut() {
                *v = self.rng.random_range(-bound..bound);
            }
        }
        t
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<NodeId> {
        let t = self.tensor(shape, init);
        self.graph.param(name, t)
    }

    pub fn linear(&mut self, a: NodeId, name: &str, n_in: usize, n_out: usize, zero: bool) -> Result<NodeId> {
        let init = if zero { Init::Zero } else { Init::Uniform(n_in) };
        let w = self.tensor(&[n_in, n_out], init);
        let b = self.tensor(&[n_out], init);
        self.graph.linear(a, name, w, b)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        x: NodeId,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        spec: Conv1dSpec,
        zero: bool,
    ) -> Result<NodeId> {
        let init = if zero { Init::Zero } else { Init::Uniform(c_in * kernel) };
        let w = self.param(&format!("{name}.weight"), &[c_out, c_in, kernel], init)?;
        let b = self.param(&format!("{name}.bias"), &[c_out], init)?;
        Ok(self.graph.conv1d(x, w, Some(b), spec))
    }
}

fn linear_count(n_in: usize, n_out: usize) -> usize {
    n_in * n_out + n_out
}

/// Polynomial, learned ELU, and gated Fourier features of `y`, then a two-layer map to `ℝ^D`.
pub(crate) fn state_mapper(b: &mut Builder, y: NodeId, spec: &ArchSpec, prefix: &str) -> Result<NodeId> {
    let (d, h, k) = (spec.dim, spec.mapper_width, spec.fourier_features);
    let y2 = b.graph.powi(y, 2);
    let y3 = b.graph.powi(y, 3);
    let lin = b.linear(y, &format!("{prefix}.lin"), d, h, false)?;
    let lin = b.graph.elu(lin);
    let mut parts = vec![y, y2, y3, lin];
    if k > 0 {
        let omega = Tensor::vector((0..k).map(|j| 2f64.powi(j as i32) * std::f64::consts::PI).collect());
        let omega = b.graph.param(&format!("{prefix}.omega"), omega)?;
        let gate = b.graph.param(&format!("{prefix}.gate"), Tensor::scalar(spec.gate_init))?;
        let phase = b.graph.outer(y, omega);
        let s = b.graph.sin(phase);
        let c = b.graph.cos(phase);
        let s = b.graph.scale_by(s, gate);
        let c = b.graph.scale_by(c, gate);
        parts.push(s);
        parts.push(c);
    }
    let feats = b.graph.concat(&parts);
    let width = 3 * d + h + 2 * d * k;
    let hid = b.linear(feats, &format!("{prefix}.head1"), width, h, false)?;
    let hid = b.graph.elu(hid);
    b.linear(hid, &format!("{prefix}.head2"), h, d, false)
}

pub(crate) fn state_mapper_count(spec: &ArchSpec) -> usize {
    let (d, h, k) = (spec.dim, spec.mapper_width, spec.fourier_features);
    let fourier = if k > 0 { k + 1 } else { 0 };
    linear_count(d, h) + fourier + linear_count(3 * d + h + 2 * d * k, h) + linear_count(h, d)
}

/// Convolutional module over the coordinate axis. `inputs` are `[B, D]` channels.
/// The first layer has `D` output channels and kernel `D`, giving the `2D²` term
/// for two input channels.
pub(crate) fn conv_module(b: &mut Builder, inputs: &[NodeId], spec: &ArchSpec, prefix: &str, zero_out: bool) -> Result<NodeId> {
    let (d, c, k) = (spec.dim, spec.conv_channels, spec.conv_kernel);
    let cin = inputs.len();
    let stacked = if cin == 1 { inputs[0] } else { b.graph.concat(inputs) };
    let x = b.graph.reshape(stacked, &[cin, d]);
    let first = Conv1dSpec {
        stride: 1,
        pad_left: d / 2,
        pad_right: d - 1 - d / 2,
        mode: PadMode::Circular,
    };
    let same = Conv1dSpec::same(k, PadMode::Circular);
    let h = b.conv(x, &format!("{prefix}.c1"), cin, d, d, first, false)?;
    let h = b.graph.elu(h);
    let h = b.conv(h, &format!("{prefix}.c2"), d, c, k, same, false)?;
    let h = b.graph.elu(h);
    let h = b.conv(h, &format!("{prefix}.c3"), c, 1, k, same, zero_out)?;
    let r = b.graph.elu(h);
    let r = b.conv(r, &format!("{prefix}.res"), 1, 1, k, same, zero_out)?;
    let out = b.graph.add(h, r);
    Ok(b.graph.reshape(out, &[d]))
}

pub(crate) fn conv_module_count(spec: &ArchSpec, cin: usize) -> usize {
    let (d, c, k) = (spec.dim, spec.conv_channels, spec.conv_kernel);
    (d * cin * d + d) + (c * d * k + c) + (c * k + 1) + (k + 1)
}

/// `m(g, τ) = W_o·ELU(W_g·g + W_t·emb(τ) + b) + b_o` with zero-initialised output.
pub(crate) fn time_module(b: &mut Builder, g: NodeId, tau: NodeId, spec: &ArchSpec) -> Result<NodeId> {
    let (d, e, h) = (spec.dim, spec.time_embedding, spec.time_width);
    let half = e / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|j| 16f64.powf(1.0 - j as f64 / (half - 1).max(1) as f64))
        .collect();
    let freqs = b.graph.constant(Tensor::vector(freqs));
    let phase = b.graph.outer(tau, freqs);
    let s = b.graph.sin(phase);
    let c = b.graph.cos(phase);
    let emb = b.graph.concat(&[s, c]);
    let hg = b.linear(g, "m.in_g", d, h, false)?;
    let wt = b.param("m.in_t.weight", &[e, h], Init::Uniform(e))?;
    let ht = b.graph.matmul(emb, wt);
    let hid = b.graph.add(hg, ht);
    let hid = b.graph.elu(hid);
    b.linear(hid, "m.out", h, d, true)
}

pub(crate) fn time_module_count(spec: &ArchSpec) -> usize {
    let (d, e, h) = (spec.dim, spec.time_embedding, spec.time_width);
    linear_count(d, h) + e * h + linear_count(h, d)
}

/// ReLU stack `D → W → … → W → D` with `depth` hidden layers.
pub(crate) fn fc_stack(b: &mut Builder, y: NodeId, d: usize, width: usize, depth: usize) -> Result<NodeId> {
    let mut h = y;
    let mut n_in = d;
    for l in 0..depth {
        h = b.linear(h, &format!("fc.l{l}"), n_in, width, false)?;
        h = b.graph.relu(h);
        n_in = width;
    }
    b.linear(h, "fc.out", n_in, d, false)
}

pub(crate) fn fc_count(d: usize, width: usize, depth: usize) -> usize {
    if depth == 0 {
        return linear_count(d, d);
    }
    linear_count(d, width) + (depth - 1) * linear_count(width, width) + linear_count(width, d)
}

pub(crate) fn dn_count(spec: &ArchSpec) -> usize {
    state_mapper_count(spec) + conv_module_count(spec, 2) + time_module_count(spec)
}

/// Depth of the fully connected baseline after deepening past the `Dn` count.
pub(crate) fn fc_plus_depth(spec: &ArchSpec) -> usize {
    let target = dn_count(spec);
    let mut depth = spec.fc_depth;
    while fc_count(spec.dim, spec.fc_width, depth) <= target {
        depth += 1;
    }
    depth
}

/// `(depth, width)` of the backbone whose total with the conv module is within 1% of `Dn`.
pub(crate) fn fc_plus_conv_shape(spec: &ArchSpec) -> Result<(usize, usize)> {
    let target = dn_count(spec) as f64;
    let conv = conv_module_count(spec, 1);
    let total = |depth: usize, width: usize| (fc_count(spec.dim, width, depth) + conv) as f64;
    let mut best: Option<(f64, usize, usize)> = None;
    for depth in (1..=fc_plus_depth(spec)).rev() {
        if total(depth, 1) > target {
            continue;
        }
        // smallest width reaching the target
        let (mut lo, mut hi) = (1usize, 1usize);
        while total(depth, hi) < target {
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if total(depth, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for w in [lo, hi] {
            let rel = (total(depth, w) - target).abs() / target;
            if best.is_none_or(|(r, _, _)| rel < r) {
                best = Some((rel, depth, w));
            }
        }
        if let Some((rel, d, w)) = best {
            if rel < 0.01 {
                return Ok((d, w));
            }
        }
    }
    match best {
        Some((_, d, w)) => Ok((d, w)),
        None => Err(Error::invalid("no backbone fits under the DN parameter count")),
    }
}

pub(crate) fn expected_count(spec: &ArchSpec) -> Result<usize> {
    Ok(match spec.kind {
        ArchKind::Dn => dn_count(spec),
        ArchKind::DnLin => linear_count(spec.dim, spec.dim) + conv_module_count(spec, 2) + time_module_count(spec),
        ArchKind::Fc => fc_count(spec.dim, spec.fc_width, spec.fc_depth),
        ArchKind::FcPlus => fc_count(spec.dim, spec.fc_width, fc_plus_depth(spec)),
        ArchKind::FcPlusConv => {
            let (depth, width) = fc_plus_conv_shape(spec)?;
            fc_count(spec.dim, width, depth) + conv_module_count(spec, 1)
        }
        ArchKind::FcPlusConvMlpsm => state_mapper_count(spec) + conv_module_count(spec, 1),
    })
}
