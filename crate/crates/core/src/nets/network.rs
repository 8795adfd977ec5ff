use super::build::{self, Builder};
use super::{ArchKind, ArchSpec};
use crate::autodiff::{Adam, Graph, NodeId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Inputs of one batch. Regressors only read `y`.
#[derive(Clone, Copy, Debug)]
pub struct NetInput<'a> {
    pub tau: Option<&'a Tensor>,
    pub x: Option<&'a Tensor>,
    pub y: &'a Tensor,
}

impl<'a> NetInput<'a> {
    pub fn regression(y: &'a Tensor) -> Self {
        NetInput { tau: None, x: None, y }
    }

    pub fn denoising(tau: &'a Tensor, x: &'a Tensor, y: &'a Tensor) -> Self {
        NetInput {
            tau: Some(tau),
            x: Some(x),
            y,
        }
    }
}

/// Output heads of the denoiser family.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    pub f: NodeId,
    pub g: Option<NodeId>,
    pub m: Option<NodeId>,
}

/// Evaluated head values, each `[B, D]`.
#[derive(Clone, Debug)]
pub struct HeadValues {
    pub output: Tensor,
    pub f: Tensor,
    pub g: Option<Tensor>,
    pub m: Option<Tensor>,
}

/// A built architecture: graph, heads, loss node and training constraints.
#[derive(Clone, Debug)]
pub struct Network {
    spec: ArchSpec,
    graph: Graph,
    output: NodeId,
    loss: NodeId,
    heads: Heads,
    /// Parameters subject to clamping and pruning (the fully connected layers).
    constrained: Vec<bool>,
    masks: Vec<Option<Tensor>>,
}

impl Network {
    pub fn build(spec: &ArchSpec) -> Result<Network> {
        spec.validate()?;
        let d = spec.dim;
        let mut b = Builder::new(spec.init_seed);
        let y = b.graph.input("y");
        let (output, heads) = match spec.kind {
            ArchKind::Dn | ArchKind::DnLin => {
                let tau = b.graph.input("tau");
                let x = b.graph.input("x");
                // f last, so DN and DN-Lin share the initial g and m weights
                let g = build::conv_module(&mut b, &[x, y], spec, "g", true)?;
                let m = build::time_module(&mut b, g, tau, spec)?;
                let f = if spec.kind == ArchKind::Dn {
                    build::state_mapper(&mut b, y, spec, "f")?
                } else {
                    b.linear(y, "f.lin", d, d, false)?
                };
                let fg = b.graph.add(f, g);
                let out = b.graph.add(fg, m);
                (
                    out,
                    Heads {
                        f,
                        g: Some(g),
                        m: Some(m),
                    },
                )
            }
            ArchKind::Fc => {
                let f = build::fc_stack(&mut b, y, d, spec.fc_width, spec.fc_depth)?;
                (f, Heads { f, g: None, m: None })
            }
            ArchKind::FcPlus => {
                let depth = build::fc_plus_depth(spec);
                let f = build::fc_stack(&mut b, y, d, spec.fc_width, depth)?;
                (f, Heads { f, g: None, m: None })
            }
            ArchKind::FcPlusConv => {
                let (depth, width) = build::fc_plus_conv_shape(spec)?;
                let f = build::fc_stack(&mut b, y, d, width, depth)?;
                let g = build::conv_module(&mut b, &[y], spec, "g", false)?;
                let out = b.graph.add(f, g);
                (
                    out,
                    Heads {
                        f,
                        g: Some(g),
                        m: None,
                    },
                )
            }
            ArchKind::FcPlusConvMlpsm => {
                let f = build::state_mapper(&mut b, y, spec, "f")?;
                let g = build::conv_module(&mut b, &[y], spec, "g", false)?;
                let out = b.graph.add(f, g);
                (
                    out,
                    Heads {
                        f,
                        g: Some(g),
                        m: None,
                    },
                )
            }
        };
        let target = b.graph.input("target");
        let loss = b.graph.mse(output, target);
        let mut graph = b.graph;
        graph.set_name("output", output);
        graph.set_name("loss", loss);
        let constrained: Vec<bool> = graph
            .params()
            .names()
            .iter()
            .map(|n| n.starts_with("fc."))
            .collect();
        let masks = vec![None; graph.params().len()];
        let net = Network {
            spec: spec.clone(),
            graph,
            output,
            loss,
            heads,
            constrained,
            masks,
        };
        Ok(net)
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn kind(&self) -> ArchKind {
        self.spec.kind
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn heads(&self) -> Heads {
        self.heads
    }

    pub fn output_node(&self) -> NodeId {
        self.output
    }

    pub fn loss_node(&self) -> NodeId {
        self.loss
    }

    pub fn params(&self) -> &ParamStore {
        self.graph.params()
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        self.graph.params_mut()
    }

    pub fn param_count(&self) -> usize {
        self.graph.params().scalar_count()
    }

    pub fn masks(&self) -> &[Option<Tensor>] {
        &self.masks
    }

    pub fn load_params(&mut self, params: &ParamStore) -> Result<()> {
        self.graph.params_mut().load_from(params)
    }

    fn bindings<'a>(&self, input: &NetInput<'a>, target: Option<&'a Tensor>) -> Result<Vec<(&'static str, &'a Tensor)>> {
        let d = self.spec.dim;
        let check = |t: &Tensor, w: usize, what: &str| -> Result<()> {
            if t.rank() != 2 || t.shape()[1] != w || t.batch() != input.y.batch() {
                return Err(Error::shape(format!(
                    "{what} must be [{}, {w}], got {:?}",
                    input.y.batch(),
                    t.shape()
                )));
            }
            Ok(())
        };
        check(input.y, d, "y")?;
        let mut out = vec![("y", input.y)];
        if self.spec.kind.is_denoiser() {
            let tau = input.tau.ok_or_else(|| Error::UnboundInput("tau".into()))?;
            let x = input.x.ok_or_else(|| Error::UnboundInput("x".into()))?;
            check(tau, 1, "tau")?;
            check(x, d, "x")?;
            out.push(("tau", tau));
            out.push(("x", x));
        }
        if let Some(t) = target {
            check(t, d, "target")?;
            out.push(("target", t));
        }
        Ok(out)
    }

    /// Network output, `[B, D]`.
    pub fn predict(&self, input: &NetInput) -> Result<Tensor> {
        let bind = self.bindings(input, None)?;
        Ok(self.graph.forward(&bind, self.output)?.into_output())
    }

    /// Output together with the separately readable heads.
    pub fn predict_heads(&self, input: &NetInput) -> Result<HeadValues> {
        let bind = self.bindings(input, None)?;
        let eval = self.graph.forward(&bind, self.output)?;
        let get = |id: NodeId| eval.value(id).cloned().ok_or_else(|| Error::invalid("head not evaluated"));
        Ok(HeadValues {
            output: eval.output().clone(),
            f: get(self.heads.f)?,
            g: self.heads.g.map(get).transpose()?,
            m: self.heads.m.map(get).transpose()?,
        })
    }

    /// Batch-mean squared error against `target` and its parameter gradients.
    pub fn loss_and_grads(&self, input: &NetInput, target: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        let bind = self.bindings(input, Some(target))?;
        let eval = self.graph.forward(&bind, self.loss)?;
        let loss = eval.output().item()?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss is {loss}")));
        }
        let grads = self.graph.backward(&eval, self.loss)?;
        Ok((loss, grads.params))
    }

    pub fn loss(&self, input: &NetInput, target: &Tensor) -> Result<f64> {
        let bind = self.bindings(input, Some(target))?;
        self.graph.forward(&bind, self.loss)?.output().item()
    }

    /// Batch-averaged norms of `∂(Σ_d D_d)/∂(τ, X_τ, Y)` per sample.
    pub fn input_gradient_norms(&self, input: &NetInput) -> Result<(f64, f64, f64)> {
        if !self.spec.kind.is_denoiser() {
            return Err(Error::invalid("input gradients are defined for denoisers only"));
        }
        let bind = self.bindings(input, None)?;
        let eval = self.graph.forward(&bind, self.output)?;
        let seed = Tensor::filled(eval.output().shape(), 1.0);
        let grads = self.graph.backward_seeded(&eval, self.output, seed)?;
        let batch = input.y.batch();
        let avg = |name: &str, width: usize| -> f64 {
            let Some(g) = grads.input(name) else { return 0.0 };
            let total: f64 = g
                .data()
                .chunks(width)
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum();
            total / batch.max(1) as f64
        };
        let d = self.spec.dim;
        Ok((avg("tau", 1), avg("x", d), avg("y", d)))
    }

    /// Batch average of `‖m_θ‖ / ‖D_θ‖` (rows with zero output contribute zero).
    pub fn time_head_ratio(&self, input: &NetInput) -> Result<f64> {
        if self.heads.m.is_none() {
            return Err(Error::invalid(format!(
                "{} has no time-conditioning head",
                self.spec.kind.name()
            )));
        }
        let hv = self.predict_heads(input)?;
        let m = hv.m.expect("denoiser has an m head");
        let d = self.spec.dim;
        let mut total = 0.0;
        for (mr, or) in m.data().chunks(d).zip(hv.output.data().chunks(d)) {
            let mn = mr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let on = or.iter().map(|v| v * v).sum::<f64>().sqrt();
            if on > 0.0 {
                total += mn / on;
            }
        }
        Ok(total / input.y.batch().max(1) as f64)
    }

    /// One optimizer update followed by clamping and masking.
    pub fn step(&mut self, opt: &mut Adam, grads: &[Tensor]) -> Result<()> {
        opt.step(self.graph.params_mut(), grads, Some(&self.masks))?;
        if self.has_constraints() {
            self.apply_constraints();
        }
        Ok(())
    }

    /// Clamp constrained weights to `[−B, B]` and re-apply pruning masks.
    pub fn apply_constraints(&mut self) {
        let bound = self.spec.clamp;
        let constrained = self.constrained.clone();
        let masks = self.masks.clone();
        for (idx, t) in self.graph.params_mut().tensors_mut().iter_mut().enumerate() {
            if !constrained[idx] {
                continue;
            }
            for v in t.data_mut() {
                *v = v.clamp(-bound, bound);
            }
            if let Some(m) = &masks[idx] {
                for (v, &keep) in t.data_mut().iter_mut().zip(m.data()) {
                    if keep == 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Zero the smallest `prune_fraction` of the surviving weights in each
    /// constrained weight matrix.
    pub fn prune(&mut self) {
        let frac = self.spec.prune_fraction;
        if frac <= 0.0 {
            return;
        }
        let names: Vec<String> = self.graph.params().names().to_vec();
        for (idx, name) in names.iter().enumerate() {
            if !self.constrained[idx] || !name.ends_with(".weight") {
                continue;
            }
            let t = self.graph.params().tensor(idx).clone();
            let mut mask = self.masks[idx]
                .clone()
                .unwrap_or_else(|| Tensor::filled(t.shape(), 1.0));
            let mut alive: Vec<(f64, usize)> = t
                .data()
                .iter()
                .enumerate()
                .filter(|(k, _)| mask.data()[*k] != 0.0)
                .map(|(k, v)| (v.abs(), k))
                .collect();
            alive.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let n = (alive.len() as f64 * frac).floor() as usize;
            for &(_, k) in alive.iter().take(n) {
                mask.data_mut()[k] = 0.0;
            }
            self.masks[idx] = Some(mask);
        }
        self.apply_constraints();
    }

    pub fn has_constraints(&self) -> bool {
        self.constrained.iter().any(|&c| c)
    }
}
