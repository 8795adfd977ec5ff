use rand::Rng;

use super::{NetInput, Network};
use crate::autodiff::Tensor;
use crate::error::Result;
use crate::rng;

/// Worst per-tensor error `‖auto − fd‖ / max(1, ‖fd‖)` of the loss gradient
/// against central differences with step `1e-6`.
///
/// At most `max_entries` randomly chosen entries of each parameter tensor are
/// probed; inputs `x` and `y` are probed in full.
pub fn gradient_check(net: &Network, input: &NetInput, target: &Tensor, max_entries: usize, seed: u64) -> Result<f64> {
    let h = 1e-6;
    let (_, grads) = net.loss_and_grads(input, target)?;
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(seed, 7);
    let mut probe = net.clone();
    for p in 0..net.params().len() {
        let n = net.params().tensor(p).numel();
        let entries: Vec<usize> = if n <= max_entries {
            (0..n).collect()
        } else {
            (0..max_entries).map(|_| r.random_range(0..n)).collect()
        };
        let mut diff = 0.0;
        let mut norm = 0.0;
        for k in entries {
            let orig = net.params().tensor(p).data()[k];
            probe.params_mut().tensors_mut()[p].data_mut()[k] = orig + h;
            let up = probe.loss(input, target)?;
            probe.params_mut().tensors_mut()[p].data_mut()[k] = orig - h;
            let down = probe.loss(input, target)?;
            probe.params_mut().tensors_mut()[p].data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            diff += (fd - grads[p].data()[k]).powi(2);
            norm += fd * fd;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1.0));
    }
    // input gradients through a seeded backward pass of the loss
    let graph = net.graph();
    let mut bind: Vec<(&str, &Tensor)> = vec![("y", input.y), ("target", target)];
    if let (Some(t), Some(x)) = (input.tau, input.x) {
        bind.push(("tau", t));
        bind.push(("x", x));
    }
    let eval = graph.forward(&bind, net.loss_node())?;
    let g = graph.backward(&eval, net.loss_node())?;
    let mut inputs: Vec<(&str, Tensor)> = vec![("y", input.y.clone())];
    if let Some(x) = input.x {
        inputs.push(("x", x.clone()));
    }
    for (name, base) in inputs {
        let Some(an) = g.input(name) else { continue };
        let mut diff = 0.0;
        let mut norm = 0.0;
        for k in 0..base.numel() {
            let mut moved = base.clone();
            moved.data_mut()[k] += h;
            let up = loss_with(net, input, name, &moved, target)?;
            moved.data_mut()[k] -= 2.0 * h;
            let down = loss_with(net, input, name, &moved, target)?;
            let fd = (up - down) / (2.0 * h);
            diff += (fd - an.data()[k]).powi(2);
            norm += fd * fd;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1.0));
    }
    Ok(worst)
}

fn loss_with(net: &Network, input: &NetInput, name: &str, value: &Tensor, target: &Tensor) -> Result<f64> {
    let mut inp = *input;
    match name {
        "x" => inp.x = Some(value),
        _ => inp.y = value,
    }
    net.loss(&inp, target)
}

/// Replace every parameter except the Fourier frequencies by `U(−scale, scale)` draws,
/// so that zero-initialised heads do not hide gradient paths.
pub fn randomize_params(net: &mut Network, scale: f64, seed: u64) {
    let mut r = rng::stream(seed, 11);
    let names: Vec<String> = net.params().names().to_vec();
    for (idx, name) in names.iter().enumerate() {
        if name.ends_with(".omega") {
            continue;
        }
        for v in net.params_mut().tensors_mut()[idx].data_mut() {
            *v = r.random_range(-scale..scale);
        }
    }
}
