use crate::autodiff::Tensor;
use crate::baselines::{bspline_basis, hermite_functions, NwEstimator};
use crate::diffusion::{vp_coeffs, NoiseSchedule};
use crate::error::Result;
use crate::estimators::{analytic_em_denoiser, coeffs};
use crate::nets::{gradient_check, randomize_params, ArchKind, ArchSpec, NetInput, Network};
use crate::rng;
use crate::sde::{simulate, DriftSpec, InitialLaw, SimConfig};
use crate::stats::{mean, variance};

use super::metrics::drift_error;
use super::report::{rank_marks, Mark};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn vp_identity() -> Check {
    let mut worst: f64 = 0.0;
    for (g0, g1) in [(0.0, 20.0), (0.1, 20.0), (1.0, 10.0)] {
        for i in 0..=1000 {
            let (b, s) = vp_coeffs(i as f64 / 1000.0, g0, g1);
            worst = worst.max((b * b + s * s - 1.0).abs());
        }
    }
    check("vp identity", worst < 1e-12, format!("max |β²+σ²−1| = {worst:.2e}"))
}

fn inversion() -> Result<Check> {
    let s = NoiseSchedule::vp_default();
    let mut r = rng::stream(0x5e1f, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..2000 {
        let tau = 0.05 + 0.95 * rand::Rng::random::<f64>(&mut r);
        let delta = 2f64.powf(-6.0 - 4.0 * rand::Rng::random::<f64>(&mut r));
        let mu = 4.0 * rng::normal(&mut r);
        let x = rng::normal(&mut r);
        let d = analytic_em_denoiser(&[x], &[mu], tau, delta, &s)?[0];
        let c = coeffs(tau, delta, &s)?;
        worst = worst.max((c.a * x + c.b * d - mu).abs() / mu.abs().max(1.0));
    }
    Ok(check("estimator inversion", worst < 1e-10, format!("max error {worst:.2e}")))
}

fn gradients() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for kind in ArchKind::ALL {
        for d in [1, 4] {
            let spec = ArchSpec {
                fourier_features: 2,
                ..ArchSpec::desk(kind, d)
            };
            let mut net = Network::build(&spec)?;
            randomize_params(&mut net, 0.3, 1);
            let mut r = rng::stream(d as u64, kind as u64);
            let mut rand_t = |n: usize| -> Result<Tensor> {
                let mut v = vec![0.0; n];
                rng::fill_normal(&mut r, &mut v);
                Tensor::new(vec![2, d], v)
            };
            let (y, x, t) = (rand_t(2 * d)?, rand_t(2 * d)?, rand_t(2 * d)?);
            let tau = Tensor::new(vec![2, 1], vec![0.3, 0.9])?;
            let inp = if kind.is_denoiser() {
                NetInput::denoising(&tau, &x, &y)
            } else {
                NetInput::regression(&y)
            };
            worst = worst.max(gradient_check(&net, &inp, &t, 8, 3)?);
        }
    }
    Ok(check("finite-difference gradients", worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn ou_fidelity() -> Result<Check> {
    let ds = simulate(
        &DriftSpec::ou(1, 1.0),
        &SimConfig {
            paths: 2000,
            steps: 256,
            delta: 1.0 / 256.0,
            sigma: 1.0,
            initial: InitialLaw::Point { value: vec![0.0] },
            seed: 5,
        },
    )?;
    let term: Vec<f64> = (0..ds.paths).map(|i| ds.state(i, ds.steps)[0]).collect();
    let (m, v) = (mean(&term), variance(&term));
    let target = (1.0 - (-2.0f64).exp()) / 2.0;
    let se = (v / term.len() as f64).sqrt();
    let ok = m.abs() < 3.0 * se && (v - target).abs() < 0.1 * target;
    Ok(check("OU simulation", ok, format!("mean {m:.4} (se {se:.4}), variance {v:.4} vs {target:.4}")))
}

fn baselines() -> Result<Check> {
    let nw = NwEstimator::from_pairs(vec![0.0, 1.0], vec![0.1, -0.1], 1, 1, 2, 0.5, 1.0, 0.0)?;
    let b = nw.eval(&[0.0])?.drift[0];
    let mut pou: f64 = 0.0;
    for i in 0..=200 {
        let v = bspline_basis(3, 7, -2.0, 2.0, -2.0 + 4.0 * i as f64 / 200.0)?;
        pou = pou.max((v.iter().sum::<f64>() - 1.0).abs());
    }
    let (n, a) = (2000, 15.0);
    let w = 2.0 * a / (n - 1) as f64;
    let mut orth: f64 = 0.0;
    let mut gram = [[0.0; 6]; 6];
    for q in 0..n {
        let h = hermite_functions(6, -a + q as f64 * w);
        for u in 0..6 {
            for v in 0..6 {
                gram[u][v] += w * h[u] * h[v];
            }
        }
    }
    for (u, row) in gram.iter().enumerate() {
        for (v, g) in row.iter().enumerate() {
            orth = orth.max((g - f64::from(u8::from(u == v))).abs());
        }
    }
    let ok = (b - 0.04899).abs() < 1e-5 && pou < 1e-10 && orth < 1e-8;
    Ok(check(
        "baseline identities",
        ok,
        format!("NW hand value {b:.5}, partition of unity {pou:.1e}, orthonormality {orth:.1e}"),
    ))
}

fn parameter_accounting() -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for d in [8, 12, 20, 40] {
        let count = |k| Network::build(&ArchSpec::new(k, d)).map(|n| n.param_count());
        let dn = count(ArchKind::Dn)? as f64;
        let plus = count(ArchKind::FcPlus)? as f64;
        let conv = count(ArchKind::FcPlusConv)? as f64;
        ok &= plus >= dn;
        worst = worst.max((conv - dn).abs() / dn);
    }
    Ok(check(
        "parameter accounting",
        ok && worst < 0.01,
        format!("max FC+-Conv mismatch {:.3}%", 100.0 * worst),
    ))
}

fn metrics() -> Result<Check> {
    let e = drift_error(&[0.01, 0.04, 0.09, 0.16], 2, 2)?;
    let names = vec!["A".to_string(), "B".to_string()];
    let (marks, tie) = rank_marks(&names, &[1.0, 2.0], |_| false);
    let (_, eq) = rank_marks(&names, &[1.0, 1.0], |_| false);
    let ok = (e - 0.075).abs() < 1e-15 && marks == [Mark::Best, Mark::Second] && tie.is_none() && eq.is_some();
    Ok(check("drift error and ranking", ok, format!("E = {e}")))
}

/// Fast invariant checks; every entry should pass on a clean build.
pub fn selftest() -> Result<Vec<Check>> {
    Ok(vec![
        vp_identity(),
        inversion()?,
        gradients()?,
        ou_fidelity()?,
        baselines()?,
        parameter_accounting()?,
        metrics()?,
    ])
}
