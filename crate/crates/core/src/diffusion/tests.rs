use super::*;
use crate::estimators::{Denoiser, EmDenoiser};
use crate::nets::{ArchKind, ArchSpec, Network};
use crate::rng;
use crate::sde::{make_increments, simulate, DriftSpec, IncrementPairs, InitialLaw, SimConfig};

fn ou_pairs(paths: usize, steps: usize, seed: u64) -> IncrementPairs {
    let ds = simulate(
        &DriftSpec::ou(1, 1.0),
        &SimConfig {
            paths,
            steps,
            delta: 1.0 / 64.0,
            sigma: 1.0,
            initial: InitialLaw::Default,
            seed,
        },
    )
    .unwrap();
    make_increments(&ds)
}

/// Increments drawn exactly from `N(μ(y)Δ, Δ)` at standard-normal states.
fn gaussian_pairs(drift: &DriftSpec, n: usize, delta: f64, seed: u64) -> IncrementPairs {
    let mut r = rng::stream(seed, 0);
    let mut y = vec![0.0; n];
    rng::fill_normal(&mut r, &mut y);
    let mu = drift.eval_rows(&y).unwrap();
    let z = mu.iter().map(|m| m * delta + delta.sqrt() * rng::normal(&mut r)).collect();
    IncrementPairs::new(y, z, 1, delta).unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 4,
        batch_size: 64,
        target_scale: TargetScale::Raw,
        diagnostic_rows: 32,
        ..TrainConfig::default()
    }
}

fn zeroed(mut net: Network) -> Network {
    for t in net.params_mut().tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    net
}

#[test]
fn zero_net_loss_is_mean_square_target() {
    let pairs = ou_pairs(4, 32, 1);
    let net = zeroed(Network::build(&ArchSpec::desk(ArchKind::Dn, 1)).unwrap());
    for scale in [TargetScale::Raw, TargetScale::InverseDelta] {
        let f = 1.0 / scale.output_factor(pairs.delta);
        let m = pairs.z.iter().map(|z| (z * f).powi(2)).sum::<f64>() / pairs.len as f64;
        let loss = denoising_loss(&net, &pairs, &NoiseSchedule::vp_default(), scale, 3).unwrap();
        assert!((loss - m).abs() < 1e-12 * m, "{loss} vs {m}");
    }
}

#[test]
fn batch_layout() {
    let pairs = ou_pairs(2, 8, 1);
    let mut r = rng::stream(0, 0);
    let s = NoiseSchedule::vp_default();
    let b = make_batch(&pairs, &[3, 0, 5], true, &s, TargetScale::InverseDelta, &mut r).unwrap();
    let tau = b.tau.as_ref().unwrap().data().to_vec();
    assert!(tau.iter().all(|&t| (s.eps()..=1.0).contains(&t)));
    assert_eq!(b.y.data(), &[pairs.y[3], pairs.y[0], pairs.y[5]]);
    assert!((b.target.data()[1] - pairs.z[0] * 64.0).abs() < 1e-12);
    let reg = make_batch(&pairs, &[1], false, &s, TargetScale::Raw, &mut r).unwrap();
    assert!(reg.tau.is_none() && reg.x.is_none());
    assert!((reg.target.data()[0] - pairs.z[1] * 64.0).abs() < 1e-12);
    assert!(make_batch(&pairs, &[], true, &s, TargetScale::Raw, &mut r).is_err());
}

#[test]
fn posterior_mean_is_bayes_optimal() {
    let drift = DriftSpec::ou(1, 1.0);
    let delta = 0.05;
    let train_pairs = gaussian_pairs(&drift, 4000, delta, 1);
    let test_pairs = gaussian_pairs(&drift, 4000, delta, 2);
    let s = NoiseSchedule::vp_default();
    let mut net = Network::build(&ArchSpec::desk(ArchKind::Dn, 1)).unwrap();
    let cfg = TrainConfig { epochs: 15, ..small_cfg() };
    train(&mut net, &train_pairs, &Validation::Feasible { pairs: &test_pairs }, &cfg).unwrap();
    let net_loss = denoising_loss(&net, &test_pairs, &s, TargetScale::Raw, 9).unwrap();
    // same draws of (τ, ξ) as denoising_loss with seed 9
    let em = EmDenoiser { drift, delta, schedule: s };
    let mut total = 0.0;
    for (c, start) in (0..test_pairs.len).step_by(2048).enumerate() {
        let rows: Vec<usize> = (start..(start + 2048).min(test_pairs.len)).collect();
        let mut r = rng::stream(9, c as u64);
        let b = make_batch(&test_pairs, &rows, true, &s, TargetScale::Raw, &mut r).unwrap();
        let (tau, x) = (b.tau.unwrap(), b.x.unwrap());
        for i in 0..rows.len() {
            let d = em.denoise(tau.data()[i], &x.data()[i..i + 1], &b.y.data()[i..i + 1]).unwrap()[0];
            total += (d - b.target.data()[i]).powi(2);
        }
    }
    let em_loss = total / test_pairs.len as f64;
    assert!(em_loss <= net_loss, "EM {em_loss} vs net {net_loss}");
}

#[test]
fn patience_zero_runs_one_epoch() {
    let pairs = ou_pairs(4, 32, 1);
    let held = ou_pairs(2, 32, 2);
    let mut net = Network::build(&ArchSpec::desk(ArchKind::Dn, 1)).unwrap();
    let cfg = TrainConfig { patience: 0, ..small_cfg() };
    let rep = train(&mut net, &pairs, &Validation::Feasible { pairs: &held }, &cfg).unwrap();
    assert_eq!(rep.records.len(), 1);
    assert_eq!(rep.selected_epoch, 1);
}

#[test]
fn training_is_deterministic_and_selects_the_minimum() {
    let pairs = ou_pairs(4, 32, 1);
    let drift = DriftSpec::ou(1, 1.0);
    let states: Vec<f64> = (0..50).map(|i| -1.0 + 0.04 * i as f64).collect();
    let val = Validation::Oracle { states: &states, drift: &drift };
    let run = || {
        let mut net = Network::build(&ArchSpec::desk(ArchKind::Dn, 1)).unwrap();
        let rep = train(&mut net, &pairs, &val, &small_cfg()).unwrap();
        (net.params().clone(), rep)
    };
    let (p1, r1) = run();
    let (p2, r2) = run();
    assert_eq!(p1.tensors(), p2.tensors());
    assert_eq!(r1, r2);
    let min = r1.records.iter().map(|r| r.val_metric).fold(f64::INFINITY, f64::min);
    assert_eq!(r1.selected().val_metric, min);
    assert_eq!(r1.best_metric, min);
    assert!(r1.records.iter().all(|r| r.m_ratio >= 0.0 && r.grad_x > 0.0));
    let mut buf = Vec::new();
    r1.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("epoch,train_loss,val_metric,lr,grad_tau,grad_x,grad_y,m_ratio\n"));
    assert_eq!(text.lines().count(), r1.records.len() + 1);
}

#[test]
fn regression_nets_train_without_diagnostics() {
    let pairs = ou_pairs(4, 32, 1);
    let held = ou_pairs(2, 32, 2);
    let mut net = Network::build(&ArchSpec::desk(ArchKind::Fc, 1)).unwrap();
    let rep = train(&mut net, &pairs, &Validation::Feasible { pairs: &held }, &small_cfg()).unwrap();
    assert!(rep.records.iter().all(|r| r.grad_tau.is_nan() && r.m_ratio.is_nan()));
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().lines().nth(1).unwrap().ends_with(",,,,"));
}

#[test]
fn divergence_is_reported() {
    let mut pairs = ou_pairs(2, 16, 1);
    pairs.z[3] = 1e300;
    let held = ou_pairs(1, 16, 2);
    let mut net = Network::build(&ArchSpec::desk(ArchKind::Dn, 1)).unwrap();
    let err = train(&mut net, &pairs, &Validation::Feasible { pairs: &held }, &small_cfg()).unwrap_err();
    assert!(err.to_string().contains("epoch 1"), "{err}");
}

#[test]
fn config_checks() {
    let pairs = ou_pairs(2, 16, 1);
    let mut net = Network::build(&ArchSpec::desk(ArchKind::Dn, 2)).unwrap();
    let val = Validation::Feasible { pairs: &pairs };
    assert!(train(&mut net, &pairs, &val, &small_cfg()).is_err());
    let mut net = Network::build(&ArchSpec::desk(ArchKind::Dn, 1)).unwrap();
    assert!(train(&mut net, &pairs, &val, &TrainConfig { batch_size: 0, ..small_cfg() }).is_err());
    assert!(train(&mut net, &pairs, &val, &TrainConfig { min_lr: 1.0, ..small_cfg() }).is_err());
    let parsed: TrainConfig = toml::from_str("epochs = 5\nvalidation = \"feasible\"").unwrap();
    assert_eq!(parsed.epochs, 5);
    assert_eq!(parsed.validation, ValidationMode::Feasible);
    assert!(toml::from_str::<TrainConfig>("epoch = 5").is_err());
}
