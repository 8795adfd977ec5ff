use std::fs;
use std::io::Write;
use std::path::Path;

use super::config::{EstimatorKind, ResolvedConfig};
use super::experiment::{create_with_header, denoising_config, fit_roster, simulate_data, train_network, write_slices_csv};
use crate::error::Result;
use crate::estimators::{eval_points, DenoisingEstimator, log_tau_grid, tau_sweep, write_sweep_csv, SweepRow};
use crate::rng::derive_seed;

/// Writes `train.csv`, `heldout.csv` and `eval.csv` (one row per state) and
/// the binary datasets `*.sdds`.
pub fn run_simulate(rc: &ResolvedConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let data = simulate_data(rc).map_err(|e| e.in_stage("simulate"))?;
    for (name, ds) in [("train", &data.train), ("heldout", &data.heldout), ("eval", &data.eval)] {
        let mut w = create_with_header(rc, &out.join(format!("{name}.csv")))?;
        ds.write_csv(&mut w)?;
        w.flush()?;
        ds.save(&out.join(format!("{name}.sdds")))?;
    }
    Ok(())
}

/// Fits the roster and saves every trained denoiser as `<slug>.sdest`.
pub fn run_train(rc: &ResolvedConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let data = simulate_data(rc).map_err(|e| e.in_stage("simulate"))?;
    fit_roster(rc, &data, out, true)?;
    Ok(())
}

/// Fits the roster and writes its estimates on a grid over the training
/// states (`estimates.csv`) and along axis slices (`slices.csv`).
pub fn run_estimate(rc: &ResolvedConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let c = &rc.config;
    let data = simulate_data(rc).map_err(|e| e.in_stage("simulate"))?;
    let fitted = fit_roster(rc, &data, out, c.experiment.save_models)?;
    let d = c.drift.dim;
    let pts = eval_points(
        &data.train.left_states(),
        d,
        c.sweep.per_axis,
        c.sweep.max_points,
        derive_seed(rc.seed(), 0x9a1d),
    )?;
    let truth = c.drift.eval_rows(&pts)?;
    let mut w = create_with_header(rc, &out.join("estimates.csv"))?;
    let cols = |p: &str| (1..=d).map(|k| format!("{p}{k}")).collect::<Vec<_>>().join(",");
    writeln!(w, "estimator,{},{},{}", cols("y"), cols("est"), cols("true"))?;
    for f in &fitted {
        let est = f
            .estimator
            .estimate_rows(&pts, derive_seed(rc.seed(), 0xe5a1))
            .map_err(|e| e.in_stage(format!("estimate {}", f.kind.name())))?;
        for r in 0..pts.len() / d {
            let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(",");
            let s = r * d..(r + 1) * d;
            writeln!(w, "{},{},{},{}", f.kind.name(), fmt(&pts[s.clone()]), fmt(&est[s.clone()]), fmt(&truth[s]))?;
        }
    }
    w.flush()?;
    let mut w = create_with_header(rc, &out.join("slices.csv"))?;
    write_slices_csv(rc, &fitted, &data.train, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Trains the first denoiser of the roster (DN if there is none) and writes
/// `e²(τ, K)` over a log-spaced τ grid to `sweep.csv`.
pub fn run_sweep(rc: &ResolvedConfig, out: &Path) -> Result<Vec<SweepRow>> {
    fs::create_dir_all(out)?;
    let c = &rc.config;
    let kind = c
        .experiment
        .roster
        .iter()
        .copied()
        .find(|k| k.arch().is_some_and(|a| a.is_denoiser()))
        .unwrap_or(EstimatorKind::Dn);
    let data = simulate_data(rc).map_err(|e| e.in_stage("simulate"))?;
    let stage = format!("fit {}", kind.name());
    let (net, report) = train_network(rc, kind.arch().expect("denoiser"), &data).map_err(|e| e.in_stage(&stage))?;
    let mut w = create_with_header(rc, &out.join(format!("train_{}.csv", kind.slug())))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let handle = DenoisingEstimator::new(net, denoising_config(rc))?;
    let d = c.drift.dim;
    let ys = eval_points(
        &data.train.left_states(),
        d,
        c.sweep.per_axis,
        c.sweep.max_points,
        derive_seed(rc.seed(), 0x5eed),
    )?;
    let truth = c.drift.eval_rows(&ys)?;
    let taus = log_tau_grid(c.train.schedule.eps(), c.sweep.taus);
    let den = handle.denoiser();
    let rows = tau_sweep(
        &den,
        &c.train.schedule,
        c.data.delta,
        &ys,
        &truth,
        &taus,
        &c.sweep.ks,
        c.sweep.steps,
        derive_seed(rc.seed(), 0x7a05),
    )
    .map_err(|e| e.in_stage("sweep"))?;
    let mut w = create_with_header(rc, &out.join("sweep.csv"))?;
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(rows)
}
