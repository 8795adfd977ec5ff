use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::config::{EstimatorKind, ResolvedConfig, Selection};
use super::metrics::{slice_points, squared_errors, visited_states, ErrorSeries};
use super::report::Summary;
use crate::baselines::{
    hermite_fit, hermite_select_m, nw_select_bandwidth, oracle_grid_search, ridge_fit, NwEstimator, RidgeConfig,
    SelectionTrace,
};
use crate::diffusion::{train, TrainReport, Validation, ValidationMode};
use crate::error::Result;
use crate::estimators::{DenoisingConfig, DenoisingEstimator, DriftEstimator, RegressionEstimator, TrueDrift};
use crate::nets::{ArchKind, Network};
use crate::rng::derive_seed;
use crate::sde::{make_increments, simulate, SimConfig, TrajectoryDataset};

/// Training, held-out and evaluation trajectories of one experiment.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub train: TrajectoryDataset,
    pub heldout: TrajectoryDataset,
    /// Paths on the out-of-sample horizon; the first `1/Δ` steps are the in-sample evaluation.
    pub eval: TrajectoryDataset,
}

pub fn simulate_data(rc: &ResolvedConfig) -> Result<Datasets> {
    let c = &rc.config;
    let sim = |paths, steps, label| {
        simulate(
            &c.drift,
            &SimConfig {
                paths,
                steps,
                delta: c.data.delta,
                sigma: c.data.sigma,
                initial: c.data.initial.clone(),
                seed: derive_seed(rc.seed(), label),
            },
        )
    };
    Ok(Datasets {
        train: sim(rc.training_paths(), c.data.steps, 0x7a11)?,
        heldout: sim(c.data.heldout_paths, c.data.steps, 0x4e1d)?,
        eval: sim(rc.eval_paths(), rc.oos_steps(), 0xe7a1)?,
    })
}

/// A fitted roster entry.
pub struct Fitted {
    pub kind: EstimatorKind,
    pub estimator: Box<dyn DriftEstimator>,
    /// Chosen hyperparameters or training outcome, for the summary.
    pub selected: String,
    pub training: Option<TrainReport>,
    pub trace: Option<SelectionTrace>,
}

impl std::fmt::Debug for Fitted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fitted").field("kind", &self.kind).field("selected", &self.selected).finish()
    }
}

pub fn denoising_config(rc: &ResolvedConfig) -> DenoisingConfig {
    let c = &rc.config;
    DenoisingConfig {
        schedule: c.train.schedule,
        delta: c.data.delta,
        k: c.estimator.k,
        tau_star: c.estimator.tau_star,
        target_scale: c.train.target_scale,
        steps: c.estimator.steps,
    }
}

/// Fit one roster entry. Denoisers are saved to `save_dir/<slug>.sdest` when given.
pub fn fit_estimator(rc: &ResolvedConfig, kind: EstimatorKind, data: &Datasets, save_dir: Option<&Path>) -> Result<Fitted> {
    let c = &rc.config;
    let val_states = visited_states(&data.heldout);
    let sel_seed = derive_seed(rc.seed(), 0x5e1);
    let fitted = |estimator: Box<dyn DriftEstimator>, selected: String, trace| Fitted {
        kind,
        estimator,
        selected,
        training: None,
        trace,
    };
    match kind {
        EstimatorKind::Oracle => Ok(fitted(Box::new(TrueDrift(c.drift.clone())), String::new(), None)),
        EstimatorKind::Nw => {
            let b = &c.baselines;
            let (est, trace) = match b.selection {
                Selection::Oracle => {
                    let base = NwEstimator::fit(&data.train, b.nw_bandwidths[0], b.nw_truncation)?;
                    let (_, est, trace) = oracle_grid_search(
                        &b.nw_bandwidths,
                        |h| h.to_string(),
                        |&h| base.with_bandwidth(h),
                        &val_states,
                        &c.drift,
                        sel_seed,
                    )?;
                    (est, trace)
                }
                Selection::Criterion => {
                    let (h, trace) = nw_select_bandwidth(&data.train, &b.nw_bandwidths, b.nw_truncation)?;
                    (NwEstimator::fit(&data.train, h, b.nw_truncation)?, trace)
                }
            };
            let selected = format!("h={}", est.bandwidth);
            Ok(fitted(Box::new(est), selected, Some(trace)))
        }
        EstimatorKind::Ridge => {
            let b = &c.baselines;
            let grid: Vec<(usize, f64)> = b
                .ridge_knots
                .iter()
                .flat_map(|&k| b.ridge_budgets.iter().map(move |&l| (k, l)))
                .collect();
            let (_, est, mut trace) = oracle_grid_search(
                &grid,
                |(k, l)| format!("{k}:{l}"),
                |&(knots, budget)| {
                    ridge_fit(
                        &data.train,
                        &RidgeConfig {
                            order: b.ridge_order,
                            knots,
                            budget,
                            bound: None,
                        },
                    )
                },
                &val_states,
                &c.drift,
                sel_seed,
            )?;
            trace.param = "knots:budget".into();
            let selected = format!("K={} L={} lambda={:.4e}", est.knots, est.budget, est.lambda);
            Ok(fitted(Box::new(est), selected, Some(trace)))
        }
        EstimatorKind::Hermite => {
            let b = &c.baselines;
            let (est, trace) = match b.selection {
                Selection::Oracle => {
                    let (_, est, mut trace) = oracle_grid_search(
                        &b.hermite_m,
                        |m| m.to_string(),
                        |&m| hermite_fit(&data.train, m),
                        &val_states,
                        &c.drift,
                        sel_seed,
                    )?;
                    trace.param = "m".into();
                    (est, trace)
                }
                Selection::Criterion => {
                    let sel = hermite_select_m(&data.train, &b.hermite_m, b.hermite_kappa)?;
                    (sel.estimator, sel.trace)
                }
            };
            let selected = format!("m={}", est.m);
            Ok(fitted(Box::new(est), selected, Some(trace)))
        }
        net_kind => {
            let arch = net_kind.arch().expect("network roster entry");
            let (net, report) = train_network(rc, arch, data)?;
            let selected = format!(
                "epoch={}/{} params={}",
                report.selected_epoch,
                report.records.len(),
                net.param_count()
            );
            let estimator: Box<dyn DriftEstimator> = if arch.is_denoiser() {
                let est = DenoisingEstimator::new(net, denoising_config(rc))?;
                if let Some(dir) = save_dir {
                    est.save(&dir.join(format!("{}.sdest", kind.slug())))?;
                }
                Box::new(est)
            } else {
                Box::new(RegressionEstimator { net })
            };
            Ok(Fitted {
                kind,
                estimator,
                selected,
                training: Some(report),
                trace: None,
            })
        }
    }
}

/// Build the preset network of kind `arch` and train it on the training paths.
pub fn train_network(rc: &ResolvedConfig, arch: ArchKind, data: &Datasets) -> Result<(Network, TrainReport)> {
    let c = &rc.config;
    let val_states = visited_states(&data.heldout);
    let mut net = Network::build(&rc.arch(arch))?;
    let pairs = make_increments(&data.train);
    let held_pairs;
    let val = match c.train.validation {
        ValidationMode::Oracle => Validation::Oracle {
            states: &val_states,
            drift: &c.drift,
        },
        ValidationMode::Feasible => {
            held_pairs = make_increments(&data.heldout);
            Validation::Feasible { pairs: &held_pairs }
        }
    };
    let report = train(&mut net, &pairs, &val, &c.train)?;
    Ok((net, report))
}

/// Opens `path` and writes the config-hash header line.
pub fn create_with_header(rc: &ResolvedConfig, path: &Path) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", rc.header())?;
    Ok(w)
}

fn write_fit_outputs(rc: &ResolvedConfig, f: &Fitted, out: &Path) -> Result<()> {
    if let Some(t) = &f.training {
        let mut w = create_with_header(rc, &out.join(format!("train_{}.csv", f.kind.slug())))?;
        t.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(t) = &f.trace {
        let mut w = create_with_header(rc, &out.join(format!("selection_{}.csv", f.kind.slug())))?;
        t.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Fit every roster entry, writing training and selection traces to `out` as they finish.
pub fn fit_roster(rc: &ResolvedConfig, data: &Datasets, out: &Path, save_models: bool) -> Result<Vec<Fitted>> {
    let mut fitted = Vec::new();
    for &kind in &rc.config.experiment.roster {
        let stage = format!("fit {}", kind.name());
        let f = fit_estimator(rc, kind, data, save_models.then_some(out)).map_err(|e| e.in_stage(&stage))?;
        write_fit_outputs(rc, &f, out).map_err(|e| e.in_stage(&stage))?;
        fitted.push(f);
    }
    Ok(fitted)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorResult {
    pub kind: EstimatorKind,
    pub name: String,
    pub selected: String,
    pub in_sample: ErrorSeries,
    pub oos: ErrorSeries,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub hash: String,
    pub seed: u64,
    pub results: Vec<EstimatorResult>,
}

impl EvalReport {
    pub fn summary(&self) -> Summary {
        Summary {
            name: self.name.clone(),
            hash: self.hash.clone(),
            seed: self.seed,
            rows: self
                .results
                .iter()
                .map(|r| (r.name.clone(), r.in_sample.last(), r.oos.last()))
                .collect(),
        }
    }

    pub fn result(&self, kind: EstimatorKind) -> Option<&EstimatorResult> {
        self.results.iter().find(|r| r.kind == kind)
    }
}

/// In-sample and out-of-sample error series of every fitted estimator.
pub fn evaluate(rc: &ResolvedConfig, fitted: &[Fitted], eval: &TrajectoryDataset) -> Result<EvalReport> {
    let c = &rc.config;
    let j_in = rc.in_sample_steps().min(eval.steps);
    let mut results = Vec::new();
    for f in fitted {
        let sq = squared_errors(f.estimator.as_ref(), eval, &c.drift, derive_seed(rc.seed(), 0xe57))
            .map_err(|e| e.in_stage(format!("evaluate {}", f.kind.name())))?;
        let steps = eval.steps;
        let sq_in: Vec<f64> = sq.chunks(steps).flat_map(|row| row[..j_in].iter().copied()).collect();
        results.push(EstimatorResult {
            kind: f.kind,
            name: f.kind.name().to_string(),
            selected: f.selected.clone(),
            in_sample: ErrorSeries::new(&sq_in, eval.paths, eval.delta, &c.eval.quantiles)?,
            oos: ErrorSeries::new(&sq, eval.paths, eval.delta, &c.eval.quantiles)?,
        });
    }
    Ok(EvalReport {
        name: c.experiment.name.clone(),
        hash: rc.hash.clone(),
        seed: rc.seed(),
        results,
    })
}

pub fn write_series_csv<W: Write>(report: &EvalReport, oos: bool, mut w: W) -> Result<()> {
    let levels = report.results.first().map(|r| r.oos.levels.clone()).unwrap_or_default();
    write!(w, "estimator,t,mean")?;
    for p in &levels {
        write!(w, ",q{}", (p * 100.0).round())?;
    }
    writeln!(w)?;
    for r in &report.results {
        let s = if oos { &r.oos } else { &r.in_sample };
        for (j, m) in s.mean.iter().enumerate() {
            write!(w, "{},{:.10},{:.10e}", r.name, (j + 1) as f64 * s.delta, m)?;
            for b in &s.bands {
                write!(w, ",{:.10e}", b[j])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Estimates along each coordinate axis through the mean training state.
pub fn write_slices_csv<W: Write>(rc: &ResolvedConfig, fitted: &[Fitted], train: &TrajectoryDataset, mut w: W) -> Result<()> {
    let c = &rc.config;
    let d = train.dim;
    let n = c.eval.slice_points;
    let pts = slice_points(&train.left_states(), d, n)?;
    let truth = c.drift.eval_rows(&pts)?;
    writeln!(w, "estimator,axis,y,estimate,truth")?;
    for f in fitted {
        let est = f.estimator.estimate_rows(&pts, derive_seed(rc.seed(), 0x511ce))?;
        for axis in 0..d {
            for q in 0..n {
                let row = (axis * n + q) * d;
                writeln!(
                    w,
                    "{},{},{:.10e},{:.10e},{:.10e}",
                    f.kind.name(),
                    axis,
                    pts[row + axis],
                    est[row + axis],
                    truth[row + axis]
                )?;
            }
        }
    }
    Ok(())
}

/// Simulate, fit the roster, evaluate and write every output file to `out`.
///
/// Files: `summary.csv`, `summary.txt`, `series_in.csv`, `series_oos.csv`,
/// `slices.csv`, and per estimator `train_<slug>.csv` or `selection_<slug>.csv`.
pub fn run_experiment(rc: &ResolvedConfig, out: &Path) -> Result<EvalReport> {
    fs::create_dir_all(out)?;
    let data = simulate_data(rc).map_err(|e| e.in_stage("simulate"))?;
    let fitted = fit_roster(rc, &data, out, rc.config.experiment.save_models)?;
    let report = evaluate(rc, &fitted, &data.eval)?;
    let write = || -> Result<()> {
        for (file, oos) in [("series_in.csv", false), ("series_oos.csv", true)] {
            let mut w = create_with_header(rc, &out.join(file))?;
            write_series_csv(&report, oos, &mut w)?;
            w.flush()?;
        }
        let mut w = create_with_header(rc, &out.join("slices.csv"))?;
        write_slices_csv(rc, &fitted, &data.train, &mut w)?;
        w.flush()?;
        let summary = report.summary();
        let mut w = create_with_header(rc, &out.join("summary.csv"))?;
        summary.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create_with_header(rc, &out.join("summary.txt"))?;
        write_summary_text(rc, &report, &mut w)?;
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| e.in_stage("write outputs"))?;
    Ok(report)
}

fn write_summary_text<W: Write>(rc: &ResolvedConfig, report: &EvalReport, mut w: W) -> Result<()> {
    let c = &rc.config;
    writeln!(
        w,
        "{}: drift {} (D={}), I={} training paths, J={}, delta={}, {} evaluation paths, OOS horizon {}",
        c.experiment.name,
        c.drift.family.name(),
        c.drift.dim,
        rc.training_paths(),
        c.data.steps,
        c.data.delta,
        rc.eval_paths(),
        c.eval.oos_horizon.unwrap_or(1.0)
    )?;
    writeln!(w)?;
    write!(w, "{}", super::report::render_text(&[report.summary()])?)?;
    writeln!(w)?;
    for r in &report.results {
        if !r.selected.is_empty() {
            writeln!(w, "{}: {}", r.name, r.selected)?;
        }
    }
    Ok(())
}
