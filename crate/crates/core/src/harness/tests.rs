use proptest::prelude::*;

use super::*;
use crate::estimators::{DriftEstimator, TrueDrift};
use crate::sde::{simulate, DriftSpec, InitialLaw, SimConfig, TrajectoryDataset};

struct Offset(DriftSpec, f64);

impl DriftEstimator for Offset {
    fn name(&self) -> String {
        "offset".into()
    }

    fn dim(&self) -> usize {
        self.0.dim
    }

    fn estimate_rows(&self, ys: &[f64], _seed: u64) -> crate::Result<Vec<f64>> {
        Ok(self.0.eval_rows(ys)?.iter().map(|v| v + self.1).collect())
    }
}

fn paths(drift: &DriftSpec, n: usize, steps: usize, seed: u64) -> TrajectoryDataset {
    simulate(
        drift,
        &SimConfig {
            paths: n,
            steps,
            delta: 1.0 / 64.0,
            sigma: 1.0,
            initial: InitialLaw::Default,
            seed,
        },
    )
    .unwrap()
}

#[test]
fn drift_error_of_exact_and_offset_estimators() {
    let drift = DriftSpec::mu4(3, 0.5);
    let ds = paths(&drift, 4, 16, 1);
    let exact = squared_errors(&TrueDrift(drift.clone()), &ds, &drift, 0).unwrap();
    assert!(exact.iter().all(|&e| e == 0.0));
    let off = squared_errors(&Offset(drift.clone(), 0.1), &ds, &drift, 0).unwrap();
    for j in [1, 7, 16] {
        let e = drift_error(&off, 4, j).unwrap();
        assert!((e - 3.0 * 0.01).abs() < 1e-15, "{e}");
    }
    assert!(drift_error(&off, 4, 0).is_err());
    assert!(drift_error(&off, 4, 17).is_err());
}

#[test]
fn drift_error_single_step_hand_value() {
    // one path, one step from y = 0.5: μ₃-free check with the OU drift −y
    let drift = DriftSpec::ou(2, 1.0);
    let ds = TrajectoryDataset::new(1, 1, 2, 0.1, 1.0, 0, vec![0.0, 0.0, 0.5, -1.5]).unwrap();
    let sq = squared_errors(&Offset(drift.clone(), 0.25), &ds, &drift, 0).unwrap();
    assert_eq!(sq.len(), 1);
    assert!((drift_error(&sq, 1, 1).unwrap() - 0.125).abs() < 1e-12);
    assert_eq!(visited_states(&ds), vec![0.5, -1.5]);
}

#[test]
fn series_matches_batch_formula_and_orders_bands() {
    let drift = DriftSpec::mu3();
    let ds = paths(&drift, 30, 64, 2);
    let sq = squared_errors(&Offset(drift.clone(), 0.3), &ds, &drift, 0).unwrap();
    let noisy: Vec<f64> = sq.iter().enumerate().map(|(i, v)| v * (1.0 + (i % 7) as f64)).collect();
    let s = ErrorSeries::new(&noisy, 30, ds.delta, &[0.1, 0.5, 0.9]).unwrap();
    for j in 1..=64 {
        let batch = drift_error(&noisy, 30, j).unwrap();
        assert!((s.mean[j - 1] - batch).abs() <= 1e-12 * batch);
        assert!(s.bands[0][j - 1] <= s.bands[1][j - 1] && s.bands[1][j - 1] <= s.bands[2][j - 1]);
    }
    assert_eq!(s.at_time(1.0), Some(s.last()));
    assert_eq!(s.at_time(0.0), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn drift_error_permutation_and_monotonicity(
        errs in proptest::collection::vec(0.0f64..5.0, 12),
        extra in 0.0f64..1.0,
        rot in 0usize..4,
    ) {
        // 4 paths × 3 steps
        let mut rows: Vec<Vec<f64>> = errs.chunks(3).map(|c| c.to_vec()).collect();
        let base = drift_error(&errs, 4, 3).unwrap();
        rows.rotate_left(rot);
        let perm: Vec<f64> = rows.concat();
        prop_assert!((drift_error(&perm, 4, 3).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
        // a path with pointwise larger errors than every existing one raises the mean
        let top = errs.iter().cloned().fold(0.0, f64::max) + extra + 1e-9;
        let mut more = errs.clone();
        more.extend([top; 3]);
        prop_assert!(drift_error(&more, 5, 3).unwrap() >= base);
    }
}

#[test]
fn ranking_marks_and_ties() {
    let n = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let (m, tie) = rank_marks(&n(&["A", "B"]), &[1.0, 2.0], |_| false);
    assert_eq!(m, vec![Mark::Best, Mark::Second]);
    assert!(tie.is_none());
    let (m, tie) = rank_marks(&n(&["A", "B", "C"]), &[3.0, 1.0, 1.0], |_| false);
    assert_eq!(m, vec![Mark::None, Mark::Best, Mark::Second]);
    assert!(tie.unwrap().contains("B=C"));
    let (m, _) = rank_marks(&n(&["Oracle", "DN", "NW"]), &[0.0, 0.5, 0.2], |s| s == "Oracle");
    assert_eq!(m, vec![Mark::None, Mark::Second, Mark::Best]);
}

#[test]
fn report_tables_follow_roster_columns() {
    let s = Summary {
        name: "mu3".into(),
        hash: "abc".into(),
        seed: 3,
        rows: vec![
            ("DN".into(), 0.0075, 0.01),
            ("NW".into(), 0.02, 0.5),
            ("Hermite".into(), 0.03, 0.2),
            ("Ridge".into(), 0.04, 0.3),
            ("FC".into(), 0.05, 0.4),
        ],
    };
    let csv = render_csv(std::slice::from_ref(&s)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "experiment,metric,DN,NW,Hermite,Ridge,FC,note");
    assert_eq!(lines[1], "mu3,in_sample,0.00750*,_0.02000_,0.03000,0.04000,0.05000,");
    assert_eq!(lines[2], "mu3,oos,0.01000*,0.50000,_0.20000_,0.30000,0.40000,");
    let text = render_text(std::slice::from_ref(&s)).unwrap();
    assert!(text.contains("0.00750*"));
    let mut buf = vec![b"# config_hash=abc seed=3\n".to_vec()];
    let mut body = Vec::new();
    s.write_csv(&mut body).unwrap();
    buf.push(body);
    let parsed = Summary::parse_csv(&String::from_utf8(buf.concat()).unwrap()).unwrap();
    assert_eq!(parsed.hash, "abc");
    assert_eq!(parsed.seed, 3);
    assert_eq!(parsed.rows.len(), 5);
    assert!((parsed.rows[0].1 - 0.0075).abs() < 1e-15);
    assert!(Summary::parse_csv("no header\n").is_err());
    let other = Summary {
        rows: vec![("DN".into(), 0.015, 0.02)],
        ..s.clone()
    };
    let rc = relative_changes(&other, &s);
    assert_eq!(rc.len(), 1);
    assert!((rc[0].1 - 1.0).abs() < 1e-12 && (rc[0].2 - 1.0).abs() < 1e-12);
}

#[test]
fn config_parsing_and_presets() {
    assert!(ExperimentConfig::parse("[experiment]\nnmae = \"x\"").is_err());
    assert!(ExperimentConfig::parse("[bogus]\n").is_err());
    let cfg = ExperimentConfig::parse(
        "[experiment]\nroster = [\"oracle\", \"nw\", \"dn\"]\n[drift]\nfamily = \"mu4\"\ndim = 8\n[train]\nepochs = 5000\n",
    )
    .unwrap();
    let desk = cfg.clone().resolve(Some(7), None).unwrap();
    assert_eq!(desk.training_paths(), 200);
    assert_eq!(desk.eval_paths(), 100);
    assert_eq!(desk.oos_steps(), 5 * 256);
    assert_eq!(desk.config.train.epochs, 300);
    assert_eq!(desk.seed(), 7);
    assert!(desk.header().starts_with("# config_hash=") && desk.header().ends_with(" seed=7"));
    let full = cfg.clone().resolve(Some(7), Some(Preset::Full)).unwrap();
    assert_eq!(full.training_paths(), 1000);
    assert_eq!(full.oos_steps(), 20 * 256);
    assert_eq!(full.config.train.epochs, 5000);
    assert_ne!(desk.hash, full.hash);
    assert_eq!(desk.hash, cfg.clone().resolve(Some(7), None).unwrap().hash);
    assert_ne!(desk.hash, cfg.clone().resolve(Some(8), None).unwrap().hash);
    assert_eq!(desk.arch(crate::nets::ArchKind::Dn).dim, 8);
    // one-dimensional baselines are rejected for D > 1
    let bad = ExperimentConfig::parse("[experiment]\nroster = [\"ridge\"]\n[drift]\nfamily = \"mu4\"\ndim = 2\n").unwrap();
    assert!(bad.resolve(None, None).unwrap_err().is_validation());
    let horizon = ExperimentConfig::parse("[eval]\noos_horizon = 1.001").unwrap();
    assert!(horizon.resolve(None, None).is_err());
    assert!("desk".parse::<Preset>().is_ok() && "huge".parse::<Preset>().is_err());
}

#[test]
fn slices_hold_other_coordinates_at_the_mean() {
    let states = vec![0.0, 10.0, 1.0, 20.0, 2.0, 30.0];
    let p = slice_points(&states, 2, 3).unwrap();
    assert_eq!(p.len(), 2 * 3 * 2);
    // axis 0 slice: second coordinate at its mean 20
    assert!(p[1] == 20.0 && p[3] == 20.0 && p[5] == 20.0);
    assert!(p[0] < p[2] && p[2] < p[4]);
    // axis 1 slice: first coordinate at its mean 1
    assert!(p[6] == 1.0 && p[8] == 1.0 && p[10] == 1.0);
    assert!(slice_points(&states, 2, 1).is_err());
}

fn tiny_config(roster: &str) -> ResolvedConfig {
    ExperimentConfig::parse(&format!(
        "[experiment]\nname = \"tiny\"\nroster = [{roster}]\n\
         [drift]\nfamily = \"mu3\"\n\
         [data]\npaths = 20\nsteps = 64\ndelta = 0.015625\nheldout_paths = 5\n\
         [eval]\npaths = 10\noos_horizon = 2.0\nslice_points = 5\n\
         [baselines]\nnw_bandwidths = [0.1, 0.3]\nridge_knots = [4]\nridge_budgets = [10.0]\nhermite_m = [1, 2, 3]\n\
         [train]\nepochs = 2\nbatch_size = 128\n\
         [estimator]\nk = 4\n"
    ))
    .unwrap()
    .resolve(Some(3), None)
    .unwrap()
}

#[test]
fn oracle_roster_has_zero_error_and_outputs_are_reproducible() {
    let rc = tiny_config("\"oracle\", \"nw\", \"ridge\", \"hermite\", \"dn\"");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let reports: Vec<EvalReport> = dirs.iter().map(|d| run_experiment(&rc, d.path()).unwrap()).collect();
    let oracle = reports[0].result(EstimatorKind::Oracle).unwrap();
    assert_eq!(oracle.in_sample.last(), 0.0);
    assert_eq!(oracle.oos.last(), 0.0);
    assert_eq!(oracle.oos.mean.len(), 128);
    assert_eq!(oracle.in_sample.mean.len(), 64);
    for file in [
        "summary.csv",
        "summary.txt",
        "series_in.csv",
        "series_oos.csv",
        "slices.csv",
        "train_dn.csv",
        "selection_nw.csv",
        "selection_ridge.csv",
        "selection_hermite.csv",
    ] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
        assert!(String::from_utf8(a).unwrap().starts_with(&rc.header()), "{file} lacks the header");
    }
    let text = std::fs::read_to_string(dirs[0].path().join("summary.csv")).unwrap();
    let s = Summary::parse_csv(&text).unwrap();
    let direct = reports[0].summary();
    assert_eq!((&s.name, &s.hash, s.seed), (&direct.name, &direct.hash, direct.seed));
    for (a, b) in s.rows.iter().zip(&direct.rows) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() <= 1e-9 * b.1.max(1e-300) && (a.2 - b.2).abs() <= 1e-9 * b.2.max(1e-300));
    }
}

#[test]
fn stage_failures_name_the_stage() {
    let mut rc = tiny_config("\"hermite\"");
    rc.config.baselines.hermite_m = vec![];
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&rc, dir.path()).unwrap_err();
    assert!(err.to_string().contains("fit Hermite"), "{err}");
}

#[test]
fn sweep_and_estimate_commands_write_csvs() {
    let mut rc = tiny_config("\"oracle\", \"dn\"");
    rc.config.sweep.taus = 4;
    rc.config.sweep.ks = vec![1, 2];
    rc.config.sweep.per_axis = 5;
    rc.config.sweep.steps = 8;
    let dir = tempfile::tempdir().unwrap();
    let rows = run_sweep(&rc, dir.path()).unwrap();
    assert_eq!(rows.len(), 8);
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().nth(1), Some("tau,K,e2"));
    run_estimate(&rc, dir.path()).unwrap();
    let est = std::fs::read_to_string(dir.path().join("estimates.csv")).unwrap();
    assert_eq!(est.lines().nth(1), Some("estimator,y1,est1,true1"));
    assert_eq!(est.lines().count(), 2 + 2 * 5);
    run_simulate(&rc, dir.path()).unwrap();
    let ds = TrajectoryDataset::load(&dir.path().join("train.sdds")).unwrap();
    assert_eq!((ds.paths, ds.steps), (20, 64));
    run_train(&rc, dir.path()).unwrap();
    assert!(dir.path().join("dn.sdest").exists());
}

#[test]
fn selftest_passes() {
    let checks = selftest().unwrap();
    for c in &checks {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}
