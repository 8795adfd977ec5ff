use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdlab::harness::{
    relative_changes, render_csv, render_text, run_estimate, run_experiment, run_simulate, run_sweep, run_train,
    selftest, ExperimentConfig, Preset, ResolvedConfig, Summary,
};
use sdlab::Error;

#[derive(Parser)]
#[command(name = "sdlab", version, about = "Drift estimation for SDEs by conditional denoising")]
struct Cli {
    /// Worker threads (defaults to all cores); results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides the configured preset (desk or full).
    #[arg(long, value_name = "NAME")]
    preset: Option<Preset>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate training, held-out and evaluation trajectories.
    Simulate(Common),
    /// Fit the roster and save trained networks.
    Train(Common),
    /// Fit the roster and write estimates on a state grid and along slices.
    Estimate(Common),
    /// Train a denoiser and sweep the diffusion time used by the estimator.
    SweepTau(Common),
    /// Full experiment: simulate, fit, evaluate in-sample and out-of-sample.
    Evaluate(Common),
    /// Combine summary.csv files into marked comparison tables.
    Report {
        /// summary.csv files written by `evaluate`.
        #[arg(required = true, value_name = "SUMMARY")]
        inputs: Vec<PathBuf>,
        /// Reference summary; writes relative error changes against it.
        #[arg(long, value_name = "SUMMARY")]
        relative_to: Option<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Run the fast invariant checks.
    Selftest,
}

fn resolve(c: &Common) -> sdlab::Result<ResolvedConfig> {
    let cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.resolve(c.seed, c.preset)
}

fn read_summary(p: &Path) -> sdlab::Result<Summary> {
    let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    Summary::parse_csv(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

fn report(inputs: &[PathBuf], relative_to: Option<&Path>, out: &Path) -> sdlab::Result<()> {
    let reports = inputs.iter().map(|p| read_summary(p)).collect::<sdlab::Result<Vec<_>>>()?;
    let header: String = reports
        .iter()
        .map(|s| format!("# experiment={} config_hash={} seed={}\n", s.name, s.hash, s.seed))
        .collect();
    fs::create_dir_all(out)?;
    fs::write(out.join("report.csv"), format!("{header}{}", render_csv(&reports)?))?;
    let text = render_text(&reports)?;
    fs::write(out.join("report.txt"), format!("{header}{text}"))?;
    print!("{text}");
    if let Some(r) = relative_to {
        let base = read_summary(r)?;
        let mut s = format!("{header}# reference config_hash={} seed={}\nexperiment,estimator,rel_in,rel_oos\n", base.hash, base.seed);
        for rep in &reports {
            for (name, a, b) in relative_changes(rep, &base) {
                s.push_str(&format!("{},{name},{a:.10e},{b:.10e}\n", rep.name));
            }
        }
        fs::write(out.join("relative_change.csv"), s)?;
    }
    Ok(())
}

fn run(cli: Cli) -> sdlab::Result<bool> {
    match cli.command {
        Command::Simulate(c) => run_simulate(&resolve(&c)?, &c.out)?,
        Command::Train(c) => run_train(&resolve(&c)?, &c.out)?,
        Command::Estimate(c) => run_estimate(&resolve(&c)?, &c.out)?,
        Command::SweepTau(c) => {
            let rows = run_sweep(&resolve(&c)?, &c.out)?;
            println!("{} sweep rows written to {}", rows.len(), c.out.join("sweep.csv").display());
        }
        Command::Evaluate(c) => {
            let rc = resolve(&c)?;
            run_experiment(&rc, &c.out)?;
            print!("{}", fs::read_to_string(c.out.join("summary.txt"))?);
        }
        Command::Report { inputs, relative_to, out } => report(&inputs, relative_to.as_deref(), &out)?,
        Command::Selftest => {
            let checks = selftest()?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
