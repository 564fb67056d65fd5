use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use nfpae_core::apple::{self, ArrayLayout};
use nfpae_core::baseline;
use nfpae_core::channel::{read_dump, write_dump};
use nfpae_core::mcrb::bound_for_scenario;
use nfpae_harness::config::{Config, ConfigError, Estimator};
use nfpae_harness::experiment::{run_sweep, single_point, trial_seed, with_threads, MetricRow, Point, RunError};
use nfpae_harness::output::{float, metrics_svg, write_metrics, write_table};

#[derive(Parser)]
#[command(name = "nfpae", version, about = "Near-field pose estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; built-in desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG chart next to the output.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one scene and write its received signal.
    Simulate(Common),
    /// Run the message-passing estimator on a signal file or on simulated trials.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Signal file written by `simulate`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the far-field two-stage estimator.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Per-MS lower bounds for the configured scenes.
    Bound(Common),
    /// Full Monte-Carlo sweep.
    Sweep(Common),
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Core(#[from] nfpae_core::Error),
    #[error("{0}")]
    Pool(String),
    #[error("most trials failed numerically")]
    FailureMajority,
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => CliError::Config(c),
            RunError::Pool(p) => CliError::Pool(p),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::FailureMajority => 3,
            _ => 1,
        }
    }
}

fn load(common: &Common) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.run.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn svg_path(out: &Option<PathBuf>) -> PathBuf {
    out.as_ref()
        .map(|p| p.with_extension("svg"))
        .unwrap_or_else(|| PathBuf::from("sweep.svg"))
}

fn emit_rows(rows: &[MetricRow], common: &Common) -> Result<(), CliError> {
    write_metrics(rows, sink(&common.out)?)?;
    if common.svg {
        std::fs::write(svg_path(&common.out), metrics_svg(rows))?;
    }
    if rows.iter().any(MetricRow::failure_majority) {
        return Err(CliError::FailureMajority);
    }
    Ok(())
}

fn simulate(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let Some(path) = &common.out else {
        return Err(ConfigError::Invalid("simulate needs --out for the signal file".into()).into());
    };
    let point = Point::new(cfg.clone())?;
    let seed = trial_seed(cfg.run.seed, 0, 0);
    let (sc, y) = point.draw(seed)?;
    write_dump(&y, seed, BufWriter::new(File::create(path)?))?;
    let rows: Vec<Vec<String>> = sc
        .poses
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let a = p.attitude.as_array();
            let mut r = vec![k.to_string()];
            r.extend([p.position.x, p.position.y, p.position.z, a[0], a[1], a[2]].map(float));
            r
        })
        .collect();
    write_table(&["ms", "x_m", "y_m", "z_m", "roll_rad", "pitch_rad", "yaw_rad"], &rows, io::stdout())?;
    Ok(())
}

fn estimate_file(cfg: &Config, which: Estimator, input: &Path, common: &Common) -> Result<(), CliError> {
    let (y, _) = read_dump(File::open(input)?)?;
    let point = Point::new(cfg.clone())?;
    let t = &point.template;
    let layout = ArrayLayout {
        ms: t.ms,
        pattern: t.pattern.clone(),
        ms_count: t.ms_count,
        noise_var: nfpae_core::channel::dbm_to_watts(t.noise_dbm),
    };
    let locals = t.pattern.local_positions(&t.ms)?;
    let poses: Vec<(nfpae_core::geometry::Vec3, [f64; 3], bool)> = match which {
        Estimator::Apple => apple::run(&y, &point.plan, &layout, &point.apple)?
            .estimates
            .iter()
            .map(|e| (e.position, e.attitude.as_array(), e.converged))
            .collect(),
        Estimator::Baseline => baseline::run(&y, &t.bs, &locals, t.ms_count, layout.noise_var, &point.baseline)?
            .poses
            .iter()
            .map(|e| (e.position, e.attitude.as_array(), e.converged))
            .collect(),
    };
    let rows: Vec<Vec<String>> = poses
        .iter()
        .enumerate()
        .map(|(k, (p, a, c))| {
            let mut r = vec![k.to_string()];
            r.extend([p.x, p.y, p.z, a[0], a[1], a[2]].map(float));
            r.push(c.to_string());
            r
        })
        .collect();
    write_table(
        &["ms", "x_m", "y_m", "z_m", "roll_rad", "pitch_rad", "yaw_rad", "converged"],
        &rows,
        sink(&common.out)?,
    )?;
    Ok(())
}

fn estimate(common: &Common, input: &Option<PathBuf>, which: Estimator) -> Result<(), CliError> {
    let cfg = load(common)?;
    if let Some(input) = input {
        return estimate_file(&cfg, which, input, common);
    }
    let rows = run_sweep(&single_point(&cfg, Some(which), false))?;
    emit_rows(&rows, common)
}

fn bound(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let point = Point::new(single_point(&cfg, None, true))?;
    let results = with_threads(cfg.run.threads, || {
        use rayon::prelude::*;
        (0..cfg.sweep.trials)
            .into_par_iter()
            .map(|t| {
                let (sc, _) = point.draw(trial_seed(cfg.run.seed, 0, t))?;
                bound_for_scenario(&sc, &point.plan, &point.mcrb)
            })
            .collect::<Vec<_>>()
    })?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for (t, r) in results.into_iter().enumerate() {
        let Ok(b) = r else {
            failed += 1;
            continue;
        };
        for k in 0..b.position_trace.len() {
            rows.push(vec![
                t.to_string(),
                k.to_string(),
                float(b.position_trace[k].sqrt()),
                float(b.attitude_trace[k].sqrt()),
                float(b.bias_norm.0),
                b.pseudo_inverse.to_string(),
                b.fit_converged.to_string(),
            ]);
        }
    }
    write_table(
        &["trial", "ms", "position_bound_m", "attitude_bound_rad", "bias_norm_m", "pseudo_inverse", "fit_converged"],
        &rows,
        sink(&common.out)?,
    )?;
    if 2 * failed > cfg.sweep.trials {
        return Err(CliError::FailureMajority);
    }
    Ok(())
}

fn sweep(common: &Common) -> Result<(), CliError> {
    let cfg = load(common)?;
    let rows = run_sweep(&cfg)?;
    emit_rows(&rows, common)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Estimate { common, input } => estimate(common, input, Estimator::Apple),
        Command::Baseline { common, input } => estimate(common, input, Estimator::Baseline),
        Command::Bound(c) => bound(c),
        Command::Sweep(c) => sweep(c),
    };
    eprintln!("wall time {:.3} s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
