//! Monte-Carlo trials and sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use nfpae_core::apple::{self, AppleConfig, ArrayLayout};
use nfpae_core::baseline::{self, BaselineOptions};
use nfpae_core::channel::{simulate_received, ReceivedSignal, Scenario};
use nfpae_core::mcrb::{bound_for_scenario, McrbOptions};
use nfpae_core::metrics::{score, summarize, ScoredPose, TrialError};
use nfpae_core::partition::PartitionPlan;
use nfpae_core::scene::SceneTemplate;

use crate::config::{Config, ConfigError, Estimator, SweepVariable};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial, a function of the base seed and its coordinates only.
pub fn trial_seed(base: u64, point: usize, trial: usize) -> u64 {
    mix64(mix64(mix64(base) ^ point as u64) ^ trial as u64)
}

/// Everything fixed across the trials of one sweep point.
pub struct Point {
    pub config: Config,
    pub template: SceneTemplate,
    pub plan: PartitionPlan,
    pub apple: AppleConfig,
    pub mcrb: McrbOptions,
    pub baseline: BaselineOptions,
}

impl Point {
    pub fn new(config: Config) -> Result<Self, ConfigError> {
        Ok(Self {
            template: config.template()?,
            plan: config.plan()?,
            apple: config.apple_config()?,
            mcrb: config.mcrb_options(),
            baseline: BaselineOptions::default(),
            config,
        })
    }

    /// Scene and received signal of one trial.
    pub fn draw(&self, seed: u64) -> nfpae_core::Result<(Scenario, ReceivedSignal)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = match self.config.fixed_poses().map_err(|e| nfpae_core::Error::InvalidInput(e.to_string()))? {
            Some(p) => self.template.with_poses(p)?,
            None => self.template.sample(&mut rng, &self.config.ranges())?,
        };
        let y = simulate_received(&sc, &mut rng)?;
        Ok((sc, y))
    }

    pub fn estimate(&self, which: Estimator, sc: &Scenario, y: &ReceivedSignal) -> nfpae_core::Result<Vec<ScoredPose>> {
        let poses: Vec<ScoredPose> = match which {
            Estimator::Apple => apple::run(y, &self.plan, &ArrayLayout::of(sc), &self.apple)?
                .estimates
                .iter()
                .map(|e| ScoredPose {
                    position: e.position,
                    basis: e.basis,
                })
                .collect(),
            Estimator::Baseline => {
                baseline::run(y, &sc.bs, &sc.local_positions(), sc.ms_count(), sc.noise_var, &self.baseline)?
                    .poses
                    .iter()
                    .map(|e| ScoredPose {
                        position: e.position,
                        basis: e.basis,
                    })
                    .collect()
            }
        };
        let finite = poses
            .iter()
            .all(|p| p.position.iter().chain(p.basis.ex.iter()).chain(p.basis.ey.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(nfpae_core::Error::Numerical("non-finite estimate".into()));
        }
        Ok(poses)
    }
}

/// Outcome of one trial for every requested estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub errors: Vec<Option<TrialError>>,
    /// Summed position and attitude traces of the bound.
    pub bound: Option<(f64, f64)>,
}

pub fn run_trial(point: &Point, seed: u64) -> TrialOutcome {
    let estimators = &point.config.sweep.estimators;
    let Ok((sc, y)) = point.draw(seed) else {
        return TrialOutcome {
            errors: vec![None; estimators.len()],
            bound: None,
        };
    };
    let errors = estimators
        .iter()
        .map(|&e| point.estimate(e, &sc, &y).and_then(|est| score(&est, &sc.poses)).ok())
        .collect();
    let bound = if point.config.sweep.bound {
        bound_for_scenario(&sc, &point.plan, &point.mcrb).ok().map(|b| {
            (
                b.position_trace.iter().sum::<f64>(),
                b.attitude_trace.iter().sum::<f64>(),
            )
        })
    } else {
        None
    };
    TrialOutcome { errors, bound }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub variable: &'static str,
    pub value: f64,
    pub estimator: &'static str,
    /// Successful trials.
    pub trials: usize,
    pub failed: usize,
    pub rmse_position: Option<f64>,
    pub nmse_rotation: Option<f64>,
    pub sq_error_std_err: Option<f64>,
    pub bound_position: Option<f64>,
    pub bound_attitude: Option<f64>,
}

impl MetricRow {
    pub fn failure_majority(&self) -> bool {
        2 * self.failed > self.trials + self.failed
    }
}

/// Runs every trial of one point in parallel and aggregates in trial order.
pub fn run_point(point: &Point, point_index: usize, value: f64) -> Vec<MetricRow> {
    let cfg = &point.config;
    let seed = cfg.run.seed;
    let outcomes: Vec<TrialOutcome> = (0..cfg.sweep.trials)
        .into_par_iter()
        .map(|t| run_trial(point, trial_seed(seed, point_index, t)))
        .collect();
    let bounds: Vec<(f64, f64)> = outcomes.iter().filter_map(|o| o.bound).collect();
    let (bound_position, bound_attitude) = if bounds.is_empty() {
        (None, None)
    } else {
        let n = bounds.len() as f64;
        (
            Some((bounds.iter().map(|b| b.0).sum::<f64>() / n).sqrt()),
            Some((bounds.iter().map(|b| b.1).sum::<f64>() / n).sqrt()),
        )
    };
    let variable = cfg.sweep.variable.name();
    let mut rows: Vec<MetricRow> = cfg
        .sweep
        .estimators
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let ok: Vec<TrialError> = outcomes.iter().filter_map(|o| o.errors[i]).collect();
            let summary = summarize(&ok);
            MetricRow {
                variable,
                value,
                estimator: e.name(),
                trials: ok.len(),
                failed: outcomes.len() - ok.len(),
                rmse_position: summary.map(|s| s.rmse_position),
                nmse_rotation: summary.map(|s| s.nmse_rotation),
                sq_error_std_err: summary.map(|s| s.sq_error_std_err),
                bound_position,
                bound_attitude,
            }
        })
        .collect();
    if rows.is_empty() {
        rows.push(MetricRow {
            variable,
            value,
            estimator: "mcrb",
            trials: bounds.len(),
            failed: outcomes.len() - bounds.len(),
            rmse_position: None,
            nmse_rotation: None,
            sq_error_std_err: None,
            bound_position,
            bound_attitude,
        });
    }
    rows
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Runs `f` on a pool of `threads` workers; zero means one per core.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// All sweep points in order.
pub fn run_sweep(cfg: &Config) -> Result<Vec<MetricRow>, RunError> {
    let points = cfg
        .sweep
        .values
        .iter()
        .map(|&v| Ok((v, Point::new(cfg.at(v)?)?)))
        .collect::<Result<Vec<_>, ConfigError>>()?;
    with_threads(cfg.run.threads, || {
        points
            .iter()
            .enumerate()
            .flat_map(|(i, (v, p))| run_point(p, i, *v))
            .collect()
    })
}

/// Current value of the sweep variable in the base scenario.
pub fn base_value(cfg: &Config) -> f64 {
    match cfg.sweep.variable {
        SweepVariable::TxPowerDbm => cfg.scenario.tx_power_dbm,
        SweepVariable::Subarrays => cfg.partition.subarrays as f64,
        SweepVariable::Pattern => cfg.scenario.pattern as f64,
        SweepVariable::RicianK => cfg.scenario.rician_k.unwrap_or(f64::INFINITY),
        SweepVariable::Distance => cfg.poses.distance[0],
    }
}

/// The base scenario as a one-point sweep of a single estimator.
pub fn single_point(cfg: &Config, estimator: Option<Estimator>, bound: bool) -> Config {
    let mut c = cfg.clone();
    c.sweep.values = vec![base_value(cfg)];
    c.sweep.estimators = estimator.into_iter().collect();
    c.sweep.bound = bound;
    c
}
