//! Experiment configuration read from TOML.
//!
//! Every table rejects unknown keys. Angles are in radians, powers in dBm.
//!
//! ```toml
//! [scenario]
//! frequency_hz = 28e9
//! bs = [32, 32]
//! ms = [16, 16]
//! ms_count = 1
//! pattern = 5            # 3, 5 or 9 activated antennas
//! tx_power_dbm = 20.0
//! noise_dbm = -70.0
//! rician_k = inf         # omit or inf for pure line of sight
//!
//! [poses]
//! distance = [5.0, 8.0]
//!
//! [partition]
//! subarrays = 16         # a square number dividing the array
//!
//! [sweep]
//! variable = "tx_power_dbm"
//! values = [0, 5, 10, 15, 20]
//! trials = 50
//! estimators = ["apple", "baseline"]
//! bound = true
//! ```

use std::path::Path;

use serde::Deserialize;

use nfpae_core::apple::AppleConfig;
use nfpae_core::circular::VonMises;
use nfpae_core::geometry::{wavelength, EulerAngles, Pose, TransmitPattern, UraSpec, Vec3};
use nfpae_core::mcrb::McrbOptions;
use nfpae_core::partition::{uniform_partition_with, PartitionPlan, PhaseReference};
use nfpae_core::scene::{PoseRanges, SceneTemplate};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl From<nfpae_core::Error> for ConfigError {
    fn from(e: nfpae_core::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub frequency_hz: f64,
    pub bs: [usize; 2],
    pub ms: [usize; 2],
    pub ms_count: usize,
    pub pattern: usize,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub rician_k: Option<f64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            frequency_hz: 28e9,
            bs: [32, 32],
            ms: [16, 16],
            ms_count: 1,
            pattern: 5,
            tx_power_dbm: 20.0,
            noise_dbm: -70.0,
            rician_k: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PoseSection {
    pub distance: [f64; 2],
    pub azimuth: [f64; 2],
    pub elevation: [f64; 2],
    pub roll: [f64; 2],
    pub pitch: [f64; 2],
    pub yaw: [f64; 2],
    /// Fixed poses `[x, y, z, roll, pitch, yaw]`, one per MS; overrides the draws.
    pub fixed: Option<Vec<[f64; 6]>>,
}

impl Default for PoseSection {
    fn default() -> Self {
        let r = PoseRanges::default();
        Self {
            distance: r.distance.into(),
            azimuth: r.azimuth.into(),
            elevation: r.elevation.into(),
            roll: r.roll.into(),
            pitch: r.pitch.into(),
            yaw: r.yaw.into(),
            fixed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceChoice {
    #[default]
    Centroid,
    Antenna,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    pub subarrays: usize,
    pub reference: ReferenceChoice,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            subarrays: 16,
            reference: ReferenceChoice::Centroid,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AppleSection {
    pub iterations: Option<usize>,
    pub sigma_ini: f64,
    pub position_prior_std: f64,
    pub attitude_kappa: f64,
    /// Distance used for the gain prior; defaults to the middle of the distance range.
    pub nominal_distance: Option<f64>,
    pub aoa_sweeps: usize,
}

impl Default for AppleSection {
    fn default() -> Self {
        Self {
            iterations: None,
            sigma_ini: 1e2,
            position_prior_std: 1e3,
            attitude_kappa: 1e-6,
            nominal_distance: None,
            aoa_sweeps: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub fd_step: f64,
    pub max_condition: f64,
    pub grid_fallback: bool,
}

impl Default for BoundSection {
    fn default() -> Self {
        let o = McrbOptions::default();
        Self {
            fd_step: o.fd_step,
            max_condition: o.max_condition,
            grid_fallback: o.grid_fallback,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    TxPowerDbm,
    Subarrays,
    Pattern,
    RicianK,
    /// Lower edge of the distance range; the width of the configured range is kept.
    Distance,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::TxPowerDbm => "tx_power_dbm",
            Self::Subarrays => "subarrays",
            Self::Pattern => "pattern",
            Self::RicianK => "rician_k",
            Self::Distance => "distance",
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Apple,
    Baseline,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Apple => "apple",
            Self::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub estimators: Vec<Estimator>,
    pub bound: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            variable: SweepVariable::TxPowerDbm,
            values: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 50,
            estimators: vec![Estimator::Apple, Estimator::Baseline],
            bound: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 1, threads: 0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: ScenarioSection,
    pub poses: PoseSection,
    pub partition: PartitionSection,
    pub apple: AppleSection,
    pub bound: BoundSection,
    pub sweep: SweepSection,
    pub run: RunSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        if s.ms_count == 0 {
            return Err(bad("scenario.ms_count must be at least 1"));
        }
        if !s.tx_power_dbm.is_finite() || !s.noise_dbm.is_finite() {
            return Err(bad("powers must be finite dBm values"));
        }
        if let Some(k) = s.rician_k {
            if !(k > 0.0) {
                return Err(bad("scenario.rician_k must be positive"));
            }
        }
        self.ranges().validate()?;
        if let Some(fixed) = &self.poses.fixed {
            if fixed.len() != s.ms_count {
                return Err(bad("poses.fixed needs one entry per MS"));
            }
        }
        let sw = &self.sweep;
        if sw.trials == 0 {
            return Err(bad("sweep.trials must be at least 1"));
        }
        if sw.values.is_empty() {
            return Err(bad("sweep.values must not be empty"));
        }
        if sw.estimators.is_empty() && !sw.bound {
            return Err(bad("nothing to run: no estimators and no bound"));
        }
        if self.apple.sigma_ini <= 0.0 || self.apple.position_prior_std <= 0.0 || self.apple.attitude_kappa < 0.0 {
            return Err(bad("apple spreads must be positive and kappa non-negative"));
        }
        // every sweep point must build
        for &v in &sw.values {
            let point = self.at(v)?;
            point.template()?;
            point.plan()?;
        }
        Ok(())
    }

    pub fn ranges(&self) -> PoseRanges {
        let p = &self.poses;
        PoseRanges {
            distance: (p.distance[0], p.distance[1]),
            azimuth: (p.azimuth[0], p.azimuth[1]),
            elevation: (p.elevation[0], p.elevation[1]),
            roll: (p.roll[0], p.roll[1]),
            pitch: (p.pitch[0], p.pitch[1]),
            yaw: (p.yaw[0], p.yaw[1]),
        }
    }

    /// Copy of this config with the sweep variable set to `value`.
    pub fn at(&self, value: f64) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        let whole = |v: f64, what: &str| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(bad(format!("{what} sweep values must be positive integers, got {v}")))
            }
        };
        match self.sweep.variable {
            SweepVariable::TxPowerDbm => c.scenario.tx_power_dbm = value,
            SweepVariable::Subarrays => c.partition.subarrays = whole(value, "subarray")?,
            SweepVariable::Pattern => c.scenario.pattern = whole(value, "pattern")?,
            SweepVariable::RicianK => {
                c.scenario.rician_k = if value.is_infinite() { None } else { Some(value) };
            }
            SweepVariable::Distance => {
                let width = self.poses.distance[1] - self.poses.distance[0];
                c.poses.distance = [value, value + width];
            }
        }
        Ok(c)
    }

    pub fn template(&self) -> Result<SceneTemplate, ConfigError> {
        let s = &self.scenario;
        let lambda = wavelength(s.frequency_hz)?;
        let bs = UraSpec::half_wavelength(s.bs[0], s.bs[1], lambda)?;
        let ms = UraSpec::half_wavelength(s.ms[0], s.ms[1], lambda)?;
        let pattern = match s.pattern {
            3 => TransmitPattern::t3(&ms)?,
            5 => TransmitPattern::t5(&ms)?,
            9 => TransmitPattern::t9(&ms)?,
            n => return Err(bad(format!("pattern must be 3, 5 or 9, got {n}"))),
        };
        Ok(SceneTemplate {
            frequency: s.frequency_hz,
            bs,
            ms,
            pattern,
            ms_count: s.ms_count,
            tx_power_dbm: s.tx_power_dbm,
            noise_dbm: s.noise_dbm,
            rician_k: s.rician_k,
        })
    }

    pub fn plan(&self) -> Result<PartitionPlan, ConfigError> {
        let t = self.template()?;
        let m = self.partition.subarrays;
        let side = (m as f64).sqrt().round() as usize;
        if side == 0 || side * side != m {
            return Err(bad(format!("partition.subarrays must be a square number, got {m}")));
        }
        let reference = match self.partition.reference {
            ReferenceChoice::Centroid => PhaseReference::Centroid,
            ReferenceChoice::Antenna => PhaseReference::Antenna,
        };
        Ok(uniform_partition_with(&t.bs, side, side, t.wavelength(), reference)?)
    }

    pub fn fixed_poses(&self) -> Result<Option<Vec<Pose>>, ConfigError> {
        let Some(fixed) = &self.poses.fixed else {
            return Ok(None);
        };
        fixed
            .iter()
            .map(|f| Ok(Pose::new(Vec3::new(f[0], f[1], f[2]), EulerAngles::new(f[3], f[4], f[5])?)?))
            .collect::<Result<Vec<_>, ConfigError>>()
            .map(Some)
    }

    pub fn nominal_distance(&self) -> f64 {
        self.apple
            .nominal_distance
            .unwrap_or(0.5 * (self.poses.distance[0] + self.poses.distance[1]))
    }

    pub fn apple_config(&self) -> Result<AppleConfig, ConfigError> {
        let t = self.template()?;
        let tx = nfpae_core::channel::dbm_to_watts(t.tx_power_dbm);
        let mut cfg = AppleConfig::new(nfpae_core::apple::nominal_coeff_var(
            t.wavelength(),
            tx,
            1.0,
            self.nominal_distance(),
        ));
        cfg.iterations = self.apple.iterations;
        cfg.sigma_ini = self.apple.sigma_ini;
        cfg.position_prior_std = self.apple.position_prior_std;
        let kappa = self.apple.attitude_kappa;
        cfg.attitude_priors = vec![[VonMises::new(0.0, kappa); 3]; t.ms_count];
        cfg.aoa.max_sweeps = self.apple.aoa_sweeps;
        Ok(cfg)
    }

    pub fn mcrb_options(&self) -> McrbOptions {
        McrbOptions {
            fd_step: self.bound.fd_step,
            max_condition: self.bound.max_condition,
            grid_fallback: self.bound.grid_fallback,
            ..McrbOptions::default()
        }
    }
}
