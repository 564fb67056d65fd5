//! Random MS placement and the desk-scale reference configuration.

use std::f64::consts::PI;

use rand::Rng;

use crate::channel::{dbm_to_watts, Scenario};
use crate::error::{invalid, Result};
use crate::geometry::{wavelength, EulerAngles, Pose, TransmitPattern, UraSpec, Vec3};

/// Supports of the uniform draws for one MS pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRanges {
    pub distance: (f64, f64),
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
    pub roll: (f64, f64),
    pub pitch: (f64, f64),
    pub yaw: (f64, f64),
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            distance: (5.0, 8.0),
            azimuth: (0.0, 2.0 * PI),
            elevation: (PI / 12.0, PI / 2.0),
            roll: (-PI, PI),
            pitch: (-PI / 3.0, PI / 3.0),
            yaw: (-PI, PI),
        }
    }
}

impl PoseRanges {
    pub fn validate(&self) -> Result<()> {
        let pairs = [self.distance, self.azimuth, self.elevation, self.roll, self.pitch, self.yaw];
        if pairs.iter().any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(invalid("every range needs finite bounds with low <= high"));
        }
        if !(self.distance.0 > 0.0) {
            return Err(invalid("distance must be positive"));
        }
        if self.elevation.0 < 0.0 || self.elevation.1 > PI / 2.0 {
            return Err(invalid("elevation must lie in [0, pi/2] so the MS faces the array"));
        }
        if self.pitch.0 < -PI / 2.0 || self.pitch.1 > PI / 2.0 {
            return Err(invalid("pitch must lie in [-pi/2, pi/2]"));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Position from distance, azimuth in the array plane and elevation above it.
pub fn spherical_position(distance: f64, azimuth: f64, elevation: f64) -> Vec3 {
    Vec3::new(
        distance * elevation.cos() * azimuth.cos(),
        distance * elevation.cos() * azimuth.sin(),
        distance * elevation.sin(),
    )
}

pub fn sample_pose<R: Rng + ?Sized>(rng: &mut R, ranges: &PoseRanges) -> Result<Pose> {
    let r = draw(rng, ranges.distance);
    let az = draw(rng, ranges.azimuth);
    let el = draw(rng, ranges.elevation);
    let attitude = EulerAngles::new(draw(rng, ranges.roll), draw(rng, ranges.pitch), draw(rng, ranges.yaw))?;
    Pose::new(spherical_position(r, az, el), attitude)
}

pub fn sample_poses<R: Rng + ?Sized>(rng: &mut R, ranges: &PoseRanges, count: usize) -> Result<Vec<Pose>> {
    ranges.validate()?;
    (0..count).map(|_| sample_pose(rng, ranges)).collect()
}

/// Fixed part of a scene: everything but the poses.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTemplate {
    pub frequency: f64,
    pub bs: UraSpec,
    pub ms: UraSpec,
    pub pattern: TransmitPattern,
    pub ms_count: usize,
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub rician_k: Option<f64>,
}

impl SceneTemplate {
    /// 32x32 array, 16x16 terminals, 28 GHz, five-antenna pattern, -70 dBm noise.
    pub fn desk(ms_count: usize, tx_power_dbm: f64) -> Result<Self> {
        let lambda = wavelength(28e9)?;
        let bs = UraSpec::half_wavelength(32, 32, lambda)?;
        let ms = UraSpec::half_wavelength(16, 16, lambda)?;
        Ok(Self {
            frequency: 28e9,
            bs,
            ms,
            pattern: TransmitPattern::t5(&ms)?,
            ms_count,
            tx_power_dbm,
            noise_dbm: -70.0,
            rician_k: None,
        })
    }

    pub fn wavelength(&self) -> f64 {
        wavelength(self.frequency).expect("validated frequency")
    }

    pub fn with_poses(&self, poses: Vec<Pose>) -> Result<Scenario> {
        if poses.len() != self.ms_count {
            return Err(invalid("one pose per MS required"));
        }
        let sc = Scenario {
            wavelength: wavelength(self.frequency)?,
            bs: self.bs,
            ms: self.ms,
            gains: vec![1.0; poses.len()],
            poses,
            pattern: self.pattern.clone(),
            tx_power: dbm_to_watts(self.tx_power_dbm),
            noise_var: dbm_to_watts(self.noise_dbm),
            rician_k: self.rician_k,
            allow_fresnel_violation: false,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, ranges: &PoseRanges) -> Result<Scenario> {
        self.with_poses(sample_poses(rng, ranges, self.ms_count)?)
    }
}
