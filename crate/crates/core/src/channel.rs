//! Spherical-wavefront received signals and their per-subarray plane-wave approximation.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    aoa_cosines, bs_antenna_position, fresnel_distance, ms_antenna_global_position, Pose,
    TransmitPattern, UraSpec, Vec2, Vec3,
};
use crate::partition::PartitionPlan;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// One simulated deployment: one BS, `poses.len()` identical MS arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub wavelength: f64,
    pub bs: UraSpec,
    pub ms: UraSpec,
    pub poses: Vec<Pose>,
    pub pattern: TransmitPattern,
    pub tx_power: f64,
    pub noise_var: f64,
    /// Per-MS antenna gain.
    pub gains: Vec<f64>,
    /// LoS-to-scatter power ratio; `None` means pure line of sight.
    pub rician_k: Option<f64>,
    pub allow_fresnel_violation: bool,
}

impl Scenario {
    pub fn ms_count(&self) -> usize {
        self.poses.len()
    }

    pub fn slots(&self) -> usize {
        self.pattern.len()
    }

    pub fn local_positions(&self) -> Vec<Vec2> {
        self.pattern
            .local_positions(&self.ms)
            .expect("pattern validated against the MS array")
    }

    /// Global position of the antenna MS `k` activates in slot `t` (both 0-based).
    pub fn ms_antenna(&self, k: usize, t: usize) -> Vec3 {
        let (q, s) = self.pattern.slots()[t];
        let local = crate::geometry::ms_local_antenna_position(&self.ms, q, s)
            .expect("pattern validated against the MS array");
        ms_antenna_global_position(&self.poses[k], &local)
    }

    pub fn ms_antennas(&self) -> Vec<Vec3> {
        (0..self.ms_count())
            .flat_map(|k| (0..self.slots()).map(move |t| (k, t)))
            .map(|(k, t)| self.ms_antenna(k, t))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() {
            return Err(invalid("scenario needs at least one MS"));
        }
        if self.gains.len() != self.poses.len() {
            return Err(invalid("one antenna gain per MS required"));
        }
        if !(self.wavelength > 0.0) || self.tx_power < 0.0 || self.noise_var < 0.0 {
            return Err(invalid("wavelength, power and noise must be non-negative"));
        }
        if let Some(k) = self.rician_k {
            if !(k > 0.0) {
                return Err(invalid("Rician factor must be positive"));
            }
        }
        if !self.allow_fresnel_violation {
            let fresnel = fresnel_distance(self.bs.largest_dimension(), self.wavelength)?;
            for p in self.ms_antennas() {
                if p.norm() < fresnel {
                    return Err(Error::InsideFresnel {
                        distance: p.norm(),
                        fresnel,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Complex baseband samples, one row per BS element (`(u-1) + (v-1)*nx`), one column per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub samples: DMatrix<Complex64>,
}

impl ReceivedSignal {
    pub fn zeros(rows: usize, slots: usize) -> Self {
        Self {
            samples: DMatrix::zeros(rows, slots),
        }
    }

    pub fn rows(&self) -> usize {
        self.samples.nrows()
    }

    pub fn slots(&self) -> usize {
        self.samples.ncols()
    }
}

/// Free-space line-of-sight coefficient between two isotropic antennas.
pub fn nearfield_channel_coeff(bs: &Vec3, ms: &Vec3, gain: f64, lambda: f64) -> Result<Complex64> {
    let r = (ms - bs).norm();
    if !(r > 0.0) {
        return Err(invalid("coincident antennas"));
    }
    Ok(los(r, gain, lambda))
}

fn los(r: f64, gain: f64, lambda: f64) -> Complex64 {
    Complex64::from_polar(gain * lambda / (4.0 * PI * r), -2.0 * PI * r / lambda)
}

pub(crate) fn cscg<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn bs_positions(bs: &UraSpec) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(bs.len());
    for v in 1..=bs.ny {
        for u in 1..=bs.nx {
            out.push(bs_antenna_position(bs, u, v).expect("in range"));
        }
    }
    out
}

/// Noiseless LoS signal of every link, `sqrt(Px) * h`.
pub fn exact_mean(sc: &Scenario) -> DMatrix<Complex64> {
    let bs = bs_positions(&sc.bs);
    let x = sc.tx_power.sqrt();
    let mut y = DMatrix::zeros(bs.len(), sc.slots());
    for t in 0..sc.slots() {
        for k in 0..sc.ms_count() {
            let p = sc.ms_antenna(k, t);
            for (row, b) in bs.iter().enumerate() {
                y[(row, t)] += los((p - b).norm(), sc.gains[k], sc.wavelength) * x;
            }
        }
    }
    y
}

/// Exact spherical-wavefront signal plus noise.
///
/// Noise is drawn first, in column-major order, so that scenes differing only in
/// their MS set share the same noise realization for a given seed.
pub fn simulate_received<R: Rng + ?Sized>(sc: &Scenario, rng: &mut R) -> Result<ReceivedSignal> {
    sc.validate()?;
    let mut y = exact_mean(sc);
    add_noise(&mut y, sc.noise_var, rng);
    if let Some(kf) = sc.rician_k {
        let bs = bs_positions(&sc.bs);
        let x = sc.tx_power.sqrt();
        for t in 0..sc.slots() {
            for k in 0..sc.ms_count() {
                let p = sc.ms_antenna(k, t);
                for (row, b) in bs.iter().enumerate() {
                    let g = los((p - b).norm(), sc.gains[k], sc.wavelength).norm_sqr();
                    y[(row, t)] += cscg(rng, g / kf) * x;
                }
            }
        }
    }
    Ok(ReceivedSignal { samples: y })
}

fn add_noise<R: Rng + ?Sized>(y: &mut DMatrix<Complex64>, var: f64, rng: &mut R) {
    if var > 0.0 {
        for e in y.iter_mut() {
            *e += cscg(rng, var);
        }
    }
}

/// Plane-wave parameters of one (subarray, MS, slot) link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwffLink {
    pub gain: Complex64,
    pub cosines: (f64, f64),
    pub distance: f64,
}

/// Links stored with the subarray index slowest and the slot index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SwffCoefficients {
    pub subarrays: usize,
    pub ms_count: usize,
    pub slots: usize,
    pub links: Vec<SwffLink>,
}

impl SwffCoefficients {
    /// 1-based `m`, 0-based `k` and `t`.
    pub fn index(&self, m: usize, k: usize, t: usize) -> usize {
        ((m - 1) * self.ms_count + k) * self.slots + t
    }

    pub fn get(&self, m: usize, k: usize, t: usize) -> &SwffLink {
        &self.links[self.index(m, k, t)]
    }
}

/// Steering value of local element `(i, j)` for scaled cosines.
pub fn steering(i: usize, j: usize, cosines: (f64, f64)) -> Complex64 {
    Complex64::from_polar(1.0, PI * (i as f64 * cosines.0 + j as f64 * cosines.1))
}

/// Gain that, multiplied by [`steering`], reproduces the first-order link model.
pub fn swff_gain(
    amplitude: f64,
    distance: f64,
    cosines: (f64, f64),
    phase_index: (f64, f64),
    lambda: f64,
) -> Complex64 {
    let phase = -2.0 * PI * distance / lambda - PI * (phase_index.0 * cosines.0 + phase_index.1 * cosines.1);
    Complex64::from_polar(amplitude * lambda / (4.0 * PI * distance), phase)
}

pub fn swff_link(
    plan: &PartitionPlan,
    m: usize,
    ms_antenna: &Vec3,
    amplitude: f64,
) -> Result<SwffLink> {
    let s = plan.subarray(m);
    let distance = (ms_antenna - s.phase_position).norm();
    let cosines = aoa_cosines(ms_antenna, &s.phase_position)?;
    Ok(SwffLink {
        gain: swff_gain(amplitude, distance, cosines, s.phase_index, plan.wavelength()),
        cosines,
        distance,
    })
}

pub fn swff_coefficients(sc: &Scenario, plan: &PartitionPlan) -> Result<SwffCoefficients> {
    let x = sc.tx_power.sqrt();
    let mut links = Vec::with_capacity(plan.len() * sc.ms_count() * sc.slots());
    for m in 1..=plan.len() {
        for k in 0..sc.ms_count() {
            for t in 0..sc.slots() {
                links.push(swff_link(plan, m, &sc.ms_antenna(k, t), x * sc.gains[k])?);
            }
        }
    }
    Ok(SwffCoefficients {
        subarrays: plan.len(),
        ms_count: sc.ms_count(),
        slots: sc.slots(),
        links,
    })
}

/// Noiseless plane-wave signal assembled over all subarrays.
pub fn swff_mean(coeffs: &SwffCoefficients, plan: &PartitionPlan) -> DMatrix<Complex64> {
    let mut y = DMatrix::zeros(plan.bs().len(), coeffs.slots);
    for s in plan.subarrays() {
        for t in 0..coeffs.slots {
            for k in 0..coeffs.ms_count {
                let link = coeffs.get(s.m, k, t);
                for j in 1..=s.ny {
                    for i in 1..=s.nx {
                        let row = plan.row(s.origin.0 + i - 1, s.origin.1 + j - 1);
                        y[(row, t)] += link.gain * steering(i, j, link.cosines);
                    }
                }
            }
        }
    }
    y
}

pub fn swff_received<R: Rng + ?Sized>(
    coeffs: &SwffCoefficients,
    plan: &PartitionPlan,
    noise_var: f64,
    rng: &mut R,
) -> ReceivedSignal {
    let mut y = swff_mean(coeffs, plan);
    add_noise(&mut y, noise_var, rng);
    ReceivedSignal { samples: y }
}

/// Samples of subarray `m` in slot `t` as an `nx x ny` matrix indexed by local `(i-1, j-1)`.
pub fn subarray_snapshot(y: &ReceivedSignal, plan: &PartitionPlan, m: usize, t: usize) -> DMatrix<Complex64> {
    let s = plan.subarray(m);
    DMatrix::from_fn(s.nx, s.ny, |i, j| {
        y.samples[(plan.row(s.origin.0 + i, s.origin.1 + j), t)]
    })
}

const DUMP_MAGIC: &[u8; 8] = b"NFPAEY01";

/// Writes the 32-byte header followed by little-endian `re, im` pairs, row by row.
pub fn write_dump<W: Write>(y: &ReceivedSignal, seed: u64, mut w: W) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(y.rows() as u64).to_le_bytes())?;
    w.write_all(&(y.slots() as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for r in 0..y.rows() {
        for t in 0..y.slots() {
            let z = y.samples[(r, t)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R) -> Result<(ReceivedSignal, u64)> {
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != DUMP_MAGIC {
        return Err(invalid("not a received-signal dump"));
    }
    let word = |i: usize| u64::from_le_bytes(header[i..i + 8].try_into().expect("8 bytes"));
    let (rows, slots, seed) = (word(8) as usize, word(16) as usize, word(24));
    let mut y = ReceivedSignal::zeros(rows, slots);
    let mut buf = [0u8; 16];
    for row in 0..rows {
        for t in 0..slots {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(buf[8..].try_into().expect("8 bytes"));
            y.samples[(row, t)] = Complex64::new(re, im);
        }
    }
    Ok((y, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_roundtrip() {
        assert!((dbm_to_watts(-70.0) - 1e-10).abs() < 1e-24);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-15);
        assert!((watts_to_dbm(1e-3)).abs() < 1e-12);
    }

    #[test]
    fn one_metre_link_magnitude() {
        let h = nearfield_channel_coeff(&Vec3::zeros(), &Vec3::new(0.0, 0.0, 1.0), 1.0, 0.004).unwrap();
        assert!((h.norm() - 3.183098861837907e-4).abs() < 1e-15);
        let h = nearfield_channel_coeff(&Vec3::zeros(), &Vec3::new(0.0, 0.004, 0.0), 1.0, 0.004).unwrap();
        assert!((h.arg()).abs() < 1e-12);
    }

    #[test]
    fn dump_roundtrip() {
        let mut y = ReceivedSignal::zeros(3, 2);
        y.samples[(2, 1)] = Complex64::new(1.5, -2.25);
        let mut buf = Vec::new();
        write_dump(&y, 42, &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 3 * 2 * 16);
        let (back, seed) = read_dump(buf.as_slice()).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(back, y);
    }
}
