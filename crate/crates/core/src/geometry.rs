//! Frames, array layouts and rotation algebra.
//!
//! The BS array lies in the global x-y plane, centred at the origin. Each MS
//! array is a planar grid in its own local frame, placed by a position and a
//! roll/pitch/yaw triple (`Rz(yaw) * Ry(pitch) * Rx(roll)`). Antenna indices are
//! 1-based throughout the public API.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Matrix3x2, Vector2, Vector3};

use crate::error::{invalid, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn wavelength(frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
        return Err(invalid(format!("carrier frequency {frequency_hz} Hz")));
    }
    Ok(SPEED_OF_LIGHT / frequency_hz)
}

/// Maps an angle onto `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    roll: f64,
    pitch: f64,
    yaw: f64,
}

impl EulerAngles {
    /// Roll and yaw are wrapped; pitch outside `[-pi/2, pi/2]` is rejected.
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Result<Self> {
        if !(roll.is_finite() && pitch.is_finite() && yaw.is_finite()) {
            return Err(invalid("non-finite Euler angle"));
        }
        if pitch.abs() > FRAC_PI_2 {
            return Err(invalid(format!("pitch {pitch} outside [-pi/2, pi/2]")));
        }
        Ok(Self {
            roll: wrap_angle(roll),
            pitch,
            yaw: wrap_angle(yaw),
        })
    }

    pub fn zero() -> Self {
        Self {
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }

    /// Canonical triple describing the same rotation as an unconstrained one.
    pub fn from_unconstrained(v: [f64; 3]) -> Result<Self> {
        let [mut roll, mut pitch, mut yaw] = v;
        pitch = wrap_angle(pitch);
        if pitch.abs() > FRAC_PI_2 {
            // (r, p, y) and (r + pi, pi - p, y + pi) give the same matrix
            pitch = wrap_angle(PI - pitch);
            roll += PI;
            yaw += PI;
        }
        Self::new(roll, pitch.clamp(-FRAC_PI_2, FRAC_PI_2), yaw)
    }

    /// Extracts the triple from a proper rotation matrix.
    pub fn from_matrix(r: &Matrix3<f64>) -> Result<Self> {
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let (roll, yaw) = if r[(2, 0)].abs() < 1.0 - 1e-12 {
            (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
        } else {
            // gimbal lock: only roll -/+ yaw is observable, put it all in yaw
            let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
            (0.0, yaw)
        };
        Self::new(roll, pitch, yaw)
    }

    pub fn roll(&self) -> f64 {
        self.roll
    }
    pub fn pitch(&self) -> f64 {
        self.pitch
    }
    pub fn yaw(&self) -> f64 {
        self.yaw
    }
    pub fn as_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub attitude: EulerAngles,
}

impl Pose {
    pub fn new(position: Vec3, attitude: EulerAngles) -> Result<Self> {
        if !position.iter().all(|c| c.is_finite()) {
            return Err(invalid("non-finite position"));
        }
        Ok(Self { position, attitude })
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_matrix(&self.attitude.as_array())
    }
}

/// Uniform rectangular array with `nx` x `ny` elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UraSpec {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
}

impl UraSpec {
    pub fn new(nx: usize, ny: usize, spacing: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid(format!("empty {nx}x{ny} array")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!("element spacing {spacing}")));
        }
        Ok(Self { nx, ny, spacing })
    }

    pub fn half_wavelength(nx: usize, ny: usize, lambda: f64) -> Result<Self> {
        Self::new(nx, ny, lambda / 2.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Diagonal extent of the aperture.
    pub fn largest_dimension(&self) -> f64 {
        let sx = (self.nx - 1) as f64 * self.spacing;
        let sy = (self.ny - 1) as f64 * self.spacing;
        sx.hypot(sy)
    }

    fn check(&self, u: usize, v: usize) -> Result<()> {
        if u == 0 || v == 0 || u > self.nx || v > self.ny {
            return Err(Error::IndexOutOfRange(u, v, self.nx, self.ny));
        }
        Ok(())
    }

    fn centred(&self, u: usize, v: usize) -> Vec2 {
        Vec2::new(
            (u as f64 - (self.nx as f64 + 1.0) / 2.0) * self.spacing,
            (v as f64 - (self.ny as f64 + 1.0) / 2.0) * self.spacing,
        )
    }

    /// Position of the grid point in the array plane, relative to the array centre.
    pub fn offset(&self, u: usize, v: usize) -> Result<Vec2> {
        self.check(u, v)?;
        Ok(self.centred(u, v))
    }
}

pub fn bs_antenna_position(spec: &UraSpec, u: usize, v: usize) -> Result<Vec3> {
    let o = spec.offset(u, v)?;
    Ok(Vec3::new(o.x, o.y, 0.0))
}

pub fn ms_local_antenna_position(spec: &UraSpec, q: usize, s: usize) -> Result<Vec2> {
    spec.offset(q, s)
}

/// Ordered list of MS antennas activated one per time slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmitPattern {
    slots: Vec<(usize, usize)>,
}

impl TransmitPattern {
    pub fn new(slots: Vec<(usize, usize)>, ms: &UraSpec) -> Result<Self> {
        if slots.is_empty() {
            return Err(invalid("empty transmit pattern"));
        }
        for (i, &(q, s)) in slots.iter().enumerate() {
            ms.check(q, s)?;
            if slots[..i].contains(&(q, s)) {
                return Err(invalid(format!("antenna ({q}, {s}) listed twice")));
            }
        }
        Ok(Self { slots })
    }

    /// Four corners plus the centre.
    pub fn t5(ms: &UraSpec) -> Result<Self> {
        let (nx, ny) = (ms.nx, ms.ny);
        let c = |n: usize| (n + 1).div_ceil(2);
        Self::new(vec![(1, 1), (1, ny), (nx, 1), (nx, ny), (c(nx), c(ny))], ms)
    }

    pub fn t3(ms: &UraSpec) -> Result<Self> {
        let (nx, ny) = (ms.nx, ms.ny);
        Self::new(vec![(1, 1), (1, ny), (nx, ny.saturating_sub(1).div_ceil(2).max(1))], ms)
    }

    /// `t5` plus the four edge midpoints.
    pub fn t9(ms: &UraSpec) -> Result<Self> {
        let mut slots = Self::t5(ms)?.slots;
        let cx = ms.nx.saturating_sub(1).div_ceil(2).max(1);
        let cy = ms.ny.saturating_sub(1).div_ceil(2).max(1);
        slots.extend([(1, cy), (ms.nx, cy), (cx, 1), (cx, ms.ny)]);
        Self::new(slots, ms)
    }

    pub fn slots(&self) -> &[(usize, usize)] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn local_positions(&self, ms: &UraSpec) -> Result<Vec<Vec2>> {
        self.slots
            .iter()
            .map(|&(q, s)| ms_local_antenna_position(ms, q, s))
            .collect()
    }
}

/// First two columns of the body-to-global rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationBasis {
    pub ex: Vec3,
    pub ey: Vec3,
}

impl RotationBasis {
    pub fn matrix(&self) -> Matrix3x2<f64> {
        Matrix3x2::from_columns(&[self.ex, self.ey])
    }

    pub fn apply(&self, local: &Vec2) -> Vec3 {
        self.ex * local.x + self.ey * local.y
    }
}

pub fn rotation_basis(theta: &EulerAngles) -> RotationBasis {
    basis_from_angles(&theta.as_array())
}

/// Same as [`rotation_basis`] for an unconstrained angle triple.
pub fn basis_from_angles(a: &[f64; 3]) -> RotationBasis {
    let (sx, cx) = a[0].sin_cos();
    let (sy, cy) = a[1].sin_cos();
    let (sz, cz) = a[2].sin_cos();
    RotationBasis {
        ex: Vec3::new(cz * cy, sz * cy, -sy),
        ey: Vec3::new(cz * sy * sx - sz * cx, sz * sy * sx + cz * cx, cy * sx),
    }
}

/// Full `Rz * Ry * Rx` rotation for an unconstrained angle triple.
pub fn rotation_matrix(a: &[f64; 3]) -> Matrix3<f64> {
    let b = basis_from_angles(a);
    Matrix3::from_columns(&[b.ex, b.ey, b.ex.cross(&b.ey)])
}

/// Partial derivatives of the 3x2 basis with respect to roll, pitch and yaw.
pub fn basis_derivatives(a: &[f64; 3]) -> [Matrix3x2<f64>; 3] {
    let (sx, cx) = a[0].sin_cos();
    let (sy, cy) = a[1].sin_cos();
    let (sz, cz) = a[2].sin_cos();
    let d_roll = Matrix3x2::new(
        0.0,
        cz * sy * cx + sz * sx,
        0.0,
        sz * sy * cx - cz * sx,
        0.0,
        cy * cx,
    );
    let d_pitch = Matrix3x2::new(
        -cz * sy,
        cz * cy * sx,
        -sz * sy,
        sz * cy * sx,
        -cy,
        -sy * sx,
    );
    let d_yaw = Matrix3x2::new(
        -sz * cy,
        -sz * sy * sx - cz * cx,
        cz * cy,
        cz * sy * sx - sz * cx,
        0.0,
        0.0,
    );
    [d_roll, d_pitch, d_yaw]
}

pub fn ms_antenna_global_position(pose: &Pose, local: &Vec2) -> Vec3 {
    pose.position + rotation_basis(&pose.attitude).apply(local)
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// Inner boundary of the radiating near field, `cbrt(S^4 / (8 lambda))`.
pub fn fresnel_distance(largest_dimension: f64, lambda: f64) -> Result<f64> {
    check_positive("wavelength", lambda)?;
    if largest_dimension == 0.0 {
        return Ok(0.0);
    }
    check_positive("aperture", largest_dimension)?;
    Ok((largest_dimension.powi(4) / (8.0 * lambda)).cbrt())
}

/// Near-field / far-field boundary, `2 S^2 / lambda`.
pub fn rayleigh_distance(largest_dimension: f64, lambda: f64) -> Result<f64> {
    check_positive("wavelength", lambda)?;
    if largest_dimension == 0.0 {
        return Ok(0.0);
    }
    check_positive("aperture", largest_dimension)?;
    Ok(2.0 * largest_dimension * largest_dimension / lambda)
}

/// Direction cosines of `target - reference` along the global x and y axes.
pub fn aoa_cosines(target: &Vec3, reference: &Vec3) -> Result<(f64, f64)> {
    let d = target - reference;
    let n = d.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("coincident points have no direction"));
    }
    Ok((d.x / n, d.y / n))
}
