//! Rectangular tiling of the BS array into subarrays.

use crate::error::{invalid, Error, Result};
use crate::geometry::{bs_antenna_position, rayleigh_distance, UraSpec, Vec3};

/// Point each subarray's plane-wave model is expanded around.
///
/// `Antenna` uses the element at `(ceil(nx/2), ceil(ny/2))`. For even sizes that
/// element sits half a spacing off the centroid on both axes, so plane-wave fits
/// see every subarray shifted by `lambda/4` per axis. `Centroid` removes that
/// offset and coincides with `Antenna` for odd sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseReference {
    #[default]
    Centroid,
    Antenna,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubarrayDescriptor {
    /// 1-based subarray number.
    pub m: usize,
    /// Global index of the subarray's `(1, 1)` element.
    pub origin: (usize, usize),
    pub nx: usize,
    pub ny: usize,
    pub ref_index: (usize, usize),
    pub ref_position: Vec3,
    /// Local index coordinates of the phase reference (may be half-integer).
    pub phase_index: (f64, f64),
    pub phase_position: Vec3,
    pub largest_dimension: f64,
    pub rayleigh_distance: f64,
}

impl SubarrayDescriptor {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.origin.0
            && u < self.origin.0 + self.nx
            && v >= self.origin.1
            && v < self.origin.1 + self.ny
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    bs: UraSpec,
    lambda: f64,
    reference: PhaseReference,
    subarrays: Vec<SubarrayDescriptor>,
    /// `(m, i, j)` for each global element, indexed `(u-1) + (v-1)*nx`.
    lookup: Vec<(usize, usize, usize)>,
}

fn descriptor(
    bs: &UraSpec,
    lambda: f64,
    reference: PhaseReference,
    m: usize,
    origin: (usize, usize),
    nx: usize,
    ny: usize,
) -> Result<SubarrayDescriptor> {
    let ref_index = (nx.div_ceil(2), ny.div_ceil(2));
    let ref_position = bs_antenna_position(bs, origin.0 + ref_index.0 - 1, origin.1 + ref_index.1 - 1)?;
    let phase_index = match reference {
        PhaseReference::Antenna => (ref_index.0 as f64, ref_index.1 as f64),
        PhaseReference::Centroid => ((nx as f64 + 1.0) / 2.0, (ny as f64 + 1.0) / 2.0),
    };
    let first = bs_antenna_position(bs, origin.0, origin.1)?;
    let phase_position = first
        + Vec3::new(
            (phase_index.0 - 1.0) * bs.spacing,
            (phase_index.1 - 1.0) * bs.spacing,
            0.0,
        );
    let sx = (nx - 1) as f64 * lambda / 2.0;
    let sy = (ny - 1) as f64 * lambda / 2.0;
    let largest_dimension = sx.hypot(sy);
    Ok(SubarrayDescriptor {
        m,
        origin,
        nx,
        ny,
        ref_index,
        ref_position,
        phase_index,
        phase_position,
        largest_dimension,
        rayleigh_distance: rayleigh_distance(largest_dimension, lambda)?,
    })
}

/// `mx` blocks along x and `my` along y, numbered row-major by origin.
pub fn uniform_partition(bs: &UraSpec, mx: usize, my: usize, lambda: f64) -> Result<PartitionPlan> {
    uniform_partition_with(bs, mx, my, lambda, PhaseReference::default())
}

pub fn uniform_partition_with(
    bs: &UraSpec,
    mx: usize,
    my: usize,
    lambda: f64,
    reference: PhaseReference,
) -> Result<PartitionPlan> {
    if mx == 0 || my == 0 {
        return Err(invalid("partition counts must be positive"));
    }
    for (dim, parts) in [(bs.nx, mx), (bs.ny, my)] {
        if dim % parts != 0 {
            return Err(Error::NonDivisible {
                dim,
                parts,
                remainder: dim % parts,
            });
        }
    }
    let (nx, ny) = (bs.nx / mx, bs.ny / my);
    let mut blocks = Vec::with_capacity(mx * my);
    for a in 0..mx {
        for b in 0..my {
            blocks.push(((a * nx + 1, b * ny + 1), nx, ny));
        }
    }
    PartitionPlan::from_blocks(bs, lambda, reference, &blocks)
}

impl PartitionPlan {
    /// Builds a plan from arbitrary `(origin, nx, ny)` rectangles, which must tile the grid.
    pub fn from_blocks(
        bs: &UraSpec,
        lambda: f64,
        reference: PhaseReference,
        blocks: &[((usize, usize), usize, usize)],
    ) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("wavelength must be positive"));
        }
        let mut lookup = vec![(0usize, 0usize, 0usize); bs.len()];
        let mut subarrays = Vec::with_capacity(blocks.len());
        for (idx, &(origin, nx, ny)) in blocks.iter().enumerate() {
            let m = idx + 1;
            if nx == 0 || ny == 0 || origin.0 == 0 || origin.1 == 0 {
                return Err(invalid(format!("subarray {m} is empty or misplaced")));
            }
            if origin.0 + nx - 1 > bs.nx || origin.1 + ny - 1 > bs.ny {
                return Err(invalid(format!("subarray {m} extends past the grid")));
            }
            for i in 1..=nx {
                for j in 1..=ny {
                    let (u, v) = (origin.0 + i - 1, origin.1 + j - 1);
                    let slot = &mut lookup[(u - 1) + (v - 1) * bs.nx];
                    if slot.0 != 0 {
                        return Err(invalid(format!("element ({u}, {v}) covered twice")));
                    }
                    *slot = (m, i, j);
                }
            }
            subarrays.push(descriptor(bs, lambda, reference, m, origin, nx, ny)?);
        }
        if let Some(k) = lookup.iter().position(|e| e.0 == 0) {
            return Err(invalid(format!(
                "element ({}, {}) not covered",
                k % bs.nx + 1,
                k / bs.nx + 1
            )));
        }
        Ok(Self {
            bs: *bs,
            lambda,
            reference,
            subarrays,
            lookup,
        })
    }

    pub fn bs(&self) -> &UraSpec {
        &self.bs
    }

    pub fn wavelength(&self) -> f64 {
        self.lambda
    }

    pub fn reference(&self) -> PhaseReference {
        self.reference
    }

    pub fn subarrays(&self) -> &[SubarrayDescriptor] {
        &self.subarrays
    }

    /// 1-based access.
    pub fn subarray(&self, m: usize) -> &SubarrayDescriptor {
        &self.subarrays[m - 1]
    }

    pub fn len(&self) -> usize {
        self.subarrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subarrays.is_empty()
    }

    /// Global `(u, v)` to `(m, i, j)`.
    pub fn index_map(&self, u: usize, v: usize) -> Result<(usize, usize, usize)> {
        if u == 0 || v == 0 || u > self.bs.nx || v > self.bs.ny {
            return Err(Error::IndexOutOfRange(u, v, self.bs.nx, self.bs.ny));
        }
        Ok(self.lookup[(u - 1) + (v - 1) * self.bs.nx])
    }

    /// `(m, i, j)` back to global `(u, v)`.
    pub fn global_index(&self, m: usize, i: usize, j: usize) -> Result<(usize, usize)> {
        let s = self
            .subarrays
            .get(m.wrapping_sub(1))
            .ok_or_else(|| invalid(format!("no subarray {m}")))?;
        if i == 0 || j == 0 || i > s.nx || j > s.ny {
            return Err(Error::IndexOutOfRange(i, j, s.nx, s.ny));
        }
        Ok((s.origin.0 + i - 1, s.origin.1 + j - 1))
    }

    /// Row of the stacked received-signal vector holding global element `(u, v)`.
    pub fn row(&self, u: usize, v: usize) -> usize {
        (u - 1) + (v - 1) * self.bs.nx
    }

    /// Stacked-signal rows of subarray `m`, ordered `(i, j)` with `i` fastest.
    pub fn rows_of(&self, m: usize) -> Vec<usize> {
        let s = self.subarray(m);
        let mut rows = Vec::with_capacity(s.len());
        for j in 0..s.ny {
            for i in 0..s.nx {
                rows.push(self.row(s.origin.0 + i, s.origin.1 + j));
            }
        }
        rows
    }

    pub fn max_rayleigh_distance(&self) -> f64 {
        self.subarrays
            .iter()
            .map(|s| s.rayleigh_distance)
            .fold(0.0, f64::max)
    }

    /// Checks that every MS antenna is beyond every subarray's Rayleigh distance.
    pub fn validate_swff(&self, ms_antennas: &[Vec3]) -> SwffReport {
        let mut worst: Option<SwffViolation> = None;
        for s in &self.subarrays {
            for (a, p) in ms_antennas.iter().enumerate() {
                let margin = (p - s.phase_position).norm() - s.rayleigh_distance;
                if worst.as_ref().is_none_or(|w| margin < w.margin) {
                    worst = Some(SwffViolation {
                        m: s.m,
                        antenna: a,
                        margin,
                    });
                }
            }
        }
        let holds = worst.as_ref().is_none_or(|w| w.margin > 0.0);
        SwffReport { holds, worst }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwffViolation {
    pub m: usize,
    /// 0-based position in the list passed to `validate_swff`.
    pub antenna: usize,
    /// Distance minus Rayleigh distance; negative when violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwffReport {
    pub holds: bool,
    /// Smallest-margin pair, present whenever any antenna was checked.
    pub worst: Option<SwffViolation>,
}
