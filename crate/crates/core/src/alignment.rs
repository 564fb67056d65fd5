//! Rigid and similarity alignment of a planar body-frame point set to 3-D points.

use nalgebra::{Matrix3, SVD};

use crate::error::{invalid, Result};
use crate::geometry::{Vec2, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub translation: Vec3,
    pub rotation: Matrix3<f64>,
    pub scale: f64,
}

fn lift(q: &Vec2) -> Vec3 {
    Vec3::new(q.x, q.y, 0.0)
}

/// Least-squares `target ~ scale * R * [q; 0] + t` (Umeyama), optionally with `scale = 1`.
pub fn align(local: &[Vec2], target: &[Vec3], weights: Option<&[f64]>, with_scale: bool) -> Result<Alignment> {
    let n = local.len();
    if n != target.len() || n < 3 {
        return Err(invalid("alignment needs at least three matched points"));
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() == n => w.to_vec(),
        Some(_) => return Err(invalid("one weight per point required")),
        None => vec![1.0; n],
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("weights must not all vanish"));
    }
    let src_c = local.iter().zip(&w).map(|(q, wi)| lift(q) * *wi).sum::<Vec3>() / total;
    let dst_c = target.iter().zip(&w).map(|(p, wi)| p * *wi).sum::<Vec3>() / total;
    let mut cov = Matrix3::zeros();
    let mut src_var = 0.0;
    for ((q, p), wi) in local.iter().zip(target).zip(&w) {
        let a = lift(q) - src_c;
        let b = p - dst_c;
        cov += b * a.transpose() * *wi;
        src_var += wi * a.norm_squared();
    }
    cov /= total;
    src_var /= total;
    let svd = SVD::new(cov, true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    if !(sv[order[1]] > 1e-12 * sv[order[0]].max(f64::MIN_POSITIVE)) {
        return Err(invalid("points are collinear; rotation about their line is unobservable"));
    }
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let rotation = u * d * vt;
    let scale = if with_scale {
        (0..3).map(|i| sv[i] * d[(i, i)]).sum::<f64>() / src_var
    } else {
        1.0
    };
    Ok(Alignment {
        translation: dst_c - rotation * src_c * scale,
        rotation,
        scale,
    })
}
