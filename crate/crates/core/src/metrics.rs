//! Position RMSE and rotation NMSE over Monte-Carlo trials.

use crate::apple::assignment;
use crate::error::{invalid, Result};
use crate::geometry::{rotation_basis, Pose, RotationBasis, Vec3};

/// One MS estimate as scored against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPose {
    pub position: Vec3,
    pub basis: RotationBasis,
}

impl From<&Pose> for ScoredPose {
    fn from(p: &Pose) -> Self {
        Self {
            position: p.position,
            basis: rotation_basis(&p.attitude),
        }
    }
}

/// Squared Frobenius distance of two bases over the squared norm of the first.
pub fn rotation_nmse(truth: &RotationBasis, estimate: &RotationBasis) -> f64 {
    let t = truth.matrix();
    (t - estimate.matrix()).norm_squared() / t.norm_squared()
}

/// Summed errors of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialError {
    pub position_sq: f64,
    pub rotation_nmse: f64,
}

/// Scores one trial. Estimator labels carry no meaning, so estimates are
/// matched to truths by the assignment of least summed squared position error.
pub fn trial_error(estimates: &[ScoredPose], truths: &[ScoredPose]) -> Result<TrialError> {
    if estimates.len() != truths.len() || truths.is_empty() {
        return Err(invalid("estimate and truth counts differ"));
    }
    let cost: Vec<Vec<f64>> = truths
        .iter()
        .map(|t| estimates.iter().map(|e| (e.position - t.position).norm_squared()).collect())
        .collect();
    let pick = assignment(&cost);
    Ok(truths.iter().zip(&pick).fold(TrialError::default(), |acc, (t, &j)| {
        let e = &estimates[j];
        TrialError {
            position_sq: acc.position_sq + (e.position - t.position).norm_squared(),
            rotation_nmse: acc.rotation_nmse + rotation_nmse(&t.basis, &e.basis),
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub rmse_position: f64,
    pub nmse_rotation: f64,
    /// Standard error of the mean squared position error.
    pub sq_error_std_err: f64,
}

pub fn summarize(errors: &[TrialError]) -> Option<Summary> {
    let n = errors.len();
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let mean_sq = errors.iter().map(|e| e.position_sq).sum::<f64>() / nf;
    let nmse = errors.iter().map(|e| e.rotation_nmse).sum::<f64>() / nf;
    let std_err = if n > 1 {
        let var = errors.iter().map(|e| (e.position_sq - mean_sq).powi(2)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        trials: n,
        rmse_position: mean_sq.sqrt(),
        nmse_rotation: nmse,
        sq_error_std_err: std_err,
    })
}

/// Scores poses from an estimator output against the scene.
pub fn score(estimates: &[ScoredPose], truth: &[Pose]) -> Result<TrialError> {
    let t: Vec<ScoredPose> = truth.iter().map(ScoredPose::from).collect();
    trial_error(estimates, &t)
}
