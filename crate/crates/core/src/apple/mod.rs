//! Iterative pose estimation by message passing between per-subarray direction
//! estimators and a position/attitude fusion stage.
//!
//! One iteration runs the direction estimator on every `(subarray, slot)`
//! snapshot, fuses the extrinsic direction beliefs of all subarrays into a
//! Gaussian belief over each active antenna's position, fits each MS pose from
//! the other slots' antennas (leave one out), projects the pose back onto each
//! antenna, and sends every subarray a position belief that excludes its own
//! contribution. A final MAP over all slots yields the pose.

mod association;
pub mod objectives;

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::alignment::align;
use crate::aoa::{estimate_aoa_posteriors, extrinsic_from_posterior, AoaOptions, AoaPosterior, SourcePrior, SubarraySnapshot};
use crate::channel::{subarray_snapshot, ReceivedSignal, Scenario};
use crate::circular::{gaussian_to_vm, GaussianBelief, VmPair, VonMises};
use crate::error::{invalid, Result};
use crate::geometry::{basis_derivatives, basis_from_angles, rotation_basis, rotation_matrix, EulerAngles, RotationBasis, TransmitPattern, UraSpec, Vec2, Vec3};
use crate::laplace::{laplace_fit, maximize, AscentOptions, Objective};
use crate::partition::PartitionPlan;

pub use association::assignment;
pub use objectives::{AntennaObservation, DirectionFusion, PoseDensity};

/// What the estimator knows about the deployment: array shapes, not poses.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub ms: UraSpec,
    pub pattern: TransmitPattern,
    pub ms_count: usize,
    pub noise_var: f64,
}

impl ArrayLayout {
    pub fn of(sc: &Scenario) -> Self {
        Self {
            ms: sc.ms,
            pattern: sc.pattern.clone(),
            ms_count: sc.ms_count(),
            noise_var: sc.noise_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppleConfig {
    /// `None` picks one iteration for a single MS and five otherwise.
    pub iterations: Option<usize>,
    /// Standard deviation of the initial position messages.
    pub sigma_ini: f64,
    /// Prior variance of every subarray gain.
    pub coeff_var: f64,
    pub position_prior_std: f64,
    /// Per-MS priors on roll, twice the pitch, and yaw; MSs without an entry get near-uniform priors.
    pub attitude_priors: Vec<[VonMises; 3]>,
    pub ascent: AscentOptions,
    pub aoa: AoaOptions,
}

impl AppleConfig {
    pub fn new(coeff_var: f64) -> Self {
        Self {
            iterations: None,
            sigma_ini: 1e2,
            coeff_var,
            position_prior_std: 1e3,
            attitude_priors: Vec::new(),
            ascent: AscentOptions::default(),
            aoa: AoaOptions::default(),
        }
    }

    pub fn iterations_for(&self, ms_count: usize) -> usize {
        self.iterations.unwrap_or(if ms_count > 1 { 5 } else { 1 })
    }

    fn attitude_prior(&self, k: usize) -> [VonMises; 3] {
        self.attitude_priors
            .get(k)
            .copied()
            .unwrap_or([VonMises::new(0.0, 1e-6); 3])
    }
}

/// Gain variance implied by free-space loss at a nominal distance.
pub fn nominal_coeff_var(lambda: f64, tx_power: f64, gain: f64, distance: f64) -> f64 {
    let a = gain * lambda / (4.0 * std::f64::consts::PI * distance);
    a * a * tx_power
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub uninformative_aoa: usize,
    pub flat_fusion: usize,
    pub fusion_not_converged: usize,
    pub regularized_pose: usize,
    pub dropped_feedback: usize,
    pub map_not_converged: usize,
}

/// All messages of the factor graph, indexed by `(m, k, t)` or `(k, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub subarrays: usize,
    pub ms_count: usize,
    pub slots: usize,
    /// Position beliefs sent to each direction estimator.
    pub to_aoa: Vec<GaussianBelief>,
    pub posteriors: Vec<Option<AoaPosterior>>,
    pub extrinsic: Vec<VmPair>,
    /// Fused antenna-position beliefs.
    pub fused: Vec<Option<GaussianBelief>>,
    /// Leave-one-out pose modes `[position; raw angles]` and their covariance blocks.
    pub pose_mode: Vec<Option<DVector<f64>>>,
    pub pose_position: Vec<Option<GaussianBelief>>,
    pub pose_attitude: Vec<Option<GaussianBelief>>,
    /// Pose projected back onto each antenna.
    pub to_fusion: Vec<Option<GaussianBelief>>,
    pub iteration: usize,
    pub diagnostics: Diagnostics,
}

impl MessageState {
    pub fn mkt(&self, m: usize, k: usize, t: usize) -> usize {
        ((m - 1) * self.ms_count + k) * self.slots + t
    }

    pub fn kt(&self, k: usize, t: usize) -> usize {
        k * self.slots + t
    }
}

pub fn init_messages(subarrays: usize, ms_count: usize, slots: usize, cfg: &AppleConfig) -> Result<MessageState> {
    if !(cfg.sigma_ini > 0.0) {
        return Err(invalid("initial position spread must be positive"));
    }
    let start = GaussianBelief::isotropic(DVector::from_vec(vec![0.0, 0.0, 1.0]), cfg.sigma_ini * cfg.sigma_ini);
    let links = subarrays * ms_count * slots;
    let antennas = ms_count * slots;
    Ok(MessageState {
        subarrays,
        ms_count,
        slots,
        to_aoa: vec![start; links],
        posteriors: vec![None; links],
        extrinsic: vec![VmPair::uniform(); links],
        fused: vec![None; antennas],
        pose_mode: vec![None; antennas],
        pose_position: vec![None; antennas],
        pose_attitude: vec![None; antennas],
        to_fusion: vec![None; antennas],
        iteration: 0,
        diagnostics: Diagnostics::default(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub position: Vec3,
    pub attitude: EulerAngles,
    pub basis: RotationBasis,
    pub position_cov: Matrix3<f64>,
    pub attitude_cov: Matrix3<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppleOutput {
    pub estimates: Vec<PoseEstimate>,
    pub state: MessageState,
}

/// Fixed inputs of one estimation run.
pub struct Engine<'a> {
    pub plan: &'a PartitionPlan,
    pub layout: &'a ArrayLayout,
    pub cfg: &'a AppleConfig,
    locals: Vec<Vec2>,
}

impl<'a> Engine<'a> {
    pub fn new(plan: &'a PartitionPlan, layout: &'a ArrayLayout, cfg: &'a AppleConfig) -> Result<Self> {
        if layout.ms_count == 0 {
            return Err(invalid("no MS to estimate"));
        }
        Ok(Self {
            plan,
            layout,
            cfg,
            locals: layout.pattern.local_positions(&layout.ms)?,
        })
    }

    fn slots(&self) -> usize {
        self.locals.len()
    }

    fn anchor(&self) -> usize {
        self.plan
            .subarrays()
            .iter()
            .min_by(|a, b| a.phase_position.norm().total_cmp(&b.phase_position.norm()))
            .map(|s| s.m)
            .expect("non-empty plan")
    }

    /// Direction estimation on every snapshot and extrinsic extraction.
    pub fn aoa_module_pass(&self, state: &mut MessageState, signal: &ReceivedSignal) -> Result<()> {
        let (mm, kk, tt) = (state.subarrays, state.ms_count, state.slots);
        if signal.rows() != self.plan.bs().len() || signal.slots() != tt {
            return Err(invalid("signal shape does not match the layout"));
        }
        let mut priors_all = Vec::with_capacity(mm * tt);
        let mut posts_all = Vec::with_capacity(mm * tt);
        for m in 1..=mm {
            let reference = self.plan.subarray(m).phase_position;
            for t in 0..tt {
                let snapshot = SubarraySnapshot {
                    samples: subarray_snapshot(signal, self.plan, m, t),
                    noise_var: self.layout.noise_var,
                };
                let priors = (0..kk)
                    .map(|k| {
                        Ok(SourcePrior {
                            aoa: gaussian_to_vm(&state.to_aoa[state.mkt(m, k, t)], &reference)?,
                            coeff_var: self.cfg.coeff_var,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                posts_all.push(estimate_aoa_posteriors(&snapshot, &priors, &self.cfg.aoa)?);
                priors_all.push(priors);
            }
        }
        if state.iteration == 0 && kk > 1 {
            association::align_labels(&mut posts_all, self.anchor(), mm, tt);
        }
        for m in 1..=mm {
            for t in 0..tt {
                let i = (m - 1) * tt + t;
                let ext = extrinsic_from_posterior(&posts_all[i], &priors_all[i]);
                for k in 0..kk {
                    let c = state.mkt(m, k, t);
                    let post = posts_all[i][k];
                    if post.uninformative {
                        state.diagnostics.uninformative_aoa += 1;
                    }
                    state.posteriors[c] = Some(post);
                    state.extrinsic[c] = ext[k];
                }
            }
        }
        Ok(())
    }

    fn fusion_objective(&self, state: &MessageState, k: usize, t: usize, skip: Option<usize>) -> DirectionFusion {
        DirectionFusion {
            terms: (1..=state.subarrays)
                .filter(|&m| Some(m) != skip)
                .map(|m| (self.plan.subarray(m).phase_position, state.extrinsic[state.mkt(m, k, t)]))
                .collect(),
        }
    }

    /// Weighted least-squares intersection of the subarrays' mean rays.
    fn ray_intersection(&self, obj: &DirectionFusion) -> Vec3 {
        let mut a = Matrix3::zeros();
        let mut b = Vec3::zeros();
        let mut mean_dir = Vec3::zeros();
        let mut mean_origin = Vec3::zeros();
        let mut total = 0.0;
        for (origin, vm) in &obj.terms {
            let w = vm.x.kappa.min(vm.y.kappa);
            if !(w > 0.0) {
                continue;
            }
            let (px, py) = vm.cosines();
            let u = Vec3::new(px, py, (1.0 - px * px - py * py).max(0.0).sqrt()).normalize();
            let proj = Matrix3::identity() - u * u.transpose();
            a += proj * w;
            b += proj * origin * w;
            mean_dir += u * w;
            mean_origin += origin * w;
            total += w;
        }
        if !(total > 0.0) {
            return Vec3::new(0.0, 0.0, 1.0);
        }
        let fallback_range = 5.0 * self.plan.bs().largest_dimension().max(self.plan.wavelength());
        let fallback = mean_origin / total + mean_dir.normalize() * fallback_range;
        let eig = a.symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if !(lo > 1e-10 * hi) {
            return fallback;
        }
        match a.try_inverse().map(|inv| inv * b) {
            Some(p) if p.iter().all(|v| v.is_finite()) && p.z > 0.0 => p,
            _ => fallback,
        }
    }

    /// Gaussian belief over antenna `(k, t)` from all subarrays' extrinsic directions.
    pub fn fuse_antenna_position(&self, state: &mut MessageState, k: usize, t: usize) -> Result<GaussianBelief> {
        let obj = self.fusion_objective(state, k, t, None);
        let previous = state.fused[state.kt(k, t)].clone();
        let var = self.cfg.sigma_ini * self.cfg.sigma_ini;
        if obj.is_flat() {
            state.diagnostics.flat_fusion += 1;
            let mean = previous.map_or(DVector::from_vec(vec![0.0, 0.0, 1.0]), |b| b.mean);
            return Ok(GaussianBelief::isotropic(mean, var));
        }
        let init = match &previous {
            Some(b) => b.mean.clone(),
            None => DVector::from_column_slice(self.ray_intersection(&obj).as_slice()),
        };
        let fit = laplace_fit(&obj, &init, &self.cfg.ascent)?;
        let mut belief = fit.belief;
        if !fit.converged {
            state.diagnostics.fusion_not_converged += 1;
            if let Some(b) = previous {
                belief.mean = b.mean;
            }
        }
        Ok(belief)
    }

    fn observations(&self, state: &MessageState, k: usize, skip: Option<usize>) -> Vec<AntennaObservation> {
        (0..state.slots)
            .filter(|&t| Some(t) != skip)
            .filter_map(|t| {
                state.fused[state.kt(k, t)].as_ref().map(|b| AntennaObservation {
                    local: self.locals[t],
                    mean: b.mean3(),
                    precision: b.precision().fixed_view::<3, 3>(0, 0).into_owned(),
                })
            })
            .collect()
    }

    fn pose_density(&self, obs: Vec<AntennaObservation>, k: usize) -> PoseDensity {
        PoseDensity {
            observations: obs,
            position_prior_var: self.cfg.position_prior_std.powi(2),
            attitude_prior: self.cfg.attitude_prior(k),
        }
    }

    /// Starting points for a pose search: rigid fit of the observed points, and a
    /// fit that only trusts their directions from the array centre.
    fn pose_candidates(&self, obs: &[AntennaObservation]) -> Vec<DVector<f64>> {
        let local: Vec<Vec2> = obs.iter().map(|o| o.local).collect();
        let means: Vec<Vec3> = obs.iter().map(|o| o.mean).collect();
        let mut out = Vec::new();
        let mut push = |targets: &[Vec3]| {
            if let Ok(a) = align(&local, targets, None, false) {
                if let Ok(e) = EulerAngles::from_matrix(&a.rotation) {
                    let [r, p, y] = e.as_array();
                    out.push(DVector::from_vec(vec![a.translation.x, a.translation.y, a.translation.z, r, p, y]));
                }
            }
        };
        push(&means);
        if means.iter().all(|p| p.norm() > 0.0) {
            let dirs: Vec<Vec3> = means.iter().map(|p| p.normalize()).collect();
            if let Ok(s) = align(&local, &dirs, None, true) {
                if s.scale > 0.0 {
                    let range = 1.0 / s.scale;
                    let pts: Vec<Vec3> = dirs.iter().map(|d| d * range).collect();
                    push(&pts);
                }
            }
        }
        out
    }

    /// Mode of `obj` reached from the best of several starts, each also tried in
    /// its mirrored tilt, which fits ray-elongated observations almost equally well.
    fn best_mode(&self, obj: &PoseDensity, extra: &[Option<DVector<f64>>]) -> DVector<f64> {
        let mut cands = self.pose_candidates(&obj.observations);
        cands.extend(extra.iter().flatten().cloned());
        let twins: Vec<DVector<f64>> = cands.iter().filter_map(mirrored_tilt).collect();
        cands.extend(twins);
        cands
            .iter()
            .filter(|c| obj.value(c).is_finite())
            .map(|c| maximize(obj, c, &self.cfg.ascent))
            .max_by(|a, b| a.value.total_cmp(&b.value))
            .map_or_else(|| DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]), |r| r.x)
    }

    /// Leave-one-out pose beliefs for every slot of MS `k`.
    pub fn update_pose_messages(&self, state: &mut MessageState, k: usize) -> Result<()> {
        for t in 0..state.slots {
            let obj = self.pose_density(self.observations(state, k, Some(t)), k);
            let start = self.best_mode(&obj, &[state.pose_mode[state.kt(k, t)].clone()]);
            let fit = laplace_fit(&obj, &start, &self.cfg.ascent)?;
            if fit.regularized {
                state.diagnostics.regularized_pose += 1;
            }
            let b = &fit.belief;
            let c = state.kt(k, t);
            state.pose_position[c] = Some(GaussianBelief::new(
                b.mean.rows(0, 3).into_owned(),
                b.cov.view((0, 0), (3, 3)).into_owned(),
            )?);
            state.pose_attitude[c] = Some(GaussianBelief::new(
                b.mean.rows(3, 3).into_owned(),
                b.cov.view((3, 3), (3, 3)).into_owned(),
            )?);
            state.pose_mode[c] = Some(b.mean.clone());
        }
        Ok(())
    }

    /// Antenna position implied by the pose beliefs, with the rotation linearized.
    pub fn project_pose_to_antennas(&self, state: &MessageState, k: usize, t: usize) -> Result<GaussianBelief> {
        let c = state.kt(k, t);
        let (pos, att) = match (&state.pose_position[c], &state.pose_attitude[c]) {
            (Some(p), Some(a)) => (p, a),
            _ => return Err(invalid("pose messages missing")),
        };
        Ok(project(pos, att, &self.locals[t]))
    }

    /// Position belief sent back to subarray `m`: the pose projection times the
    /// other subarrays' fused direction likelihood.
    pub fn feedback_message(&self, state: &mut MessageState, m: usize, k: usize, t: usize) -> Result<GaussianBelief> {
        let down = state.to_fusion[state.kt(k, t)]
            .clone()
            .ok_or_else(|| invalid("projection missing"))?;
        if state.subarrays == 1 {
            return Ok(down);
        }
        let obj = self.fusion_objective(state, k, t, Some(m));
        if obj.is_flat() {
            state.diagnostics.dropped_feedback += 1;
            return Ok(down);
        }
        let init = state.fused[state.kt(k, t)]
            .as_ref()
            .map_or(down.mean.clone(), |b| b.mean.clone());
        let fit = laplace_fit(&obj, &init, &self.cfg.ascent)?;
        let h = obj.hessian(&fit.belief.mean);
        let eig = h.symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        if eig.eigenvalues.max() > 1e-6 * scale || !fit.converged {
            state.diagnostics.dropped_feedback += 1;
            return Ok(down);
        }
        GaussianBelief::product(&[&down, &fit.belief])
    }

    /// MAP pose of MS `k` from all slots.
    pub fn final_map(&self, state: &mut MessageState, k: usize) -> Result<PoseEstimate> {
        let obj = self.pose_density(self.observations(state, k, None), k);
        let extra: Vec<Option<DVector<f64>>> = (0..state.slots).map(|t| state.pose_mode[state.kt(k, t)].clone()).collect();
        let start = self.best_mode(&obj, &extra);
        let fit = laplace_fit(&obj, &start, &self.cfg.ascent)?;
        if !fit.converged {
            state.diagnostics.map_not_converged += 1;
        }
        let x = &fit.belief.mean;
        let attitude = EulerAngles::from_unconstrained([x[3], x[4], x[5]])?;
        Ok(PoseEstimate {
            position: Vec3::new(x[0], x[1], x[2]),
            attitude,
            basis: rotation_basis(&attitude),
            position_cov: fit.belief.cov.fixed_view::<3, 3>(0, 0).into_owned(),
            attitude_cov: fit.belief.cov.fixed_view::<3, 3>(3, 3).into_owned(),
            converged: fit.converged,
        })
    }

    pub fn run(&self, signal: &ReceivedSignal) -> Result<AppleOutput> {
        let (kk, tt) = (self.layout.ms_count, self.slots());
        let mut state = init_messages(self.plan.len(), kk, tt, self.cfg)?;
        let iterations = self.cfg.iterations_for(kk);
        for it in 0..iterations {
            state.iteration = it;
            self.aoa_module_pass(&mut state, signal)?;
            for k in 0..kk {
                for t in 0..tt {
                    let b = self.fuse_antenna_position(&mut state, k, t)?;
                    let c = state.kt(k, t);
                    state.fused[c] = Some(b);
                }
                self.update_pose_messages(&mut state, k)?;
                for t in 0..tt {
                    let b = self.project_pose_to_antennas(&state, k, t)?;
                    let c = state.kt(k, t);
                    state.to_fusion[c] = Some(b);
                }
                if it + 1 < iterations {
                    for t in 0..tt {
                        for m in 1..=state.subarrays {
                            let b = self.feedback_message(&mut state, m, k, t)?;
                            let c = state.mkt(m, k, t);
                            state.to_aoa[c] = b;
                        }
                    }
                }
            }
        }
        let estimates = (0..kk).map(|k| self.final_map(&mut state, k)).collect::<Result<Vec<_>>>()?;
        Ok(AppleOutput { estimates, state })
    }
}

/// Same position, attitude reflected through the plane normal to the line of sight.
///
/// For a planar body `H R diag(1, 1, -1)` places every antenna at the mirror
/// image of its original position, `H` being that reflection.
pub fn mirrored_tilt(x: &DVector<f64>) -> Option<DVector<f64>> {
    let p = Vec3::new(x[0], x[1], x[2]);
    let n = p.norm();
    if !(n > 0.0) {
        return None;
    }
    let u = p / n;
    let h = Matrix3::identity() - u * u.transpose() * 2.0;
    let r = rotation_matrix(&[x[3], x[4], x[5]]) * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
    let e = EulerAngles::from_matrix(&(h * r)).ok()?;
    let [a, b, c] = e.as_array();
    Some(DVector::from_vec(vec![x[0], x[1], x[2], a, b, c]))
}

/// `p + R(a) q` with covariance `C_p + Q C_a Q^T`, `Q` the rotation Jacobian applied to `q`.
pub fn project(position: &GaussianBelief, attitude: &GaussianBelief, local: &Vec2) -> GaussianBelief {
    let a = [attitude.mean[0], attitude.mean[1], attitude.mean[2]];
    let mean = position.mean3() + basis_from_angles(&a).apply(local);
    let d = basis_derivatives(&a);
    let q = Matrix3::from_columns(&[d[0] * local, d[1] * local, d[2] * local]);
    let cp = position.cov.fixed_view::<3, 3>(0, 0).into_owned();
    let ca = attitude.cov.fixed_view::<3, 3>(0, 0).into_owned();
    let cov = cp + q * ca * q.transpose();
    GaussianBelief {
        mean: DVector::from_column_slice(mean.as_slice()),
        cov: DMatrix::from_iterator(3, 3, ((cov + cov.transpose()) * 0.5).iter().copied()),
    }
}

/// Runs the full estimator on one received signal.
pub fn run(signal: &ReceivedSignal, plan: &PartitionPlan, layout: &ArrayLayout, cfg: &AppleConfig) -> Result<AppleOutput> {
    Engine::new(plan, layout, cfg)?.run(signal)
}
