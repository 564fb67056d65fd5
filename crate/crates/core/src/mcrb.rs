//! Lower bound on the pose error of estimators built on the subarray-wise
//! plane-wave model when the data follow the exact spherical model.
//!
//! The plane-wave model is parameterized by all poses plus one free complex gain
//! per `(subarray, MS, slot)`. The pseudotrue parameter minimizes the squared
//! distance between the two noiseless signals; the bound is the sandwich
//! `A^-1 B A^-1` plus the outer product of the pseudotrue bias.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2x3};
use num_complex::Complex64;

use crate::channel::{exact_mean, steering, swff_coefficients, Scenario};
use crate::error::{invalid, Error, Result};
use crate::geometry::{basis_derivatives, basis_from_angles, wrap_angle, Pose, Vec2, Vec3};
use crate::partition::PartitionPlan;

/// Numerical settings of the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McrbOptions {
    /// Relative step of every central difference.
    pub fd_step: f64,
    /// Condition number of the equilibrated `A` above which a pseudo-inverse is used.
    pub max_condition: f64,
    pub max_iter: usize,
    /// Relative decrease of the squared mismatch below which the outer search stops.
    pub tol: f64,
    /// Retry a non-converged pseudotrue search from the best point of a coordinate grid.
    pub grid_fallback: bool,
    pub grid_step: f64,
}

impl Default for McrbOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-6,
            max_condition: 1e12,
            max_iter: 100,
            tol: 1e-14,
            grid_fallback: false,
            grid_step: 1e-3,
        }
    }
}

/// Poses (`K` positions, then `K` angle triples) plus the plane-wave gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    ms_count: usize,
    pose: DVector<f64>,
    /// Indexed `((m - 1) * K + k) * T + t`.
    pub coeffs: Vec<Complex64>,
}

impl ParamVector {
    pub fn new(pose: DVector<f64>, coeffs: Vec<Complex64>) -> Result<Self> {
        if pose.len() % 6 != 0 || pose.is_empty() {
            return Err(invalid("pose vector length must be a positive multiple of 6"));
        }
        Ok(Self {
            ms_count: pose.len() / 6,
            pose,
            coeffs,
        })
    }

    pub fn from_poses(poses: &[Pose], coeffs: Vec<Complex64>) -> Result<Self> {
        let k = poses.len();
        let mut v = DVector::zeros(6 * k);
        for (i, p) in poses.iter().enumerate() {
            v.rows_mut(3 * i, 3).copy_from(&p.position);
            let a = p.attitude.as_array();
            for (j, x) in a.into_iter().enumerate() {
                v[3 * k + 3 * i + j] = x;
            }
        }
        Self::new(v, coeffs)
    }

    pub fn ms_count(&self) -> usize {
        self.ms_count
    }

    /// Pose part, length `6K`.
    pub fn pose(&self) -> &DVector<f64> {
        &self.pose
    }

    pub fn position(&self, k: usize) -> Vec3 {
        Vec3::new(self.pose[3 * k], self.pose[3 * k + 1], self.pose[3 * k + 2])
    }

    pub fn angles(&self, k: usize) -> [f64; 3] {
        let o = 3 * self.ms_count + 3 * k;
        [self.pose[o], self.pose[o + 1], self.pose[o + 2]]
    }

    /// Pose followed by the real and imaginary part of every gain.
    pub fn full(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.pose.len() + 2 * self.coeffs.len());
        v.rows_mut(0, self.pose.len()).copy_from(&self.pose);
        for (i, c) in self.coeffs.iter().enumerate() {
            v[self.pose.len() + 2 * i] = c.re;
            v[self.pose.len() + 2 * i + 1] = c.im;
        }
        v
    }

    fn with_pose(&self, pose: DVector<f64>) -> Self {
        Self {
            ms_count: self.ms_count,
            pose,
            coeffs: self.coeffs.clone(),
        }
    }
}

/// Cosines of one antenna seen from one subarray, with first and second
/// derivatives with respect to the six pose parameters of its MS.
struct CosineJet {
    value: (f64, f64),
    grad: [[f64; 6]; 2],
    hess: [[[f64; 6]; 6]; 2],
}

fn cosine_gradient(pose: &[f64; 6], local: &Vec2, centre: &Vec3) -> ((f64, f64), [[f64; 6]; 2]) {
    let angles = [pose[3], pose[4], pose[5]];
    let a = Vec3::new(pose[0], pose[1], pose[2]) + basis_from_angles(&angles).apply(local);
    let d = a - centre;
    let n = d.norm();
    let u = d / n;
    let g: Matrix2x3<f64> = Matrix2x3::from_rows(&[
        ((Vec3::x() - u * u.x) / n).transpose(),
        ((Vec3::y() - u * u.y) / n).transpose(),
    ]);
    let db = basis_derivatives(&angles);
    let mut out = [[0.0; 6]; 2];
    for r in 0..2 {
        for c in 0..3 {
            out[r][c] = g[(r, c)];
        }
        for (i, dbi) in db.iter().enumerate() {
            out[r][3 + i] = (g.row(r) * (dbi * local))[(0, 0)];
        }
    }
    ((u.x, u.y), out)
}

fn cosine_jet(pose: &[f64; 6], local: &Vec2, centre: &Vec3, step: f64) -> CosineJet {
    let (value, grad) = cosine_gradient(pose, local, centre);
    let mut hess = [[[0.0; 6]; 6]; 2];
    for b in 0..6 {
        let h = step * pose[b].abs().max(1.0);
        let mut plus = *pose;
        let mut minus = *pose;
        plus[b] += h;
        minus[b] -= h;
        let (_, gp) = cosine_gradient(&plus, local, centre);
        let (_, gm) = cosine_gradient(&minus, local, centre);
        for r in 0..2 {
            for a in 0..6 {
                hess[r][a][b] = (gp[r][a] - gm[r][a]) / (2.0 * h);
            }
        }
    }
    for h in &mut hess {
        for a in 0..6 {
            for b in 0..a {
                let s = 0.5 * (h[a][b] + h[b][a]);
                h[a][b] = s;
                h[b][a] = s;
            }
        }
    }
    CosineJet { value, grad, hess }
}

/// Plane-wave signal model over a fixed partition and transmit pattern.
#[derive(Debug, Clone)]
pub struct SwffModel<'a> {
    pub plan: &'a PartitionPlan,
    pub locals: Vec<Vec2>,
    pub ms_count: usize,
}

impl<'a> SwffModel<'a> {
    pub fn new(plan: &'a PartitionPlan, locals: Vec<Vec2>, ms_count: usize) -> Result<Self> {
        if locals.is_empty() || ms_count == 0 {
            return Err(invalid("model needs at least one MS and one slot"));
        }
        Ok(Self { plan, locals, ms_count })
    }

    pub fn for_scenario(sc: &Scenario, plan: &'a PartitionPlan) -> Result<Self> {
        Self::new(plan, sc.local_positions(), sc.ms_count())
    }

    pub fn slots(&self) -> usize {
        self.locals.len()
    }

    pub fn link(&self, m: usize, k: usize, t: usize) -> usize {
        ((m - 1) * self.ms_count + k) * self.slots() + t
    }

    pub fn coeff_count(&self) -> usize {
        self.plan.len() * self.ms_count * self.slots()
    }

    fn pose_of(&self, pose: &DVector<f64>, k: usize) -> [f64; 6] {
        let kk = self.ms_count;
        [
            pose[3 * k],
            pose[3 * k + 1],
            pose[3 * k + 2],
            pose[3 * kk + 3 * k],
            pose[3 * kk + 3 * k + 1],
            pose[3 * kk + 3 * k + 2],
        ]
    }

    /// Global index of local pose parameter `a` of MS `k`.
    fn pose_index(&self, k: usize, a: usize) -> usize {
        if a < 3 {
            3 * k + a
        } else {
            3 * self.ms_count + 3 * k + a - 3
        }
    }

    fn cosines(&self, pose: &DVector<f64>, m: usize, k: usize, t: usize) -> (f64, f64) {
        let p = self.pose_of(pose, k);
        cosine_gradient(&p, &self.locals[t], &self.plan.subarray(m).phase_position).0
    }

    /// Steering matrix of subarray `m` in slot `t`, one column per MS.
    fn steering_matrix(&self, pose: &DVector<f64>, m: usize, t: usize) -> DMatrix<Complex64> {
        let s = self.plan.subarray(m);
        let mut a = DMatrix::zeros(s.len(), self.ms_count);
        for k in 0..self.ms_count {
            let c = self.cosines(pose, m, k, t);
            for j in 1..=s.ny {
                for i in 1..=s.nx {
                    a[((i - 1) + (j - 1) * s.nx, k)] = steering(i, j, c);
                }
            }
        }
        a
    }

    fn block(&self, y: &DMatrix<Complex64>, m: usize, t: usize) -> DVector<Complex64> {
        let rows = self.plan.rows_of(m);
        DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[(r, t)]))
    }

    /// Noiseless plane-wave signal, `N_B x T`.
    pub fn mean(&self, params: &ParamVector) -> DMatrix<Complex64> {
        let mut y = DMatrix::zeros(self.plan.bs().len(), self.slots());
        for m in 1..=self.plan.len() {
            let rows = self.plan.rows_of(m);
            for t in 0..self.slots() {
                let a = self.steering_matrix(&params.pose, m, t);
                let g = DVector::from_iterator(
                    self.ms_count,
                    (0..self.ms_count).map(|k| params.coeffs[self.link(m, k, t)]),
                );
                let v = a * g;
                for (e, &r) in v.iter().zip(&rows) {
                    y[(r, t)] = *e;
                }
            }
        }
        y
    }

    /// Least-squares gains for fixed poses.
    pub fn fit_coefficients(&self, pose: &DVector<f64>, observed: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeff_count()];
        for m in 1..=self.plan.len() {
            for t in 0..self.slots() {
                let a = self.steering_matrix(pose, m, t);
                let g = a
                    .svd(true, true)
                    .solve(&self.block(observed, m, t), 1e-13)
                    .map_err(|e| Error::Numerical(e.to_string()))?;
                for k in 0..self.ms_count {
                    out[self.link(m, k, t)] = g[k];
                }
            }
        }
        Ok(out)
    }

    /// Stacked real and imaginary parts of the mismatch left after the gain fit.
    fn projected_residual(&self, pose: &DVector<f64>, observed: &DMatrix<Complex64>) -> Result<DVector<f64>> {
        let mut out = Vec::with_capacity(2 * observed.len());
        for m in 1..=self.plan.len() {
            for t in 0..self.slots() {
                let a = self.steering_matrix(pose, m, t);
                let y = self.block(observed, m, t);
                let g = a
                    .clone()
                    .svd(true, true)
                    .solve(&y, 1e-13)
                    .map_err(|e| Error::Numerical(e.to_string()))?;
                for e in (y - a * g).iter() {
                    out.push(e.re);
                    out.push(e.im);
                }
            }
        }
        Ok(DVector::from_vec(out))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudotrueFit {
    pub params: ParamVector,
    /// Squared Frobenius mismatch at the returned point.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn levenberg_marquardt(
    model: &SwffModel,
    observed: &DMatrix<Complex64>,
    start: &DVector<f64>,
    opts: &McrbOptions,
) -> Result<(DVector<f64>, f64, usize, bool)> {
    let n = start.len();
    let mut x = start.clone();
    let mut r = model.projected_residual(&x, observed)?;
    let mut f = r.norm_squared();
    let mut damping = 1e-3;
    for iter in 0..opts.max_iter {
        if f == 0.0 {
            return Ok((x, f, iter, true));
        }
        let mut jac = DMatrix::zeros(r.len(), n);
        for i in 0..n {
            let h = opts.fd_step * x[i].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let d = (model.projected_residual(&xp, observed)? - model.projected_residual(&xm, observed)?) / (2.0 * h);
            jac.set_column(i, &d);
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        loop {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += damping * jtj[(i, i)].max(f64::MIN_POSITIVE);
            }
            let step = lhs.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step {
                let cand = &x + &step;
                let rc = model.projected_residual(&cand, observed)?;
                let fc = rc.norm_squared();
                if fc < f {
                    let small_step = step.norm() <= 1e-14 * (1.0 + x.norm());
                    let small_gain = f - fc <= opts.tol * f;
                    x = cand;
                    r = rc;
                    f = fc;
                    damping = (damping / 10.0).max(1e-12);
                    if small_step || small_gain {
                        return Ok((x, f, iter + 1, true));
                    }
                    break;
                }
            }
            damping *= 10.0;
            if damping > 1e12 {
                // no descent direction left at working precision
                return Ok((x, f, iter + 1, true));
            }
        }
    }
    Ok((x, f, opts.max_iter, false))
}

/// Pseudotrue parameter: poses searched locally from `truth`, gains in closed form.
pub fn pseudotrue_fit(
    model: &SwffModel,
    observed: &DMatrix<Complex64>,
    truth: &ParamVector,
    opts: &McrbOptions,
) -> Result<PseudotrueFit> {
    if truth.ms_count != model.ms_count {
        return Err(invalid("parameter vector does not match the model"));
    }
    let (mut x, mut f, mut iters, mut converged) = levenberg_marquardt(model, observed, truth.pose(), opts)?;
    if !converged && opts.grid_fallback {
        let mut best = (f, x.clone());
        for i in 0..x.len() {
            for s in [-2.0, -1.0, 1.0, 2.0] {
                let mut c = x.clone();
                c[i] += s * opts.grid_step * x[i].abs().max(1.0);
                let fc = model.projected_residual(&c, observed)?.norm_squared();
                if fc < best.0 {
                    best = (fc, c);
                }
            }
        }
        let (x2, f2, it2, conv2) = levenberg_marquardt(model, observed, &best.1, opts)?;
        if f2 <= f {
            (x, f, converged) = (x2, f2, conv2);
        }
        iters += it2;
    }
    let coeffs = model.fit_coefficients(&x, observed)?;
    Ok(PseudotrueFit {
        params: truth.with_pose(x).with_coeffs(coeffs),
        residual: f,
        iterations: iters,
        converged,
    })
}

impl ParamVector {
    fn with_coeffs(mut self, coeffs: Vec<Complex64>) -> Self {
        self.coeffs = coeffs;
        self
    }
}

/// Generalized information matrices over the full parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// `A` and `B` at `params`, with `observed` the noiseless exact signal.
pub fn information_matrices(
    model: &SwffModel,
    params: &ParamVector,
    observed: &DMatrix<Complex64>,
    noise_var: f64,
    opts: &McrbOptions,
) -> Result<InformationMatrices> {
    if !(noise_var > 0.0) {
        return Err(invalid("noise variance must be positive"));
    }
    let kk = model.ms_count;
    let pose_dim = 6 * kk;
    let dim = pose_dim + 2 * model.coeff_count();
    let mut fim = DMatrix::<f64>::zeros(dim, dim);
    let mut curv = DMatrix::<f64>::zeros(dim, dim);
    let mut score = DVector::<f64>::zeros(dim);
    let j = Complex64::i();

    for m in 1..=model.plan.len() {
        let s = model.plan.subarray(m);
        let centre = s.phase_position;
        let n = s.len();
        let elems: Vec<(f64, f64)> = (1..=s.ny)
            .flat_map(|jj| (1..=s.nx).map(move |ii| (ii as f64, jj as f64)))
            .collect();
        for t in 0..model.slots() {
            let jets: Vec<CosineJet> = (0..kk)
                .map(|k| cosine_jet(&model.pose_of(&params.pose, k), &model.locals[t], &centre, opts.fd_step))
                .collect();
            let steer: Vec<DVector<Complex64>> = jets
                .iter()
                .map(|jet| {
                    DVector::from_iterator(
                        n,
                        elems
                            .iter()
                            .map(|&(i, jj)| Complex64::from_polar(1.0, PI * (i * jet.value.0 + jj * jet.value.1))),
                    )
                })
                .collect();
            let gains: Vec<Complex64> = (0..kk).map(|k| params.coeffs[model.link(m, k, t)]).collect();
            let y = model.block(observed, m, t);
            let mut eps = y;
            for k in 0..kk {
                eps -= &steer[k] * gains[k];
            }

            // local columns: 6 pose parameters per MS, then re/im of each gain
            let local = 8 * kk;
            let mut index = Vec::with_capacity(local);
            let mut cols = DMatrix::<Complex64>::zeros(n, local);
            for k in 0..kk {
                for a in 0..6 {
                    let c = 6 * k + a;
                    index.push(model.pose_index(k, a));
                    for (e, &(i, jj)) in elems.iter().enumerate() {
                        let dphase = PI * (i * jets[k].grad[0][a] + jj * jets[k].grad[1][a]);
                        cols[(e, c)] = gains[k] * j * dphase * steer[k][e];
                    }
                }
            }
            for k in 0..kk {
                let link = model.link(m, k, t);
                index.push(pose_dim + 2 * link);
                index.push(pose_dim + 2 * link + 1);
                let c = 6 * kk + 2 * k;
                for e in 0..n {
                    cols[(e, c)] = steer[k][e];
                    cols[(e, c + 1)] = j * steer[k][e];
                }
            }

            let gram = cols.adjoint() * &cols;
            let proj = cols.adjoint() * &eps;
            for a in 0..local {
                score[index[a]] += proj[a].re;
                for b in 0..local {
                    fim[(index[a], index[b])] += gram[(a, b)].re;
                }
            }

            // second derivatives: pose-pose within one MS and pose-gain of the same link
            for k in 0..kk {
                let jet = &jets[k];
                for a in 0..6 {
                    let ga = 6 * k + a;
                    let mut cross = Complex64::new(0.0, 0.0);
                    for (e, &(i, jj)) in elems.iter().enumerate() {
                        let dphase = PI * (i * jet.grad[0][a] + jj * jet.grad[1][a]);
                        cross += eps[e].conj() * j * dphase * steer[k][e];
                    }
                    let gre = 6 * kk + 2 * k;
                    for (off, unit) in [(0, Complex64::new(1.0, 0.0)), (1, j)] {
                        let v = (cross * unit).re;
                        curv[(index[ga], index[gre + off])] += v;
                        curv[(index[gre + off], index[ga])] += v;
                    }
                    for b in 0..=a {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (e, &(i, jj)) in elems.iter().enumerate() {
                            let da = PI * (i * jet.grad[0][a] + jj * jet.grad[1][a]);
                            let db = PI * (i * jet.grad[0][b] + jj * jet.grad[1][b]);
                            let dab = PI * (i * jet.hess[0][a][b] + jj * jet.hess[1][a][b]);
                            acc += eps[e].conj() * (j * dab - da * db) * steer[k][e];
                        }
                        let v = (acc * gains[k]).re;
                        let gb = 6 * k + b;
                        curv[(index[ga], index[gb])] += v;
                        if a != b {
                            curv[(index[gb], index[ga])] += v;
                        }
                    }
                }
            }
        }
    }
    let a = (&curv - &fim) * (2.0 / noise_var);
    let b = &score * score.transpose() * (4.0 / (noise_var * noise_var)) + &fim * (2.0 / noise_var);
    Ok(InformationMatrices {
        a: symmetrize(a),
        b: symmetrize(b),
    })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Inverse of a symmetric matrix after diagonal equilibration; pseudo-inverse
/// when the equilibrated condition number exceeds `max_condition`.
pub fn symmetric_inverse(m: &DMatrix<f64>, max_condition: f64) -> Result<(DMatrix<f64>, bool)> {
    let n = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite information matrix".into()));
    }
    let d = DVector::from_iterator(n, (0..n).map(|i| {
        let v = m[(i, i)].abs();
        if v > 0.0 {
            1.0 / v.sqrt()
        } else {
            1.0
        }
    }));
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * d[i] * d[j]);
    let eig = scaled.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    if !(top > 0.0) {
        return Err(Error::Numerical("information matrix vanishes".into()));
    }
    let floor = top / max_condition;
    let mut pinv = false;
    let inv_vals = eig.eigenvalues.map(|l| {
        if l.abs() > floor {
            1.0 / l
        } else {
            pinv = true;
            0.0
        }
    });
    let inner = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Ok((DMatrix::from_fn(n, n, |i, j| inner[(i, j)] * d[i] * d[j]), pinv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct McrbResult {
    /// Pose block of the bound, `6K x 6K`.
    pub lb: DMatrix<f64>,
    pub pseudotrue: ParamVector,
    /// Norm of the position part and of the attitude part of the pseudotrue bias.
    pub bias_norm: (f64, f64),
    /// `trace` of each MS's position block, squared meters.
    pub position_trace: Vec<f64>,
    /// `trace` of each MS's attitude block, squared radians.
    pub attitude_trace: Vec<f64>,
    pub pseudo_inverse: bool,
    pub fit_converged: bool,
}

impl McrbResult {
    /// Bound on the position RMSE summed over MSs.
    pub fn position_bound(&self) -> f64 {
        self.position_trace.iter().sum::<f64>().sqrt()
    }

    pub fn attitude_bound(&self) -> f64 {
        self.attitude_trace.iter().sum::<f64>().sqrt()
    }
}

/// Difference of two full parameter vectors with angles wrapped.
fn param_difference(a: &ParamVector, b: &ParamVector) -> DVector<f64> {
    let mut d = a.full() - b.full();
    let k = a.ms_count;
    for i in 3 * k..6 * k {
        d[i] = wrap_angle(d[i]);
    }
    d
}

/// Assembles the bound from `A`, `B` and the pseudotrue bias.
pub fn lower_bound(
    info: &InformationMatrices,
    pseudotrue: &ParamVector,
    truth: &ParamVector,
    opts: &McrbOptions,
) -> Result<McrbResult> {
    let dim = info.a.nrows();
    let bias = param_difference(pseudotrue, truth);
    if bias.len() != dim {
        return Err(invalid("parameter vectors do not match the information matrices"));
    }
    let (a_inv, pinv) = symmetric_inverse(&info.a, opts.max_condition)?;
    let full = symmetrize(&a_inv * &info.b * &a_inv + &bias * bias.transpose());
    let k = pseudotrue.ms_count;
    let lb = full.view((0, 0), (6 * k, 6 * k)).into_owned();
    let position_trace = (0..k).map(|i| (0..3).map(|j| lb[(3 * i + j, 3 * i + j)]).sum()).collect();
    let attitude_trace = (0..k)
        .map(|i| (0..3).map(|j| lb[(3 * k + 3 * i + j, 3 * k + 3 * i + j)]).sum())
        .collect();
    Ok(McrbResult {
        lb,
        pseudotrue: pseudotrue.clone(),
        bias_norm: (bias.rows(0, 3 * k).norm(), bias.rows(3 * k, 3 * k).norm()),
        position_trace,
        attitude_trace,
        pseudo_inverse: pinv,
        fit_converged: true,
    })
}

/// True parameters of a scene: its poses and the plane-wave gains they imply.
pub fn truth_params(sc: &Scenario, plan: &PartitionPlan) -> Result<ParamVector> {
    let coeffs = swff_coefficients(sc, plan)?.links.iter().map(|l| l.gain).collect();
    ParamVector::from_poses(&sc.poses, coeffs)
}

/// Full bound for one scene against its exact line-of-sight signal.
pub fn bound_for_scenario(sc: &Scenario, plan: &PartitionPlan, opts: &McrbOptions) -> Result<McrbResult> {
    let model = SwffModel::for_scenario(sc, plan)?;
    let truth = truth_params(sc, plan)?;
    let observed = exact_mean(sc);
    bound_from_mean(&model, &observed, &truth, sc.noise_var, opts)
}

/// Bound against an arbitrary noiseless signal.
pub fn bound_from_mean(
    model: &SwffModel,
    observed: &DMatrix<Complex64>,
    truth: &ParamVector,
    noise_var: f64,
    opts: &McrbOptions,
) -> Result<McrbResult> {
    let fit = pseudotrue_fit(model, observed, truth, opts)?;
    let info = information_matrices(model, &fit.params, observed, noise_var, opts)?;
    let mut out = lower_bound(&info, &fit.params, truth, opts)?;
    out.fit_converged = fit.converged;
    Ok(out)
}
