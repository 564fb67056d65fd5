//! Mode search and Laplace (Gaussian) approximation of log densities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::circular::GaussianBelief;
use crate::error::{Error, Result};

/// A log density up to an additive constant.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> f64;

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        fd_gradient(|p| self.value(p), x)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian_sym(|p| self.gradient(p), x)
    }
}

pub fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> DVector<f64> {
    let mut p = x.clone();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = fd_step(x[i]);
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        }),
    )
}

/// Central-difference Jacobian of a gradient, symmetrized.
pub fn fd_jacobian_sym(g: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut p = x.clone();
    for i in 0..n {
        let s = fd_step(x[i]);
        p[i] = x[i] + s;
        let up = g(&p);
        p[i] = x[i] - s;
        let down = g(&p);
        p[i] = x[i];
        h.set_column(i, &((up - down) / (2.0 * s)));
    }
    (&h + h.transpose()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    pub initial_step: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Precondition the gradient with the regularized inverse Hessian.
    pub newton: bool,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
            grad_tol: 1e-8,
            max_iter: 200,
            newton: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Eigen-decomposes a symmetric matrix and forces every eigenvalue `<= -floor`.
fn negative_definite(h: &DMatrix<f64>, floor: f64) -> (SymmetricEigen<f64, nalgebra::Dyn>, bool) {
    let mut eig = SymmetricEigen::new((h + h.transpose()) * 0.5);
    let mut changed = false;
    for l in eig.eigenvalues.iter_mut() {
        if !(*l <= -floor) {
            *l = -floor;
            changed = true;
        }
    }
    (eig, changed)
}

fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let top = h.amax();
    let (eig, _) = negative_definite(h, (top * 1e-10).max(1e-9));
    let v = &eig.eigenvectors;
    let coef = v.transpose() * g;
    let scaled = DVector::from_iterator(coef.len(), coef.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| -c / l));
    v * scaled
}

/// Gradient ascent with Armijo backtracking.
pub fn maximize(obj: &dyn Objective, init: &DVector<f64>, opts: &AscentOptions) -> AscentResult {
    let mut x = init.clone();
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let gn = g.norm();
        if !f.is_finite() || !gn.is_finite() {
            break;
        }
        if gn < opts.grad_tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        let mut predicted_gain = f64::INFINITY;
        let mut directions = Vec::with_capacity(2);
        if opts.newton {
            directions.push(newton_direction(&obj.hessian(&x), &g));
        }
        directions.push(g.clone());
        for d in directions {
            let slope = g.dot(&d);
            if !(slope > 0.0) || !d.iter().all(|v| v.is_finite()) {
                continue;
            }
            if opts.newton && predicted_gain.is_infinite() {
                predicted_gain = 0.5 * slope;
            }
            let mut step = opts.initial_step;
            for _ in 0..80 {
                let xn = &x + &d * step;
                let fnew = obj.value(&xn);
                if fnew.is_finite() && fnew >= f + opts.armijo * step * slope {
                    let moved = (&xn - &x).norm();
                    let gain = fnew - f;
                    x = xn;
                    f = fnew;
                    accepted = true;
                    if moved <= 1e-14 * (1.0 + x.norm()) && gain <= 1e-15 * (1.0 + f.abs()) {
                        converged = true;
                    }
                    break;
                }
                step *= opts.backtrack;
            }
            if accepted {
                break;
            }
        }
        iterations += 1;
        if !accepted {
            // no representable improvement left: stationary to working precision
            converged = predicted_gain <= 1e-12 * (1.0 + f.abs());
            break;
        }
        g = obj.gradient(&x);
        if converged {
            break;
        }
    }
    let grad_norm = g.norm();
    if grad_norm < opts.grad_tol {
        converged = true;
    }
    AscentResult {
        x,
        value: f,
        grad_norm,
        iterations,
        converged,
    }
}

/// Negative inverse of a Hessian after forcing it negative definite.
pub fn covariance_from_hessian(h: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let (eig, regularized) = negative_definite(h, 1e-9);
    let vals = eig.eigenvalues.map(|l| -1.0 / l);
    let cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    ((&cov + cov.transpose()) * 0.5, regularized)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceFit {
    pub belief: GaussianBelief,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The Hessian at the mode had to be pushed to negative definite.
    pub regularized: bool,
}

pub fn laplace_fit(obj: &dyn Objective, init: &DVector<f64>, opts: &AscentOptions) -> Result<LaplaceFit> {
    if init.len() != obj.dim() {
        return Err(Error::InvalidInput("initial point has the wrong dimension".into()));
    }
    let run = maximize(obj, init, opts);
    if !run.value.is_finite() {
        return Err(Error::Numerical("objective not finite at the initial point".into()));
    }
    let (cov, regularized) = covariance_from_hessian(&obj.hessian(&run.x));
    Ok(LaplaceFit {
        belief: GaussianBelief::new(run.x, cov)?,
        value: run.value,
        iterations: run.iterations,
        converged: run.converged,
        regularized,
    })
}
