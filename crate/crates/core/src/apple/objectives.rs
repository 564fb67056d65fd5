//! Log densities maximized by the fusion module.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3};

use crate::circular::{VmPair, VonMises};
use crate::geometry::{basis_derivatives, basis_from_angles, Vec2, Vec3};
use crate::laplace::Objective;

/// Sum over subarrays of von Mises direction likelihoods of one antenna position.
#[derive(Debug, Clone)]
pub struct DirectionFusion {
    pub terms: Vec<(Vec3, VmPair)>,
}

impl DirectionFusion {
    pub fn is_flat(&self) -> bool {
        self.terms.iter().all(|(_, v)| v.x.kappa + v.y.kappa <= 0.0)
    }
}

impl Objective for DirectionFusion {
    fn dim(&self) -> usize {
        3
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let p = Vec3::new(x[0], x[1], x[2]);
        self.terms
            .iter()
            .map(|(r, vm)| {
                let d = p - r;
                let n = d.norm();
                if !(n > 0.0) {
                    return f64::NEG_INFINITY;
                }
                vm.x.log_kernel(PI * d.x / n) + vm.y.log_kernel(PI * d.y / n)
            })
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = Vec3::new(x[0], x[1], x[2]);
        let mut g = Vec3::zeros();
        for (r, vm) in &self.terms {
            let d = p - r;
            let n = d.norm();
            if !(n > 0.0) {
                continue;
            }
            let u = d / n;
            for (axis, e) in [(&vm.x, Vec3::x()), (&vm.y, Vec3::y())] {
                let phi = u.dot(&e);
                let grad_phi = (e - u * phi) / n;
                g -= grad_phi * (axis.kappa * (PI * phi - axis.mean).sin() * PI);
            }
        }
        DVector::from_column_slice(g.as_slice())
    }
}

/// Gaussian observation of one antenna at body-frame offset `local`.
#[derive(Debug, Clone)]
pub struct AntennaObservation {
    pub local: Vec2,
    pub mean: Vec3,
    pub precision: Matrix3<f64>,
}

/// Log posterior of one MS pose `[position; roll, pitch, yaw]`.
#[derive(Debug, Clone)]
pub struct PoseDensity {
    pub observations: Vec<AntennaObservation>,
    pub position_prior_var: f64,
    /// Priors on roll, twice the pitch, and yaw.
    pub attitude_prior: [VonMises; 3],
}

impl PoseDensity {
    fn split(x: &DVector<f64>) -> (Vec3, [f64; 3]) {
        (Vec3::new(x[0], x[1], x[2]), [x[3], x[4], x[5]])
    }

    fn prior_args(a: &[f64; 3]) -> [f64; 3] {
        [a[0], 2.0 * a[1], a[2]]
    }
}

impl Objective for PoseDensity {
    fn dim(&self) -> usize {
        6
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let (p, a) = Self::split(x);
        let b = basis_from_angles(&a);
        let mut v = -0.5 * p.norm_squared() / self.position_prior_var;
        for o in &self.observations {
            let e = o.mean - p - b.apply(&o.local);
            v -= 0.5 * (e.transpose() * o.precision * e)[(0, 0)];
        }
        for (vm, arg) in self.attitude_prior.iter().zip(Self::prior_args(&a)) {
            v += vm.log_kernel(arg);
        }
        v
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let (p, a) = Self::split(x);
        let b = basis_from_angles(&a);
        let db = basis_derivatives(&a);
        let mut gp = -p / self.position_prior_var;
        let mut ga = [0.0; 3];
        for o in &self.observations {
            let e = o.mean - p - b.apply(&o.local);
            let pe = o.precision * e;
            gp += pe;
            for (g, d) in ga.iter_mut().zip(&db) {
                *g += pe.dot(&(d * o.local));
            }
        }
        let args = Self::prior_args(&a);
        for (i, factor) in [1.0, 2.0, 1.0].into_iter().enumerate() {
            let vm = &self.attitude_prior[i];
            ga[i] -= factor * vm.kappa * (args[i] - vm.mean).sin();
        }
        DVector::from_vec(vec![gp.x, gp.y, gp.z, ga[0], ga[1], ga[2]])
    }
}
