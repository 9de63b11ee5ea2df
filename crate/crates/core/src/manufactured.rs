//! Manufactured Navier–Stokes solution on the unit square.
//!
//! With `a = pi x`, `b = pi y` and `T = sin t`:
//!
//! ```text
//! v_x =  T sin(a)^2 sin(b) cos(b)
//! v_y = -T sin(b)^2 sin(a) cos(a)
//! p   =  T sin(a) cos(a) sin(b) cos(b)
//! ```
//!
//! The velocity is divergence free and vanishes on the boundary of the
//! square; everything vanishes at `t = 0`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::RigidDisk;

/// Exact fields and their derivatives at one space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExactValues {
    pub velocity: [f64; 2],
    pub pressure: f64,
    pub velocity_dt: [f64; 2],
    /// `grad[c][d] = d v_c / d x_d`
    pub velocity_grad: [[f64; 2]; 2],
    pub velocity_laplacian: [f64; 2],
    pub pressure_grad: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct ExactSolution {
    pub nu: f64,
}

impl ExactSolution {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity {nu} must be positive")));
        }
        Ok(Self { nu })
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> ExactValues {
        let (sa, ca) = (PI * x[0]).sin_cos();
        let (sb, cb) = (PI * x[1]).sin_cos();
        let (st, ct) = t.sin_cos();
        let (s2a, c2a) = (2.0 * PI * x[0]).sin_cos();
        let (s2b, c2b) = (2.0 * PI * x[1]).sin_cos();
        let pi2 = PI * PI;

        let ux = sa * sa * sb * cb;
        let uy = -sb * sb * sa * ca;
        ExactValues {
            velocity: [st * ux, st * uy],
            pressure: st * sa * ca * sb * cb,
            velocity_dt: [ct * ux, ct * uy],
            velocity_grad: [
                [st * PI * s2a * sb * cb, st * PI * sa * sa * c2b],
                [-st * PI * sb * sb * c2a, -st * PI * s2b * sa * ca],
            ],
            velocity_laplacian: [
                st * sb * cb * 2.0 * pi2 * (1.0 - 4.0 * sa * sa),
                -st * sa * ca * 2.0 * pi2 * (1.0 - 4.0 * sb * sb),
            ],
            pressure_grad: [st * 0.5 * PI * c2a * s2b, st * 0.5 * PI * s2a * c2b],
        }
    }

    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.eval(x, t).velocity
    }

    pub fn pressure(&self, x: [f64; 2], t: f64) -> f64 {
        self.eval(x, t).pressure
    }

    /// `f = dv/dt + (v . grad) v - nu lap v + grad p`
    pub fn source(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let e = self.eval(x, t);
        let v = e.velocity;
        let g = e.velocity_grad;
        std::array::from_fn(|c| {
            e.velocity_dt[c] + v[0] * g[c][0] + v[1] * g[c][1] - self.nu * e.velocity_laplacian[c]
                + e.pressure_grad[c]
        })
    }

    /// Dirichlet data: the exact velocity on the interface, zero on the outer boundary.
    pub fn boundary_data(&self, disk: &RigidDisk, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
        const TOL: f64 = 1e-10;
        if disk.signed_distance(x).abs() <= TOL {
            Ok(self.velocity(x, t))
        } else if x[0].abs() <= TOL || x[1].abs() <= TOL || (x[0] - 1.0).abs() <= TOL || (x[1] - 1.0).abs() <= TOL
        {
            Ok([0.0, 0.0])
        } else {
            Err(Error::NotOnBoundary { x: x[0], y: x[1] })
        }
    }

    pub fn initial_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        self.velocity(x, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_at_initial_time() {
        let ex = ExactSolution::new(1.0).unwrap();
        for x in [[0.2, 0.3], [0.7, 0.9]] {
            let e = ex.eval(x, 0.0);
            assert_eq!(e.velocity, [0.0, 0.0]);
            assert_eq!(e.pressure, 0.0);
        }
    }

    #[test]
    fn center_is_stagnation_point() {
        let ex = ExactSolution::new(1.0).unwrap();
        for t in [0.1, 0.5, 1.0] {
            let v = ex.velocity([0.5, 0.5], t);
            assert!(v[0].abs() < 1e-16 && v[1].abs() < 1e-16);
        }
    }

    #[test]
    fn source_at_initial_time_is_time_derivative() {
        let ex = ExactSolution::new(1.0).unwrap();
        let x = [0.3, 0.65];
        let f = ex.source(x, 0.0);
        let dt = ex.eval(x, 0.0).velocity_dt;
        assert!((f[0] - dt[0]).abs() < 1e-15 && (f[1] - dt[1]).abs() < 1e-15);
        assert!(dt[0].abs() > 0.1);
    }

    #[test]
    fn boundary_data_cases() {
        let ex = ExactSolution::new(1.0).unwrap();
        let disk = RigidDisk::default();
        assert_eq!(ex.boundary_data(&disk, [0.0, 0.3], 0.7).unwrap(), [0.0, 0.0]);
        assert_eq!(ex.boundary_data(&disk, [0.6, 0.5], 0.7).unwrap(), ex.velocity([0.6, 0.5], 0.7));
        assert!(ex.boundary_data(&disk, [0.3, 0.3], 0.7).is_err());
        for s in [0.0, 0.13, 0.5, 0.91] {
            for x in [[0.0, s], [1.0, s], [s, 0.0], [s, 1.0]] {
                let v = ex.velocity(x, 0.8);
                assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_viscosity() {
        assert!(ExactSolution::new(0.0).is_err());
    }
}
