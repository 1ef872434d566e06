//! Upwind linear discontinuous Galerkin operators for the slab ordinates system.
//!
//! Each element carries the nodal P1 basis `phi_0 = (x_R - x) / h`,
//! `phi_1 = (x - x_L) / h`. All element integrals are closed form:
//!
//! * mass `M_e = h/6 [[2, 1], [1, 2]]`
//! * streaming for `v > 0`: `v [[1/2, 1/2], [-1/2, 1/2]]` plus the upwind
//!   coupling `-v f_{e-1,R}` in the row of the left node
//! * streaming for `v < 0`: `v [[-1/2, 1/2], [-1/2, -1/2]]` plus the upwind
//!   coupling `+v f_{e+1,L}` in the row of the right node
//!
//! A dof vector for one velocity is element-major (left node, right node);
//! a full state is velocity-major, one such block per ordinate.

use nalgebra::DMatrix;

use super::mesh::Mesh1D;
use super::quadrature::AngularQuadrature;
use crate::error::{check_dim, Result, RomError};

/// Piecewise-constant scattering and absorption cross sections, one value
/// per element (sampled at element midpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSections {
    sigma_s: Vec<f64>,
    sigma_a: Vec<f64>,
}

impl CrossSections {
    pub fn new(sigma_s: Vec<f64>, sigma_a: Vec<f64>) -> Result<Self> {
        check_dim(sigma_s.len(), sigma_a.len())?;
        let ok = |s: &[f64]| s.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !ok(&sigma_s) || !ok(&sigma_a) {
            return Err(RomError::invalid("cross sections must be finite and nonnegative"));
        }
        Ok(CrossSections { sigma_s, sigma_a })
    }

    /// Samples `sigma_s(x)` and `sigma_a(x)` at the element midpoints.
    pub fn sample(
        mesh: &Mesh1D,
        sigma_s: impl Fn(f64) -> f64,
        sigma_a: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let mids: Vec<f64> = (0..mesh.n_elements()).map(|e| mesh.midpoint(e)).collect();
        Self::new(mids.iter().map(|&x| sigma_s(x)).collect(), mids.iter().map(|&x| sigma_a(x)).collect())
    }

    pub fn uniform(n_el: usize, sigma_s: f64, sigma_a: f64) -> Result<Self> {
        Self::new(vec![sigma_s; n_el], vec![sigma_a; n_el])
    }

    pub fn sigma_s(&self) -> &[f64] {
        &self.sigma_s
    }

    pub fn sigma_a(&self) -> &[f64] {
        &self.sigma_a
    }

    pub fn sigma_t(&self, e: usize) -> f64 {
        self.sigma_s[e] + self.sigma_a[e]
    }

    pub fn max_sigma_s(&self) -> f64 {
        self.sigma_s.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_sigma_t(&self) -> f64 {
        (0..self.sigma_s.len()).map(|e| self.sigma_t(e)).fold(0.0, f64::max)
    }
}

/// Boundary treatment of the streaming operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Prescribed incoming values: `left` for `v > 0`, `right` for `v < 0`.
    Inflow { left: f64, right: f64 },
    /// Periodic wrap-around (used only to test consistency of the scheme).
    Periodic,
}

impl Boundary {
    pub fn zero() -> Self {
        Boundary::Inflow { left: 0.0, right: 0.0 }
    }
}

/// Assembled semi-discrete operators:
/// `M d/dt f_j + K_j f_j + sigma_t M f_j = sigma_s M rho + M G + b_j`.
#[derive(Debug, Clone)]
pub struct DgOperators {
    mesh: Mesh1D,
    quad: AngularQuadrature,
    xs: CrossSections,
    h: Vec<f64>,
}

pub fn assemble_dg(mesh: &Mesh1D, quad: &AngularQuadrature, xs: &CrossSections) -> Result<DgOperators> {
    check_dim(mesh.n_elements(), xs.sigma_s().len())?;
    if quad.is_empty() {
        return Err(RomError::invalid("empty angular quadrature"));
    }
    let h = (0..mesh.n_elements())
        .map(|e| {
            let (a, b) = mesh.element(e);
            b - a
        })
        .collect();
    Ok(DgOperators { mesh: mesh.clone(), quad: quad.clone(), xs: xs.clone(), h })
}

/// Local streaming block for velocity `v` (without the upwind neighbour coupling).
pub(crate) fn local_streaming(v: f64) -> [[f64; 2]; 2] {
    if v > 0.0 {
        [[0.5 * v, 0.5 * v], [-0.5 * v, 0.5 * v]]
    } else {
        [[-0.5 * v, 0.5 * v], [-0.5 * v, -0.5 * v]]
    }
}

impl DgOperators {
    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn quadrature(&self) -> &AngularQuadrature {
        &self.quad
    }

    pub fn cross_sections(&self) -> &CrossSections {
        &self.xs
    }

    pub fn n_x(&self) -> usize {
        self.mesh.n_dofs()
    }

    pub fn n_v(&self) -> usize {
        self.quad.len()
    }

    /// Full-order dimension `n_x * n_v`.
    pub fn n_h(&self) -> usize {
        self.n_x() * self.n_v()
    }

    pub(crate) fn element_width(&self, e: usize) -> f64 {
        self.h[e]
    }

    /// Block-diagonal mass matrix for one velocity.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.n_x();
        let mut m = DMatrix::zeros(n, n);
        for e in 0..self.mesh.n_elements() {
            let h = self.h[e];
            let i = 2 * e;
            m[(i, i)] = h / 3.0;
            m[(i + 1, i + 1)] = h / 3.0;
            m[(i, i + 1)] = h / 6.0;
            m[(i + 1, i)] = h / 6.0;
        }
        m
    }

    /// Streaming matrix `K_j` (volume term plus interior upwind fluxes) for
    /// ordinate `j`. Boundary inflow enters through [`Self::inflow_vector`].
    pub fn streaming_matrix(&self, j: usize) -> DMatrix<f64> {
        let n = self.n_x();
        let n_el = self.mesh.n_elements();
        let v = self.quad.nodes()[j];
        let mut k = DMatrix::zeros(n, n);
        let local = local_streaming(v);
        for e in 0..n_el {
            let i = 2 * e;
            for a in 0..2 {
                for b in 0..2 {
                    k[(i + a, i + b)] = local[a][b];
                }
            }
            if v > 0.0 && e > 0 {
                k[(i, i - 1)] = -v;
            } else if v < 0.0 && e + 1 < n_el {
                k[(i + 1, i + 2)] = v;
            }
        }
        k
    }

    /// Boundary injection `b_j` for ordinate `j`.
    pub fn inflow_vector(&self, j: usize, left: f64, right: f64) -> Vec<f64> {
        let n = self.n_x();
        let v = self.quad.nodes()[j];
        let mut b = vec![0.0; n];
        if v > 0.0 {
            b[0] = v * left;
        } else if v < 0.0 {
            b[n - 1] = -v * right;
        }
        b
    }

    /// `rho_i = sum_j w_j f_{j,i}` for a velocity-major state.
    pub fn velocity_average(&self, f: &[f64]) -> Result<Vec<f64>> {
        velocity_average(&self.quad, self.n_x(), f)
    }

    /// Copies a spatial field into every velocity block.
    pub fn broadcast(&self, rho: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_h());
        for _ in 0..self.n_v() {
            out.extend_from_slice(rho);
        }
        out
    }

    /// Mass-weighted element integral `M_e u_e` for a nodal field, returned for
    /// dofs `2e, 2e+1`.
    fn mass_apply(&self, e: usize, u0: f64, u1: f64) -> (f64, f64) {
        let h = self.h[e];
        (h * (2.0 * u0 + u1) / 6.0, h * (u0 + 2.0 * u1) / 6.0)
    }

    /// Explicit semi-discrete right-hand side `d/dt f` for a state `f`,
    /// isotropic nodal source `g` (length `n_x`), and boundary treatment.
    pub fn rhs(&self, f: &[f64], g: &[f64], boundary: Boundary) -> Result<Vec<f64>> {
        let n = self.n_x();
        check_dim(self.n_h(), f.len())?;
        check_dim(n, g.len())?;
        let n_el = self.mesh.n_elements();
        let rho = self.velocity_average(f)?;
        let mut out = vec![0.0; self.n_h()];
        for (j, &v) in self.quad.nodes().iter().enumerate() {
            let fj = &f[j * n..(j + 1) * n];
            let local = local_streaming(v);
            for e in 0..n_el {
                let i = 2 * e;
                let st = self.xs.sigma_t(e);
                let ss = self.xs.sigma_s()[e];
                let (mf0, mf1) = self.mass_apply(e, fj[i], fj[i + 1]);
                let (mr0, mr1) = self.mass_apply(e, rho[i], rho[i + 1]);
                let (mg0, mg1) = self.mass_apply(e, g[i], g[i + 1]);
                let mut r0 = -(local[0][0] * fj[i] + local[0][1] * fj[i + 1]) - st * mf0 + ss * mr0 + mg0;
                let mut r1 = -(local[1][0] * fj[i] + local[1][1] * fj[i + 1]) - st * mf1 + ss * mr1 + mg1;
                if v > 0.0 {
                    let upwind = if e > 0 {
                        fj[i - 1]
                    } else {
                        match boundary {
                            Boundary::Inflow { left, .. } => left,
                            Boundary::Periodic => fj[n - 1],
                        }
                    };
                    r0 += v * upwind;
                } else if v < 0.0 {
                    let upwind = if e + 1 < n_el {
                        fj[i + 2]
                    } else {
                        match boundary {
                            Boundary::Inflow { right, .. } => right,
                            Boundary::Periodic => fj[0],
                        }
                    };
                    r1 -= v * upwind;
                }
                // invert the 2x2 element mass matrix
                let h = self.h[e];
                out[j * n + i] = (4.0 * r0 - 2.0 * r1) / h;
                out[j * n + i + 1] = (-2.0 * r0 + 4.0 * r1) / h;
            }
        }
        Ok(out)
    }
}

pub(crate) fn velocity_average(quad: &AngularQuadrature, n_x: usize, f: &[f64]) -> Result<Vec<f64>> {
    check_dim(n_x * quad.len(), f.len())?;
    let mut rho = vec![0.0; n_x];
    for (j, &w) in quad.weights().iter().enumerate() {
        for (r, &x) in rho.iter_mut().zip(&f[j * n_x..(j + 1) * n_x]) {
            *r += w * x;
        }
    }
    Ok(rho)
}

/// Element-local inverses of `alpha M_e + dt (K_j + sigma_t M_e)` for every
/// (ordinate, element) pair, so one transport sweep is a sequence of 2x2
/// solves ordered along the flow direction.
#[derive(Debug, Clone)]
pub struct TransportSweeper {
    alpha: f64,
    dt: f64,
    n_x: usize,
    velocities: Vec<f64>,
    // [j][e] -> row-major inverse
    inverses: Vec<[f64; 4]>,
}

impl TransportSweeper {
    pub fn new(ops: &DgOperators, alpha: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(alpha > 0.0) {
            return Err(RomError::invalid("sweep needs dt > 0 and alpha > 0"));
        }
        let n_el = ops.mesh.n_elements();
        let mut inverses = Vec::with_capacity(ops.n_v() * n_el);
        for &v in ops.quad.nodes() {
            let local = local_streaming(v);
            for e in 0..n_el {
                let h = ops.h[e];
                let c = alpha + dt * ops.xs.sigma_t(e);
                let a00 = c * h / 3.0 + dt * local[0][0];
                let a01 = c * h / 6.0 + dt * local[0][1];
                let a10 = c * h / 6.0 + dt * local[1][0];
                let a11 = c * h / 3.0 + dt * local[1][1];
                let det = a00 * a11 - a01 * a10;
                if det == 0.0 || !det.is_finite() {
                    return Err(RomError::NumericalFailure {
                        message: format!("singular element block (ordinate {v}, element {e})"),
                        residual: f64::NAN,
                    });
                }
                inverses.push([a11 / det, -a01 / det, -a10 / det, a00 / det]);
            }
        }
        Ok(TransportSweeper { alpha, dt, n_x: ops.n_x(), velocities: ops.quad.nodes().to_vec(), inverses })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Solves `(alpha M + dt (K_j + sigma_t M)) u = rhs` for ordinate `j`,
    /// where `rhs` already contains any boundary injection. Elements are
    /// visited left to right for `v > 0` and right to left for `v < 0`.
    pub fn sweep(&self, j: usize, rhs: &[f64], out: &mut [f64]) {
        let n_el = self.n_x / 2;
        let v = self.velocities[j];
        let inv = &self.inverses[j * n_el..(j + 1) * n_el];
        if v > 0.0 {
            let mut upwind = 0.0;
            for (e, m) in inv.iter().enumerate() {
                let i = 2 * e;
                let r0 = rhs[i] + self.dt * v * upwind;
                let r1 = rhs[i + 1];
                out[i] = m[0] * r0 + m[1] * r1;
                out[i + 1] = m[2] * r0 + m[3] * r1;
                upwind = out[i + 1];
            }
        } else {
            let mut upwind = 0.0;
            for (e, m) in inv.iter().enumerate().rev() {
                let i = 2 * e;
                let r0 = rhs[i];
                let r1 = rhs[i + 1] - self.dt * v * upwind;
                out[i] = m[0] * r0 + m[1] * r1;
                out[i + 1] = m[2] * r0 + m[3] * r1;
                upwind = out[i];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_mesh, gauss_legendre};

    fn ops(n_el: usize, n_v: usize, ss: f64, sa: f64) -> DgOperators {
        let mesh = build_mesh(0.0, 1.0, n_el).unwrap();
        let quad = gauss_legendre(n_v).unwrap();
        let xs = CrossSections::uniform(n_el, ss, sa).unwrap();
        assemble_dg(&mesh, &quad, &xs).unwrap()
    }

    #[test]
    fn constants_are_stationary_under_periodic_streaming() {
        let op = ops(7, 4, 0.0, 0.0);
        let f = vec![2.5; op.n_h()];
        let g = vec![0.0; op.n_x()];
        let d = op.rhs(&f, &g, Boundary::Periodic).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn pure_absorption_rhs_is_minus_f() {
        let op = ops(5, 4, 0.0, 1.0);
        let c = 1.75;
        let f = vec![c; op.n_h()];
        let g = vec![0.0; op.n_x()];
        let d = op.rhs(&f, &g, Boundary::Inflow { left: c, right: c }).unwrap();
        for (x, y) in d.iter().zip(&f) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn streaming_is_block_triangular_along_the_flow() {
        let op = ops(6, 4, 1.0, 0.5);
        for j in 0..op.n_v() {
            let k = op.streaming_matrix(j);
            let v = op.quadrature().nodes()[j];
            for r in 0..op.n_x() {
                for c in 0..op.n_x() {
                    if k[(r, c)] != 0.0 {
                        let (er, ec) = (r / 2, c / 2);
                        if v > 0.0 {
                            assert!(ec <= er);
                        } else {
                            assert!(ec >= er);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn velocity_average_of_constant_state() {
        let op = ops(3, 6, 0.0, 0.0);
        let rho: Vec<f64> = (0..op.n_x()).map(|i| i as f64 * 0.3 - 1.0).collect();
        let back = op.velocity_average(&op.broadcast(&rho)).unwrap();
        for (a, b) in back.iter().zip(&rho) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(op.velocity_average(&[1.0; 3]).is_err());
    }

    #[test]
    fn sweep_matches_dense_solve() {
        let op = ops(9, 4, 0.7, 0.2);
        let dt = 0.05;
        let alpha = 1.5;
        let sw = TransportSweeper::new(&op, alpha, dt).unwrap();
        let m = op.mass_matrix();
        for j in 0..op.n_v() {
            let a = op.streaming_matrix(j) * dt + &m * (alpha + dt * 0.9);
            let rhs: Vec<f64> = (0..op.n_x()).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut out = vec![0.0; op.n_x()];
            sw.sweep(j, &rhs, &mut out);
            let x = a.lu().solve(&nalgebra::DVector::from_vec(rhs.clone())).unwrap();
            for (p, q) in out.iter().zip(x.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
