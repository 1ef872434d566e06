//! Implicit full-order solver: upwind DG in space, backward Euler or BDF2 in
//! time, with the scattering coupling resolved by source iteration.

use serde::{Deserialize, Serialize};

use crate::discretization::{velocity_average, AngularQuadrature, Boundary, DgOperators, TransportSweeper};
use crate::error::{check_dim, Result, RomError};
use crate::problem::ProblemSpec;

/// Full-order dof vector (velocity-major blocks of nodal values) at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FomState {
    pub f: Vec<f64>,
    pub t: f64,
}

impl FomState {
    pub fn new(f: Vec<f64>, t: f64) -> Self {
        FomState { f, t }
    }

    pub fn zeros(n_h: usize) -> Self {
        FomState { f: vec![0.0; n_h], t: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeIntegrator {
    #[default]
    BackwardEuler,
    Bdf2,
}

/// Stopping rule for the source iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceIteration {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SourceIteration {
    fn default() -> Self {
        SourceIteration { tol: 1e-12, max_iter: 500 }
    }
}

/// Result of one implicit solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// `rho_i = sum_j w_j f_{j,i}`.
pub fn compute_rho(state: &FomState, quad: &AngularQuadrature) -> Result<Vec<f64>> {
    if quad.is_empty() || !state.f.len().is_multiple_of(quad.len()) {
        return Err(RomError::DimensionMismatch { expected: quad.len(), got: state.f.len() });
    }
    velocity_average(quad, state.f.len() / quad.len(), &state.f)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `(alpha M + dt (K + sigma_t M)) f = base + dt sigma_s M rho(f)` for
/// every ordinate, where `base` already holds the mass-weighted history,
/// source and boundary terms. `rho_guess` seeds the iteration.
pub(crate) fn solve_implicit(
    ops: &DgOperators,
    sweeper: &TransportSweeper,
    base: &[f64],
    rho_guess: &[f64],
    si: SourceIteration,
) -> Result<(Vec<f64>, SolveStats)> {
    let n_x = ops.n_x();
    let n_v = ops.n_v();
    let n_el = ops.mesh().n_elements();
    let dt = sweeper.dt();
    let xs = ops.cross_sections();
    let scattering = xs.max_sigma_s() > 0.0;
    let mut rho = rho_guess.to_vec();
    let mut f = vec![0.0; n_x * n_v];
    let mut rhs = vec![0.0; n_x];
    // dt * sigma_s * M rho, recomputed each iteration
    let mut scat = vec![0.0; n_x];
    let mut residual = f64::INFINITY;
    for it in 1..=si.max_iter {
        if scattering {
            for e in 0..n_el {
                let s = dt * xs.sigma_s()[e] * ops.element_width(e) / 6.0;
                let (r0, r1) = (rho[2 * e], rho[2 * e + 1]);
                scat[2 * e] = s * (2.0 * r0 + r1);
                scat[2 * e + 1] = s * (r0 + 2.0 * r1);
            }
        }
        for j in 0..n_v {
            let b = &base[j * n_x..(j + 1) * n_x];
            for i in 0..n_x {
                rhs[i] = b[i] + scat[i];
            }
            sweeper.sweep(j, &rhs, &mut f[j * n_x..(j + 1) * n_x]);
        }
        if !scattering {
            return Ok((f, SolveStats { iterations: it, residual: 0.0 }));
        }
        let rho_new = velocity_average(ops.quadrature(), n_x, &f)?;
        let diff: f64 = rho_new.iter().zip(&rho).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale = norm(&rho_new);
        residual = if scale > 0.0 { diff / scale } else { diff };
        rho = rho_new;
        if !residual.is_finite() {
            break;
        }
        if residual <= si.tol {
            return Ok((f, SolveStats { iterations: it, residual }));
        }
    }
    Err(RomError::NumericalFailure {
        message: format!("source iteration did not converge in {} iterations", si.max_iter),
        residual,
    })
}

/// Mass-weighted combination `M sum_k c_k u_k` applied blockwise.
fn mass_combination(ops: &DgOperators, terms: &[(f64, &[f64])], out: &mut [f64]) {
    let n_x = ops.n_x();
    let n_el = ops.mesh().n_elements();
    let n_v = out.len() / n_x;
    for j in 0..n_v {
        for e in 0..n_el {
            let h = ops.element_width(e);
            let i = j * n_x + 2 * e;
            let (mut u0, mut u1) = (0.0, 0.0);
            for (c, u) in terms {
                u0 += c * u[i];
                u1 += c * u[i + 1];
            }
            out[i] = h * (2.0 * u0 + u1) / 6.0;
            out[i + 1] = h * (u0 + 2.0 * u1) / 6.0;
        }
    }
}

fn add_boundary(ops: &DgOperators, boundary: Boundary, dt: f64, base: &mut [f64]) -> Result<()> {
    let (left, right) = match boundary {
        Boundary::Inflow { left, right } => (left, right),
        Boundary::Periodic => return Err(RomError::invalid("implicit solver supports inflow boundaries only")),
    };
    let n_x = ops.n_x();
    for (j, &v) in ops.quadrature().nodes().iter().enumerate() {
        if v > 0.0 {
            base[j * n_x] += dt * v * left;
        } else if v < 0.0 {
            base[j * n_x + n_x - 1] -= dt * v * right;
        }
    }
    Ok(())
}

/// Right-hand side `M (sum c_k u_k + dt G) + dt b`.
fn implicit_base(
    ops: &DgOperators,
    history: &[(f64, &[f64])],
    source: &[f64],
    boundary: Boundary,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut terms = history.to_vec();
    terms.push((dt, source));
    let mut base = vec![0.0; ops.n_h()];
    mass_combination(ops, &terms, &mut base);
    add_boundary(ops, boundary, dt, &mut base)?;
    Ok(base)
}

/// One backward Euler step: `(I + dt L) f^{n+1} = f^n + dt (G + inflow)`.
///
/// `source` is the isotropic source sampled per ordinate (length `n_h`).
pub fn step_backward_euler(
    state: &FomState,
    ops: &DgOperators,
    source: &[f64],
    boundary: Boundary,
    dt: f64,
) -> Result<FomState> {
    check_dim(ops.n_h(), state.f.len())?;
    check_dim(ops.n_h(), source.len())?;
    let sweeper = TransportSweeper::new(ops, 1.0, dt)?;
    let base = implicit_base(ops, &[(1.0, &state.f)], source, boundary, dt)?;
    let guess = ops.velocity_average(&state.f)?;
    let (f, _) = solve_implicit(ops, &sweeper, &base, &guess, SourceIteration::default())?;
    Ok(FomState { f, t: state.t + dt })
}

/// One BDF2 step: `(3/2 I + dt L) f^{n+1} = 2 f^n - 1/2 f^{n-1} + dt (G + inflow)`.
pub fn step_bdf2(
    state_n: &FomState,
    state_nm1: &FomState,
    ops: &DgOperators,
    source: &[f64],
    boundary: Boundary,
    dt: f64,
) -> Result<FomState> {
    check_dim(ops.n_h(), state_n.f.len())?;
    check_dim(ops.n_h(), state_nm1.f.len())?;
    check_dim(ops.n_h(), source.len())?;
    let sweeper = TransportSweeper::new(ops, 1.5, dt)?;
    let base = implicit_base(ops, &[(2.0, &state_n.f), (-0.5, &state_nm1.f)], source, boundary, dt)?;
    let guess = ops.velocity_average(&state_n.f)?;
    let (f, _) = solve_implicit(ops, &sweeper, &base, &guess, SourceIteration::default())?;
    Ok(FomState { f, t: state_n.t + dt })
}

/// Time-marching driver for one parameter value.
pub struct FomSolver {
    ops: DgOperators,
    source: Vec<f64>,
    boundary: Boundary,
    dt: f64,
    n_steps: usize,
    initial: Vec<f64>,
    integrator: TimeIntegrator,
    si: SourceIteration,
}

impl FomSolver {
    pub fn new(spec: &ProblemSpec, mu: &[f64], integrator: TimeIntegrator) -> Result<Self> {
        spec.validate()?;
        if mu.len() != spec.params.dim() {
            return Err(RomError::DimensionMismatch { expected: spec.params.dim(), got: mu.len() });
        }
        Ok(FomSolver {
            ops: spec.operators(mu)?,
            source: spec.source_vector(mu)?,
            boundary: spec.boundary(mu)?,
            dt: spec.dt,
            n_steps: spec.n_steps(),
            initial: spec.initial_vector(mu)?,
            integrator,
            si: SourceIteration::default(),
        })
    }

    pub fn with_source_iteration(mut self, si: SourceIteration) -> Self {
        self.si = si;
        self
    }

    pub fn operators(&self) -> &DgOperators {
        &self.ops
    }

    /// Marches from `t = 0` up to the last requested step, calling `visit`
    /// with each state whose step index is in `steps` (which must be sorted).
    pub fn march(&self, steps: &[usize], mut visit: impl FnMut(usize, &FomState) -> Result<()>) -> Result<()> {
        let Some(&last) = steps.last() else { return Ok(()) };
        if last > self.n_steps {
            return Err(RomError::invalid(format!("step {last} beyond final step {}", self.n_steps)));
        }
        let be = TransportSweeper::new(&self.ops, 1.0, self.dt)?;
        let bdf = match self.integrator {
            TimeIntegrator::Bdf2 => Some(TransportSweeper::new(&self.ops, 1.5, self.dt)?),
            TimeIntegrator::BackwardEuler => None,
        };
        let mut cursor = 0;
        let mut prev: Option<FomState> = None;
        let mut cur = FomState { f: self.initial.clone(), t: 0.0 };
        let mut rho_prev: Option<Vec<f64>> = None;
        let mut rho_cur = self.ops.velocity_average(&cur.f)?;
        while cursor < steps.len() && steps[cursor] == 0 {
            visit(0, &cur)?;
            cursor += 1;
        }
        for step in 1..=last {
            // linear extrapolation of the scalar flux as the initial iterate
            let guess: Vec<f64> = match &rho_prev {
                Some(rp) => rho_cur.iter().zip(rp).map(|(a, b)| 2.0 * a - b).collect(),
                None => rho_cur.clone(),
            };
            let (f, _) = match (&bdf, &prev) {
                (Some(sw), Some(p)) => {
                    let base =
                        implicit_base(&self.ops, &[(2.0, &cur.f), (-0.5, &p.f)], &self.source, self.boundary, self.dt)?;
                    solve_implicit(&self.ops, sw, &base, &guess, self.si)
                }
                _ => {
                    let base = implicit_base(&self.ops, &[(1.0, &cur.f)], &self.source, self.boundary, self.dt)?;
                    solve_implicit(&self.ops, &be, &base, &guess, self.si)
                }
            }
            .map_err(|e| e.context(format!("time step {step}")))?;
            let next = FomState { f, t: step as f64 * self.dt };
            rho_prev = Some(std::mem::replace(&mut rho_cur, self.ops.velocity_average(&next.f)?));
            prev = Some(std::mem::replace(&mut cur, next));
            while cursor < steps.len() && steps[cursor] == step {
                visit(step, &cur)?;
                cursor += 1;
            }
        }
        Ok(())
    }
}

/// Solves one parameter value and returns the states at `sample_times`, in
/// the order requested.
pub fn run(spec: &ProblemSpec, mu: &[f64], sample_times: &[f64]) -> Result<Vec<FomState>> {
    run_with(spec, mu, sample_times, TimeIntegrator::BackwardEuler)
}

pub fn run_with(
    spec: &ProblemSpec,
    mu: &[f64],
    sample_times: &[f64],
    integrator: TimeIntegrator,
) -> Result<Vec<FomState>> {
    let steps: Vec<usize> = sample_times.iter().map(|&t| spec.step_of(t)).collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let sorted: Vec<usize> = order.iter().map(|&i| steps[i]).collect();
    let solver = FomSolver::new(spec, mu, integrator)?;
    let mut out: Vec<Option<FomState>> = vec![None; steps.len()];
    let mut k = 0;
    solver.march(&sorted, |_, s| {
        out[order[k]] = Some(s.clone());
        k += 1;
        Ok(())
    })?;
    Ok(out.into_iter().map(|s| s.expect("every requested step visited")).collect())
}
