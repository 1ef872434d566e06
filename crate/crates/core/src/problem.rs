//! Declarative description of one parametric slab transport problem, plus
//! the two built-in benchmark configurations.

use serde::{Deserialize, Serialize};

use crate::discretization::{
    assemble_dg, build_mesh, gauss_legendre, AngularQuadrature, Boundary, CrossSections, DgOperators, Mesh1D,
};
use crate::error::{Result, RomError};

/// A scalar that is either fixed or an affine function of one parameter
/// component: `offset + scale * mu[index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamExpr {
    Const(f64),
    Affine {
        mu: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ParamExpr {
    pub fn mu(index: usize) -> Self {
        ParamExpr::Affine { mu: index, scale: 1.0, offset: 0.0 }
    }

    pub fn eval(&self, mu: &[f64]) -> Result<f64> {
        match *self {
            ParamExpr::Const(c) => Ok(c),
            ParamExpr::Affine { mu: i, scale, offset } => mu
                .get(i)
                .map(|m| offset + scale * m)
                .ok_or_else(|| RomError::invalid(format!("parameter component {i} missing (dimension {})", mu.len()))),
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            ParamExpr::Const(_) => None,
            ParamExpr::Affine { mu, .. } => Some(*mu),
        }
    }
}

/// Closed region `[from, to]` carrying a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub from: f64,
    pub to: f64,
    pub value: ParamExpr,
}

/// A spatial profile. Piecewise regions are searched in order; the first
/// region containing `x` wins and points outside every region evaluate to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: ParamExpr },
    Piecewise { regions: Vec<Region> },
    Gaussian { amplitude: f64, center: f64, variance: f64 },
}

impl Profile {
    pub fn zero() -> Self {
        Profile::Constant { value: ParamExpr::Const(0.0) }
    }

    pub fn constant(c: f64) -> Self {
        Profile::Constant { value: ParamExpr::Const(c) }
    }

    pub fn eval(&self, x: f64, mu: &[f64]) -> Result<f64> {
        match self {
            Profile::Constant { value } => value.eval(mu),
            Profile::Piecewise { regions } => {
                for r in regions {
                    if x >= r.from && x <= r.to {
                        return r.value.eval(mu);
                    }
                }
                Ok(0.0)
            }
            Profile::Gaussian { amplitude, center, variance } => {
                Ok(amplitude * (-(x - center) * (x - center) / variance).exp())
            }
        }
    }

    fn max_index(&self) -> Option<usize> {
        match self {
            Profile::Constant { value } => value.max_index(),
            Profile::Piecewise { regions } => regions.iter().filter_map(|r| r.value.max_index()).max(),
            Profile::Gaussian { .. } => None,
        }
    }
}

/// Box-shaped parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub ranges: Vec<[f64; 2]>,
}

impl ParamSpace {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim() && mu.iter().zip(&self.ranges).all(|(m, r)| *m >= r[0] && *m <= r[1])
    }
}

/// Full description of one parametric transport problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: [f64; 2],
    pub n_elements: usize,
    pub n_velocities: usize,
    pub sigma_s: Profile,
    pub sigma_a: Profile,
    /// Isotropic source `G(x)` per unit time.
    pub source: Profile,
    /// Incoming value at the left boundary (ordinates with `v > 0`).
    pub inflow_left: ParamExpr,
    /// Incoming value at the right boundary (ordinates with `v < 0`).
    pub inflow_right: ParamExpr,
    /// Isotropic initial distribution `f_0(x)`.
    pub initial: Profile,
    pub t_final: f64,
    pub dt: f64,
    pub params: ParamSpace,
}

const GRID_TOL: f64 = 1e-9;

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.domain[1] > self.domain[0]) {
            errs.push(format!("domain [{}, {}] is empty", self.domain[0], self.domain[1]));
        }
        if self.n_elements == 0 {
            errs.push("n_elements must be positive".into());
        }
        if self.n_velocities == 0 {
            errs.push("n_velocities must be positive".into());
        }
        if !(self.t_final > 0.0) {
            errs.push("t_final must be positive".into());
        }
        if !(self.dt > 0.0) {
            errs.push("dt must be positive".into());
        }
        if self.t_final > 0.0 && self.dt > 0.0 {
            let ratio = self.t_final / self.dt;
            if (ratio - ratio.round()).abs() > GRID_TOL * ratio.max(1.0) || ratio.round() < 1.0 {
                errs.push(format!("t_final / dt = {ratio} is not a positive integer"));
            }
        }
        let dim = self.params.dim();
        for (what, idx) in [
            ("sigma_s", self.sigma_s.max_index()),
            ("sigma_a", self.sigma_a.max_index()),
            ("source", self.source.max_index()),
            ("inflow_left", self.inflow_left.max_index()),
            ("inflow_right", self.inflow_right.max_index()),
            ("initial", self.initial.max_index()),
        ] {
            if let Some(i) = idx {
                if i >= dim {
                    errs.push(format!("{what} uses parameter component {i} but the parameter space has dimension {dim}"));
                }
            }
        }
        for r in &self.params.ranges {
            if !(r[1] >= r[0]) {
                errs.push(format!("parameter range [{}, {}] is inverted", r[0], r[1]));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(RomError::Config(errs))
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Time of grid step `k`.
    pub fn time_of(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Grid step index of time `t`; errors if `t` is not on `{k dt}` within `[0, T]`.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        let k = t / self.dt;
        let kr = k.round();
        if !(t >= -GRID_TOL * self.dt) || (k - kr).abs() > GRID_TOL * k.abs().max(1.0) || kr as usize > self.n_steps() {
            return Err(RomError::invalid(format!("time {t} is not on the time grid (dt = {}, T = {})", self.dt, self.t_final)));
        }
        Ok(kr as usize)
    }

    pub fn mesh(&self) -> Result<Mesh1D> {
        build_mesh(self.domain[0], self.domain[1], self.n_elements)
    }

    pub fn quadrature(&self) -> Result<AngularQuadrature> {
        gauss_legendre(self.n_velocities)
    }

    pub fn n_x(&self) -> usize {
        2 * self.n_elements
    }

    pub fn n_h(&self) -> usize {
        self.n_x() * self.n_velocities
    }

    pub fn cross_sections(&self, mu: &[f64]) -> Result<CrossSections> {
        let mesh = self.mesh()?;
        let mut ss = Vec::with_capacity(self.n_elements);
        let mut sa = Vec::with_capacity(self.n_elements);
        for e in 0..self.n_elements {
            let x = mesh.midpoint(e);
            ss.push(self.sigma_s.eval(x, mu)?);
            sa.push(self.sigma_a.eval(x, mu)?);
        }
        CrossSections::new(ss, sa)
    }

    pub fn operators(&self, mu: &[f64]) -> Result<DgOperators> {
        assemble_dg(&self.mesh()?, &self.quadrature()?, &self.cross_sections(mu)?)
    }

    /// Nodal interpolant of a profile.
    pub fn nodal(&self, profile: &Profile, mu: &[f64]) -> Result<Vec<f64>> {
        self.mesh()?.node_coordinates().into_iter().map(|x| profile.eval(x, mu)).collect()
    }

    /// Source replicated over ordinates (length `n_h`).
    pub fn source_vector(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let g = self.nodal(&self.source, mu)?;
        Ok(g.iter().cycle().take(self.n_h()).cloned().collect())
    }

    pub fn initial_vector(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let f0 = self.nodal(&self.initial, mu)?;
        Ok(f0.iter().cycle().take(self.n_h()).cloned().collect())
    }

    pub fn boundary(&self, mu: &[f64]) -> Result<Boundary> {
        let left = self.inflow_left.eval(mu)?;
        let right = self.inflow_right.eval(mu)?;
        if !left.is_finite() || !right.is_finite() {
            return Err(RomError::invalid("inflow values must be finite"));
        }
        Ok(Boundary::Inflow { left, right })
    }

    /// Two-material slab: free streaming on `[0, 1]`, `sigma_s = 100` on
    /// `(1, 1.1]`, inflow `mu` from the left, zero initial data.
    pub fn example1() -> Self {
        ProblemSpec {
            name: "example1".into(),
            domain: [0.0, 1.1],
            n_elements: 88,
            n_velocities: 16,
            sigma_s: Profile::Piecewise {
                regions: vec![
                    Region { from: 0.0, to: 1.0, value: ParamExpr::Const(0.0) },
                    Region { from: 1.0, to: 1.1, value: ParamExpr::Const(100.0) },
                ],
            },
            sigma_a: Profile::zero(),
            source: Profile::zero(),
            inflow_left: ParamExpr::mu(0),
            inflow_right: ParamExpr::Const(0.0),
            initial: Profile::zero(),
            t_final: 25.0,
            dt: 1.0 / 80.0,
            params: ParamSpace { ranges: vec![[4.0, 6.0]] },
        }
    }

    /// Three-material slab on `[0, 2]` with a parametric scattering layer on
    /// the right and a narrow Gaussian pulse as initial data.
    pub fn example2() -> Self {
        ProblemSpec {
            name: "example2".into(),
            domain: [0.0, 2.0],
            n_elements: 128,
            n_velocities: 16,
            sigma_s: Profile::Piecewise {
                regions: vec![
                    Region { from: 0.7, to: 1.3, value: ParamExpr::Const(0.0) },
                    Region { from: 1.3, to: 2.0, value: ParamExpr::mu(0) },
                    Region { from: 0.0, to: 0.7, value: ParamExpr::Const(5.0) },
                ],
            },
            sigma_a: Profile::zero(),
            // |x + 1| <= 0.5 lies outside the domain, so the source vanishes on the mesh.
            source: Profile::Piecewise {
                regions: vec![Region { from: -1.5, to: -0.5, value: ParamExpr::Const(1.0) }],
            },
            inflow_left: ParamExpr::Const(0.0),
            inflow_right: ParamExpr::Const(0.0),
            initial: Profile::Gaussian { amplitude: 1e3, center: 1.0, variance: 1e-6 },
            t_final: 20.0,
            dt: 0.01,
            params: ParamSpace { ranges: vec![[75.0, 150.0]] },
        }
    }
}

/// Training parameters `mu_j = 4 + 0.2 j`, `j = 0..=10`.
pub fn example1_training_params() -> Vec<Vec<f64>> {
    (0..=10).map(|j| vec![4.0 + 0.2 * j as f64]).collect()
}

/// Every time step of `(0, 25]`.
pub fn example1_sample_times() -> Vec<f64> {
    let spec = ProblemSpec::example1();
    (1..=spec.n_steps()).map(|k| spec.time_of(k)).collect()
}

/// Training parameters `80, 81, ..., 143`.
pub fn example2_training_params() -> Vec<Vec<f64>> {
    (80..=143).map(|m| vec![m as f64]).collect()
}

/// 200 sampling times spread uniformly over `[0.01, 20]`, each snapped to
/// the nearest step of the `dt = 0.01` grid.
pub fn example2_sample_times() -> Vec<f64> {
    let spec = ProblemSpec::example2();
    let (a, b, n) = (0.01, 20.0, 200);
    (0..n)
        .map(|i| {
            let t = a + (b - a) * i as f64 / (n - 1) as f64;
            spec.time_of((t / spec.dt).round() as usize)
        })
        .collect()
}
