//! Online stage: interpolate stored latent coordinates at a new parameter,
//! reconstruct the full-order state and score it against a reference.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bundle::RomBundle;
use crate::discretization::gauss_legendre;
use crate::error::{check_dim, Result, RomError};
use crate::fom::{compute_rho, FomState};

/// Largest kernel-matrix condition number accepted by the RBF interpolator.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationKind {
    /// Natural cubic spline for scalar parameters, quintic RBF otherwise.
    #[default]
    Auto,
    Spline,
    Rbf,
}

/// Interpolation weights over the training parameters (in their stored
/// order): the interpolant at `mu` is `sum_p w_p c_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w: Vec<f64>,
    pub out_of_hull: bool,
}

#[derive(Debug, Clone)]
enum Scheme {
    /// Piecewise linear over sorted knots.
    Linear,
    /// Natural cubic spline; `g` maps knot values to second derivatives.
    Cubic { g: DMatrix<f64> },
    Rbf { lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, condition: f64 },
}

/// Linear-in-data interpolator over a fixed set of training parameters.
#[derive(Debug, Clone)]
pub struct Interpolator {
    params: Vec<Vec<f64>>,
    /// Sorted scalar knots and their positions in `params` (1D schemes).
    knots: Vec<f64>,
    order: Vec<usize>,
    scheme: Scheme,
}

fn quintic(s: f64) -> f64 {
    s.powi(5)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Interpolator {
    pub fn new(params: &[Vec<f64>], kind: InterpolationKind) -> Result<Self> {
        let d = params.first().map_or(0, Vec::len);
        if params.iter().any(|p| p.len() != d) || d == 0 {
            return Err(RomError::invalid("training parameters must share a positive dimension"));
        }
        match kind {
            InterpolationKind::Rbf => Self::rbf(params),
            InterpolationKind::Spline => Self::spline(params),
            InterpolationKind::Auto if d == 1 => Self::spline(params),
            InterpolationKind::Auto => Self::rbf(params),
        }
    }

    /// Natural cubic spline for at least four knots, linear for two or three.
    pub fn spline(params: &[Vec<f64>]) -> Result<Self> {
        let n = params.len();
        if n < 2 {
            return Err(RomError::InsufficientData { needed: 2, got: n });
        }
        if params.iter().any(|p| p.len() != 1) {
            return Err(RomError::invalid("spline interpolation needs scalar parameters"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| params[i][0].total_cmp(&params[j][0]));
        let knots: Vec<f64> = order.iter().map(|&i| params[i][0]).collect();
        if knots.windows(2).any(|w| w[1] <= w[0]) || knots.iter().any(|x| !x.is_finite()) {
            return Err(RomError::invalid("training parameters must be finite and distinct"));
        }
        let scheme = if n < 4 { Scheme::Linear } else { Scheme::Cubic { g: natural_moments(&knots) } };
        Ok(Interpolator { params: params.to_vec(), knots, order, scheme })
    }

    /// Quintic radial basis functions without polynomial augmentation.
    pub fn rbf(params: &[Vec<f64>]) -> Result<Self> {
        let n = params.len();
        if n < 2 {
            return Err(RomError::InsufficientData { needed: 2, got: n });
        }
        let k = DMatrix::from_fn(n, n, |i, j| quintic(dist(&params[i], &params[j])));
        let sv = k.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(RomError::Conditioning { condition });
        }
        Ok(Interpolator { params: params.to_vec(), knots: Vec::new(), order: Vec::new(), scheme: Scheme::Rbf { lu: k.lu(), condition } })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn name(&self) -> &'static str {
        match self.scheme {
            Scheme::Linear => "linear",
            Scheme::Cubic { .. } => "natural-cubic-spline",
            Scheme::Rbf { .. } => "quintic-rbf",
        }
    }

    /// Estimated kernel condition number (RBF only).
    pub fn condition(&self) -> Option<f64> {
        match self.scheme {
            Scheme::Rbf { condition, .. } => Some(condition),
            _ => None,
        }
    }

    pub fn weights(&self, mu: &[f64]) -> Result<Weights> {
        check_dim(self.params[0].len(), mu.len())?;
        let n = self.params.len();
        let mut w = vec![0.0; n];
        match &self.scheme {
            Scheme::Rbf { lu, .. } => {
                let phi = DVector::from_fn(n, |i, _| quintic(dist(&self.params[i], mu)));
                // the kernel matrix is symmetric, so K^-T phi = K^-1 phi
                let a = lu.solve(&phi).ok_or(RomError::Conditioning { condition: f64::INFINITY })?;
                w.copy_from_slice(a.as_slice());
                let out = (0..mu.len()).any(|d| {
                    let lo = self.params.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
                    let hi = self.params.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
                    mu[d] < lo || mu[d] > hi
                });
                Ok(Weights { w, out_of_hull: out })
            }
            scheme => {
                let x = mu[0];
                let xs = &self.knots;
                let out = x < xs[0] || x > xs[n - 1];
                // segment k spans [xs[k], xs[k+1]]; the end segments extend outward
                let k = xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
                let h = xs[k + 1] - xs[k];
                let (l, r) = (xs[k + 1] - x, x - xs[k]);
                let mut sorted = vec![0.0; n];
                sorted[k] = l / h;
                sorted[k + 1] = r / h;
                if let Scheme::Cubic { g } = scheme {
                    let c = (l * l * l / h - h * l) / 6.0;
                    let d = (r * r * r / h - h * r) / 6.0;
                    for (j, s) in sorted.iter_mut().enumerate() {
                        *s += c * g[(k, j)] + d * g[(k + 1, j)];
                    }
                }
                for (s, &p) in sorted.iter().zip(&self.order) {
                    w[p] = *s;
                }
                Ok(Weights { w, out_of_hull: out })
            }
        }
    }

    /// Interpolates every row of `values` (`components x n_params`).
    pub fn interpolate(&self, values: &DMatrix<f64>, mu: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.params.len(), values.ncols())?;
        let w = self.weights(mu)?;
        Ok((values * DVector::from_vec(w.w)).as_slice().to_vec())
    }
}

/// Matrix taking knot values to the second derivatives of the natural
/// cubic spline through them (zero at both ends).
fn natural_moments(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let m = n - 2;
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut a = DMatrix::zeros(m, m);
    let mut b = DMatrix::zeros(m, n);
    for i in 0..m {
        a[(i, i)] = 2.0 * (h[i] + h[i + 1]);
        if i > 0 {
            a[(i, i - 1)] = h[i];
        }
        if i + 1 < m {
            a[(i, i + 1)] = h[i + 1];
        }
        b[(i, i)] = 6.0 / h[i];
        b[(i, i + 1)] = -6.0 / h[i] - 6.0 / h[i + 1];
        b[(i, i + 2)] = 6.0 / h[i + 1];
    }
    let inner = a.lu().solve(&b).expect("diagonally dominant");
    let mut g = DMatrix::zeros(n, n);
    g.rows_mut(1, m).copy_from(&inner);
    g
}

/// One online prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub f: Vec<f64>,
    pub interval: usize,
    pub latent_dim: usize,
    pub out_of_hull: bool,
    /// Interpolation plus reconstruction time.
    pub online: Duration,
}

/// Reusable online evaluator for one bundle.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    bundle: &'a RomBundle,
    interp: Interpolator,
    quad: crate::discretization::AngularQuadrature,
}

impl<'a> Predictor<'a> {
    pub fn new(bundle: &'a RomBundle, kind: InterpolationKind) -> Result<Self> {
        Ok(Predictor { bundle, interp: Interpolator::new(&bundle.params, kind)?, quad: gauss_legendre(bundle.n_v)? })
    }

    pub fn interpolator(&self) -> &Interpolator {
        &self.interp
    }

    /// Index of `t` in the training times; anything off the grid is rejected.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        let times = &self.bundle.times;
        let tol = 1e-9 * times.last().map_or(1.0, |v| v.abs().max(1.0));
        let i = times.partition_point(|&s| s < t - tol);
        if i < times.len() && (times[i] - t).abs() <= tol {
            Ok(i)
        } else {
            Err(RomError::invalid(format!("t = {t} is not a training sample time")))
        }
    }

    pub fn predict(&self, t: f64, mu: &[f64]) -> Result<Prediction> {
        let i = self.time_index(t)?;
        let start = Instant::now();
        let b = self.bundle;
        let j = b.partition.locate_sample(i).ok_or_else(|| RomError::invalid(format!("t = {t} outside the partition")))?;
        let iv = b.partition.intervals()[j];
        let model = &b.intervals[j];
        let w = self.interp.weights(mu)?;
        let r = model.coords.nrows();
        let nt = iv.n_samples();
        let local = i - iv.start;
        let mut z = vec![0.0; r];
        for (p, &wp) in w.w.iter().enumerate() {
            let col = model.coords.column(p * nt + local);
            z.iter_mut().zip(col.iter()).for_each(|(zi, c)| *zi += wp * c);
        }
        let f = model.map.reconstruct(&z, local, &b.mean)?;
        let online = start.elapsed();
        Ok(Prediction { f, interval: j, latent_dim: r, out_of_hull: w.out_of_hull, online })
    }

    pub fn density(&self, f: &[f64]) -> Result<Vec<f64>> {
        compute_rho(&FomState::new(f.to_vec(), 0.0), &self.quad)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||reference - approx|| / ||reference||`, `None` for a zero reference.
pub fn relative_error(reference: &[f64], approx: &[f64]) -> Option<f64> {
    let den = norm(reference);
    if den == 0.0 {
        return None;
    }
    let num: f64 = reference.iter().zip(approx).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Some(num / den)
}

/// A test point with its full-order reference state.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub t: f64,
    pub mu: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub t: f64,
    pub mu: Vec<f64>,
    /// `None` when the reference is zero and the case was skipped.
    pub e_f: Option<f64>,
    pub e_rho: Option<f64>,
    pub interval: usize,
    pub latent_dim: usize,
    pub online_us: f64,
    pub out_of_hull: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub interval: usize,
    pub a: f64,
    pub b: f64,
    pub map: String,
    pub latent_dim: usize,
    pub n_cases: usize,
    pub online_total_s: f64,
    pub online_mean_us: f64,
    /// Mean errors of the scored cases in this interval (0 when none).
    pub e_f: f64,
    pub e_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub method: String,
    pub interpolator: String,
    pub rows: Vec<CaseRow>,
    pub e_f: f64,
    pub e_rho: f64,
    pub skipped: usize,
    pub intervals: Vec<IntervalSummary>,
    pub online_total_s: f64,
}

impl PredictionReport {
    /// Mean online time per case over the cases with `a < t <= b`.
    pub fn mean_online_us(&self, a: f64, b: f64) -> f64 {
        let sel: Vec<f64> = self.rows.iter().filter(|r| r.t > a && r.t <= b).map(|r| r.online_us).collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }

    /// Mean `e_f` over scored cases with `a < t <= b`.
    pub fn mean_e_f(&self, a: f64, b: f64) -> f64 {
        let sel: Vec<f64> = self.rows.iter().filter(|r| r.t > a && r.t <= b).filter_map(|r| r.e_f).collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }

    pub fn write_rows_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,mu,e_f,e_rho,interval,latent_dim,online_us,out_of_hull\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "skipped".to_string(), |x| format!("{x:e}"));
        for r in &self.rows {
            let mu: Vec<String> = r.mu.iter().map(|m| m.to_string()).collect();
            out += &format!(
                "{},{},{},{},{},{},{:.3},{}\n",
                r.t,
                mu.join(";"),
                opt(r.e_f),
                opt(r.e_rho),
                r.interval,
                r.latent_dim,
                r.online_us,
                r.out_of_hull
            );
        }
        write_text(path, &out)
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("row,interval,a,b,map,latent_dim,n_cases,online_total_s,online_mean_us,E_f,E_rho\n");
        out += &format!(
            "total,,,,{},,{},{:e},,{:e},{:e}\n",
            self.method,
            self.rows.len(),
            self.online_total_s,
            self.e_f,
            self.e_rho
        );
        for s in &self.intervals {
            out += &format!(
                "interval,{},{},{},{},{},{},{:e},{:.3},{:e},{:e}\n",
                s.interval, s.a, s.b, s.map, s.latent_dim, s.n_cases, s.online_total_s, s.online_mean_us, s.e_f, s.e_rho
            );
        }
        write_text(path, &out)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| RomError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| RomError::io(path, e))
}

/// Predicts every case and scores it. Cases run one at a time so the
/// per-interval timings are not distorted by contention.
pub fn evaluate(bundle: &RomBundle, kind: InterpolationKind, cases: &[TestCase]) -> Result<PredictionReport> {
    let pred = Predictor::new(bundle, kind)?;
    let mut rows = Vec::with_capacity(cases.len());
    for c in cases {
        check_dim(bundle.n_h(), c.reference.len())?;
        let p = pred.predict(c.t, &c.mu)?;
        let e_f = relative_error(&c.reference, &p.f);
        let e_rho = match e_f {
            Some(_) => relative_error(&pred.density(&c.reference)?, &pred.density(&p.f)?),
            None => None,
        };
        rows.push(CaseRow {
            t: c.t,
            mu: c.mu.clone(),
            e_f,
            e_rho,
            interval: p.interval,
            latent_dim: p.latent_dim,
            online_us: p.online.as_secs_f64() * 1e6,
            out_of_hull: p.out_of_hull,
        });
    }
    let scored: Vec<&CaseRow> = rows.iter().filter(|r| r.e_f.is_some() && r.e_rho.is_some()).collect();
    let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let e_f = mean(scored.iter().filter_map(|r| r.e_f).collect());
    let e_rho = mean(scored.iter().filter_map(|r| r.e_rho).collect());
    let intervals = bundle
        .partition
        .intervals()
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            let sel: Vec<f64> = rows.iter().filter(|r| r.interval == j).map(|r| r.online_us).collect();
            let total = sel.iter().sum::<f64>();
            let here: Vec<&&CaseRow> = scored.iter().filter(|r| r.interval == j).collect();
            IntervalSummary {
                interval: j,
                a: iv.a,
                b: iv.b,
                map: bundle.intervals[j].map.kind().into(),
                latent_dim: bundle.intervals[j].map.latent_dim(),
                n_cases: sel.len(),
                online_total_s: total * 1e-6,
                online_mean_us: total / sel.len().max(1) as f64,
                e_f: mean(here.iter().filter_map(|r| r.e_f).collect()),
                e_rho: mean(here.iter().filter_map(|r| r.e_rho).collect()),
            }
        })
        .collect();
    Ok(PredictionReport {
        method: bundle.method.to_string(),
        interpolator: pred.interpolator().name().into(),
        skipped: rows.len() - scored.len(),
        online_total_s: rows.iter().map(|r| r.online_us).sum::<f64>() * 1e-6,
        rows,
        e_f,
        e_rho,
        intervals,
    })
}
