// Independent reference implementations shared by the focused tests and the
// acceptance run.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use kinetic_rom::autoencoder::{conv1d, conv1d_transpose, Architecture, Network};
use kinetic_rom::online::Interpolator;
use kinetic_rom::partition::{sweep, HighRank, Interval, TimePartition};
use kinetic_rom::snapshot::SnapshotMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const R_MAX: usize = 15;
pub const R_MIN: usize = 5;

/// Reference rules written against the set of interval end indices.
/// `ends[i]` is the (exclusive) last sample index of interval `i`.
pub fn oracle(ends: &[usize], ranks: &[usize], eq: bool) -> BTreeSet<usize> {
    let k = ends.len();
    let start = |i: usize| if i == 0 { 0 } else { ends[i - 1] };
    let low = |i: usize| ranks[i] < R_MIN;
    let high = |i: usize| ranks[i] > R_MAX;
    let midpoint = |i: usize| {
        let n = ends[i] - start(i);
        (n >= 4).then(|| start(i) + n / 2)
    };
    let mut set: BTreeSet<usize> = ends.iter().copied().collect();
    let mut i = 0;
    while i < k {
        if !low(i) {
            if high(i) {
                if let Some(m) = midpoint(i) {
                    set.insert(m);
                }
            }
            i += 1;
            continue;
        }
        let mut last = i;
        while last + 1 < k && low(last + 1) {
            last += 1;
        }
        if last + 1 < k {
            // (a): drop every boundary from the run up to the successor,
            // then split the successor if it is over budget
            for b in i..=last {
                set.remove(&ends[b]);
            }
            if high(last + 1) {
                if let Some(m) = midpoint(last + 1) {
                    set.insert(m);
                }
            }
            i = last + 2;
        } else if last > i {
            // (b)
            for b in i..last {
                set.remove(&ends[b]);
            }
            i = k;
        } else {
            // (c)
            if !eq && i > 0 {
                set.remove(&ends[i - 1]);
            }
            i = k;
        }
    }
    set
}

pub fn build(counts: &[usize], dt: f64) -> (Vec<Interval>, Vec<f64>) {
    let n: usize = counts.iter().sum();
    let times: Vec<f64> = (1..=n).map(|i| i as f64 * dt).collect();
    let mut out = Vec::new();
    let mut s = 0;
    for &c in counts {
        let a = if s == 0 { 0.0 } else { times[s - 1] };
        out.push(Interval { a, b: times[s + c - 1], start: s, end: s + c });
        s += c;
    }
    (out, times)
}

/// Runs `trials` random rank profiles through one sweep and compares the
/// result with the oracle, bit for bit on the boundaries.
pub fn sweep_oracle_trials(trials: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let k = rng.random_range(1..=12);
        let counts: Vec<usize> = (0..k).map(|_| rng.random_range(1..=10)).collect();
        let ranks: Vec<usize> = (0..k)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(0..R_MIN),
                1 => rng.random_range(R_MIN..=R_MAX),
                _ => rng.random_range(R_MAX + 1..40),
            })
            .collect();
        let eq = rng.random_bool(0.5);
        let (intervals, times) = build(&counts, 1.0 / 80.0);
        let out = sweep(&intervals, &ranks, &times, R_MAX, R_MIN, eq, |_, _| HighRank::Split);
        let ends: Vec<usize> = intervals.iter().map(|iv| iv.end).collect();
        let want = oracle(&ends, &ranks, eq);
        let got: BTreeSet<usize> = out.intervals.iter().map(|iv| iv.end).collect();
        let context = format!("trial {trial}: counts {counts:?} ranks {ranks:?} eq {eq}");
        if got != want {
            return Err(format!("{context}: ends {got:?}, expected {want:?}"));
        }
        let p = TimePartition::new(out.intervals.clone(), &times).map_err(|e| format!("{context}: {e}"))?;
        let mut expect = vec![0.0];
        expect.extend(want.iter().map(|&e| times[e - 1]));
        if p.boundaries() != expect {
            return Err(format!("{context}: boundaries {:?}, expected {expect:?}", p.boundaries()));
        }
    }
    Ok(())
}

/// Natural cubic spline by the textbook tridiagonal (Thomas) solve on
/// sorted knots, evaluated with the end cubics extended outward.
pub fn thomas_spline(x: &[f64], y: &[f64], at: f64) -> f64 {
    let n = x.len();
    let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
    let m = n - 2;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        sub[i] = h[i];
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        sup[i] = h[i + 1];
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
    }
    for i in 1..m {
        let f = sub[i] / diag[i - 1];
        diag[i] -= f * sup[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    let mut mm = vec![0.0; n];
    for i in (0..m).rev() {
        let next = if i + 1 < m { mm[i + 2] } else { 0.0 };
        mm[i + 1] = (rhs[i] - sup[i] * next) / diag[i];
    }
    let mut k = 0;
    while k + 2 < n && at > x[k + 1] {
        k += 1;
    }
    let (a, b) = (x[k + 1] - at, at - x[k]);
    let hk = h[k];
    mm[k] * a.powi(3) / (6.0 * hk)
        + mm[k + 1] * b.powi(3) / (6.0 * hk)
        + (y[k] / hk - mm[k] * hk / 6.0) * a
        + (y[k + 1] / hk - mm[k + 1] * hk / 6.0) * b
}

pub const SAMPLES: usize = 3;

/// Small network with weights scaled up so every parameter carries a
/// gradient well above finite-difference noise.
pub fn tiny() -> (Network, Vec<f64>) {
    let arch = Architecture::new(vec![2, 3, 3, 3, 2], 16, 2).unwrap();
    let mut net = Network::new(arch, 3).unwrap();
    net.params_mut().iter_mut().for_each(|p| *p *= 3.0);
    let x0: Vec<f64> = (0..SAMPLES * 32).map(|i| (0.37 * i as f64).sin()).collect();
    // near a reconstruction so the residual is small but not degenerate
    let rec = net.decode(&net.encode(&x0).unwrap()).unwrap();
    let x = rec.iter().zip(&x0).map(|(r, a)| r + 1e-2 * a).collect();
    (net, x)
}

/// Worst relative error between the analytic gradient of the tiny network
/// and a fourth-order central difference, over every parameter.
pub fn worst_gradient_error() -> f64 {
    let (net, x) = tiny();
    let (_, grad) = net.gradient(&x).unwrap();
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for k in 0..net.n_params() {
        let p0 = net.params()[k];
        let mut at = |d: f64| {
            probe.params_mut()[k] = p0 + d;
            probe.loss(&x).unwrap() / SAMPLES as f64
        };
        let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
        probe.params_mut()[k] = p0;
        let a = grad[k];
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8 * gmax));
    }
    worst
}

/// Worst `|<Ax, y> - <x, A^T y>| / (|Ax| |y|)` over a few layer shapes.
pub fn worst_adjoint_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for &(c_in, c_out, batch, len) in &[(1, 1, 1, 8), (3, 5, 2, 16), (16, 24, 3, 176), (4, 2, 1, 4)] {
        let (k, s, p) = (10, 2, 4);
        let w: Vec<f64> = (0..c_out * c_in * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..c_in * batch * len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..c_out * batch * (len / 2)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ax = conv1d(&x, &w, c_in, c_out, batch, len, k, s, p).unwrap();
        let aty = conv1d_transpose(&y, &w, c_in, c_out, batch, len, k, s, p).unwrap();
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        let scale = ax.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

/// Random `n_h x (n_t * n_p)` snapshot data with a decaying spectrum.
pub fn random_snapshots(n_h: usize, n_t: usize, n_p: usize, seed: u64) -> SnapshotMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_t * n_p;
    let modes = n_h.min(n).min(12);
    let mut raw = vec![0.0; n_h * n];
    for m in 0..modes {
        let amp = 0.5f64.powi(m as i32);
        let u: Vec<f64> = (0..n_h).map(|_| rng.random_range(-1.0..1.0)).collect();
        for c in 0..n {
            let v = amp * rng.random_range(-1.0..1.0);
            for (i, ui) in u.iter().enumerate() {
                raw[c * n_h + i] += ui * v;
            }
        }
    }
    let times = (1..=n_t).map(|i| i as f64).collect();
    let params = (0..n_p).map(|p| vec![p as f64]).collect();
    SnapshotMatrix::from_raw(n_h, 1, times, params, raw).unwrap()
}

pub fn random_cuts(n_t: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = (0..k.saturating_sub(1)).map(|_| rng.random_range(1..n_t)).collect();
    cuts.push(0);
    cuts.push(n_t);
    cuts.sort_unstable();
    cuts.dedup();
    cuts
}

/// Worst deviation of the library spline from the tridiagonal oracle over
/// random knot sets given in shuffled order.
pub fn worst_spline_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let n = rng.random_range(4..30);
        let mut x: Vec<f64> = (0..n).map(|i| i as f64 + rng.random_range(-0.3..0.3)).collect();
        let comps = 5;
        let values = DMatrix::from_fn(comps, n, |r, j| ((r + 1) as f64 * 0.3 * x[j]).sin() + 0.1 * r as f64);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.swap(0, n / 2);
        let shuffled_x: Vec<Vec<f64>> = perm.iter().map(|&i| vec![x[i]]).collect();
        let shuffled = DMatrix::from_fn(comps, n, |r, j| values[(r, perm[j])]);
        let it = Interpolator::spline(&shuffled_x).unwrap();
        x.sort_by(f64::total_cmp);
        let sorted = DMatrix::from_fn(comps, n, |r, j| ((r + 1) as f64 * 0.3 * x[j]).sin() + 0.1 * r as f64);
        for _ in 0..20 {
            let at = rng.random_range(x[0] - 1.0..x[n - 1] + 1.0);
            let got = it.interpolate(&shuffled, &[at]).unwrap();
            for r in 0..comps {
                let y: Vec<f64> = sorted.row(r).iter().copied().collect();
                worst = worst.max((got[r] - thomas_spline(&x, &y, at)).abs());
            }
        }
    }
    worst
}
