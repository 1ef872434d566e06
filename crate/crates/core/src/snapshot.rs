//! Snapshot matrices: centred full-order states stored column-major,
//! parameter-major and time-minor, with a global mean offset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Result, RomError};
use crate::fom::{FomSolver, TimeIntegrator};
use crate::linalg::ColumnBlocks;
use crate::problem::ProblemSpec;

const MAGIC: &[u8; 4] = b"KROM";
const VERSION: u32 = 1;
pub const COLUMN_ORDER: &str = "parameter-major";
pub const DOF_ORDERING: &str = "velocity-major";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    times: Vec<f64>,
    params: Vec<Vec<f64>>,
    column_order: String,
    dof_ordering: String,
    n_v: usize,
    n_x: usize,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    n_h: usize,
    n_v: usize,
    times: Vec<f64>,
    params: Vec<Vec<f64>>,
    mean: Vec<f64>,
    data: Vec<f64>,
    provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy)]
pub struct GenerateOptions {
    pub threads: usize,
    pub integrator: TimeIntegrator,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { threads: 1, integrator: TimeIntegrator::BackwardEuler }
    }
}

/// Runs the full-order model for every training parameter and stacks the
/// centred states.
pub fn generate(spec: &ProblemSpec, params: &[Vec<f64>], times: &[f64]) -> Result<SnapshotMatrix> {
    generate_with(spec, params, times, GenerateOptions::default())
}

pub fn generate_with(
    spec: &ProblemSpec,
    params: &[Vec<f64>],
    times: &[f64],
    opts: GenerateOptions,
) -> Result<SnapshotMatrix> {
    if params.is_empty() || times.is_empty() {
        return Err(RomError::invalid("snapshot generation needs at least one parameter and one time"));
    }
    let steps: Vec<usize> = times.iter().map(|&t| spec.step_of(t)).collect::<Result<_>>()?;
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RomError::invalid("sample times must be strictly increasing"));
    }
    let n_h = spec.n_h();
    let n_t = times.len();
    let mut data = vec![0.0; n_h * n_t * params.len()];
    let threads = opts.threads.max(1).min(params.len());
    let mut blocks: Vec<(usize, &mut [f64])> = data.chunks_mut(n_h * n_t).enumerate().collect();
    let per_worker = params.len().div_ceil(threads);
    let mut results: Vec<Result<()>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        while !blocks.is_empty() {
            let take = per_worker.min(blocks.len());
            let mine: Vec<(usize, &mut [f64])> = blocks.drain(..take).collect();
            let steps = &steps;
            handles.push(scope.spawn(move || -> Result<()> {
                for (j, block) in mine {
                    let mu = &params[j];
                    let solver = FomSolver::new(spec, mu, opts.integrator)?;
                    let mut k = 0;
                    solver
                        .march(steps, |_, s| {
                            block[k * n_h..(k + 1) * n_h].copy_from_slice(&s.f);
                            k += 1;
                            Ok(())
                        })
                        .map_err(|e| e.context(format!("parameter {mu:?}")))?;
                }
                Ok(())
            }));
        }
        results = handles.into_iter().map(|h| h.join().expect("snapshot worker panicked")).collect();
    });
    for r in results {
        r?;
    }
    let mut sm = SnapshotMatrix {
        n_h,
        n_v: spec.n_velocities,
        times: times.to_vec(),
        params: params.to_vec(),
        mean: vec![0.0; n_h],
        data,
        provenance: BTreeMap::new(),
    };
    sm.center();
    Ok(sm)
}

impl SnapshotMatrix {
    /// Builds from raw (uncentred) column-major data.
    pub fn from_raw(n_h: usize, n_v: usize, times: Vec<f64>, params: Vec<Vec<f64>>, raw: Vec<f64>) -> Result<Self> {
        if n_h == 0 || n_v == 0 || !n_h.is_multiple_of(n_v) {
            return Err(RomError::invalid(format!("n_h = {n_h} is not a positive multiple of n_v = {n_v}")));
        }
        if times.is_empty() || params.is_empty() {
            return Err(RomError::invalid("empty time or parameter list"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RomError::invalid("sample times must be strictly increasing"));
        }
        let expected = n_h * times.len() * params.len();
        if raw.len() != expected {
            return Err(RomError::DimensionMismatch { expected, got: raw.len() });
        }
        let mut sm =
            SnapshotMatrix { n_h, n_v, times, params, mean: vec![0.0; n_h], data: raw, provenance: BTreeMap::new() };
        sm.center();
        Ok(sm)
    }

    fn center(&mut self) {
        let n_s = self.n_cols() as f64;
        let mut mean = vec![0.0; self.n_h];
        for col in self.data.chunks_exact(self.n_h) {
            for (m, x) in mean.iter_mut().zip(col) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n_s;
        }
        for col in self.data.chunks_exact_mut(self.n_h) {
            for (x, m) in col.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        self.mean = mean;
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_x(&self) -> usize {
        self.n_h / self.n_v
    }

    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn n_p(&self) -> usize {
        self.params.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_t() * self.n_p()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Centred data, column-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn set_provenance(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.provenance.insert(key.into(), value.into());
    }

    pub fn column_index(&self, time_index: usize, param_index: usize) -> usize {
        param_index * self.n_t() + time_index
    }

    /// Centred column for `(t_i, mu_j)`.
    pub fn column(&self, time_index: usize, param_index: usize) -> &[f64] {
        let k = self.column_index(time_index, param_index);
        &self.data[k * self.n_h..(k + 1) * self.n_h]
    }

    /// Raw state `column + mean`.
    pub fn raw_column(&self, time_index: usize, param_index: usize) -> Vec<f64> {
        self.column(time_index, param_index).iter().zip(&self.mean).map(|(x, m)| x + m).collect()
    }

    pub fn as_blocks(&self) -> ColumnBlocks<'_> {
        ColumnBlocks::single(self.n_h, &self.data).expect("consistent storage")
    }

    pub fn full(&self) -> SnapshotSlice<'_> {
        SnapshotSlice { s: self, start: 0, end: self.n_t() }
    }

    /// Columns whose sample index lies in `start..end`, for every parameter.
    pub fn slice_indices(&self, start: usize, end: usize) -> Result<SnapshotSlice<'_>> {
        if start >= end || end > self.n_t() {
            return Err(RomError::EmptySlice { start: start as f64, end: end as f64 });
        }
        Ok(SnapshotSlice { s: self, start, end })
    }

    /// Columns whose sample time lies in the half-open interval `(a, b]`.
    pub fn slice_time_interval(&self, a: f64, b: f64) -> Result<SnapshotSlice<'_>> {
        let (start, end) = self.index_range(a, b);
        if start >= end {
            return Err(RomError::EmptySlice { start: a, end: b });
        }
        Ok(SnapshotSlice { s: self, start, end })
    }

    /// Sample-index range of times in `(a, b]`, with a small tolerance so grid
    /// times computed in floating point land on the expected side.
    pub fn index_range(&self, a: f64, b: f64) -> (usize, usize) {
        let tol = 1e-9 * self.times.last().copied().unwrap_or(1.0).abs().max(1.0);
        let start = self.times.partition_point(|&t| t <= a + tol);
        let end = self.times.partition_point(|&t| t <= b + tol);
        (start, end.max(start))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = Metadata {
            times: self.times.clone(),
            params: self.params.clone(),
            column_order: COLUMN_ORDER.into(),
            dof_ordering: DOF_ORDERING.into(),
            n_v: self.n_v,
            n_x: self.n_x(),
            provenance: self.provenance.clone(),
        };
        let mut w = BinWriter::create(path, MAGIC, VERSION)?;
        w.u64(self.n_h as u64)?;
        w.u64(self.n_cols() as u64)?;
        w.json(&meta)?;
        w.f64s(&self.mean)?;
        w.f64s(&self.data)?;
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mut r, _) = BinReader::open(path, MAGIC, VERSION)?;
        let n_h = r.len("n_h", 1 << 32)?;
        let n_s = r.len("n_s", 1 << 32)?;
        let at = r.offset();
        let meta: Metadata = r.json()?;
        let bad = |message: String| RomError::Format { offset: at, message };
        if meta.column_order != COLUMN_ORDER || meta.dof_ordering != DOF_ORDERING {
            return Err(bad(format!("unsupported layout {}/{}", meta.column_order, meta.dof_ordering)));
        }
        if meta.times.len() * meta.params.len() != n_s {
            return Err(bad(format!("{} times x {} params != n_s = {n_s}", meta.times.len(), meta.params.len())));
        }
        if meta.n_v == 0 || meta.n_v * meta.n_x != n_h {
            return Err(bad(format!("n_v = {} x n_x = {} != n_h = {n_h}", meta.n_v, meta.n_x)));
        }
        let mean = r.f64s(n_h)?;
        let data = r.f64s(n_h.checked_mul(n_s).ok_or_else(|| bad("size overflow".into()))?)?;
        r.expect_end()?;
        Ok(SnapshotMatrix {
            n_h,
            n_v: meta.n_v,
            times: meta.times,
            params: meta.params,
            mean,
            data,
            provenance: meta.provenance,
        })
    }
}

/// A time window of a snapshot matrix: one contiguous column block per
/// training parameter.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotSlice<'a> {
    s: &'a SnapshotMatrix,
    start: usize,
    end: usize,
}

impl<'a> SnapshotSlice<'a> {
    pub fn matrix(&self) -> &'a SnapshotMatrix {
        self.s
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn n_t(&self) -> usize {
        self.end - self.start
    }

    pub fn n_cols(&self) -> usize {
        self.n_t() * self.s.n_p()
    }

    pub fn times(&self) -> &'a [f64] {
        &self.s.times[self.start..self.end]
    }

    pub fn mean(&self) -> &'a [f64] {
        &self.s.mean
    }

    pub fn blocks(&self) -> ColumnBlocks<'a> {
        let n_h = self.s.n_h;
        let n_t = self.s.n_t();
        let blocks = (0..self.s.n_p())
            .map(|j| &self.s.data[(j * n_t + self.start) * n_h..(j * n_t + self.end) * n_h])
            .collect();
        ColumnBlocks::new(n_h, blocks).expect("consistent storage")
    }

    /// Centred columns in slice order (parameter-major, time-minor).
    pub fn columns(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        let s = self.s;
        let (start, end) = (self.start, self.end);
        (0..s.n_p()).flat_map(move |j| (start..end).map(move |i| s.column(i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SnapshotMatrix {
        let n_h = 4;
        let times = vec![0.5, 1.0, 1.5];
        let params = vec![vec![1.0], vec![2.0]];
        let raw: Vec<f64> = (0..n_h * 6).map(|i| (i as f64).sin() * 3.0 + 1.0).collect();
        SnapshotMatrix::from_raw(n_h, 2, times, params, raw).unwrap()
    }

    #[test]
    fn centring_and_identity() {
        let s = toy();
        let mut sum = [0.0; 4];
        for c in s.data().chunks(4) {
            for (a, b) in sum.iter_mut().zip(c) {
                *a += b;
            }
        }
        assert!(sum.iter().all(|x| x.abs() < 1e-12));
        let raw = s.raw_column(2, 1);
        let k = 3 + 2;
        for (r, i) in raw.iter().zip(k * 4..(k + 1) * 4) {
            assert!((r - ((i as f64).sin() * 3.0 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn half_open_slicing() {
        let s = toy();
        let sl = s.slice_time_interval(0.5, 1.5).unwrap();
        assert_eq!((sl.start(), sl.end()), (1, 3));
        assert_eq!(sl.n_cols(), 4);
        assert_eq!(sl.columns().count(), 4);
        assert_eq!(sl.blocks().cols(), 4);
        assert!(s.slice_time_interval(1.5, 3.0).is_err());
        let all = s.slice_time_interval(0.0, 1.5).unwrap();
        assert_eq!(all.n_cols(), s.n_cols());
    }

    #[test]
    fn single_column_is_all_mean() {
        let s = SnapshotMatrix::from_raw(2, 1, vec![1.0], vec![vec![0.0]], vec![3.0, -1.0]).unwrap();
        assert_eq!(s.mean(), &[3.0, -1.0]);
        assert!(s.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.krom");
        let mut s = toy();
        s.set_provenance("config_hash", "abc");
        s.save(&p).unwrap();
        assert_eq!(SnapshotMatrix::load(&p).unwrap(), s);

        let bytes = std::fs::read(&p).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&p, &bad).unwrap();
        assert!(matches!(SnapshotMatrix::load(&p), Err(RomError::Format { offset: 0, .. })));

        let mut v2 = bytes.clone();
        v2[4..8].copy_from_slice(&2u32.to_le_bytes());
        std::fs::write(&p, &v2).unwrap();
        assert!(matches!(SnapshotMatrix::load(&p), Err(RomError::UnsupportedVersion { found: 2, supported: 1 })));

        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        match SnapshotMatrix::load(&p) {
            Err(RomError::Format { offset, .. }) => assert!(offset > 0 && offset < bytes.len() as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
