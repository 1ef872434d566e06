//! Time partitions of the snapshot grid: uniform construction and the
//! goal-oriented refine/coarsen loop.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::linalg;
use crate::pod::{truncation_rank, TruncationRule};
use crate::snapshot::SnapshotMatrix;

/// Half-open time interval `(a, b]` together with the sample-index range
/// `start..end` of the snapshot times it contains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn n_samples(&self) -> usize {
        self.end - self.start
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, t: f64) -> bool {
        t > self.a && t <= self.b
    }

    /// Splits the contained samples as evenly as possible (the first half
    /// gets `floor(n/2)`); the new boundary is the last sample of the first
    /// half. Returns `None` if a half would hold fewer than two samples.
    pub fn split(&self, times: &[f64]) -> Option<(Interval, Interval)> {
        let n = self.n_samples();
        if n < 4 {
            return None;
        }
        let mid = self.start + n / 2;
        let t = times[mid - 1];
        Some((Interval { a: self.a, b: t, start: self.start, end: mid }, Interval { a: t, b: self.b, start: mid, end: self.end }))
    }

    /// Union of two adjacent intervals.
    pub fn merge(&self, next: &Interval) -> Interval {
        debug_assert_eq!(self.end, next.start);
        Interval { a: self.a, b: next.b, start: self.start, end: next.end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    intervals: Vec<Interval>,
}

impl TimePartition {
    /// Checks contiguity and that every interval holds at least one sample.
    pub fn new(intervals: Vec<Interval>, times: &[f64]) -> Result<Self> {
        let p = TimePartition { intervals };
        p.validate(times)?;
        Ok(p)
    }

    pub fn single(t_final: f64, times: &[f64]) -> Result<Self> {
        uniform_partition(t_final, 1, times)
    }

    pub fn validate(&self, times: &[f64]) -> Result<()> {
        let iv = &self.intervals;
        if iv.is_empty() {
            return Err(RomError::invalid("partition has no intervals"));
        }
        if iv[0].start != 0 || iv[iv.len() - 1].end != times.len() {
            return Err(RomError::invalid("partition does not cover the sample range"));
        }
        for (k, w) in iv.iter().enumerate() {
            if w.start >= w.end || !(w.a < w.b) {
                return Err(RomError::invalid(format!("interval {k} is empty")));
            }
            if !(times[w.start] > w.a && times[w.end - 1] <= w.b) || (w.end < times.len() && times[w.end] <= w.b) {
                return Err(RomError::invalid(format!("interval {k} disagrees with its sample range")));
            }
        }
        for (k, p) in iv.windows(2).enumerate() {
            if p[0].end != p[1].start || p[0].b != p[1].a {
                return Err(RomError::invalid(format!("intervals {k} and {} are not contiguous", k + 1)));
            }
        }
        Ok(())
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Boundary times `a_1, b_1, ..., b_k`.
    pub fn boundaries(&self) -> Vec<f64> {
        std::iter::once(self.intervals[0].a).chain(self.intervals.iter().map(|w| w.b)).collect()
    }

    /// Index of the interval `(a, b]` containing `t`.
    pub fn locate(&self, t: f64) -> Option<usize> {
        self.intervals.iter().position(|w| w.contains(t))
    }

    /// Index of the interval containing sample `i`.
    pub fn locate_sample(&self, i: usize) -> Option<usize> {
        self.intervals.iter().position(|w| i >= w.start && i < w.end)
    }
}

/// `k` equal-width intervals on `(0, t_final]`.
pub fn uniform_partition(t_final: f64, k: usize, times: &[f64]) -> Result<TimePartition> {
    if k == 0 || !(t_final > 0.0) {
        return Err(RomError::invalid(format!("uniform partition needs k >= 1 and T > 0 (k = {k}, T = {t_final})")));
    }
    if times.is_empty() || times[0] <= 0.0 || *times.last().expect("nonempty") > t_final * (1.0 + 1e-12) {
        return Err(RomError::invalid("sample times must lie in (0, T]"));
    }
    let tol = 1e-9 * t_final;
    let bound = |i: usize| if i == k { t_final } else { t_final * i as f64 / k as f64 };
    let index = |b: f64| times.partition_point(|&t| t <= b + tol);
    let mut intervals = Vec::with_capacity(k);
    for i in 0..k {
        let (a, b) = (bound(i), bound(i + 1));
        let (start, end) = (index(a), if i + 1 == k { times.len() } else { index(b) });
        if start >= end {
            return Err(RomError::invalid(format!("interval ({a}, {b}] of the {k}-way partition holds no sample time")));
        }
        intervals.push(Interval { a, b, start, end });
    }
    Ok(TimePartition { intervals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub r_max: usize,
    pub r_min: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub rule: TruncationRule,
    pub equilibrium_detection: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig { r_max: 15, r_min: 5, max_iter: 10, tol: 1e-4, rule: TruncationRule::Energy, equilibrium_detection: true }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if 2 * self.r_min > self.r_max {
            errs.push(format!("r_min = {} must not exceed r_max / 2 = {}", self.r_min, self.r_max as f64 / 2.0));
        }
        if self.max_iter == 0 {
            errs.push("max_iter must be at least 1".into());
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            errs.push(format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(RomError::Config(errs))
        }
    }
}

/// How a sweep treats an interval whose rank exceeds `r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighRank {
    Split,
    /// Keep it and flag it: too few samples to split.
    Freeze,
    /// Keep it and hand it to a nonlinear map.
    Autoencoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    #[default]
    None,
    Frozen,
    Autoencoder,
}

/// Result of one refine/coarsen pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub intervals: Vec<Interval>,
    pub marks: Vec<Mark>,
}

/// One refine/coarsen pass. All decisions use the `ranks` passed in (the
/// ranks before the pass).
pub fn sweep(
    intervals: &[Interval],
    ranks: &[usize],
    times: &[f64],
    r_max: usize,
    r_min: usize,
    equilibrium_detection: bool,
    mut high: impl FnMut(&Interval, usize) -> HighRank,
) -> SweepOutcome {
    assert_eq!(intervals.len(), ranks.len());
    let k = intervals.len();
    let mut out: Vec<Interval> = Vec::with_capacity(2 * k);
    let mut marks: Vec<Mark> = Vec::with_capacity(2 * k);
    // refinement of interval j, if it is refined in this pass
    let mut refine = |j: usize| -> std::result::Result<(Interval, Interval), Mark> {
        if ranks[j] <= r_max {
            return Err(Mark::None);
        }
        match high(&intervals[j], ranks[j]) {
            HighRank::Split => intervals[j].split(times).ok_or(Mark::Frozen),
            HighRank::Freeze => Err(Mark::Frozen),
            HighRank::Autoencoder => Err(Mark::Autoencoder),
        }
    };
    let mut j = 0;
    while j < k {
        if ranks[j] < r_min {
            let mut last = j;
            while last + 1 < k && ranks[last + 1] < r_min {
                last += 1;
            }
            let run =
                Interval { a: intervals[j].a, b: intervals[last].b, start: intervals[j].start, end: intervals[last].end };
            if last + 1 < k {
                // (a) forward into the successor, or its first half
                match refine(last + 1) {
                    Ok((left, right)) => {
                        out.push(run.merge(&left));
                        marks.push(Mark::None);
                        out.push(right);
                        marks.push(Mark::None);
                    }
                    Err(_) => {
                        out.push(run.merge(&intervals[last + 1]));
                        marks.push(Mark::None);
                    }
                }
                j = last + 2;
            } else if last > j {
                // (b) a run reaching the end collapses into one interval
                out.push(run);
                marks.push(Mark::None);
                j = k;
            } else {
                // (c) a lone final interval merges backward
                match out.last_mut() {
                    Some(prev) if !equilibrium_detection => {
                        *prev = prev.merge(&intervals[j]);
                        *marks.last_mut().expect("paired") = Mark::None;
                    }
                    _ => {
                        out.push(intervals[j]);
                        marks.push(Mark::None);
                    }
                }
                j = k;
            }
        } else {
            match refine(j) {
                Ok((left, right)) => {
                    out.push(left);
                    out.push(right);
                    marks.extend([Mark::None, Mark::None]);
                }
                Err(mark) => {
                    out.push(intervals[j]);
                    marks.push(mark);
                }
            }
            j += 1;
        }
    }
    SweepOutcome { intervals: out, marks }
}

/// Singular values per sample range, so repeated slices are decomposed once.
/// A cache must only be used with a single snapshot matrix.
#[derive(Debug, Default)]
pub struct RankCache {
    spectra: HashMap<(usize, usize), Vec<f64>>,
    shape: Option<(usize, usize, usize)>,
    misses: usize,
}

impl RankCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of decompositions actually computed.
    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn spectrum(&mut self, s: &SnapshotMatrix, start: usize, end: usize) -> Result<&[f64]> {
        let shape = (s.n_h(), s.n_t(), s.n_p());
        match self.shape {
            None => self.shape = Some(shape),
            Some(sh) if sh != shape => return Err(RomError::invalid("rank cache reused with a different snapshot matrix")),
            _ => {}
        }
        if !self.spectra.contains_key(&(start, end)) {
            let sv = linalg::singular_values(&s.slice_indices(start, end)?.blocks())?;
            self.misses += 1;
            self.spectra.insert((start, end), sv);
        }
        Ok(&self.spectra[&(start, end)])
    }

    pub fn rank(&mut self, s: &SnapshotMatrix, iv: &Interval, tol: f64, rule: TruncationRule) -> Result<usize> {
        Ok(truncation_rank(self.spectrum(s, iv.start, iv.end)?, tol, rule))
    }
}

/// POD rank of every interval.
pub fn ranks_for(
    s: &SnapshotMatrix,
    partition: &TimePartition,
    tol: f64,
    rule: TruncationRule,
    cache: &mut RankCache,
) -> Result<Vec<usize>> {
    partition.intervals.iter().map(|iv| cache.rank(s, iv, tol, rule)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptStatus {
    /// Every checked rank lies in `[r_min, r_max]`.
    Converged,
    /// A pass changed nothing, typically because of frozen intervals.
    Stalled,
    IterationLimit,
}

/// Partition and ranks before one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub boundaries: Vec<f64>,
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptResult {
    pub partition: TimePartition,
    pub ranks: Vec<usize>,
    pub marks: Vec<Mark>,
    pub iterations: usize,
    pub status: AdaptStatus,
    /// State at the start of each pass, then the final state.
    pub history: Vec<SweepRecord>,
}

fn satisfied(ranks: &[usize], marks: &[Mark], r_min: usize, r_max: usize, equilibrium_detection: bool) -> bool {
    let k = ranks.len();
    (0..k).all(|i| {
        // the equilibrium tail may keep a rank below r_min, but never above r_max
        let floor = if equilibrium_detection && i + 1 == k { 0 } else { r_min };
        marks[i] == Mark::Autoencoder || (floor <= ranks[i] && ranks[i] <= r_max)
    })
}

/// Shared driver for the adaptive and hybrid loops.
pub(crate) fn iterate(
    s: &SnapshotMatrix,
    initial: &TimePartition,
    cfg: &AdaptiveConfig,
    cache: &mut RankCache,
    mut high: impl FnMut(&Interval, usize) -> HighRank,
) -> Result<AdaptResult> {
    initial.validate(s.times())?;
    let mut part = initial.clone();
    let mut marks = vec![Mark::None; part.len()];
    let mut ranks = ranks_for(s, &part, cfg.tol, cfg.rule, cache)?;
    let mut history = Vec::new();
    let mut iterations = 0;
    let status = loop {
        // marks from the previous pass are only informative; re-derive them
        history.push(SweepRecord { boundaries: part.boundaries(), ranks: ranks.clone() });
        let pending_ae: Vec<Mark> = part
            .intervals
            .iter()
            .zip(&ranks)
            .map(|(iv, &r)| if r > cfg.r_max && high(iv, r) == HighRank::Autoencoder { Mark::Autoencoder } else { Mark::None })
            .collect();
        if satisfied(&ranks, &pending_ae, cfg.r_min, cfg.r_max, cfg.equilibrium_detection) {
            marks = pending_ae;
            break AdaptStatus::Converged;
        }
        if iterations == cfg.max_iter {
            break AdaptStatus::IterationLimit;
        }
        let out = sweep(&part.intervals, &ranks, s.times(), cfg.r_max, cfg.r_min, cfg.equilibrium_detection, &mut high);
        iterations += 1;
        marks = out.marks;
        if out.intervals == part.intervals {
            break AdaptStatus::Stalled;
        }
        part = TimePartition::new(out.intervals, s.times())?;
        ranks = ranks_for(s, &part, cfg.tol, cfg.rule, cache)?;
    };
    if status != AdaptStatus::Converged {
        history.push(SweepRecord { boundaries: part.boundaries(), ranks: ranks.clone() });
    }
    Ok(AdaptResult { partition: part, ranks, marks, iterations, status, history })
}

/// Goal-oriented adaptive partitioning.
pub fn adapt(s: &SnapshotMatrix, initial: &TimePartition, cfg: &AdaptiveConfig, cache: &mut RankCache) -> Result<AdaptResult> {
    cfg.validate()?;
    iterate(s, initial, cfg, cache, |_, _| HighRank::Split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (1..=n).map(|i| i as f64 * dt).collect()
    }

    fn run(ranks: &[usize], k: usize, eq: bool) -> Vec<f64> {
        let times = grid(64, 1.0);
        let p = uniform_partition(64.0, k, &times).unwrap();
        let out = sweep(p.intervals(), ranks, &times, 15, 5, eq, |_, _| HighRank::Split);
        TimePartition::new(out.intervals.clone(), &times).unwrap().boundaries()
    }

    #[test]
    fn uniform_boundaries() {
        let times = grid(2000, 1.0 / 80.0);
        let p = uniform_partition(25.0, 4, &times).unwrap();
        assert_eq!(p.boundaries(), vec![0.0, 6.25, 12.5, 18.75, 25.0]);
        assert_eq!(p.intervals()[0].n_samples(), 500);
        let p = uniform_partition(20.0, 10, &grid(200, 0.1)).unwrap();
        assert!(p.intervals().iter().all(|w| (w.width() - 2.0).abs() < 1e-12));
        assert!(uniform_partition(1.0, 3, &[0.5, 1.0]).is_err());
        assert_eq!(uniform_partition(25.0, 1, &times).unwrap().len(), 1);
    }

    #[test]
    fn documented_traces() {
        assert_eq!(run(&[20, 3, 3, 4], 4, false), vec![0.0, 8.0, 16.0, 64.0]);
        assert_eq!(run(&[3, 10], 2, false), vec![0.0, 64.0]);
        assert_eq!(run(&[10, 3], 2, false), vec![0.0, 64.0]);
        assert_eq!(run(&[10, 3], 2, true), vec![0.0, 32.0, 64.0]);
    }

    #[test]
    fn equilibrium_tail_is_not_checked() {
        assert!(satisfied(&[7, 2], &[Mark::None; 2], 5, 15, true));
        assert!(!satisfied(&[7, 2], &[Mark::None; 2], 5, 15, false));
        assert!(!satisfied(&[72], &[Mark::None], 5, 15, true));
    }

    #[test]
    fn small_intervals_freeze() {
        let times = grid(6, 1.0);
        let p = uniform_partition(6.0, 2, &times).unwrap();
        let out = sweep(p.intervals(), &[20, 20], &times, 15, 5, false, |_, _| HighRank::Split);
        assert_eq!(out.intervals, p.intervals());
        assert_eq!(out.marks, vec![Mark::Frozen, Mark::Frozen]);
    }

    #[test]
    fn locate_is_half_open() {
        let times = grid(8, 1.0);
        let p = uniform_partition(8.0, 2, &times).unwrap();
        assert_eq!(p.locate(4.0), Some(0));
        assert_eq!(p.locate(4.0 + 1e-9), Some(1));
        assert_eq!(p.locate(0.0), None);
        assert_eq!(p.locate_sample(4), Some(1));
    }
}
