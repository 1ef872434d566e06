//! Built reduced models: a time partition with one latent map per interval
//! and the training coordinates the online stage interpolates.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderModel;
use crate::binio::{read_matrix, write_matrix};
use crate::error::{Result, RomError};
use crate::partition::{self, AdaptResult, AdaptiveConfig, Mark, RankCache, TimePartition};
use crate::pod::{build_pod, PodBasis, TruncationRule};
use crate::snapshot::SnapshotMatrix;

const MANIFEST: &str = "manifest.json";
const BUNDLE_FORMAT: &str = "kinetic-rom-bundle";
const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Pod,
    Uniform { k: usize },
    Adaptive,
    Hybrid,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Pod => write!(f, "pod"),
            Method::Uniform { k } => write!(f, "uniform-{k}"),
            Method::Adaptive => write!(f, "adaptive"),
            Method::Hybrid => write!(f, "hybrid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LatentMap {
    Pod(PodBasis),
    Autoencoder(Box<AutoencoderModel>),
}

impl LatentMap {
    pub fn latent_dim(&self) -> usize {
        match self {
            LatentMap::Pod(b) => b.rank(),
            LatentMap::Autoencoder(m) => m.latent_dim(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LatentMap::Pod(_) => "pod",
            LatentMap::Autoencoder(_) => "autoencoder",
        }
    }

    /// Full-order state for latent `z` at local time index `i`.
    pub fn reconstruct(&self, z: &[f64], i: usize, mean: &[f64]) -> Result<Vec<f64>> {
        match self {
            LatentMap::Pod(b) => b.reconstruct(z, mean),
            LatentMap::Autoencoder(m) => {
                let mut f = m.reconstruct_centred(z, i)?;
                f.iter_mut().zip(mean).for_each(|(x, m)| *x += m);
                Ok(f)
            }
        }
    }
}

/// One interval of a bundle: its map and the training coordinates, stored
/// `latent x (n_p * n_t_interval)` in snapshot column order.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalModel {
    pub map: LatentMap,
    pub coords: DMatrix<f64>,
}

/// Why an interval got the map it has.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub a: f64,
    pub b: f64,
    pub rank: usize,
    pub map: String,
    pub note: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tol: f64,
    pub rule: TruncationRule,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub adapt: Option<AdaptResult>,
    #[serde(default)]
    pub decisions: Vec<DecisionRecord>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomBundle {
    pub method: Method,
    pub partition: TimePartition,
    pub intervals: Vec<IntervalModel>,
    pub mean: Vec<f64>,
    pub times: Vec<f64>,
    pub params: Vec<Vec<f64>>,
    pub n_v: usize,
    pub provenance: Provenance,
}

/// Builds per-interval maps: POD everywhere except where `ae` supplies a
/// trained model.
pub(crate) fn assemble(
    s: &SnapshotMatrix,
    method: Method,
    partition: TimePartition,
    tol: f64,
    rule: TruncationRule,
    mut ae: impl FnMut(usize) -> Result<Option<AutoencoderModel>>,
    provenance: Provenance,
) -> Result<RomBundle> {
    partition.validate(s.times())?;
    let mut intervals = Vec::with_capacity(partition.len());
    for (j, iv) in partition.intervals().iter().enumerate() {
        let slice = s.slice_indices(iv.start, iv.end)?;
        let model = match ae(j).map_err(|e| e.context(format!("interval {j} ({}, {}]", iv.a, iv.b)))? {
            Some(m) => {
                let coords = m.latent_coordinates(&slice)?;
                IntervalModel { map: LatentMap::Autoencoder(Box::new(m)), coords }
            }
            None => {
                let basis = build_pod(&slice.blocks(), tol, rule)?;
                let coords = basis.coordinates(&slice.blocks())?;
                IntervalModel { map: LatentMap::Pod(basis), coords }
            }
        };
        intervals.push(model);
    }
    Ok(RomBundle {
        method,
        partition,
        intervals,
        mean: s.mean().to_vec(),
        times: s.times().to_vec(),
        params: s.params().to_vec(),
        n_v: s.n_v(),
        provenance: Provenance { tol, rule, ..provenance },
    })
}

fn t_final(s: &SnapshotMatrix) -> f64 {
    *s.times().last().expect("nonempty snapshot times")
}

/// Classical POD: one interval.
pub fn build_pod_bundle(s: &SnapshotMatrix, tol: f64, rule: TruncationRule) -> Result<RomBundle> {
    let p = TimePartition::single(t_final(s), s.times())?;
    assemble(s, Method::Pod, p, tol, rule, |_| Ok(None), Provenance::default())
}

/// POD on `k` equal-width intervals.
pub fn build_uniform_bundle(s: &SnapshotMatrix, k: usize, tol: f64, rule: TruncationRule) -> Result<RomBundle> {
    let p = partition::uniform_partition(t_final(s), k, s.times())?;
    assemble(s, Method::Uniform { k }, p, tol, rule, |_| Ok(None), Provenance::default())
}

/// POD on the adaptively refined partition.
pub fn build_adaptive_bundle(
    s: &SnapshotMatrix,
    initial: &TimePartition,
    cfg: &AdaptiveConfig,
    cache: &mut RankCache,
) -> Result<RomBundle> {
    let result = partition::adapt(s, initial, cfg, cache)?;
    let decisions = result
        .partition
        .intervals()
        .iter()
        .zip(&result.ranks)
        .zip(&result.marks)
        .map(|((iv, &rank), mark)| DecisionRecord {
            a: iv.a,
            b: iv.b,
            rank,
            map: "pod".into(),
            note: if *mark == Mark::Frozen { "frozen: too few samples to split".into() } else { String::new() },
        })
        .collect();
    let prov = Provenance { decisions, adapt: Some(result.clone()), ..Provenance::default() };
    assemble(s, Method::Adaptive, result.partition, cfg.tol, cfg.rule, |_| Ok(None), prov)
}

#[derive(Serialize, Deserialize)]
struct IntervalEntry {
    a: f64,
    b: f64,
    start: usize,
    end: usize,
    map: String,
    latent_dim: usize,
    map_file: String,
    coords_file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    method: Method,
    n_v: usize,
    n_h: usize,
    times: Vec<f64>,
    params: Vec<Vec<f64>>,
    mean_file: String,
    intervals: Vec<IntervalEntry>,
    provenance: Provenance,
}

impl RomBundle {
    pub fn n_h(&self) -> usize {
        self.mean.len()
    }

    pub fn n_x(&self) -> usize {
        self.n_h() / self.n_v
    }

    pub fn latent_dims(&self) -> Vec<usize> {
        self.intervals.iter().map(|m| m.map.latent_dim()).collect()
    }

    /// Training coordinates of `(t_i, mu_p)` for sample index `i`.
    pub fn training_coords(&self, i: usize, p: usize) -> Result<(usize, Vec<f64>)> {
        let j = self
            .partition
            .locate_sample(i)
            .ok_or_else(|| RomError::invalid(format!("sample index {i} outside the partition")))?;
        let iv = self.partition.intervals()[j];
        let col = p * iv.n_samples() + (i - iv.start);
        Ok((j, self.intervals[j].coords.column(col).iter().copied().collect()))
    }

    /// Relative reconstruction error of every training column through its
    /// interval map, in snapshot column order.
    pub fn training_errors(&self, s: &SnapshotMatrix) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(s.n_cols());
        for p in 0..s.n_p() {
            for i in 0..s.n_t() {
                let (j, z) = self.training_coords(i, p)?;
                let iv = self.partition.intervals()[j];
                let f = self.intervals[j].map.reconstruct(&z, i - iv.start, &self.mean)?;
                let raw = s.raw_column(i, p);
                let num: f64 = f.iter().zip(&raw).map(|(a, b)| (a - b) * (a - b)).sum();
                let den: f64 = raw.iter().map(|a| a * a).sum();
                out.push(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() });
            }
        }
        Ok(out)
    }

    /// Writes the bundle into `dir`, replacing the files of any bundle saved there before.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| RomError::io(dir, e))?;
        remove_stale(dir)?;
        write_matrix(&dir.join("mean.kmat"), self.n_h(), 1, &self.mean)?;
        let mut entries = Vec::with_capacity(self.intervals.len());
        for (j, (iv, m)) in self.partition.intervals().iter().zip(&self.intervals).enumerate() {
            let map_file = match &m.map {
                LatentMap::Pod(b) => {
                    let f = format!("interval_{j:03}.kpod");
                    b.save(&dir.join(&f))?;
                    f
                }
                LatentMap::Autoencoder(a) => {
                    let f = format!("interval_{j:03}.kae");
                    a.save(&dir.join(&f))?;
                    f
                }
            };
            let coords_file = format!("coords_{j:03}.kmat");
            write_matrix(&dir.join(&coords_file), m.coords.nrows(), m.coords.ncols(), m.coords.as_slice())?;
            entries.push(IntervalEntry {
                a: iv.a,
                b: iv.b,
                start: iv.start,
                end: iv.end,
                map: m.map.kind().into(),
                latent_dim: m.map.latent_dim(),
                map_file,
                coords_file,
            });
        }
        let manifest = Manifest {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            method: self.method,
            n_v: self.n_v,
            n_h: self.n_h(),
            times: self.times.clone(),
            params: self.params.clone(),
            mean_file: "mean.kmat".into(),
            intervals: entries,
            provenance: self.provenance.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| RomError::invalid(format!("manifest: {e}")))?;
        let path = dir.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| RomError::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| RomError::io(&path, e))?;
        let bad = |message: String| RomError::Format { offset: 0, message: format!("{}: {message}", path.display()) };
        let m: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if m.format != BUNDLE_FORMAT {
            return Err(bad(format!("not a bundle manifest (format {:?})", m.format)));
        }
        if m.version != BUNDLE_VERSION {
            return Err(RomError::UnsupportedVersion { found: m.version, supported: BUNDLE_VERSION });
        }
        let (rows, _, mean) = read_matrix(&dir.join(&m.mean_file))?;
        if rows != m.n_h || m.n_v == 0 || !m.n_h.is_multiple_of(m.n_v) {
            return Err(bad(format!("mean has {rows} rows, manifest says n_h = {}", m.n_h)));
        }
        let partition = TimePartition::new(
            m.intervals.iter().map(|e| partition::Interval { a: e.a, b: e.b, start: e.start, end: e.end }).collect(),
            &m.times,
        )?;
        let mut intervals = Vec::with_capacity(m.intervals.len());
        for e in &m.intervals {
            let map = match e.map.as_str() {
                "pod" => LatentMap::Pod(PodBasis::load(&dir.join(&e.map_file))?),
                "autoencoder" => LatentMap::Autoencoder(Box::new(AutoencoderModel::load(&dir.join(&e.map_file))?)),
                other => return Err(bad(format!("unknown map type {other:?}"))),
            };
            let (r, c, data) = read_matrix(&dir.join(&e.coords_file))?;
            if r != map.latent_dim() || r != e.latent_dim || c != (e.end - e.start) * m.params.len() {
                return Err(bad(format!("coordinates {} are {r} x {c}, expected {} x {}", e.coords_file, e.latent_dim, (e.end - e.start) * m.params.len())));
            }
            intervals.push(IntervalModel { map, coords: DMatrix::from_vec(r, c, data) });
        }
        Ok(RomBundle {
            method: m.method,
            partition,
            intervals,
            mean,
            times: m.times,
            params: m.params,
            n_v: m.n_v,
            provenance: m.provenance,
        })
    }
}

// Files left by an earlier bundle with more intervals would otherwise linger.
fn remove_stale(dir: &Path) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| RomError::io(dir, e))? {
        let path = entry.map_err(|e| RomError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ours = (name.starts_with("interval_") && (name.ends_with(".kpod") || name.ends_with(".kae")))
            || (name.starts_with("coords_") && name.ends_with(".kmat"));
        if ours {
            std::fs::remove_file(&path).map_err(|e| RomError::io(&path, e))?;
        }
    }
    Ok(())
}
