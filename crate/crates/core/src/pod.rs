//! Proper orthogonal decomposition of snapshot slices.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter};
use crate::error::{check_dim, Result, RomError};
use crate::linalg::{self, ColumnBlocks};
use crate::snapshot::{SnapshotMatrix, SnapshotSlice};

const MAGIC: &[u8; 4] = b"KPOD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    /// Smallest `r` whose discarded energy is at most `tol^2` of the total.
    #[default]
    Energy,
    /// Smallest `r` with `sigma_{r+1} / sigma_1 <= tol`.
    Spectral,
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(RomError::invalid(format!("POD tolerance must lie in (0, 1), got {tol}")))
    }
}

/// Rank selected by `rule` from nonincreasing singular values.
pub fn truncation_rank(sigma: &[f64], tol: f64, rule: TruncationRule) -> usize {
    let s = sigma.len();
    if s == 0 || sigma[0] <= 0.0 {
        return 0;
    }
    match rule {
        TruncationRule::Energy => {
            // tail[r] = sum_{i >= r} sigma_i^2, accumulated from the small end
            let mut tail = vec![0.0; s + 1];
            for i in (0..s).rev() {
                tail[i] = tail[i + 1] + sigma[i] * sigma[i];
            }
            let budget = tol * tol * tail[0];
            (0..=s).find(|&r| tail[r] <= budget).unwrap_or(s)
        }
        TruncationRule::Spectral => (1..s).find(|&r| sigma[r] / sigma[0] <= tol).unwrap_or(s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    rule: TruncationRule,
    tol: f64,
}

/// Thin POD of the given columns truncated by `rule`.
pub fn build_pod(columns: &ColumnBlocks, tol: f64, rule: TruncationRule) -> Result<PodBasis> {
    check_tol(tol)?;
    if columns.cols() == 0 {
        return Err(RomError::invalid("POD of an empty matrix"));
    }
    let svd = linalg::left_svd(columns, |s| truncation_rank(s, tol, rule))?;
    Ok(PodBasis { u: svd.u, sigma: svd.sigma, rule, tol })
}

/// POD rank of the columns without forming the basis.
pub fn pod_rank(columns: &ColumnBlocks, tol: f64, rule: TruncationRule) -> Result<usize> {
    check_tol(tol)?;
    Ok(truncation_rank(&linalg::singular_values(columns)?, tol, rule))
}

impl PodBasis {
    pub fn from_parts(u: DMatrix<f64>, sigma: Vec<f64>, rule: TruncationRule, tol: f64) -> Result<Self> {
        if u.ncols() > sigma.len() {
            return Err(RomError::invalid("basis wider than the singular value list"));
        }
        Ok(PodBasis { u, sigma, rule, tol })
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_h(&self) -> usize {
        self.u.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rule(&self) -> TruncationRule {
        self.rule
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// `c = U^T (column - mean)`.
    pub fn project(&self, column: &[f64], mean: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_h(), column.len())?;
        check_dim(self.n_h(), mean.len())?;
        Ok(self
            .u
            .column_iter()
            .map(|u| u.iter().zip(column).zip(mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect())
    }

    /// `mean + U c`.
    pub fn reconstruct(&self, c: &[f64], mean: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rank(), c.len())?;
        check_dim(self.n_h(), mean.len())?;
        let mut out = mean.to_vec();
        for (u, &ck) in self.u.column_iter().zip(c) {
            for (o, a) in out.iter_mut().zip(u.iter()) {
                *o += ck * a;
            }
        }
        Ok(out)
    }

    /// Coordinates `U^T S` of already-centred columns (r x cols).
    pub fn coordinates(&self, centred: &ColumnBlocks) -> Result<DMatrix<f64>> {
        check_dim(self.n_h(), centred.rows())?;
        Ok(linalg::project_columns(&self.u, centred))
    }

    /// `|| S - U U^T S ||_F^2`, computed from the explicit residual.
    pub fn residual_sq(&self, centred: &ColumnBlocks) -> Result<f64> {
        let c = self.coordinates(centred)?;
        let mut total = 0.0;
        let mut off = 0;
        for b in centred.blocks() {
            let w = b.len() / self.n_h();
            let approx = linalg::expand(&self.u, &c.columns(off, w).into_owned());
            total += b.iter().zip(approx.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            off += w;
        }
        Ok(total)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::create(path, MAGIC, VERSION)?;
        w.u64(self.n_h() as u64)?;
        w.u64(self.rank() as u64)?;
        w.json(&BasisMeta { rule: self.rule, tol: self.tol, sigma: self.sigma.clone() })?;
        w.f64s(self.u.as_slice())?;
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mut r, _) = BinReader::open(path, MAGIC, VERSION)?;
        let n_h = r.len("n_h", 1 << 32)?;
        let rank = r.len("rank", 1 << 32)?;
        let at = r.offset();
        let meta: BasisMeta = r.json()?;
        if rank > meta.sigma.len() {
            return Err(RomError::Format { offset: at, message: "rank exceeds singular value count".into() });
        }
        let u = DMatrix::from_vec(n_h, rank, r.f64s(n_h * rank)?);
        r.expect_end()?;
        Ok(PodBasis { u, sigma: meta.sigma, rule: meta.rule, tol: meta.tol })
    }
}

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    rule: TruncationRule,
    tol: f64,
    sigma: Vec<f64>,
}

/// Outcome of the piecewise reconstruction check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionBound {
    /// `||S - (S_{r_1} | ... | S_{r_k})||_F / ||S||_F`.
    pub relative_error: f64,
    /// Largest per-slice tolerance.
    pub bound: f64,
}

impl PartitionBound {
    pub fn holds(&self) -> bool {
        self.relative_error <= self.bound * (1.0 + 1e-10)
    }
}

/// Global relative error of per-slice POD reconstructions. The slices must
/// tile the sample range of `s` in order.
pub fn verify_partition_bound(s: &SnapshotMatrix, slices: &[SnapshotSlice], bases: &[PodBasis]) -> Result<PartitionBound> {
    if slices.len() != bases.len() || slices.is_empty() {
        return Err(RomError::invalid(format!("{} slices but {} bases", slices.len(), bases.len())));
    }
    let mut next = 0;
    for sl in slices {
        if !std::ptr::eq(sl.matrix(), s) || sl.start() != next {
            return Err(RomError::invalid("slices do not partition the snapshot matrix"));
        }
        next = sl.end();
    }
    if next != s.n_t() {
        return Err(RomError::invalid("slices do not cover every sample time"));
    }
    let total = s.as_blocks().frobenius_sq();
    let mut err = 0.0;
    for (sl, b) in slices.iter().zip(bases) {
        err += b.residual_sq(&sl.blocks())?;
    }
    let bound = bases.iter().map(|b| b.tol).fold(0.0, f64::max);
    let relative_error = if total > 0.0 { (err / total).sqrt() } else { 0.0 };
    Ok(PartitionBound { relative_error, bound })
}
