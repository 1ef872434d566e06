//! One-dimensional convolutional autoencoder with exact backpropagation,
//! Adam training and per-column `[-1, 1]` normalisation.

mod layers;
mod network;
mod normalize;
mod train;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use network::{Architecture, Network};
pub use normalize::Normalization;
pub use train::{train, train_with, Schedule, TrainConfig, TrainReport};

use crate::binio::{BinReader, BinWriter};
use crate::error::{check_dim, Result, RomError};
use crate::snapshot::SnapshotSlice;

/// Bias-free strided convolution of `x` (`c_in x (batch * len)`,
/// channel-major) with `w` laid out `(c_out, c_in, kernel)`. Output is
/// `c_out x (batch * len_out)`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d(
    x: &[f64],
    w: &[f64],
    c_in: usize,
    c_out: usize,
    batch: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<f64>> {
    let g = layers::ConvGeom { kernel, stride, padding };
    check_dim(c_in * batch * len, x.len())?;
    check_dim(c_out * c_in * kernel, w.len())?;
    let mut cols = Vec::new();
    Ok(layers::conv_forward(x, w, &vec![0.0; c_out], c_in, c_out, batch, len, g, &mut cols))
}

/// Adjoint of [`conv1d`] for the same weight buffer: maps
/// `c_out x (batch * len_out)` back to `c_in x (batch * len)`.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_transpose(
    y: &[f64],
    w: &[f64],
    c_in: usize,
    c_out: usize,
    batch: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<f64>> {
    let g = layers::ConvGeom { kernel, stride, padding };
    check_dim(c_out * batch * g.out_len(len), y.len())?;
    check_dim(c_out * c_in * kernel, w.len())?;
    Ok(layers::convt_forward(y, w, &vec![0.0; c_in], c_out, c_in, batch, len, g))
}

const MAGIC: &[u8; 4] = b"KAE1";
const VERSION: u32 = 1;

/// Which training samples were used and how training went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    pub time_stride: usize,
    pub n_samples: usize,
    pub final_loss: f64,
    pub epochs: usize,
}

/// A trained network with the normalisation of the slice it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub network: Network,
    pub normalization: Normalization,
    pub training: Option<TrainingRecord>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    architecture: Architecture,
    n_params: usize,
    training: Option<TrainingRecord>,
    n_v: usize,
    n_x: usize,
    times: Vec<f64>,
}

impl AutoencoderModel {
    /// Trains a fresh network on the columns of `slice`, using every
    /// `time_stride`-th sample time for the optimisation.
    pub fn fit(
        slice: &SnapshotSlice,
        arch: Architecture,
        cfg: &TrainConfig,
        time_stride: usize,
        on_epoch: impl FnMut(usize, f64, f64),
    ) -> Result<(Self, TrainReport)> {
        let s = slice.matrix();
        if arch.channels[0] != s.n_v() || arch.length != s.n_x() {
            return Err(RomError::invalid(format!(
                "architecture expects ({}, {}) samples, snapshots are ({}, {})",
                arch.channels[0],
                arch.length,
                s.n_v(),
                s.n_x()
            )));
        }
        if time_stride == 0 {
            return Err(RomError::invalid("time_stride must be positive"));
        }
        let norm = Normalization::fit(slice)?;
        let all = norm.samples(slice)?;
        let n_h = s.n_h();
        let n_t = slice.n_t();
        let picked: Vec<f64> = all
            .chunks_exact(n_h)
            .enumerate()
            .filter(|(k, _)| (k % n_t).is_multiple_of(time_stride))
            .flat_map(|(_, c)| c.iter().copied())
            .collect();
        let mut network = Network::new(arch, cfg.seed)?;
        let report = train_with(&mut network, &picked, cfg, on_epoch)?;
        let record = TrainingRecord {
            config: *cfg,
            time_stride,
            n_samples: picked.len() / n_h,
            final_loss: report.loss_history.last().copied().unwrap_or(f64::NAN),
            epochs: report.loss_history.len(),
        };
        Ok((AutoencoderModel { network, normalization: norm, training: Some(record) }, report))
    }

    pub fn latent_dim(&self) -> usize {
        self.network.architecture().latent
    }

    /// Latent coordinates (`latent x columns`) of every column of `slice`,
    /// normalised with the stored constants.
    pub fn latent_coordinates(&self, slice: &SnapshotSlice) -> Result<DMatrix<f64>> {
        let x = self.normalization.samples(slice)?;
        let z = self.network.encode(&x)?;
        let r = self.latent_dim();
        Ok(DMatrix::from_column_slice(r, z.len() / r, &z))
    }

    /// Centred full-order column for latent `z` at local time index `i`.
    pub fn reconstruct_centred(&self, z: &[f64], i: usize) -> Result<Vec<f64>> {
        check_dim(self.latent_dim(), z.len())?;
        let mut col = self.network.decode(z)?;
        self.normalization.invert(i, &mut col)?;
        Ok(col)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let d = Descriptor {
            architecture: self.network.architecture().clone(),
            n_params: self.network.n_params(),
            training: self.training.clone(),
            n_v: self.normalization.n_v,
            n_x: self.normalization.n_x,
            times: self.normalization.times.clone(),
        };
        let mut w = BinWriter::create(path, MAGIC, VERSION)?;
        w.json(&d)?;
        w.f64s(self.network.params())?;
        w.f64s(&self.normalization.min)?;
        w.f64s(&self.normalization.max)?;
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (mut r, _) = BinReader::open(path, MAGIC, VERSION)?;
        let at = r.offset();
        let d: Descriptor = r.json()?;
        let fmt = |message: String| RomError::Format { offset: at, message };
        d.architecture.validate().map_err(|e| fmt(e.to_string()))?;
        if d.n_params != d.architecture.n_params() {
            return Err(fmt(format!("{} parameters recorded, architecture has {}", d.n_params, d.architecture.n_params())));
        }
        if d.n_v != d.architecture.channels[0] || d.n_x != d.architecture.length {
            return Err(fmt("normalisation shape disagrees with the architecture".into()));
        }
        let params = r.f64s(d.n_params)?;
        let k = d.n_v * d.times.len();
        let min = r.f64s(k)?;
        let max = r.f64s(k)?;
        r.expect_end()?;
        Ok(AutoencoderModel {
            network: Network::from_params(d.architecture, params)?,
            normalization: Normalization { n_v: d.n_v, n_x: d.n_x, times: d.times, min, max },
            training: d.training,
        })
    }
}
