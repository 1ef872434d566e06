//! Hybrid reduced models: POD where the local rank is small, an autoencoder
//! where it stays high and the interval is already short.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Architecture, AutoencoderModel, TrainConfig};
use crate::bundle::{assemble, DecisionRecord, Method, Provenance, RomBundle};
use crate::error::{Result, RomError};
use crate::partition::{self, AdaptResult, AdaptiveConfig, HighRank, Interval, Mark, RankCache, TimePartition};
use crate::snapshot::SnapshotMatrix;

/// What to do with one interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Pod,
    Refine,
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    /// Shortest interval the refinement may produce.
    pub tau_min: f64,
    pub adaptive: AdaptiveConfig,
    /// Autoencoder latent dimension.
    pub latent: usize,
    /// Channels of the first three conv layers.
    pub hidden: usize,
    pub last_channels: usize,
    pub train: TrainConfig,
    /// Train on every `time_stride`-th snapshot time of an interval.
    pub time_stride: usize,
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        self.adaptive.validate()?;
        if !(self.tau_min > 0.0 && self.tau_min.is_finite()) {
            return Err(RomError::invalid(format!("tau_min must be positive, got {}", self.tau_min)));
        }
        if self.latent == 0 || self.time_stride == 0 {
            return Err(RomError::invalid("latent and time_stride must be positive"));
        }
        self.train.validate()
    }

    pub fn architecture(&self, n_v: usize, n_x: usize) -> Result<Architecture> {
        Architecture::ladder(n_v, self.hidden, self.last_channels, n_x, self.latent)
    }
}

/// POD if the rank is acceptable; otherwise refine unless halving would
/// drop below `tau_min`, in which case use an autoencoder.
pub fn decide(width: f64, rank: usize, r_max: usize, tau_min: f64) -> Decision {
    if rank <= r_max {
        Decision::Pod
    } else if width / 2.0 < tau_min {
        Decision::Autoencoder
    } else {
        Decision::Refine
    }
}

/// The partition and per-interval decisions, without any training.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPlan {
    pub adapt: AdaptResult,
    pub decisions: Vec<DecisionRecord>,
}

impl HybridPlan {
    pub fn partition(&self) -> &TimePartition {
        &self.adapt.partition
    }

    pub fn autoencoder_intervals(&self) -> Vec<usize> {
        (0..self.adapt.marks.len()).filter(|&j| self.adapt.marks[j] == Mark::Autoencoder).collect()
    }
}

pub fn plan_hybrid(
    s: &SnapshotMatrix,
    initial: &TimePartition,
    cfg: &HybridConfig,
    cache: &mut RankCache,
) -> Result<HybridPlan> {
    cfg.validate()?;
    let (r_max, tau) = (cfg.adaptive.r_max, cfg.tau_min);
    let adapt = partition::iterate(s, initial, &cfg.adaptive, cache, |iv: &Interval, r| {
        match decide(iv.width(), r, r_max, tau) {
            Decision::Autoencoder => HighRank::Autoencoder,
            _ => HighRank::Split,
        }
    })?;
    let decisions = adapt
        .partition
        .intervals()
        .iter()
        .zip(&adapt.ranks)
        .zip(&adapt.marks)
        .map(|((iv, &rank), mark)| {
            let (map, note) = match mark {
                Mark::Autoencoder => ("autoencoder", format!("rank {rank} > {r_max} and width/2 = {} < {tau}", iv.width() / 2.0)),
                Mark::Frozen => ("pod", format!("rank {rank} > {r_max} but too few samples to split")),
                Mark::None if rank > r_max => ("pod", format!("rank {rank} > {r_max}, iteration stopped ({:?})", adapt.status)),
                Mark::None => ("pod", format!("rank {rank} <= {r_max}")),
            };
            DecisionRecord { a: iv.a, b: iv.b, rank, map: map.into(), note }
        })
        .collect();
    Ok(HybridPlan { adapt, decisions })
}

/// Plans the partition, trains one autoencoder per flagged interval and
/// builds POD bases everywhere else. `on_epoch(interval, epoch, loss, lr)`
/// reports training progress.
pub fn build_hybrid(
    s: &SnapshotMatrix,
    initial: &TimePartition,
    cfg: &HybridConfig,
    cache: &mut RankCache,
    mut on_epoch: impl FnMut(usize, usize, f64, f64),
) -> Result<RomBundle> {
    let plan = plan_hybrid(s, initial, cfg, cache)?;
    let arch = cfg.architecture(s.n_v(), s.n_x())?;
    let ae = plan.autoencoder_intervals();
    let intervals = plan.partition().intervals().to_vec();
    let prov = Provenance {
        seeds: ae.iter().map(|_| cfg.train.seed).collect(),
        decisions: plan.decisions.clone(),
        adapt: Some(plan.adapt.clone()),
        ..Provenance::default()
    };
    let train = |j: usize| -> Result<Option<AutoencoderModel>> {
        if !ae.contains(&j) {
            return Ok(None);
        }
        let slice = s.slice_indices(intervals[j].start, intervals[j].end)?;
        let (model, _) =
            AutoencoderModel::fit(&slice, arch.clone(), &cfg.train, cfg.time_stride, |e, l, lr| on_epoch(j, e, l, lr))?;
        Ok(Some(model))
    };
    assemble(s, Method::Hybrid, plan.adapt.partition.clone(), cfg.adaptive.tol, cfg.adaptive.rule, train, prov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_rule() {
        assert_eq!(decide(25.0, 15, 15, 6.25), Decision::Pod);
        assert_eq!(decide(25.0, 16, 15, 6.25), Decision::Refine);
        assert_eq!(decide(12.5, 16, 15, 6.25), Decision::Refine);
        assert_eq!(decide(6.25, 16, 15, 6.25), Decision::Autoencoder);
        assert_eq!(decide(10.0, 16, 15, 10.0), Decision::Autoencoder);
        assert_eq!(decide(1.0, 3, 15, 10.0), Decision::Pod);
    }
}
