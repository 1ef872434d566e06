//! Declarative run configuration (TOML) with built-in presets.
//!
//! Every key is optional; missing values come from the preset. Unknown keys
//! and type errors anywhere in the file are reported together.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{Schedule, TrainConfig};
use crate::error::{Result, RomError};
use crate::fom::TimeIntegrator;
use crate::online::InterpolationKind;
use crate::partition::AdaptiveConfig;
use crate::pod::TruncationRule;
use crate::problem::{self, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Example1,
    Example2,
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(Preset::Example1),
            "example2" => Ok(Preset::Example2),
            "custom" => Ok(Preset::Custom),
            _ => Err(RomError::Config(vec![format!("unknown preset {s:?} (expected example1, example2 or custom)")])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Pod,
    Uniform,
    Adaptive,
    Hybrid,
}

impl std::str::FromStr for MethodName {
    type Err = RomError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pod" => Ok(MethodName::Pod),
            "uniform" => Ok(MethodName::Uniform),
            "adaptive" => Ok(MethodName::Adaptive),
            "hybrid" => Ok(MethodName::Hybrid),
            _ => Err(RomError::Config(vec![format!("unknown method {s:?} (expected pod, uniform, adaptive or hybrid)")])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    Constant,
    Plateau,
    Step,
}

// Raw file layout: everything optional.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemBlock {
    preset: Option<Preset>,
    custom: Option<ProblemSpec>,
    integrator: Option<TimeIntegrator>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingBlock {
    train_params: Option<Vec<Vec<f64>>>,
    sample_times: Option<Vec<f64>>,
    time_stride: Option<usize>,
    test_params: Option<Vec<Vec<f64>>>,
    test_count: Option<usize>,
    seed: Option<u64>,
    test_time_stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AeBlock {
    latent: Option<usize>,
    hidden: Option<usize>,
    last_channels: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    schedule: Option<ScheduleName>,
    patience: Option<usize>,
    factor: Option<f64>,
    min_lr: Option<f64>,
    step: Option<usize>,
    step_until: Option<usize>,
    final_lr: Option<f64>,
    seed: Option<u64>,
    time_stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RomBlock {
    method: Option<MethodName>,
    tol: Option<f64>,
    rule: Option<TruncationRule>,
    k: Option<usize>,
    r_max: Option<usize>,
    r_min: Option<usize>,
    max_iter: Option<usize>,
    equilibrium_detection: Option<bool>,
    tau_min: Option<f64>,
    interpolation: Option<InterpolationKind>,
    autoencoder: Option<toml::Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBlock {
    threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IoBlock {
    out: Option<PathBuf>,
    snapshots: Option<PathBuf>,
    bundle: Option<PathBuf>,
    report: Option<PathBuf>,
}

// Resolved configuration.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSettings {
    pub latent: usize,
    pub hidden: usize,
    pub last_channels: usize,
    pub train: TrainConfig,
    pub time_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomSettings {
    pub method: MethodName,
    pub tol: f64,
    pub rule: TruncationRule,
    /// Interval count for `uniform`, initial interval count for `adaptive`
    /// and `hybrid`.
    pub k: usize,
    pub r_max: usize,
    pub r_min: usize,
    pub max_iter: usize,
    pub equilibrium_detection: bool,
    pub tau_min: f64,
    pub interpolation: InterpolationKind,
    pub autoencoder: AeSettings,
}

impl RomSettings {
    pub fn adaptive(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            r_max: self.r_max,
            r_min: self.r_min,
            max_iter: self.max_iter,
            tol: self.tol,
            rule: self.rule,
            equilibrium_detection: self.equilibrium_detection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoPaths {
    pub out: PathBuf,
    pub snapshots: PathBuf,
    pub bundle: PathBuf,
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Preset,
    pub problem: ProblemSpec,
    pub integrator: TimeIntegrator,
    pub train_params: Vec<Vec<f64>>,
    pub sample_times: Vec<f64>,
    pub test_params: Vec<Vec<f64>>,
    pub test_times: Vec<f64>,
    pub seed: u64,
    pub rom: RomSettings,
    pub threads: usize,
    pub io: IoPaths,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub method: Option<MethodName>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

const SECTIONS: &[&str] = &["problem", "sampling", "rom", "run", "io"];

fn section<T: DeserializeOwned + Default>(table: &toml::Table, name: &str, errs: &mut Vec<String>) -> Option<T> {
    match table.get(name) {
        None => Some(T::default()),
        Some(v) => match v.clone().try_into::<T>() {
            Ok(t) => Some(t),
            Err(e) => {
                errs.push(format!("[{name}] {}", e.message().trim()));
                None
            }
        },
    }
}

fn random_params(ranges: &[[f64; 2]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| ranges.iter().map(|r| r[0] + (r[1] - r[0]) * rng.random::<f64>()).collect()).collect()
}

impl RunConfig {
    /// The preset alone.
    pub fn preset(preset: Preset) -> Result<Self> {
        Self::from_toml_str("", &Overrides { preset: Some(preset), ..Overrides::default() })
    }

    pub fn from_file(path: &Path, over: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RomError::io(path, e))?;
        Self::from_toml_str(&text, over)
    }

    pub fn from_toml_str(text: &str, over: &Overrides) -> Result<Self> {
        let table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| RomError::Config(vec![e.message().trim().to_string()]))?;
        let mut errs = Vec::new();
        for key in table.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                errs.push(format!("unknown section [{key}] (expected one of {})", SECTIONS.join(", ")));
            }
        }
        let problem: Option<ProblemBlock> = section(&table, "problem", &mut errs);
        let sampling: Option<SamplingBlock> = section(&table, "sampling", &mut errs);
        let rom: Option<RomBlock> = section(&table, "rom", &mut errs);
        let run: Option<RunBlock> = section(&table, "run", &mut errs);
        let io: Option<IoBlock> = section(&table, "io", &mut errs);
        let ae: Option<AeBlock> = match rom.as_ref().and_then(|r| r.autoencoder.clone()) {
            None => Some(AeBlock::default()),
            Some(v) => v.try_into().map_err(|e: toml::de::Error| errs.push(format!("[rom.autoencoder] {}", e.message().trim()))).ok(),
        };
        let (Some(problem), Some(sampling), Some(rom), Some(run), Some(io), Some(ae)) = (problem, sampling, rom, run, io, ae)
        else {
            return Err(RomError::Config(errs));
        };
        if !errs.is_empty() {
            return Err(RomError::Config(errs));
        }
        let cfg = resolve(problem, sampling, rom, ae, run, io, over, &mut errs);
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(RomError::Config(errs))
        }
    }

    /// SHA-256 of the resolved configuration, recorded in every output.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hybrid(&self) -> crate::hybrid::HybridConfig {
        let ae = &self.rom.autoencoder;
        crate::hybrid::HybridConfig {
            tau_min: self.rom.tau_min,
            adaptive: self.rom.adaptive(),
            latent: ae.latent,
            hidden: ae.hidden,
            last_channels: ae.last_channels,
            train: ae.train,
            time_stride: ae.time_stride,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn resolve(
    p: ProblemBlock,
    s: SamplingBlock,
    r: RomBlock,
    a: AeBlock,
    run: RunBlock,
    io: IoBlock,
    over: &Overrides,
    errs: &mut Vec<String>,
) -> RunConfig {
    let preset = over.preset.or(p.preset).unwrap_or(Preset::Example1);
    let problem = match (preset, p.custom) {
        (Preset::Custom, Some(spec)) => spec,
        (Preset::Custom, None) => {
            errs.push("[problem] preset = \"custom\" needs a [problem.custom] table".into());
            ProblemSpec::example1()
        }
        (_, Some(_)) => {
            errs.push("[problem] a [problem.custom] table requires preset = \"custom\"".into());
            ProblemSpec::example1()
        }
        (Preset::Example1, None) => ProblemSpec::example1(),
        (Preset::Example2, None) => ProblemSpec::example2(),
    };
    if let Err(RomError::Config(e)) = problem.validate() {
        errs.extend(e.into_iter().map(|m| format!("[problem] {m}")));
    }
    let ex2 = preset == Preset::Example2;

    let mut sample_times = s.sample_times.unwrap_or_else(|| match preset {
        Preset::Example2 => problem::example2_sample_times(),
        _ if problem.t_final > 0.0 && problem.dt > 0.0 => (1..=problem.n_steps()).map(|k| problem.time_of(k)).collect(),
        _ => Vec::new(),
    });
    match s.time_stride {
        Some(0) => errs.push("[sampling] time_stride must be positive".into()),
        Some(k) => sample_times = sample_times.into_iter().skip(k - 1).step_by(k).collect(),
        None => {}
    }
    if sample_times.is_empty() {
        errs.push("[sampling] no sample times".into());
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) || sample_times.first().is_some_and(|&t| t <= 0.0) {
        errs.push("[sampling] sample_times must be positive and strictly increasing".into());
    }
    if problem.dt > 0.0 && problem.t_final > 0.0 {
        if let Some(bad) = sample_times.iter().find(|&&t| problem.step_of(t).is_err()) {
            errs.push(format!("[sampling] sample time {bad} is not on the time grid"));
        }
    }
    let train_params = s.train_params.unwrap_or_else(|| match preset {
        Preset::Example2 => problem::example2_training_params(),
        _ => problem::example1_training_params(),
    });
    let dim = problem.params.dim();
    if train_params.is_empty() {
        errs.push("[sampling] train_params is empty".into());
    }
    for (what, set) in [("train_params", &train_params), ("test_params", s.test_params.as_ref().unwrap_or(&Vec::new()))] {
        if let Some(bad) = set.iter().find(|m| m.len() != dim) {
            errs.push(format!("[sampling] {what} entry {bad:?} does not have dimension {dim}"));
        }
    }
    let seed = over.seed.or(s.seed).unwrap_or(0);
    let test_count = s.test_count.unwrap_or(if ex2 { 10 } else { 5 });
    let test_params = s.test_params.unwrap_or_else(|| random_params(&problem.params.ranges, test_count, seed));
    let test_times = match s.test_time_stride {
        Some(0) => {
            errs.push("[sampling] test_time_stride must be positive".into());
            Vec::new()
        }
        k => sample_times.iter().copied().skip(k.unwrap_or(1) - 1).step_by(k.unwrap_or(1)).collect(),
    };

    let schedule_name = a.schedule.unwrap_or(if ex2 { ScheduleName::Step } else { ScheduleName::Plateau });
    let schedule = match schedule_name {
        ScheduleName::Constant => Schedule::Constant,
        ScheduleName::Plateau => Schedule::Plateau {
            patience: a.patience.unwrap_or(5),
            factor: a.factor.unwrap_or(0.25),
            threshold: 1e-4,
            min_lr: a.min_lr.unwrap_or(1e-5),
        },
        ScheduleName::Step => Schedule::Step {
            step: a.step.unwrap_or(100),
            factor: a.factor.unwrap_or(0.8),
            until: a.step_until.unwrap_or(1000),
            then: a.final_lr.unwrap_or(1e-5),
        },
    };
    let train = TrainConfig {
        epochs: a.epochs.unwrap_or(2000),
        batch_size: a.batch_size.unwrap_or(32),
        learning_rate: a.learning_rate.unwrap_or(if ex2 { 2e-4 } else { 1e-3 }),
        weight_decay: a.weight_decay.unwrap_or(if ex2 { 1e-7 } else { 0.0 }),
        schedule,
        seed: over.seed.or(a.seed).unwrap_or(0),
        ..TrainConfig::default()
    };
    if let Err(RomError::Config(e)) = train.validate() {
        errs.extend(e.into_iter().map(|m| format!("[rom.autoencoder] {m}")));
    }
    let autoencoder = AeSettings {
        latent: a.latent.unwrap_or(if ex2 { 4 } else { 8 }),
        hidden: a.hidden.unwrap_or(if ex2 { 32 } else { 24 }),
        last_channels: a.last_channels.unwrap_or(if ex2 { 16 } else { 12 }),
        train,
        time_stride: a.time_stride.unwrap_or(if ex2 { 1 } else { 4 }),
    };
    if autoencoder.latent == 0 || autoencoder.hidden == 0 || autoencoder.last_channels == 0 || autoencoder.time_stride == 0
    {
        errs.push("[rom.autoencoder] latent, hidden, last_channels and time_stride must be positive".into());
    }

    let rom = RomSettings {
        method: over.method.or(r.method).unwrap_or(MethodName::Adaptive),
        tol: r.tol.unwrap_or(1e-4),
        rule: r.rule.unwrap_or_default(),
        k: r.k.unwrap_or(4),
        r_max: r.r_max.unwrap_or(if ex2 { 20 } else { 15 }),
        r_min: r.r_min.unwrap_or(if ex2 { 10 } else { 5 }),
        max_iter: r.max_iter.unwrap_or(10),
        equilibrium_detection: r.equilibrium_detection.unwrap_or(true),
        tau_min: r.tau_min.unwrap_or(if ex2 { 10.0 } else { 6.25 }),
        interpolation: r.interpolation.unwrap_or_default(),
        autoencoder,
    };
    if !(rom.tol > 0.0 && rom.tol < 1.0) {
        errs.push(format!("[rom] tol must lie in (0, 1), got {}", rom.tol));
    }
    if rom.k == 0 {
        errs.push("[rom] k must be positive".into());
    }
    if 2 * rom.r_min > rom.r_max {
        errs.push(format!("[rom] need 2 r_min <= r_max, got r_min = {} and r_max = {}", rom.r_min, rom.r_max));
    }
    if !(rom.tau_min > 0.0) {
        errs.push(format!("[rom] tau_min must be positive, got {}", rom.tau_min));
    }

    let threads = over.threads.or(run.threads).unwrap_or(1);
    if threads == 0 {
        errs.push("[run] threads must be positive".into());
    }
    let out = over.out.clone().or(io.out).unwrap_or_else(|| PathBuf::from("runs").join(&problem.name));
    let io = IoPaths {
        snapshots: io.snapshots.unwrap_or_else(|| out.join("snapshots.krom")),
        bundle: io.bundle.unwrap_or_else(|| out.join("bundle")),
        report: io.report.unwrap_or_else(|| out.join("report")),
        out,
    };
    RunConfig {
        preset,
        problem,
        integrator: p.integrator.unwrap_or_default(),
        train_params,
        sample_times,
        test_params,
        test_times,
        seed,
        rom,
        threads,
        io,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_toml_str(text, &Overrides::default())
    }

    #[test]
    fn presets_resolve() {
        let c = RunConfig::preset(Preset::Example1).unwrap();
        assert_eq!(c.train_params.len(), 11);
        assert_eq!(c.sample_times.len(), 2000);
        assert_eq!(c.test_params.len(), 5);
        assert!(c.test_params.iter().all(|m| (4.0..=6.0).contains(&m[0])));
        let c = RunConfig::preset(Preset::Example2).unwrap();
        assert_eq!((c.train_params.len(), c.sample_times.len(), c.rom.r_max), (64, 200, 20));
    }

    #[test]
    fn all_errors_listed() {
        let e = parse("[rom]\ntol = 2.0\nr_min = 9\n[bogus]\nx = 1\n[io]\nwhat = 1\n").unwrap_err();
        let RomError::Config(list) = e else { panic!("{e}") };
        assert!(list.iter().any(|m| m.contains("bogus")), "{list:?}");
        assert!(list.iter().any(|m| m.contains("[io]") && m.contains("what")), "{list:?}");
        let e = parse("[rom]\ntol = 2.0\nr_min = 9\n").unwrap_err();
        let RomError::Config(list) = e else { panic!("{e}") };
        assert_eq!(list.len(), 2, "{list:?}");
    }

    #[test]
    fn overrides_and_hash() {
        let over = Overrides { method: Some(MethodName::Pod), seed: Some(7), ..Overrides::default() };
        let a = RunConfig::from_toml_str("[rom]\nmethod = \"hybrid\"\n", &over).unwrap();
        assert_eq!(a.rom.method, MethodName::Pod);
        assert_eq!(a.rom.autoencoder.train.seed, 7);
        let b = parse("[rom]\nmethod = \"pod\"\n[sampling]\nseed = 7\n[rom.autoencoder]\nseed = 7\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), RunConfig::preset(Preset::Example1).unwrap().hash());
    }

    #[test]
    fn custom_problem_round_trips() {
        let spec = ProblemSpec::example1();
        let mut problem = toml::Table::new();
        problem.insert("preset".into(), "custom".into());
        problem.insert("custom".into(), toml::Value::try_from(&spec).unwrap());
        let mut doc = toml::Table::new();
        doc.insert("problem".into(), problem.into());
        let text = toml::to_string(&doc).unwrap();
        let c = parse(&text).unwrap();
        assert_eq!(c.problem, spec);
        assert!(parse("[problem]\npreset = \"custom\"\n").is_err());
    }
}
