//! End-to-end workflow steps shared by the command-line tool and examples.

use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{build_adaptive_bundle, build_pod_bundle, build_uniform_bundle, RomBundle};
use crate::config::{MethodName, RunConfig};
use crate::error::{Result, RomError};
use crate::hybrid::build_hybrid;
use crate::online::{evaluate, write_text, PredictionReport, Predictor, TestCase};
use crate::partition::{uniform_partition, RankCache};
use crate::snapshot::{generate_with, GenerateOptions, SnapshotMatrix};
use crate::svg::{LineChart, Series};

pub const CONFIG_HASH: &str = "config_hash";
pub const SNAPSHOT_HASH: &str = "snapshot_hash";

/// Hash of everything the snapshot matrix depends on.
pub fn snapshot_hash(cfg: &RunConfig) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        problem: &'a crate::problem::ProblemSpec,
        integrator: crate::fom::TimeIntegrator,
        train_params: &'a [Vec<f64>],
        sample_times: &'a [f64],
    }
    let key = Key {
        problem: &cfg.problem,
        integrator: cfg.integrator,
        train_params: &cfg.train_params,
        sample_times: &cfg.sample_times,
    };
    let json = serde_json::to_vec(&key).expect("key serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| RomError::io(p, e)),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    config_hash: String,
    snapshot_hash: String,
    code_version: String,
    seconds: f64,
    n_h: usize,
    n_t: usize,
    n_p: usize,
}

/// Runs the full-order model at every training parameter and writes the
/// snapshot file plus a JSON sidecar next to it.
pub fn run_snapshots(cfg: &RunConfig) -> Result<SnapshotMatrix> {
    let start = Instant::now();
    let opts = GenerateOptions { threads: cfg.threads, integrator: cfg.integrator };
    let mut s = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts)?;
    let seconds = start.elapsed().as_secs_f64();
    s.set_provenance(CONFIG_HASH, cfg.hash());
    s.set_provenance(SNAPSHOT_HASH, snapshot_hash(cfg));
    s.set_provenance("code_version", env!("CARGO_PKG_VERSION"));
    s.set_provenance("problem", cfg.problem.name.clone());
    s.set_provenance("seconds", format!("{seconds:.3}"));
    ensure_parent(&cfg.io.snapshots)?;
    s.save(&cfg.io.snapshots)?;
    let side = Sidecar {
        config_hash: cfg.hash(),
        snapshot_hash: snapshot_hash(cfg),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seconds,
        n_h: s.n_h(),
        n_t: s.n_t(),
        n_p: s.n_p(),
    };
    let path = sidecar_path(&cfg.io.snapshots);
    write_text(&path, &serde_json::to_string_pretty(&side).expect("sidecar serializes"))?;
    Ok(s)
}

pub fn sidecar_path(snapshots: &Path) -> PathBuf {
    let mut p = snapshots.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Loads the snapshot file, refusing one generated from a different
/// problem or sampling unless `force` is set.
pub fn load_snapshots(cfg: &RunConfig, force: bool) -> Result<SnapshotMatrix> {
    let s = SnapshotMatrix::load(&cfg.io.snapshots)?;
    check_hash("snapshot file", s.provenance().get(SNAPSHOT_HASH), &snapshot_hash(cfg), force)?;
    Ok(s)
}

fn check_hash(what: &str, found: Option<&String>, expected: &str, force: bool) -> Result<()> {
    match found {
        Some(h) if h != expected && !force => Err(RomError::Config(vec![format!(
            "{what} was produced with a different problem/sampling configuration ({} vs {}); pass --force to use it anyway",
            &h[..h.len().min(12)],
            &expected[..12]
        )])),
        _ => Ok(()),
    }
}

/// Builds the configured reduced model and writes it to `cfg.io.bundle`.
/// `log` receives progress lines.
pub fn run_build(cfg: &RunConfig, s: &SnapshotMatrix, log: &mut dyn FnMut(&str)) -> Result<RomBundle> {
    let rom = &cfg.rom;
    let t_final = *s.times().last().ok_or_else(|| RomError::invalid("empty snapshot matrix"))?;
    let mut cache = RankCache::new();
    let mut bundle = match rom.method {
        MethodName::Pod => build_pod_bundle(s, rom.tol, rom.rule)?,
        MethodName::Uniform => build_uniform_bundle(s, rom.k, rom.tol, rom.rule)?,
        MethodName::Adaptive => {
            let initial = uniform_partition(t_final, rom.k, s.times())?;
            build_adaptive_bundle(s, &initial, &rom.adaptive(), &mut cache)?
        }
        MethodName::Hybrid => {
            let initial = uniform_partition(t_final, rom.k, s.times())?;
            let mut last = Instant::now();
            build_hybrid(s, &initial, &cfg.hybrid(), &mut cache, |j, epoch, loss, lr| {
                if epoch == 0 || last.elapsed().as_secs() >= 30 {
                    last = Instant::now();
                    log(&format!("  interval {j}: epoch {epoch} loss {loss:.4e} lr {lr:.2e}"));
                }
            })?
        }
    };
    bundle.provenance.config_hash = Some(cfg.hash());
    bundle.provenance.notes.insert(SNAPSHOT_HASH.into(), snapshot_hash(cfg));
    bundle.provenance.notes.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
    bundle.save(&cfg.io.bundle)?;
    Ok(bundle)
}

/// Partition, ranks and (for adaptive runs) the per-pass evolution.
pub fn build_summary(bundle: &RomBundle) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "method: {}", bundle.method);
    let _ = writeln!(o, "{:>4} {:>10} {:>10} {:>8} {:>12}", "#", "a", "b", "latent", "map");
    for (j, (iv, m)) in bundle.partition.intervals().iter().zip(&bundle.intervals).enumerate() {
        let _ = writeln!(o, "{:>4} {:>10.5} {:>10.5} {:>8} {:>12}", j, iv.a, iv.b, m.map.latent_dim(), m.map.kind());
    }
    if let Some(a) = &bundle.provenance.adapt {
        let _ = writeln!(o, "adaptive: {:?} after {} pass(es)", a.status, a.iterations);
        for (k, h) in a.history.iter().enumerate() {
            let ranks: Vec<String> = h.ranks.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(o, "  pass {k}: ranks [{}]", ranks.join(", "));
        }
    }
    for d in &bundle.provenance.decisions {
        if !d.note.is_empty() {
            let _ = writeln!(o, "  ({}, {}]: {} ({})", short(d.a), short(d.b), d.map, d.note);
        }
    }
    o
}

/// Full-order reference states at every test parameter and test time.
pub fn reference_cases(cfg: &RunConfig) -> Result<Vec<TestCase>> {
    if cfg.test_params.is_empty() || cfg.test_times.is_empty() {
        return Ok(Vec::new());
    }
    let opts = GenerateOptions { threads: cfg.threads, integrator: cfg.integrator };
    let r = generate_with(&cfg.problem, &cfg.test_params, &cfg.test_times, opts)?;
    let mut cases = Vec::with_capacity(r.n_cols());
    for (p, mu) in cfg.test_params.iter().enumerate() {
        for (i, &t) in cfg.test_times.iter().enumerate() {
            cases.push(TestCase { t, mu: mu.clone(), reference: r.raw_column(i, p) });
        }
    }
    Ok(cases)
}

/// Evaluates the bundle on the configured test set and writes
/// `cases.csv`, `summary.csv` and `report.json` into `cfg.io.report`.
pub fn run_evaluate(cfg: &RunConfig, bundle: &RomBundle, force: bool) -> Result<PredictionReport> {
    check_hash("bundle", bundle.provenance.notes.get(SNAPSHOT_HASH), &snapshot_hash(cfg), force)?;
    let cases = reference_cases(cfg)?;
    let report = evaluate(bundle, cfg.rom.interpolation, &cases)?;
    let dir = &cfg.io.report;
    std::fs::create_dir_all(dir).map_err(|e| RomError::io(dir, e))?;
    report.write_rows_csv(&dir.join("cases.csv"))?;
    report.write_summary_csv(&dir.join("summary.csv"))?;
    #[derive(Serialize)]
    struct Out<'a> {
        config_hash: String,
        bundle_config_hash: Option<&'a String>,
        report: &'a PredictionReport,
    }
    let out = Out { config_hash: cfg.hash(), bundle_config_hash: bundle.provenance.config_hash.as_ref(), report: &report };
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&out).expect("report serializes"))?;
    Ok(report)
}

/// Predicts `f` and `rho` at one point and writes `x,rho` rows to `out`.
pub fn run_predict(cfg: &RunConfig, bundle: &RomBundle, t: f64, mu: &[f64], out: &Path) -> Result<Vec<f64>> {
    let pred = Predictor::new(bundle, cfg.rom.interpolation)?;
    let p = pred.predict(t, mu)?;
    let rho = pred.density(&p.f)?;
    let x = cfg.problem.mesh()?.node_coordinates();
    let mut text = String::from("x,rho\n");
    for (x, r) in x.iter().zip(&rho) {
        let _ = writeln!(text, "{x},{r:e}");
    }
    ensure_parent(out)?;
    write_text(out, &text)?;
    Ok(rho)
}

/// Charts from a bundle and (if present) its evaluation report.
pub fn run_report(cfg: &RunConfig, bundle: &RomBundle) -> Result<Vec<PathBuf>> {
    let dir = &cfg.io.report;
    std::fs::create_dir_all(dir).map_err(|e| RomError::io(dir, e))?;
    let mut written = Vec::new();
    let dims: Vec<(f64, f64)> = bundle
        .partition
        .intervals()
        .iter()
        .zip(bundle.latent_dims())
        .flat_map(|(iv, r)| [(iv.a, r as f64), (iv.b, r as f64)])
        .collect();
    let chart = LineChart {
        title: format!("latent dimension per interval ({})", bundle.method),
        x_label: "t".into(),
        y_label: "latent dimension".into(),
        log_y: false,
        series: vec![Series { name: bundle.method.to_string(), points: dims, step: false }],
    };
    let path = dir.join("latent_dims.svg");
    write_text(&path, &chart.render())?;
    written.push(path);

    let report_path = dir.join("report.json");
    if report_path.exists() {
        #[derive(Deserialize)]
        struct In {
            report: PredictionReport,
        }
        let text = std::fs::read_to_string(&report_path).map_err(|e| RomError::io(&report_path, e))?;
        let r: In = serde_json::from_str(&text)
            .map_err(|e| RomError::Format { offset: 0, message: format!("{}: {e}", report_path.display()) })?;
        let mut series: Vec<Series> = Vec::new();
        for row in &r.report.rows {
            let name = format!("mu = {:.4?}", row.mu);
            if series.last().is_none_or(|s| s.name != name) {
                series.push(Series { name, points: Vec::new(), step: false });
            }
            if let Some(e) = row.e_f {
                series.last_mut().expect("pushed").points.push((row.t, e));
            }
        }
        let chart = LineChart {
            title: format!("relative error e_f ({})", r.report.method),
            x_label: "t".into(),
            y_label: "e_f".into(),
            log_y: true,
            series,
        };
        let path = dir.join("errors.svg");
        write_text(&path, &chart.render())?;
        written.push(path);
    }
    Ok(written)
}

// Interval ends come from repeated halving, so print them without the last-bit noise.
fn short(x: f64) -> String {
    let s = format!("{x:.9}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
