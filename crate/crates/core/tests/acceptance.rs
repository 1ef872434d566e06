//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion to
//! stderr and exits non-zero if any criterion fails.
//!
//! Positional arguments select criteria (`cargo test --test acceptance -- 1 5 9`).

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use kinetic_rom::bundle::{build_adaptive_bundle, build_pod_bundle, LatentMap};
use kinetic_rom::config::{Overrides, RunConfig};
use kinetic_rom::discretization::{assemble_dg, build_mesh, gauss_legendre, Boundary, CrossSections};
use kinetic_rom::fom::{step_backward_euler, FomSolver, FomState, SourceIteration, TimeIntegrator};
use kinetic_rom::hybrid::plan_hybrid;
use kinetic_rom::online::{evaluate, InterpolationKind, Interpolator, PredictionReport, TestCase};
use kinetic_rom::partition::{adapt, uniform_partition, RankCache};
use kinetic_rom::pipeline::{reference_cases, run_build};
use kinetic_rom::pod::{build_pod, verify_partition_bound, TruncationRule};
use kinetic_rom::problem::{ParamExpr, ParamSpace, Profile, ProblemSpec};
use kinetic_rom::snapshot::{generate_with, GenerateOptions, SnapshotMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> RunConfig {
    RunConfig::from_file(&configs().join(name), &Overrides::default()).expect("shipped config is valid")
}

/// Training snapshots plus reference test states, generated once.
struct Dataset {
    snapshots: SnapshotMatrix,
    cases: Vec<TestCase>,
    seconds: f64,
}

fn dataset(cfg: &RunConfig, with_cases: bool) -> Dataset {
    let start = Instant::now();
    let opts = GenerateOptions { threads: cfg.threads, integrator: cfg.integrator };
    let snapshots = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts).expect("snapshots");
    let cases = if with_cases { reference_cases(cfg).expect("reference states") } else { Vec::new() };
    Dataset { snapshots, cases, seconds: start.elapsed().as_secs_f64() }
}

static EXAMPLE1: OnceLock<Dataset> = OnceLock::new();
static EXAMPLE2: OnceLock<Dataset> = OnceLock::new();

fn example1() -> &'static Dataset {
    EXAMPLE1.get_or_init(|| {
        let d = dataset(&config("example1.toml"), true);
        note(&format!("example 1 data: {} snapshots, {} test cases in {:.1} s", d.snapshots.n_cols(), d.cases.len(), d.seconds));
        d
    })
}

fn example2() -> &'static Dataset {
    EXAMPLE2.get_or_init(|| {
        let d = dataset(&config("example2_hybrid.toml"), false);
        note(&format!("example 2 data: {} snapshots in {:.1} s", d.snapshots.n_cols(), d.seconds));
        d
    })
}

fn note(line: &str) {
    let _ = writeln!(std::io::stderr(), "  {line}");
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() <= budget_s
}

// 1: exact decay under pure absorption, second-order BDF2
fn fom_decay_and_order() -> Outcome {
    let start = Instant::now();
    let (c, dt, n_el, n_v) = (2.0f64, 0.1f64, 20, 8);
    let mesh = build_mesh(0.0, 1.0, n_el).unwrap();
    let quad = gauss_legendre(n_v).unwrap();
    let ops = assemble_dg(&mesh, &quad, &CrossSections::uniform(n_el, 0.0, 1.0).unwrap()).unwrap();
    let g = vec![0.0; ops.n_h()];
    let mut state = FomState::new(vec![c; ops.n_h()], 0.0);
    let mut decay = 0.0f64;
    for n in 1..=40 {
        let exact = c * (1.0 + dt).powi(-n);
        state = step_backward_euler(&state, &ops, &g, Boundary::Inflow { left: exact, right: exact }, dt).unwrap();
        decay = decay.max(state.f.iter().map(|x| (x - exact).abs()).fold(0.0, f64::max));
    }

    let spec = |dt: f64| ProblemSpec {
        name: "smooth".into(),
        domain: [0.0, 1.0],
        n_elements: 40,
        n_velocities: 8,
        sigma_s: Profile::constant(1.0),
        sigma_a: Profile::constant(0.5),
        source: Profile::zero(),
        inflow_left: ParamExpr::Const(0.0),
        inflow_right: ParamExpr::Const(0.0),
        initial: Profile::Gaussian { amplitude: 1.0, center: 0.5, variance: 0.01 },
        t_final: 0.5,
        dt,
        params: ParamSpace { ranges: vec![[0.0, 1.0]] },
    };
    let final_state = |dt: f64| {
        let s = spec(dt);
        let solver = FomSolver::new(&s, &[0.5], TimeIntegrator::Bdf2)
            .unwrap()
            .with_source_iteration(SourceIteration { tol: 1e-15, max_iter: 5000 });
        let mut out = Vec::new();
        solver
            .march(&[s.n_steps()], |_, st| {
                out = st.f.clone();
                Ok(())
            })
            .unwrap();
        out
    };
    let runs: Vec<Vec<f64>> = [0.02, 0.01, 0.005, 0.0025].iter().map(|&dt| final_state(dt)).collect();
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let e: Vec<f64> = runs.windows(2).map(|w| diff(&w[0], &w[1])).collect();
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = *orders.last().unwrap();
    let elapsed = start.elapsed();
    outcome(
        decay <= 1e-12 && order >= 1.9 && within(elapsed, 10.0),
        format!("max decay error {decay:.2e} (<= 1e-12), BDF2 observed orders {orders:.3?} (last >= 1.9), {elapsed:.1?}"),
    )
}

// 2: piecewise POD error never exceeds the slice tolerance
fn partition_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_ratio = 0.0f64;
    let mut failures = 0;
    for trial in 0..100u64 {
        let (n_h, n_t, n_p) = (rng.random_range(3..60), rng.random_range(2..40), rng.random_range(1..5));
        let k = rng.random_range(1..8);
        let tol = rng.random_range(0.005..0.6);
        let s = common::random_snapshots(n_h, n_t, n_p, 1000 + trial);
        let cuts = common::random_cuts(n_t, k, &mut rng);
        let slices: Vec<_> = cuts.windows(2).map(|w| s.slice_indices(w[0], w[1]).unwrap()).collect();
        let bases: Vec<_> = slices.iter().map(|sl| build_pod(&sl.blocks(), tol, TruncationRule::Energy).unwrap()).collect();
        let b = verify_partition_bound(&s, &slices, &bases).unwrap();
        worst_ratio = worst_ratio.max(b.relative_error / b.bound);
        failures += usize::from(!b.holds());
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && within(elapsed, 30.0),
        format!("{failures}/100 violations, worst error/tolerance {worst_ratio:.3}, {elapsed:.1?}"),
    )
}

// 3: classical POD on example 1
fn example1_pod() -> Outcome {
    let start = Instant::now();
    let cfg = config("example1.toml");
    let d = example1();
    let bundle = build_pod_bundle(&d.snapshots, cfg.rom.tol, TruncationRule::Energy).unwrap();
    let r = evaluate(&bundle, cfg.rom.interpolation, &d.cases).unwrap();
    let elapsed = start.elapsed();
    outcome(
        r.e_f <= 5e-4 && r.e_rho <= 2.3e-4 && within(elapsed, 900.0),
        format!(
            "rank {}, E_f {:.3e} (<= 5e-4), E_rho {:.3e} (<= 2.3e-4), {} cases, {elapsed:.1?}",
            bundle.latent_dims()[0],
            r.e_f,
            r.e_rho,
            r.rows.len()
        ),
    )
}

fn fastest(bundle: &kinetic_rom::bundle::RomBundle, cases: &[TestCase]) -> PredictionReport {
    // timing noise only ever adds, so keep the fastest of a few passes
    (0..3)
        .map(|_| evaluate(bundle, InterpolationKind::Auto, cases).unwrap())
        .min_by(|a, b| a.mean_online_us(0.0, 3.125).total_cmp(&b.mean_online_us(0.0, 3.125)))
        .unwrap()
}

// 4 and 10: adaptive partition structure and online cost
fn adaptive_structure() -> (Outcome, Outcome) {
    let start = Instant::now();
    let cfg = config("example1.toml");
    let d = example1();
    let s = &d.snapshots;
    let t_final = cfg.problem.t_final;
    let acfg = cfg.rom.adaptive();
    let mut cache = RankCache::new();
    let pod_rank = build_pod(&s.as_blocks(), acfg.tol, acfg.rule).unwrap().rank();
    let mut results = Vec::new();
    for k in [1, 2, 4] {
        let initial = uniform_partition(t_final, k, s.times()).unwrap();
        results.push(adapt(s, &initial, &acfg, &mut cache).unwrap());
    }
    let bounds: Vec<Vec<f64>> = results.iter().map(|r| r.partition.boundaries()).collect();
    let identical = bounds.iter().all(|b| b == &bounds[0]);
    let r = &results[2];
    let body = &r.ranks[..r.ranks.len() - 1];
    let in_range = body.iter().all(|&x| (acfg.r_min..=acfg.r_max).contains(&x));
    let early: Vec<f64> = s
        .times()
        .iter()
        .filter(|&&t| t <= 3.125 + 1e-9)
        .map(|&t| r.ranks[r.partition.locate(t).unwrap()] as f64)
        .collect();
    let avg = early.iter().sum::<f64>() / early.len() as f64;
    let elapsed = start.elapsed();
    let c4 = outcome(
        identical && in_range && avg <= 0.35 * pod_rank as f64 && within(elapsed, 1800.0),
        format!(
            "partitions identical for k = 1, 2, 4: {identical}; {} intervals, ranks {:?} (non-tail in [{}, {}]: {in_range}); \
             mean rank on [0, 3.125] {avg:.2} vs POD rank {pod_rank} (ratio {:.3} <= 0.35), {elapsed:.1?}",
            r.partition.len(),
            r.ranks,
            acfg.r_min,
            acfg.r_max,
            avg / pod_rank as f64
        ),
    );

    let early_cases: Vec<TestCase> = d.cases.iter().filter(|c| c.t <= 3.125 + 1e-9).cloned().collect();
    let initial = uniform_partition(t_final, cfg.rom.k, s.times()).unwrap();
    let adaptive = build_adaptive_bundle(s, &initial, &acfg, &mut cache).unwrap();
    let pod = build_pod_bundle(s, acfg.tol, acfg.rule).unwrap();
    let ta = fastest(&adaptive, &early_cases).mean_online_us(0.0, 3.125);
    let tp = fastest(&pod, &early_cases).mean_online_us(0.0, 3.125);
    let c10 = outcome(
        tp >= 2.0 * ta,
        format!("mean online time per case on [0, 3.125]: adaptive {ta:.1} us, POD {tp:.1} us, speed-up {:.2}x (>= 2)", tp / ta),
    );
    (c4, c10)
}

// 5: one sweep against the boundary-set oracle
fn sweep_oracle() -> Outcome {
    let start = Instant::now();
    let r = common::sweep_oracle_trials(200, 5);
    let elapsed = start.elapsed();
    match r {
        Ok(()) => outcome(within(elapsed, 5.0), format!("200 random profiles match bit for bit, {elapsed:.1?}")),
        Err(e) => outcome(false, e),
    }
}

// 6: gradients and adjointness
fn gradients() -> Outcome {
    let start = Instant::now();
    let g = common::worst_gradient_error();
    let a = common::worst_adjoint_error();
    let elapsed = start.elapsed();
    outcome(
        g <= 1e-6 && a <= 1e-12 && within(elapsed, 10.0),
        format!("worst gradient error {g:.2e} (<= 1e-6), adjoint mismatch {a:.2e} (<= 1e-12), {elapsed:.1?}"),
    )
}

// 7: hybrid decisions on both examples
fn hybrid_decisions() -> Outcome {
    let one = {
        let cfg = config("example1_hybrid.toml");
        let s = &example1().snapshots;
        let start = Instant::now();
        let initial = uniform_partition(cfg.problem.t_final, cfg.rom.k, s.times()).unwrap();
        let plan = plan_hybrid(s, &initial, &cfg.hybrid(), &mut RankCache::new()).unwrap();
        let b = plan.partition().boundaries();
        let ae = plan.autoencoder_intervals();
        let ok = b == [0.0, 6.25, 12.5, 25.0] && ae == [0];
        (ok, format!("example 1 boundaries {b:?}, ranks {:?}, AE on {ae:?}", plan.adapt.ranks), start.elapsed())
    };
    let two = {
        let cfg = config("example2_hybrid.toml");
        let s = &example2().snapshots;
        let start = Instant::now();
        let initial = uniform_partition(cfg.problem.t_final, cfg.rom.k, s.times()).unwrap();
        let plan = plan_hybrid(s, &initial, &cfg.hybrid(), &mut RankCache::new()).unwrap();
        let b = plan.partition().boundaries();
        let ae = plan.autoencoder_intervals();
        let dims: Vec<usize> = plan
            .adapt
            .ranks
            .iter()
            .enumerate()
            .map(|(j, &r)| if ae.contains(&j) { cfg.rom.autoencoder.latent } else { r })
            .collect();
        let ok = b == [0.0, 10.0, 20.0] && ae == [0] && dims == [4, 2];
        (ok, format!("example 2 boundaries {b:?}, AE on {ae:?}, dims {dims:?}"), start.elapsed())
    };
    outcome(
        one.0 && two.0 && within(one.2 + two.2, 300.0),
        format!("{}; {}; decisions in {:.1?}", one.1, two.1, one.2 + two.2),
    )
}

// 8: trained hybrid accuracy on the autoencoder interval
fn hybrid_accuracy() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_file(
        &configs().join("example1_hybrid.toml"),
        &Overrides { out: Some(dir.path().to_path_buf()), ..Overrides::default() },
    )
    .unwrap();
    let d = example1();
    let mut last = Instant::now();
    let bundle = run_build(&cfg, &d.snapshots, &mut |line| {
        if last.elapsed().as_secs() >= 120 {
            last = Instant::now();
            note(line.trim());
        }
    })
    .unwrap();
    let ae = bundle.intervals.iter().position(|m| matches!(m.map, LatentMap::Autoencoder(_)));
    let r = evaluate(&bundle, cfg.rom.interpolation, &d.cases).unwrap();
    let e = r.mean_e_f(0.0, 6.25);
    let rest = r.mean_e_f(6.25, 25.0);
    let elapsed = start.elapsed();
    outcome(
        ae == Some(0) && cfg.rom.autoencoder.train.epochs >= 2000 && e <= 2e-2 && within(elapsed, 7200.0),
        format!(
            "{} epochs, latent {}, E_f on [0, 6.25] {e:.3e} (<= 2e-2), on (6.25, 25] {rest:.3e}, overall {:.3e}, {elapsed:.1?}",
            cfg.rom.autoencoder.train.epochs, cfg.rom.autoencoder.latent, r.e_f
        ),
    )
}

// 9: interpolators
fn interpolators() -> Outcome {
    let start = Instant::now();
    let spline = common::worst_spline_error(50, 9);
    let x: Vec<Vec<f64>> = (0..11).map(|j| vec![4.0 + 0.2 * j as f64]).collect();
    let v = DMatrix::from_fn(3, x.len(), |r, j| (j * j) as f64 - r as f64 * x[j][0].exp());
    let it = Interpolator::spline(&x).unwrap();
    let knots_exact = x.iter().enumerate().all(|(j, mu)| it.interpolate(&v, mu).unwrap() == v.column(j).as_slice());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let w = DMatrix::from_fn(4, 12, |r, j| (p[j][0] * (r + 1) as f64).cos() + p[j][1]);
    let rbf = Interpolator::rbf(&p).unwrap();
    let mut rbf_knots = 0.0f64;
    for (j, mu) in p.iter().enumerate() {
        let got = rbf.interpolate(&w, mu).unwrap();
        for r in 0..4 {
            rbf_knots = rbf_knots.max((got[r] - w[(r, j)]).abs());
        }
    }
    let two = Interpolator::rbf(&[vec![0.0], vec![1.0]]).unwrap();
    let worked = two.interpolate(&DMatrix::from_row_slice(1, 2, &[0.0, 1.0]), &[0.5]).unwrap()[0];
    let elapsed = start.elapsed();
    outcome(
        knots_exact && spline <= 1e-10 && rbf_knots <= 1e-10 && worked == 0.03125 && within(elapsed, 5.0),
        format!(
            "spline knots exact: {knots_exact}; spline vs oracle {spline:.1e}; RBF knots {rbf_knots:.1e}; two-point value {worked}, {elapsed:.1?}"
        ),
    )
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|e| {
        e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
    })
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |n: usize, r: Result<Outcome, String>| {
        let o = r.unwrap_or_else(|e| outcome(false, format!("panicked: {e}")));
        let _ = writeln!(std::io::stderr(), "criterion {n:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    let simple: [(usize, fn() -> Outcome); 6] =
        [(1, fom_decay_and_order), (2, partition_bound), (5, sweep_oracle), (6, gradients), (9, interpolators), (3, example1_pod)];
    for (n, f) in simple {
        if run(n) {
            record(n, guarded(f));
        }
    }
    if run(4) || run(10) {
        match guarded(adaptive_structure) {
            Ok((c4, c10)) => {
                record(4, Ok(c4));
                record(10, Ok(c10));
            }
            Err(e) => {
                record(4, Err(e.clone()));
                record(10, Err(e));
            }
        }
    }
    for (n, f) in [(7, hybrid_decisions as fn() -> Outcome), (8, hybrid_accuracy)] {
        if run(n) {
            record(n, guarded(f));
        }
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    let _ = writeln!(std::io::stderr(), "acceptance: {} passed, {} failed {failed:?}", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
