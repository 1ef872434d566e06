//! Offline/online split: build an adaptive bundle once, then predict unseen
//! parameters by interpolating latent coordinates, checked against full solves.
use std::path::Path;

use kinetic_rom::bundle::build_adaptive_bundle;
use kinetic_rom::config::{Overrides, RunConfig};
use kinetic_rom::fom::{compute_rho, run_with};
use kinetic_rom::online::{relative_error, InterpolationKind, Predictor};
use kinetic_rom::partition::{uniform_partition, RankCache};
use kinetic_rom::snapshot::{generate_with, GenerateOptions};

fn main() -> kinetic_rom::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let cfg = RunConfig::from_file(&path, &Overrides::default())?;
    let opts = GenerateOptions { threads: 1, integrator: cfg.integrator };
    let s = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts)?;
    let initial = uniform_partition(cfg.problem.t_final, cfg.rom.k, s.times())?;
    let bundle = build_adaptive_bundle(&s, &initial, &cfg.rom.adaptive(), &mut RankCache::new())?;

    let dir = std::env::temp_dir().join("kinetic-rom-online-example");
    bundle.save(&dir)?;
    let bundle = kinetic_rom::bundle::RomBundle::load(&dir)?;
    let pred = Predictor::new(&bundle, InterpolationKind::Auto)?;
    let quad = cfg.problem.quadrature()?;

    let times = [0.25, 1.0, 2.0];
    println!("{:>6} {:>6} {:>10} {:>10} {:>10} {:>8}", "mu", "t", "e_f", "e_rho", "online", "latent");
    for mu in [1.1, 1.37, 1.9] {
        let reference = run_with(&cfg.problem, &[mu], &times, cfg.integrator)?;
        for (t, r) in times.iter().zip(&reference) {
            let p = pred.predict(*t, &[mu])?;
            let e_f = relative_error(&r.f, &p.f).unwrap_or(f64::NAN);
            let e_rho = relative_error(&compute_rho(r, &quad)?, &pred.density(&p.f)?).unwrap_or(f64::NAN);
            println!("{mu:>6} {t:>6} {e_f:>10.3e} {e_rho:>10.3e} {:>8.1?} {:>8}", p.online, p.latent_dim);
        }
    }
    Ok(())
}
