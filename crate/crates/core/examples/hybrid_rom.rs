//! Hybrid reduced model: POD where the local rank is affordable, autoencoders
//! on short intervals that would still need too many POD modes.
use std::path::Path;

use kinetic_rom::config::{Overrides, RunConfig};
use kinetic_rom::hybrid::{build_hybrid, plan_hybrid};
use kinetic_rom::online::evaluate;
use kinetic_rom::partition::{uniform_partition, RankCache};
use kinetic_rom::pipeline::reference_cases;
use kinetic_rom::snapshot::{generate_with, GenerateOptions};

fn main() -> kinetic_rom::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let mut cfg = RunConfig::from_file(&path, &Overrides::default())?;
    cfg.rom.autoencoder.train.epochs = 200;
    let opts = GenerateOptions { threads: 1, integrator: cfg.integrator };
    let s = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts)?;

    let hcfg = cfg.hybrid();
    let initial = uniform_partition(cfg.problem.t_final, 1, s.times())?;
    let mut cache = RankCache::new();
    let plan = plan_hybrid(&s, &initial, &hcfg, &mut cache)?;
    for d in &plan.decisions {
        println!("({:.3}, {:.3}]  rank {:>3}  -> {}  {}", d.a, d.b, d.rank, d.map, d.note);
    }

    let bundle = build_hybrid(&s, &initial, &hcfg, &mut cache, |j, epoch, loss, _| {
        if epoch % 100 == 0 {
            println!("  interval {j}: epoch {epoch} loss {loss:.3e}");
        }
    })?;
    let report = evaluate(&bundle, cfg.rom.interpolation, &reference_cases(&cfg)?)?;
    println!("latent dims {:?}", bundle.latent_dims());
    for iv in &report.intervals {
        println!("({:.3}, {:.3}]  {:<12} E_f {:.3e}", iv.a, iv.b, iv.map, report.mean_e_f(iv.a, iv.b));
    }
    println!("overall E_f {:.3e}, E_rho {:.3e}", report.e_f, report.e_rho);
    Ok(())
}
