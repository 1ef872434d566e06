//! Goal-oriented time partitioning: refine intervals whose local POD rank is
//! too high, merge runs whose rank is too low, and report every pass.
use std::path::Path;

use kinetic_rom::config::{Overrides, RunConfig};
use kinetic_rom::partition::{adapt, uniform_partition, RankCache};
use kinetic_rom::snapshot::{generate_with, GenerateOptions};

fn main() -> kinetic_rom::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let cfg = RunConfig::from_file(&path, &Overrides::default())?;
    let opts = GenerateOptions { threads: 1, integrator: cfg.integrator };
    let s = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts)?;

    let mut acfg = cfg.rom.adaptive();
    acfg.r_max = 6;
    acfg.r_min = 3;
    let mut cache = RankCache::new();
    for k in [1, 2, 4] {
        let initial = uniform_partition(cfg.problem.t_final, k, s.times())?;
        let r = adapt(&s, &initial, &acfg, &mut cache)?;
        println!("start from {k} interval(s): {:?} after {} pass(es)", r.status, r.iterations);
        for (iv, rank) in r.partition.intervals().iter().zip(&r.ranks) {
            println!("  ({:.3}, {:.3}]  {:>3} samples  rank {rank}", iv.a, iv.b, iv.n_samples());
        }
    }
    println!("{} distinct slices ranked", cache.misses());
    Ok(())
}
