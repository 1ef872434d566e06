//! Snapshot POD on a small slab: singular value decay and the rank chosen
//! by each truncation rule.
use std::path::Path;

use kinetic_rom::config::{Overrides, RunConfig};
use kinetic_rom::linalg::singular_values;
use kinetic_rom::pod::{build_pod, truncation_rank, TruncationRule};
use kinetic_rom::snapshot::{generate_with, GenerateOptions};

fn main() -> kinetic_rom::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let cfg = RunConfig::from_file(&path, &Overrides::default())?;
    let opts = GenerateOptions { threads: 1, integrator: cfg.integrator };
    let s = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts)?;
    println!("snapshot matrix {} x {}", s.n_h(), s.n_cols());

    let sigma = singular_values(&s.as_blocks())?;
    for (k, v) in sigma.iter().take(12).enumerate() {
        println!("sigma[{k:>2}] = {:.4e}  ({:.2e} of sigma[0])", v, v / sigma[0]);
    }
    for tol in [1e-1, 1e-2, 1e-3, 1e-4] {
        let energy = truncation_rank(&sigma, tol, TruncationRule::Energy);
        let spectral = truncation_rank(&sigma, tol, TruncationRule::Spectral);
        println!("tol {tol:.0e}: energy rank {energy:>3}, spectral rank {spectral:>3}");
    }

    // the reconstruction error of the energy basis stays under its tolerance
    let blocks = s.as_blocks();
    let basis = build_pod(&blocks, 1e-3, TruncationRule::Energy)?;
    let rel = (basis.residual_sq(&blocks)? / blocks.frobenius_sq()).sqrt();
    println!("rank {} basis: relative error {rel:.3e}", basis.rank());
    Ok(())
}
