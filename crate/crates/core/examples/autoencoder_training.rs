//! Trains a small convolutional autoencoder on one time slice and compares its
//! reconstruction error with a POD basis of the same size.
use std::path::Path;

use kinetic_rom::autoencoder::{Architecture, AutoencoderModel, Schedule, TrainConfig};
use kinetic_rom::config::{Overrides, RunConfig};
use kinetic_rom::linalg::singular_values;
use kinetic_rom::snapshot::{generate_with, GenerateOptions};

fn main() -> kinetic_rom::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let cfg = RunConfig::from_file(&path, &Overrides::default())?;
    let opts = GenerateOptions { threads: 1, integrator: cfg.integrator };
    let s = generate_with(&cfg.problem, &cfg.train_params, &cfg.sample_times, opts)?;
    let slice = s.slice_time_interval(0.0, 1.0)?;

    let latent = 3;
    let arch = Architecture::ladder(s.n_v(), 8, 4, s.n_x(), latent)?;
    let train = TrainConfig {
        epochs: 300,
        batch_size: 8,
        learning_rate: 2e-3,
        schedule: Schedule::Plateau { patience: 10, factor: 0.5, threshold: 1e-4, min_lr: 1e-4 },
        ..TrainConfig::default()
    };
    let (model, history) = AutoencoderModel::fit(&slice, arch, &train, 1, |epoch, loss, lr| {
        if epoch % 50 == 0 {
            println!("epoch {epoch:>4}  loss {loss:.4e}  lr {lr:.1e}");
        }
    })?;
    println!("final loss {:.4e}", history.loss_history.last().copied().unwrap_or(f64::NAN));

    let z = model.latent_coordinates(&slice)?;
    let (mut err_sq, mut total) = (0.0, 0.0);
    for (k, col) in slice.columns().enumerate() {
        let rec = model.reconstruct_centred(z.column(k).as_slice(), k % slice.n_t())?;
        err_sq += rec.iter().zip(col).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        total += col.iter().map(|v| v * v).sum::<f64>();
    }
    // best rank-r linear subspace, from the discarded singular values
    let sigma = singular_values(&slice.blocks())?;
    let tail: f64 = sigma.iter().skip(latent).map(|v| v * v).sum();
    println!(
        "relative error with {latent} latent variables: autoencoder {:.3e}, POD {:.3e}",
        (err_sq / total).sqrt(),
        (tail / total).sqrt()
    );
    Ok(())
}
