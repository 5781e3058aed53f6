//! Train a stacked autoencoder on one image and save the model.
//!
//! ```bash
//! cargo run --release --example train_model [IMAGE] [MODEL_OUT]
//! ```
//!
//! Defaults to the bundled 512x512 test photograph and `model.saem`. Uses a
//! shortened schedule so it finishes in seconds; raise the epochs (or use the
//! `saecodec train` binary with its defaults) for production quality.

use std::error::Error;
use std::path::PathBuf;

use saecodec::image_io;
use saecodec::sae::{self, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let image_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/astronaut.ppm")
        });
    let model_out = args.next().map(PathBuf::from).unwrap_or_else(|| "model.saem".into());

    let img = image_io::load_image(&image_path)?;
    let tiles = image_io::tile(&img, 8)?;
    println!(
        "loaded {} ({}x{}, {} channel(s)) -> {} tiles",
        image_path.display(),
        img.width,
        img.height,
        img.channels,
        tiles.tiles.len()
    );

    let layer_dims = [64, 16, 4, 16, 64];
    let cfg = TrainConfig {
        pretrain_epochs: 40,
        finetune_epochs: 80,
        rng_seed: 42,
        ..Default::default()
    };

    println!("pretraining {layer_dims:?} ({} epochs per stage)...", cfg.pretrain_epochs);
    let model = sae::pretrain(&tiles, &layer_dims, &cfg)?;
    let reconstruction = |m: &sae::SaeModel| {
        sae::cost(m, tiles.tiles.iter().map(|t| (t.as_slice(), t.as_slice())), 0.0).unwrap()
    };
    println!("cost after pretraining: {:.6}", reconstruction(&model));

    println!("fine-tuning ({} epochs)...", cfg.finetune_epochs);
    let model = sae::fine_tune(model, &tiles, &cfg)?;
    println!("cost after fine-tuning: {:.6}", reconstruction(&model));

    sae::save_model(&model, &model_out)?;
    println!("model written to {} (id {:016x})", model_out.display(), model.model_id());
    Ok(())
}
