//! Compress an image at both supported ratios and report reconstruction
//! quality.
//!
//! ```bash
//! cargo run --release --example compress_reconstruct [IMAGE]
//! ```
//!
//! Trains a small model on the image itself (the training set is the image's
//! own tiles), then compresses at the shallow (4:1) and deep (16:1) code
//! layers and prints per-channel MSE/PSNR for each.

use std::error::Error;
use std::path::PathBuf;

use saecodec::codec;
use saecodec::image_io;
use saecodec::metrics;
use saecodec::sae::{self, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let image_path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/astronaut.ppm")
    });
    let img = image_io::load_image(&image_path)?;
    let tiles = image_io::tile(&img, 8)?;

    let cfg = TrainConfig {
        pretrain_epochs: 40,
        finetune_epochs: 120,
        rng_seed: 1,
        ..Default::default()
    };
    println!("training a 5-layer [64, 16, 4, 16, 64] model on {} tiles...", tiles.tiles.len());
    let model = sae::fine_tune(sae::pretrain(&tiles, &[64, 16, 4, 16, 64], &cfg)?, &tiles, &cfg)?;

    let source_bytes = img.data.len();
    for (level, tag) in [(1, "h1"), (2, "h2")] {
        let ci = codec::compress_at(&img, &model, level)?;
        let rec = codec::decompress(&ci, &model)?;
        let report = metrics::quality_report(&img, &rec)?;
        println!();
        println!(
            "code layer {tag}: {} -> {} bytes, CR {}:1",
            source_bytes,
            ci.codes.len(),
            ci.compression_ratio()
        );
        println!("{report}");
    }
    Ok(())
}
