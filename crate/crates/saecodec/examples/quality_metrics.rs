//! Quality and security metrics on their own: MSE, PSNR and the
//! adjacent-pixel correlation protocol.
//!
//! ```bash
//! cargo run --release --example quality_metrics [IMAGE]
//! ```

use std::error::Error;
use std::path::PathBuf;

use saecodec::image_io::{self, Image};
use saecodec::metrics::{self, CorrelationConfig, Direction};

fn main() -> Result<(), Box<dyn Error>> {
    let image_path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/astronaut.ppm")
    });
    let img = image_io::load_image(&image_path)?;

    // a crude degraded copy: quantize each sample to 16 levels
    let degraded = Image::new(
        img.width,
        img.height,
        img.channels,
        img.data.iter().map(|&v| (v / 16) * 16 + 8).collect(),
    )?;

    println!("original vs 16-level quantized copy:");
    let report = metrics::quality_report(&img, &degraded)?;
    println!("{report}");

    println!("\npsnr is a pure function of mse:");
    for mse in [1.0, 10.0, 100.0, 1000.0] {
        println!("  mse {mse:>6}: {}", metrics::psnr(mse)?);
    }

    // natural images have strongly correlated neighbors in every direction
    println!("\nadjacent-pixel correlation (10 trials x 4096 pairs):");
    for direction in [Direction::Horizontal, Direction::Vertical, Direction::Diagonal] {
        let report = metrics::adjacent_correlation(
            &img,
            &CorrelationConfig { direction, ..Default::default() },
        )?;
        println!("  {:<10} r_xy = {:.4}", report.direction.name(), report.r_xy);
    }
    Ok(())
}
