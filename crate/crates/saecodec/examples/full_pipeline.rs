//! The whole pipeline in one run: train, compress, encrypt, decrypt,
//! reconstruct, evaluate — everything the `saecodec` binary does, through
//! the library API.
//!
//! ```bash
//! cargo run --release --example full_pipeline [IMAGE] [OUT_DIR]
//! ```
//!
//! Writes model/compressed/encrypted/key/reconstruction files into OUT_DIR
//! (default: a `pipeline_out` directory next to the current directory).

use std::error::Error;
use std::path::PathBuf;

use saecodec::chaos;
use saecodec::codec;
use saecodec::image_io;
use saecodec::metrics::{self, CorrelationConfig};
use saecodec::sae::{self, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let image_path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/astronaut.ppm")
    });
    let out_dir = args.next().map(PathBuf::from).unwrap_or_else(|| "pipeline_out".into());
    std::fs::create_dir_all(&out_dir)?;
    let out = |name: &str| out_dir.join(name);

    // 1) train
    let img = image_io::load_image(&image_path)?;
    let tiles = image_io::tile(&img, 8)?;
    let cfg = TrainConfig {
        pretrain_epochs: 40,
        finetune_epochs: 120,
        rng_seed: 7,
        ..Default::default()
    };
    println!("[1/6] training on {} tiles from {}...", tiles.tiles.len(), image_path.display());
    let model = sae::fine_tune(sae::pretrain(&tiles, &[64, 16, 4, 16, 64], &cfg)?, &tiles, &cfg)?;
    sae::save_model(&model, out("model.saem"))?;

    // 2) compress at the deep code layer (CR 16:1)
    let ci = codec::compress(&img, &model)?;
    codec::write_compressed(&ci, out("image.saec"))?;
    println!(
        "[2/6] compressed to {} bytes (CR {}:1)",
        ci.codes.len(),
        ci.compression_ratio()
    );

    // 3) encrypt; the key file is the secret the receiver needs
    let key = chaos::derive_key(&ci, 4.0)?;
    let (ciphertext, effective_key) = chaos::encrypt(&ci, &key)?;
    let enc = ci.with_payload(ciphertext, true)?;
    codec::write_compressed(&enc, out("image.enc.saec"))?;
    chaos::write_key(&effective_key, out("secret.key"))?;
    println!("[3/6] encrypted payload and key file written");

    // 4) decrypt (the receiving side)
    let received = codec::read_compressed(out("image.enc.saec"))?;
    let key_in = chaos::read_key(out("secret.key"))?;
    let plain = chaos::decrypt(&received.codes, &key_in, received.codes.len())?;
    let restored = received.with_payload(plain, false)?;
    println!("[4/6] decrypted: byte-exact = {}", restored.codes == ci.codes);

    // 5) reconstruct
    let recon = codec::decompress(&restored, &model)?;
    let recon_name = if recon.channels == 1 { "recon.pgm" } else { "recon.ppm" };
    image_io::save_image(&recon, out(recon_name))?;
    println!("[5/6] reconstruction written to {}", out(recon_name).display());

    // 6) evaluate: quality of the reconstruction, decorrelation of the
    //    ciphertext
    println!("[6/6] evaluation");
    let report = metrics::quality_report(&img, &recon)?;
    println!("{report}");
    let corr_cfg = CorrelationConfig::default();
    let recon_corr = metrics::adjacent_correlation(&recon, &corr_cfg)?;
    let cipher_img = codec::codes_as_image(&enc)?;
    let cipher_corr = metrics::adjacent_correlation(&cipher_img, &corr_cfg)?;
    println!("reconstruction adjacent-pixel correlation: {:.4}", recon_corr.r_xy);
    println!("ciphertext    adjacent-pixel correlation: {:.4}", cipher_corr.r_xy);
    Ok(())
}
