//! Encrypt a compressed payload with the logistic-map keystream, decrypt it
//! back, and show what a wrong key does.
//!
//! ```bash
//! cargo run --release --example encrypt_decrypt [IMAGE]
//! ```

use std::error::Error;
use std::path::PathBuf;

use saecodec::chaos::{self, ChaoticKey};
use saecodec::codec;
use saecodec::image_io;
use saecodec::sae::{self, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let image_path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/camera.pgm")
    });
    let img = image_io::load_image(&image_path)?;
    let tiles = image_io::tile(&img, 8)?;

    // a quick model; encryption does not care about reconstruction quality
    let cfg = TrainConfig { pretrain_epochs: 10, finetune_epochs: 10, ..Default::default() };
    let model = sae::fine_tune(sae::pretrain(&tiles, &[64, 16, 64], &cfg)?, &tiles, &cfg)?;
    let ci = codec::compress(&img, &model)?;
    println!("compressed payload: {} bytes", ci.codes.len());

    // x0 comes from the payload itself: the first unquantized code coefficient
    let key = chaos::derive_key(&ci, 4.0)?;
    println!("derived key: x0 = {:.17}, r = {}, burn_in = {}", key.x0(), key.r(), key.burn_in());

    let (ciphertext, effective_key) = chaos::encrypt(&ci, &key)?;
    let changed = ciphertext.iter().zip(&ci.codes).filter(|(a, b)| a != b).count();
    println!(
        "encrypted: {changed}/{} bytes differ from the plain payload",
        ci.codes.len()
    );

    let plain = chaos::decrypt(&ciphertext, &effective_key, ciphertext.len())?;
    println!("decrypt with the right key: byte-exact = {}", plain == ci.codes);

    let wrong = ChaoticKey::new(effective_key.x0() + 1e-10, 4.0, effective_key.burn_in())?;
    let garbage = chaos::decrypt(&ciphertext, &wrong, ciphertext.len())?;
    let agree = garbage.iter().zip(&ci.codes).filter(|(a, b)| a == b).count();
    println!(
        "decrypt with x0 nudged by 1e-10: only {agree}/{} bytes agree ({:.2}%)",
        ci.codes.len(),
        100.0 * agree as f64 / ci.codes.len() as f64
    );
    Ok(())
}
