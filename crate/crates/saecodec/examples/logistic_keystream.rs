//! Explore the logistic-map keystream generator: orbit values, byte
//! quantization, the degeneracy guard, and sensitivity to the seed.
//!
//! ```bash
//! cargo run --release --example logistic_keystream
//! ```

use std::error::Error;

use saecodec::chaos::{self, ChaoticKey};

fn main() -> Result<(), Box<dyn Error>> {
    // the first few iterates from a textbook seed
    let key = ChaoticKey::new(0.2, 4.0, 0)?;
    let ks = chaos::logistic_sequence(&key, 5)?;
    println!("orbit of x0 = 0.2 at r = 4: {:?}", ks.values);
    println!("quantized bytes:            {:?}", ks.bytes);

    // seeds that would degenerate are nudged automatically
    for x0 in [0.5, 0.75] {
        let key = ChaoticKey::new(x0, 4.0, 0)?;
        let ks = chaos::logistic_sequence(&key, 3)?;
        println!("x0 = {x0} degenerates; stream generated from x0 = {}", ks.effective_x0);
    }

    // byte histogram: the r = 4 orbit is arcsine-distributed, so edge bytes
    // are ~10x as common as uniform and mid-range bytes rarer
    let key = ChaoticKey::new(0.37, 4.0, 1000)?;
    let n = 1 << 20;
    let ks = chaos::logistic_sequence(&key, n)?;
    let mut counts = [0u32; 256];
    for &b in &ks.bytes {
        counts[b as usize] += 1;
    }
    let uniform = n as f64 / 256.0;
    println!("\nbyte histogram over 2^20 samples (ratio to uniform):");
    for b in [0usize, 1, 64, 128, 192, 254, 255] {
        println!("  byte {b:>3}: {:>6} ({:.2}x)", counts[b], counts[b] as f64 / uniform);
    }

    // two seeds 1e-10 apart diverge almost completely
    let a = chaos::logistic_sequence(&ChaoticKey::new(0.37, 4.0, 1000)?, 65536)?;
    let b = chaos::logistic_sequence(&ChaoticKey::new(0.37 + 1e-10, 4.0, 1000)?, 65536)?;
    let agree = a.bytes.iter().zip(&b.bytes).filter(|(x, y)| x == y).count();
    println!(
        "\nkeystreams from x0 and x0 + 1e-10 agree on {agree}/65536 bytes ({:.2}%)",
        100.0 * agree as f64 / 65536.0
    );
    Ok(())
}
