//! Block-based image compression with a stacked autoencoder, plus
//! logistic-map payload encryption.
//!
//! The pipeline: an image is split into normalized 8x8 tiles, a palindromic
//! sigmoid autoencoder is trained on those tiles (greedy layer-wise
//! pretraining followed by whole-model fine-tuning), and each tile is reduced
//! to its bottleneck code. Quantized codes form the compressed payload, which
//! can be XOR-encrypted with a keystream generated by the chaotic logistic
//! map. Quality is measured with per-channel MSE/PSNR and adjacent-pixel
//! correlation analysis.
//!
//! Start with the runnable examples (`cargo run --release --example
//! full_pipeline`) or the `saecodec` binary, which exposes each pipeline
//! stage as a subcommand.

pub mod chaos;
pub mod cli;
pub mod codec;
pub mod image_io;
pub mod metrics;
pub mod sae;

pub use chaos::{ChaoticKey, Keystream};
pub use codec::{CompressedHeader, CompressedImage};
pub use image_io::{Image, TileSet};
pub use metrics::{CorrelationReport, QualityReport};
pub use sae::{SaeModel, TrainConfig};
