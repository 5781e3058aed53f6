//! Pipeline subcommands behind the `saecodec` binary: train, compress,
//! encrypt, decrypt, reconstruct, evaluate.
//!
//! Every function here is a thin orchestration of the library modules, takes
//! plain paths and a [`RunConfig`], and reports results on stdout. Exit-code
//! policy: 0 success, 1 usage error, 2 data/format error, 3 numeric failure
//! (degenerate keystream, diverged training, degenerate correlation input).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::chaos::{self, ChaosError};
use crate::codec::{self, CodecError};
use crate::image_io::{self, ImageError};
use crate::metrics::{self, CorrelationConfig, MetricsError};
use crate::sae::{self, SaeError, TrainConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Sae(#[from] SaeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Sae(SaeError::Diverged(_)) => 3,
            CliError::Chaos(ChaosError::Degenerate(_)) => 3,
            CliError::Metrics(MetricsError::ZeroVariance(_)) => 3,
            _ => 2,
        }
    }
}

/// Code-layer selection for compression: h1 is the first hidden layer
/// (the shallow, low-ratio code), h2 the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bottleneck {
    H1,
    H2,
}

impl Bottleneck {
    pub fn level(&self) -> usize {
        match self {
            Bottleneck::H1 => 1,
            Bottleneck::H2 => 2,
        }
    }
}

impl FromStr for Bottleneck {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "h1" => Ok(Bottleneck::H1),
            "h2" => Ok(Bottleneck::H2),
            other => Err(CliError::Usage(format!("bottleneck must be h1 or h2, got {other:?}"))),
        }
    }
}

/// Full pipeline configuration: tiling geometry, model shape, training
/// hyperparameters and the logistic-map parameter.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tile_dim: usize,
    pub layer_dims: Vec<usize>,
    /// Compression-time code-layer selection; None uses the model's
    /// deepest bottleneck.
    pub bottleneck: Option<Bottleneck>,
    pub train: TrainConfig,
    pub r: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tile_dim: 8,
            layer_dims: vec![64, 16, 4, 16, 64],
            bottleneck: None,
            train: TrainConfig::default(),
            r: 4.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.layer_dims.first() != Some(&(self.tile_dim * self.tile_dim)) {
            return Err(CliError::Usage(format!(
                "layers must start at tile_dim^2 = {}, got {:?}",
                self.tile_dim * self.tile_dim,
                self.layer_dims
            )));
        }
        if !self.layer_dims.iter().eq(self.layer_dims.iter().rev()) {
            return Err(CliError::Usage(format!(
                "layers must be palindromic, got {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }
}

/// Parse a comma-separated layer list such as `64,16,4,16,64`.
pub fn parse_layers(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad layer width {p:?} in {s:?}")))
        })
        .collect()
}

/// key=value configuration file; '#' starts a comment. Values here are
/// defaults that explicit command-line flags override.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

const CONFIG_KEYS: &[&str] = &[
    "tile_dim",
    "layers",
    "bottleneck",
    "lr",
    "epochs",
    "pretrain_epochs",
    "batch",
    "weight_decay",
    "seed",
    "r",
    "key",
    "out",
];

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key=value, got {raw:?}", lineno + 1))
            })?;
            let key = k.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key {key:?}",
                    lineno + 1
                )));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key {key}: bad value {v:?}"))),
        }
    }
}

/// Train the autoencoder on one image and write the model file. Prints the
/// final full-tile-set cost.
pub fn cmd_train(image: &Path, model_out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let img = image_io::load_image(image)?;
    let tiles = image_io::tile(&img, cfg.tile_dim)?;
    println!(
        "training on {} tiles ({}x{}, {} channel(s)), layers {:?}",
        tiles.tiles.len(),
        img.width,
        img.height,
        img.channels,
        cfg.layer_dims
    );
    let model = sae::pretrain(&tiles, &cfg.layer_dims, &cfg.train)?;
    let model = sae::fine_tune(model, &tiles, &cfg.train)?;
    let final_cost = sae::cost(
        &model,
        tiles.tiles.iter().map(|t| (t.as_slice(), t.as_slice())),
        cfg.train.weight_decay,
    )?;
    sae::save_model(&model, model_out)?;
    println!("final cost: {final_cost:.6}");
    println!("model written to {}", model_out.display());
    Ok(())
}

/// Compress an image with a trained model and write the .saec container.
pub fn cmd_compress(
    image: &Path,
    model_path: &Path,
    bottleneck: Option<Bottleneck>,
    out: &Path,
) -> Result<(), CliError> {
    let img = image_io::load_image(image)?;
    let model = sae::load_model(model_path)?;
    let level = match bottleneck {
        Some(b) => {
            if b.level() > model.bottleneck_index() {
                return Err(CliError::Usage(format!(
                    "bottleneck h{} needs at least {} encoder layers, model has {}",
                    b.level(),
                    b.level(),
                    model.bottleneck_index()
                )));
            }
            b.level()
        }
        None => model.bottleneck_index(),
    };
    let ci = codec::compress_at(&img, &model, level)?;
    codec::write_compressed(&ci, out)?;
    println!(
        "compressed {} -> {} bytes of codes (CR {}:1) at {}",
        image.display(),
        ci.codes.len(),
        ci.compression_ratio(),
        out.display()
    );
    Ok(())
}

/// Encrypt a compressed file. The key is derived from the payload itself
/// (first unquantized code coefficient) and written, post-perturbation, to
/// `key_out`; that key file is the secret the decrypting party needs.
pub fn cmd_encrypt(saec_in: &Path, r: f64, out: &Path, key_out: &Path) -> Result<(), CliError> {
    let ci = codec::read_compressed(saec_in)?;
    if ci.encrypted {
        return Err(CliError::Usage(format!(
            "{} is already encrypted",
            saec_in.display()
        )));
    }
    let key = chaos::derive_key(&ci, r)?;
    let (ciphertext, effective_key) = chaos::encrypt(&ci, &key)?;
    let enc = ci.with_payload(ciphertext, true)?;
    codec::write_compressed(&enc, out)?;
    chaos::write_key(&effective_key, key_out)?;
    println!("encrypted payload written to {}", out.display());
    println!("key file written to {}", key_out.display());
    Ok(())
}

/// Decrypt an encrypted compressed file with its key file.
pub fn cmd_decrypt(enc_in: &Path, key_path: &Path, out: &Path) -> Result<(), CliError> {
    let ci = codec::read_compressed(enc_in)?;
    if !ci.encrypted {
        return Err(CliError::Usage(format!(
            "{} is not an encrypted container",
            enc_in.display()
        )));
    }
    let key = chaos::read_key(key_path)?;
    let plain = chaos::decrypt(&ci.codes, &key, ci.codes.len())?;
    let dec = ci.with_payload(plain, false)?;
    codec::write_compressed(&dec, out)?;
    println!("decrypted payload written to {}", out.display());
    Ok(())
}

/// Reconstruct an image from a compressed file. Warns (but proceeds) when
/// the model's content hash differs from the one recorded at compression.
pub fn cmd_reconstruct(saec: &Path, model_path: &Path, out: &Path) -> Result<(), CliError> {
    let ci = codec::read_compressed(saec)?;
    let model = sae::load_model(model_path)?;
    if ci.header.model_id != model.model_id() {
        eprintln!(
            "warning: model id {:016x} does not match the id {:016x} recorded in {}",
            model.model_id(),
            ci.header.model_id,
            saec.display()
        );
    }
    let img = codec::decompress(&ci, &model)?;
    image_io::save_image(&img, out)?;
    println!("reconstructed image written to {}", out.display());
    Ok(())
}

/// Compare a candidate against the original. An image candidate gets the
/// per-channel MSE/PSNR report; a .saec candidate is rendered as a grayscale
/// raster of its payload bytes (the ciphertext view) and only analyzed for
/// correlation. `--correlation` runs the 10-trial adjacent-pixel protocol.
pub fn cmd_evaluate(
    original: &Path,
    candidate: &Path,
    run_correlation: bool,
    rng_seed: u64,
) -> Result<(), CliError> {
    let is_saec = std::fs::File::open(candidate).map(is_saec_file).unwrap_or(false);

    if is_saec {
        let ci = codec::read_compressed(candidate)?;
        let rendered = codec::codes_as_image(&ci)?;
        println!(
            "{} payload rendered as {}x{} grayscale",
            if ci.encrypted { "encrypted" } else { "compressed" },
            rendered.width,
            rendered.height
        );
        let report = metrics::adjacent_correlation(
            &rendered,
            &CorrelationConfig { rng_seed, ..Default::default() },
        )?;
        println!("adjacent-pixel correlation: {:.4}", report.r_xy);
        print!("{}", report.to_key_values());
        return Ok(());
    }

    let orig = image_io::load_image(original)?;
    let cand = image_io::load_image(candidate)?;
    let report = metrics::quality_report(&orig, &cand)?;
    println!("{report}");
    print!("{}", report.to_key_values());

    if run_correlation {
        let corr = metrics::adjacent_correlation(
            &cand,
            &CorrelationConfig { rng_seed, ..Default::default() },
        )?;
        println!("adjacent-pixel correlation of candidate: {:.4}", corr.r_xy);
        print!("{}", corr.to_key_values());
    }
    Ok(())
}

fn is_saec_file(mut f: std::fs::File) -> bool {
    use std::io::Read;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).is_ok() && &magic == b"SAEC"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_parsing() {
        assert_eq!(parse_layers("64,16,4,16,64").unwrap(), vec![64, 16, 4, 16, 64]);
        assert_eq!(parse_layers("64, 16, 64").unwrap(), vec![64, 16, 64]);
        assert!(parse_layers("64,x,64").is_err());
    }

    #[test]
    fn bottleneck_parsing() {
        assert_eq!("h1".parse::<Bottleneck>().unwrap(), Bottleneck::H1);
        assert_eq!("H2".parse::<Bottleneck>().unwrap(), Bottleneck::H2);
        assert!("h3".parse::<Bottleneck>().is_err());
    }

    #[test]
    fn run_config_invariants() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());

        cfg.layer_dims = vec![64, 16, 64];
        assert!(cfg.validate().is_ok(), "3-layer variant is accepted");

        cfg.layer_dims = vec![32, 16, 32];
        assert!(cfg.validate().is_err(), "must start at tile_dim^2");

        cfg.layer_dims = vec![64, 16, 4, 64];
        assert!(cfg.validate().is_err(), "must be palindromic");
    }

    #[test]
    fn config_file_parsing_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nlr=0.25\nlayers=64,16,64\nseed=9 # inline\n").unwrap();
        let fc = FileConfig::load(&path).unwrap();
        assert_eq!(fc.get_parsed::<f64>("lr").unwrap(), Some(0.25));
        assert_eq!(fc.get("layers"), Some("64,16,64"));
        assert_eq!(fc.get_parsed::<u64>("seed").unwrap(), Some(9));
        assert_eq!(fc.get_parsed::<usize>("batch").unwrap(), None);

        std::fs::write(&path, "nonsense=1\n").unwrap();
        assert!(matches!(FileConfig::load(&path), Err(CliError::Usage(_))));

        std::fs::write(&path, "just a line\n").unwrap();
        assert!(matches!(FileConfig::load(&path), Err(CliError::Usage(_))));
    }

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Chaos(ChaosError::Degenerate(100)).exit_code(), 3);
        assert_eq!(CliError::Sae(SaeError::Diverged("lr".into())).exit_code(), 3);
        assert_eq!(CliError::Metrics(MetricsError::ZeroVariance("x")).exit_code(), 3);
        assert_eq!(CliError::Codec(CodecError::UnknownVersion(9)).exit_code(), 2);
        assert_eq!(
            CliError::Image(ImageError::CorruptHeader("h".into())).exit_code(),
            2
        );
    }
}
