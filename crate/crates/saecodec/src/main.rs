use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use saecodec::cli::{self, Bottleneck, CliError, FileConfig, RunConfig};

#[derive(Parser)]
#[command(
    name = "saecodec",
    about = "Autoencoder image codec with logistic-map payload encryption",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an autoencoder on one image and write the model file
    Train {
        /// Input image (PNG, PGM or PPM)
        image: PathBuf,
        /// Output model file
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Compress an image with a trained model into a .saec file
    Compress {
        image: PathBuf,
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Code layer to compress at: h1 (shallow) or h2 (deep)
        #[arg(long)]
        bottleneck: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Encrypt a .saec payload; emits the ciphertext container and key file
    Encrypt {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Key file to write
        #[arg(long)]
        key: PathBuf,
        /// Logistic-map control parameter in (3.5699, 4]
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Decrypt an encrypted .saec container with its key file
    Decrypt {
        input: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from a .saec file
    Reconstruct {
        input: PathBuf,
        model: PathBuf,
        /// Output image path (.png, .pgm or .ppm)
        #[arg(long)]
        out: PathBuf,
    },
    /// Report MSE/PSNR (and optionally adjacent-pixel correlation) of a
    /// reconstruction or ciphertext against the original
    Evaluate {
        original: PathBuf,
        /// Reconstructed image, or a .saec file to analyze as ciphertext
        candidate: PathBuf,
        /// Also run the 10-trial adjacent-pixel correlation protocol
        #[arg(long)]
        correlation: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Training and pipeline knobs shared by `train`. Command-line flags win
/// over config-file values, which win over defaults.
#[derive(Args)]
struct Tuning {
    /// key=value config file supplying defaults for the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tile_dim: Option<usize>,
    /// Comma-separated palindromic layer widths, e.g. 64,16,4,16,64
    #[arg(long)]
    layers: Option<String>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Fine-tuning epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Pretraining epochs per stage
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Mini-batch size
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Tuning {
    fn into_run_config(self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let mut cfg = RunConfig::default();
        cfg.tile_dim = pick(self.tile_dim, file.get_parsed("tile_dim")?, cfg.tile_dim);
        let file_layers = file.get("layers").map(cli::parse_layers).transpose()?;
        let flag_layers = self.layers.as_deref().map(cli::parse_layers).transpose()?;
        cfg.layer_dims = pick(flag_layers, file_layers, cfg.layer_dims);
        cfg.train.learning_rate = pick(self.lr, file.get_parsed("lr")?, cfg.train.learning_rate);
        cfg.train.finetune_epochs =
            pick(self.epochs, file.get_parsed("epochs")?, cfg.train.finetune_epochs);
        cfg.train.pretrain_epochs = pick(
            self.pretrain_epochs,
            file.get_parsed("pretrain_epochs")?,
            cfg.train.pretrain_epochs,
        );
        cfg.train.batch_size = pick(self.batch, file.get_parsed("batch")?, cfg.train.batch_size);
        cfg.train.weight_decay =
            pick(self.weight_decay, file.get_parsed("weight_decay")?, cfg.train.weight_decay);
        cfg.train.rng_seed = pick(self.seed, file.get_parsed("seed")?, cfg.train.rng_seed);
        Ok(cfg)
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train { image, out, tuning } => {
            let cfg = tuning.into_run_config()?;
            cli::cmd_train(&image, &out, &cfg)
        }
        Command::Compress { image, model, out, bottleneck, config } => {
            let file = match &config {
                Some(path) => FileConfig::load(path)?,
                None => FileConfig::default(),
            };
            let chosen = match bottleneck.or_else(|| file.get("bottleneck").map(String::from)) {
                Some(s) => Some(s.parse::<Bottleneck>()?),
                None => None,
            };
            cli::cmd_compress(&image, &model, chosen, &out)
        }
        Command::Encrypt { input, out, key, r, config } => {
            let file = match &config {
                Some(path) => FileConfig::load(path)?,
                None => FileConfig::default(),
            };
            let r = pick(r, file.get_parsed("r")?, 4.0);
            cli::cmd_encrypt(&input, r, &out, &key)
        }
        Command::Decrypt { input, key, out } => cli::cmd_decrypt(&input, &key, &out),
        Command::Reconstruct { input, model, out } => cli::cmd_reconstruct(&input, &model, &out),
        Command::Evaluate { original, candidate, correlation, seed } => {
            cli::cmd_evaluate(&original, &candidate, correlation, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default exit code for usage errors is 2; this tool
            // reserves 2 for data errors and reports usage problems as 1
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
