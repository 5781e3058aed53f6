//! Quality and security evaluation: per-channel MSE and PSNR plus the
//! adjacent-pixel correlation protocol (grayscale conversion, random pixel
//! pairs, ten trials averaged).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image_io::{to_grayscale, Image};

/// Peak sample value of the 8-bit images this crate works with.
pub const MAX_PIXEL: f64 = 255.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mse must be non-negative, got {0}")]
    NegativeMse(f64),
    #[error("correlation needs at least 2 pairs")]
    TooFewPairs,
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("channel {0} out of range")]
    ChannelOutOfRange(u32),
    #[error("image too small for {0:?} neighbors")]
    TooSmall(Direction),
}

/// PSNR in decibels, or infinite for a lossless reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Infinite,
    Db(f64),
}

impl Psnr {
    pub fn as_db(&self) -> Option<f64> {
        match self {
            Psnr::Infinite => None,
            Psnr::Db(v) => Some(*v),
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Infinite => write!(f, "infinite"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChannelQuality {
    pub channel: &'static str,
    pub mse: f64,
    pub psnr: Psnr,
}

/// Per-channel MSE/PSNR plus the mean of the channel MSEs for convenience.
#[derive(Debug, Clone)]
pub struct QualityReport {
    pub per_channel: Vec<ChannelQuality>,
    pub mean_mse: f64,
}

impl QualityReport {
    /// Machine-readable key=value lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for ch in &self.per_channel {
            out.push_str(&format!("mse_{}={:.6}\n", ch.channel, ch.mse));
            out.push_str(&format!("psnr_{}={}\n", ch.channel, ch.psnr));
        }
        out.push_str(&format!("mse_mean={:.6}\n", self.mean_mse));
        out
    }
}

impl std::fmt::Display for QualityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "channel        mse      psnr (dB)")?;
        for ch in &self.per_channel {
            writeln!(f, "{:<7} {:>10.4}  {:>9}", ch.channel, ch.mse, ch.psnr.to_string())?;
        }
        write!(f, "mean    {:>10.4}", self.mean_mse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Vertical,
    Diagonal,
}

impl Direction {
    fn offsets(&self) -> (u32, u32) {
        match self {
            Direction::Horizontal => (1, 0),
            Direction::Vertical => (0, 1),
            Direction::Diagonal => (1, 1),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
            Direction::Diagonal => "diagonal",
        }
    }
}

/// Settings for the adjacent-pixel correlation protocol.
#[derive(Debug, Clone)]
pub struct CorrelationConfig {
    pub pairs: usize,
    pub trials: usize,
    pub direction: Direction,
    pub rng_seed: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            pairs: 4096,
            trials: 10,
            direction: Direction::Horizontal,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// Mean correlation coefficient over the trials.
    pub r_xy: f64,
    pub trials: usize,
    pub pairs_per_trial: usize,
    pub direction: Direction,
}

impl CorrelationReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "correlation={:.6}\ntrials={}\npairs_per_trial={}\ndirection={}\n",
            self.r_xy,
            self.trials,
            self.pairs_per_trial,
            self.direction.name()
        )
    }
}

/// Mean squared error over one channel, computed in floating point on the
/// integer pixel values.
pub fn mse(original: &Image, reconstructed: &Image, channel: u32) -> Result<f64, MetricsError> {
    if original.width != reconstructed.width
        || original.height != reconstructed.height
        || original.channels != reconstructed.channels
    {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            original.width,
            original.height,
            original.channels,
            reconstructed.width,
            reconstructed.height,
            reconstructed.channels
        )));
    }
    if channel >= original.channels {
        return Err(MetricsError::ChannelOutOfRange(channel));
    }
    let stride = original.channels as usize;
    let offset = channel as usize;
    let sum: f64 = original.data[offset..]
        .iter()
        .step_by(stride)
        .zip(reconstructed.data[offset..].iter().step_by(stride))
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / (original.width as f64 * original.height as f64))
}

/// `10 log10(255^2 / mse)`; an MSE of zero is reported as infinite rather
/// than a number.
pub fn psnr(mse_value: f64) -> Result<Psnr, MetricsError> {
    if mse_value < 0.0 || mse_value.is_nan() {
        return Err(MetricsError::NegativeMse(mse_value));
    }
    if mse_value == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Db(10.0 * (MAX_PIXEL * MAX_PIXEL / mse_value).log10()))
}

/// Per-channel MSE/PSNR for an image pair.
pub fn quality_report(original: &Image, reconstructed: &Image) -> Result<QualityReport, MetricsError> {
    let names: &[&'static str] = if original.channels == 1 { &["gray"] } else { &["R", "G", "B"] };
    let mut per_channel = Vec::with_capacity(names.len());
    let mut total = 0.0;
    for (c, &name) in names.iter().enumerate() {
        let m = mse(original, reconstructed, c as u32)?;
        total += m;
        per_channel.push(ChannelQuality { channel: name, mse: m, psnr: psnr(m)? });
    }
    Ok(QualityReport { per_channel, mean_mse: total / names.len() as f64 })
}

/// Pearson-style correlation coefficient with the population convention
/// (variances divide by n): `(E(xy) - E(x)E(y)) / (sqrt(D(x)) sqrt(D(y)))`.
pub fn correlation(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewPairs);
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    let ex = sx / n;
    let ey = sy / n;
    let dx = sxx / n - ex * ex;
    let dy = syy / n - ey * ey;
    if dx <= 0.0 {
        return Err(MetricsError::ZeroVariance("x"));
    }
    if dy <= 0.0 {
        return Err(MetricsError::ZeroVariance("y"));
    }
    Ok((sxy / n - ex * ey) / (dx.sqrt() * dy.sqrt()))
}

/// Adjacent-pixel correlation, the security-analysis protocol: convert to
/// grayscale, sample `pairs` random (pixel, neighbor) pairs per trial, and
/// average the coefficient over `trials` trials. Trial t draws from a rng
/// seeded with `rng_seed + t`, so trials are independent and the report is
/// reproducible.
pub fn adjacent_correlation(
    img: &Image,
    cfg: &CorrelationConfig,
) -> Result<CorrelationReport, MetricsError> {
    let gray = to_grayscale(img);
    let (dx, dy) = cfg.direction.offsets();
    if gray.width <= dx || gray.height <= dy {
        return Err(MetricsError::TooSmall(cfg.direction));
    }
    let mut sum = 0.0;
    for t in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed.wrapping_add(t as u64));
        let mut pairs = Vec::with_capacity(cfg.pairs);
        for _ in 0..cfg.pairs {
            let x = rng.gen_range(0..gray.width - dx);
            let y = rng.gen_range(0..gray.height - dy);
            pairs.push((
                gray.sample(x, y, 0) as f64,
                gray.sample(x + dx, y + dy, 0) as f64,
            ));
        }
        sum += correlation(&pairs)?;
    }
    Ok(CorrelationReport {
        r_xy: sum / cfg.trials as f64,
        trials: cfg.trials,
        pairs_per_trial: cfg.pairs,
        direction: cfg.direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: u32, h: u32, data: Vec<u8>) -> Image {
        Image::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        let a = img(1, 1, vec![0]);
        let b = img(1, 1, vec![255]);
        assert_eq!(mse(&a, &b, 0).unwrap(), 65025.0);

        let a = img(2, 1, vec![10, 10]);
        let b = img(2, 1, vec![10, 20]);
        assert_eq!(mse(&a, &b, 0).unwrap(), 50.0);

        assert_eq!(mse(&a, &a, 0).unwrap(), 0.0);
        // symmetry
        assert_eq!(mse(&a, &b, 0).unwrap(), mse(&b, &a, 0).unwrap());
    }

    #[test]
    fn mse_rejects_mismatched_shapes() {
        let a = img(2, 1, vec![0, 0]);
        let b = img(1, 2, vec![0, 0]);
        assert!(matches!(mse(&a, &b, 0), Err(MetricsError::DimensionMismatch(_))));
        assert!(matches!(mse(&a, &a, 1), Err(MetricsError::ChannelOutOfRange(1))));
    }

    #[test]
    fn psnr_reference_points() {
        assert_eq!(psnr(65025.0).unwrap(), Psnr::Db(0.0));
        assert_eq!(psnr(0.0).unwrap(), Psnr::Infinite);
        assert!(matches!(psnr(-1.0), Err(MetricsError::NegativeMse(_))));

        // published reference pairs for an 8-bit signal
        let db = psnr(37.7696).unwrap().as_db().unwrap();
        assert!((db - 32.3594).abs() < 1e-4, "{db}");
        let db = psnr(21.48).unwrap().as_db().unwrap();
        assert!((db - 34.8105).abs() < 1e-4, "{db}");
    }

    #[test]
    fn psnr_halving_rule() {
        // doubling the squared error lowers psnr by exactly 10 log10(2)
        let a = psnr(10.0).unwrap().as_db().unwrap();
        let b = psnr(20.0).unwrap().as_db().unwrap();
        assert!((a - b - 10.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn correlation_extremes() {
        let up: Vec<(f64, f64)> = (0..256).map(|i| (i as f64, i as f64)).collect();
        assert!((correlation(&up).unwrap() - 1.0).abs() < 1e-12);

        let down: Vec<(f64, f64)> = (0..256).map(|i| (i as f64, 255.0 - i as f64)).collect();
        assert!((correlation(&down).unwrap() + 1.0).abs() < 1e-12);

        let flat = vec![(7.0, 7.0); 16];
        assert!(matches!(correlation(&flat), Err(MetricsError::ZeroVariance(_))));
        assert!(matches!(correlation(&[(0.0, 1.0)]), Err(MetricsError::TooFewPairs)));
    }

    #[test]
    fn correlation_affine_invariance_and_sign_flip() {
        let pairs: Vec<(f64, f64)> =
            (0..64).map(|i| ((i % 13) as f64, ((i * 7) % 11) as f64)).collect();
        let base = correlation(&pairs).unwrap();

        let scaled: Vec<(f64, f64)> =
            pairs.iter().map(|&(x, y)| (3.0 * x + 11.0, 3.0 * y + 11.0)).collect();
        assert!((correlation(&scaled).unwrap() - base).abs() < 1e-12);

        let flipped: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x, -y)).collect();
        assert!((correlation(&flipped).unwrap() + base).abs() < 1e-12);
    }

    #[test]
    fn quality_report_channels() {
        let a = Image::new(2, 1, 3, vec![255, 0, 0, 255, 0, 0]).unwrap();
        let report = quality_report(&a, &a).unwrap();
        assert_eq!(report.per_channel.len(), 3);
        assert_eq!(report.per_channel[0].channel, "R");
        assert!(report.per_channel.iter().all(|c| c.psnr == Psnr::Infinite));
        assert!(report.to_key_values().contains("psnr_R=infinite"));
    }

    #[test]
    fn adjacent_correlation_on_smooth_gradient() {
        // a smooth ramp has near-perfectly correlated neighbors
        let mut data = Vec::new();
        for y in 0..64u32 {
            for x in 0..64u32 {
                data.push(((x + y) * 2) as u8);
            }
        }
        let image = img(64, 64, data);
        let report = adjacent_correlation(&image, &CorrelationConfig::default()).unwrap();
        assert!(report.r_xy > 0.9, "r_xy = {}", report.r_xy);
        assert_eq!(report.trials, 10);
    }

    #[test]
    fn adjacent_correlation_rejects_degenerate_images() {
        let flat = img(8, 8, vec![42; 64]);
        assert!(matches!(
            adjacent_correlation(&flat, &CorrelationConfig::default()),
            Err(MetricsError::ZeroVariance(_))
        ));

        let thin = img(1, 8, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(matches!(
            adjacent_correlation(&thin, &CorrelationConfig::default()),
            Err(MetricsError::TooSmall(Direction::Horizontal))
        ));
    }

    #[test]
    fn adjacent_correlation_is_reproducible() {
        let mut data = Vec::new();
        for i in 0..(32 * 32) as u32 {
            data.push(((i * 37 + i / 31) % 251) as u8);
        }
        let image = img(32, 32, data);
        let cfg = CorrelationConfig { pairs: 512, rng_seed: 5, ..Default::default() };
        let a = adjacent_correlation(&image, &cfg).unwrap();
        let b = adjacent_correlation(&image, &cfg).unwrap();
        assert_eq!(a.r_xy, b.r_xy);
    }
}
