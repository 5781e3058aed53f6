//! Raster image loading/saving and the tile transform feeding the codec.
//!
//! Supported formats: 8-bit PNG, binary PGM ("P5") and binary PPM ("P6").
//! The PNM formats are hand-parsed so tests have a dependency-free,
//! bit-exact on-disk path.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("malformed tile set: {0}")]
    MalformedTileSet(String),
}

/// Decoded 8-bit raster. Samples are row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: u32,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<u8>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidImage(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageError::InvalidImage(format!(
                "data length {} does not match {}x{}x{} = {}",
                data.len(),
                width,
                height,
                channels,
                expected
            )));
        }
        Ok(Image { width, height, channels, data })
    }

    /// Sample at (x, y) in the given channel.
    pub fn sample(&self, x: u32, y: u32, channel: u32) -> u8 {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + channel as usize;
        self.data[idx]
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

/// Normalized tile vectors plus the grid geometry needed to reassemble them.
///
/// Tiles are ordered channel-by-channel: all of channel 0's tiles in
/// row-major grid order, then channel 1, then channel 2.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub tile_dim: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub original_w: u32,
    pub original_h: u32,
    pub channel_count: u32,
    /// Each tile has length `tile_dim * tile_dim`, values in [0, 1].
    pub tiles: Vec<Vec<f64>>,
}

impl TileSet {
    pub fn tile_len(&self) -> usize {
        self.tile_dim * self.tile_dim
    }

    pub fn expected_tile_count(&self) -> usize {
        self.grid_w * self.grid_h * self.channel_count as usize
    }
}

/// Load a PNG, binary PGM or binary PPM image. The format is sniffed from
/// the file's magic bytes, not its extension. 16-bit and alpha-channel
/// sources are rejected.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 2];
    reader.read_exact(&mut magic)?;

    match &magic {
        b"P5" => load_pnm(reader, 1),
        b"P6" => load_pnm(reader, 3),
        [0x89, b'P'] => load_png(path),
        other => Err(ImageError::UnsupportedFormat(format!(
            "unrecognized magic bytes {other:02x?}"
        ))),
    }
}

/// Save as PNG, PGM or PPM depending on the file extension. Grayscale images
/// may be written to any of the three; color images require .png or .ppm.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => {
            if img.channels != 1 {
                return Err(ImageError::UnsupportedFormat(
                    "PGM holds a single channel; convert to grayscale first".into(),
                ));
            }
            write_pnm(img, path, b"P5")
        }
        "ppm" => {
            if img.channels != 3 {
                return Err(ImageError::UnsupportedFormat(
                    "PPM holds three channels".into(),
                ));
            }
            write_pnm(img, path, b"P6")
        }
        "png" => save_png(img, path),
        other => Err(ImageError::UnsupportedFormat(format!(
            "cannot infer output format from extension {other:?}"
        ))),
    }
}

fn load_pnm<R: Read>(mut reader: R, channels: u32) -> Result<Image, ImageError> {
    let width = read_pnm_number(&mut reader)?;
    let height = read_pnm_number(&mut reader)?;
    let maxval = read_pnm_number(&mut reader)?;
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "maxval {maxval} (16-bit PNM sources are not supported)"
        )));
    }
    let len = width as usize * height as usize * channels as usize;
    let mut data = vec![0u8; len];
    reader
        .read_exact(&mut data)
        .map_err(|_| ImageError::CorruptHeader("payload shorter than header promises".into()))?;
    if maxval != 255 {
        for v in &mut data {
            *v = (*v as u32 * 255 / maxval) as u8;
        }
    }
    Image::new(width, height, channels, data)
}

/// Read one whitespace-delimited decimal from a PNM header, skipping
/// `#` comment lines.
fn read_pnm_number<R: Read>(reader: &mut R) -> Result<u32, ImageError> {
    let mut byte = [0u8; 1];
    // skip whitespace and comments
    loop {
        reader
            .read_exact(&mut byte)
            .map_err(|_| ImageError::CorruptHeader("truncated PNM header".into()))?;
        match byte[0] {
            b'#' => {
                while byte[0] != b'\n' {
                    reader
                        .read_exact(&mut byte)
                        .map_err(|_| ImageError::CorruptHeader("truncated PNM comment".into()))?;
                }
            }
            b if b.is_ascii_whitespace() => {}
            b if b.is_ascii_digit() => break,
            b => {
                return Err(ImageError::CorruptHeader(format!(
                    "unexpected byte 0x{b:02x} in PNM header"
                )))
            }
        }
    }
    let mut value: u64 = 0;
    loop {
        value = value * 10 + (byte[0] - b'0') as u64;
        if value > u32::MAX as u64 {
            return Err(ImageError::CorruptHeader("PNM header number overflows".into()));
        }
        match reader.read_exact(&mut byte) {
            Ok(()) if byte[0].is_ascii_digit() => {}
            Ok(()) if byte[0].is_ascii_whitespace() => break,
            Ok(()) => {
                return Err(ImageError::CorruptHeader(format!(
                    "unexpected byte 0x{:02x} after PNM number",
                    byte[0]
                )))
            }
            Err(_) => return Err(ImageError::CorruptHeader("truncated PNM header".into())),
        }
    }
    Ok(value as u32)
}

fn write_pnm(img: &Image, path: &Path, magic: &[u8]) -> Result<(), ImageError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    write!(w, "\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&img.data)?;
    Ok(())
}

fn load_png(path: &Path) -> Result<Image, ImageError> {
    let dynimg = image::open(path)
        .map_err(|e| ImageError::CorruptHeader(format!("PNG decode failed: {e}")))?;
    match dynimg {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            Image::new(w, h, 1, buf.into_raw())
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            Image::new(w, h, 3, buf.into_raw())
        }
        other => Err(ImageError::UnsupportedFormat(format!(
            "PNG color type {other:?} (only 8-bit grayscale and RGB are supported)"
        ))),
    }
}

fn save_png(img: &Image, path: &Path) -> Result<(), ImageError> {
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer(path, &img.data, img.width, img.height, color)
        .map_err(|e| ImageError::Io(std::io::Error::other(e.to_string())))
}

/// Convert to single-channel grayscale with BT.601 luma weights,
/// `round(0.299 R + 0.587 G + 0.114 B)` half-up. Grayscale input is
/// returned unchanged, so the conversion is idempotent.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let mut data = Vec::with_capacity(img.width as usize * img.height as usize);
    for px in img.data.chunks_exact(3) {
        let luma = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        data.push((luma + 0.5).floor() as u8);
    }
    Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Split each channel into `tile_dim` x `tile_dim` blocks, padding the
/// right/bottom edges by replication when the dimensions do not divide
/// evenly. Each block is flattened row-major and normalized by 255.
pub fn tile(img: &Image, tile_dim: usize) -> Result<TileSet, ImageError> {
    if tile_dim == 0 {
        return Err(ImageError::InvalidImage("tile_dim must be at least 1".into()));
    }
    if img.is_empty() {
        return Err(ImageError::InvalidImage("cannot tile an empty image".into()));
    }
    let grid_w = (img.width as usize).div_ceil(tile_dim);
    let grid_h = (img.height as usize).div_ceil(tile_dim);
    let mut tiles = Vec::with_capacity(grid_w * grid_h * img.channels as usize);

    for ch in 0..img.channels {
        for ty in 0..grid_h {
            for tx in 0..grid_w {
                let mut t = Vec::with_capacity(tile_dim * tile_dim);
                for dy in 0..tile_dim {
                    // edge replication: clamp to the last real row/column
                    let y = (ty * tile_dim + dy).min(img.height as usize - 1) as u32;
                    for dx in 0..tile_dim {
                        let x = (tx * tile_dim + dx).min(img.width as usize - 1) as u32;
                        t.push(img.sample(x, y, ch) as f64 / 255.0);
                    }
                }
                tiles.push(t);
            }
        }
    }

    Ok(TileSet {
        tile_dim,
        grid_w,
        grid_h,
        original_w: img.width,
        original_h: img.height,
        channel_count: img.channels,
        tiles,
    })
}

/// Reassemble an image from a tile set: each entry is scaled by 255,
/// rounded half-up, clamped to [0, 255], and the padding introduced by
/// `tile` is cropped away.
pub fn untile(ts: &TileSet) -> Result<Image, ImageError> {
    if ts.tiles.len() != ts.expected_tile_count() {
        return Err(ImageError::MalformedTileSet(format!(
            "{} tiles but geometry implies {}",
            ts.tiles.len(),
            ts.expected_tile_count()
        )));
    }
    let tile_len = ts.tile_len();
    if let Some(bad) = ts.tiles.iter().find(|t| t.len() != tile_len) {
        return Err(ImageError::MalformedTileSet(format!(
            "tile of length {} but tile_dim {} implies {}",
            bad.len(),
            ts.tile_dim,
            tile_len
        )));
    }

    let w = ts.original_w as usize;
    let h = ts.original_h as usize;
    let channels = ts.channel_count as usize;
    let mut data = vec![0u8; w * h * channels];

    let mut idx = 0;
    for ch in 0..channels {
        for ty in 0..ts.grid_h {
            for tx in 0..ts.grid_w {
                let t = &ts.tiles[idx];
                idx += 1;
                for dy in 0..ts.tile_dim {
                    let y = ty * ts.tile_dim + dy;
                    if y >= h {
                        break;
                    }
                    for dx in 0..ts.tile_dim {
                        let x = tx * ts.tile_dim + dx;
                        if x >= w {
                            continue;
                        }
                        let v = (t[dy * ts.tile_dim + dx] * 255.0 + 0.5).floor();
                        data[(y * w + x) * channels + ch] = v.clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
    }

    Image::new(ts.original_w, ts.original_h, ts.channel_count, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(name: &str) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/data")
            .join(name)
    }

    #[test]
    fn pgm_decode_known_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, [b"P5\n2 2\n255\n".as_ref(), &[0, 255, 128, 64]].concat()).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
        assert_eq!(img.data, vec![0, 255, 128, 64]);
    }

    #[test]
    fn pnm_header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(
            &path,
            [b"P5\n# a comment\n2 1\n# another\n255\n".as_ref(), &[7, 9]].concat(),
        )
        .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.data, vec![7, 9]);
    }

    #[test]
    fn truncated_pnm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.pgm");
        std::fs::write(&path, [b"P5\n4 4\n255\n".as_ref(), &[1, 2, 3]].concat()).unwrap();
        assert!(matches!(load_image(&path), Err(ImageError::CorruptHeader(_))));
    }

    #[test]
    fn sixteen_bit_pnm_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.pgm");
        std::fs::write(&path, [b"P5\n1 1\n65535\n".as_ref(), &[0, 0]].concat()).unwrap();
        assert!(matches!(load_image(&path), Err(ImageError::UnsupportedFormat(_))));
    }

    #[test]
    fn rgb_fixture_has_expected_length() {
        let img = load_image(fixture("astronaut.ppm")).unwrap();
        assert_eq!((img.width, img.height, img.channels), (512, 512, 3));
        assert_eq!(img.data.len(), 786_432);
    }

    #[test]
    fn png_decode_matches_ppm_pixels() {
        let png = load_image(fixture("astronaut_64.png")).unwrap();
        let ppm = load_image(fixture("astronaut_64.ppm")).unwrap();
        assert_eq!(png, ppm);

        let png = load_image(fixture("camera_64.png")).unwrap();
        let pgm = load_image(fixture("camera_64.pgm")).unwrap();
        assert_eq!(png, pgm);
    }

    #[test]
    fn save_load_round_trip_all_formats() {
        let dir = tempfile::tempdir().unwrap();
        let gray = Image::new(3, 2, 1, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let rgb = Image::new(2, 2, 3, (0..12).collect()).unwrap();

        for (img, name) in [(&gray, "g.pgm"), (&gray, "g.png"), (&rgb, "c.ppm"), (&rgb, "c.png")] {
            let path = dir.path().join(name);
            save_image(img, &path).unwrap();
            assert_eq!(&load_image(&path).unwrap(), img, "{name}");
        }
    }

    #[test]
    fn grayscale_weights() {
        let img = Image::new(3, 1, 3, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        let gray = to_grayscale(&img);
        // 0.299 * 255 = 76.245, rounds half-up to 76
        assert_eq!(gray.data, vec![255, 0, 76]);
        assert_eq!(gray.channels, 1);
    }

    #[test]
    fn grayscale_idempotent() {
        let img = Image::new(2, 1, 3, vec![10, 200, 30, 90, 80, 70]).unwrap();
        let once = to_grayscale(&img);
        assert_eq!(to_grayscale(&once), once);
    }

    #[test]
    fn tile_counts_and_normalization() {
        let img = Image::new(512, 512, 1, vec![255; 512 * 512]).unwrap();
        let ts = tile(&img, 8).unwrap();
        assert_eq!(ts.tiles.len(), 4096);
        assert_eq!(ts.tiles[0].len(), 64);
        assert_eq!(ts.tiles[0][0], 1.0);

        let img = Image::new(10, 10, 1, vec![0; 100]).unwrap();
        let ts = tile(&img, 8).unwrap();
        assert_eq!((ts.grid_w, ts.grid_h), (2, 2));
        assert_eq!(ts.tiles.len(), 4);
        assert_eq!(ts.tiles[0][0], 0.0);
    }

    #[test]
    fn untile_endpoint_values() {
        let ts = TileSet {
            tile_dim: 1,
            grid_w: 3,
            grid_h: 1,
            original_w: 3,
            original_h: 1,
            channel_count: 1,
            tiles: vec![vec![1.0], vec![0.5019607843137255], vec![0.0]],
        };
        let img = untile(&ts).unwrap();
        assert_eq!(img.data, vec![255, 128, 0]);
    }

    #[test]
    fn untile_rejects_count_mismatch() {
        let ts = TileSet {
            tile_dim: 1,
            grid_w: 2,
            grid_h: 1,
            original_w: 2,
            original_h: 1,
            channel_count: 1,
            tiles: vec![vec![0.5]],
        };
        assert!(matches!(untile(&ts), Err(ImageError::MalformedTileSet(_))));
    }

    #[test]
    fn channel_blocks_are_concatenated_per_channel() {
        // 2x1 RGB image, tile_dim 1: expect R tiles then G then B
        let img = Image::new(2, 1, 3, vec![10, 20, 30, 40, 50, 60]).unwrap();
        let ts = tile(&img, 1).unwrap();
        let flat: Vec<f64> = ts.tiles.iter().map(|t| t[0] * 255.0).collect();
        assert_eq!(flat, vec![10.0, 40.0, 20.0, 50.0, 30.0, 60.0]);
    }

    proptest! {
        #[test]
        fn untile_tile_is_identity(
            w in 1u32..40,
            h in 1u32..40,
            channels in prop_oneof![Just(1u32), Just(3u32)],
            tile_dim in 1usize..12,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<u8> = (0..(w * h * channels) as usize).map(|_| rng.gen()).collect();
            let img = Image::new(w, h, channels, data).unwrap();
            let ts = tile(&img, tile_dim).unwrap();
            prop_assert!(ts.tiles.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert_eq!(untile(&ts).unwrap(), img);
        }
    }
}
