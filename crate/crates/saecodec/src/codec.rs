//! Image <-> compressed-payload transform and the .saec container format.
//!
//! Compression tiles the image, pushes every tile through the model's
//! encoder, and quantizes each code coefficient to a byte. The first tile's
//! first coefficient is additionally kept unquantized: it seeds the
//! encryption keystream.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::image_io::{self, Image, TileSet};
use crate::sae::{self, SaeModel};

const COMPRESSED_MAGIC: &[u8; 4] = b"SAEC";
const FORMAT_VERSION: u8 = 1;
/// Set in the version byte when the payload is ciphertext.
const ENCRYPTED_FLAG: u8 = 0x80;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("payload length mismatch: {0}")]
    LengthMismatch(String),
    #[error("unsupported format version {0}")]
    UnknownVersion(u8),
    #[error("payload is encrypted; decrypt it first")]
    Encrypted,
    #[error(transparent)]
    Sae(#[from] sae::SaeError),
    #[error(transparent)]
    Image(#[from] image_io::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Geometry and provenance of a compressed payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedHeader {
    pub original_w: u32,
    pub original_h: u32,
    pub channel_count: u32,
    pub tile_dim: u32,
    pub grid_w: u32,
    pub grid_h: u32,
    /// Width of one tile's code vector.
    pub code_dim: u32,
    /// Encoder depth the codes were taken at (1 = first hidden layer).
    pub code_level: u32,
    /// Content hash of the model that produced the codes.
    pub model_id: u64,
}

impl CompressedHeader {
    pub fn code_len(&self) -> usize {
        self.grid_w as usize
            * self.grid_h as usize
            * self.channel_count as usize
            * self.code_dim as usize
    }
}

/// Quantized bottleneck codes plus everything needed to invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedImage {
    pub header: CompressedHeader,
    /// The first tile's first code coefficient before quantization; the
    /// encryption key's x0 is derived from it.
    pub first_code_raw: f64,
    /// One byte per code coefficient; ciphertext when `encrypted`.
    pub codes: Vec<u8>,
    pub encrypted: bool,
}

impl CompressedImage {
    /// Compression ratio against 8-bit source pixels: tile_dim^2 / code_dim.
    pub fn compression_ratio(&self) -> f64 {
        (self.header.tile_dim * self.header.tile_dim) as f64 / self.header.code_dim as f64
    }

    /// Replace the payload, toggling the encrypted flag. Length must match.
    pub fn with_payload(&self, codes: Vec<u8>, encrypted: bool) -> Result<Self, CodecError> {
        if codes.len() != self.codes.len() {
            return Err(CodecError::LengthMismatch(format!(
                "payload of {} bytes cannot replace {}",
                codes.len(),
                self.codes.len()
            )));
        }
        Ok(CompressedImage { header: self.header.clone(), first_code_raw: self.first_code_raw, codes, encrypted })
    }
}

/// Quantize one code coefficient: `round(c * 255)` half-up, clamped.
fn quantize(c: f64) -> u8 {
    (c * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Compress at the model's bottleneck.
pub fn compress(img: &Image, model: &SaeModel) -> Result<CompressedImage, CodecError> {
    compress_at(img, model, model.bottleneck_index())
}

/// Compress with codes taken `level` encoder layers deep, selecting the
/// compression ratio on a multi-stage model.
pub fn compress_at(
    img: &Image,
    model: &SaeModel,
    level: usize,
) -> Result<CompressedImage, CodecError> {
    let tile_dim = (model.input_dim() as f64).sqrt().round() as usize;
    if tile_dim * tile_dim != model.input_dim() {
        return Err(CodecError::DimensionMismatch(format!(
            "model input dim {} is not a square tile",
            model.input_dim()
        )));
    }
    let tiles = image_io::tile(img, tile_dim)?;
    let code_dim = model.code_dim_at(level);

    let mut codes = Vec::with_capacity(tiles.tiles.len() * code_dim);
    let mut first_code_raw = None;
    for t in &tiles.tiles {
        let code = sae::encode_at(model, t, level)?;
        if first_code_raw.is_none() {
            first_code_raw = Some(code[0]);
        }
        codes.extend(code.iter().map(|&c| quantize(c)));
    }

    Ok(CompressedImage {
        header: CompressedHeader {
            original_w: tiles.original_w,
            original_h: tiles.original_h,
            channel_count: tiles.channel_count,
            tile_dim: tile_dim as u32,
            grid_w: tiles.grid_w as u32,
            grid_h: tiles.grid_h as u32,
            code_dim: code_dim as u32,
            code_level: level as u32,
            model_id: model.model_id(),
        },
        first_code_raw: first_code_raw.expect("tile() rejects empty images"),
        codes,
        encrypted: false,
    })
}

/// Invert `compress`: dequantize each code, decode it, and reassemble the
/// image from the header geometry.
///
/// A `model_id` mismatch is deliberately not an error here (models are
/// legitimately re-saved); callers that care should compare
/// `ci.header.model_id` with `model.model_id()` and warn.
pub fn decompress(ci: &CompressedImage, model: &SaeModel) -> Result<Image, CodecError> {
    if ci.encrypted {
        return Err(CodecError::Encrypted);
    }
    if ci.codes.len() != ci.header.code_len() {
        return Err(CodecError::LengthMismatch(format!(
            "header implies {} code bytes but payload has {}",
            ci.header.code_len(),
            ci.codes.len()
        )));
    }
    let level = ci.header.code_level as usize;
    if level == 0
        || level > model.bottleneck_index()
        || model.code_dim_at(level) != ci.header.code_dim as usize
    {
        return Err(CodecError::DimensionMismatch(format!(
            "payload codes are {}-wide at level {} but the model's level widths are {:?}",
            ci.header.code_dim,
            level,
            model.layer_dims()
        )));
    }

    let code_dim = ci.header.code_dim as usize;
    let mut tiles = Vec::with_capacity(ci.codes.len() / code_dim);
    let mut code = vec![0.0f64; code_dim];
    for chunk in ci.codes.chunks_exact(code_dim) {
        for (c, &b) in code.iter_mut().zip(chunk) {
            *c = b as f64 / 255.0;
        }
        tiles.push(sae::decode_at(model, &code, level)?);
    }

    let ts = TileSet {
        tile_dim: ci.header.tile_dim as usize,
        grid_w: ci.header.grid_w as usize,
        grid_h: ci.header.grid_h as usize,
        original_w: ci.header.original_w,
        original_h: ci.header.original_h,
        channel_count: ci.header.channel_count,
        tiles,
    };
    Ok(image_io::untile(&ts)?)
}

/// Render the raw payload bytes as a grayscale image (one pixel per code
/// byte, `grid_w * code_dim` wide). Used for correlation analysis of
/// ciphertext and works on encrypted payloads.
pub fn codes_as_image(ci: &CompressedImage) -> Result<Image, CodecError> {
    let w = ci.header.grid_w * ci.header.code_dim;
    let h = ci.header.grid_h * ci.header.channel_count;
    if ci.codes.len() != (w as usize) * (h as usize) {
        return Err(CodecError::LengthMismatch(format!(
            "{} code bytes do not fill a {w}x{h} raster",
            ci.codes.len()
        )));
    }
    Ok(Image::new(w, h, 1, ci.codes.clone())?)
}

impl CompressedImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(49 + self.codes.len());
        out.extend_from_slice(COMPRESSED_MAGIC);
        out.push(FORMAT_VERSION | if self.encrypted { ENCRYPTED_FLAG } else { 0 });
        for field in [
            h.original_w,
            h.original_h,
            h.channel_count,
            h.tile_dim,
            h.grid_w,
            h.grid_h,
            h.code_dim,
            h.code_level,
        ] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        out.extend_from_slice(&h.model_id.to_le_bytes());
        out.extend_from_slice(&self.first_code_raw.to_le_bytes());
        out.extend_from_slice(&self.codes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        const HEADER_LEN: usize = 4 + 1 + 8 * 4 + 8 + 8;
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::CorruptHeader("file shorter than header".into()));
        }
        if &bytes[..4] != COMPRESSED_MAGIC {
            return Err(CodecError::CorruptHeader("bad magic bytes".into()));
        }
        let version_byte = bytes[4];
        let encrypted = version_byte & ENCRYPTED_FLAG != 0;
        let version = version_byte & !ENCRYPTED_FLAG;
        if version != FORMAT_VERSION {
            return Err(CodecError::UnknownVersion(version));
        }
        let mut fields = [0u32; 8];
        for (i, f) in fields.iter_mut().enumerate() {
            let at = 5 + i * 4;
            *f = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        }
        let model_id = u64::from_le_bytes(bytes[37..45].try_into().unwrap());
        let first_code_raw = f64::from_le_bytes(bytes[45..53].try_into().unwrap());
        let header = CompressedHeader {
            original_w: fields[0],
            original_h: fields[1],
            channel_count: fields[2],
            tile_dim: fields[3],
            grid_w: fields[4],
            grid_h: fields[5],
            code_dim: fields[6],
            code_level: fields[7],
            model_id,
        };
        let codes = bytes[53..].to_vec();
        if codes.len() != header.code_len() {
            return Err(CodecError::LengthMismatch(format!(
                "header implies {} code bytes but file carries {}",
                header.code_len(),
                codes.len()
            )));
        }
        if !(first_code_raw > 0.0 && first_code_raw < 1.0) {
            return Err(CodecError::CorruptHeader(format!(
                "first_code_raw {first_code_raw} outside (0, 1)"
            )));
        }
        Ok(CompressedImage { header, first_code_raw, codes, encrypted })
    }
}

pub fn write_compressed(ci: &CompressedImage, path: impl AsRef<Path>) -> Result<(), CodecError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&ci.to_bytes())?;
    Ok(())
}

pub fn read_compressed(path: impl AsRef<Path>) -> Result<CompressedImage, CodecError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    CompressedImage::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: u32, h: u32, channels: u32) -> Image {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                for c in 0..channels {
                    data.push(((x * 2 + y * 3 + c * 40) % 256) as u8);
                }
            }
        }
        Image::new(w, h, channels, data).unwrap()
    }

    #[test]
    fn quantization_endpoints() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        // 0.5 * 255 = 127.5 rounds half-up to 128
        assert_eq!(quantize(0.5), 128);
    }

    #[test]
    fn compress_payload_sizes_and_ratio() {
        let img = gradient_image(64, 64, 1);
        let model = SaeModel::random(&[64, 16, 4, 16, 64], 1).unwrap();

        let h1 = compress_at(&img, &model, 1).unwrap();
        assert_eq!(h1.codes.len(), 64 * 16); // 64 tiles x 16 coefficients
        assert_eq!(h1.compression_ratio(), 4.0);

        let h2 = compress(&img, &model).unwrap();
        assert_eq!(h2.codes.len(), 64 * 4);
        assert_eq!(h2.compression_ratio(), 16.0);
        assert_eq!(h2.header.code_level, 2);

        let rgb = gradient_image(64, 64, 3);
        let c = compress(&rgb, &model).unwrap();
        assert_eq!(c.codes.len(), 3 * 64 * 4);
    }

    #[test]
    fn decompress_round_trip_geometry() {
        let img = gradient_image(20, 12, 3); // forces edge padding
        let model = SaeModel::random(&[64, 16, 4, 16, 64], 2).unwrap();
        let ci = compress(&img, &model).unwrap();
        let out = decompress(&ci, &model).unwrap();
        assert_eq!((out.width, out.height, out.channels), (20, 12, 3));
    }

    #[test]
    fn zero_model_decompresses_to_constant() {
        let img = gradient_image(16, 16, 1);
        let model = SaeModel::zeros(&[64, 16, 64]).unwrap();
        let ci = compress(&img, &model).unwrap();
        // all codes are sigmoid(0) = 0.5 -> byte 128
        assert!(ci.codes.iter().all(|&b| b == 128));
        let out = decompress(&ci, &model).unwrap();
        let expected = (crate::sae::sigmoid(0.0) * 255.0 + 0.5).floor() as u8;
        assert!(out.data.iter().all(|&p| p == expected));
    }

    #[test]
    fn container_round_trip_and_errors() {
        let img = gradient_image(16, 8, 1);
        let model = SaeModel::random(&[64, 16, 64], 3).unwrap();
        let ci = compress(&img, &model).unwrap();

        let bytes = ci.to_bytes();
        assert_eq!(CompressedImage::from_bytes(&bytes).unwrap(), ci);

        // payload shorter than the header promises
        assert!(matches!(
            CompressedImage::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CodecError::LengthMismatch(_))
        ));

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'Z';
        assert!(matches!(
            CompressedImage::from_bytes(&bad_magic),
            Err(CodecError::CorruptHeader(_))
        ));

        let mut bad_version = bytes.clone();
        bad_version[4] = 7;
        assert!(matches!(
            CompressedImage::from_bytes(&bad_version),
            Err(CodecError::UnknownVersion(7))
        ));
    }

    #[test]
    fn compressed_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.saec");
        let img = gradient_image(16, 16, 1);
        let model = SaeModel::random(&[64, 16, 64], 4).unwrap();
        let ci = compress(&img, &model).unwrap();
        write_compressed(&ci, &path).unwrap();
        assert_eq!(read_compressed(&path).unwrap(), ci);
    }

    #[test]
    fn decompress_rejects_wrong_width_model() {
        let img = gradient_image(16, 16, 1);
        let model = SaeModel::random(&[64, 16, 64], 5).unwrap();
        let ci = compress(&img, &model).unwrap();
        let other = SaeModel::random(&[64, 8, 64], 5).unwrap();
        assert!(matches!(
            decompress(&ci, &other),
            Err(CodecError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn encrypted_flag_survives_serialization() {
        let img = gradient_image(16, 16, 1);
        let model = SaeModel::random(&[64, 16, 64], 6).unwrap();
        let ci = compress(&img, &model).unwrap();
        let enc = ci.with_payload(ci.codes.clone(), true).unwrap();
        let back = CompressedImage::from_bytes(&enc.to_bytes()).unwrap();
        assert!(back.encrypted);
        assert!(matches!(decompress(&back, &model), Err(CodecError::Encrypted)));
    }

    #[test]
    fn codes_render_as_grayscale_image() {
        let img = gradient_image(16, 16, 3);
        let model = SaeModel::random(&[64, 16, 4, 16, 64], 7).unwrap();
        let ci = compress(&img, &model).unwrap();
        let rendered = codes_as_image(&ci).unwrap();
        assert_eq!(rendered.width, ci.header.grid_w * ci.header.code_dim);
        assert_eq!(rendered.height, ci.header.grid_h * ci.header.channel_count);
        assert_eq!(rendered.channels, 1);
    }
}
