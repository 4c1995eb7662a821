//! Raster file formats: binary PGM (P5) for 2-D and the `grid3d` raw format
//! for volumes.
//!
//! `grid3d` is an ASCII header `G3D <dx> <dy> <dz> <bits>\n` followed by
//! row-major little-endian unsigned samples (x fastest). Masks are written with
//! FG=255, BG=128, UNLABELED=0.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{normalize_intensities, BinaryMask, ImageGrid, Label, LabelMap, SeedMask, Shape, StrengthMap};

pub const MASK_FG: u8 = 255;
pub const MASK_BG: u8 = 128;
pub const MASK_UNLABELED: u8 = 0;

/// Decoded raster before normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawRaster {
    /// Slowest axis first (`[height, width]` or `[depth, height, width]`).
    pub dims: Vec<usize>,
    pub samples: Vec<u16>,
    pub maxval: u16,
}

impl RawRaster {
    pub fn to_grid(&self) -> Result<ImageGrid> {
        let raw: Vec<f64> = self.samples.iter().map(|&s| f64::from(s)).collect();
        normalize_intensities(&self.dims, &raw)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    Grid3d,
}

impl RasterFormat {
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(b"P5") {
            Some(RasterFormat::Pgm)
        } else if bytes.starts_with(b"G3D ") {
            Some(RasterFormat::Grid3d)
        } else {
            None
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::Pgm => "pgm",
            RasterFormat::Grid3d => "g3d",
        }
    }

    /// PGM for 2-D grids, `grid3d` for volumes.
    pub fn for_shape(shape: &Shape) -> Self {
        if shape.ndim() == 2 {
            RasterFormat::Pgm
        } else {
            RasterFormat::Grid3d
        }
    }
}

pub fn decode_raster(bytes: &[u8]) -> Result<RawRaster> {
    match RasterFormat::sniff(bytes) {
        Some(RasterFormat::Pgm) => decode_pgm(bytes),
        Some(RasterFormat::Grid3d) => decode_grid3d(bytes),
        None => Err(Error::Format(
            "expected a binary PGM (P5) or grid3d (G3D) raster".into(),
        )),
    }
}

pub fn read_raster(path: &Path) -> Result<RawRaster> {
    let bytes = std::fs::read(path)?;
    decode_raster(&bytes)
}

pub fn read_grid(path: &Path) -> Result<ImageGrid> {
    read_raster(path)?.to_grid()
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("bad {what} in header")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<RawRaster> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("missing P5 magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Ingest("empty raster".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the samples
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::Format("truncated header".into()));
    }
    let data = &bytes[cur.pos + 1..];
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let samples = read_samples(data, n, maxval > 255, Endian::Big)?;
    Ok(RawRaster {
        dims: vec![height, width],
        samples,
        maxval: maxval as u16,
    })
}

pub fn decode_grid3d(bytes: &[u8]) -> Result<RawRaster> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing grid3d header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("grid3d header is not ASCII".into()))?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 5 || fields[0] != "G3D" {
        return Err(Error::Format(format!("bad grid3d header {header:?}")));
    }
    let parse = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Format(format!("bad grid3d field {s:?}"))) };
    let (dx, dy, dz, bits) = (
        parse(fields[1])?,
        parse(fields[2])?,
        parse(fields[3])?,
        parse(fields[4])?,
    );
    if bits != 8 && bits != 16 {
        return Err(Error::Format(format!("grid3d supports 8 or 16 bits, got {bits}")));
    }
    if dx == 0 || dy == 0 || dz == 0 {
        return Err(Error::Ingest("empty raster".into()));
    }
    let n = dx
        .checked_mul(dy)
        .and_then(|v| v.checked_mul(dz))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let samples = read_samples(&bytes[nl + 1..], n, bits == 16, Endian::Little)?;
    let maxval = if bits == 16 { u16::MAX } else { 255 };
    Ok(RawRaster {
        dims: vec![dz, dy, dx],
        samples,
        maxval,
    })
}

#[derive(Clone, Copy)]
enum Endian {
    Big,
    Little,
}

fn read_samples(data: &[u8], n: usize, wide: bool, endian: Endian) -> Result<Vec<u16>> {
    let need = if wide { 2 * n } else { n };
    if data.len() < need {
        return Err(Error::Format(format!(
            "truncated sample data: {} of {need} bytes",
            data.len()
        )));
    }
    if !wide {
        return Ok(data[..n].iter().map(|&b| u16::from(b)).collect());
    }
    Ok(data[..need]
        .chunks_exact(2)
        .map(|c| match endian {
            Endian::Big => u16::from_be_bytes([c[0], c[1]]),
            Endian::Little => u16::from_le_bytes([c[0], c[1]]),
        })
        .collect())
}

/// Encodes 8-bit samples in the natural format for `shape`.
pub fn encode_u8(shape: &Shape, samples: &[u8]) -> Vec<u8> {
    assert_eq!(samples.len(), shape.len());
    let d = shape.dims();
    let mut out = Vec::with_capacity(samples.len() + 32);
    if d.len() == 2 {
        writeln!(out, "P5\n{} {}\n255", d[1], d[0]).unwrap();
    } else {
        writeln!(out, "G3D {} {} {} 8", d[2], d[1], d[0]).unwrap();
    }
    out.extend_from_slice(samples);
    out
}

/// Encodes 16-bit samples (PGM big-endian, grid3d little-endian).
pub fn encode_u16(shape: &Shape, samples: &[u16], maxval: u16) -> Vec<u8> {
    assert_eq!(samples.len(), shape.len());
    let d = shape.dims();
    let mut out = Vec::with_capacity(2 * samples.len() + 32);
    if d.len() == 2 {
        write!(out, "P5\n{} {}\n{}\n", d[1], d[0], maxval.max(256)).unwrap();
        for s in samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        writeln!(out, "G3D {} {} {} 16", d[2], d[1], d[0]).unwrap();
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
    }
    out
}

pub fn seed_mask_bytes(mask: &SeedMask) -> Vec<u8> {
    mask.labels()
        .iter()
        .map(|l| match l {
            Label::Fg => MASK_FG,
            Label::Bg => MASK_BG,
            Label::Unlabeled => MASK_UNLABELED,
        })
        .collect()
}

pub fn label_map_bytes(labels: &LabelMap) -> Vec<u8> {
    labels
        .mask()
        .bits()
        .iter()
        .map(|&fg| if fg { MASK_FG } else { MASK_BG })
        .collect()
}

/// Unit-interval field quantized to 8 bits.
pub fn unit_field_bytes(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn encode_seed_mask(mask: &SeedMask) -> Vec<u8> {
    encode_u8(mask.shape(), &seed_mask_bytes(mask))
}

pub fn encode_label_map(labels: &LabelMap) -> Vec<u8> {
    encode_u8(labels.shape(), &label_map_bytes(labels))
}

pub fn encode_strength_map(strength: &StrengthMap) -> Vec<u8> {
    encode_u8(strength.shape(), &unit_field_bytes(strength.weights()))
}

/// Quantizes a normalized grid to 8 bits.
pub fn encode_grid_u8(grid: &ImageGrid) -> Vec<u8> {
    encode_u8(grid.shape(), &unit_field_bytes(grid.values()))
}

/// Reads a seed mask written with the FG=255 / BG=128 / UNLABELED=0 codes.
pub fn decode_seed_mask(bytes: &[u8]) -> Result<SeedMask> {
    let raw = decode_raster(bytes)?;
    let shape = Shape::new(&raw.dims)?;
    let labels = raw
        .samples
        .iter()
        .map(|&s| match s {
            0 => Ok(Label::Unlabeled),
            128 => Ok(Label::Bg),
            255 => Ok(Label::Fg),
            other => Err(Error::Format(format!("sample {other} is not a mask code"))),
        })
        .collect::<Result<Vec<_>>>()?;
    SeedMask::from_labels(shape, labels)
}

/// Binary truth mask: FG where a sample exceeds three quarters of maxval, so
/// both 0/255 masks and label maps (BG=128) decode correctly.
pub fn decode_binary_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let raw = decode_raster(bytes)?;
    let shape = Shape::new(&raw.dims)?;
    let cut = 0.75 * f64::from(raw.maxval);
    Ok(BinaryMask::from_fn(shape, |i| f64::from(raw.samples[i]) > cut))
}

pub fn encode_binary_mask(mask: &BinaryMask) -> Vec<u8> {
    let bytes: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_u8(mask.shape(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_8bit_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 4, 255]);
        let r = decode_pgm(&bytes).unwrap();
        assert_eq!(r.dims, vec![2, 3]);
        assert_eq!(r.samples, vec![0, 1, 2, 3, 4, 255]);
    }

    #[test]
    fn pgm_16bit_big_endian() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0x01, 0x02, 0xff, 0x00]);
        let r = decode_pgm(&bytes).unwrap();
        assert_eq!(r.samples, vec![0x0102, 0xff00]);
        let shape = Shape::new(&r.dims).unwrap();
        assert_eq!(decode_pgm(&encode_u16(&shape, &r.samples, 65535)).unwrap(), r);
    }

    #[test]
    fn grid3d_roundtrip_little_endian() {
        let shape = Shape::new(&[2, 1, 3]).unwrap();
        let samples: Vec<u16> = vec![1, 2, 3, 256, 512, 65535];
        let bytes = encode_u16(&shape, &samples, u16::MAX);
        assert!(bytes.starts_with(b"G3D 3 1 2 16\n"));
        assert_eq!(&bytes[13..15], &[1, 0]);
        let r = decode_grid3d(&bytes).unwrap();
        assert_eq!(r.dims, vec![2, 1, 3]);
        assert_eq!(r.samples, samples);
    }

    #[test]
    fn truncated_and_unknown() {
        assert!(decode_pgm(b"P5 4 4 255\n\x00\x01").is_err());
        assert!(matches!(decode_raster(b"GIF89a"), Err(Error::Format(_))));
        assert!(decode_grid3d(b"G3D 1 1 1 12\n\x00").is_err());
    }

    #[test]
    fn mask_codes_roundtrip() {
        let shape = Shape::new(&[1, 3]).unwrap();
        let m = SeedMask::from_labels(shape, vec![Label::Fg, Label::Bg, Label::Unlabeled]).unwrap();
        let bytes = encode_seed_mask(&m);
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 128, 0]);
        assert_eq!(decode_seed_mask(&bytes).unwrap(), m);
    }
}
