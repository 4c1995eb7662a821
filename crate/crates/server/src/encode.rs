use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use seedforge_core::Shape;

/// Packs booleans row-major, most significant bit first, and base64-encodes
/// the bytes. The final byte is zero-padded.
pub fn bitfield(bits: impl IntoIterator<Item = bool>) -> String {
    let mut bytes = Vec::new();
    for (i, b) in bits.into_iter().enumerate() {
        if i % 8 == 0 {
            bytes.push(0u8);
        }
        if b {
            *bytes.last_mut().expect("pushed above") |= 0x80 >> (i % 8);
        }
    }
    STANDARD.encode(bytes)
}

/// Inverse of [`bitfield`] for `len` entries.
pub fn decode_bitfield(text: &str, len: usize) -> Option<Vec<bool>> {
    let bytes = STANDARD.decode(text).ok()?;
    if bytes.len() != len.div_ceil(8) {
        return None;
    }
    Some((0..len).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect())
}

/// 8-bit grayscale PNG of a 2-D grid.
pub fn png_gray8(shape: &Shape, samples: &[u8]) -> Result<Vec<u8>, png::EncodingError> {
    let dims = shape.dims();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, dims[1] as u32, dims[0] as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(samples)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first() {
        let bits = [true, false, false, false, false, false, false, true, true];
        assert_eq!(STANDARD.decode(bitfield(bits)).unwrap(), vec![0x81, 0x80]);
        assert_eq!(decode_bitfield(&bitfield(bits), 9).unwrap(), bits.to_vec());
        assert!(decode_bitfield(&bitfield(bits), 17).is_none());
    }
}
