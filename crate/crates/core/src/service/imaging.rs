//! PNG decoding to `[0, 1]` floats and display encoding.

use std::io::Cursor;

use image::{ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

/// Pixel data as `h × w × c` row-major floats in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedImage {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
    /// Largest code value of the source bit depth (255 or 65535).
    pub max_value: f64,
}

/// Decode a grayscale or RGB PNG; alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<DecodedImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::validation(format!("cannot decode PNG: {e}")))?;
    let color = img.color();
    let sixteen = color.bytes_per_pixel() / color.channel_count() >= 2;
    let max_value = if sixteen { 65535.0 } else { 255.0 };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (c, raw): (usize, Vec<u16>) = match (color.has_color(), sixteen) {
        (false, false) => (1, img.to_luma8().into_raw().into_iter().map(u16::from).collect()),
        (false, true) => (1, img.to_luma16().into_raw()),
        (true, false) => (3, img.to_rgb8().into_raw().into_iter().map(u16::from).collect()),
        (true, true) => (3, img.to_rgb16().into_raw()),
    };
    Ok(DecodedImage {
        shape: [h, w, c],
        data: raw.into_iter().map(|v| v as f64 / max_value).collect(),
        max_value,
    })
}

/// 8-bit PNG of `values` clamped to `[0, 1]`. One or three channels.
pub fn encode_png(shape: [usize; 3], values: &[f64]) -> Result<Vec<u8>> {
    let [h, w, c] = shape;
    if h * w * c != values.len() {
        return Err(Error::validation("image shape does not match the data length"));
    }
    let color = match c {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        _ => return Err(Error::validation(format!("cannot render {c} channels"))),
    };
    let pixels: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(&pixels, w as u32, h as u32, color)
        .map_err(|e| Error::validation(format!("PNG encoding failed: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_8bit() {
        let vals: Vec<f64> = (0..12).map(|i| i as f64 / 255.0).collect();
        let png = encode_png([2, 2, 3], &vals).unwrap();
        let back = decode_png(&png).unwrap();
        assert_eq!(back.shape, [2, 2, 3]);
        assert_eq!(back.max_value, 255.0);
        assert_eq!(back.data, vals);
    }

    #[test]
    fn garbage_is_validation_error() {
        assert!(matches!(decode_png(b"not a png"), Err(Error::Validation(_))));
    }
}
