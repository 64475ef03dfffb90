//! Single-page grayscale TIFF: 32-bit unsigned label masks and 32-bit float
//! images, uncompressed, one row per strip.

use std::io::Cursor;
use std::path::Path;

use fracbench_core::volume::MultiLabelMask2D;
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;
use tiff::ColorType;

use super::{read_file, write_atomic, DEFAULT_MAX_BYTES};
use crate::error::{Error, Result};

fn tiff_err(e: tiff::TiffError) -> Error {
    match e {
        tiff::TiffError::UnsupportedError(u) => Error::UnsupportedFormat(u.to_string()),
        tiff::TiffError::LimitsExceeded => Error::TooLarge { size: 0, cap: DEFAULT_MAX_BYTES },
        other => Error::Parse(format!("tiff: {other}")),
    }
}

fn encode<C: colortype::ColorType>(width: usize, height: usize, data: &[C::Inner]) -> Result<Vec<u8>>
where
    [C::Inner]: tiff::encoder::TiffValue,
{
    let (w, h) = (u32::try_from(width), u32::try_from(height));
    let (Ok(w), Ok(h)) = (w, h) else {
        return Err(Error::Input("image too large for TIFF".into()));
    };
    let mut buf = Cursor::new(Vec::new());
    let mut enc = TiffEncoder::new(&mut buf).map_err(tiff_err)?;
    let mut img = enc.new_image::<C>(w, h).map_err(tiff_err)?;
    img.rows_per_strip(1).map_err(tiff_err)?;
    for row in data.chunks(width.max(1)) {
        img.write_strip(row).map_err(tiff_err)?;
    }
    img.finish().map_err(tiff_err)?;
    Ok(buf.into_inner())
}

fn decode(bytes: &[u8], max_bytes: u64) -> Result<(usize, usize, DecodingResult)> {
    let mut limits = Limits::default();
    limits.decoding_buffer_size = usize::try_from(max_bytes).unwrap_or(usize::MAX);
    let mut dec = Decoder::new(Cursor::new(bytes)).map_err(tiff_err)?.with_limits(limits);
    let (w, h) = dec.dimensions().map_err(tiff_err)?;
    let color = dec.colortype().map_err(tiff_err)?;
    if color != ColorType::Gray(32) {
        return Err(Error::UnsupportedFormat(format!("{color:?} samples, expected 32-bit grayscale")));
    }
    if let Some(c) = dec.find_tag_unsigned::<u32>(Tag::Compression).map_err(tiff_err)? {
        if c != 1 {
            return Err(Error::UnsupportedFormat(format!("compression scheme {c}")));
        }
    }
    let size = w as u64 * h as u64 * 4;
    if size > max_bytes {
        return Err(Error::TooLarge { size, cap: max_bytes });
    }
    let data = dec.read_image().map_err(tiff_err)?;
    Ok((w as usize, h as usize, data))
}

pub fn encode_mask_tiff(mask: &MultiLabelMask2D) -> Result<Vec<u8>> {
    encode::<colortype::Gray32>(mask.width(), mask.height(), mask.pixels())
}

/// Decodes a label mask. Only uint32 grayscale is accepted.
pub fn decode_mask_tiff(bytes: &[u8], max_bytes: u64) -> Result<MultiLabelMask2D> {
    match decode(bytes, max_bytes)? {
        (w, h, DecodingResult::U32(px)) => Ok(MultiLabelMask2D::new(w, h, px)?),
        _ => Err(Error::UnsupportedFormat("mask samples are not unsigned integers".into())),
    }
}

pub fn write_mask_tiff(mask: &MultiLabelMask2D, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mask_tiff(mask)?)
}

pub fn read_mask_tiff(path: &Path) -> Result<MultiLabelMask2D> {
    decode_mask_tiff(&read_file(path, DEFAULT_MAX_BYTES)?, DEFAULT_MAX_BYTES)
}

/// Row-major float image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

pub fn encode_float_tiff(image: &FloatImage) -> Result<Vec<u8>> {
    if image.pixels.len() != image.width * image.height {
        return Err(Error::Internal("image size does not match its pixel count".into()));
    }
    encode::<colortype::Gray32Float>(image.width, image.height, &image.pixels)
}

pub fn decode_float_tiff(bytes: &[u8], max_bytes: u64) -> Result<FloatImage> {
    match decode(bytes, max_bytes)? {
        (width, height, DecodingResult::F32(pixels)) => Ok(FloatImage { width, height, pixels }),
        _ => Err(Error::UnsupportedFormat("image samples are not 32-bit floats".into())),
    }
}

pub fn write_float_tiff(image: &FloatImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_float_tiff(image)?)
}

pub fn read_float_tiff(path: &Path) -> Result<FloatImage> {
    decode_float_tiff(&read_file(path, DEFAULT_MAX_BYTES)?, DEFAULT_MAX_BYTES)
}
