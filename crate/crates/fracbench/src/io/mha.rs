//! MetaImage (`.mha`) volumes with a local, optionally zlib-compressed
//! payload.

use std::io::{Read, Write};
use std::path::Path;

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use fracbench_core::volume::{Grid, IntensityVolume, LabelVolume};

use super::{read_file, write_atomic, DEFAULT_MAX_BYTES};
use crate::error::{Error, Result};

const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
const MAX_HEADER_BYTES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Short,
    UShort,
    Float,
}

impl ElementType {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "MET_UCHAR" => Self::UChar,
            "MET_SHORT" => Self::Short,
            "MET_USHORT" => Self::UShort,
            "MET_FLOAT" => Self::Float,
            other => return Err(Error::UnsupportedFormat(format!("element type {other}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::UChar => "MET_UCHAR",
            Self::Short => "MET_SHORT",
            Self::UShort => "MET_USHORT",
            Self::Float => "MET_FLOAT",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Self::UChar => 1,
            Self::Short | Self::UShort => 2,
            Self::Float => 4,
        }
    }
}

/// Parsed header. Keys the reader does not interpret are kept in `extra`,
/// in file order, and written back after `Offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct MhaHeader {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub offset: [f64; 3],
    pub transform: [f64; 9],
    pub element_type: ElementType,
    pub compressed: bool,
    pub extra: Vec<(String, String)>,
}

impl MhaHeader {
    pub fn new(grid: &Grid, element_type: ElementType, compressed: bool) -> Self {
        Self {
            dims: grid.dims,
            spacing: grid.spacing,
            offset: grid.offset,
            transform: IDENTITY,
            element_type,
            compressed,
            extra: vec![
                ("CenterOfRotation".into(), "0 0 0".into()),
                ("AnatomicalOrientation".into(), "RAI".into()),
            ],
        }
    }

    /// Grid of the volume; only axis-aligned directions are accepted.
    pub fn grid(&self) -> Result<Grid> {
        if self.transform != IDENTITY {
            return Err(Error::UnsupportedFormat("non-identity TransformMatrix".into()));
        }
        Ok(Grid::new(self.dims, self.spacing, self.offset)?)
    }

    fn len(&self) -> Result<usize> {
        self.dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Parse("DimSize overflows".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MhaData {
    UChar(Vec<u8>),
    Short(Vec<i16>),
    UShort(Vec<u16>),
    Float(Vec<f32>),
}

impl MhaData {
    fn element_type(&self) -> ElementType {
        match self {
            Self::UChar(_) => ElementType::UChar,
            Self::Short(_) => ElementType::Short,
            Self::UShort(_) => ElementType::UShort,
            Self::Float(_) => ElementType::Float,
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::UChar(v) => v.len(),
            Self::Short(v) => v.len(),
            Self::UShort(v) => v.len(),
            Self::Float(v) => v.len(),
        }
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            Self::UChar(v) => v.clone(),
            Self::Short(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Self::UShort(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Self::Float(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn from_bytes(ty: ElementType, b: &[u8], msb: bool) -> Self {
        macro_rules! decode {
            ($t:ty, $n:literal) => {
                b.chunks_exact($n)
                    .map(|c| {
                        let a: [u8; $n] = c.try_into().unwrap();
                        if msb { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }
                    })
                    .collect()
            };
        }
        match ty {
            ElementType::UChar => Self::UChar(b.to_vec()),
            ElementType::Short => Self::Short(decode!(i16, 2)),
            ElementType::UShort => Self::UShort(decode!(u16, 2)),
            ElementType::Float => Self::Float(decode!(f32, 4)),
        }
    }

    /// Integer label values, or `None` for a float payload with a
    /// non-integral or out-of-range value.
    fn as_labels(&self) -> std::result::Result<Vec<u8>, u32> {
        fn conv(v: i64) -> std::result::Result<u8, u32> {
            u8::try_from(v).map_err(|_| v.clamp(0, u32::MAX as i64) as u32)
        }
        match self {
            Self::UChar(v) => Ok(v.clone()),
            Self::Short(v) => v.iter().map(|&x| conv(x as i64)).collect(),
            Self::UShort(v) => v.iter().map(|&x| conv(x as i64)).collect(),
            Self::Float(v) => v
                .iter()
                .map(|&x| if x.fract() == 0.0 && x.is_finite() { conv(x as i64) } else { Err(u32::MAX) })
                .collect(),
        }
    }

    fn to_f32(&self) -> Vec<f32> {
        match self {
            Self::UChar(v) => v.iter().map(|&x| x as f32).collect(),
            Self::Short(v) => v.iter().map(|&x| x as f32).collect(),
            Self::UShort(v) => v.iter().map(|&x| x as f32).collect(),
            Self::Float(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhaImage {
    pub header: MhaHeader,
    pub data: MhaData,
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Largest decoded payload, in bytes, the reader will allocate.
    pub max_bytes: u64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self { max_bytes: DEFAULT_MAX_BYTES }
    }
}

fn parse_floats<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
    let vals: Vec<f64> = v
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("{key}: bad number {t:?}"))))
        .collect::<Result<_>>()?;
    vals.try_into().map_err(|_| Error::Parse(format!("{key}: expected {N} values")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::Parse(format!("{key}: expected True or False, got {v:?}"))),
    }
}

/// Decodes an in-memory `.mha` file.
pub fn parse_mha(bytes: &[u8], opts: &ReadOptions) -> Result<MhaImage> {
    let mut pos = 0;
    let mut ndims = None;
    let mut dims = None;
    let mut spacing = None;
    let mut offset = [0.0; 3];
    let mut transform = IDENTITY;
    let mut element_type = None;
    let mut compressed = false;
    let mut compressed_size = None;
    let mut msb = false;
    let mut extra = Vec::new();
    let mut data_file = None;

    while data_file.is_none() {
        if pos >= bytes.len() || pos > MAX_HEADER_BYTES {
            return Err(Error::Parse("header has no ElementDataFile entry".into()));
        }
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| Error::Parse("header is not text".into()))?
            .trim();
        pos = end + 1;
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Parse(format!("header line without '=': {line:?}")))?;
        match key {
            "ObjectType" if value != "Image" => {
                return Err(Error::UnsupportedFormat(format!("ObjectType {value}")));
            }
            "ObjectType" => {}
            "NDims" => ndims = Some(value.parse::<usize>().map_err(|_| Error::Parse(format!("NDims {value:?}")))?),
            "DimSize" => {
                let d: Vec<usize> = value
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| Error::Parse(format!("DimSize {value:?}"))))
                    .collect::<Result<_>>()?;
                dims = Some(d);
            }
            "ElementSpacing" | "ElementSize" => spacing = Some(parse_floats::<3>(key, value)?),
            "Offset" | "Position" | "Origin" => offset = parse_floats::<3>(key, value)?,
            "TransformMatrix" | "Rotation" | "Orientation" => transform = parse_floats::<9>(key, value)?,
            "ElementType" => element_type = Some(ElementType::parse(value)?),
            "CompressedData" => compressed = parse_bool(key, value)?,
            "CompressedDataSize" => {
                compressed_size =
                    Some(value.parse::<u64>().map_err(|_| Error::Parse(format!("CompressedDataSize {value:?}")))?)
            }
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" => msb = parse_bool(key, value)?,
            "BinaryData" if !parse_bool(key, value)? => {
                return Err(Error::UnsupportedFormat("ASCII payload".into()));
            }
            "BinaryData" => {}
            "ElementNumberOfChannels" if value != "1" => {
                return Err(Error::UnsupportedFormat(format!("{value} channels")));
            }
            "ElementNumberOfChannels" => {}
            "ElementDataFile" => data_file = Some(value.to_string()),
            _ => extra.push((key.to_string(), value.to_string())),
        }
    }

    if data_file.as_deref() != Some("LOCAL") {
        return Err(Error::UnsupportedFormat("external data file".into()));
    }
    let ndims = ndims.ok_or_else(|| Error::Parse("missing NDims".into()))?;
    if ndims != 3 {
        return Err(Error::UnsupportedFormat(format!("NDims = {ndims}")));
    }
    let dims: [usize; 3] = dims
        .ok_or_else(|| Error::Parse("missing DimSize".into()))?
        .try_into()
        .map_err(|_| Error::Parse("DimSize must have 3 entries".into()))?;
    let element_type = element_type.ok_or_else(|| Error::Parse("missing ElementType".into()))?;
    let header = MhaHeader {
        dims,
        spacing: spacing.unwrap_or([1.0; 3]),
        offset,
        transform,
        element_type,
        compressed,
        extra,
    };
    let n = header.len()?;
    let size = (n as u64).saturating_mul(element_type.size() as u64);
    if size > opts.max_bytes {
        return Err(Error::TooLarge { size, cap: opts.max_bytes });
    }
    let size = size as usize;

    let payload = &bytes[pos.min(bytes.len())..];
    let raw;
    let body: &[u8] = if compressed {
        let stream = match compressed_size {
            Some(c) if c as usize <= payload.len() => &payload[..c as usize],
            Some(_) => return Err(Error::Parse("compressed payload is truncated".into())),
            None => payload,
        };
        let mut out = Vec::with_capacity(size);
        ZlibDecoder::new(stream)
            .take(size as u64 + 1)
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse(format!("zlib: {e}")))?;
        if out.len() != size {
            return Err(Error::Parse(format!("decompressed {} bytes, expected {size}", out.len())));
        }
        raw = out;
        &raw
    } else {
        if payload.len() < size {
            return Err(Error::Parse(format!("payload has {} bytes, expected {size}", payload.len())));
        }
        &payload[..size]
    };
    let data = MhaData::from_bytes(element_type, body, msb);
    Ok(MhaImage { header, data })
}

pub fn read_mha(path: &Path, opts: &ReadOptions) -> Result<MhaImage> {
    let bytes = read_file(path, opts.max_bytes)?;
    parse_mha(&bytes, opts).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

/// Serializes an image; the payload is always little-endian.
pub fn encode_mha(image: &MhaImage) -> Result<Vec<u8>> {
    let h = &image.header;
    if image.data.element_type() != h.element_type || image.data.len() != h.len()? {
        return Err(Error::Internal("MHA header does not describe its payload".into()));
    }
    let raw = image.data.to_le_bytes();
    let body = if h.compressed {
        let mut enc = ZlibEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&raw).and_then(|_| enc.finish()).map_err(|e| Error::Internal(e.to_string()))?
    } else {
        raw
    };
    let mut head = String::new();
    let mut line = |k: &str, v: &str| {
        head.push_str(k);
        head.push_str(" = ");
        head.push_str(v);
        head.push('\n');
    };
    line("ObjectType", "Image");
    line("NDims", "3");
    line("BinaryData", "True");
    line("BinaryDataByteOrderMSB", "False");
    line("CompressedData", if h.compressed { "True" } else { "False" });
    if h.compressed {
        line("CompressedDataSize", &body.len().to_string());
    }
    line("TransformMatrix", &join(&h.transform));
    line("Offset", &join(&h.offset));
    for (k, v) in &h.extra {
        line(k, v);
    }
    line("ElementSpacing", &join(&h.spacing));
    line("DimSize", &h.dims.map(|d| d.to_string()).join(" "));
    line("ElementType", h.element_type.name());
    line("ElementDataFile", "LOCAL");
    let mut out = head.into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_mha(image: &MhaImage, path: &Path) -> Result<()> {
    write_atomic(path, &encode_mha(image)?)
}

impl MhaImage {
    pub fn from_labels(volume: &LabelVolume, compressed: bool) -> Self {
        use fracbench_core::volume::LabelField;
        Self {
            header: MhaHeader::new(volume.grid(), ElementType::UChar, compressed),
            data: MhaData::UChar(volume.voxels().to_vec()),
        }
    }

    pub fn from_intensity(volume: &IntensityVolume, compressed: bool) -> Self {
        Self {
            header: MhaHeader::new(volume.grid(), ElementType::Float, compressed),
            data: MhaData::Float(volume.voxels().to_vec()),
        }
    }

    /// Integer-valued payload as a label volume; every value must be a
    /// valid fragment id or 0.
    pub fn to_labels(&self) -> Result<LabelVolume> {
        let grid = self.header.grid()?;
        let voxels = self.data.as_labels().map_err(fracbench_core::Error::InvalidLabel)?;
        Ok(LabelVolume::new(grid, voxels)?)
    }

    pub fn to_intensity(&self) -> Result<IntensityVolume> {
        Ok(IntensityVolume::new(self.header.grid()?, self.data.to_f32())?)
    }
}

pub fn read_label_volume(path: &Path, opts: &ReadOptions) -> Result<LabelVolume> {
    read_mha(path, opts)?.to_labels()
}

pub fn read_intensity_volume(path: &Path, opts: &ReadOptions) -> Result<IntensityVolume> {
    read_mha(path, opts)?.to_intensity()
}

pub fn write_label_volume(volume: &LabelVolume, path: &Path, compressed: bool) -> Result<()> {
    write_mha(&MhaImage::from_labels(volume, compressed), path)
}

pub fn write_intensity_volume(volume: &IntensityVolume, path: &Path, compressed: bool) -> Result<()> {
    write_mha(&MhaImage::from_intensity(volume, compressed), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(compressed: bool) -> MhaImage {
        let grid = Grid::new([3, 2, 2], [0.83, 0.83, 0.89], [-1.5, 2.0, 10.25]).unwrap();
        let vol = LabelVolume::new(grid, vec![0, 1, 2, 11, 12, 21, 0, 0, 30, 3, 0, 1]).unwrap();
        MhaImage::from_labels(&vol, compressed)
    }

    #[test]
    fn round_trip_keeps_header_and_payload() {
        for compressed in [false, true] {
            let img = sample(compressed);
            let back = parse_mha(&encode_mha(&img).unwrap(), &ReadOptions::default()).unwrap();
            assert_eq!(back, img);
            assert_eq!(encode_mha(&back).unwrap(), encode_mha(&img).unwrap());
        }
    }

    #[test]
    fn unknown_keys_survive() {
        let mut img = sample(false);
        img.header.extra.push(("Modality".into(), "MET_MOD_CT".into()));
        let back = parse_mha(&encode_mha(&img).unwrap(), &ReadOptions::default()).unwrap();
        assert_eq!(back.header.extra, img.header.extra);
    }

    #[test]
    fn rejects_bad_headers() {
        let opts = ReadOptions::default();
        let text = "NDims = 2\nDimSize = 2 2\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n\0\0\0\0";
        assert!(matches!(parse_mha(text.as_bytes(), &opts), Err(Error::UnsupportedFormat(_))));
        let text = "NDims = 3\nDimSize = 2 2 2\nElementType = MET_DOUBLE\nElementDataFile = LOCAL\n";
        assert!(matches!(parse_mha(text.as_bytes(), &opts), Err(Error::UnsupportedFormat(_))));
        let text = "NDims = 3\nDimSize = 2 2 2\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n\0\0";
        assert!(matches!(parse_mha(text.as_bytes(), &opts), Err(Error::Parse(_))));
        let text = "NDims = 3\nDimSize = 2 2 2\nElementType = MET_UCHAR\n";
        assert!(matches!(parse_mha(text.as_bytes(), &opts), Err(Error::Parse(_))));
        let text = "NDims 3\n";
        assert!(matches!(parse_mha(text.as_bytes(), &opts), Err(Error::Parse(_))));
    }

    #[test]
    fn allocation_cap_is_checked_before_reading() {
        let text = "NDims = 3\nDimSize = 100000 100000 100000\nElementType = MET_FLOAT\nElementDataFile = LOCAL\n";
        assert!(matches!(
            parse_mha(text.as_bytes(), &ReadOptions::default()),
            Err(Error::TooLarge { .. })
        ));
        let small = ReadOptions { max_bytes: 8 };
        let img = sample(false);
        assert!(matches!(parse_mha(&encode_mha(&img).unwrap(), &small), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn rotated_volumes_are_refused() {
        let mut img = sample(false);
        img.header.transform = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let back = parse_mha(&encode_mha(&img).unwrap(), &ReadOptions::default()).unwrap();
        assert!(matches!(back.to_labels(), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn out_of_range_labels_are_rejected() {
        let grid = Grid::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let img = MhaImage { header: MhaHeader::new(&grid, ElementType::Short, false), data: MhaData::Short(vec![0, 31]) };
        assert_eq!(img.to_labels().unwrap_err().to_string(), "invalid fragment label: 31");
        let img = MhaImage { header: img.header, data: MhaData::Short(vec![-1, 2]) };
        assert!(matches!(img.to_labels(), Err(Error::Core(fracbench_core::Error::InvalidLabel(_)))));
    }

    #[test]
    fn big_endian_payloads_decode() {
        let text = "NDims = 3\nDimSize = 2 1 1\nElementType = MET_SHORT\nElementByteOrderMSB = True\nElementDataFile = LOCAL\n";
        let mut bytes = text.as_bytes().to_vec();
        bytes.extend_from_slice(&[0x00, 0x0b, 0xff, 0x38]);
        let img = parse_mha(&bytes, &ReadOptions::default()).unwrap();
        assert_eq!(img.data, MhaData::Short(vec![11, -200]));
    }
}
