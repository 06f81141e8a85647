//! File formats: unary tensors, label maps, label lists, and the text files
//! read by the CLI.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, LabelMap, LabelSet, UnaryField};

pub const UNARY_MAGIC: &[u8; 4] = b"UCRF";
pub const UNARY_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        context: "unary tensor".into(),
        offset,
        message: message.into(),
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serializes a unary field as `UCRF`, version, H, W, L (u32 LE each), then
/// `H*W*L` f32 LE values, pixel-major.
pub fn encode_unary(unary: &UnaryField, width: usize, height: usize) -> Result<Vec<u8>> {
    if width * height != unary.num_pixels() {
        return Err(Error::ShapeMismatch(format!(
            "{width}x{height} grid for a unary field of {} pixels",
            unary.num_pixels()
        )));
    }
    let dims = [height, width, unary.num_labels()];
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * unary.as_slice().len());
    out.extend_from_slice(UNARY_MAGIC);
    out.extend_from_slice(&UNARY_VERSION.to_le_bytes());
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("unary dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in unary.as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::invalid(format!("unary value {v} does not fit in f32")));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Decoded unary tensor with its grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryTensor {
    pub width: usize,
    pub height: usize,
    pub field: UnaryField,
}

pub fn decode_unary(bytes: &[u8]) -> Result<UnaryTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..4] != UNARY_MAGIC {
        return Err(format_err(0, "bad magic, expected \"UCRF\""));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != UNARY_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let (h, w, l) = (word(8) as usize, word(12) as usize, word(16) as usize);
    for (at, v, name) in [(8, h, "H"), (12, w, "W"), (16, l, "L")] {
        if v == 0 {
            return Err(format_err(at, format!("{name} is zero")));
        }
    }
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(l))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| format_err(8, "H*W*L overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(format_err(bytes.len(), format!(
            "truncated payload: H*W*L = {h}*{w}*{l} needs {expected} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(format_err(HEADER_LEN + expected, format!(
            "{} trailing bytes after payload of H*W*L = {h}*{w}*{l} values",
            payload.len() - expected
        )));
    }
    let mut values = Vec::with_capacity(h * w * l);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * k, format!("non-finite value {v}")));
        }
        values.push(f64::from(v));
    }
    Ok(UnaryTensor {
        width: w,
        height: h,
        field: UnaryField::new(h * w, l, values)?,
    })
}

pub fn load_unary(path: &Path) -> Result<UnaryTensor> {
    decode_unary(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn save_unary(unary: &UnaryField, width: usize, height: usize, path: &Path) -> Result<()> {
    write_bytes(path, &encode_unary(unary, width, height)?)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { context, offset, message } => Error::Format {
            context: format!("{context} {}", path.display()),
            offset,
            message,
        },
        Error::Parse { context, line, message } => Error::Parse {
            context: format!("{context} {}", path.display()),
            line,
            message,
        },
        other => other,
    }
}

fn png_bytes(img: impl Into<image::DynamicImage>) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.into().write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

/// Label map as an 8-bit grayscale PNG, gray value = label id.
pub fn encode_labelmap(labels: &LabelMap) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(labels.len());
    for &l in labels.labels() {
        raw.push(u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} does not fit in 8 bits")))?);
    }
    let img = GrayImage::from_raw(labels.width() as u32, labels.height() as u32, raw)
        .expect("buffer matches dimensions");
    png_bytes(img)
}

pub fn decode_labelmap(bytes: &[u8]) -> Result<LabelMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
    if !matches!(img.color(), image::ColorType::L8) {
        return Err(Error::Format {
            context: "label map".into(),
            offset: 0,
            message: format!("expected 8-bit grayscale, found {:?}", img.color()),
        });
    }
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    LabelMap::new(w as usize, h as usize, gray.into_raw().into_iter().map(usize::from).collect())
}

pub fn load_labelmap(path: &Path) -> Result<LabelMap> {
    decode_labelmap(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn save_labelmap(labels: &LabelMap, path: &Path) -> Result<()> {
    write_bytes(path, &encode_labelmap(labels)?)
}

/// Any PNG, converted to 8-bit RGB.
pub fn load_image(path: &Path) -> Result<ImageGrid> {
    let img = image::load_from_memory(&read_bytes(path)?)?.into_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img
        .pixels()
        .map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
        .collect();
    ImageGrid::new(w as usize, h as usize, pixels)
}

/// Writes an image as RGB PNG, rounding and clamping channels to 0..=255.
pub fn save_image(image: &ImageGrid, path: &Path) -> Result<()> {
    let raw = image
        .pixels()
        .iter()
        .flat_map(|c| c.map(|v| v.round().clamp(0.0, 255.0) as u8))
        .collect();
    let img = RgbImage::from_raw(image.width() as u32, image.height() as u32, raw).expect("buffer matches dimensions");
    write_bytes(path, &png_bytes(img)?)
}

/// One label name per line; blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str) -> Result<LabelSet> {
    LabelSet::new(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#')),
    )
}

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    parse_labels(&read_text(path)?)
}

pub fn labels_to_text(labels: &LabelSet) -> String {
    labels.names().iter().map(|n| format!("{n}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> UnaryField {
        UnaryField::new(6, 2, (0..12).map(|v| v as f64 * 0.25 - 1.0).collect()).unwrap()
    }

    #[test]
    fn unary_round_trip() {
        let bytes = encode_unary(&sample(), 3, 2).unwrap();
        assert_eq!(bytes.len(), 20 + 48);
        let t = decode_unary(&bytes).unwrap();
        assert_eq!((t.width, t.height), (3, 2));
        assert_eq!(t.field, sample());
        assert_eq!(encode_unary(&t.field, 3, 2).unwrap(), bytes);
    }

    #[test]
    fn unary_errors_carry_offsets() {
        let bytes = encode_unary(&sample(), 3, 2).unwrap();
        let offset = |b: &[u8]| match decode_unary(b) {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(offset(&bytes[..10]), 10);
        assert_eq!(offset(&bytes[..bytes.len() - 1]), bytes.len() - 1);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(offset(&bad), 0);
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert_eq!(offset(&bad), 4);
        let mut bad = bytes.clone();
        bad[12] = 0;
        assert_eq!(offset(&bad), 12);
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert_eq!(offset(&long), bytes.len());
        let mut nan = bytes.clone();
        nan[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(offset(&nan), 24);
    }

    #[test]
    fn labelmap_round_trip() {
        let lm = LabelMap::new(4, 3, (0..12).map(|v| (v * 37) % 256).collect()).unwrap();
        let bytes = encode_labelmap(&lm).unwrap();
        let back = decode_labelmap(&bytes).unwrap();
        assert_eq!(back, lm);
        assert_eq!(encode_labelmap(&back).unwrap(), bytes);
        let wide = LabelMap::new(1, 1, vec![300]).unwrap();
        assert!(encode_labelmap(&wide).is_err());
    }

    #[test]
    fn labels_text() {
        let set = parse_labels("# parts\nbg\n\nhead\n eye \n").unwrap();
        assert_eq!(set.names(), ["bg", "head", "eye"]);
        assert_eq!(labels_to_text(&set), "bg\nhead\neye\n");
        assert!(parse_labels("a\na\n").is_err());
    }
}
