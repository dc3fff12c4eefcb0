//! Portable anymap (PGM/PPM) codec. Binary variants are written; binary and
//! ASCII variants are read.

use std::fs;
use std::path::Path;

use super::{DiscreteImage, RgbImage, Segmentation};
use crate::error::{Error, Result};

/// A decoded anymap: graymaps become palette-indexed images, pixmaps RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Anymap {
    Gray(DiscreteImage),
    Rgb(RgbImage),
}

impl Anymap {
    pub fn into_gray(self) -> Result<DiscreteImage> {
        match self {
            Anymap::Gray(img) => Ok(img),
            Anymap::Rgb(_) => Err(Error::InvalidArgument("expected a graymap, found a pixmap".into())),
        }
    }

    pub fn into_rgb(self) -> Result<RgbImage> {
        match self {
            Anymap::Rgb(img) => Ok(img),
            Anymap::Gray(_) => Err(Error::InvalidArgument("expected a pixmap, found a graymap".into())),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    AsciiGray,
    AsciiRgb,
    BinaryGray,
    BinaryRgb,
}

impl Kind {
    fn channels(self) -> usize {
        match self {
            Kind::AsciiGray | Kind::BinaryGray => 1,
            Kind::AsciiRgb | Kind::BinaryRgb => 3,
        }
    }
}

struct Header {
    kind: Kind,
    width: usize,
    height: usize,
    maxval: u32,
    // Offset of the first payload byte.
    offset: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(u64, usize)> {
    let start = skip_space_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::MalformedHeader(format!("missing {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text
        .parse::<u64>()
        .map_err(|_| Error::MalformedHeader(format!("{what} out of range")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::MalformedHeader("missing magic number".into()));
    }
    let kind = match bytes[1] {
        b'2' => Kind::AsciiGray,
        b'3' => Kind::AsciiRgb,
        b'5' => Kind::BinaryGray,
        b'6' => Kind::BinaryRgb,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported magic P{}",
                other as char
            )))
        }
    };
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, pos) = read_uint(bytes, pos, "height")?;
    let (maxval, pos) = read_uint(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension".into()));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::BadMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    let offset = match kind {
        Kind::BinaryGray | Kind::BinaryRgb => {
            // Exactly one whitespace byte separates the header from binary data.
            match bytes.get(pos) {
                None => pos,
                Some(b) if b.is_ascii_whitespace() => pos + 1,
                Some(_) => return Err(Error::MalformedHeader("no separator after maxval".into())),
            }
        }
        Kind::AsciiGray | Kind::AsciiRgb => pos,
    };
    Ok(Header {
        kind,
        width: width as usize,
        height: height as usize,
        maxval: maxval as u32,
        offset,
    })
}

fn decode_samples(bytes: &[u8], header: &Header) -> Result<Vec<u32>> {
    let expected = header.width * header.height * header.kind.channels();
    match header.kind {
        Kind::BinaryGray | Kind::BinaryRgb => {
            let payload = &bytes[header.offset.min(bytes.len())..];
            let wide = header.maxval > 255;
            let per = if wide { 2 } else { 1 };
            let found = payload.len() / per;
            if found < expected {
                return Err(Error::TruncatedPayload { expected, found });
            }
            let samples = if wide {
                payload[..expected * 2]
                    .chunks_exact(2)
                    .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
                    .collect()
            } else {
                payload[..expected].iter().map(|&b| u32::from(b)).collect()
            };
            Ok(samples)
        }
        Kind::AsciiGray | Kind::AsciiRgb => {
            let mut samples = Vec::with_capacity(expected);
            let mut pos = header.offset;
            for _ in 0..expected {
                let p = skip_space_and_comments(bytes, pos);
                if p >= bytes.len() {
                    return Err(Error::TruncatedPayload {
                        expected,
                        found: samples.len(),
                    });
                }
                let (v, next) = read_uint(bytes, p, "sample")?;
                samples.push(v.min(u32::MAX as u64) as u32);
                pos = next;
            }
            Ok(samples)
        }
    }
}

/// Reads a PGM or PPM file (binary or ASCII).
///
/// Graymaps become a [`DiscreteImage`] with palette size `maxval + 1`.
/// Pixmaps with a maxval other than 255 are rescaled to 8 bits.
pub fn load_anymap(path: impl AsRef<Path>) -> Result<Anymap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_anymap(&bytes)
}

pub(crate) fn decode_anymap(bytes: &[u8]) -> Result<Anymap> {
    let header = parse_header(bytes)?;
    let samples = decode_samples(bytes, &header)?;
    if let Some(&v) = samples.iter().find(|&&v| v > header.maxval) {
        return Err(Error::MalformedHeader(format!(
            "sample {v} exceeds maxval {}",
            header.maxval
        )));
    }
    match header.kind.channels() {
        1 => Ok(Anymap::Gray(DiscreteImage::new(
            header.width,
            header.height,
            header.maxval as usize + 1,
            samples,
        )?)),
        _ => {
            let scale = |v: u32| -> u8 {
                if header.maxval == 255 {
                    v as u8
                } else {
                    ((f64::from(v) * 255.0 / f64::from(header.maxval)).round()) as u8
                }
            };
            let pixels = samples
                .chunks_exact(3)
                .map(|c| [scale(c[0]), scale(c[1]), scale(c[2])])
                .collect();
            Ok(Anymap::Rgb(RgbImage::new(header.width, header.height, pixels)?))
        }
    }
}

pub(crate) fn encode_gray(width: usize, height: usize, maxval: u32, samples: &[u32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        out.reserve(samples.len() * 2);
        for &s in samples {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a binary graymap with maxval `L - 1`.
///
/// A single-color palette (`L = 1`) is written with maxval 1 since the format
/// forbids maxval 0; it therefore reads back with `L = 2`.
pub fn save_discrete(img: &DiscreteImage, path: impl AsRef<Path>) -> Result<()> {
    if img.palette_size() > 65536 {
        return Err(Error::InvalidArgument(format!(
            "palette size {} does not fit a graymap",
            img.palette_size()
        )));
    }
    let maxval = (img.palette_size() as u32).saturating_sub(1).max(1);
    let bytes = encode_gray(img.width(), img.height(), maxval, img.pixels());
    write_bytes(path.as_ref(), &bytes)
}

/// Writes a binary pixmap.
pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for px in img.pixels() {
        out.extend_from_slice(px);
    }
    write_bytes(path.as_ref(), &out)
}

fn label_gray_value(label: u32, k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        (255 * label as usize / (k - 1)) as u32
    }
}

/// Writes a viewable label map: label `l` becomes `floor(255 l / (K - 1))`.
pub fn save_label_map(seg: &Segmentation, path: impl AsRef<Path>) -> Result<()> {
    let k = seg.num_regions();
    if k > 256 {
        return Err(Error::InvalidArgument(format!(
            "label maps hold at most 256 regions, got {k}"
        )));
    }
    let values: Vec<u32> = seg.labels().iter().map(|&l| label_gray_value(l, k)).collect();
    let bytes = encode_gray(seg.width(), seg.height(), 255, &values);
    write_bytes(path.as_ref(), &bytes)
}

/// Inverse of [`save_label_map`] for a known region count.
///
/// Gray values that are not produced by the scaling rule are rejected.
pub fn load_label_map(path: impl AsRef<Path>, num_regions: usize) -> Result<Segmentation> {
    if num_regions == 0 || num_regions > 256 {
        return Err(Error::InvalidArgument(format!(
            "region count {num_regions} outside 1..=256"
        )));
    }
    let img = load_anymap(path)?.into_gray()?;
    let mut table = [u32::MAX; 65536];
    for l in 0..num_regions as u32 {
        table[label_gray_value(l, num_regions) as usize] = l;
    }
    let labels = img
        .pixels()
        .iter()
        .map(|&v| match table[v as usize] {
            u32::MAX => Err(Error::InvalidArgument(format!(
                "gray value {v} is not a label of a {num_regions}-region map"
            ))),
            l => Ok(l),
        })
        .collect::<Result<Vec<_>>>()?;
    Segmentation::new(img.width(), img.height(), num_regions, labels)
}
