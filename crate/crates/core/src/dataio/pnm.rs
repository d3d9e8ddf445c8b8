//! Binary PGM (`P5`) and PPM (`P6`) files with maxval 255.

use std::fs;
use std::path::Path;

use super::LabelMap;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Colors used for predicted label maps: background, body, head, tail, legs.
pub const PALETTE: [[u8; 3]; 5] = [[0, 0, 0], [230, 25, 75], [60, 180, 75], [255, 225, 25], [0, 130, 200]];

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    body: usize,
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

fn read_token(bytes: &[u8], pos: &mut usize, what: &str) -> Result<(usize, usize)> {
    loop {
        match bytes.get(*pos) {
            Some(&b) if is_space(b) => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(Error::format(*pos, format!("unexpected end of header, expected {what}"))),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start, format!("expected {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .map(|v| (v, start))
        .ok_or_else(|| Error::format(start, format!("{what} out of range")))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format(0, "bad magic, expected P5 or P6")),
    };
    let mut pos = 2;
    if !bytes.get(pos).copied().is_some_and(is_space) {
        return Err(Error::format(pos, "expected whitespace after magic"));
    }
    let (width, _) = read_token(bytes, &mut pos, "width")?;
    let (height, _) = read_token(bytes, &mut pos, "height")?;
    let (maxval, maxval_at) = read_token(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(maxval_at, "zero image extent"));
    }
    if maxval != 255 {
        return Err(Error::format(maxval_at, format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(pos).copied().is_some_and(is_space) {
        return Err(Error::format(pos, "expected one whitespace byte after maxval"));
    }
    Ok(Header {
        channels,
        width,
        height,
        body: pos + 1,
    })
}

fn body<'a>(bytes: &'a [u8], h: &Header) -> Result<&'a [u8]> {
    let need = h.width * h.height * h.channels;
    let have = bytes.len() - h.body;
    if have < need {
        return Err(Error::format(bytes.len(), format!("body too short: {have} of {need} bytes")));
    }
    if have > need {
        return Err(Error::format(h.body + need, format!("{} trailing bytes after body", have - need)));
    }
    Ok(&bytes[h.body..])
}

/// Decodes a P5 or P6 image into `H x W x 1` or `H x W x 3` with values in `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor<f64>> {
    let h = parse_header(bytes)?;
    let data = body(bytes, &h)?.iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(&[h.height, h.width, h.channels], data)
}

/// Encodes an `H x W`, `H x W x 1` or `H x W x 3` tensor. Values are clamped to
/// `[0, 1]` and rounded to the nearest 8-bit level.
pub fn encode_pnm(image: &Tensor<f64>) -> Result<Vec<u8>> {
    let s = image.shape();
    let (height, width, channels) = match *s {
        [h, w] => (h, w, 1),
        [h, w, c] if c == 1 || c == 3 => (h, w, c),
        _ => return Err(Error::dim("write_pnm", s, &[0, 0, 1])),
    };
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Tensor<f64>> {
    decode_pnm(&fs::read(path)?)
}

pub fn write_pnm(path: impl AsRef<Path>, image: &Tensor<f64>) -> Result<()> {
    fs::write(path, encode_pnm(image)?)?;
    Ok(())
}

/// Decodes a P5 file whose bytes are raw class indices.
pub fn decode_label_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let h = parse_header(bytes)?;
    if h.channels != 1 {
        return Err(Error::format(0, "label maps must be P5"));
    }
    let labels = body(bytes, &h)?.iter().map(|&b| usize::from(b)).collect();
    LabelMap::new(h.height, h.width, labels)
}

pub fn encode_label_pgm(labels: &LabelMap) -> Result<Vec<u8>> {
    labels.check_classes(256)?;
    let mut out = format!("P5\n{} {}\n255\n", labels.width, labels.height).into_bytes();
    out.extend(labels.labels.iter().map(|&l| l as u8));
    Ok(out)
}

pub fn read_label_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_label_pgm(&fs::read(path)?)
}

pub fn write_label_pgm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    fs::write(path, encode_label_pgm(labels)?)?;
    Ok(())
}

pub fn write_color_ppm(path: impl AsRef<Path>, labels: &LabelMap, palette: &[[u8; 3]]) -> Result<()> {
    labels.check_classes(palette.len())?;
    let mut out = format!("P6\n{} {}\n255\n", labels.width, labels.height).into_bytes();
    for &l in &labels.labels {
        out.extend_from_slice(&palette[l]);
    }
    fs::write(path, out)?;
    Ok(())
}
