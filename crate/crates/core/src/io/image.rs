//! Image files: binary PPM (P6, 8-bit) and a float32 raw layout with a
//! 16-byte header (`ARGI`, width u32, height u32, channels u32).

use crate::error::{Error, Result};
use crate::render::Image;

pub const RAW_MAGIC: [u8; 4] = *b"ARGI";

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_ppm(buf: &[u8]) -> Result<Image> {
    // Header: magic, width, height, maxval separated by whitespace, then a
    // single whitespace byte before the samples.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < buf.len() && buf[pos] == b'#' {
            while pos < buf.len() && buf[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Truncated("ppm header".into()));
        }
        fields.push(std::str::from_utf8(&buf[start..pos]).unwrap_or("").to_string());
    }
    if fields[0] != "P6" {
        return Err(Error::UnsupportedVariant(format!("ppm magic `{}`", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad ppm header field `{s}`")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::UnsupportedVariant(format!("ppm maxval {maxval}")));
    }
    pos += 1;
    let need = w * h * 3;
    if buf.len() < pos + need {
        return Err(Error::Truncated(format!(
            "ppm has {} of {need} samples",
            buf.len().saturating_sub(pos)
        )));
    }
    let data = buf[pos..pos + need].iter().map(|b| *b as f32 / 255.0).collect();
    Image::from_data(w, h, data)
}

pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.data.len() * 4);
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&(img.width as u32).to_le_bytes());
    out.extend_from_slice(&(img.height as u32).to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    for v in &img.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(buf: &[u8]) -> Result<Image> {
    if buf.len() < 16 {
        return Err(Error::Truncated("raw image header".into()));
    }
    let magic: [u8; 4] = buf[..4].try_into().unwrap();
    if magic != RAW_MAGIC {
        return Err(Error::BadMagic {
            expected: RAW_MAGIC,
            found: magic,
        });
    }
    let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap()) as usize;
    let (w, h, ch) = (word(4), word(8), word(12));
    if ch != 3 {
        return Err(Error::Format(format!("raw image has {ch} channels, expected 3")));
    }
    let need = w * h * 3 * 4;
    if buf.len() - 16 != need {
        return Err(Error::Truncated(format!(
            "raw image payload is {} bytes, expected {need}",
            buf.len() - 16
        )));
    }
    let data = buf[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Image::from_data(w, h, data)
}
