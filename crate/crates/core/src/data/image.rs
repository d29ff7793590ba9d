//! Binary netpbm images: P6 (8-bit RGB) and P5 (8-bit gray).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn header(magic: &str, w: usize, h: usize) -> Vec<u8> {
    format!("{magic}\n{w} {h}\n255\n").into_bytes()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `[3, H, W]` in `[0, 1]` to P6 bytes.
pub fn encode_ppm(rgb: &Tensor) -> Result<Vec<u8>> {
    let [3, h, w] = rgb.dims()[..] else {
        return Err(Error::shape(format!("ppm expects [3, H, W], got {:?}", rgb.dims())));
    };
    let plane = h * w;
    let mut out = header("P6", w, h);
    out.reserve(3 * plane);
    for i in 0..plane {
        for c in 0..3 {
            out.push(to_u8(rgb.data()[c * plane + i]));
        }
    }
    Ok(out)
}

/// `[H, W]` in `[0, 1]` to P5 bytes.
pub fn encode_pgm(gray: &Tensor) -> Result<Vec<u8>> {
    let [h, w] = gray.dims()[..] else {
        return Err(Error::shape(format!("pgm expects [H, W], got {:?}", gray.dims())));
    };
    let mut out = header("P5", w, h);
    out.extend(gray.data().iter().map(|&v| to_u8(v)));
    Ok(out)
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(what: &str, bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::parse(what, 0, format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        // whitespace and '#' comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            let name = ["width", "height", "maxval"][k];
            return Err(Error::parse(what, start, format!("expected {name}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(what, start, "header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::parse(what, pos, "expected whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::parse(what, 2, "zero image extent"));
    }
    if maxval != 255 {
        return Err(Error::parse(what, pos - 1, format!("only maxval 255 is supported, got {maxval}")));
    }
    Ok(Header { width, height, maxval, data_start: pos })
}

fn payload<'a>(what: &str, bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let need = h.width * h.height * channels;
    let have = bytes.len() - h.data_start;
    if have < need {
        return Err(Error::parse(what, bytes.len(), format!("truncated: {need} pixel bytes expected, {have} present")));
    }
    if have > need {
        return Err(Error::parse(what, h.data_start + need, "trailing bytes after pixels"));
    }
    Ok(&bytes[h.data_start..])
}

pub fn decode_ppm(what: &str, bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(what, bytes, b"P6")?;
    let px = payload(what, bytes, &h, 3)?;
    let plane = h.width * h.height;
    let scale = h.maxval as f64;
    let mut data = vec![0.0; 3 * plane];
    for i in 0..plane {
        for c in 0..3 {
            data[c * plane + i] = px[3 * i + c] as f64 / scale;
        }
    }
    Tensor::new(&[3, h.height, h.width], data)
}

pub fn decode_pgm(what: &str, bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(what, bytes, b"P5")?;
    let px = payload(what, bytes, &h, 1)?;
    let scale = h.maxval as f64;
    Tensor::new(&[h.height, h.width], px.iter().map(|&b| b as f64 / scale).collect())
}

/// Reads P5 and requires every pixel to be 0 or 255, returned as {0, 1}.
pub fn decode_mask(what: &str, bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(what, bytes, b"P5")?;
    let px = payload(what, bytes, &h, 1)?;
    if let Some(i) = px.iter().position(|&b| b != 0 && b != 255) {
        return Err(Error::parse(what, h.data_start + i, format!("mask pixel {} is neither 0 nor 255", px[i])));
    }
    Tensor::new(&[h.height, h.width], px.iter().map(|&b| if b == 255 { 1.0 } else { 0.0 }).collect())
}

fn read(path: &Path) -> Result<(String, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((path.display().to_string(), bytes))
}

pub fn write_ppm(path: &Path, rgb: &Tensor) -> Result<()> {
    fs::write(path, encode_ppm(rgb)?).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: &Path, gray: &Tensor) -> Result<()> {
    fs::write(path, encode_pgm(gray)?).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let (what, bytes) = read(path)?;
    decode_ppm(&what, &bytes)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let (what, bytes) = read(path)?;
    decode_pgm(&what, &bytes)
}

pub fn read_mask(path: &Path) -> Result<Tensor> {
    let (what, bytes) = read(path)?;
    decode_mask(&what, &bytes)
}
