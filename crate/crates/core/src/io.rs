//! Binary formats: STEER1 steerers, DESC1 descriptions and 8-bit PGM images.
//!
//! STEER1: magic `STEER1\0`, u32 D, u32 group order (0 for a Lie generator),
//! then D·D f64 little-endian, row-major.
//! DESC1: magic `DESC1\0`, u32 D, u32 N, then D·N f32 little-endian,
//! column-major.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::descriptor::DescriptorMatrix;
use crate::error::{Error, Result};
use crate::group_reps::{LieGenerator, Steerer};
use crate::image::GrayImage;

pub const STEER_MAGIC: &[u8] = b"STEER1\0";
pub const DESC_MAGIC: &[u8] = b"DESC1\0";

/// Contents of a STEER1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum SteererFile {
    Steerer(Steerer),
    Generator(LieGenerator),
}

impl SteererFile {
    pub fn matrix(&self) -> &DMatrix<f64> {
        match self {
            SteererFile::Steerer(s) => s.matrix(),
            SteererFile::Generator(g) => g.matrix(),
        }
    }

    /// Group order, or 0 for a generator.
    pub fn order(&self) -> usize {
        match self {
            SteererFile::Steerer(s) => s.group_order(),
            SteererFile::Generator(_) => 0,
        }
    }
}

fn read_u32(buf: &[u8], at: usize) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format("truncated header".into()))
}

fn check_magic(buf: &[u8], magic: &[u8], what: &str) -> Result<()> {
    if buf.len() < magic.len() || &buf[..magic.len()] != magic {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    Ok(())
}

pub fn encode_steerer(matrix: &DMatrix<f64>, order: usize) -> Result<Vec<u8>> {
    if !matrix.is_square() {
        return Err(Error::InvalidInput("steerer matrix must be square".into()));
    }
    let d = matrix.nrows();
    let mut out = Vec::with_capacity(STEER_MAGIC.len() + 8 + 8 * d * d);
    out.extend_from_slice(STEER_MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(order as u32).to_le_bytes());
    for r in 0..d {
        for c in 0..d {
            out.extend_from_slice(&matrix[(r, c)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_steerer(buf: &[u8]) -> Result<SteererFile> {
    check_magic(buf, STEER_MAGIC, "STEER1")?;
    let h = STEER_MAGIC.len();
    let d = read_u32(buf, h)? as usize;
    let order = read_u32(buf, h + 4)? as usize;
    let body = &buf[h + 8..];
    if body.len() != 8 * d * d {
        return Err(Error::Format(format!(
            "STEER1 body has {} bytes, expected {} for D={d}",
            body.len(),
            8 * d * d
        )));
    }
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (i, chunk) in body.chunks_exact(8).enumerate() {
        m[(i / d, i % d)] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(if order == 0 {
        SteererFile::Generator(LieGenerator::new(m)?)
    } else {
        SteererFile::Steerer(Steerer::new(m, order)?)
    })
}

pub fn write_steerer(path: &Path, file: &SteererFile) -> Result<()> {
    fs::write(path, encode_steerer(file.matrix(), file.order())?)?;
    Ok(())
}

pub fn read_steerer(path: &Path) -> Result<SteererFile> {
    decode_steerer(&fs::read(path)?)
}

pub fn encode_descriptions(y: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(DESC_MAGIC.len() + 8 + 4 * y.len());
    out.extend_from_slice(DESC_MAGIC);
    out.extend_from_slice(&(y.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(y.ncols() as u32).to_le_bytes());
    // nalgebra storage is column-major already
    for v in y.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Decode DESC1. The normalized flag is inferred from the column norms, which
/// for f32 storage hold only to about 1e−7; use [`DescriptorMatrix::normalized`]
/// on the data to renormalize.
pub fn decode_descriptions(buf: &[u8]) -> Result<DMatrix<f64>> {
    check_magic(buf, DESC_MAGIC, "DESC1")?;
    let h = DESC_MAGIC.len();
    let d = read_u32(buf, h)? as usize;
    let n = read_u32(buf, h + 4)? as usize;
    let body = &buf[h + 8..];
    if body.len() != 4 * d * n {
        return Err(Error::Format(format!(
            "DESC1 body has {} bytes, expected {} for D={d}, N={n}",
            body.len(),
            4 * d * n
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let m = DMatrix::from_iterator(d, n, values);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format("DESC1 contains non-finite values".into()));
    }
    Ok(m)
}

pub fn write_descriptions(path: &Path, y: &DescriptorMatrix) -> Result<()> {
    fs::write(path, encode_descriptions(y.data()))?;
    Ok(())
}

/// Read DESC1 and renormalize every column (zero columns are an error).
pub fn read_descriptions(path: &Path) -> Result<DescriptorMatrix> {
    DescriptorMatrix::normalized(decode_descriptions(&fs::read(path)?)?)
}

fn pgm_token<'a>(buf: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < buf.len() && buf[*pos] == b'#' {
            while *pos < buf.len() && buf[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < buf.len() && !buf[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PGM header".into()));
    }
    Ok(&buf[start..*pos])
}

fn pgm_number(buf: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = pgm_token(buf, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad number in PGM header".into()))
}

pub fn decode_pgm(buf: &[u8]) -> Result<GrayImage> {
    let mut pos = 0;
    if pgm_token(buf, &mut pos)? != b"P5" {
        return Err(Error::Format("only binary PGM (P5) is supported".into()));
    }
    let width = pgm_number(buf, &mut pos)?;
    let height = pgm_number(buf, &mut pos)?;
    let maxval = pgm_number(buf, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit PGM is supported (maxval {maxval})")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = buf
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
    GrayImage::new(width, height, raster.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    decode_pgm(&buf)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    fs::File::create(path)?.write_all(&encode_pgm(img))?;
    Ok(())
}
