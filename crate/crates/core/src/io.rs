//! Plain-text matrices and portable any-map images.
//!
//! Grid data are written in image orientation: the first text row (and the
//! first image row) holds the largest `y` index. Values inside a row are
//! space separated and printed with the shortest representation that
//! round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents)?;
    Ok(())
}

pub fn write_real_matrix(path: &Path, nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    debug_assert_eq!(values.len(), nx * ny);
    let mut s = String::with_capacity(values.len() * 8);
    for j in (0..ny).rev() {
        for i in 0..nx {
            if i > 0 {
                s.push(' ');
            }
            write!(s, "{}", values[i + nx * j]).unwrap();
        }
        s.push('\n');
    }
    write_string(path, &s)
}

pub fn parse_real_matrix(text: &str, context: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(context, format!("line {}: {e}", ln + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(context, "empty matrix"));
    }
    let nx = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != nx) {
        return Err(Error::parse(
            context,
            format!("row {} has {} columns, expected {nx}", k + 1, rows[k].len()),
        ));
    }
    let ny = rows.len();
    let mut values = vec![0.0; nx * ny];
    for (r, row) in rows.iter().enumerate() {
        let j = ny - 1 - r;
        values[nx * j..nx * (j + 1)].copy_from_slice(row);
    }
    Ok((nx, ny, values))
}

pub fn read_real_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    parse_real_matrix(&text, &path.display().to_string())
}

/// Complex grid as `re,im` tokens.
pub fn write_complex_matrix(path: &Path, nx: usize, ny: usize, values: &[Complex64]) -> Result<()> {
    let mut s = String::with_capacity(values.len() * 24);
    for j in (0..ny).rev() {
        for i in 0..nx {
            if i > 0 {
                s.push(' ');
            }
            let v = values[i + nx * j];
            write!(s, "{},{}", v.re, v.im).unwrap();
        }
        s.push('\n');
    }
    write_string(path, &s)
}

pub fn read_complex_matrix(path: &Path) -> Result<(usize, usize, Vec<Complex64>)> {
    let ctx = path.display().to_string();
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                let (re, im) = t
                    .split_once(',')
                    .ok_or_else(|| Error::parse(&ctx, format!("line {}: expected re,im", ln + 1)))?;
                let p = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|e| Error::parse(&ctx, format!("line {}: {e}", ln + 1)))
                };
                Ok(Complex64::new(p(re)?, p(im)?))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(ctx, "empty matrix"));
    }
    let nx = rows[0].len();
    if rows.iter().any(|r| r.len() != nx) {
        return Err(Error::parse(ctx, "ragged rows"));
    }
    let ny = rows.len();
    let mut values = vec![Complex64::new(0.0, 0.0); nx * ny];
    for (r, row) in rows.iter().enumerate() {
        let j = ny - 1 - r;
        values[nx * j..nx * (j + 1)].copy_from_slice(row);
    }
    Ok((nx, ny, values))
}

/// Binary 8-bit graymap (P5); `pixels` in grid order (row `j = 0` at the bottom).
pub fn write_pgm(path: &Path, nx: usize, ny: usize, pixels: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for j in (0..ny).rev() {
        out.extend_from_slice(&pixels[nx * j..nx * (j + 1)]);
    }
    ensure_parent(path)?;
    fs::write(path, out)?;
    Ok(())
}

/// Binary pixmap (P6); `rgb` already in image row order (top row first).
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<()> {
    debug_assert_eq!(rgb.len(), width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in rgb {
        out.extend_from_slice(px);
    }
    ensure_parent(path)?;
    fs::write(path, out)?;
    Ok(())
}

/// Reads a P6 pixmap written by [`write_ppm`].
pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let data = fs::read(path)?;
    let ctx = path.display().to_string();
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < data.len() && data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(&ctx, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" {
        return Err(Error::parse(&ctx, "not a binary pixmap"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(&ctx, e.to_string()));
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let body = &data[pos..];
    if body.len() != 3 * w * h {
        return Err(Error::parse(&ctx, "pixel data length mismatch"));
    }
    Ok((w, h, body.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()))
}
