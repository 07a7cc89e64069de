//! PFM float-map I/O (grayscale `Pf`, little-endian, scale −1.0, bottom-up
//! rows per the format convention).

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let werr = |e| Error::io(path, e);
    write!(out, "Pf\n{width} {height}\n-1.0\n").map_err(werr)?;
    for y in (0..height).rev() {
        for x in 0..width {
            out.write_all(&(data[y * width + x] as f32).to_le_bytes())
                .map_err(werr)?;
        }
    }
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let mut header = String::new();
    for _ in 0..3 {
        let mut line = String::new();
        file.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        header.push_str(&line);
    }
    let mut it = header.split_whitespace();
    let kind = it.next().unwrap_or("");
    if kind != "Pf" {
        return Err(Error::format(path, format!("expected grayscale PFM, got '{kind}'")));
    }
    let width: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(path, "bad width"))?;
    let height: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(path, "bad height"))?;
    let scale: f64 = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::format(path, "bad scale"))?;
    if scale >= 0.0 {
        return Err(Error::format(path, "big-endian PFM not supported"));
    }
    let mut raw = vec![0u8; width * height * 4];
    file.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let mut data = vec![0.0; width * height];
    for y in 0..height {
        let src_row = height - 1 - y;
        for x in 0..width {
            let i = (src_row * width + x) * 4;
            data[y * width + x] =
                f32::from_le_bytes(raw[i..i + 4].try_into().unwrap()) as f64;
        }
    }
    Ok((width, height, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let path = std::env::temp_dir().join(format!("icosweep_pfm_{}.pfm", std::process::id()));
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        write_pfm(&path, 4, 3, &data).unwrap();
        let (w, h, back) = read_pfm(&path).unwrap();
        assert_eq!((w, h), (4, 3));
        for (a, b) in back.iter().zip(&data) {
            assert!((a - b).abs() < 1e-6);
        }
        std::fs::remove_file(&path).ok();
    }
}
