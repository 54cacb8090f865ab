//! On-disk encodings: PCD v0.7 (binary), PFM and binary PPM.

use super::lidar::LidarPoint;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad header: {0}")]
    Header(String),
    #[error("truncated body: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// PCD v0.7, binary, fields `x y z intensity` as f32.
pub fn write_pcd(points: &[LidarPoint]) -> Vec<u8> {
    let n = points.len();
    let mut out = format!(
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\nWIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA binary\n"
    )
    .into_bytes();
    for p in points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn split_header(bytes: &[u8], lines: usize) -> Result<(Vec<String>, &[u8]), FormatError> {
    let mut rest = bytes;
    let mut out = Vec::with_capacity(lines);
    while out.len() < lines {
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| FormatError::Header("unterminated header".into()))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|e| FormatError::Header(e.to_string()))?;
        rest = &rest[nl + 1..];
        if !line.starts_with('#') {
            out.push(line.trim().to_string());
        }
    }
    Ok((out, rest))
}

pub fn read_pcd(bytes: &[u8]) -> Result<Vec<[f32; 4]>, FormatError> {
    let (h, body) = split_header(bytes, 10)?;
    if h[0] != "VERSION 0.7" || h[1] != "FIELDS x y z intensity" || h[9] != "DATA binary" {
        return Err(FormatError::Header(format!("unsupported header {h:?}")));
    }
    let n: usize = h[8]
        .strip_prefix("POINTS ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| FormatError::Header(h[8].clone()))?;
    let expected = n * 16;
    if body.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: body.len(),
        });
    }
    Ok(body[..expected]
        .chunks_exact(16)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap());
            [f(0), f(1), f(2), f(3)]
        })
        .collect())
}

/// Grayscale PFM, little-endian. Rows are stored bottom-to-top per the
/// format; `data` is row-major top-to-bottom. Non-finite values become 0.
pub fn write_pfm(width: u32, height: u32, data: &[f32]) -> Vec<u8> {
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for row in (0..height as usize).rev() {
        for v in &data[row * width as usize..(row + 1) * width as usize] {
            let v = if v.is_finite() { *v } else { 0.0 };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(bytes: &[u8]) -> Result<(u32, u32, Vec<f32>), FormatError> {
    let (h, body) = split_header(bytes, 3)?;
    if h[0] != "Pf" {
        return Err(FormatError::Header(format!("magic {}", h[0])));
    }
    let dims: Vec<u32> = h[1].split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let [w, ht] = dims[..] else {
        return Err(FormatError::Header(h[1].clone()));
    };
    let scale: f32 = h[2].parse().map_err(|_| FormatError::Header(h[2].clone()))?;
    let n = (w * ht) as usize;
    if body.len() < n * 4 {
        return Err(FormatError::Truncated {
            expected: n * 4,
            found: body.len(),
        });
    }
    let read = |c: &[u8]| {
        let b: [u8; 4] = c.try_into().unwrap();
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let bottom_up: Vec<f32> = body[..n * 4].chunks_exact(4).map(read).collect();
    let mut data = Vec::with_capacity(n);
    for row in (0..ht as usize).rev() {
        data.extend_from_slice(&bottom_up[row * w as usize..(row + 1) * w as usize]);
    }
    Ok((w, ht, data))
}

/// Binary PPM (P6), 8-bit.
pub fn write_ppm(width: u32, height: u32, data: &[[u8; 3]]) -> Vec<u8> {
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for px in data {
        out.extend_from_slice(px);
    }
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<(u32, u32, Vec<[u8; 3]>), FormatError> {
    let (h, body) = split_header(bytes, 3)?;
    if h[0] != "P6" || h[2] != "255" {
        return Err(FormatError::Header(format!("{h:?}")));
    }
    let dims: Vec<u32> = h[1].split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let [w, ht] = dims[..] else {
        return Err(FormatError::Header(h[1].clone()));
    };
    let n = (w * ht) as usize;
    if body.len() < n * 3 {
        return Err(FormatError::Truncated {
            expected: n * 3,
            found: body.len(),
        });
    }
    Ok((w, ht, body[..n * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}
