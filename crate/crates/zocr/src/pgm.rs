//! PGM image I/O: P2 (ASCII) and P5 (binary), maxval up to 255.
//!
//! Other netpbm magic numbers are rejected with a diagnostic naming the
//! format that was found.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{BinaryRaster, GrayRaster};

/// Loads a PGM file into a grayscale raster.
pub fn load_pgm(path: &Path) -> Result<GrayRaster> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_pgm(&bytes, path)
}

/// Parses PGM bytes. `origin` is only used in diagnostics.
pub fn parse_pgm(bytes: &[u8], origin: &Path) -> Result<GrayRaster> {
    let err = |detail: String| Error::PgmFormat { path: origin.to_path_buf(), detail };
    if bytes.len() < 2 {
        return Err(err("file too short for a PGM header".into()));
    }
    let magic = &bytes[..2];
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            let shown = match other {
                b"P1" => "\"P1\" (ASCII PBM)".to_string(),
                b"P3" => "\"P3\" (ASCII PPM)".to_string(),
                b"P4" => "\"P4\" (binary PBM)".to_string(),
                b"P6" => "\"P6\" (binary PPM)".to_string(),
                b"P7" => "\"P7\" (PAM)".to_string(),
                _ => format!("{:?}", String::from_utf8_lossy(other)),
            };
            return Err(err(format!(
                "unsupported magic {shown}; expected PGM (\"P2\" or \"P5\")"
            )));
        }
    };

    let mut pos = 2;
    let next_token = |pos: &mut usize| -> Result<u64> {
        // skip whitespace and '#' comments
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(err("expected an unsigned integer in header".into()));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .unwrap()
            .parse::<u64>()
            .map_err(|e| err(format!("bad integer in header: {e}")))
    };

    let width = next_token(&mut pos)? as usize;
    let height = next_token(&mut pos)? as usize;
    let maxval = next_token(&mut pos)?;
    if width == 0 || height == 0 {
        return Err(err(format!("degenerate dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(err(format!("unsupported maxval {maxval}; expected 1..=255")));
    }

    let n = width * height;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the data
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(err("missing whitespace after P5 header".into()));
        }
        pos += 1;
        let data = &bytes[pos..];
        if data.len() < n {
            return Err(err(format!("expected {n} pixel bytes, found {}", data.len())));
        }
        data[..n].to_vec()
    } else {
        let mut px = Vec::with_capacity(n);
        for _ in 0..n {
            let v = next_token(&mut pos)?;
            if v > maxval {
                return Err(err(format!("pixel value {v} exceeds maxval {maxval}")));
            }
            px.push(v as u8);
        }
        px
    };
    if binary {
        if let Some(&bad) = pixels.iter().find(|&&p| p as u64 > maxval) {
            return Err(err(format!("pixel value {bad} exceeds maxval {maxval}")));
        }
    }
    GrayRaster::new(width, height, pixels)
}

/// Writes a grayscale raster as binary PGM (P5, maxval 255).
pub fn save_pgm(path: &Path, img: &GrayRaster) -> Result<()> {
    let mut buf = Vec::with_capacity(img.pixels().len() + 32);
    write!(buf, "P5\n{} {}\n255\n", img.width(), img.height()).expect("in-memory write");
    buf.extend_from_slice(img.pixels());
    std::fs::write(path, buf).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Renders a binary raster as grayscale: foreground ink black (0),
/// background white (255). Feeding the result back through binarization
/// recovers the same foreground.
pub fn binary_to_gray(img: &BinaryRaster) -> GrayRaster {
    let pixels = img.pixels().iter().map(|&p| if p == 1 { 0 } else { 255 }).collect();
    GrayRaster::new(img.width(), img.height(), pixels).expect("same dimensions")
}
