//! Field I/O.
//!
//! `HSF1` binary field format: 4-byte magic `HSF1`, u8 dim, u8 components,
//! u32 little-endian per-axis sizes, then f64 little-endian samples,
//! row-major within each component, component-major overall (the in-memory
//! layout of [`Field`]).
//!
//! Binary PGM (`P5`), 8-bit or 16-bit (big-endian, per Netpbm), grayscale
//! affinely mapped to [0, 1]. Image rows map to grid axis 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, TorusGrid};

const MAGIC: &[u8; 4] = b"HSF1";

pub fn write_hsf1(path: &Path, field: &Field) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[field.grid().dim() as u8, field.components() as u8])?;
    for a in 0..field.grid().dim() {
        w.write_all(&(field.grid().size(a) as u32).to_le_bytes())?;
    }
    for v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hsf1(path: &Path) -> Result<Field> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Malformed(format!(
            "bad magic {magic:?}, expected HSF1"
        )));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    let dim = head[0] as usize;
    let components = head[1] as usize;
    if !(2..=3).contains(&dim) || components == 0 {
        return Err(Error::Malformed(format!(
            "dim {dim} / components {components}"
        )));
    }
    let mut sizes = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        sizes.push(u32::from_le_bytes(b) as usize);
    }
    let grid = TorusGrid::new(&sizes)?;
    let n = components * grid.num_points();
    let mut data = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    Field::new(grid, components, data)
}

/// Write a scalar field as binary PGM; samples are clamped to [0, 1] and
/// scaled to `maxval` (255 or 65535).
pub fn write_pgm(path: &Path, field: &Field, maxval: u32) -> Result<()> {
    if !field.is_scalar() {
        return Err(Error::ComponentMismatch {
            expected: 1,
            got: field.components(),
        });
    }
    if field.grid().dim() != 2 {
        return Err(Error::InvalidGrid("PGM output needs a 2D grid".into()));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Malformed(format!("unsupported maxval {maxval}")));
    }
    let rows = field.grid().size(0);
    let cols = field.grid().size(1);
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n{maxval}\n")?;
    for v in field.data() {
        let q = (v.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if maxval == 255 {
            w.write_all(&[q as u8])?;
        } else {
            w.write_all(&(q as u16).to_be_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write a field rescaled by its own min/max to [0, 1] (visualization of
/// signed per-level components).
pub fn write_pgm_normalized(path: &Path, field: &Field) -> Result<()> {
    let lo = field.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = field.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let mut scaled = field.clone();
    for v in scaled.data_mut() {
        *v = (*v - lo) / span;
    }
    write_pgm(path, &scaled, 255)
}

/// Read a binary PGM into a scalar field with values in [0, 1].
/// The image dimensions must be even and at least 4 (torus grid invariant).
pub fn read_pgm(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Malformed("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        return Err(Error::Malformed("not a binary PGM (P5)".into()));
    }
    let cols: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::Malformed("bad width".into()))?;
    let rows: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::Malformed("bad height".into()))?;
    let maxval: u32 = token(&bytes)?
        .parse()
        .map_err(|_| Error::Malformed("bad maxval".into()))?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!("maxval {maxval}")));
    }
    pos += 1; // single whitespace after maxval

    let grid = TorusGrid::new(&[rows, cols])?;
    let n = rows * cols;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    if bytes.len() < pos + need {
        return Err(Error::Malformed("truncated PGM data".into()));
    }
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let q = if wide {
            u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as u32
        } else {
            bytes[pos + i] as u32
        };
        data.push(q as f64 / maxval as f64);
    }
    Field::new(grid, 1, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use tempfile::tempdir;

    #[test]
    fn hsf1_round_trip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.hsf");
        let grid = TorusGrid::new(&[6, 4, 8]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let data: Vec<f64> = (0..3 * grid.num_points())
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let f = Field::new(grid, 3, data).unwrap();
        write_hsf1(&path, &f).unwrap();
        let g = read_hsf1(&path).unwrap();
        assert_eq!(f.data(), g.data());
        assert_eq!(f.components(), g.components());
        assert_eq!(f.grid().sizes(), g.grid().sizes());
    }

    #[test]
    fn hsf1_rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.hsf");
        std::fs::write(&path, b"NOPE1234").unwrap();
        assert!(read_hsf1(&path).is_err());
    }

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let dir = tempdir().unwrap();
        let grid = TorusGrid::new(&[8, 6]).unwrap();
        let f = Field::from_fn(&grid, |x| {
            0.5 + 0.5 * (x[0].cos() * x[1].sin())
        });
        for (maxval, tol) in [(255u32, 1.0 / 255.0), (65535, 1.0 / 65535.0)] {
            let path = dir.path().join(format!("img{maxval}.pgm"));
            write_pgm(&path, &f, maxval).unwrap();
            let g = read_pgm(&path).unwrap();
            assert_eq!(g.grid().sizes(), grid.sizes());
            for (a, b) in f.data().iter().zip(g.data()) {
                assert!((a - b).abs() <= tol, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# a comment\n4 4\n255\n".to_vec();
        bytes.extend(std::iter::repeat_n(128u8, 16));
        std::fs::write(&path, bytes).unwrap();
        let f = read_pgm(&path).unwrap();
        assert_eq!(f.grid().sizes(), &[4, 4]);
        assert!((f.data()[0] - 128.0 / 255.0).abs() < 1e-12);
    }
}
