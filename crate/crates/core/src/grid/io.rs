use std::fs;
use std::io::Write;
use std::path::Path;

use super::ModelGrid;
use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8] = b"PKGRID1\n";

/// Serializes a grid: magic, `n=<int>\n`, then `n^2` little-endian f64.
pub fn write_grid_bytes(grid: &ModelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(GRID_MAGIC.len() + 16 + 8 * grid.data().len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(format!("n={}\n", grid.n()).as_bytes());
    for v in grid.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_grid_bytes(bytes: &[u8]) -> Result<ModelGrid> {
    let rest = bytes
        .strip_prefix(GRID_MAGIC)
        .ok_or_else(|| Error::format("PKGRID1", "bad magic"))?;
    let (line, payload) = split_line(rest).ok_or_else(|| Error::format("PKGRID1", "missing header line"))?;
    let n: usize = line
        .strip_prefix("n=")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::format("PKGRID1", format!("bad header line {line:?}")))?;
    let values = le_f64s(payload);
    if payload.len() % 8 != 0 || values.len() != n * n {
        return Err(Error::format(
            "PKGRID1",
            format!("header says n={n} ({} values) but payload holds {} bytes", n * n, payload.len()),
        ));
    }
    ModelGrid::new(n, values)
}

pub fn write_grid(path: impl AsRef<Path>, grid: &ModelGrid) -> Result<()> {
    fs::write(path, write_grid_bytes(grid))?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<ModelGrid> {
    read_grid_bytes(&fs::read(path)?)
}

/// 8-bit binary PGM, min-max normalized; constant grids render mid-gray.
pub fn write_pgm(path: impl AsRef<Path>, grid: &ModelGrid) -> Result<()> {
    let (lo, hi) = (grid.min(), grid.max());
    let span = hi - lo;
    let mut out = Vec::new();
    write!(out, "P5\n{} {}\n255\n", grid.n(), grid.n())?;
    out.extend(grid.data().iter().map(|&v| {
        if span > 0.0 {
            (((v - lo) / span) * 255.0).round() as u8
        } else {
            128
        }
    }));
    fs::write(path, out)?;
    Ok(())
}

pub(crate) fn split_line(bytes: &[u8]) -> Option<(&str, &[u8])> {
    let end = bytes.iter().position(|&b| b == b'\n')?;
    let line = std::str::from_utf8(&bytes[..end]).ok()?;
    Some((line, &bytes[end + 1..]))
}

pub(crate) fn le_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = ModelGrid::from_fn(64, |_, _| rng.gen::<f64>() * 1e3 - 17.0);
        let bytes = write_grid_bytes(&g);
        let back = read_grid_bytes(&bytes).unwrap();
        assert_eq!(write_grid_bytes(&back), bytes);
        assert_eq!(back, g);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let g = ModelGrid::constant(64, 1.0);
        let mut bytes = write_grid_bytes(&ModelGrid::constant(63, 1.0));
        // swap in a header that claims n=64
        let body = bytes.split_off(GRID_MAGIC.len() + "n=63\n".len());
        let mut forged = GRID_MAGIC.to_vec();
        forged.extend_from_slice(b"n=64\n");
        forged.extend_from_slice(&body);
        assert!(matches!(read_grid_bytes(&forged), Err(Error::Format { .. })));
        assert!(read_grid_bytes(&write_grid_bytes(&g)).is_ok());
    }

    #[test]
    fn malformed_header_is_rejected() {
        assert!(read_grid_bytes(b"PKGRID2\nn=16\n").is_err());
        assert!(read_grid_bytes(b"PKGRID1\nm=16\n").is_err());
        assert!(read_grid_bytes(b"PKGRID1\n").is_err());
    }

    #[test]
    fn odd_sized_asset_reads_back() {
        let g = ModelGrid::from_fn(127, |x, z| 1.0 + 0.3 * z + 0.05 * (9.0 * x).sin());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m127.pkgrid");
        write_grid(&p, &g).unwrap();
        let back = read_grid(&p).unwrap();
        assert_eq!(back.n(), 127);
        assert_eq!(back, g);
    }

    #[test]
    fn pgm_has_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, &ModelGrid::from_fn(16, |x, _| x)).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(bytes.len(), "P5\n16 16\n255\n".len() + 256);
    }
}
