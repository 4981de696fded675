use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::io::{le_f64s, split_line};

const MAGIC: &[u8] = b"PKSHOT1\n";

/// Recorded traces, stored source-major then receiver then time.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotData {
    pub nr: usize,
    pub ns: usize,
    pub nt: usize,
    pub dt: f64,
    values: Vec<f64>,
}

impl ShotData {
    pub fn zeros(nr: usize, ns: usize, nt: usize, dt: f64) -> Self {
        ShotData { nr, ns, nt, dt, values: vec![0.0; nr * ns * nt] }
    }

    pub fn from_values(nr: usize, ns: usize, nt: usize, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != nr * ns * nt {
            return Err(Error::SizeMismatch(format!(
                "shot dims {nr}x{ns}x{nt} vs {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite shot sample"));
        }
        Ok(ShotData { nr, ns, nt, dt, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn trace(&self, s: usize, r: usize) -> &[f64] {
        let off = (s * self.nr + r) * self.nt;
        &self.values[off..off + self.nt]
    }

    pub fn trace_mut(&mut self, s: usize, r: usize) -> &mut [f64] {
        let off = (s * self.nr + r) * self.nt;
        &mut self.values[off..off + self.nt]
    }

    /// All receivers of one source, `nr * nt` samples.
    pub fn shot(&self, s: usize) -> &[f64] {
        let len = self.nr * self.nt;
        &self.values[s * len..(s + 1) * len]
    }

    pub fn shot_mut(&mut self, s: usize) -> &mut [f64] {
        let len = self.nr * self.nt;
        &mut self.values[s * len..(s + 1) * len]
    }

    pub fn dot(&self, other: &ShotData) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "shot size mismatch");
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ShotData) {
        assert_eq!(self.values.len(), other.values.len(), "shot size mismatch");
        self.values.iter_mut().zip(&other.values).for_each(|(s, o)| *s += a * o);
    }
}

pub fn write_shot_bytes(d: &ShotData) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(format!("{} {} {} {}\n", d.nr, d.ns, d.nt, d.dt).as_bytes());
    for v in &d.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_shot_bytes(bytes: &[u8]) -> Result<ShotData> {
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| Error::format("PKSHOT1", "bad magic"))?;
    let (line, payload) = split_line(rest).ok_or_else(|| Error::format("PKSHOT1", "missing dims line"))?;
    let f: Vec<&str> = line.split_whitespace().collect();
    let parsed = (|| -> Option<(usize, usize, usize, f64)> {
        if f.len() != 4 {
            return None;
        }
        Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?))
    })();
    let (nr, ns, nt, dt) = parsed.ok_or_else(|| Error::format("PKSHOT1", format!("bad dims line {line:?}")))?;
    if payload.len() != 8 * nr * ns * nt {
        return Err(Error::format(
            "PKSHOT1",
            format!("dims {nr}x{ns}x{nt} need {} bytes, payload has {}", 8 * nr * ns * nt, payload.len()),
        ));
    }
    ShotData::from_values(nr, ns, nt, dt, le_f64s(payload))
}

pub fn write_shot(path: impl AsRef<Path>, d: &ShotData) -> Result<()> {
    fs::write(path, write_shot_bytes(d))?;
    Ok(())
}

pub fn read_shot(path: impl AsRef<Path>) -> Result<ShotData> {
    read_shot_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let vals: Vec<f64> = (0..2 * 3 * 5).map(|i| (i as f64).sin() / 7.0).collect();
        let d = ShotData::from_values(3, 2, 5, 1.0 / 3.0, vals).unwrap();
        let back = read_shot_bytes(&write_shot_bytes(&d)).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.trace(1, 2), &d.values()[(3 + 2) * 5..(3 + 2) * 5 + 5]);
    }

    #[test]
    fn rejects_short_payload() {
        let d = ShotData::zeros(3, 2, 5, 0.1);
        let mut b = write_shot_bytes(&d);
        b.truncate(b.len() - 8);
        assert!(read_shot_bytes(&b).is_err());
    }
}
