//! Model rasters and receiver data files.
//!
//! Raster layout (little-endian): 8-byte magic `PWFWI1\0\0`, `u32 nx`,
//! `u32 nz`, `f64 h`, `u32` dtype tag, `u32` reserved (zero), then `nx·nz`
//! `f64` values, z fastest.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{FwiError, Result};
use crate::grid::{ModelGrid, ScalarField};
use crate::irwri::{FrequencyData, ObservedData};

pub const RASTER_MAGIC: [u8; 8] = *b"PWFWI1\0\0";
pub const RASTER_HEADER_LEN: usize = 32;

/// Quantity stored in a raster.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterKind {
    /// Velocity in m/s.
    Velocity,
    /// Squared slowness in s²/m².
    SquaredSlowness,
}

impl RasterKind {
    pub fn tag(self) -> u32 {
        match self {
            RasterKind::Velocity => 1,
            RasterKind::SquaredSlowness => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(RasterKind::Velocity),
            2 => Ok(RasterKind::SquaredSlowness),
            _ => Err(FwiError::Format(format!("unknown raster dtype tag {tag}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub kind: RasterKind,
    pub field: ScalarField,
}

impl Raster {
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = self.field.grid;
        let mut out = Vec::with_capacity(RASTER_HEADER_LEN + 8 * g.len());
        out.extend_from_slice(&RASTER_MAGIC);
        out.extend_from_slice(&(g.nx() as u32).to_le_bytes());
        out.extend_from_slice(&(g.nz() as u32).to_le_bytes());
        out.extend_from_slice(&g.spacing().to_le_bytes());
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.field.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < RASTER_HEADER_LEN {
            return Err(FwiError::Format(format!("raster of {} bytes has no header", bytes.len())));
        }
        if bytes[..8] != RASTER_MAGIC {
            return Err(FwiError::Format("bad raster magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let nx = u32_at(8) as usize;
        let nz = u32_at(12) as usize;
        let h = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let kind = RasterKind::from_tag(u32_at(24))?;
        let grid = ModelGrid::new(nx, nz, h)?;
        let payload = &bytes[RASTER_HEADER_LEN..];
        if payload.len() != 8 * grid.len() {
            return Err(FwiError::Format(format!(
                "raster payload of {} bytes, expected {}",
                payload.len(),
                8 * grid.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            kind,
            field: ScalarField::new(grid, values)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            FwiError::Format(msg) => FwiError::Format(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Squared slowness regardless of the stored quantity.
    pub fn slowness(&self) -> ScalarField {
        match self.kind {
            RasterKind::SquaredSlowness => self.field.clone(),
            RasterKind::Velocity => super::synth::velocity_to_slowness(&self.field),
        }
    }

    pub fn velocity(&self) -> ScalarField {
        match self.kind {
            RasterKind::Velocity => self.field.clone(),
            RasterKind::SquaredSlowness => super::synth::slowness_to_velocity(&self.field),
        }
    }
}

const DATA_COLUMNS: [&str; 5] = ["frequency_hz", "source_index", "receiver_index", "real", "imag"];

/// Writes one row per (frequency, source, receiver) in that nesting order.
pub fn write_data<W: Write>(data: &ObservedData, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| FwiError::Format(format!("data csv: {e}"));
    w.write_record(DATA_COLUMNS).map_err(csv_err)?;
    for set in &data.sets {
        for (s, row) in set.values.iter().enumerate() {
            for (r, v) in row.iter().enumerate() {
                w.write_record([
                    set.frequency.to_string(),
                    s.to_string(),
                    r.to_string(),
                    v.re.to_string(),
                    v.im.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a data file; rows may come in any order but must cover every
/// (source, receiver) pair of each frequency exactly once.
pub fn read_data<R: Read>(input: R) -> Result<ObservedData> {
    let mut rd = csv::Reader::from_reader(input);
    let csv_err = |e: csv::Error| FwiError::Format(format!("data csv: {e}"));
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != DATA_COLUMNS {
        return Err(FwiError::Format(format!(
            "data csv header must be {}",
            DATA_COLUMNS.join(",")
        )));
    }
    let mut rows: Vec<(f64, usize, usize, Complex64)> = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| FwiError::Format(format!("data csv row {}: bad {what}", line + 2));
        let f: f64 = rec[0].parse().map_err(|_| bad("frequency"))?;
        let s: usize = rec[1].parse().map_err(|_| bad("source index"))?;
        let r: usize = rec[2].parse().map_err(|_| bad("receiver index"))?;
        let re: f64 = rec[3].parse().map_err(|_| bad("real part"))?;
        let im: f64 = rec[4].parse().map_err(|_| bad("imaginary part"))?;
        if !(f > 0.0 && f.is_finite() && re.is_finite() && im.is_finite()) {
            return Err(bad("value (must be finite, frequency positive)"));
        }
        rows.push((f, s, r, Complex64::new(re, im)));
    }
    let mut sets: Vec<FrequencyData> = Vec::new();
    let mut filled: Vec<Vec<Vec<bool>>> = Vec::new();
    for &(f, _, _, _) in &rows {
        if !sets.iter().any(|set| set.frequency == f) {
            sets.push(FrequencyData {
                frequency: f,
                values: Vec::new(),
            });
            filled.push(Vec::new());
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    for (f, s, r, v) in rows {
        let k = sets.iter().position(|set| set.frequency == f).unwrap();
        let (vals, seen) = (&mut sets[k].values, &mut filled[k]);
        if vals.len() <= s {
            vals.resize(s + 1, Vec::new());
            seen.resize(s + 1, Vec::new());
        }
        if vals[s].len() <= r {
            vals[s].resize(r + 1, zero);
            seen[s].resize(r + 1, false);
        }
        if seen[s][r] {
            return Err(FwiError::Format(format!("duplicate row ({f} Hz, source {s}, receiver {r})")));
        }
        seen[s][r] = true;
        vals[s][r] = v;
    }
    for (set, seen) in sets.iter().zip(&filled) {
        let nr = seen.iter().map(Vec::len).max().unwrap_or(0);
        if seen.iter().any(|row| row.len() != nr || row.iter().any(|&x| !x)) {
            return Err(FwiError::Format(format!(
                "data at {} Hz does not cover every source/receiver pair",
                set.frequency
            )));
        }
    }
    Ok(ObservedData { sets })
}

pub fn write_data_file(data: &ObservedData, path: &Path) -> Result<()> {
    write_data(data, std::fs::File::create(path)?)
}

pub fn read_data_file(path: &Path) -> Result<ObservedData> {
    read_data(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_round_trip_is_byte_identical() {
        let grid = ModelGrid::new(3, 4, 12.5).unwrap();
        let field = ScalarField::from_fn(grid, |ix, iz| 1.0 / (1.0 + ix as f64 * 3.0 + iz as f64));
        let r = Raster {
            kind: RasterKind::SquaredSlowness,
            field,
        };
        let bytes = r.to_bytes();
        assert_eq!(bytes.len(), 32 + 8 * 12);
        let back = Raster::from_bytes(&bytes).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn raster_rejects_bad_input() {
        let grid = ModelGrid::new(3, 1, 1.0).unwrap();
        let mut bytes = Raster {
            kind: RasterKind::Velocity,
            field: ScalarField::constant(grid, 2.0),
        }
        .to_bytes();
        assert!(Raster::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(Raster::from_bytes(&bytes).is_err());
    }

    #[test]
    fn data_round_trip_is_byte_identical() {
        let data = ObservedData {
            sets: vec![
                FrequencyData {
                    frequency: 3.5,
                    values: vec![vec![Complex64::new(0.1, -2e-17), Complex64::new(1.0 / 3.0, 7.0)]],
                },
                FrequencyData {
                    frequency: 4.0,
                    values: vec![vec![Complex64::new(-1e300, 0.0), Complex64::new(5e-324, 1.5)]],
                },
            ],
        };
        let mut first = Vec::new();
        write_data(&data, &mut first).unwrap();
        let back = read_data(first.as_slice()).unwrap();
        assert_eq!(back, data);
        let mut second = Vec::new();
        write_data(&back, &mut second).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("frequency_hz,source_index,receiver_index,real,imag\n"));
    }

    #[test]
    fn data_gaps_are_rejected() {
        let text = "frequency_hz,source_index,receiver_index,real,imag\n3,0,0,1,0\n3,0,2,1,0\n";
        assert!(read_data(text.as_bytes()).is_err());
    }
}
