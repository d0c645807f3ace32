//! Binary field snapshots and the CSV time series.
//!
//! Snapshot layout (little-endian): 8-byte magic, `u32` version, `u32`
//! `nx, ny, np`, `f64` `lx, ly, p1, p0, t`, `u32` field count, one 8-byte
//! tag per field, then the fields one after another in grid order.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::diagnostics::InvariantReport;
use crate::error::IoError;
use crate::grid::Grid;
use crate::state::{State, FIELD_NAMES};

pub const MAGIC: [u8; 8] = *b"MPESNAP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub dims: (usize, usize, usize),
    pub lx: f64,
    pub ly: f64,
    pub p1: f64,
    pub p0: f64,
    pub time: f64,
    pub field_count: usize,
}

fn tag(name: &str) -> [u8; 8] {
    let mut t = [0u8; 8];
    t[..name.len()].copy_from_slice(name.as_bytes());
    t
}

pub fn write_snapshot(state: &State, grid: &Grid, path: impl AsRef<Path>) -> Result<(), IoError> {
    if let Some(f) = state.fields().iter().find(|f| f.len() != grid.len()) {
        return Err(IoError::DimensionMismatch {
            expected: (grid.nx, grid.ny, grid.np),
            found: (f.len(), 1, 1),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [grid.nx, grid.ny, grid.np] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for x in [grid.lx, grid.ly, grid.p1, grid.p0, state.time] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&(FIELD_NAMES.len() as u32).to_le_bytes())?;
    for name in FIELD_NAMES {
        w.write_all(&tag(name))?;
    }
    for f in state.fields() {
        for x in f.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], IoError> {
        if self.at + n > self.bytes.len() {
            return Err(IoError::PayloadMismatch {
                expected: self.at + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_snapshot(path: impl AsRef<Path>) -> Result<(SnapshotHeader, State), IoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, at: 0 };
    if c.take(8).map_err(|_| IoError::BadMagic)? != MAGIC {
        return Err(IoError::BadMagic);
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(IoError::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let dims = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let (lx, ly, p1, p0, time) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?, c.f64()?);
    let field_count = c.u32()? as usize;
    if field_count != FIELD_NAMES.len() {
        return Err(IoError::UnknownField(format!("{field_count} fields")));
    }
    for name in FIELD_NAMES {
        let t = c.take(8)?;
        if t != tag(name) {
            let shown = String::from_utf8_lossy(t).trim_end_matches('\0').to_string();
            return Err(IoError::UnknownField(shown));
        }
    }
    let n = dims.0 * dims.1 * dims.2;
    let expected = field_count * n * 8;
    let found = bytes.len() - c.at;
    if found != expected {
        return Err(IoError::PayloadMismatch { expected, found });
    }
    let mut state = State {
        u: Vec::new(),
        v: Vec::new(),
        temperature: Vec::new(),
        qv: Vec::new(),
        qc: Vec::new(),
        qr: Vec::new(),
        time,
    };
    for f in state.fields_mut() {
        *f = (0..n).map(|_| c.f64()).collect::<Result<_, _>>()?;
    }
    let header = SnapshotHeader {
        version,
        dims,
        lx,
        ly,
        p1,
        p0,
        time,
        field_count,
    };
    Ok((header, state))
}

/// Reads a snapshot and checks it against `grid`.
pub fn read_snapshot_for(path: impl AsRef<Path>, grid: &Grid) -> Result<State, IoError> {
    let (h, s) = read_snapshot(path)?;
    let expected = (grid.nx, grid.ny, grid.np);
    if h.dims != expected {
        return Err(IoError::DimensionMismatch { expected, found: h.dims });
    }
    Ok(s)
}

/// Column order of the time-series CSV.
pub const COLUMNS: [&str; 17] = [
    "step",
    "t",
    "min_T",
    "max_T",
    "min_qv",
    "max_qv",
    "min_qc",
    "max_qc",
    "min_qr",
    "max_qr",
    "l2_u",
    "l1_T",
    "energy",
    "dissipation",
    "div_residual",
    "H_cancel_residual",
    "Q_sev_residual",
];

/// One time-series row; every column of [`COLUMNS`] must be present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeseriesRow {
    values: Vec<(&'static str, f64)>,
}

impl TimeseriesRow {
    pub fn from_report(step: u64, t: f64, r: &InvariantReport) -> Self {
        let mut values = vec![("step", step as f64), ("t", t)];
        for (names, e) in [
            ("min_T", "max_T"),
            ("min_qv", "max_qv"),
            ("min_qc", "max_qc"),
            ("min_qr", "max_qr"),
        ]
        .into_iter()
        .zip(&r.extrema)
        {
            values.push((names.0, e.min));
            values.push((names.1, e.max));
        }
        values.extend([
            ("l2_u", r.u_sq.sqrt()),
            ("l1_T", r.t_l1),
            ("energy", r.energy),
            ("dissipation", r.dissipation),
            ("div_residual", r.div_residual),
            ("H_cancel_residual", r.h_cancel_residual),
            ("Q_sev_residual", r.q_sev_residual),
        ]);
        Self { values }
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        self.values.iter().find(|(c, _)| *c == column).map(|(_, v)| *v)
    }
}

fn format_value(column: &str, x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if column == "step" {
        format!("{}", x as u64)
    } else {
        format!("{x:e}")
    }
}

/// Appends one row, writing the header first if the file is new or empty.
/// Returns `true` when the row contained a NaN (the run should be flagged).
pub fn append_timeseries(row: &TimeseriesRow, path: impl AsRef<Path>) -> Result<bool, IoError> {
    let mut cells = Vec::with_capacity(COLUMNS.len());
    let mut flagged = false;
    for col in COLUMNS {
        let x = row.get(col).ok_or(IoError::MissingColumn(col))?;
        flagged |= x.is_nan();
        cells.push(format_value(col, x));
    }
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut text = String::new();
    if fresh {
        text.push_str(&COLUMNS.join(","));
        text.push('\n');
    }
    text.push_str(&cells.join(","));
    text.push('\n');
    f.write_all(text.as_bytes())?;
    Ok(flagged)
}
