//! CSV tables and binary path dumps.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64` exactly and makes files comparable
//! byte-for-byte.
//!
//! Binary dumps are a 32-byte little-endian header followed by the values as
//! little-endian `f64`, row-major (time × node):
//!
//! | offset | size | field                                    |
//! |--------|------|------------------------------------------|
//! | 0      | 4    | magic, `HDWN` (noise) or `HDYP` (volatility) |
//! | 4      | 4    | format version (`u32`, currently 1)      |
//! | 8      | 8    | `N`, number of spatial intervals (`u64`) |
//! | 16     | 8    | number of stored rows (`u64`)            |
//! | 24     | 8    | reserved, zero                           |
//!
//! Each row holds the `N + 1` nodal values of one time level (volatility
//! paths, including `t = 0`) or of one increment (noise paths).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::experiments::{ErrorRow, RateRow, TimingRow};
use crate::heat_fem::YPath;
use crate::noise::NoiseGrid;
use crate::price_fd::XPath;
use crate::{Error, Result};

pub const ERRORS_HEADER: [&str; 6] = ["study", "param", "resolution", "error", "stderr", "wall_s"];
pub const RATES_HEADER: [&str; 6] = ["study", "param", "slope", "intercept", "residual", "points_used"];
pub const TIMING_HEADER: [&str; 5] = ["rule", "k", "h", "wall_s", "fft_s"];
pub const SURFACE_HEADER: [&str; 3] = ["t", "x", "value"];

pub const DUMP_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

/// Lossless fixed-width float formatting used in every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

pub fn write_errors<W: Write>(w: W, rows: &[ErrorRow]) -> Result<()> {
    let mut out = writer(w, &ERRORS_HEADER)?;
    for r in rows {
        out.write_record([
            r.study.clone(),
            fmt_f64(r.param),
            fmt_f64(r.resolution),
            fmt_f64(r.error),
            fmt_f64(r.stderr),
            fmt_f64(r.wall_s),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_rates<W: Write>(w: W, rows: &[RateRow]) -> Result<()> {
    let mut out = writer(w, &RATES_HEADER)?;
    for r in rows {
        out.write_record([
            r.study.clone(),
            fmt_f64(r.param),
            fmt_f64(r.slope),
            fmt_f64(r.intercept),
            fmt_f64(r.residual),
            r.points_used.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(w: W, rows: &[TimingRow]) -> Result<()> {
    let mut out = writer(w, &TIMING_HEADER)?;
    for r in rows {
        out.write_record([r.rule.clone(), fmt_f64(r.k), fmt_f64(r.h), fmt_f64(r.wall_s), fmt_f64(r.fft_s)])?;
    }
    out.flush()?;
    Ok(())
}

fn read_table<R: Read, T: DeserializeOwned>(r: R, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(Error::Format(format!("unexpected CSV header {got:?}, expected {header:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_errors<R: Read>(r: R) -> Result<Vec<ErrorRow>> {
    read_table(r, &ERRORS_HEADER)
}

pub fn read_rates<R: Read>(r: R) -> Result<Vec<RateRow>> {
    read_table(r, &RATES_HEADER)
}

pub fn read_timings<R: Read>(r: R) -> Result<Vec<TimingRow>> {
    read_table(r, &TIMING_HEADER)
}

/// `(t, x, value)` rows, time-major.
pub fn write_surface<W: Write>(w: W, points: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<()> {
    let mut out = writer(w, &SURFACE_HEADER)?;
    for (t, x, v) in points {
        out.write_record([fmt_f64(t), fmt_f64(x), fmt_f64(v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_xpath_csv<W: Write>(w: W, path: &XPath) -> Result<()> {
    write_surface(w, path.points())
}

pub fn write_ypath_csv<W: Write>(w: W, path: &YPath) -> Result<()> {
    let grid = path.grid();
    let k = path.time_step();
    let n = grid.node_count();
    write_surface(
        w,
        path.values()
            .iter()
            .enumerate()
            .map(|(idx, &v)| ((idx / n) as f64 * k, grid.node(idx % n), v)),
    )
}

/// Kind of binary dump, identified by its magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Noise,
    Volatility,
}

impl DumpKind {
    pub fn magic(self) -> [u8; 4] {
        match self {
            DumpKind::Noise => *b"HDWN",
            DumpKind::Volatility => *b"HDYP",
        }
    }
}

/// Contents of a binary dump.
#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub kind: DumpKind,
    pub intervals: u64,
    pub rows: u64,
    pub values: Vec<f64>,
}

pub fn write_dump<W: Write>(mut w: W, kind: DumpKind, intervals: usize, values: &[f64]) -> Result<()> {
    let width = intervals + 1;
    if !values.len().is_multiple_of(width) {
        return Err(Error::DimensionMismatch {
            expected: width,
            actual: values.len() % width,
        });
    }
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&kind.magic());
    header[4..8].copy_from_slice(&DUMP_VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(intervals as u64).to_le_bytes());
    header[16..24].copy_from_slice(&((values.len() / width) as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_dump<R: Read>(mut r: R) -> Result<Dump> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let kind = match &header[0..4] {
        b"HDWN" => DumpKind::Noise,
        b"HDYP" => DumpKind::Volatility,
        m => return Err(Error::Format(format!("unknown magic {m:?}"))),
    };
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().expect("8-byte slice"));
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4-byte slice"));
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (intervals, rows) = (u64_at(8), u64_at(16));
    let count = (intervals + 1)
        .checked_mul(rows)
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))? as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header promises {}",
            bytes.len(),
            count * 8
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Dump {
        kind,
        intervals,
        rows,
        values,
    })
}

impl Dump {
    /// Rebuilds a volatility path from an `HDYP` dump.
    pub fn into_ypath(self, length: f64, time_step: f64) -> Result<YPath> {
        if self.kind != DumpKind::Volatility {
            return Err(Error::Format("not a volatility dump".into()));
        }
        YPath::from_rows(NoiseGrid::new(length, self.intervals as usize)?, time_step, self.values)
    }
}

/// Creates parent directories and opens `path` for buffered writing.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_tables_are_header_only() {
        let mut buf = Vec::new();
        write_errors(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "study,param,resolution,error,stderr,wall_s\n");
        let mut buf = Vec::new();
        write_rates(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "study,param,slope,intercept,residual,points_used\n"
        );
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let text = "study,param,resolution,err,stderr,wall_s\n";
        assert!(matches!(read_errors(text.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn dump_layout() {
        let mut buf = Vec::new();
        write_dump(&mut buf, DumpKind::Volatility, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(buf.len(), 32 + 48);
        assert_eq!(&buf[0..4], b"HDYP");
        assert_eq!(buf[4..8], 1u32.to_le_bytes());
        assert_eq!(buf[8..16], 2u64.to_le_bytes());
        assert_eq!(buf[16..24], 2u64.to_le_bytes());
        assert_eq!(buf[24..32], [0u8; 8]);
        assert_eq!(buf[32..40], 1f64.to_le_bytes());
        let d = read_dump(buf.as_slice()).unwrap();
        assert_eq!(d.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(d.rows, 2);
        let p = d.into_ypath(1.0, 0.5).unwrap();
        assert_eq!(p.value(1, 2), 6.0);
    }

    #[test]
    fn corrupt_dumps_are_rejected() {
        let mut buf = Vec::new();
        write_dump(&mut buf, DumpKind::Noise, 1, &[1.0, 2.0]).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_dump(bad.as_slice()).is_err());
        assert!(read_dump(&buf[..buf.len() - 1]).is_err());
        assert!(read_dump(&buf[..10]).is_err());
        assert!(write_dump(Vec::new(), DumpKind::Noise, 2, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn error_rows_round_trip_bit_exactly(
            vals in prop::collection::vec((any::<f64>().prop_filter("finite", |v| v.is_finite()), 0.0f64..1.0, 0.0f64..1e3), 0..20)
        ) {
            let rows: Vec<ErrorRow> = vals
                .iter()
                .map(|&(p, r, e)| ErrorRow {
                    study: "spatial-y".into(),
                    param: p,
                    resolution: r,
                    error: e,
                    stderr: e * 1e-3,
                    wall_s: 0.0,
                })
                .collect();
            let mut buf = Vec::new();
            write_errors(&mut buf, &rows).unwrap();
            let back = read_errors(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), rows.len());
            for (a, b) in back.iter().zip(&rows) {
                prop_assert_eq!(a.param.to_bits(), b.param.to_bits());
                prop_assert_eq!(a.error.to_bits(), b.error.to_bits());
                prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
            }
        }

        #[test]
        fn dump_round_trips(n in 1usize..6, rows in 1usize..5, bits in prop::collection::vec(any::<u64>(), 30)) {
            let values: Vec<f64> = bits[..(n + 1) * rows].iter().map(|&b| f64::from_bits(b)).collect();
            let mut buf = Vec::new();
            write_dump(&mut buf, DumpKind::Noise, n, &values).unwrap();
            let d = read_dump(buf.as_slice()).unwrap();
            let back: Vec<u64> = d.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(back, bits[..(n + 1) * rows].to_vec());
            prop_assert_eq!(d.intervals as usize, n);
        }
    }
}
