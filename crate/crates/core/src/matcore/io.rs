//! DMR1 binary and CSV matrix files.
//!
//! DMR1 layout: `b"DMR1"`, rows as u64 LE, cols as u64 LE, then rows*cols
//! f64 LE values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::Mat;
use crate::error::{Error, Result};

pub const DMR1_MAGIC: &[u8; 4] = b"DMR1";

pub fn write_dmr1_to<W: Write>(mut w: W, m: &Mat) -> Result<()> {
    w.write_all(DMR1_MAGIC)?;
    w.write_u64::<LittleEndian>(m.rows() as u64)?;
    w.write_u64::<LittleEndian>(m.cols() as u64)?;
    for &v in m.as_slice() {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dmr1_from<R: Read>(mut r: R) -> Result<Mat> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DMR1_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: format!("bad magic {magic:?}, expected DMR1"),
        });
    }
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let len = rows.checked_mul(cols).ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("dimensions {rows}x{cols} overflow"),
    })?;
    let mut data = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    Mat::from_vec(rows, cols, data)
}

pub fn write_dmr1(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    write_dmr1_to(BufWriter::new(File::create(path)?), m)
}

pub fn read_dmr1(path: impl AsRef<Path>) -> Result<Mat> {
    read_dmr1_from(BufReader::new(File::open(path)?))
}

/// One matrix row per line. Values use Rust's shortest round-trip float formatting.
pub fn write_csv_to<W: Write>(mut w: W, m: &Mat) -> Result<()> {
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_from<R: Read>(r: R) -> Result<Mat> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("{field:?}: {e}"),
            })?;
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected {c} columns, found {n}"),
                })
            }
            _ => {}
        }
        rows += 1;
    }
    Mat::from_vec(rows, cols.unwrap_or(0), data)
}

pub fn write_csv(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    write_csv_to(BufWriter::new(File::create(path)?), m)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Mat> {
    read_csv_from(File::open(path)?)
}
