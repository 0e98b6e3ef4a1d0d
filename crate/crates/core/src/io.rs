//! Vector file formats.
//!
//! * `fvecs`: per vector a little-endian `i32` dimension followed by that many
//!   little-endian `f32` values.
//! * text: one vector per line, whitespace-separated decimal numbers; blank
//!   lines and lines starting with `#` are skipped.
//! * `ivecs`: as `fvecs` with `i32` payloads. Ground-truth files use it with
//!   one row of `k` point indices per query.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorFormat {
    Fvecs,
    Text,
}

impl VectorFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fvecs" => Some(VectorFormat::Fvecs),
            "text" => Some(VectorFormat::Text),
            _ => None,
        }
    }
}

fn read_vecs<R: Read, T, F: Fn([u8; 4]) -> T>(mut r: R, decode: F) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::new();
    let mut head = [0u8; 4];
    loop {
        match r.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let d = i32::from_le_bytes(head);
        if d < 0 {
            return Err(Error::Format(format!("negative dimension {d}")));
        }
        let mut raw = vec![0u8; d as usize * 4];
        r.read_exact(&mut raw).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Truncated,
            _ => e.into(),
        })?;
        out.push(
            raw.chunks_exact(4)
                .map(|c| decode(c.try_into().unwrap()))
                .collect(),
        );
    }
    Ok(out)
}

pub fn read_fvecs_from<R: Read>(r: R) -> Result<Vec<Vec<f32>>> {
    read_vecs(r, f32::from_le_bytes)
}

pub fn read_ivecs_from<R: Read>(r: R) -> Result<Vec<Vec<i32>>> {
    read_vecs(r, i32::from_le_bytes)
}

pub fn write_fvecs_to<W: Write>(mut w: W, rows: &[Vec<f32>]) -> Result<()> {
    for row in rows {
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_ivecs_to<W: Write>(mut w: W, rows: &[Vec<i32>]) -> Result<()> {
    for row in rows {
        w.write_all(&(row.len() as i32).to_le_bytes())?;
        for x in row {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_text_from<R: BufRead>(r: R) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("line {}: {e}", no + 1)))?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_text_to<W: Write>(mut w: W, rows: &[Vec<f32>]) -> Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vectors<P: AsRef<Path>>(path: P, format: VectorFormat) -> Result<Vec<Vec<f32>>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    match format {
        VectorFormat::Fvecs => read_fvecs_from(f),
        VectorFormat::Text => read_text_from(f),
    }
}

pub fn write_vectors<P: AsRef<Path>>(
    path: P,
    format: VectorFormat,
    rows: &[Vec<f32>],
) -> Result<()> {
    let f = BufWriter::new(std::fs::File::create(path)?);
    match format {
        VectorFormat::Fvecs => write_fvecs_to(f, rows),
        VectorFormat::Text => write_text_to(f, rows),
    }
}

pub fn read_ivecs<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<i32>>> {
    read_ivecs_from(BufReader::new(std::fs::File::open(path)?))
}

pub fn write_ivecs<P: AsRef<Path>>(path: P, rows: &[Vec<i32>]) -> Result<()> {
    write_ivecs_to(BufWriter::new(std::fs::File::create(path)?), rows)
}
