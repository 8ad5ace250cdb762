//! On-disk store of retained draws.
//!
//! `<stem>.bin` is a headerless sequence of fixed-size little-endian
//! records:
//!
//! | field     | type | count |
//! |-----------|------|-------|
//! | iteration | u64  | 1     |
//! | lambda    | f64  | d·q, row-major |
//! | delta     | f64  | d     |
//! | labels    | u32  | d     |
//! | alpha     | f64  | 1     |
//! | tau       | f64  | 1     |
//!
//! `<stem>.json` describes the dimensions and record count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Draw;
use crate::error::{Error, Result};

pub const STORE_FORMAT: &str = "precfactor-draws";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawStoreMeta {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub d: usize,
    pub q: usize,
    pub n_records: usize,
    pub record_bytes: usize,
    pub fields: Vec<FieldSpec>,
}

impl DrawStoreMeta {
    pub fn new(d: usize, q: usize, n_records: usize) -> Self {
        let field = |name: &str, ty: &str, count| FieldSpec {
            name: name.into(),
            ty: ty.into(),
            count,
        };
        Self {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
            endianness: "little".into(),
            d,
            q,
            n_records,
            record_bytes: record_bytes(d, q),
            fields: vec![
                field("iteration", "u64", 1),
                field("lambda", "f64", d * q),
                field("delta", "f64", d),
                field("labels", "u32", d),
                field("alpha", "f64", 1),
                field("tau", "f64", 1),
            ],
        }
    }
}

pub fn record_bytes(d: usize, q: usize) -> usize {
    8 + 8 * d * q + 8 * d + 4 * d + 16
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub struct DrawWriter {
    out: BufWriter<File>,
    bin: PathBuf,
    sidecar: PathBuf,
    d: usize,
    q: usize,
    n_records: usize,
    buf: Vec<u8>,
}

impl DrawWriter {
    /// Creates `<stem>.bin`; the sidecar is written by [`DrawWriter::finish`].
    pub fn create(stem: impl AsRef<Path>, d: usize, q: usize) -> Result<Self> {
        let (bin, sidecar) = paths(stem.as_ref());
        let file = File::create(&bin).map_err(|e| Error::io(&bin, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            bin,
            sidecar,
            d,
            q,
            n_records: 0,
            buf: Vec::with_capacity(record_bytes(d, q)),
        })
    }

    pub fn write(&mut self, draw: &Draw) -> Result<()> {
        if draw.lambda.shape() != (self.d, self.q) || draw.delta.len() != self.d || draw.labels.len() != self.d {
            return Err(Error::Dimension(format!(
                "draw does not match store dimensions d={}, q={}",
                self.d, self.q
            )));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&(draw.iteration as u64).to_le_bytes());
        for j in 0..self.d {
            for h in 0..self.q {
                self.buf.extend_from_slice(&draw.lambda[(j, h)].to_le_bytes());
            }
        }
        for x in &draw.delta {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
        for &c in &draw.labels {
            self.buf.extend_from_slice(&(c as u32).to_le_bytes());
        }
        self.buf.extend_from_slice(&draw.alpha.to_le_bytes());
        self.buf.extend_from_slice(&draw.tau.to_le_bytes());
        self.out.write_all(&self.buf).map_err(|e| Error::io(&self.bin, e))?;
        self.n_records += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<DrawStoreMeta> {
        self.out.flush().map_err(|e| Error::io(&self.bin, e))?;
        let meta = DrawStoreMeta::new(self.d, self.q, self.n_records);
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(&self.sidecar, text).map_err(|e| Error::io(&self.sidecar, e))?;
        Ok(meta)
    }
}

pub struct DrawReader {
    input: BufReader<File>,
    bin: PathBuf,
    meta: DrawStoreMeta,
    read: usize,
    buf: Vec<u8>,
}

impl DrawReader {
    pub fn open(stem: impl AsRef<Path>) -> Result<Self> {
        let (bin, sidecar) = paths(stem.as_ref());
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: DrawStoreMeta = serde_json::from_str(&text)?;
        if meta.format != STORE_FORMAT || meta.version != STORE_VERSION {
            return Err(Error::Config(format!(
                "{}: unsupported store {} v{}",
                sidecar.display(),
                meta.format,
                meta.version
            )));
        }
        if meta.record_bytes != record_bytes(meta.d, meta.q) {
            return Err(Error::Config(format!("{}: record size disagrees with dims", sidecar.display())));
        }
        let file = File::open(&bin).map_err(|e| Error::io(&bin, e))?;
        let len = file.metadata().map_err(|e| Error::io(&bin, e))?.len() as usize;
        if len != meta.n_records * meta.record_bytes {
            return Err(Error::Data(format!(
                "{}: {} bytes, expected {} records of {}",
                bin.display(),
                len,
                meta.n_records,
                meta.record_bytes
            )));
        }
        let buf = vec![0; meta.record_bytes];
        Ok(Self {
            input: BufReader::new(file),
            bin,
            meta,
            read: 0,
            buf,
        })
    }

    pub fn meta(&self) -> &DrawStoreMeta {
        &self.meta
    }

    fn next_draw(&mut self) -> Result<Draw> {
        self.input.read_exact(&mut self.buf).map_err(|e| Error::io(&self.bin, e))?;
        let (d, q) = (self.meta.d, self.meta.q);
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &self.buf[at..at + n];
            at += n;
            s
        };
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
        let iteration = u64::from_le_bytes(take(8).try_into().expect("8 bytes")) as usize;
        let mut lambda = DMatrix::zeros(d, q);
        for j in 0..d {
            for h in 0..q {
                lambda[(j, h)] = f64_at(take(8));
            }
        }
        let delta = (0..d).map(|_| f64_at(take(8))).collect();
        let labels = (0..d)
            .map(|_| u32::from_le_bytes(take(4).try_into().expect("4 bytes")) as usize)
            .collect();
        let alpha = f64_at(take(8));
        let tau = f64_at(take(8));
        Ok(Draw {
            iteration,
            lambda,
            delta,
            labels,
            alpha,
            tau,
        })
    }
}

impl Iterator for DrawReader {
    type Item = Result<Draw>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.meta.n_records {
            return None;
        }
        self.read += 1;
        Some(self.next_draw())
    }
}

/// Flat CSV export, one row per draw. Meant for small d.
pub fn write_draws_csv(path: impl AsRef<Path>, draws: &[Draw]) -> Result<()> {
    let path = path.as_ref();
    let Some(first) = draws.first() else {
        return Err(Error::Data("no draws to export".into()));
    };
    let (d, q) = first.lambda.shape();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iteration".to_string()];
    for j in 0..d {
        for h in 0..q {
            header.push(format!("lambda_{j}_{h}"));
        }
    }
    header.extend((0..d).map(|j| format!("delta_{j}")));
    header.extend((0..d).map(|j| format!("label_{j}")));
    header.push("alpha".into());
    header.push("tau".into());
    w.write_record(&header)?;
    for draw in draws {
        let mut row = vec![draw.iteration.to_string()];
        for j in 0..d {
            for h in 0..q {
                row.push(format_f64(draw.lambda[(j, h)]));
            }
        }
        row.extend(draw.delta.iter().map(|x| format_f64(*x)));
        row.extend(draw.labels.iter().map(|c| c.to_string()));
        row.push(format_f64(draw.alpha));
        row.push(format_f64(draw.tau));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_draws_csv(path: impl AsRef<Path>, d: usize, q: usize) -> Result<Vec<Draw>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or(Error::Parse {
                row: row + 2,
                column: i + 1,
                message: "missing field".into(),
            })
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?.parse::<f64>().map_err(|e| Error::Parse {
                row: row + 2,
                column: i + 1,
                message: e.to_string(),
            })
        };
        let iteration = num(0)? as usize;
        let mut at = 1;
        let mut lambda = DMatrix::zeros(d, q);
        for j in 0..d {
            for h in 0..q {
                lambda[(j, h)] = num(at)?;
                at += 1;
            }
        }
        let delta = (0..d).map(|i| num(at + i)).collect::<Result<Vec<_>>>()?;
        at += d;
        let labels = (0..d).map(|i| num(at + i).map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
        at += d;
        out.push(Draw {
            iteration,
            lambda,
            delta,
            labels,
            alpha: num(at)?,
            tau: num(at + 1)?,
        });
    }
    Ok(out)
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn format_f64(x: f64) -> String {
    format!("{x:?}")
}
