//! Binary feature banks and distance-matrix files.
//!
//! Feature bank layout (all integers little-endian):
//!
//! ```text
//! "APFBANK1"                      8-byte magic
//! u32                             JSON header length
//! {"n_boxes","K","K_v","d","d_global","has_labels"}
//! per box:
//!   u64 box_id
//!   u64 validity bitmask          bits 0..K horizontal, 16..16+K_v vertical
//!   u32 label                     only when has_labels
//!   f32 x d_global                global feature
//!   f32 x d, (K + K_v) times      stripe features, invalid stripes zeroed
//! ```
//!
//! Distance matrix layout: `"APDMAT01"`, u32 header length, JSON header
//! `{"rows","cols","strategy","lambda"}`, then `rows * cols` f32 row-major.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::boxgeom::ValidityVector;
use crate::error::{Error, Result};
use crate::matching::Strategy;
use crate::partfeat::PartDescriptor;
use crate::scalar::Scalar;

pub const BANK_MAGIC: &[u8; 8] = b"APFBANK1";
pub const MATRIX_MAGIC: &[u8; 8] = b"APDMAT01";

/// Header of a feature bank. `K_v` is `null` when no vertical stripes exist.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankHeader {
    pub n_boxes: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K_v")]
    pub k_v: Option<usize>,
    pub d: usize,
    pub d_global: usize,
    pub has_labels: bool,
}

impl BankHeader {
    /// Whether two banks can be matched against each other.
    pub fn compatible(&self, other: &BankHeader) -> Result<()> {
        if self.k != other.k || self.k_v != other.k_v || self.d != other.d || self.d_global != other.d_global {
            return Err(Error::HeaderMismatch(format!(
                "K {}/{}, K_v {:?}/{:?}, d {}/{}, d_global {}/{}",
                self.k, other.k, self.k_v, other.k_v, self.d, other.d, self.d_global, other.d_global
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankRecord<T> {
    pub box_id: u64,
    pub descriptor: PartDescriptor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank<T> {
    pub header: BankHeader,
    pub records: Vec<BankRecord<T>>,
}

impl<T: Scalar> FeatureBank<T> {
    /// Builds a bank, deriving the header from the first record.
    pub fn from_records(records: Vec<BankRecord<T>>) -> Result<Self> {
        let first =
            records.first().ok_or_else(|| Error::Format("cannot infer a bank header from zero records".into()))?;
        let d0 = &first.descriptor;
        let header = BankHeader {
            n_boxes: records.len() as u64,
            k: d0.k(),
            k_v: d0.k_v(),
            d: d0.dim(),
            d_global: d0.global_dim(),
            has_labels: d0.label().is_some(),
        };
        for r in &records {
            let d = &r.descriptor;
            if d.k() != header.k || d.k_v() != header.k_v || d.dim() != header.d || d.global_dim() != header.d_global {
                return Err(Error::ShapeMismatch(format!("record {} disagrees with bank shape", r.box_id)));
            }
            if d.label().is_some() != header.has_labels {
                return Err(Error::Format(format!("record {} label presence differs from the bank", r.box_id)));
            }
        }
        Ok(Self { header, records })
    }

    pub fn descriptors(&self) -> Vec<PartDescriptor<T>> {
        self.records.iter().map(|r| r.descriptor.clone()).collect()
    }
}

fn write_f32s<W: Write, T: Scalar>(w: &mut W, values: impl IntoIterator<Item = T>) -> Result<()> {
    for v in values {
        let x = v.to_f32().ok_or_else(|| Error::Format(format!("{v} not representable as f32")))?;
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_json_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 8], header: &H) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(magic)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub fn write_bank<W: Write, T: Scalar>(w: &mut W, bank: &FeatureBank<T>) -> Result<()> {
    if bank.header.n_boxes != bank.records.len() as u64 {
        return Err(Error::Format("header n_boxes disagrees with record count".into()));
    }
    write_json_header(w, BANK_MAGIC, &bank.header)?;
    for r in &bank.records {
        let d = &r.descriptor;
        w.write_all(&r.box_id.to_le_bytes())?;
        w.write_all(&d.validity().to_bitmask().to_le_bytes())?;
        if bank.header.has_labels {
            let label = d.label().ok_or_else(|| Error::Format(format!("record {} lacks a label", r.box_id)))?;
            w.write_all(&label.to_le_bytes())?;
        }
        write_f32s(w, d.global().iter().copied())?;
        for s in 0..d.validity().slot_count() {
            match d.part(s) {
                Some(p) => write_f32s(w, p.iter().copied())?,
                None => write_f32s(w, std::iter::repeat_n(T::zero(), d.dim()))?,
            }
        }
    }
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated {what}: {e}")))?;
    Ok(buf)
}

fn read_f32s<R: Read, T: Scalar>(r: &mut R, n: usize, what: &str) -> Result<Vec<T>> {
    (0..n)
        .map(|_| {
            let x = f32::from_le_bytes(read_exact::<4, _>(r, what)?);
            if !x.is_finite() {
                return Err(Error::Format(format!("non-finite value in {what}")));
            }
            Ok(T::lit(x as f64))
        })
        .collect()
}

fn read_json_header<R: Read, H: for<'de> Deserialize<'de>>(r: &mut R, magic: &[u8; 8], what: &str) -> Result<H> {
    let found = read_exact::<8, _>(r, "magic")?;
    if &found != magic {
        return Err(Error::Format(format!("not a {what} file (bad magic)")));
    }
    let len = u32::from_le_bytes(read_exact::<4, _>(r, "header length")?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    serde_json::from_slice(&json).map_err(|e| Error::Format(format!("bad {what} header: {e}")))
}

pub fn read_bank<R: Read, T: Scalar>(r: &mut R) -> Result<FeatureBank<T>> {
    let header: BankHeader = read_json_header(r, BANK_MAGIC, "feature bank")?;
    if header.d == 0 || header.d_global == 0 {
        return Err(Error::Format("bank dimensions must be positive".into()));
    }
    let slots = header.k + header.k_v.unwrap_or(0);
    let mut records = Vec::new();
    for _ in 0..header.n_boxes {
        let box_id = u64::from_le_bytes(read_exact::<8, _>(r, "box id")?);
        let mask = u64::from_le_bytes(read_exact::<8, _>(r, "validity mask")?);
        let validity = ValidityVector::from_bitmask(mask, header.k, header.k_v)
            .map_err(|e| Error::Format(format!("box {box_id}: {e}")))?;
        let label = if header.has_labels { Some(u32::from_le_bytes(read_exact::<4, _>(r, "label")?)) } else { None };
        let global = read_f32s(r, header.d_global, "global feature")?;
        let parts = (0..slots).map(|_| read_f32s(r, header.d, "stripe feature")).collect::<Result<Vec<_>>>()?;
        let descriptor = PartDescriptor::new(validity, parts, global, label)?;
        records.push(BankRecord { box_id, descriptor });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last bank record".into()));
    }
    Ok(FeatureBank { header, records })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub strategy: Strategy,
    pub lambda: f64,
}

/// Distances stored at single precision, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub header: MatrixHeader,
    pub values: Vec<f32>,
}

impl MatrixFile {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.header.cols..(i + 1) * self.header.cols]
    }
}

pub fn write_matrix_binary<W: Write>(w: &mut W, m: &MatrixFile) -> Result<()> {
    if m.values.len() != m.header.rows * m.header.cols {
        return Err(Error::ShapeMismatch("matrix value count disagrees with header".into()));
    }
    write_json_header(w, MATRIX_MAGIC, &m.header)?;
    for v in &m.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(r: &mut R) -> Result<MatrixFile> {
    let header: MatrixHeader = read_json_header(r, MATRIX_MAGIC, "distance matrix")?;
    let values = read_f32s::<_, f32>(r, header.rows * header.cols, "distance")?;
    Ok(MatrixFile { header, values })
}

/// One line per query, comma-separated, shortest round-trip formatting.
pub fn write_matrix_csv<W: Write>(w: &mut W, m: &MatrixFile) -> Result<()> {
    for i in 0..m.header.rows {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Parses the CSV form. The strategy and lambda are not stored there.
pub fn read_matrix_csv(text: &str) -> Result<Vec<Vec<f32>>> {
    let rows: Vec<Vec<f32>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|v| v.trim().parse::<f32>().map_err(|e| Error::Format(format!("row {i}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(Error::Format("ragged distance matrix".into()));
        }
    }
    Ok(rows)
}
