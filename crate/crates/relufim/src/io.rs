//! On-disk formats.
//!
//! Matrices use one binary layout: an eight-byte magic, a version, a kind
//! tag, the shape and generation parameters, then the entries as
//! little-endian f64 in row-major order. Kernel matrices additionally carry
//! a JSON sidecar (same path, `.json` extension) recording provenance and
//! the guaranteed series tail bound. Reports serialize to JSON; spectra and
//! check tables to CSV. Output is byte-stable: identical inputs produce
//! identical files.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::CertificateReport;
use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, KernelMeta, Provenance};
use crate::spectrum::group_of_rank;
use crate::weights::WeightMatrix;

const MAGIC: &[u8; 8] = b"RFIMMTX\0";
const VERSION: u32 = 1;
const KIND_WEIGHTS: u32 = 1;
const KIND_KERNEL: u32 = 2;

struct Header {
    kind: u32,
    rows: u64,
    cols: u64,
    d: u64,
    p: u64,
    seed: u64,
    scale: f64,
}

fn write_header(w: &mut impl Write, h: &Header) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&h.kind.to_le_bytes())?;
    for v in [h.rows, h.cols, h.d, h.p, h.seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&h.scale.to_le_bytes())?;
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let kind = u32::from_le_bytes(u32buf);
    let mut u64buf = [0u8; 8];
    let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let rows = next_u64(r)?;
    let cols = next_u64(r)?;
    let d = next_u64(r)?;
    let p = next_u64(r)?;
    let seed = next_u64(r)?;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf)?;
    let scale = f64::from_le_bytes(f64buf);
    Ok(Header {
        kind,
        rows,
        cols,
        d,
        p,
        seed,
        scale,
    })
}

fn write_body(w: &mut impl Write, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_body(r: &mut impl Read, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    let mut buf = [0u8; 8];
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut buf)?;
            let v = f64::from_le_bytes(buf);
            if !v.is_finite() {
                return Err(Error::Format(format!("non-finite entry at ({i}, {j})")));
            }
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

pub fn save_weights(path: &Path, w: &WeightMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_header(
        &mut out,
        &Header {
            kind: KIND_WEIGHTS,
            rows: w.d() as u64,
            cols: w.p() as u64,
            d: w.d() as u64,
            p: w.p() as u64,
            seed: w.seed(),
            scale: w.scale(),
        },
    )?;
    write_body(&mut out, w.entries())?;
    out.flush()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<WeightMatrix> {
    let mut input = BufReader::new(File::open(path)?);
    let h = read_header(&mut input)?;
    if h.kind != KIND_WEIGHTS {
        return Err(Error::Format(format!("expected a weights file, kind = {}", h.kind)));
    }
    if h.rows != h.d || h.cols != h.p {
        return Err(Error::Format("inconsistent weight shape".into()));
    }
    let entries = read_body(&mut input, h.rows as usize, h.cols as usize)?;
    Ok(WeightMatrix::from_parts(
        h.d as usize,
        h.p as usize,
        h.seed,
        h.scale,
        entries,
    ))
}

/// Sidecar describing how a kernel matrix was built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub d: usize,
    pub p: usize,
    pub seed: u64,
    pub provenance: Provenance,
    pub tail_bound: Option<f64>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the binary matrix plus its JSON sidecar.
pub fn save_kernel(path: &Path, k: &KernelMatrix) -> Result<()> {
    let meta = k.meta();
    let mut out = BufWriter::new(File::create(path)?);
    write_header(
        &mut out,
        &Header {
            kind: KIND_KERNEL,
            rows: k.p() as u64,
            cols: k.p() as u64,
            d: meta.d as u64,
            p: k.p() as u64,
            seed: meta.seed,
            scale: 0.0,
        },
    )?;
    write_body(&mut out, k.values())?;
    out.flush()?;
    write_json(
        &sidecar_path(path),
        &KernelSidecar {
            d: meta.d,
            p: k.p(),
            seed: meta.seed,
            provenance: k.provenance(),
            tail_bound: meta.tail_bound,
        },
    )
}

pub fn load_kernel(path: &Path) -> Result<KernelMatrix> {
    let mut input = BufReader::new(File::open(path)?);
    let h = read_header(&mut input)?;
    if h.kind != KIND_KERNEL {
        return Err(Error::Format(format!("expected a kernel file, kind = {}", h.kind)));
    }
    if h.rows != h.cols {
        return Err(Error::Format("kernel matrix must be square".into()));
    }
    let values = read_body(&mut input, h.rows as usize, h.cols as usize)?;
    let sidecar: KernelSidecar = serde_json::from_reader(BufReader::new(File::open(
        sidecar_path(path),
    )?))?;
    if sidecar.p != h.p as usize {
        return Err(Error::Format("sidecar does not match matrix shape".into()));
    }
    KernelMatrix::from_symmetric_parts(
        values,
        sidecar.provenance,
        KernelMeta {
            d: sidecar.d,
            seed: sidecar.seed,
            tail_bound: sidecar.tail_bound,
        },
    )
}

/// Plain CSV dump of a matrix, for small instances.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                write!(out, ",")?;
            }
            write!(out, "{}", m[(i, j)])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// `rank,eigenvalue,group` with eigenvalues in the given (descending) order.
pub fn write_spectrum_csv(path: &Path, eigenvalues: &[f64], d: usize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "rank,eigenvalue,group")?;
    for (rank, v) in eigenvalues.iter().enumerate() {
        writeln!(out, "{},{},{}", rank + 1, v, group_of_rank(rank, d))?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON plus trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// `id,value,bound,pass` rows, e.g. for geometry or quotient tables.
pub fn write_check_csv(path: &Path, rows: &[(String, f64, f64, bool)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "id,value,bound,pass")?;
    for (id, value, bound, pass) in rows {
        writeln!(out, "{id},{value},{bound},{pass}")?;
    }
    out.flush()?;
    Ok(())
}

/// Appends one certificate line to a sweep summary, creating the header on
/// first use.
pub fn append_sweep_csv(path: &Path, report: &CertificateReport) -> Result<()> {
    let new = !path.exists();
    let mut out = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    if new {
        writeln!(out, "d,p,seed,delta_star,xi,floor,pass_count,check_count")?;
    }
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        report.stamp.d,
        report.stamp.p,
        report.stamp.seed,
        report.delta_star,
        report.xi,
        report.probability_floor,
        report.checks.iter().filter(|c| c.pass).count(),
        report.checks.len(),
    )?;
    out.flush()?;
    Ok(())
}
