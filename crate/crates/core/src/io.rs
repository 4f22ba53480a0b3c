//! Checkpoint persistence: ".wsf" field files (one-line JSON header followed
//! by row-major little-endian f64 payload), a JSON run manifest, and the CSV
//! error ledger. All writes are atomic (write to a temporary file in the same
//! directory, then rename).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::field::{ScalarField, ScalarSlab, VectorField, VectorSlab};
use crate::grid::GridSpec;
use crate::{FieldError, Result};

/// Header line of a ".wsf" field file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldHeader {
    /// Spatial dimension (always 2 in this laboratory).
    pub d: u32,
    pub n: usize,
    pub m_t: usize,
    /// Time window `[t0, t1]`.
    pub window: (f64, f64),
    /// "scalar" (one component per frame) or "vector" (two).
    pub kind: String,
    /// Field name, e.g. "P", "M", "Rtil".
    pub name: String,
}

impl FieldHeader {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.m_t, self.window.0, self.window.1)
    }
}

/// Atomically write `bytes` to `path` via a temporary sibling file.
pub fn atomic_write(path: &Path, write_fn: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_fn(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_frames(w: &mut BufWriter<File>, header: &FieldHeader, frames: &[&[f64]]) -> Result<()> {
    let mut line = serde_json::to_string(header)
        .map_err(|e| FieldError::Other(format!("header serialization: {e}")))?;
    line.push('\n');
    w.write_all(line.as_bytes())?;
    for frame in frames {
        for v in *frame {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Write a scalar slab as a ".wsf" file.
pub fn write_scalar_slab(path: &Path, name: &str, slab: &ScalarSlab) -> Result<()> {
    let grid = slab.grid();
    let header = FieldHeader {
        d: 2,
        n: grid.n,
        m_t: grid.m_t,
        window: (grid.t0, grid.t1),
        kind: "scalar".into(),
        name: name.into(),
    };
    let frames: Vec<&[f64]> = slab.frames.iter().map(|f| f.data.as_slice()).collect();
    atomic_write(path, |w| write_frames(w, &header, &frames))
}

/// Write a vector slab (two components per frame, concatenated).
pub fn write_vector_slab(path: &Path, name: &str, slab: &VectorSlab) -> Result<()> {
    let grid = slab.grid();
    let header = FieldHeader {
        d: 2,
        n: grid.n,
        m_t: grid.m_t,
        window: (grid.t0, grid.t1),
        kind: "vector".into(),
        name: name.into(),
    };
    let mut frames: Vec<&[f64]> = Vec::with_capacity(2 * slab.frames.len());
    for f in &slab.frames {
        frames.push(f.components[0].data.as_slice());
        frames.push(f.components[1].data.as_slice());
    }
    atomic_write(path, |w| write_frames(w, &header, &frames))
}

fn read_header(r: &mut BufReader<File>) -> Result<FieldHeader> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > 1 << 16 {
            return Err(FieldError::Other("unterminated field header".into()));
        }
    }
    serde_json::from_slice(&line).map_err(|e| FieldError::Other(format!("field header: {e}")))
}

fn read_payload(r: &mut BufReader<File>, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Read a scalar slab, returning the header alongside.
pub fn read_scalar_slab(path: &Path) -> Result<(FieldHeader, ScalarSlab)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r)?;
    if header.kind != "scalar" {
        return Err(FieldError::Other(format!(
            "{}: expected scalar field, found {}",
            path.display(),
            header.kind
        )));
    }
    let grid = header.grid()?;
    let per = grid.n * grid.n;
    let mut frames = Vec::with_capacity(grid.m_t);
    for _ in 0..grid.m_t {
        frames.push(ScalarField { grid, data: read_payload(&mut r, per)? });
    }
    Ok((header, ScalarSlab { frames }))
}

/// Read a vector slab.
pub fn read_vector_slab(path: &Path) -> Result<(FieldHeader, VectorSlab)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = read_header(&mut r)?;
    if header.kind != "vector" {
        return Err(FieldError::Other(format!(
            "{}: expected vector field, found {}",
            path.display(),
            header.kind
        )));
    }
    let grid = header.grid()?;
    let per = grid.n * grid.n;
    let mut frames = Vec::with_capacity(grid.m_t);
    for _ in 0..grid.m_t {
        let c0 = ScalarField { grid, data: read_payload(&mut r, per)? };
        let c1 = ScalarField { grid, data: read_payload(&mut r, per)? };
        frames.push(VectorField { components: [c0, c1] });
    }
    Ok((header, VectorSlab { frames }))
}

/// One ledger row: the C⁰ norms of every assembled error term plus the
/// stage diagnostics, in the fixed CSV column order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LedgerRow {
    pub q: usize,
    pub r_t: f64,
    pub r_d: f64,
    pub r_n: f64,
    pub r_o: [f64; 6],
    pub r_m: f64,
    /// `‖c_{2,q+1}‖` (even stages) or `‖c_{1,q+2}‖` (odd).
    pub c_coeff: f64,
    pub rtil_total: f64,
    pub delta_target: f64,
    pub holder_alpha: f64,
    pub pause_residual: f64,
}

pub const LEDGER_COLUMNS: [&str; 16] = [
    "q", "R_T", "R_D", "R_N", "R_O1", "R_O2", "R_O3", "R_O4", "R_O5", "R_O6", "R_M", "c_coeff",
    "Rtil_total", "delta_target", "holder_alpha", "pause_residual",
];

/// Write the ledger CSV with the exact column contract.
pub fn write_ledger(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    atomic_write(path, |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(LEDGER_COLUMNS)
            .map_err(|e| FieldError::Other(format!("ledger write: {e}")))?;
        for r in rows {
            let mut rec: Vec<String> = vec![r.q.to_string()];
            for v in [r.r_t, r.r_d, r.r_n].into_iter().chain(r.r_o).chain([
                r.r_m,
                r.c_coeff,
                r.rtil_total,
                r.delta_target,
                r.holder_alpha,
                r.pause_residual,
            ]) {
                rec.push(format!("{v:.17e}"));
            }
            wtr.write_record(&rec)
                .map_err(|e| FieldError::Other(format!("ledger write: {e}")))?;
        }
        wtr.flush()?;
        Ok(())
    })
}

/// Read a ledger CSV back.
pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| FieldError::Other(format!("ledger read: {e}")))?;
    {
        let headers = rdr
            .headers()
            .map_err(|e| FieldError::Other(format!("ledger read: {e}")))?;
        if headers.iter().collect::<Vec<_>>() != LEDGER_COLUMNS {
            return Err(FieldError::Other("ledger column mismatch".into()));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FieldError::Other(format!("ledger read: {e}")))?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| FieldError::Other("short ledger row".into()))?
                .parse()
                .map_err(|e| FieldError::Other(format!("ledger parse: {e}")))
        };
        out.push(LedgerRow {
            q: rec
                .get(0)
                .ok_or_else(|| FieldError::Other("short ledger row".into()))?
                .parse()
                .map_err(|e| FieldError::Other(format!("ledger parse: {e}")))?,
            r_t: f(1)?,
            r_d: f(2)?,
            r_n: f(3)?,
            r_o: [f(4)?, f(5)?, f(6)?, f(7)?, f(8)?, f(9)?],
            r_m: f(10)?,
            c_coeff: f(11)?,
            rtil_total: f(12)?,
            delta_target: f(13)?,
            holder_alpha: f(14)?,
            pause_residual: f(15)?,
        });
    }
    Ok(out)
}

/// Run manifest written next to the checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    /// Completed stage count.
    pub q: usize,
    pub schedule: crate::iteration::ParameterSchedule,
    pub seed: u64,
    /// Norms `(‖P_q‖, ‖M_q‖, ‖R̃_q‖)` at the checkpoint.
    pub norms: (f64, f64, f64),
    /// Field files belonging to this checkpoint (relative names).
    pub files: Vec<String>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join("state.json");
    atomic_write(&path, |w| {
        serde_json::to_writer_pretty(w, manifest)
            .map_err(|e| FieldError::Other(format!("manifest write: {e}")))
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let f = File::open(dir.join("state.json"))?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|e| FieldError::Other(format!("manifest read: {e}")))
}

/// Checkpoint directory for stage `q` under a run output directory.
pub fn stage_dir(out_dir: &Path, q: usize) -> PathBuf {
    out_dir.join(format!("stage_{q:03}"))
}
