use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FracOperator;
use crate::error::{Error, Result};
use crate::lattice::{fmt_num, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    /// Row-major little-endian `f64`.
    Binary,
    Csv,
}

/// Metadata stored next to a dumped matrix as `<path>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSidecar {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub order: f64,
    pub normalization: f64,
    pub format: MatrixFormat,
    pub rows: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Writes the full matrix and its sidecar.
pub fn dump(op: &FracOperator, path: &Path, format: MatrixFormat) -> Result<()> {
    let a = op.matrix()?;
    let g = op.grid();
    let meta = OperatorSidecar {
        dim: g.dim(),
        half_width: g.half_width(),
        points_per_axis: g.points_per_axis(),
        order: op.order(),
        normalization: op.normalization(),
        format,
        rows: a.nrows(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Binary => {
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    out.write_all(&a[(i, j)].to_le_bytes())?;
                }
            }
        }
        MatrixFormat::Csv => {
            for i in 0..a.nrows() {
                let line: Vec<String> = (0..a.ncols()).map(|j| fmt_num(a[(i, j)])).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
    }
    out.flush()?;
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a matrix written by [`dump`].
pub fn load(path: &Path) -> Result<FracOperator> {
    let meta: OperatorSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
        .map_err(|e| Error::Format(format!("sidecar: {e}")))?;
    let grid = Grid::new(meta.dim, meta.half_width, meta.points_per_axis)?;
    let n = meta.rows;
    if n != grid.node_count() {
        return Err(Error::Format(format!("{n} rows for a grid of {} nodes", grid.node_count())));
    }
    let mut a = DMatrix::zeros(n, n);
    match meta.format {
        MatrixFormat::Binary => {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            if bytes.len() != n * n * 8 {
                return Err(Error::Format(format!("expected {} bytes, found {}", n * n * 8, bytes.len())));
            }
            for (k, chunk) in bytes.chunks_exact(8).enumerate() {
                a[(k / n, k % n)] = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
            }
        }
        MatrixFormat::Csv => {
            let reader = BufReader::new(File::open(path)?);
            let mut i = 0;
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                if i >= n {
                    return Err(Error::Format("too many rows".into()));
                }
                let mut j = 0;
                for tok in line.split(',') {
                    if j >= n {
                        return Err(Error::Format(format!("row {i} too long")));
                    }
                    a[(i, j)] = tok
                        .trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad number `{tok}` in row {i}")))?;
                    j += 1;
                }
                if j != n {
                    return Err(Error::Format(format!("row {i} has {j} entries")));
                }
                i += 1;
            }
            if i != n {
                return Err(Error::Format(format!("found {i} rows, expected {n}")));
            }
        }
    }
    Ok(FracOperator::from_dense(grid, meta.order, meta.normalization, a))
}
