//! Loading, validation, covariate residualization, and standardization of the
//! two data matrices.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};

use crate::error::{Error, Result};

/// Magic bytes identifying the binary matrix format.
pub const BINARY_MAGIC: &[u8; 4] = b"BSPM";

/// A pair of sample-aligned data matrices plus optional covariates.
///
/// Matrices are stored feature-major (`p x n` and `q x n`) so that feature
/// rows are contiguous; the on-disk layout stays samples-by-features.
#[derive(Debug, Clone)]
pub struct TwoViewDataset {
    /// Type-1 data, one row per feature (`p x n`).
    pub x: Array2<f64>,
    /// Type-2 data, one row per feature (`q x n`).
    pub y: Array2<f64>,
    pub s_ids: Vec<String>,
    pub t_ids: Vec<String>,
    covariates: Option<CovariateBlock>,
    n_eff: usize,
    standardized: bool,
}

/// Covariate columns to be projected out of both views.
#[derive(Debug, Clone)]
pub struct CovariateBlock {
    /// One row per covariate (`m x n`).
    v: Array2<f64>,
}

impl CovariateBlock {
    /// Validates linear independence of the covariate columns.
    pub fn new(v: Array2<f64>) -> Result<Self> {
        let m = v.nrows();
        let n = v.ncols();
        if m == 0 {
            return Err(Error::InvalidParam {
                msg: "covariate block must contain at least one covariate".into(),
            });
        }
        if m > n.saturating_sub(4) {
            return Err(Error::TooManyCovariates {
                m,
                n_eff: n as isize - m as isize,
            });
        }
        // Gram-Schmidt rank check: every covariate must keep a nontrivial
        // residual against the span of the previous ones.
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
        for (ci, row) in v.axis_iter(Axis(0)).enumerate() {
            let mut u: Vec<f64> = row.to_vec();
            let orig = norm(&u);
            if orig <= 1e-300 {
                return Err(Error::RankDeficientCovariates { col: ci });
            }
            for b in &basis {
                let d = dot(&u, b);
                for (ui, bi) in u.iter_mut().zip(b) {
                    *ui -= d * bi;
                }
            }
            let res = norm(&u);
            if res <= 1e-10 * orig {
                return Err(Error::RankDeficientCovariates { col: ci });
            }
            let inv = 1.0 / res;
            u.iter_mut().for_each(|z| *z *= inv);
            basis.push(u);
        }
        Ok(Self { v })
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    /// Orthonormal basis of the covariate span, one basis vector per row.
    fn orthonormal_basis(&self) -> Array2<f64> {
        let m = self.m();
        let n = self.n();
        let mut q = Array2::<f64>::zeros((m, n));
        for i in 0..m {
            let mut u: Vec<f64> = self.v.row(i).to_vec();
            for j in 0..i {
                let b = q.row(j);
                let d = u.iter().zip(b.iter()).map(|(a, b)| a * b).sum::<f64>();
                for (ui, bi) in u.iter_mut().zip(b.iter()) {
                    *ui -= d * bi;
                }
            }
            let inv = 1.0 / norm(&u);
            for (dst, src) in q.row_mut(i).iter_mut().zip(&u) {
                *dst = src * inv;
            }
        }
        q
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl TwoViewDataset {
    /// Builds a raw (not yet standardized) dataset from feature-major
    /// matrices, validating shapes and identifier uniqueness.
    pub fn from_parts(
        x: Array2<f64>,
        y: Array2<f64>,
        s_ids: Vec<String>,
        t_ids: Vec<String>,
        covariates: Option<CovariateBlock>,
    ) -> Result<Self> {
        let n = x.ncols();
        if y.ncols() != n {
            return Err(Error::DimensionMismatch {
                msg: format!(
                    "type-1 data has {} samples but type-2 data has {}",
                    n,
                    y.ncols()
                ),
            });
        }
        if n == 0 {
            return Err(Error::TooFewSamples { n });
        }
        if s_ids.len() != x.nrows() || t_ids.len() != y.nrows() {
            return Err(Error::DimensionMismatch {
                msg: format!(
                    "identifier counts ({}, {}) do not match feature counts ({}, {})",
                    s_ids.len(),
                    t_ids.len(),
                    x.nrows(),
                    y.nrows()
                ),
            });
        }
        check_unique(&s_ids, "type-1")?;
        check_unique(&t_ids, "type-2")?;
        if let Some(cov) = &covariates {
            if cov.n() != n {
                return Err(Error::DimensionMismatch {
                    msg: format!(
                        "covariates have {} samples but data has {}",
                        cov.n(),
                        n
                    ),
                });
            }
        }
        Ok(Self {
            x,
            y,
            s_ids,
            t_ids,
            covariates,
            n_eff: n,
            standardized: false,
        })
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.y.nrows()
    }

    /// Effective sample size: `n` minus the number of residualized covariates.
    pub fn n_eff(&self) -> usize {
        self.n_eff
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn covariates(&self) -> Option<&CovariateBlock> {
        self.covariates.as_ref()
    }

    /// Projects every column of both views onto the orthogonal complement of
    /// the covariate span and reduces the effective sample size.
    pub fn residualize(mut self, cov: &CovariateBlock) -> Result<Self> {
        if self.standardized {
            return Err(Error::AlreadyStandardized);
        }
        if cov.n() != self.n() {
            return Err(Error::DimensionMismatch {
                msg: format!(
                    "covariates have {} samples but data has {}",
                    cov.n(),
                    self.n()
                ),
            });
        }
        let m = cov.m();
        if self.n() < m + 4 {
            return Err(Error::TooManyCovariates {
                m,
                n_eff: self.n() as isize - m as isize,
            });
        }
        let basis = cov.orthonormal_basis();
        for mut row in self.x.axis_iter_mut(Axis(0)) {
            project_out(&mut row, &basis);
        }
        for mut row in self.y.axis_iter_mut(Axis(0)) {
            project_out(&mut row, &basis);
        }
        self.n_eff = self.n() - m;
        self.covariates = None;
        Ok(self)
    }

    /// Centers each feature and scales it to unit Euclidean norm, so that the
    /// sample correlation of two features is the plain inner product of their
    /// rows.
    pub fn standardize(mut self) -> Result<Self> {
        if self.standardized {
            return Ok(self);
        }
        if self.n_eff < 4 {
            return Err(Error::TooFewSamples { n: self.n_eff });
        }
        standardize_matrix(&mut self.x, &self.s_ids)?;
        standardize_matrix(&mut self.y, &self.t_ids)?;
        self.standardized = true;
        Ok(self)
    }

    /// Residualizes against attached covariates (if any), then standardizes.
    pub fn prepare(mut self) -> Result<Self> {
        if let Some(cov) = self.covariates.take() {
            self = self.residualize(&cov)?;
        }
        self.standardize()
    }

    /// View of one feature row.
    pub fn feature(&self, view: crate::corr::View, index: usize) -> ArrayView1<'_, f64> {
        match view {
            crate::corr::View::TypeOne => self.x.row(index),
            crate::corr::View::TypeTwo => self.y.row(index),
        }
    }
}

fn check_unique(ids: &[String], view: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateFeatureId {
                id: id.clone(),
                view,
            });
        }
    }
    Ok(())
}

fn project_out(row: &mut ArrayViewMut1<'_, f64>, basis: &Array2<f64>) {
    for b in basis.axis_iter(Axis(0)) {
        let d = row.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>();
        for (xi, bi) in row.iter_mut().zip(b.iter()) {
            *xi -= d * bi;
        }
    }
}

fn standardize_matrix(mat: &mut Array2<f64>, ids: &[String]) -> Result<()> {
    let n = mat.ncols() as f64;
    for (i, mut row) in mat.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            return Err(Error::ConstantColumn {
                id: ids[i].clone(),
            });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Loads a dataset from matrix files, attaching covariates when given.
///
/// Each matrix file is either CSV (header row of feature identifiers, one
/// sample per subsequent row) or the `BSPM` binary format; the format is
/// sniffed from the leading bytes.
pub fn load_dataset<P: AsRef<Path>>(
    x_path: P,
    y_path: P,
    cov_path: Option<P>,
) -> Result<TwoViewDataset> {
    let (x, s_ids) = load_matrix(x_path.as_ref())?;
    let (y, t_ids) = load_matrix(y_path.as_ref())?;
    let covariates = match cov_path {
        Some(p) => {
            let (v, _names) = load_matrix(p.as_ref())?;
            Some(CovariateBlock::new(v)?)
        }
        None => None,
    };
    TwoViewDataset::from_parts(x, y, s_ids, t_ids, covariates)
}

/// Reads a matrix file, returning a feature-major array and the identifiers.
pub fn load_matrix(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut magic = [0u8; 4];
    let got = read_up_to(&mut file, &mut magic).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    if got == 4 && &magic == BINARY_MAGIC {
        load_matrix_binary(path, file)
    } else {
        drop(file);
        load_matrix_csv(path)
    }
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let k = r.read(&mut buf[filled..])?;
        if k == 0 {
            break;
        }
        filled += k;
    }
    Ok(filled)
}

fn load_matrix_csv(path: &Path) -> Result<(Array2<f64>, Vec<String>)> {
    let path_str = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path_str.clone(),
        source: e,
    })?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::Io {
            path: path_str.clone(),
            source: e,
        })?,
        None => {
            return Err(Error::Malformed {
                path: path_str,
                msg: "empty file".into(),
            })
        }
    };
    let ids: Vec<String> = header
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let cols = ids.len();

    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::Io {
            path: path_str.clone(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for (ci, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                row: lineno + 1,
                col: ci + 1,
                msg: format!("non-numeric cell {:?}", cell.trim()),
            })?;
            values.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::Malformed {
                path: path_str,
                msg: format!(
                    "row {} has {} cells, expected {}",
                    lineno + 1,
                    count,
                    cols
                ),
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Malformed {
            path: path_str,
            msg: "no data rows".into(),
        });
    }
    // Sample-major on disk; transpose to feature-major in memory.
    let samples = Array2::from_shape_vec((rows, cols), values).expect("shape checked");
    Ok((samples.t().to_owned(), ids))
}

fn load_matrix_binary(
    path: &Path,
    mut file: std::fs::File,
) -> Result<(Array2<f64>, Vec<String>)> {
    let path_str = path.display().to_string();
    let io_err = |e: std::io::Error| Error::Io {
        path: path_str.clone(),
        source: e,
    };
    let mut u64buf = [0u8; 8];
    file.read_exact(&mut u64buf).map_err(io_err)?;
    let rows = u64::from_le_bytes(u64buf) as usize;
    file.read_exact(&mut u64buf).map_err(io_err)?;
    let cols = u64::from_le_bytes(u64buf) as usize;
    let total = rows.checked_mul(cols).ok_or_else(|| Error::Malformed {
        path: path_str.clone(),
        msg: "matrix dimensions overflow".into(),
    })?;
    let mut raw = vec![0u8; total * 8];
    file.read_exact(&mut raw).map_err(io_err)?;
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut tail = String::new();
    file.read_to_string(&mut tail).map_err(io_err)?;
    let ids: Vec<String> = tail
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if ids.len() != cols {
        return Err(Error::Malformed {
            path: path_str,
            msg: format!("expected {} identifiers, found {}", cols, ids.len()),
        });
    }
    let samples = Array2::from_shape_vec((rows, cols), values).expect("length checked");
    Ok((samples.t().to_owned(), ids))
}

/// Writes a feature-major matrix as CSV (samples by features on disk).
pub fn write_matrix_csv(path: &Path, mat: &Array2<f64>, ids: &[String]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    writeln!(w, "{}", ids.join(",")).map_err(io_err)?;
    for j in 0..mat.ncols() {
        let mut line = String::with_capacity(mat.nrows() * 20);
        for i in 0..mat.nrows() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:.17e}", mat[[i, j]]));
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    Ok(())
}

/// Writes a feature-major matrix in the `BSPM` binary format.
pub fn write_matrix_binary(path: &Path, mat: &Array2<f64>, ids: &[String]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    w.write_all(BINARY_MAGIC).map_err(io_err)?;
    let rows = mat.ncols() as u64; // samples
    let cols = mat.nrows() as u64; // features
    w.write_all(&rows.to_le_bytes()).map_err(io_err)?;
    w.write_all(&cols.to_le_bytes()).map_err(io_err)?;
    for j in 0..mat.ncols() {
        for i in 0..mat.nrows() {
            w.write_all(&mat[[i, j]].to_le_bytes()).map_err(io_err)?;
        }
    }
    for id in ids {
        w.write_all(id.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    Ok(())
}
