//! Importance-weighted sparsification of the coefficient matrix.
//!
//! Importance fuses the whitened-space magnitude `|c_ij|` with the
//! original-space magnitude `|c_ij| * |L^-1 b_i|` by a geometric
//! interpolation, `imp_ij = |c_ij| * |L^-1 b_i|^lambda`.
//!
//! The default selection keeps the top-s entries of every column, with `s`
//! chosen so that a margin of `ceil(beta * r * d2)` slots stays free, then
//! reactivates the globally most important masked entries until exactly
//! `target_nnz` entries are kept. Ties are broken by `(row, column)` order.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::factorizer::{CoeffMatrix, EigenBasis};
use crate::sparse::SparseColumns;
use crate::whitening::WhitenTransform;
use crate::{Error, Mat, Result};

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_BETA_MARGIN: f64 = 5e-3;

#[derive(Debug, Clone)]
pub struct ImportanceMatrix {
    pub imp: Mat,
    /// `|L^-1 b_i|^lambda` per basis direction.
    pub nu: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SparsityMask {
    pub mask: DMatrix<bool>,
    pub nnz: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsifyMode {
    #[default]
    ColumnTwoStage,
    PerRow,
    Global,
    WhitenedOnly,
}

impl SparsifyMode {
    pub const ALL: [SparsifyMode; 4] = [
        SparsifyMode::ColumnTwoStage,
        SparsifyMode::PerRow,
        SparsifyMode::Global,
        SparsifyMode::WhitenedOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SparsifyMode::ColumnTwoStage => "column_two_stage",
            SparsifyMode::PerRow => "per_row",
            SparsifyMode::Global => "global",
            SparsifyMode::WhitenedOnly => "whitened_only",
        }
    }
}

impl fmt::Display for SparsifyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SparsifyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SparsifyMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sparsify mode `{s}`")))
    }
}

/// `imp = |C| .* (nu 1^T)` with `nu_i = |L^-1 b_i|^lambda`.
pub fn importance(
    c: &CoeffMatrix,
    basis: &EigenBasis,
    t: &WhitenTransform,
    lambda: f64,
) -> Result<ImportanceMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if basis.b().nrows() != t.dim() || c.c.nrows() != basis.rank() {
        return Err(Error::dims(
            "",
            format!(
                "coefficients {:?}, basis {:?}, whitener {}",
                c.c.shape(),
                basis.b().shape(),
                t.dim()
            ),
        ));
    }
    let mapped = t.l_inv() * basis.b();
    let nu: Vec<f64> = (0..basis.rank())
        .map(|i| mapped.column(i).norm().powf(lambda))
        .collect();
    let imp = Mat::from_fn(c.c.nrows(), c.c.ncols(), |i, j| c.c[(i, j)].abs() * nu[i]);
    Ok(ImportanceMatrix { imp, nu, lambda })
}

/// Higher importance first, then smaller `(row, col)`.
fn rank_entries(imp: &Mat, a: (usize, usize), b: (usize, usize)) -> Ordering {
    imp[b].total_cmp(&imp[a]).then(a.cmp(&b))
}

fn check_target(shape: (usize, usize), imp: &Mat, target_nnz: usize) -> Result<()> {
    if imp.shape() != shape {
        return Err(Error::dims(
            "",
            format!("importance {:?} vs coefficients {:?}", imp.shape(), shape),
        ));
    }
    let total = shape.0 * shape.1;
    if target_nnz > total {
        return Err(Error::InvalidArgument(format!(
            "target_nnz {target_nnz} exceeds {total} entries"
        )));
    }
    Ok(())
}

fn margin(beta_margin: f64, total: usize) -> Result<usize> {
    if !(beta_margin >= 0.0 && beta_margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "beta_margin must be nonnegative, got {beta_margin}"
        )));
    }
    Ok((beta_margin * total as f64).ceil() as usize)
}

/// Fills the remaining budget with the globally most important masked entries.
fn reactivate(imp: &Mat, mask: &mut DMatrix<bool>, mut kept: usize, target_nnz: usize) -> usize {
    if kept >= target_nnz {
        return kept;
    }
    let (r, d2) = imp.shape();
    let mut pool: Vec<(usize, usize)> = (0..r)
        .flat_map(|i| (0..d2).map(move |j| (i, j)))
        .filter(|&e| !mask[e])
        .collect();
    pool.sort_by(|&a, &b| rank_entries(imp, a, b));
    for e in pool.into_iter().take(target_nnz - kept) {
        mask[e] = true;
        kept += 1;
    }
    kept
}

fn finish(c: &Mat, mask: DMatrix<bool>, nnz: usize) -> (SparseColumns, SparsityMask) {
    let sparse = SparseColumns::from_dense_masked(c, |i, j| mask[(i, j)]);
    debug_assert_eq!(sparse.nnz(), nnz);
    (sparse, SparsityMask { mask, nnz })
}

/// Column-wise top-s thresholding followed by global reactivation.
pub fn two_stage_sparsify(
    c: &Mat,
    imp: &Mat,
    target_nnz: usize,
    beta_margin: f64,
) -> Result<(SparseColumns, SparsityMask)> {
    check_target(c.shape(), imp, target_nnz)?;
    let (r, d2) = c.shape();
    let reserve = margin(beta_margin, r * d2)?;
    let s = target_nnz
        .saturating_sub(reserve)
        .checked_div(d2)
        .unwrap_or(0);

    let mut mask = DMatrix::from_element(r, d2, false);
    let mut rows: Vec<usize> = (0..r).collect();
    for j in 0..d2 {
        rows.sort_by(|&a, &b| rank_entries(imp, (a, j), (b, j)));
        for &i in &rows[..s] {
            mask[(i, j)] = true;
        }
    }
    let nnz = reactivate(imp, &mut mask, s * d2, target_nnz);
    Ok(finish(c, mask, nnz))
}

/// The same two-stage scheme with rows in place of columns.
fn per_row_sparsify(
    c: &Mat,
    imp: &Mat,
    target_nnz: usize,
    beta_margin: f64,
) -> Result<(SparseColumns, SparsityMask)> {
    check_target(c.shape(), imp, target_nnz)?;
    let (r, d2) = c.shape();
    let reserve = margin(beta_margin, r * d2)?;
    let s = target_nnz
        .saturating_sub(reserve)
        .checked_div(r)
        .unwrap_or(0);

    let mut mask = DMatrix::from_element(r, d2, false);
    let mut cols: Vec<usize> = (0..d2).collect();
    for i in 0..r {
        cols.sort_by(|&a, &b| rank_entries(imp, (i, a), (i, b)));
        for &j in &cols[..s] {
            mask[(i, j)] = true;
        }
    }
    let nnz = reactivate(imp, &mut mask, s * r, target_nnz);
    Ok(finish(c, mask, nnz))
}

/// Top `target_nnz` entries of the whole matrix.
fn global_sparsify(c: &Mat, imp: &Mat, target_nnz: usize) -> Result<(SparseColumns, SparsityMask)> {
    check_target(c.shape(), imp, target_nnz)?;
    let mut mask = DMatrix::from_element(c.nrows(), c.ncols(), false);
    let nnz = reactivate(imp, &mut mask, 0, target_nnz);
    Ok(finish(c, mask, nnz))
}

/// Dispatches to one of the selection strategies. `WhitenedOnly` ignores
/// `imp` and runs the column two-stage scheme on `|C|` (lambda = 0).
pub fn sparsify_mode(
    c: &Mat,
    imp: &Mat,
    target_nnz: usize,
    mode: SparsifyMode,
    beta_margin: f64,
) -> Result<(SparseColumns, SparsityMask)> {
    match mode {
        SparsifyMode::ColumnTwoStage => two_stage_sparsify(c, imp, target_nnz, beta_margin),
        SparsifyMode::PerRow => per_row_sparsify(c, imp, target_nnz, beta_margin),
        SparsifyMode::Global => global_sparsify(c, imp, target_nnz),
        SparsifyMode::WhitenedOnly => two_stage_sparsify(c, &c.abs(), target_nnz, beta_margin),
    }
}
