//! Closed-form dictionary refit and reconstruction error metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sparse::SparseColumns;
use crate::whitening::WhitenTransform;
use crate::{Error, Mat, Result};

/// Relative pivot floor below which the normal matrix is treated as singular.
const PIVOT_REL_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct SparseFactorization {
    /// d1 x k dictionary in whitened space.
    pub d: Mat,
    /// k x d2 coefficients.
    pub c_sparse: SparseColumns,
    /// `L^-1 D`, the stored left factor.
    pub u: Mat,
    /// Ridge value actually used by the solve.
    pub mu: f64,
}

impl SparseFactorization {
    pub fn rank(&self) -> usize {
        self.d.ncols()
    }

    /// Kept parameters: dense `U` plus stored coefficients.
    pub fn cost(&self) -> u64 {
        (self.u.nrows() * self.u.ncols() + self.c_sparse.nnz()) as u64
    }
}

/// Result of a ridge solve; `mu_used` differs from the request when the
/// normal matrix was singular.
#[derive(Debug, Clone)]
pub struct Refit {
    pub d: Mat,
    pub mu_used: f64,
}

fn try_spd_solve(g: &Mat, rhs_t: &Mat) -> Option<Mat> {
    let chol = g.clone().cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let max = diag.max();
    if !(diag.min() > 0.0 && diag.min() * diag.min() >= PIVOT_REL_FLOOR * max * max) {
        return None;
    }
    Some(chol.solve(rhs_t))
}

/// `D = W_L C^T (C C^T + mu I)^-1`.
///
/// Rows of `C` without any stored entry decouple from the problem and get a
/// zero dictionary column. If the remaining normal matrix is singular at the
/// requested `mu`, it is retried once with `mu = 1e-10 * trace / k`.
pub fn ridge_refit(w_l: &Mat, c_sparse: &SparseColumns, mu: f64) -> Result<Refit> {
    let (d1, d2) = w_l.shape();
    let k = c_sparse.rows();
    if c_sparse.cols() != d2 {
        return Err(Error::dims(
            "",
            format!(
                "coefficients have {} columns, weight has {d2}",
                c_sparse.cols()
            ),
        ));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "mu must be nonnegative, got {mu}"
        )));
    }
    let active: Vec<usize> = c_sparse
        .active_rows()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(i, _)| i)
        .collect();
    let mut d = Mat::zeros(d1, k);
    if active.is_empty() {
        return Ok(Refit { d, mu_used: mu });
    }
    let mut slot = vec![usize::MAX; k];
    for (n, &i) in active.iter().enumerate() {
        slot[i] = n;
    }
    let ka = active.len();
    // Compact active rows: G = C_a C_a^T (ka x ka), R^T = C_a W_L^T (ka x d1).
    let mut g = Mat::zeros(ka, ka);
    let mut rhs_t = Mat::zeros(ka, d1);
    for j in 0..d2 {
        let col: Vec<(usize, f64)> = c_sparse.column(j).map(|(i, v)| (slot[i], v)).collect();
        for &(a, va) in &col {
            for &(b, vb) in &col {
                g[(a, b)] += va * vb;
            }
            for r in 0..d1 {
                rhs_t[(a, r)] += va * w_l[(r, j)];
            }
        }
    }
    let trace = g.trace();
    let solve = |mu: f64| {
        let mut gm = g.clone();
        for i in 0..ka {
            gm[(i, i)] += mu;
        }
        try_spd_solve(&gm, &rhs_t)
    };
    let (dt, mu_used) = match solve(mu) {
        Some(dt) => (dt, mu),
        None => {
            let escalated = mu.max(1e-10 * trace / ka as f64);
            let dt = solve(escalated).ok_or_else(|| {
                Error::numerical(
                    "",
                    format!("ridge normal matrix singular even with mu = {escalated:e}"),
                )
            })?;
            (dt, escalated)
        }
    };
    for (n, &i) in active.iter().enumerate() {
        d.set_column(i, &dt.row(n).transpose());
    }
    Ok(Refit { d, mu_used })
}

/// Refits, maps the dictionary back to the original space and packages the
/// factor pair.
pub fn factorize(
    t: &WhitenTransform,
    w_l: &Mat,
    c_sparse: SparseColumns,
    mu: f64,
) -> Result<SparseFactorization> {
    let Refit { d, mu_used } = ridge_refit(w_l, &c_sparse, mu)?;
    let u = t.unwhiten(&d)?;
    Ok(SparseFactorization {
        d,
        c_sparse,
        u,
        mu: mu_used,
    })
}

/// `W~ = U C_sparse`.
pub fn reconstruct(t: &WhitenTransform, f: &SparseFactorization) -> Result<Mat> {
    if f.u.nrows() != t.dim() || f.u.ncols() != f.c_sparse.rows() {
        return Err(Error::dims(
            "",
            format!(
                "U is {:?}, C is {}x{}, whitener {}",
                f.u.shape(),
                f.c_sparse.rows(),
                f.c_sparse.cols(),
                t.dim()
            ),
        ));
    }
    Ok(f.c_sparse.left_mul(&f.u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    #[default]
    FrobeniusRel,
    L1Abs,
    MeanCosCols,
    SpectralAbs,
}

impl ErrorMetric {
    pub const ALL: [ErrorMetric; 4] = [
        ErrorMetric::FrobeniusRel,
        ErrorMetric::L1Abs,
        ErrorMetric::MeanCosCols,
        ErrorMetric::SpectralAbs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMetric::FrobeniusRel => "frobenius_rel",
            ErrorMetric::L1Abs => "l1_abs",
            ErrorMetric::MeanCosCols => "mean_cos_cols",
            ErrorMetric::SpectralAbs => "spectral_abs",
        }
    }

    /// Evaluates only this metric.
    pub fn evaluate(self, w: &Mat, w_tilde: &Mat) -> Result<f64> {
        check_pair(w, w_tilde)?;
        Ok(match self {
            ErrorMetric::FrobeniusRel => frobenius_rel(w, w_tilde),
            ErrorMetric::L1Abs => (w - w_tilde).abs().sum(),
            ErrorMetric::MeanCosCols => mean_cos_cols(w, w_tilde),
            ErrorMetric::SpectralAbs => spectral(&(w - w_tilde)),
        })
    }
}

impl fmt::Display for ErrorMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ErrorMetric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown error metric `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub frobenius_rel: f64,
    pub l1_abs: f64,
    /// Mean over columns of `1 - cos(W_j, W~_j)`; zero columns count as 1.
    pub mean_cos_cols: f64,
    pub spectral_abs: f64,
}

impl ErrorReport {
    pub fn get(&self, metric: ErrorMetric) -> f64 {
        match metric {
            ErrorMetric::FrobeniusRel => self.frobenius_rel,
            ErrorMetric::L1Abs => self.l1_abs,
            ErrorMetric::MeanCosCols => self.mean_cos_cols,
            ErrorMetric::SpectralAbs => self.spectral_abs,
        }
    }
}

fn check_pair(w: &Mat, w_tilde: &Mat) -> Result<()> {
    if w.shape() != w_tilde.shape() {
        return Err(Error::dims(
            "",
            format!("{:?} vs {:?}", w.shape(), w_tilde.shape()),
        ));
    }
    if w.norm() == 0.0 {
        return Err(Error::InvalidArgument(
            "reference weight has zero norm".into(),
        ));
    }
    Ok(())
}

fn frobenius_rel(w: &Mat, w_tilde: &Mat) -> f64 {
    (w - w_tilde).norm() / w.norm()
}

fn mean_cos_cols(w: &Mat, w_tilde: &Mat) -> f64 {
    let n = w.ncols();
    let total: f64 = (0..n)
        .map(|j| {
            let (a, b) = (w.column(j), w_tilde.column(j));
            let (na, nb) = (a.norm(), b.norm());
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
            }
        })
        .sum();
    total / n as f64
}

fn spectral(m: &Mat) -> f64 {
    if m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    m.singular_values().max()
}

/// All four metrics of `W~` against `W`.
pub fn error_report(w: &Mat, w_tilde: &Mat) -> Result<ErrorReport> {
    check_pair(w, w_tilde)?;
    Ok(ErrorReport {
        frobenius_rel: frobenius_rel(w, w_tilde),
        l1_abs: (w - w_tilde).abs().sum(),
        mean_cos_cols: mean_cos_cols(w, w_tilde),
        spectral_abs: spectral(&(w - w_tilde)),
    })
}
