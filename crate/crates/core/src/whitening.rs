//! Calibration whitening.
//!
//! For calibration inputs `X` (N x d1) with Gram `A = X^T X`, the factor `L`
//! is the *upper*-triangular Cholesky factor with `A = L^T L`. Then
//! `Y = X L^-1` has `Y^T Y = I`, and for any weights
//! `|X W - X W'|_F = |L W - L W'|_F`, so reconstruction error can be measured
//! on the whitened weight `W_L = L W`.

use crate::store::{relative_asymmetry, GRAM_SYMMETRY_TOL};
use crate::{Error, Mat, Result};

/// Default relative diagonal jitter, scaled by the mean Gram diagonal.
pub const DEFAULT_JITTER_REL: f64 = 1e-6;

/// Escalation multipliers applied to `jitter_rel` when Cholesky fails.
const JITTER_ESCALATION: [f64; 3] = [1.0, 10.0, 100.0];

#[derive(Debug, Clone)]
pub struct WhitenTransform {
    /// Upper-triangular, `L^T L = A + jitter * I`.
    l: Mat,
    /// Materialized inverse; only used for importance weights.
    l_inv: Mat,
    jitter_used: f64,
}

impl WhitenTransform {
    pub fn identity(d1: usize) -> Self {
        Self {
            l: Mat::identity(d1, d1),
            l_inv: Mat::identity(d1, d1),
            jitter_used: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &Mat {
        &self.l
    }

    pub fn l_inv(&self) -> &Mat {
        &self.l_inv
    }

    /// Absolute jitter added to the Gram diagonal.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Spectral condition number of `L`.
    pub fn condition_number(&self) -> f64 {
        let sv = self.l.singular_values();
        let max = sv.max();
        let min = sv.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    /// `W_L = L W`.
    pub fn whiten_weight(&self, w: &Mat) -> Result<Mat> {
        if w.nrows() != self.dim() {
            return Err(Error::dims(
                "",
                format!("weight has {} rows, whitener is {}", w.nrows(), self.dim()),
            ));
        }
        Ok(&self.l * w)
    }

    /// `L^-1 M` by back substitution on the triangular factor.
    pub fn unwhiten(&self, m: &Mat) -> Result<Mat> {
        if m.nrows() != self.dim() {
            return Err(Error::dims(
                "",
                format!("matrix has {} rows, whitener is {}", m.nrows(), self.dim()),
            ));
        }
        self.l
            .solve_upper_triangular(m)
            .ok_or_else(|| Error::numerical("", "singular whitening factor"))
    }
}

/// Builds the whitener for `gram`, adding `jitter_rel * mean(diag(A))` to the
/// diagonal and escalating the jitter x10, x100 if the factorization fails.
pub fn build_whitener(gram: &Mat, jitter_rel: f64) -> Result<WhitenTransform> {
    let d = gram.nrows();
    if gram.ncols() != d || d == 0 {
        return Err(Error::dims(
            "",
            format!("gram must be square and nonempty, got {:?}", gram.shape()),
        ));
    }
    if !(jitter_rel >= 0.0 && jitter_rel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "jitter_rel must be nonnegative, got {jitter_rel}"
        )));
    }
    if gram.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("", "gram contains non-finite entries"));
    }
    let asym = relative_asymmetry(gram);
    if asym > GRAM_SYMMETRY_TOL {
        return Err(Error::NonSymmetricGram {
            layer: String::new(),
            asym,
        });
    }
    let mean_diag = gram.diagonal().mean();
    // Factor the exactly symmetric part so rounding asymmetry cannot leak in.
    let sym = (gram + gram.transpose()) * 0.5;

    for mult in JITTER_ESCALATION {
        let jitter = jitter_rel * mult * mean_diag;
        let mut a = sym.clone();
        for i in 0..d {
            a[(i, i)] += jitter;
        }
        let Some(chol) = a.cholesky() else { continue };
        let l = chol.l().transpose();
        if !l.diagonal().iter().all(|&x| x > 0.0 && x.is_finite()) {
            continue;
        }
        let Some(l_inv) = l.solve_upper_triangular(&Mat::identity(d, d)) else {
            continue;
        };
        if l_inv.iter().any(|x| !x.is_finite()) {
            continue;
        }
        return Ok(WhitenTransform {
            l,
            l_inv,
            jitter_used: jitter,
        });
    }
    Err(Error::numerical(
        "",
        format!(
            "cholesky of gram failed with jitter up to {:e} x mean diagonal",
            jitter_rel * 100.0
        ),
    ))
}
