//! Data-adaptive basis of the whitened weight.
//!
//! The basis is the top-r eigenvectors of the d1 x d1 matrix `W_L W_L^T`; the
//! coefficients are the orthogonal projection `C = B^T W_L`. With no sparsity
//! this is exactly the rank-r truncated SVD of `W_L`.
//!
//! [`truncated_svd_oracle`] is an independent one-sided Jacobi SVD used to
//! check the eigen route; it shares no code with it.

use nalgebra::SymmetricEigen;

use crate::{Error, Mat, Result};

#[derive(Debug, Clone)]
pub struct EigenBasis {
    /// d1 x r, orthonormal columns.
    b: Mat,
    /// Nonincreasing, nonnegative.
    eigvals: Vec<f64>,
}

impl EigenBasis {
    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    /// Leading `r` directions. Canonical signs do not depend on `r`, so this
    /// equals a fresh [`top_r_basis`] call at rank `r`.
    pub fn truncate(&self, r: usize) -> Result<EigenBasis> {
        if r == 0 || r > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "rank {r} outside 1..={}",
                self.rank()
            )));
        }
        Ok(EigenBasis {
            b: self.b.columns(0, r).into_owned(),
            eigvals: self.eigvals[..r].to_vec(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct CoeffMatrix {
    /// r x d2.
    pub c: Mat,
}

/// Full eigendecomposition of `W_L W_L^T`, sorted by decreasing eigenvalue.
pub fn full_basis(w_l: &Mat) -> Result<EigenBasis> {
    let d1 = w_l.nrows();
    if d1 == 0 {
        return Err(Error::dims("", "empty whitened weight"));
    }
    let g = w_l * w_l.transpose();
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(g, f64::EPSILON, 1000 * d1.max(8))
        .ok_or_else(|| Error::numerical("", "symmetric eigensolver did not converge"))?;

    let mut order: Vec<usize> = (0..d1).collect();
    // Decreasing eigenvalue; index order breaks exact ties.
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut b = Mat::zeros(d1, d1);
    let mut eigvals = Vec::with_capacity(d1);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // Largest-magnitude entry positive; first such index on ties.
        let mut pivot = 0;
        for i in 1..d1 {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        b.set_column(dst, &col);
        eigvals.push(eig.eigenvalues[src].max(0.0));
    }
    Ok(EigenBasis { b, eigvals })
}

/// Top-`r` eigenvectors of `W_L W_L^T`.
pub fn top_r_basis(w_l: &Mat, r: usize) -> Result<EigenBasis> {
    if r == 0 || r > w_l.nrows() {
        return Err(Error::InvalidArgument(format!(
            "rank {r} outside 1..={}",
            w_l.nrows()
        )));
    }
    full_basis(w_l)?.truncate(r)
}

/// `C = B^T W_L`.
pub fn coefficients(basis: &EigenBasis, w_l: &Mat) -> Result<CoeffMatrix> {
    if basis.b.nrows() != w_l.nrows() {
        return Err(Error::dims(
            "",
            format!(
                "basis has {} rows, whitened weight has {}",
                basis.b.nrows(),
                w_l.nrows()
            ),
        ));
    }
    Ok(CoeffMatrix {
        c: basis.b.tr_mul(w_l),
    })
}

/// Thin SVD `W = U diag(sigma) V^T` with singular values in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

/// Rank-k truncation of an [`Svd`] together with its Frobenius residual.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u_k: Mat,
    pub sigma_k: Vec<f64>,
    pub v_k: Mat,
    /// `sqrt(sum_{i > k} sigma_i^2)`.
    pub residual: f64,
}

impl TruncatedSvd {
    pub fn approximation(&self) -> Mat {
        let mut us = self.u_k.clone();
        for (j, s) in self.sigma_k.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v_k.transpose()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn jacobi_svd(w: &Mat) -> Result<Svd> {
    let (m, n) = w.shape();
    if m < n {
        let t = jacobi_svd(&w.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let mut a = w.clone();
    let mut v = Mat::identity(n, n);
    const MAX_SWEEPS: usize = 100;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (ap, aq) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = c * ap - s * aq;
                    a[(i, q)] = s * ap + c * aq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::numerical("", "jacobi svd did not converge"));
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let mut u = Mat::zeros(m, n);
    let mut vs = Mat::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        if s > 0.0 {
            u.set_column(dst, &(a.column(src) / s));
        }
        vs.set_column(dst, &v.column(src));
        sigma.push(s);
    }
    Ok(Svd { u, sigma, v: vs })
}

/// Best rank-k approximation of `w` and its exact residual.
pub fn truncated_svd_oracle(w: &Mat, k: usize) -> Result<TruncatedSvd> {
    let p = w.nrows().min(w.ncols());
    if k == 0 || k > p {
        return Err(Error::InvalidArgument(format!("rank {k} outside 1..={p}")));
    }
    let svd = jacobi_svd(w)?;
    let residual = svd.sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
    Ok(TruncatedSvd {
        u_k: svd.u.columns(0, k).into_owned(),
        sigma_k: svd.sigma[..k].to_vec(),
        v_k: svd.v.columns(0, k).into_owned(),
        residual,
    })
}
