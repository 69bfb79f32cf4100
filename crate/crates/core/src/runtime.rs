//! Factorized forward pass and cost accounting.

use crate::par::Execution;
use crate::sparse::SparseColumns;
use crate::{Error, Mat, Result};

/// `W~ = U V` with dense `U` (d1 x k) and column-sparse `V` (k x d2).
#[derive(Debug, Clone)]
pub struct CompressedLayer {
    u: Mat,
    v: SparseColumns,
    k_active: usize,
}

impl CompressedLayer {
    pub fn new(u: Mat, v: SparseColumns) -> Result<Self> {
        if u.ncols() != v.rows() {
            return Err(Error::dims(
                "",
                format!("U has {} columns, V has {} rows", u.ncols(), v.rows()),
            ));
        }
        let k_active = v.k_active();
        Ok(Self { u, v, k_active })
    }

    pub fn u(&self) -> &Mat {
        &self.u
    }

    pub fn v(&self) -> &SparseColumns {
        &self.v
    }

    /// Rows of `V` holding at least one nonzero.
    pub fn k_active(&self) -> usize {
        self.k_active
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.cols())
    }

    /// `d1 * k + nnz(V)`.
    pub fn param_count(&self) -> u64 {
        (self.u.nrows() * self.u.ncols() + self.v.nnz()) as u64
    }

    /// `H = X U`, then `Y_j = sum_{i in supp(V_j)} H_i v_ij`.
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.ncols() != self.u.nrows() {
            return Err(Error::dims(
                "",
                format!(
                    "input has {} columns, layer expects {}",
                    x.ncols(),
                    self.u.nrows()
                ),
            ));
        }
        let h = x * &self.u;
        Ok(self.v.left_mul(&h))
    }

    /// Multiply-adds of [`forward`](Self::forward) under the reuse model:
    /// `N d1 k_active + N nnz(V)`.
    pub fn flop_count(&self, n: usize) -> u64 {
        let (d1, _) = self.dims();
        (n * d1 * self.k_active + n * self.v.nnz()) as u64
    }

    /// Materializes `U V`.
    pub fn to_dense(&self) -> Mat {
        self.v.left_mul(&self.u)
    }
}

/// One layer of a (possibly partially) compressed model.
#[derive(Debug, Clone)]
pub enum ModelLayer {
    Dense(Mat),
    Factored(CompressedLayer),
}

impl ModelLayer {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ModelLayer::Dense(w) => w.shape(),
            ModelLayer::Factored(c) => c.dims(),
        }
    }

    pub fn param_count(&self) -> u64 {
        match self {
            ModelLayer::Dense(w) => (w.nrows() * w.ncols()) as u64,
            ModelLayer::Factored(c) => c.param_count(),
        }
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        match self {
            ModelLayer::Dense(w) => {
                if x.ncols() != w.nrows() {
                    return Err(Error::dims(
                        "",
                        format!(
                            "input has {} columns, layer expects {}",
                            x.ncols(),
                            w.nrows()
                        ),
                    ));
                }
                Ok(x * w)
            }
            ModelLayer::Factored(c) => c.forward(x),
        }
    }

    pub fn flop_count(&self, n: usize) -> u64 {
        match self {
            ModelLayer::Dense(w) => (n * w.nrows() * w.ncols()) as u64,
            ModelLayer::Factored(c) => c.flop_count(n),
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            ModelLayer::Dense(w) => w.clone(),
            ModelLayer::Factored(c) => c.to_dense(),
        }
    }
}

/// Evaluates every layer on its own input batch.
pub fn forward_all(layers: &[ModelLayer], inputs: &[Mat], exec: Execution) -> Result<Vec<Mat>> {
    if layers.len() != inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} layers but {} inputs",
            layers.len(),
            inputs.len()
        )));
    }
    let pairs: Vec<(&ModelLayer, &Mat)> = layers.iter().zip(inputs).collect();
    exec.try_map(&pairs, |(l, x)| l.forward(x))
}
