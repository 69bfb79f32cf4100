//! Per-layer candidate profiling.
//!
//! Every `(rank_frac, ks_frac)` pair of the grid is turned into a rank `k`
//! and per-column nonzero count `s`, pushed through
//! basis -> coefficients -> importance -> sparsify -> refit -> reconstruct,
//! and recorded as a [`CompressionOption`] with its exact kept-parameter cost
//! and reconstruction error in the original weight space.

use serde::{Deserialize, Serialize};

use crate::factorizer::{coefficients, full_basis, EigenBasis};
use crate::par::Execution;
use crate::refit::{factorize, reconstruct, ErrorMetric, SparseFactorization};
use crate::sparsifier::{
    importance, sparsify_mode, SparsifyMode, DEFAULT_BETA_MARGIN, DEFAULT_LAMBDA,
};
use crate::whitening::WhitenTransform;
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateGrid {
    pub rank_fracs: Vec<f64>,
    pub ks_fracs: Vec<f64>,
    pub lambda: f64,
    pub beta_margin: f64,
    pub mu: f64,
    pub error_metric: ErrorMetric,
    pub sparsify_mode: SparsifyMode,
}

impl Default for CandidateGrid {
    fn default() -> Self {
        Self {
            rank_fracs: (1..=10).map(|i| i as f64 / 10.0).collect(),
            ks_fracs: vec![0.25, 0.5, 0.75, 1.0],
            lambda: DEFAULT_LAMBDA,
            beta_margin: DEFAULT_BETA_MARGIN,
            mu: 0.0,
            error_metric: ErrorMetric::FrobeniusRel,
            sparsify_mode: SparsifyMode::ColumnTwoStage,
        }
    }
}

fn check_fracs(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} is empty")));
    }
    if let Some(x) = v.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "{name} entry {x} outside (0, 1]"
        )));
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be strictly increasing"
        )));
    }
    Ok(())
}

impl CandidateGrid {
    pub fn validate(&self) -> Result<()> {
        check_fracs("rank_fracs", &self.rank_fracs)?;
        check_fracs("ks_fracs", &self.ks_fracs)?;
        if !self.ks_fracs.contains(&1.0) {
            return Err(Error::InvalidArgument(
                "ks_fracs must contain 1.0 (the dense-coefficient option)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.beta_margin >= 0.0 && self.beta_margin.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta_margin {} must be nonnegative",
                self.beta_margin
            )));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu {} must be nonnegative",
                self.mu
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rank_fracs.len() * self.ks_fracs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every `(k, s)` pair for a `d1 x d2` layer, rank-major.
    pub fn candidates(&self, d1: usize, d2: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &rf in &self.rank_fracs {
            for &kf in &self.ks_fracs {
                out.push(candidate_dims(rf, kf, d1, d2));
            }
        }
        out
    }
}

/// `k = max(1, round(rank_frac * min(d1, d2)))`, `s = max(1, round(ks_frac * k))`.
pub fn candidate_dims(rank_frac: f64, ks_frac: f64, d1: usize, d2: usize) -> (usize, usize) {
    let k = ((rank_frac * d1.min(d2) as f64).round() as usize).max(1);
    let s = ((ks_frac * k as f64).round() as usize).clamp(1, k);
    (k, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionOption {
    /// Dictionary size; 0 for the identity (keep dense) option.
    pub rank_k: usize,
    /// Per-column nonzeros; 0 for the identity option.
    pub s: usize,
    /// Kept parameters, `d1 * k + nnz(C_sparse)`, or `d1 * d2` for identity.
    pub cost: u64,
    /// `s / k`; 1 for the identity option.
    pub ks_ratio: f64,
    pub error: f64,
}

impl CompressionOption {
    pub fn identity(d1: usize, d2: usize) -> Self {
        Self {
            rank_k: 0,
            s: 0,
            cost: (d1 * d2) as u64,
            ks_ratio: 1.0,
            error: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rank_k == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionSet {
    pub name: String,
    pub d1: usize,
    pub d2: usize,
    /// Grid candidates evaluated before identity replacement and deduplication.
    pub candidates_evaluated: usize,
    /// Sorted by cost, one option per cost, identity included.
    pub options: Vec<CompressionOption>,
}

impl OptionSet {
    pub fn full_cost(&self) -> u64 {
        (self.d1 * self.d2) as u64
    }

    /// Sorts by cost and keeps the lowest-error option per cost.
    fn canonicalize(&mut self) {
        self.options.sort_by(|a, b| {
            a.cost
                .cmp(&b.cost)
                .then(a.error.total_cmp(&b.error))
                .then(a.rank_k.cmp(&b.rank_k))
                .then(a.s.cmp(&b.s))
        });
        self.options.dedup_by_key(|o| o.cost);
    }
}

/// Everything one candidate run produces.
#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub rank_k: usize,
    pub target_nnz: usize,
    pub factorization: SparseFactorization,
    pub w_tilde: Mat,
    /// `|W_L - B C_sparse|_F / |W_L|_F`, before the dictionary refit.
    pub whitened_rel_error_pre_refit: f64,
    /// `|W_L - D C_sparse|_F / |W_L|_F`.
    pub whitened_rel_error: f64,
    /// Configured metric of `W~` against `W` in the original space.
    pub error: f64,
}

/// Shared per-layer state for running candidates.
#[derive(Debug, Clone)]
pub struct LayerContext<'a> {
    pub w: &'a Mat,
    pub t: &'a WhitenTransform,
    pub w_l: Mat,
    pub basis: EigenBasis,
}

impl<'a> LayerContext<'a> {
    pub fn new(w: &'a Mat, t: &'a WhitenTransform) -> Result<Self> {
        let w_l = t.whiten_weight(w)?;
        let basis = full_basis(&w_l)?;
        Ok(Self { w, t, w_l, basis })
    }

    /// Runs the chain for rank `k` and an exact coefficient budget.
    pub fn run(
        &self,
        k: usize,
        target_nnz: usize,
        grid: &CandidateGrid,
    ) -> Result<CandidateOutcome> {
        let basis = self.basis.truncate(k)?;
        let c = coefficients(&basis, &self.w_l)?;
        let imp = importance(&c, &basis, self.t, grid.lambda)?;
        let (c_sparse, _) = sparsify_mode(
            &c.c,
            &imp.imp,
            target_nnz,
            grid.sparsify_mode,
            grid.beta_margin,
        )?;
        let wl_norm = self.w_l.norm();
        let pre = (&self.w_l - c_sparse.left_mul(basis.b())).norm() / wl_norm;
        let factorization = factorize(self.t, &self.w_l, c_sparse, grid.mu)?;
        let post = (&self.w_l - factorization.c_sparse.left_mul(&factorization.d)).norm() / wl_norm;
        let w_tilde = reconstruct(self.t, &factorization)?;
        let error = grid.error_metric.evaluate(self.w, &w_tilde)?;
        Ok(CandidateOutcome {
            rank_k: k,
            target_nnz,
            factorization,
            w_tilde,
            whitened_rel_error_pre_refit: pre,
            whitened_rel_error: post,
            error,
        })
    }
}

/// Profiles one layer over the grid.
pub fn profile_layer(
    name: &str,
    w: &Mat,
    t: &WhitenTransform,
    grid: &CandidateGrid,
    exec: Execution,
) -> Result<OptionSet> {
    grid.validate()?;
    let (d1, d2) = w.shape();
    let full = (d1 * d2) as u64;
    let ctx = LayerContext::new(w, t).map_err(|e| e.in_layer(name))?;
    let candidates = grid.candidates(d1, d2);
    let options = exec.try_map(&candidates, |&(k, s)| {
        let cost = (d1 * k + s * d2) as u64;
        if cost >= full {
            return Ok(CompressionOption::identity(d1, d2));
        }
        let out = ctx
            .run(k, s * d2, grid)
            .map_err(|e| Error::numerical(name, format!("candidate k={k} s={s}: {e}")))?;
        debug_assert_eq!(out.factorization.cost(), cost);
        Ok(CompressionOption {
            rank_k: k,
            s,
            cost,
            ks_ratio: s as f64 / k as f64,
            error: out.error,
        })
    })?;
    let mut set = OptionSet {
        name: name.to_string(),
        d1,
        d2,
        candidates_evaluated: candidates.len(),
        options,
    };
    set.options.push(CompressionOption::identity(d1, d2));
    set.canonicalize();
    Ok(set)
}

/// Profiles every layer; output order follows the input order.
pub fn profile_model(
    names: &[String],
    weights: &[Mat],
    whiteners: &[WhitenTransform],
    grid: &CandidateGrid,
    exec: Execution,
) -> Result<Vec<OptionSet>> {
    if names.len() != weights.len() || weights.len() != whiteners.len() {
        return Err(Error::InvalidArgument(
            "names, weights and whiteners differ in length".into(),
        ));
    }
    let idx: Vec<usize> = (0..names.len()).collect();
    exec.try_map(&idx, |&i| {
        profile_layer(&names[i], &weights[i], &whiteners[i], grid, exec)
    })
}

/// Rebuilds the factorization behind a profiled `(k, s)` option.
pub fn regenerate(
    w: &Mat,
    t: &WhitenTransform,
    k: usize,
    s: usize,
    grid: &CandidateGrid,
) -> Result<CandidateOutcome> {
    let ctx = LayerContext::new(w, t)?;
    ctx.run(k, s * w.ncols(), grid)
}

/// Per layer, the option whose cost is closest to `(1 - target_cr) d1 d2`
/// (ties go to the lower cost).
pub fn reference_selection(option_sets: &[OptionSet], target_cr: f64) -> Result<Vec<usize>> {
    if option_sets.is_empty() {
        return Err(Error::InvalidArgument("no option sets".into()));
    }
    option_sets
        .iter()
        .map(|set| {
            if set.options.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "layer `{}` has no options",
                    set.name
                )));
            }
            let goal = (1.0 - target_cr) * set.full_cost() as f64;
            let mut best = 0;
            for (i, o) in set.options.iter().enumerate() {
                let (da, db) = (
                    (o.cost as f64 - goal).abs(),
                    (set.options[best].cost as f64 - goal).abs(),
                );
                if da < db || (da == db && o.cost < set.options[best].cost) {
                    best = i;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Mean error of the uniform reference selection.
pub fn reference_error(option_sets: &[OptionSet], target_cr: f64) -> Result<f64> {
    let sel = reference_selection(option_sets, target_cr)?;
    let sum: f64 = option_sets
        .iter()
        .zip(&sel)
        .map(|(s, &i)| s.options[i].error)
        .sum();
    Ok(sum / option_sets.len() as f64)
}
