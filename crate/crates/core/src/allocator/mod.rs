//! Global budget allocation as a multi-choice knapsack with per-layer caps.
//!
//! Pick one option per layer minimizing the summed error subject to
//! `sum kept <= budget_kept` and `error <= alpha * e_ref` for every layer.
//! The main solver is a bottom-up DP over discretized kept counts
//! (`floor(cost * param_precision / P_total)` per option) with exact unscaled
//! costs carried alongside, so the budget test is never subject to flooring.
//! [`oracle`] holds two independent solvers used for verification.

pub mod oracle;

use serde::{Deserialize, Serialize};

use crate::profiler::OptionSet;
use crate::{Error, Result};

pub use oracle::{brute_force_oracle, dijkstra_oracle, min_feasible_alpha_scan};

/// Slack on the per-layer cap comparison.
pub const CAP_TOL: f64 = 1e-12;
pub const DEFAULT_PARAM_PRECISION: u64 = 100_000;

/// Per-layer error cap multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    #[default]
    #[serde(with = "auto_keyword")]
    Auto,
    Fixed(f64),
}

mod auto_keyword {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!(
                "expected \"auto\" or a number, got {s:?}"
            )))
        }
    }
}

impl std::str::FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Alpha::Auto);
        }
        match s.parse::<f64>() {
            Ok(a) if a >= 0.0 && a.is_finite() => Ok(Alpha::Fixed(a)),
            _ => Err(Error::InvalidArgument(format!(
                "alpha must be `auto` or a nonnegative number, got `{s}`"
            ))),
        }
    }
}

/// Options of one layer as the solver sees them.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerChoices {
    /// `d1 * d2`, the layer's share of `P_total`.
    pub full_cost: u64,
    /// `(kept cost, error)` per option.
    pub options: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MckpInstance {
    pub layers: Vec<LayerChoices>,
    pub budget_kept: u64,
    pub alpha: Alpha,
    pub e_ref: f64,
    pub param_precision: u64,
}

/// Which DP states get discarded after each layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dominance {
    /// Drop a state when a cheaper one has strictly smaller error.
    #[default]
    Safe,
    /// Drop a state when a costlier state has no larger error.
    KeepCostlier,
    /// Only collapse states sharing a discretized key.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    /// Option index per layer.
    pub choices: Vec<usize>,
    /// Exact kept parameters of the chosen options.
    pub total_kept: u64,
    pub total_error: f64,
    pub alpha_used: f64,
}

pub(crate) fn passes_cap(error: f64, alpha: f64, e_ref: f64) -> bool {
    error <= alpha * e_ref + CAP_TOL
}

impl MckpInstance {
    pub fn from_option_sets(
        sets: &[OptionSet],
        budget_kept: u64,
        alpha: Alpha,
        e_ref: f64,
        param_precision: u64,
    ) -> Self {
        let layers = sets
            .iter()
            .map(|s| LayerChoices {
                full_cost: s.full_cost(),
                options: s.options.iter().map(|o| (o.cost, o.error)).collect(),
            })
            .collect();
        Self {
            layers,
            budget_kept,
            alpha,
            e_ref,
            param_precision,
        }
    }

    pub fn p_total(&self) -> u64 {
        self.layers.iter().map(|l| l.full_cost).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("instance has no layers".into()));
        }
        if let Some(i) = self.layers.iter().position(|l| l.options.is_empty()) {
            return Err(Error::InvalidArgument(format!("layer {i} has no options")));
        }
        if self
            .layers
            .iter()
            .flat_map(|l| &l.options)
            .any(|&(_, e)| !(e >= 0.0 && e.is_finite()))
        {
            return Err(Error::InvalidArgument(
                "option errors must be finite and nonnegative".into(),
            ));
        }
        if self.budget_kept > self.p_total() {
            return Err(Error::InvalidArgument(format!(
                "budget {} exceeds P_total {}",
                self.budget_kept,
                self.p_total()
            )));
        }
        if self.param_precision < self.layers.len() as u64 {
            return Err(Error::InvalidArgument(format!(
                "param_precision {} is below the layer count {}",
                self.param_precision,
                self.layers.len()
            )));
        }
        if !(self.e_ref >= 0.0 && self.e_ref.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "e_ref {} must be finite and nonnegative",
                self.e_ref
            )));
        }
        if let Alpha::Fixed(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "alpha {a} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }

    /// `floor(cost * param_precision / P_total)`.
    pub fn scaled(&self, cost: u64) -> u64 {
        (cost as u128 * self.param_precision as u128 / self.p_total().max(1) as u128) as u64
    }

    /// Largest discretized key the DP explores: `floor(scale * budget) + L`.
    pub fn max_key(&self) -> u64 {
        self.scaled(self.budget_kept) + self.layers.len() as u64
    }

    /// Per layer, the cheapest option passing the cap at `alpha`, if any.
    fn cheapest_under_cap(&self, alpha: f64) -> std::result::Result<Vec<u64>, usize> {
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                layer
                    .options
                    .iter()
                    .filter(|&&(_, e)| passes_cap(e, alpha, self.e_ref))
                    .map(|&(c, _)| c)
                    .min()
                    .ok_or(l)
            })
            .collect()
    }

    /// Whether some selection meets both the budget and every cap at `alpha`.
    pub fn feasible_at(&self, alpha: f64) -> bool {
        self.cheapest_under_cap(alpha)
            .is_ok_and(|c| c.iter().sum::<u64>() <= self.budget_kept)
    }

    fn infeasibility(&self) -> Error {
        let cheapest: Vec<u64> = self
            .layers
            .iter()
            .map(|l| l.options.iter().map(|o| o.0).min().unwrap_or(0))
            .collect();
        let total: u64 = cheapest.iter().sum();
        let (worst, cost) = cheapest
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .map(|(i, &c)| (i, c))
            .unwrap_or((0, 0));
        Error::Infeasible(format!(
            "cheapest selection keeps {total} parameters, budget is {}; largest contributor is layer {worst} ({cost})",
            self.budget_kept
        ))
    }

    /// Sorted, deduplicated cap ratios `e / e_ref` over every option.
    pub(crate) fn alpha_candidates(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .layers
            .iter()
            .flat_map(|l| &l.options)
            .map(|&(_, e)| e / self.e_ref)
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn resolve_alpha(&self) -> Result<f64> {
        match self.alpha {
            Alpha::Fixed(a) => Ok(a),
            Alpha::Auto => min_feasible_alpha(self),
        }
    }
}

/// Smallest cap multiplier admitting a feasible selection, searched by
/// bisection over the finite set of ratios `e / e_ref`.
pub fn min_feasible_alpha(inst: &MckpInstance) -> Result<f64> {
    inst.validate()?;
    if inst.e_ref == 0.0 {
        // Only zero-error options pass any cap; alpha has no effect.
        return if inst.feasible_at(0.0) {
            Ok(0.0)
        } else {
            Err(inst.infeasibility())
        };
    }
    let cands = inst.alpha_candidates();
    if !inst.feasible_at(*cands.last().unwrap()) {
        return Err(inst.infeasibility());
    }
    let (mut lo, mut hi) = (0usize, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if inst.feasible_at(cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(cands[lo])
}

#[derive(Debug, Clone, Copy)]
struct DpState {
    key: u64,
    exact: u64,
    error: f64,
    parent: u32,
    option: u32,
}

/// Options of each layer that pass the cap.
pub(crate) fn allowed_options(inst: &MckpInstance, alpha: f64) -> Vec<Vec<usize>> {
    inst.layers
        .iter()
        .map(|l| {
            (0..l.options.len())
                .filter(|&i| passes_cap(l.options[i].1, alpha, inst.e_ref))
                .collect()
        })
        .collect()
}

pub(crate) fn plan_from_choices(
    inst: &MckpInstance,
    choices: Vec<usize>,
    alpha_used: f64,
) -> AllocationPlan {
    let total_kept = choices
        .iter()
        .zip(&inst.layers)
        .map(|(&i, l)| l.options[i].0)
        .sum();
    let total_error = choices
        .iter()
        .zip(&inst.layers)
        .fold(0.0, |acc, (&i, l)| acc + l.options[i].1);
    AllocationPlan {
        choices,
        total_kept,
        total_error,
        alpha_used,
    }
}

/// Solves with safe dominance pruning.
pub fn solve_dp(inst: &MckpInstance) -> Result<AllocationPlan> {
    solve_dp_with(inst, Dominance::Safe)
}

pub fn solve_dp_with(inst: &MckpInstance, dominance: Dominance) -> Result<AllocationPlan> {
    inst.validate()?;
    let alpha = inst.resolve_alpha()?;
    match run_dp(inst, alpha, dominance)? {
        Some(plan) => Ok(plan),
        None if inst.param_precision != inst.p_total() => {
            // Flooring merged away every exactly-feasible path; redo without discretization.
            let exact = MckpInstance {
                param_precision: inst.p_total(),
                ..inst.clone()
            };
            run_dp(&exact, alpha, dominance)?.ok_or_else(|| inst.infeasibility())
        }
        None => Err(inst.infeasibility()),
    }
}

fn run_dp(inst: &MckpInstance, alpha: f64, dominance: Dominance) -> Result<Option<AllocationPlan>> {
    let allowed = allowed_options(inst, alpha);
    if let Some(l) = allowed.iter().position(Vec::is_empty) {
        return Err(Error::Infeasible(format!(
            "no option of layer {l} passes the cap alpha = {alpha}"
        )));
    }
    let max_key = inst.max_key();
    let mut frontiers: Vec<Vec<DpState>> = Vec::with_capacity(inst.layers.len() + 1);
    frontiers.push(vec![DpState {
        key: 0,
        exact: 0,
        error: 0.0,
        parent: u32::MAX,
        option: u32::MAX,
    }]);

    for (l, layer) in inst.layers.iter().enumerate() {
        let prev = frontiers.last().unwrap();
        let scaled: Vec<u64> = layer.options.iter().map(|&(c, _)| inst.scaled(c)).collect();
        let mut next = Vec::with_capacity(prev.len() * allowed[l].len());
        for (p, st) in prev.iter().enumerate() {
            for &i in &allowed[l] {
                let key = st.key + scaled[i];
                if key > max_key {
                    continue;
                }
                let (c, e) = layer.options[i];
                next.push(DpState {
                    key,
                    exact: st.exact + c,
                    error: st.error + e,
                    parent: p as u32,
                    option: i as u32,
                });
            }
        }
        next.sort_by(|a, b| {
            a.key
                .cmp(&b.key)
                .then(a.error.total_cmp(&b.error))
                .then(a.exact.cmp(&b.exact))
                .then(a.parent.cmp(&b.parent))
                .then(a.option.cmp(&b.option))
        });
        next.dedup_by_key(|s| s.key);
        let next = match dominance {
            Dominance::Off => next,
            Dominance::Safe => {
                // Equal-error costlier states stay so the larger-kept tie-break can see them.
                let mut best = f64::INFINITY;
                next.into_iter()
                    .filter(|s| {
                        let keep = s.error <= best;
                        best = best.min(s.error);
                        keep
                    })
                    .collect()
            }
            Dominance::KeepCostlier => {
                let mut best = f64::INFINITY;
                let mut kept: Vec<DpState> = next
                    .into_iter()
                    .rev()
                    .filter(|s| {
                        let keep = s.error < best;
                        best = best.min(s.error);
                        keep
                    })
                    .collect();
                kept.reverse();
                kept
            }
        };
        if next.is_empty() {
            return Ok(None);
        }
        frontiers.push(next);
    }

    let last = frontiers.last().unwrap();
    let backtrack = |mut idx: usize| {
        let mut choices = vec![0usize; inst.layers.len()];
        for l in (0..inst.layers.len()).rev() {
            let st = frontiers[l + 1][idx];
            choices[l] = st.option as usize;
            idx = st.parent as usize;
        }
        choices
    };
    let mut best: Option<(usize, Vec<usize>)> = None;
    for (idx, st) in last.iter().enumerate() {
        if st.exact > inst.budget_kept {
            continue;
        }
        let better = match &best {
            None => true,
            Some((b, bc)) => {
                let bs = last[*b];
                match st.error.total_cmp(&bs.error) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        st.exact > bs.exact || (st.exact == bs.exact && backtrack(idx) < *bc)
                    }
                }
            }
        };
        if better {
            best = Some((idx, backtrack(idx)));
        }
    }
    Ok(best.map(|(_, choices)| plan_from_choices(inst, choices, alpha)))
}
