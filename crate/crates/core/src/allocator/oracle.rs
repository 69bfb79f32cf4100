//! Reference solvers for the allocation problem.
//!
//! `brute_force_oracle` enumerates every selection. `dijkstra_oracle` builds
//! the layered state graph explicitly and runs a shortest-path search on it.
//! Neither shares code with the DP beyond the cap predicate.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use super::{allowed_options, passes_cap, plan_from_choices, AllocationPlan, MckpInstance};
use crate::{Error, Result};

/// Selections above this count are refused.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Linear scan over every candidate ratio, checking feasibility by
/// enumeration of all selections.
pub fn min_feasible_alpha_scan(inst: &MckpInstance) -> Result<f64> {
    inst.validate()?;
    let mut cands: Vec<f64> = if inst.e_ref == 0.0 {
        vec![0.0]
    } else {
        inst.layers
            .iter()
            .flat_map(|l| &l.options)
            .map(|&(_, e)| e / inst.e_ref)
            .collect()
    };
    cands.sort_by(f64::total_cmp);
    for a in cands {
        if enumerate_best(inst, a)?.is_some() {
            return Ok(a);
        }
    }
    Err(Error::Infeasible(
        "no cap ratio admits a selection within budget".into(),
    ))
}

fn enumerate_best(inst: &MckpInstance, alpha: f64) -> Result<Option<Vec<usize>>> {
    let count: f64 = inst.layers.iter().map(|l| l.options.len() as f64).product();
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "{count} selections exceed the enumeration limit"
        )));
    }
    let n = inst.layers.len();
    let mut idx = vec![0usize; n];
    let mut best: Option<(f64, u64, Vec<usize>)> = None;
    loop {
        let mut kept = 0u64;
        let mut err = 0.0;
        let mut ok = true;
        for (l, &i) in idx.iter().enumerate() {
            let (c, e) = inst.layers[l].options[i];
            ok &= passes_cap(e, alpha, inst.e_ref);
            kept += c;
            err += e;
        }
        if ok && kept <= inst.budget_kept {
            let better = match &best {
                None => true,
                // Odometer order is lexicographic, so an equal candidate never displaces an earlier one.
                Some((be, bk, _)) => err < *be || (err == *be && kept > *bk),
            };
            if better {
                best = Some((err, kept, idx.clone()));
            }
        }
        // odometer, last layer fastest
        let mut l = n;
        loop {
            if l == 0 {
                return Ok(best.map(|b| b.2));
            }
            l -= 1;
            idx[l] += 1;
            if idx[l] < inst.layers[l].options.len() {
                break;
            }
            idx[l] = 0;
        }
    }
}

/// Exhaustive search; ties broken by larger kept count, then the
/// lexicographically smallest choice vector.
pub fn brute_force_oracle(inst: &MckpInstance) -> Result<AllocationPlan> {
    inst.validate()?;
    let alpha = match inst.alpha {
        super::Alpha::Fixed(a) => a,
        super::Alpha::Auto => min_feasible_alpha_scan(inst)?,
    };
    let choices = enumerate_best(inst, alpha)?.ok_or_else(|| {
        Error::Infeasible(format!("no selection fits the budget at alpha = {alpha}"))
    })?;
    Ok(plan_from_choices(inst, choices, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    Source,
    State { layer: usize, key: u64 },
    Sink,
}

#[derive(Debug, Clone, Copy)]
struct Label {
    dist: f64,
    exact: u64,
    node: Node,
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    // Reversed so the max-heap pops the smallest distance first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.exact.cmp(&self.exact))
    }
}

/// Shortest path on the explicit graph with nodes `(layer, discretized kept)`
/// and edge weights equal to option errors. Terminal states connect to a
/// sink when the settled path into them fits the exact budget.
///
/// Optimal whenever the discretization is exact (`param_precision == P_total`);
/// at coarser precision each node keeps only its first-settled path. The
/// search runs to exhaustion so the sink sees every settled terminal.
pub fn dijkstra_oracle(inst: &MckpInstance) -> Result<AllocationPlan> {
    inst.validate()?;
    let alpha = inst.resolve_alpha()?;
    let allowed = allowed_options(inst, alpha);
    if let Some(l) = allowed.iter().position(Vec::is_empty) {
        return Err(Error::Infeasible(format!(
            "no option of layer {l} passes the cap alpha = {alpha}"
        )));
    }
    let n = inst.layers.len();
    let max_key = inst.max_key();

    // Build the graph: adjacency lists of (target, option index, error, cost).
    let mut adj: HashMap<Node, Vec<(Node, usize, f64, u64)>> = HashMap::new();
    let mut frontier = vec![(Node::Source, 0u64)];
    for (l, layer) in inst.layers.iter().enumerate() {
        let mut next: HashSet<u64> = HashSet::new();
        for &(from, key) in &frontier {
            let edges = adj.entry(from).or_default();
            for &i in &allowed[l] {
                let (c, e) = layer.options[i];
                let k = key + inst.scaled(c);
                if k > max_key {
                    continue;
                }
                edges.push((Node::State { layer: l, key: k }, i, e, c));
                next.insert(k);
            }
        }
        let mut keys: Vec<u64> = next.into_iter().collect();
        keys.sort_unstable();
        frontier = keys
            .into_iter()
            .map(|k| (Node::State { layer: l, key: k }, k))
            .collect();
    }

    let mut settled: HashMap<Node, (f64, u64)> = HashMap::new();
    let mut pred: HashMap<Node, (Node, usize)> = HashMap::new();
    let mut best_seen: HashMap<Node, (f64, u64)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        dist: 0.0,
        exact: 0,
        node: Node::Source,
    });
    best_seen.insert(Node::Source, (0.0, 0));

    while let Some(Label { dist, exact, node }) = heap.pop() {
        if settled.contains_key(&node) {
            continue;
        }
        settled.insert(node, (dist, exact));
        if let Node::State { layer, .. } = node {
            if layer + 1 == n {
                if exact <= inst.budget_kept {
                    relax(
                        &mut heap,
                        &mut best_seen,
                        &mut pred,
                        node,
                        Node::Sink,
                        usize::MAX,
                        dist,
                        exact,
                    );
                }
                continue;
            }
        }
        if let Some(edges) = adj.get(&node) {
            for &(to, opt, e, c) in edges {
                if !settled.contains_key(&to) {
                    relax(
                        &mut heap,
                        &mut best_seen,
                        &mut pred,
                        node,
                        to,
                        opt,
                        dist + e,
                        exact + c,
                    );
                }
            }
        }
    }

    if !settled.contains_key(&Node::Sink) {
        return Err(Error::Infeasible(format!(
            "no path within budget at alpha = {alpha}"
        )));
    }
    let mut choices = vec![0usize; n];
    let mut node = pred[&Node::Sink].0;
    while let Node::State { layer, .. } = node {
        let (prev, opt) = pred[&node];
        choices[layer] = opt;
        node = prev;
    }
    Ok(plan_from_choices(inst, choices, alpha))
}

#[allow(clippy::too_many_arguments)]
fn relax(
    heap: &mut BinaryHeap<Label>,
    best_seen: &mut HashMap<Node, (f64, u64)>,
    pred: &mut HashMap<Node, (Node, usize)>,
    from: Node,
    to: Node,
    opt: usize,
    dist: f64,
    exact: u64,
) {
    let improves = match best_seen.get(&to) {
        None => true,
        // Equal-distance paths: inner nodes keep the cheaper one, the sink the costlier one.
        Some(&(d, x)) => {
            dist < d
                || (dist == d
                    && if to == Node::Sink {
                        exact > x
                    } else {
                        exact < x
                    })
        }
    };
    if improves {
        best_seen.insert(to, (dist, exact));
        pred.insert(to, (from, opt));
        heap.push(Label {
            dist,
            exact,
            node: to,
        });
    }
}
