//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sparsedict::allocator::{
    brute_force_oracle, dijkstra_oracle, min_feasible_alpha, min_feasible_alpha_scan, solve_dp,
    solve_dp_with, Alpha, Dominance, MckpInstance, CAP_TOL, DEFAULT_PARAM_PRECISION,
};
use sparsedict::cli::{self, RunConfig};
use sparsedict::factorizer::{jacobi_svd, top_r_basis, truncated_svd_oracle};
use sparsedict::par::Execution;
use sparsedict::profiler::{
    profile_model, reference_error, reference_selection, CandidateGrid, LayerContext, OptionSet,
};
use sparsedict::runtime::{CompressedLayer, ModelLayer};
use sparsedict::sparse::SparseColumns;
use sparsedict::sparsifier::{sparsify_mode, two_stage_sparsify, SparsifyMode};
use sparsedict::store;
use sparsedict::synth::{generate, randn, synth_activations, SynthSpec};
use sparsedict::whitening::{build_whitener, WhitenTransform, DEFAULT_JITTER_REL};
use sparsedict::Mat;

use common::{max_error_slope, random_instance};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= limit, || format!("took {:.2?}, limit {limit:?}", t))
}

/// Random layer with a correlated calibration Gram.
fn random_layer(rng: &mut ChaCha8Rng) -> (Mat, WhitenTransform) {
    let d1 = rng.random_range(6..=40);
    let d2 = rng.random_range(6..=40);
    let w = randn(rng, d1, d2);
    let x = synth_activations(rng, 3 * d1 + 8, d1);
    let t = build_whitener(&x.tr_mul(&x), DEFAULT_JITTER_REL).unwrap();
    (w, t)
}

fn grid_mu0() -> CandidateGrid {
    CandidateGrid {
        mu: 0.0,
        ..CandidateGrid::default()
    }
}

fn svd_degeneracy() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grid = grid_mu0();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let (w, t) = random_layer(&mut rng);
        let (d1, d2) = w.shape();
        let k = rng.random_range(1..=d1.min(d2));
        let ctx = LayerContext::new(&w, &t).map_err(|e| e.to_string())?;
        let out = ctx.run(k, k * d2, &grid).map_err(|e| e.to_string())?;
        let oracle = truncated_svd_oracle(&ctx.w_l, k).map_err(|e| e.to_string())?;
        let expect = oracle.residual / ctx.w_l.norm();
        let diff = (out.whitened_rel_error - expect).abs();
        worst = worst.max(diff);
        ensure(diff <= 1e-6, || {
            format!(
                "case {case} ({d1}x{d2}, k={k}): {} vs {expect}",
                out.whitened_rel_error
            )
        })?;
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("100 layers, max |err - residual| = {worst:.2e}"))
}

fn evd_svd_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut vec_dev, mut val_dev): (f64, f64) = (0.0, 0.0);
    for case in 0..50 {
        let d1 = rng.random_range(4..=32);
        let d2 = d1 + rng.random_range(4..=24);
        let w = randn(&mut rng, d1, d2);
        let r = rng.random_range(1..=d1);
        let basis = top_r_basis(&w, r).map_err(|e| e.to_string())?;
        let svd = jacobi_svd(&w).map_err(|e| e.to_string())?;
        for i in 0..r {
            let b = basis.b().column(i);
            let u = svd.u.column(i);
            let dev = (b - u).amax().min((b + u).amax());
            vec_dev = vec_dev.max(dev);
            let s2 = svd.sigma[i] * svd.sigma[i];
            let rel = (basis.eigvals()[i] - s2).abs() / s2;
            val_dev = val_dev.max(rel);
            ensure(dev <= 1e-6 && rel <= 1e-6, || {
                format!("case {case} ({d1}x{d2}) column {i}: vector dev {dev:.2e}, eigenvalue rel {rel:.2e}")
            })?;
        }
    }
    Ok(format!(
        "50 matrices, max vector dev {vec_dev:.2e}, max eigenvalue rel dev {val_dev:.2e}"
    ))
}

fn synthetic_whiteners(layers: &[sparsedict::synth::SynthLayer]) -> Vec<WhitenTransform> {
    layers
        .iter()
        .map(|l| build_whitener(&l.x.tr_mul(&l.x), DEFAULT_JITTER_REL).unwrap())
        .collect()
}

fn error_bound() -> Check {
    let layers = generate(&SynthSpec::default());
    let ts = synthetic_whiteners(&layers);
    let grid = CandidateGrid::default();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (l, t) in layers.iter().zip(&ts) {
        let ctx = LayerContext::new(&l.w, t).map_err(|e| e.to_string())?;
        let (d1, d2) = l.w.shape();
        for (k, s) in grid.candidates(d1, d2) {
            let out = ctx.run(k, s * d2, &grid).map_err(|e| e.to_string())?;
            worst = worst.max(out.whitened_rel_error);
            count += 1;
            ensure(out.whitened_rel_error <= 1.0 + 1e-9, || {
                format!(
                    "{} k={k} s={s}: whitened error {}",
                    l.name, out.whitened_rel_error
                )
            })?;
            ensure(out.error.is_finite(), || {
                format!("{} k={k} s={s}: original error not finite", l.name)
            })?;
        }
        let zero = ctx.run(1, 0, &grid).map_err(|e| e.to_string())?;
        ensure(zero.error == 1.0, || {
            format!("{}: zero-coefficient error {} != 1", l.name, zero.error)
        })?;
        ensure(zero.whitened_rel_error == 1.0, || {
            format!(
                "{}: zero-coefficient whitened error {} != 1",
                l.name, zero.whitened_rel_error
            )
        })?;
    }
    Ok(format!("{count} candidates, max whitened error {worst:.6}; zero-coefficient error exactly 1 on all layers"))
}

fn refit_improvement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let grid = grid_mu0();
    let (mut sparse, mut strict) = (0, 0);
    for case in 0..100 {
        let (w, t) = random_layer(&mut rng);
        let (d1, d2) = w.shape();
        let k = rng.random_range(1..=d1.min(d2));
        let target = rng.random_range(0..=k * d2);
        let ctx = LayerContext::new(&w, &t).map_err(|e| e.to_string())?;
        let out = ctx.run(k, target, &grid).map_err(|e| e.to_string())?;
        let (pre, post) = (out.whitened_rel_error_pre_refit, out.whitened_rel_error);
        ensure(post <= pre * (1.0 + 1e-12), || {
            format!("case {case}: post {post} > pre {pre}")
        })?;
        if target > 0 && target < k * d2 {
            sparse += 1;
            if post < pre {
                strict += 1;
            }
        }
    }
    let frac = strict as f64 / sparse.max(1) as f64;
    ensure(frac >= 0.9, || {
        format!("strict improvement in {strict}/{sparse} sparse cases")
    })?;
    Ok(format!(
        "post <= pre on 100 pairs; strict in {strict}/{sparse} sparse cases"
    ))
}

fn oracle_instances(seed: u64, large: bool) -> Vec<MckpInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..200)
        .map(|_| random_instance(&mut rng, 6, 5, large))
        .collect()
}

fn errors_of(r: sparsedict::Result<sparsedict::allocator::AllocationPlan>) -> Option<f64> {
    r.ok().map(|p| p.total_error)
}

fn mckp_exactness() -> Check {
    let start = Instant::now();
    let mut solved = 0;
    for (n, inst) in oracle_instances(404, false).iter().enumerate() {
        let bf = errors_of(brute_force_oracle(inst));
        let dp = solve_dp(inst);
        if let Ok(p) = &dp {
            ensure(p.total_kept <= inst.budget_kept, || {
                format!("instance {n}: dp over budget")
            })?;
        }
        let dp = errors_of(dp);
        let dj = errors_of(dijkstra_oracle(inst));
        ensure(bf == dp && dp == dj, || {
            format!("instance {n}: brute {bf:?}, dp {dp:?}, dijkstra {dj:?}")
        })?;
        solved += bf.is_some() as usize;
    }
    let mut worst_gap: f64 = 0.0;
    let mut coarse = 0;
    for (n, mut inst) in oracle_instances(405, true).into_iter().enumerate() {
        let Ok(bf) = brute_force_oracle(&inst) else {
            continue;
        };
        inst.param_precision = DEFAULT_PARAM_PRECISION;
        let dp = solve_dp(&inst)
            .map_err(|e| format!("instance {n}: dp failed where brute force solved: {e}"))?;
        ensure(dp.total_kept <= inst.budget_kept, || {
            format!("instance {n}: dp over budget")
        })?;
        let p_total = inst.p_total() as f64;
        let bound = inst.layers.len() as f64 * p_total / inst.param_precision as f64
            * max_error_slope(&inst);
        let gap = dp.total_error - bf.total_error;
        worst_gap = worst_gap.max(gap);
        coarse += (p_total > inst.param_precision as f64) as usize;
        ensure(gap >= -1e-12 && gap <= bound + 1e-12, || {
            format!(
                "instance {n}: dp {} vs brute {} (bound {bound:.3e})",
                dp.total_error, bf.total_error
            )
        })?;
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!(
        "exact: 200 instances agree ({solved} feasible); default precision: {coarse} coarse instances, max gap {worst_gap:.2e}"
    ))
}

fn pruning_safety() -> Check {
    let mut compared = 0;
    let mut keep_costlier_diffs = 0;
    for (seed, large) in [(404, false), (405, true)] {
        for (n, mut inst) in oracle_instances(seed, large).into_iter().enumerate() {
            if large {
                inst.param_precision = DEFAULT_PARAM_PRECISION;
            }
            let on = errors_of(solve_dp_with(&inst, Dominance::Safe));
            let off = errors_of(solve_dp_with(&inst, Dominance::Off));
            ensure(on == off, || {
                format!("seed {seed} instance {n}: pruned {on:?}, unpruned {off:?}")
            })?;
            if errors_of(solve_dp_with(&inst, Dominance::KeepCostlier)) != off {
                keep_costlier_diffs += 1;
            }
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} instances identical with and without pruning (keep-costlier rule differs on {keep_costlier_diffs})"
    ))
}

fn cap_and_alpha() -> Check {
    let mut checked = 0;
    for (n, inst) in oracle_instances(404, false).iter().enumerate() {
        let auto = MckpInstance {
            alpha: Alpha::Auto,
            ..inst.clone()
        };
        let a = min_feasible_alpha(&auto).ok();
        let scan = min_feasible_alpha_scan(&auto).ok();
        ensure(a == scan, || {
            format!("instance {n}: alpha_auto {a:?}, scan {scan:?}")
        })?;
        let Ok(plan) = solve_dp(inst) else { continue };
        checked += 1;
        for (l, &i) in plan.choices.iter().enumerate() {
            let e = inst.layers[l].options[i].1;
            ensure(e <= plan.alpha_used * inst.e_ref + CAP_TOL, || {
                format!(
                    "instance {n} layer {l}: error {e} > {} * {}",
                    plan.alpha_used, inst.e_ref
                )
            })?;
        }
        // Monotonicity in budget at the plan's alpha.
        let fixed = MckpInstance {
            alpha: Alpha::Fixed(plan.alpha_used),
            ..inst.clone()
        };
        let mut prev = f64::INFINITY;
        let p_total = fixed.p_total();
        let steps = 8u64;
        for b in (0..=steps).map(|i| fixed.budget_kept + (p_total - fixed.budget_kept) * i / steps)
        {
            let e = solve_dp(&MckpInstance {
                budget_kept: b,
                ..fixed.clone()
            })
            .map(|p| p.total_error);
            let e = e.map_err(|err| {
                format!(
                    "instance {n}: budget {b} infeasible after {}: {err}",
                    fixed.budget_kept
                )
            })?;
            ensure(e <= prev, || {
                format!("instance {n}: error rose to {e} at budget {b}")
            })?;
            prev = e;
        }
        // Monotonicity in alpha at the instance budget.
        let mut prev = f64::INFINITY;
        for k in 0..8 {
            let alpha = plan.alpha_used * (1.0 + 0.25 * k as f64);
            let e = solve_dp(&MckpInstance {
                alpha: Alpha::Fixed(alpha),
                ..inst.clone()
            })
            .map(|p| p.total_error);
            let e = e.map_err(|err| format!("instance {n}: alpha {alpha} infeasible: {err}"))?;
            ensure(e <= prev, || {
                format!("instance {n}: error rose to {e} at alpha {alpha}")
            })?;
            prev = e;
        }
    }
    Ok(format!("caps hold on {checked} plans; alpha_auto = scan on 200 instances; monotone in budget and alpha"))
}

fn profile_synthetic() -> (Vec<OptionSet>, u64) {
    let layers = generate(&SynthSpec::default());
    let ts = synthetic_whiteners(&layers);
    let names: Vec<String> = layers.iter().map(|l| l.name.clone()).collect();
    let weights: Vec<Mat> = layers.iter().map(|l| l.w.clone()).collect();
    let sets = profile_model(
        &names,
        &weights,
        &ts,
        &CandidateGrid::default(),
        Execution::Parallel,
    )
    .unwrap();
    let p_total = sets.iter().map(OptionSet::full_cost).sum();
    (sets, p_total)
}

fn uniform_dominance(sets: &[OptionSet], p_total: u64) -> Check {
    let mut lines = Vec::new();
    for cr in [0.2, 0.3, 0.4, 0.5] {
        let cfg = RunConfig {
            target_cr: cr,
            ..RunConfig::default()
        };
        let budget = cfg.budget_kept(p_total);
        let e_ref = reference_error(sets, cr).map_err(|e| e.to_string())?;
        let inst =
            MckpInstance::from_option_sets(sets, budget, Alpha::Auto, e_ref, cfg.param_precision);
        let plan = solve_dp(&inst).map_err(|e| format!("cr {cr}: {e}"))?;
        let sel = reference_selection(sets, cr).map_err(|e| e.to_string())?;
        let uni_kept: u64 = sets.iter().zip(&sel).map(|(s, &i)| s.options[i].cost).sum();
        let uni_err = sets
            .iter()
            .zip(&sel)
            .fold(0.0, |acc, (s, &i)| acc + s.options[i].error);
        let uni_capped = sets
            .iter()
            .zip(&sel)
            .all(|(s, &i)| s.options[i].error <= plan.alpha_used * e_ref + CAP_TOL);
        // The uniform selection is judged by the budget alone; the capped plan must still beat it.
        let feasible = uni_kept <= budget;
        if feasible {
            ensure(plan.total_error <= uni_err, || {
                format!("cr {cr}: knapsack {} > uniform {uni_err}", plan.total_error)
            })?;
        }
        lines.push(format!(
            "cr {cr}: knapsack {:.4} vs uniform {uni_err:.4}{}{}",
            plan.total_error,
            if feasible {
                ""
            } else {
                " (uniform over budget)"
            },
            if uni_capped {
                ""
            } else {
                " [uniform exceeds cap]"
            }
        ));
    }
    Ok(lines.join("; "))
}

fn exact_nnz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..1000 {
        let r = rng.random_range(1..=12);
        let d2 = rng.random_range(1..=16);
        let c = randn(&mut rng, r, d2);
        // Coarse values so importance ties occur.
        let imp = c.map(|v| (v.abs() * 4.0).round());
        let target = match case % 10 {
            0 => 0,
            1 => r * d2,
            _ => rng.random_range(0..=r * d2),
        };
        let beta = [0.0, 5e-3, 0.2][case % 3];
        for mode in SparsifyMode::ALL {
            let (sp, mask) =
                sparsify_mode(&c, &imp, target, mode, beta).map_err(|e| e.to_string())?;
            ensure(sp.nnz() == target && mask.nnz == target, || {
                format!("case {case} {mode}: nnz {} for target {target}", sp.nnz())
            })?;
        }
    }
    let imp = Mat::from_row_slice(3, 2, &[5.0, 1.0, 4.0, 2.0, 3.0, 6.0]);
    let (sp, _) = two_stage_sparsify(&imp, &imp, 4, 0.2).map_err(|e| e.to_string())?;
    let mut support: Vec<(usize, usize)> = Vec::new();
    for j in 0..sp.cols() {
        support.extend(sp.column(j).map(|(i, _)| (i, j)));
    }
    support.sort();
    ensure(support == vec![(0, 0), (1, 0), (2, 0), (2, 1)], || {
        format!("hand trace support {support:?}")
    })?;
    Ok(
        "1000 pairs x 4 modes exact (targets 0 and r*d2 included); hand trace support matches"
            .into(),
    )
}

fn forward_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d1 = rng.random_range(1..=30);
        let d2 = rng.random_range(1..=30);
        let k = rng.random_range(1..=20);
        let n = rng.random_range(1..=16);
        let u = randn(&mut rng, d1, k);
        let vd = randn(&mut rng, k, d2);
        let p: f64 = rng.random();
        let keep: Vec<bool> = (0..k * d2).map(|_| rng.random_bool(p)).collect();
        let v = SparseColumns::from_dense_masked(&vd, |i, j| keep[j * k + i]);
        let layer = CompressedLayer::new(u.clone(), v).map_err(|e| e.to_string())?;
        let x = randn(&mut rng, n, d1);
        let y = layer.forward(&x).map_err(|e| e.to_string())?;
        let y_ref = &x * layer.to_dense();
        let denom = y_ref.norm();
        let rel = if denom > 0.0 {
            (&y - &y_ref).norm() / denom
        } else {
            y.norm()
        };
        worst = worst.max(rel);
        ensure(rel <= 1e-8, || {
            format!("case {case}: relative deviation {rel:.2e}")
        })?;
    }
    let full = SparseColumns::from_dense_masked(&Mat::from_element(4, 4, 1.0), |_, _| true);
    let l = CompressedLayer::new(Mat::zeros(8, 4), full).map_err(|e| e.to_string())?;
    ensure(l.flop_count(2) == 96, || {
        format!("hand case gives {}", l.flop_count(2))
    })?;
    let empty = CompressedLayer::new(Mat::zeros(8, 4), SparseColumns::zeros(4, 5))
        .map_err(|e| e.to_string())?;
    ensure(empty.flop_count(7) == 0, || "nnz = 0 case nonzero".into())?;
    let dense_v = SparseColumns::from_dense_masked(&Mat::from_element(3, 5, 1.0), |_, _| true);
    let l = CompressedLayer::new(Mat::zeros(6, 3), dense_v).map_err(|e| e.to_string())?;
    ensure(l.flop_count(4) == 4 * 6 * 3 + 4 * 3 * 5, || {
        "dense-V count".into()
    })?;
    Ok(format!(
        "100 random layers, max relative deviation {worst:.2e}; FLOP hand cases match"
    ))
}

fn files_equal(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    for n in &names {
        let (fa, fb) = (a.join(n), b.join(n));
        let (ba, bb) = (
            std::fs::read(&fa).map_err(|e| e.to_string())?,
            std::fs::read(&fb).map_err(|e| e.to_string())?,
        );
        ensure(ba == bb, || {
            format!("{} differs between runs", n.to_string_lossy())
        })?;
    }
    Ok(names.len())
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec::default();
    let manifest = cli::cmd_synth(&tmp.path().join("model"), &spec).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default();
    let run = |tag: &str| -> Result<(cli::CompressReport, std::path::PathBuf), String> {
        let dir = tmp.path().join(tag);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        cli::cmd_profile(&manifest, &cfg, &dir.join("options.json")).map_err(|e| e.to_string())?;
        cli::cmd_allocate(&dir.join("options.json"), &cfg, &dir.join("plan.json"))
            .map_err(|e| e.to_string())?;
        let r = cli::cmd_compress(
            &manifest,
            &dir.join("plan.json"),
            &dir.join("out"),
            cfg.execution,
        )
        .map_err(|e| e.to_string())?;
        Ok((r, dir))
    };
    let (r1, d1) = run("a")?;
    let (_, d2) = run("b")?;
    ensure(r1.total_kept <= r1.budget_kept, || {
        format!("kept {} > budget {}", r1.total_kept, r1.budget_kept)
    })?;
    let rel = (r1.achieved_ratio - cfg.target_cr).abs() / cfg.target_cr;
    ensure(rel <= 0.01, || {
        format!(
            "achieved ratio {} is {:.2}% from target",
            r1.achieved_ratio,
            100.0 * rel
        )
    })?;
    files_equal(&d1, &d2)?;
    let nfiles = files_equal(&d1.join("out"), &d2.join("out"))?;

    let model = store::load_model(&manifest).map_err(|e| e.to_string())?;
    let comp = store::load_compressed(&d1.join("out")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for (i, layer) in comp.layers.iter().enumerate() {
        let x = randn(&mut rng, 16, model.manifest.layers[i].d1);
        let y = layer.forward(&x).map_err(|e| e.to_string())?;
        let y_ref = &x * layer.to_dense();
        worst = worst.max((&y - &y_ref).norm() / y_ref.norm());
        if let ModelLayer::Dense(w) = layer {
            ensure(w == &model.weights[i], || {
                format!("dense layer {i} changed on disk")
            })?;
        }
    }
    ensure(worst <= 1e-8, || {
        format!("reloaded forward deviates by {worst:.2e}")
    })?;
    let kept: u64 = comp.layers.iter().map(ModelLayer::param_count).sum();
    ensure(kept == r1.total_kept, || {
        format!("reloaded model keeps {kept}, report says {}", r1.total_kept)
    })?;
    within(Duration::from_secs(60), start)?;
    Ok(format!(
        "kept {} <= budget {}, achieved {:.4} (target {}), {nfiles} output files byte-identical, reload forward dev {worst:.1e}, {:.1?}",
        r1.total_kept,
        r1.budget_kept,
        r1.achieved_ratio,
        cfg.target_cr,
        start.elapsed()
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, f: &dyn Fn() -> Check| {
        let start = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let t = start.elapsed();
        match res {
            Ok(detail) => println!("[PASS] {name} ({t:.2?}): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {name} ({t:.2?}): {detail}");
            }
        }
    };
    report("svd_degeneracy", &svd_degeneracy);
    report("evd_svd_basis_equivalence", &evd_svd_equivalence);
    report("error_bound", &error_bound);
    report("refit_improvement", &refit_improvement);
    report("mckp_exactness", &mckp_exactness);
    report("pruning_safety", &pruning_safety);
    report("cap_and_alpha", &cap_and_alpha);
    report("uniform_dominance", &|| {
        let (sets, p_total) = profile_synthetic();
        uniform_dominance(&sets, p_total)
    });
    report("exact_nnz_sparsification", &exact_nnz);
    report("forward_equivalence", &forward_equivalence);
    report("end_to_end", &end_to_end);
    println!("{} criteria failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
