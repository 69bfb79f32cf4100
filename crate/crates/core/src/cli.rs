//! Command-line pipeline: `gram -> profile -> allocate -> compress -> eval`,
//! plus `synth` for a self-contained demo model.
//!
//! Every stage reads and writes files in the [`store`] formats, so stages can
//! be rerun or inspected independently. Output files are byte-identical for
//! identical inputs and configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{solve_dp, Alpha, MckpInstance, DEFAULT_PARAM_PRECISION};
use crate::par::Execution;
use crate::profiler::{profile_model, reference_error, regenerate, CandidateGrid, OptionSet};
use crate::refit::{error_report, ErrorMetric, ErrorReport};
use crate::runtime::{forward_all, CompressedLayer, ModelLayer};
use crate::sparsifier::SparsifyMode;
use crate::store::{self, DType, LayerOutput, LoadedModel, ModelManifest, FORMAT_VERSION};
use crate::synth::{self, SynthSpec};
use crate::whitening::{build_whitener, WhitenTransform, DEFAULT_JITTER_REL};
use crate::{Error, Mat, Result};

/// Pipeline hyperparameters. Loaded from JSON; missing fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fraction of compressible parameters to remove.
    pub target_cr: f64,
    pub grid: CandidateGrid,
    pub alpha: Alpha,
    pub param_precision: u64,
    pub seed: u64,
    pub jitter_rel: f64,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target_cr: 0.3,
            grid: CandidateGrid::default(),
            alpha: Alpha::Auto,
            param_precision: DEFAULT_PARAM_PRECISION,
            seed: 0,
            jitter_rel: DEFAULT_JITTER_REL,
            execution: Execution::Parallel,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = store::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_cr) {
            return Err(Error::InvalidArgument(format!(
                "target_cr {} outside [0, 1)",
                self.target_cr
            )));
        }
        if self.param_precision == 0 {
            return Err(Error::InvalidArgument(
                "param_precision must be positive".into(),
            ));
        }
        if !(self.jitter_rel >= 0.0 && self.jitter_rel.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "jitter_rel {} must be finite and nonnegative",
                self.jitter_rel
            )));
        }
        self.grid.validate()
    }

    /// `floor((1 - target_cr) * P_total)`.
    pub fn budget_kept(&self, p_total: u64) -> u64 {
        (((1.0 - self.target_cr) * p_total as f64).floor() as u64).min(p_total)
    }
}

/// Output of the profile stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub format_version: u32,
    pub grid: CandidateGrid,
    pub jitter_rel: f64,
    pub layers: Vec<OptionSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub d1: usize,
    pub d2: usize,
    /// 0 keeps the layer dense.
    pub rank_k: usize,
    pub s: usize,
    pub cost: u64,
    pub error: f64,
}

/// Output of the allocate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub format_version: u32,
    pub target_cr: f64,
    pub p_total: u64,
    pub budget_kept: u64,
    pub param_precision: u64,
    pub e_ref: f64,
    pub alpha_used: f64,
    pub total_kept: u64,
    pub total_error: f64,
    pub grid: CandidateGrid,
    pub jitter_rel: f64,
    pub layers: IndexMap<String, PlanEntry>,
}

fn whiteners(
    model: &LoadedModel,
    jitter_rel: f64,
    exec: Execution,
) -> Result<Vec<WhitenTransform>> {
    let idx: Vec<usize> = (0..model.weights.len()).collect();
    exec.try_map(&idx, |&i| {
        let name = &model.manifest.layers[i].name;
        match &model.grams[i] {
            Some(g) => build_whitener(g, jitter_rel).map_err(|e| e.in_layer(name)),
            None => Err(Error::InvalidArgument(format!(
                "layer `{name}` has no Gram; run the gram stage first"
            ))),
        }
    })
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, headers.to_vec());
    line(
        &mut out,
        widths
            .iter()
            .map(|&w| "-".repeat(w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for r in rows {
        line(&mut out, r.iter().map(String::as_str).collect());
    }
    out
}

/// Directory holding one layer's activation dumps.
fn activation_dir(root: &Path, name: &str) -> Result<PathBuf> {
    if name.is_empty() || name == "." || name == ".." || name.contains(['/', '\\']) {
        return Err(Error::InvalidArgument(format!(
            "layer name `{name}` cannot be used as a directory name"
        )));
    }
    Ok(root.join(name))
}

/// Sorted `*.bin` files of a directory.
fn list_shards(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "bin") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Activations of one layer, all shards stacked in file order.
pub fn load_activations(root: &Path, name: &str, d1: usize) -> Result<Vec<Mat>> {
    let dir = activation_dir(root, name)?;
    let files = list_shards(&dir)?;
    if files.is_empty() {
        return Err(Error::format(&dir, "no activation dumps"));
    }
    files
        .iter()
        .map(|f| {
            let x = store::read_matrix(f)?;
            if x.ncols() != d1 {
                return Err(Error::dims(
                    name,
                    format!("{} has {} columns, expected {d1}", f.display(), x.ncols()),
                ));
            }
            Ok(x)
        })
        .collect()
}

/// `sum_s X_s^T X_s`, symmetrized, plus the row count.
pub fn accumulate_gram(shards: &[Mat], d1: usize) -> (Mat, u64) {
    let mut a = Mat::zeros(d1, d1);
    let mut n = 0u64;
    for x in shards {
        a += x.tr_mul(x);
        n += x.nrows() as u64;
    }
    let a = (&a + a.transpose()) * 0.5;
    (a, n)
}

/// Writes `grams/<stem>.gram.bin` for every layer and records the references
/// and calibration row counts in the manifest, which is rewritten in place.
pub fn cmd_gram(manifest_path: &Path, activations_dir: &Path) -> Result<ModelManifest> {
    let mut manifest: ModelManifest = store::read_json(manifest_path)?;
    let root = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let gdir = root.join("grams");
    fs::create_dir_all(&gdir).map_err(|e| Error::io(&gdir, e))?;
    for (i, l) in manifest.layers.iter_mut().enumerate() {
        let shards =
            load_activations(activations_dir, &l.name, l.d1).map_err(|e| e.in_layer(&l.name))?;
        let (a, n) = accumulate_gram(&shards, l.d1);
        let gram_ref = format!("grams/{}.gram.bin", store::file_stem(i, &l.name));
        store::write_matrix(&root.join(&gram_ref), &a, DType::F64)?;
        l.gram_ref = Some(gram_ref);
        l.calib_rows = Some(n);
    }
    store::write_json(manifest_path, &manifest)?;
    // Reload to run the shape and symmetry checks on what was written.
    store::load_model(manifest_path)?;
    Ok(manifest)
}

pub fn cmd_profile(manifest_path: &Path, cfg: &RunConfig, out: &Path) -> Result<ProfileDoc> {
    cfg.validate()?;
    let model = store::load_model(manifest_path)?;
    let ts = whiteners(&model, cfg.jitter_rel, cfg.execution)?;
    let names: Vec<String> = model
        .manifest
        .layers
        .iter()
        .map(|l| l.name.clone())
        .collect();
    let layers = profile_model(&names, &model.weights, &ts, &cfg.grid, cfg.execution)?;
    let doc = ProfileDoc {
        format_version: FORMAT_VERSION,
        grid: cfg.grid.clone(),
        jitter_rel: cfg.jitter_rel,
        layers,
    };
    store::write_json(out, &doc)?;
    Ok(doc)
}

/// Solves the allocation for a profile document. `cfg.grid` is ignored; the
/// profile's own grid is carried into the plan.
pub fn allocate(profile: &ProfileDoc, cfg: &RunConfig) -> Result<PlanDoc> {
    cfg.validate()?;
    let sets = &profile.layers;
    let p_total: u64 = sets.iter().map(OptionSet::full_cost).sum();
    let budget_kept = cfg.budget_kept(p_total);
    let e_ref = reference_error(sets, cfg.target_cr)?;
    let inst =
        MckpInstance::from_option_sets(sets, budget_kept, cfg.alpha, e_ref, cfg.param_precision);
    let plan = solve_dp(&inst)?;
    if plan.total_kept > budget_kept {
        return Err(Error::numerical(
            "",
            format!("plan keeps {} > budget {budget_kept}", plan.total_kept),
        ));
    }
    let layers = sets
        .iter()
        .zip(&plan.choices)
        .map(|(s, &i)| {
            let o = &s.options[i];
            (
                s.name.clone(),
                PlanEntry {
                    d1: s.d1,
                    d2: s.d2,
                    rank_k: o.rank_k,
                    s: o.s,
                    cost: o.cost,
                    error: o.error,
                },
            )
        })
        .collect();
    Ok(PlanDoc {
        format_version: FORMAT_VERSION,
        target_cr: cfg.target_cr,
        p_total,
        budget_kept,
        param_precision: cfg.param_precision,
        e_ref,
        alpha_used: plan.alpha_used,
        total_kept: plan.total_kept,
        total_error: plan.total_error,
        grid: profile.grid.clone(),
        jitter_rel: profile.jitter_rel,
        layers,
    })
}

pub fn plan_table(plan: &PlanDoc) -> String {
    let rows: Vec<Vec<String>> = plan
        .layers
        .iter()
        .map(|(name, e)| {
            let (k, s) = if e.rank_k == 0 {
                ("dense".to_string(), "-".to_string())
            } else {
                (e.rank_k.to_string(), e.s.to_string())
            };
            vec![
                name.clone(),
                k,
                s,
                e.cost.to_string(),
                format!("{:.6}", e.error),
            ]
        })
        .collect();
    let mut out = table(&["layer", "k", "s", "cost", "error"], &rows);
    let _ = writeln!(
        out,
        "total kept {} / budget {} / P_total {}  total error {:.6}  e_ref {:.6}  alpha {:.4}",
        plan.total_kept,
        plan.budget_kept,
        plan.p_total,
        plan.total_error,
        plan.e_ref,
        plan.alpha_used
    );
    out
}

pub fn cmd_allocate(profile_path: &Path, cfg: &RunConfig, out: &Path) -> Result<PlanDoc> {
    let profile: ProfileDoc = store::read_json(profile_path)?;
    let plan = allocate(&profile, cfg)?;
    store::write_json(out, &plan)?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressReport {
    pub manifest: PathBuf,
    pub p_total: u64,
    pub budget_kept: u64,
    pub total_kept: u64,
    /// `1 - total_kept / P_total`.
    pub achieved_ratio: f64,
    pub target_cr: f64,
}

/// Rebuilds every planned factorization and writes the compressed model.
pub fn cmd_compress(
    manifest_path: &Path,
    plan_path: &Path,
    out_dir: &Path,
    exec: Execution,
) -> Result<CompressReport> {
    let plan: PlanDoc = store::read_json(plan_path)?;
    let model = store::load_model(manifest_path)?;
    let ml = &model.manifest.layers;
    if ml.len() != plan.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "plan has {} layers, manifest {}",
            plan.layers.len(),
            ml.len()
        )));
    }
    for (l, (name, e)) in ml.iter().zip(&plan.layers) {
        if &l.name != name || (l.d1, l.d2) != (e.d1, e.d2) {
            return Err(Error::InvalidArgument(format!(
                "plan layer `{name}` ({}x{}) does not match manifest layer `{}` ({}x{})",
                e.d1, e.d2, l.name, l.d1, l.d2
            )));
        }
    }
    let idx: Vec<usize> = (0..ml.len()).collect();
    let layers: Vec<ModelLayer> = exec.try_map(&idx, |&i| {
        let (name, e) = plan.layers.get_index(i).unwrap();
        let w = &model.weights[i];
        if e.rank_k == 0 {
            return Ok(ModelLayer::Dense(w.clone()));
        }
        let gram = model.grams[i]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("layer `{name}` has no Gram")))?;
        let t = build_whitener(gram, plan.jitter_rel).map_err(|err| err.in_layer(name))?;
        let out = regenerate(w, &t, e.rank_k, e.s, &plan.grid).map_err(|err| err.in_layer(name))?;
        if out.factorization.cost() != e.cost {
            return Err(Error::InvalidArgument(format!(
                "layer `{name}`: rebuilt cost {} differs from planned {}",
                out.factorization.cost(),
                e.cost
            )));
        }
        if (out.error - e.error).abs() > 1e-9 * e.error.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "layer `{name}`: rebuilt error {} differs from planned {}; inputs changed since profiling?",
                out.error, e.error
            )));
        }
        let f = out.factorization;
        Ok(ModelLayer::Factored(CompressedLayer::new(f.u, f.c_sparse).map_err(|err| err.in_layer(name))?))
    })?;
    let outputs: Vec<LayerOutput<'_>> = plan
        .layers
        .iter()
        .zip(&layers)
        .map(|((name, e), layer)| LayerOutput {
            name,
            layer,
            rank_k: e.rank_k,
            s: e.s,
            error: e.error,
        })
        .collect();
    let alloc = crate::allocator::AllocationPlan {
        choices: vec![0; layers.len()],
        total_kept: plan.total_kept,
        total_error: plan.total_error,
        alpha_used: plan.alpha_used,
    };
    let manifest = store::save_compressed(&alloc, &outputs, out_dir)?;
    let total_kept: u64 = layers.iter().map(ModelLayer::param_count).sum();
    let p_total = model.manifest.total_params();
    if total_kept > plan.budget_kept {
        return Err(Error::numerical(
            "",
            format!(
                "compressed model keeps {total_kept} > budget {}",
                plan.budget_kept
            ),
        ));
    }
    Ok(CompressReport {
        manifest,
        p_total,
        budget_kept: plan.budget_kept,
        total_kept,
        achieved_ratio: 1.0 - total_kept as f64 / p_total as f64,
        target_cr: plan.target_cr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLayer {
    pub name: String,
    pub kind: String,
    pub params: u64,
    pub dense_params: u64,
    pub flops: u64,
    pub dense_flops: u64,
    pub weight: ErrorReport,
    /// `|X W - X W~|_F / |X W|_F` on the probe.
    pub activation_rel: f64,
    /// Condition number of the probe's whitening factor.
    pub cond_l: f64,
    /// `cond_l * weight.frobenius_rel`, an upper bound on `activation_rel`.
    pub activation_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub probe_rows: Vec<usize>,
    pub total_params: u64,
    pub total_dense_params: u64,
    pub total_flops: u64,
    pub total_dense_flops: u64,
    pub layers: Vec<EvalLayer>,
}

/// Probe source for [`cmd_eval`].
#[derive(Debug, Clone)]
pub enum Probe {
    /// Activation dumps laid out as for the gram stage.
    Dumps(PathBuf),
    /// Gaussian rows from a seeded generator.
    Random { rows: usize, seed: u64 },
}

pub fn cmd_eval(
    manifest_path: &Path,
    compressed_dir: &Path,
    probe: &Probe,
    exec: Execution,
) -> Result<EvalReport> {
    let model = store::load_model(manifest_path)?;
    let comp = store::load_compressed(compressed_dir)?;
    if comp.layers.len() != model.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "compressed model has {} layers, original {}",
            comp.layers.len(),
            model.weights.len()
        )));
    }
    for ((l, c), e) in model
        .manifest
        .layers
        .iter()
        .zip(&comp.layers)
        .zip(&comp.manifest.layers)
    {
        if e.name() != l.name || c.dims() != (l.d1, l.d2) {
            return Err(Error::dims(
                &l.name,
                format!("compressed layer `{}` is {:?}", e.name(), c.dims()),
            ));
        }
    }
    let inputs: Vec<Mat> = match probe {
        Probe::Dumps(dir) => model
            .manifest
            .layers
            .iter()
            .map(|l| {
                let shards =
                    load_activations(dir, &l.name, l.d1).map_err(|e| e.in_layer(&l.name))?;
                let rows: usize = shards.iter().map(Mat::nrows).sum();
                let mut x = Mat::zeros(rows, l.d1);
                let mut r = 0;
                for s in &shards {
                    x.rows_mut(r, s.nrows()).copy_from(s);
                    r += s.nrows();
                }
                Ok(x)
            })
            .collect::<Result<_>>()?,
        Probe::Random { rows, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            model
                .manifest
                .layers
                .iter()
                .map(|l| synth::randn(&mut rng, *rows, l.d1))
                .collect()
        }
    };
    let dense: Vec<ModelLayer> = model
        .weights
        .iter()
        .cloned()
        .map(ModelLayer::Dense)
        .collect();
    let y_ref = forward_all(&dense, &inputs, exec)?;
    let y = forward_all(&comp.layers, &inputs, exec)?;
    let idx: Vec<usize> = (0..dense.len()).collect();
    let layers = exec.try_map(&idx, |&i| {
        let name = &model.manifest.layers[i].name;
        let w = &model.weights[i];
        let c = &comp.layers[i];
        let n = inputs[i].nrows();
        let weight = error_report(w, &c.to_dense()).map_err(|e| e.in_layer(name))?;
        let denom = y_ref[i].norm();
        let activation_rel = if denom > 0.0 {
            (&y_ref[i] - &y[i]).norm() / denom
        } else {
            0.0
        };
        let gram = accumulate_gram(std::slice::from_ref(&inputs[i]), w.nrows()).0;
        let cond_l = build_whitener(&gram, DEFAULT_JITTER_REL)
            .map(|t| t.condition_number())
            .unwrap_or(f64::INFINITY);
        Ok::<_, Error>(EvalLayer {
            name: name.clone(),
            kind: match c {
                ModelLayer::Dense(_) => "dense".into(),
                ModelLayer::Factored(_) => "factored".into(),
            },
            params: c.param_count(),
            dense_params: (w.nrows() * w.ncols()) as u64,
            flops: c.flop_count(n),
            dense_flops: dense[i].flop_count(n),
            weight,
            activation_rel,
            cond_l,
            activation_bound: cond_l * weight.frobenius_rel,
        })
    })?;
    Ok(EvalReport {
        probe_rows: inputs.iter().map(Mat::nrows).collect(),
        total_params: layers.iter().map(|l| l.params).sum(),
        total_dense_params: layers.iter().map(|l| l.dense_params).sum(),
        total_flops: layers.iter().map(|l| l.flops).sum(),
        total_dense_flops: layers.iter().map(|l| l.dense_flops).sum(),
        layers,
    })
}

pub fn eval_table(r: &EvalReport) -> String {
    let rows: Vec<Vec<String>> = r
        .layers
        .iter()
        .map(|l| {
            vec![
                l.name.clone(),
                l.kind.clone(),
                format!("{}/{}", l.params, l.dense_params),
                format!("{}/{}", l.flops, l.dense_flops),
                format!("{:.3e}", l.weight.frobenius_rel),
                format!("{:.3e}", l.weight.spectral_abs),
                format!("{:.3e}", l.weight.mean_cos_cols),
                format!("{:.3e}", l.activation_rel),
                format!("{:.3e}", l.activation_bound),
            ]
        })
        .collect();
    let mut out = table(
        &[
            "layer",
            "kind",
            "params",
            "flops",
            "frob_rel",
            "spectral",
            "1-cos",
            "act_rel",
            "act_bound",
        ],
        &rows,
    );
    let _ = writeln!(
        out,
        "params {}/{} ({:.2}%)  flops {}/{} ({:.2}%)",
        r.total_params,
        r.total_dense_params,
        100.0 * r.total_params as f64 / r.total_dense_params as f64,
        r.total_flops,
        r.total_dense_flops,
        100.0 * r.total_flops as f64 / r.total_dense_flops.max(1) as f64
    );
    out
}

/// Writes a synthetic model and its Grams; returns the manifest path.
pub fn cmd_synth(out_dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    let manifest = synth::write_model(out_dir, spec)?;
    cmd_gram(&manifest, &out_dir.join("activations"))?;
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "sparsedict",
    version,
    about = "Whitened dictionary x sparse-coefficient weight compression"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accumulate per-layer Grams from activation dumps (<dir>/<layer>/*.bin).
    Gram {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        activations: PathBuf,
    },
    /// Evaluate the candidate grid for every layer.
    Profile {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Choose one option per layer under the global budget.
    Allocate {
        #[arg(long)]
        options: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Materialize the planned factorizations.
    Compress {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
    /// Compare a compressed model with the original.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        compressed: PathBuf,
        /// Activation dumps to use as probe inputs; random rows otherwise.
        #[arg(long)]
        probe: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        probe_rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Write a synthetic model with activation dumps and Grams.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use only the first N layer shapes.
        #[arg(long)]
        layers: Option<usize>,
    },
}

/// Overrides applied on top of the config file (or defaults).
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON RunConfig file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub cr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub rank_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ks_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub param_precision: Option<u64>,
    #[arg(long)]
    pub error_metric: Option<ErrorMetric>,
    #[arg(long)]
    pub mode: Option<SparsifyMode>,
    /// Cap multiplier or `auto`.
    #[arg(long)]
    pub alpha: Option<Alpha>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub sequential: bool,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => store::read_json::<RunConfig>(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.cr {
            c.target_cr = v;
        }
        if let Some(v) = &self.rank_grid {
            c.grid.rank_fracs = v.clone();
        }
        if let Some(v) = &self.ks_grid {
            c.grid.ks_fracs = v.clone();
        }
        if let Some(v) = self.lambda {
            c.grid.lambda = v;
        }
        if let Some(v) = self.beta {
            c.grid.beta_margin = v;
        }
        if let Some(v) = self.mu {
            c.grid.mu = v;
        }
        if let Some(v) = self.param_precision {
            c.param_precision = v;
        }
        if let Some(v) = self.error_metric {
            c.grid.error_metric = v;
        }
        if let Some(v) = self.mode {
            c.grid.sparsify_mode = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.jitter {
            c.jitter_rel = v;
        }
        if self.sequential {
            c.execution = Execution::Sequential;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exec_of(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Runs one parsed command, printing its report to stdout.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gram {
            manifest,
            activations,
        } => {
            let m = cmd_gram(&manifest, &activations)?;
            for l in &m.layers {
                println!(
                    "{}: {} rows -> {}",
                    l.name,
                    l.calib_rows.unwrap_or(0),
                    l.gram_ref.as_deref().unwrap_or("")
                );
            }
        }
        Command::Profile { manifest, out, cfg } => {
            let cfg = cfg.resolve()?;
            let doc = cmd_profile(&manifest, &cfg, &out)?;
            for s in &doc.layers {
                println!(
                    "{}: {} candidates, {} distinct options",
                    s.name,
                    s.candidates_evaluated,
                    s.options.len()
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Allocate { options, out, cfg } => {
            let cfg = cfg.resolve()?;
            let plan = cmd_allocate(&options, &cfg, &out)?;
            print!("{}", plan_table(&plan));
            println!("wrote {}", out.display());
        }
        Command::Compress {
            manifest,
            plan,
            out,
            sequential,
        } => {
            let r = cmd_compress(&manifest, &plan, &out, exec_of(sequential))?;
            println!(
                "kept {} of {} (budget {}); achieved ratio {:.4}, target {:.4}",
                r.total_kept, r.p_total, r.budget_kept, r.achieved_ratio, r.target_cr
            );
            println!("wrote {}", r.manifest.display());
        }
        Command::Eval {
            manifest,
            compressed,
            probe,
            probe_rows,
            seed,
            json,
            sequential,
        } => {
            let probe = match probe {
                Some(p) => Probe::Dumps(p),
                None => Probe::Random {
                    rows: probe_rows,
                    seed,
                },
            };
            let r = cmd_eval(&manifest, &compressed, &probe, exec_of(sequential))?;
            print!("{}", eval_table(&r));
            if let Some(p) = json {
                store::write_json(&p, &r)?;
            }
        }
        Command::Synth { out, seed, layers } => {
            let mut spec = SynthSpec {
                seed,
                ..SynthSpec::default()
            };
            if let Some(n) = layers {
                if n == 0 || n > spec.dims.len() {
                    return Err(Error::InvalidArgument(format!(
                        "--layers must lie in 1..={}",
                        spec.dims.len()
                    )));
                }
                spec.dims.truncate(n);
            }
            let m = cmd_synth(&out, &spec)?;
            println!("wrote {}", m.display());
        }
    }
    Ok(())
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
