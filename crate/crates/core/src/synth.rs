//! Deterministic synthetic models for tests, benches and demos.
//!
//! Weights are low-rank with a decaying spectrum plus dense noise, so the
//! profiler sees a realistic error/cost trade-off. Calibration activations are
//! `X = Z M` with `M` an anisotropic mixing matrix, giving a non-trivial Gram.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::store::{self, DType, LayerEntry, ModelManifest, FORMAT_VERSION};
use crate::{Error, Mat, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// `(d1, d2)` per layer.
    pub dims: Vec<(usize, usize)>,
    /// Calibration rows per layer.
    pub calib_rows: usize,
    /// Activation dump files per layer; rows are split evenly.
    pub shards: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: vec![
                (32, 64),
                (64, 32),
                (48, 96),
                (96, 48),
                (64, 64),
                (128, 96),
                (96, 128),
                (80, 80),
            ],
            calib_rows: 256,
            shards: 2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Same generator with the first `n` layer shapes.
    pub fn with_layers(n: usize) -> Self {
        let mut s = Self::default();
        s.dims.truncate(n);
        s
    }
}

#[derive(Debug, Clone)]
pub struct SynthLayer {
    pub name: String,
    pub w: Mat,
    pub x: Mat,
}

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn layer_name(i: usize) -> String {
    const KINDS: [&str; 4] = ["attn_in", "attn_out", "mlp_up", "mlp_down"];
    format!("block{}.{}", i / KINDS.len(), KINDS[i % KINDS.len()])
}

/// Low-rank-plus-noise weight with singular-value decay.
pub fn synth_weight(rng: &mut ChaCha8Rng, d1: usize, d2: usize) -> Mat {
    let r = d1.min(d2);
    let a = randn(rng, d1, r);
    let mut b = randn(rng, r, d2);
    for (i, mut row) in b.row_iter_mut().enumerate() {
        row *= (-(i as f64) / (0.15 * r as f64)).exp();
    }
    let noise = randn(rng, d1, d2) * 0.02;
    (a * b) / (d1 as f64).sqrt() + noise
}

/// Correlated activations `Z M` with per-feature scales spanning two decades.
pub fn synth_activations(rng: &mut ChaCha8Rng, n: usize, d1: usize) -> Mat {
    let z = randn(rng, n, d1);
    let mut m = randn(rng, d1, d1) * (0.3 / (d1 as f64).sqrt());
    for i in 0..d1 {
        m[(i, i)] += 10f64.powf(-2.0 * i as f64 / d1 as f64 + 0.5);
    }
    z * m
}

pub fn generate(spec: &SynthSpec) -> Vec<SynthLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    spec.dims
        .iter()
        .enumerate()
        .map(|(i, &(d1, d2))| {
            let w = synth_weight(&mut rng, d1, d2);
            let x = synth_activations(&mut rng, spec.calib_rows, d1);
            SynthLayer {
                name: layer_name(i),
                w,
                x,
            }
        })
        .collect()
}

/// Writes `manifest.json`, `weights/*.bin` (f32) and activation dumps under
/// `activations/<layer name>/shard_NNN.bin` (f64). No Grams are written; run
/// the gram stage to produce them. Returns the manifest path.
pub fn write_model(dir: &Path, spec: &SynthSpec) -> Result<PathBuf> {
    if spec.shards == 0 || spec.shards > spec.calib_rows {
        return Err(Error::InvalidArgument(format!(
            "shards must lie in 1..={}, got {}",
            spec.calib_rows, spec.shards
        )));
    }
    let layers = generate(spec);
    let wdir = dir.join("weights");
    fs::create_dir_all(&wdir).map_err(|e| Error::io(&wdir, e))?;
    let mut entries = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        let weight_ref = format!("weights/{}.bin", store::file_stem(i, &l.name));
        store::write_matrix(&dir.join(&weight_ref), &l.w, DType::F32)?;
        let adir = dir.join("activations").join(&l.name);
        fs::create_dir_all(&adir).map_err(|e| Error::io(&adir, e))?;
        let n = l.x.nrows();
        for s in 0..spec.shards {
            let (lo, hi) = (s * n / spec.shards, (s + 1) * n / spec.shards);
            let shard = l.x.rows(lo, hi - lo).into_owned();
            store::write_matrix(&adir.join(format!("shard_{s:03}.bin")), &shard, DType::F64)?;
        }
        entries.push(LayerEntry {
            name: l.name.clone(),
            d1: l.w.nrows(),
            d2: l.w.ncols(),
            weight_ref,
            gram_ref: None,
            calib_rows: None,
        });
    }
    let path = dir.join("manifest.json");
    store::write_json(
        &path,
        &ModelManifest {
            format_version: FORMAT_VERSION,
            layers: entries,
        },
    )?;
    Ok(path)
}
