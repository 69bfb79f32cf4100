//! On-disk formats: the JSON model manifest, dense tensor files, column-sparse
//! files and the compressed-model manifest.
//!
//! Dense tensor file (little-endian):
//!
//! ```text
//! magic      8 bytes  "RKTENSR\0"
//! dtype      u8       0 = f32, 1 = f64
//! ndim       u8       1 or 2
//! dims       ndim x u64
//! payload    row-major elements
//! ```
//!
//! Sparse file: same magic, dtype code 2, ndim 2, then `k` and `d2` as u64,
//! `col_ptr` ((d2 + 1) x u64), `row_idx` (nnz x u32), `values` (nnz x f64).

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::runtime::{CompressedLayer, ModelLayer};
use crate::sparse::SparseColumns;
use crate::{Error, Mat, Result};

pub const MAGIC: &[u8; 8] = b"RKTENSR\0";
pub const FORMAT_VERSION: u32 = 1;
const SPARSE_DTYPE_CODE: u8 = 2;

/// Relative tolerance for Gram symmetry, `|A - A^T|_F <= tol * |A|_F`.
pub const GRAM_SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: DType,
    pub dims: Vec<u64>,
}

/// A decoded dense tensor, widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub header: TensorHeader,
    pub data: Vec<f64>,
}

impl Tensor {
    /// Interprets the tensor as a matrix; 1-D tensors become a single row.
    pub fn into_matrix(self) -> Mat {
        let (rows, cols) = match self.header.dims[..] {
            [n] => (1, n as usize),
            [r, c] => (r as usize, c as usize),
            _ => unreachable!("ndim validated on decode"),
        };
        Mat::from_row_slice(rows, cols, &self.data)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                format!(
                    "truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.buf.len() - self.pos
                )
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_magic(r: &mut Reader<'_>) -> std::result::Result<(), String> {
    let m = r.take(8)?;
    if m != MAGIC {
        return Err(format!("bad magic {:?}", String::from_utf8_lossy(m)));
    }
    Ok(())
}

pub fn encode_tensor(m: &Mat, dtype: DType) -> Vec<u8> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(8 + 2 + 16 + rows * cols * dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(dtype.code());
    out.push(2);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            match dtype {
                DType::F32 => out.extend_from_slice(&(m[(i, j)] as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&m[(i, j)].to_le_bytes()),
            }
        }
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> std::result::Result<Tensor, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    read_magic(&mut r)?;
    let dtype = match r.u8()? {
        0 => DType::F32,
        1 => DType::F64,
        SPARSE_DTYPE_CODE => return Err("sparse file where a dense tensor was expected".into()),
        c => return Err(format!("unknown dtype code {c}")),
    };
    let ndim = r.u8()?;
    if !(1..=2).contains(&ndim) {
        return Err(format!("ndim {ndim} not in {{1, 2}}"));
    }
    let dims = (0..ndim)
        .map(|_| r.u64())
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let count = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or("element count overflows")?;
    let expect = count
        .checked_mul(dtype.size())
        .ok_or("payload size overflows")?;
    if r.remaining() != expect {
        return Err(format!(
            "payload is {} bytes, dims {:?} require {expect}",
            r.remaining(),
            dims
        ));
    }
    let payload = r.take(expect)?;
    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(Tensor {
        header: TensorHeader { dtype, dims },
        data,
    })
}

pub fn encode_sparse(v: &SparseColumns) -> Vec<u8> {
    let mut out = Vec::with_capacity(26 + v.col_ptr().len() * 8 + v.nnz() * 12);
    out.extend_from_slice(MAGIC);
    out.push(SPARSE_DTYPE_CODE);
    out.push(2);
    out.extend_from_slice(&(v.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(v.cols() as u64).to_le_bytes());
    for p in v.col_ptr() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for r in v.row_idx() {
        out.extend_from_slice(&r.to_le_bytes());
    }
    for x in v.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_sparse(bytes: &[u8]) -> std::result::Result<SparseColumns, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    read_magic(&mut r)?;
    let code = r.u8()?;
    if code != SPARSE_DTYPE_CODE {
        return Err(format!(
            "dtype code {code}, expected sparse code {SPARSE_DTYPE_CODE}"
        ));
    }
    let ndim = r.u8()?;
    if ndim != 2 {
        return Err(format!("sparse ndim {ndim}, expected 2"));
    }
    let k = usize::try_from(r.u64()?).map_err(|_| "k overflows")?;
    let d2 = usize::try_from(r.u64()?).map_err(|_| "d2 overflows")?;
    let ptr_len = d2.checked_add(1).ok_or("d2 overflows")?;
    if ptr_len.checked_mul(8).is_none_or(|n| n > r.remaining()) {
        return Err("truncated col_ptr".into());
    }
    let col_ptr: Vec<u64> = (0..ptr_len)
        .map(|_| r.u64())
        .collect::<std::result::Result<_, _>>()?;
    let nnz = usize::try_from(col_ptr[d2]).map_err(|_| "nnz overflows")?;
    if nnz.checked_mul(12) != Some(r.remaining()) {
        return Err(format!(
            "payload is {} bytes, nnz {nnz} requires {}",
            r.remaining(),
            nnz.saturating_mul(12)
        ));
    }
    let row_idx = r
        .take(nnz * 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let values = r
        .take(nnz * 8)?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SparseColumns::from_parts(k, d2, col_ptr, row_idx, values).map_err(|e| e.to_string())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    decode_tensor(&read_bytes(path)?).map_err(|why| Error::format(path, why))
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let t = read_tensor(path)?;
    if t.header.dims.len() != 2 {
        return Err(Error::format(path, "expected a 2-D tensor"));
    }
    Ok(t.into_matrix())
}

pub fn write_matrix(path: &Path, m: &Mat, dtype: DType) -> Result<()> {
    write_bytes(path, &encode_tensor(m, dtype))
}

pub fn read_sparse(path: &Path) -> Result<SparseColumns> {
    decode_sparse(&read_bytes(path)?).map_err(|why| Error::format(path, why))
}

pub fn write_sparse(path: &Path, v: &SparseColumns) -> Result<()> {
    write_bytes(path, &encode_sparse(v))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Pretty JSON with a trailing newline; output is deterministic for a given value.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    /// Input dimension (rows of W).
    pub d1: usize,
    /// Output dimension (columns of W).
    pub d2: usize,
    pub weight_ref: String,
    #[serde(default)]
    pub gram_ref: Option<String>,
    /// Calibration rows accumulated into the Gram, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calib_rows: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub layers: Vec<LayerEntry>,
}

impl ModelManifest {
    /// Count of all compressible weight entries.
    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| (l.d1 * l.d2) as u64).sum()
    }

    fn validate(&self, path: &Path) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.layers {
            if !seen.insert(l.name.as_str()) {
                return Err(Error::format(
                    path,
                    format!("duplicate layer name `{}`", l.name),
                ));
            }
            if l.d1 == 0 || l.d2 == 0 {
                return Err(Error::dims(
                    &l.name,
                    format!("zero dimension {}x{}", l.d1, l.d2),
                ));
            }
        }
        Ok(())
    }
}

/// A manifest with every referenced tensor loaded as f64.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub manifest: ModelManifest,
    pub manifest_path: PathBuf,
    pub weights: Vec<Mat>,
    pub grams: Vec<Option<Mat>>,
}

impl LoadedModel {
    pub fn root(&self) -> &Path {
        self.manifest_path.parent().unwrap_or(Path::new("."))
    }
}

pub fn relative_asymmetry(a: &Mat) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

pub fn resolve(root: &Path, reference: &str) -> PathBuf {
    root.join(reference)
}

pub fn load_model(manifest_path: &Path) -> Result<LoadedModel> {
    let manifest: ModelManifest = read_json(manifest_path)?;
    manifest.validate(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut weights = Vec::with_capacity(manifest.layers.len());
    let mut grams = Vec::with_capacity(manifest.layers.len());
    for l in &manifest.layers {
        let w = read_matrix(&resolve(root, &l.weight_ref)).map_err(|e| e.in_layer(&l.name))?;
        if w.shape() != (l.d1, l.d2) {
            return Err(Error::dims(
                &l.name,
                format!(
                    "weight file is {}x{}, manifest says {}x{}",
                    w.nrows(),
                    w.ncols(),
                    l.d1,
                    l.d2
                ),
            ));
        }
        weights.push(w);
        let gram = match &l.gram_ref {
            None => None,
            Some(g) => {
                let a = read_matrix(&resolve(root, g)).map_err(|e| e.in_layer(&l.name))?;
                if a.shape() != (l.d1, l.d1) {
                    return Err(Error::dims(
                        &l.name,
                        format!(
                            "gram file is {}x{}, expected {}x{}",
                            a.nrows(),
                            a.ncols(),
                            l.d1,
                            l.d1
                        ),
                    ));
                }
                let asym = relative_asymmetry(&a);
                if asym > GRAM_SYMMETRY_TOL {
                    return Err(Error::NonSymmetricGram {
                        layer: l.name.clone(),
                        asym,
                    });
                }
                Some(a)
            }
        };
        grams.push(gram);
    }
    Ok(LoadedModel {
        manifest,
        manifest_path: manifest_path.to_path_buf(),
        weights,
        grams,
    })
}

/// File-name-safe form of a layer name, prefixed with its position.
pub fn file_stem(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:04}_{clean}")
}

/// One layer entry in a compressed-model manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressedEntry {
    /// Kept dense: the identity option.
    Dense {
        name: String,
        d1: usize,
        d2: usize,
        cost: u64,
        error: f64,
        weight_ref: String,
    },
    Factored {
        name: String,
        d1: usize,
        d2: usize,
        rank_k: usize,
        s: usize,
        nnz: u64,
        cost: u64,
        error: f64,
        u_ref: String,
        v_ref: String,
    },
}

impl CompressedEntry {
    pub fn name(&self) -> &str {
        match self {
            CompressedEntry::Dense { name, .. } | CompressedEntry::Factored { name, .. } => name,
        }
    }

    pub fn cost(&self) -> u64 {
        match self {
            CompressedEntry::Dense { cost, .. } | CompressedEntry::Factored { cost, .. } => *cost,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            CompressedEntry::Dense { d1, d2, .. } | CompressedEntry::Factored { d1, d2, .. } => {
                (*d1, *d2)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedManifest {
    pub format_version: u32,
    pub total_params: u64,
    pub total_kept: u64,
    pub total_error: f64,
    pub alpha_used: f64,
    pub layers: Vec<CompressedEntry>,
}

/// What to write for one layer of a compressed model.
#[derive(Debug, Clone, Copy)]
pub struct LayerOutput<'a> {
    pub name: &'a str,
    pub layer: &'a ModelLayer,
    /// Rank and per-column nnz of the chosen option (ignored for dense layers).
    pub rank_k: usize,
    pub s: usize,
    pub error: f64,
}

pub const COMPRESSED_MANIFEST: &str = "manifest.json";

/// Writes the compressed manifest plus one `U` tensor and one sparse `V` file
/// per factored layer (dense layers keep a single weight tensor). Returns the
/// manifest path.
pub fn save_compressed(
    plan: &crate::allocator::AllocationPlan,
    layers: &[LayerOutput<'_>],
    out_dir: &Path,
) -> Result<PathBuf> {
    if plan.choices.len() != layers.len() {
        return Err(Error::InvalidArgument(format!(
            "plan has {} layers, {} factorizations given",
            plan.choices.len(),
            layers.len()
        )));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(layers.len());
    let mut total_params = 0u64;
    for (i, out) in layers.iter().enumerate() {
        let stem = file_stem(i, out.name);
        let (d1, d2) = out.layer.dims();
        total_params += (d1 * d2) as u64;
        let entry = match out.layer {
            ModelLayer::Dense(w) => {
                let weight_ref = format!("{stem}.w.bin");
                write_matrix(&out_dir.join(&weight_ref), w, DType::F64)?;
                CompressedEntry::Dense {
                    name: out.name.to_string(),
                    d1,
                    d2,
                    cost: (d1 * d2) as u64,
                    error: out.error,
                    weight_ref,
                }
            }
            ModelLayer::Factored(c) => {
                if c.u().ncols() > u32::MAX as usize + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "layer `{}`: rank {} overflows the 32-bit row index space",
                        out.name,
                        c.u().ncols()
                    )));
                }
                let u_ref = format!("{stem}.u.bin");
                let v_ref = format!("{stem}.v.bin");
                write_matrix(&out_dir.join(&u_ref), c.u(), DType::F64)?;
                write_sparse(&out_dir.join(&v_ref), c.v())?;
                CompressedEntry::Factored {
                    name: out.name.to_string(),
                    d1,
                    d2,
                    rank_k: out.rank_k,
                    s: out.s,
                    nnz: c.v().nnz() as u64,
                    cost: c.param_count(),
                    error: out.error,
                    u_ref,
                    v_ref,
                }
            }
        };
        entries.push(entry);
    }
    let manifest = CompressedManifest {
        format_version: FORMAT_VERSION,
        total_params,
        total_kept: entries.iter().map(CompressedEntry::cost).sum(),
        total_error: plan.total_error,
        alpha_used: plan.alpha_used,
        layers: entries,
    };
    let path = out_dir.join(COMPRESSED_MANIFEST);
    write_json(&path, &manifest)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct CompressedModel {
    pub manifest: CompressedManifest,
    pub layers: Vec<ModelLayer>,
}

/// Loads a directory written by [`save_compressed`].
pub fn load_compressed(dir: &Path) -> Result<CompressedModel> {
    let path = dir.join(COMPRESSED_MANIFEST);
    let manifest: CompressedManifest = read_json(&path)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &path,
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for e in &manifest.layers {
        let layer = match e {
            CompressedEntry::Dense {
                name,
                d1,
                d2,
                weight_ref,
                ..
            } => {
                let w = read_matrix(&dir.join(weight_ref)).map_err(|err| err.in_layer(name))?;
                if w.shape() != (*d1, *d2) {
                    return Err(Error::dims(
                        name,
                        format!("dense weight is {:?}, expected {d1}x{d2}", w.shape()),
                    ));
                }
                ModelLayer::Dense(w)
            }
            CompressedEntry::Factored {
                name,
                d1,
                d2,
                rank_k,
                nnz,
                u_ref,
                v_ref,
                ..
            } => {
                let u = read_matrix(&dir.join(u_ref)).map_err(|err| err.in_layer(name))?;
                let v = read_sparse(&dir.join(v_ref)).map_err(|err| err.in_layer(name))?;
                if u.shape() != (*d1, *rank_k) || v.rows() != *rank_k || v.cols() != *d2 {
                    return Err(Error::dims(
                        name,
                        format!(
                            "factors U {:?}, V {}x{} disagree with manifest {d1}x{d2} rank {rank_k}",
                            u.shape(),
                            v.rows(),
                            v.cols()
                        ),
                    ));
                }
                if v.nnz() as u64 != *nnz {
                    return Err(Error::dims(
                        name,
                        format!("V holds {} nonzeros, manifest says {nnz}", v.nnz()),
                    ));
                }
                ModelLayer::Factored(CompressedLayer::new(u, v).map_err(|err| err.in_layer(name))?)
            }
        };
        layers.push(layer);
    }
    Ok(CompressedModel { manifest, layers })
}
