//! `.nuqm` model files.
//!
//! Layout (little-endian): magic `NUQM`, version u8 = 1, kernel kind u8,
//! bandwidth f64, `d` u32, `N` u32, `C` u32, density mode u8, ridge f64,
//! index config as five u32 (backend, k, m, ef_construction, ef_search),
//! then the `N x d` f32 training matrix and `N` u32 labels.
//!
//! Density mode 0 is KDE, 1 full-covariance class Gaussians, 2 diagonal
//! class Gaussians. A negative ridge stands for the automatic per-class
//! ridge. The index and any class Gaussians are rebuilt on load; the graph
//! seed is not stored and loads as 0.

use std::fs;
use std::path::Path;

use log::warn;

use crate::dataset::{EmbeddingDataset, PointMatrix};
use crate::density::{DensityMode, GaussianFit, Ridge};
use crate::error::{NuqError, Result};
use crate::io::{decode_f32s, decode_labels, read_f64, read_u32, write_atomic};
use crate::kernels::{KernelKind, KernelSpec};
use crate::knn::{Backend, IndexConfig};
use crate::model::{FitOptions, NuqModel};

pub const MODEL_MAGIC: &[u8; 4] = b"NUQM";
pub const MODEL_VERSION: u8 = 1;
pub const MODEL_HEADER_LEN: usize = 55;

fn u32_field(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| NuqError::input(format!("{what} {v} does not fit in u32")))
}

pub fn encode_model(model: &NuqModel) -> Result<Vec<u8>> {
    let ds = model.dataset();
    let opts = model.options();
    let kernel = model.kernel();
    if opts.index.backend == Backend::Hnsw && opts.index.seed != 0 {
        warn!(
            "graph seed {} is not stored; the reloaded index uses seed 0",
            opts.index.seed
        );
    }
    let mut out = Vec::with_capacity(MODEL_HEADER_LEN + 4 * ds.len() * (ds.dim() + 1));
    out.extend_from_slice(MODEL_MAGIC);
    out.push(MODEL_VERSION);
    out.push(kernel.kind().code());
    out.extend_from_slice(&kernel.bandwidth().to_le_bytes());
    out.extend_from_slice(&u32_field(ds.dim(), "dimension")?);
    out.extend_from_slice(&u32_field(ds.len(), "row count")?);
    out.extend_from_slice(&u32_field(ds.num_classes(), "class count")?);
    out.push(match (opts.density, opts.gaussian.diagonal) {
        (DensityMode::Kde, _) => 0,
        (DensityMode::Gmm, false) => 1,
        (DensityMode::Gmm, true) => 2,
    });
    let ridge = match opts.gaussian.ridge {
        Ridge::Auto => -1.0,
        Ridge::Fixed(r) => r,
    };
    out.extend_from_slice(&ridge.to_le_bytes());
    let idx = &opts.index;
    let backend = match idx.backend {
        Backend::Exact => 0,
        Backend::Hnsw => 1,
    };
    for (v, what) in [
        (backend, "backend"),
        (idx.neighbors, "knn.k"),
        (idx.hnsw_m, "knn.m"),
        (idx.hnsw_ef_construction, "knn.ef_construction"),
        (idx.hnsw_ef_search, "knn.ef_search"),
    ] {
        out.extend_from_slice(&u32_field(v, what)?);
    }
    for v in ds.points().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for y in ds.labels() {
        out.extend_from_slice(&y.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<NuqModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(NuqError::parse(0, "bad magic, expected NUQM"));
    }
    if bytes.len() < MODEL_HEADER_LEN {
        return Err(NuqError::parse(
            bytes.len() as u64,
            "truncated model header",
        ));
    }
    if bytes[4] != MODEL_VERSION {
        return Err(NuqError::parse(
            4,
            format!("unsupported model version {}", bytes[4]),
        ));
    }
    let kind = KernelKind::from_code(bytes[5])
        .ok_or_else(|| NuqError::parse(5, format!("unknown kernel code {}", bytes[5])))?;
    let bandwidth = read_f64(bytes, 6);
    let d = read_u32(bytes, 14) as usize;
    let n = read_u32(bytes, 18) as usize;
    let c = read_u32(bytes, 22) as usize;
    let (density, diagonal) = match bytes[26] {
        0 => (DensityMode::Kde, false),
        1 => (DensityMode::Gmm, false),
        2 => (DensityMode::Gmm, true),
        other => return Err(NuqError::parse(26, format!("unknown density mode {other}"))),
    };
    let ridge_raw = read_f64(bytes, 27);
    let ridge = if ridge_raw.is_nan() {
        return Err(NuqError::parse(27, "ridge is NaN"));
    } else if ridge_raw < 0.0 {
        Ridge::Auto
    } else {
        Ridge::Fixed(ridge_raw)
    };
    let backend = match read_u32(bytes, 35) {
        0 => Backend::Exact,
        1 => Backend::Hnsw,
        other => return Err(NuqError::parse(35, format!("unknown backend {other}"))),
    };
    let index = IndexConfig {
        neighbors: read_u32(bytes, 39) as usize,
        backend,
        hnsw_m: read_u32(bytes, 43) as usize,
        hnsw_ef_construction: read_u32(bytes, 47) as usize,
        hnsw_ef_search: read_u32(bytes, 51) as usize,
        seed: 0,
    };
    let labels_at = MODEL_HEADER_LEN as u128 + 4 * n as u128 * d as u128;
    let expected = labels_at + 4 * n as u128;
    if (bytes.len() as u128) < expected {
        return Err(NuqError::parse(
            bytes.len() as u64,
            format!("truncated model, expected {expected} bytes"),
        ));
    }
    if (bytes.len() as u128) > expected {
        return Err(NuqError::parse(
            expected as u64,
            "trailing bytes after model payload",
        ));
    }
    if d == 0 {
        return Err(NuqError::parse(14, "dimension is zero"));
    }
    let values = decode_f32s(bytes, MODEL_HEADER_LEN, n * d)?;
    let labels = decode_labels(bytes, labels_at as usize, n, c)?;
    let dataset = EmbeddingDataset::new(PointMatrix::new(d, values)?, labels, c)?;
    let kernel = KernelSpec::new(kind, bandwidth, d)?;
    NuqModel::fit(
        dataset,
        kernel,
        FitOptions {
            index,
            density,
            gaussian: GaussianFit { ridge, diagonal },
        },
    )
}

pub fn save_model(model: &NuqModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<NuqModel> {
    decode_model(&fs::read(path)?)
}
