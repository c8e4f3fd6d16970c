#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde_json::Value;
use spectrakit::tensor_store::{build_checkpoint, Dtype};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectrakit"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spectrakit")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert_eq!(
        code(&o),
        0,
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

pub fn json(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

pub fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn gaussian(g: &mut StdRng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| g.sample(StandardNormal))
}

pub fn orthonormal(g: &mut StdRng, m: usize, k: usize) -> DMatrix<f64> {
    gaussian(g, m, k).qr().q().columns(0, k).into_owned()
}

pub fn skew(g: &mut StdRng, n: usize) -> DMatrix<f64> {
    let a = gaussian(g, n, n);
    (&a - a.transpose()) * 0.5
}

pub fn with_spectrum(g: &mut StdRng, m: usize, n: usize, sigma: &[f64]) -> DMatrix<f64> {
    let u = orthonormal(g, m, sigma.len());
    let v = orthonormal(g, n, sigma.len());
    &u * DMatrix::from_diagonal(&DVector::from_column_slice(sigma)) * v.transpose()
}

pub fn row_major(w: &DMatrix<f64>) -> Vec<f64> {
    w.transpose().iter().copied().collect()
}

/// Writes `(name, matrix)` pairs as an F64 checkpoint.
pub fn write_matrices(path: &Path, mats: &[(String, DMatrix<f64>)]) -> PathBuf {
    let list: Vec<(&str, Dtype, Vec<usize>, Vec<f64>)> = mats
        .iter()
        .map(|(n, w)| {
            (
                n.as_str(),
                Dtype::F64,
                vec![w.nrows(), w.ncols()],
                row_major(w),
            )
        })
        .collect();
    build_checkpoint(path, &list, &BTreeMap::new()).unwrap();
    path.to_path_buf()
}

pub const KINDS: [(&str, usize, usize); 4] = [
    ("self_attn.q_proj", 8, 8),
    ("self_attn.k_proj", 4, 8),
    ("self_attn.v_proj", 4, 8),
    ("mlp.up_proj", 12, 8),
];

pub fn layer_name(layer: usize, kind: &str) -> String {
    format!("model.layers.{layer}.{kind}.weight")
}

/// `layers` llama-style decoder layers with well-separated spectra `8·0.5^i`, plus an embedding.
pub fn synthetic_matrices(layers: usize, seed: u64) -> Vec<(String, DMatrix<f64>)> {
    let mut g = rng(seed);
    let mut out = Vec::new();
    for layer in 0..layers {
        for (kind, m, n) in KINDS {
            let sigma: Vec<f64> = (0..m.min(n)).map(|i| 8.0 * 0.5f64.powi(i as i32)).collect();
            out.push((layer_name(layer, kind), with_spectrum(&mut g, m, n, &sigma)));
        }
    }
    out.push(("model.embed_tokens.weight".into(), gaussian(&mut g, 5, 8)));
    out
}

pub fn synthetic(path: &Path, layers: usize, seed: u64) -> PathBuf {
    write_matrices(path, &synthetic_matrices(layers, seed))
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every regular file under `dir`, relative path → bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Cosines of the principal angles between the column spans of two orthonormal bases, from
/// the eigenvalues of `MᵀM` with `M = QaᵀQb`, descending.
pub fn cosines(qa: &DMatrix<f64>, qb: &DMatrix<f64>) -> Vec<f64> {
    let m = qa.transpose() * qb;
    let mut c: Vec<f64> = (m.transpose() * &m)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.clamp(0.0, 1.0).sqrt())
        .collect();
    c.sort_by(|a, b| b.partial_cmp(a).unwrap());
    c
}

/// Orthonormal basis of the row space of a full-row-rank matrix (QR of `Wᵀ`).
pub fn row_basis(w: &DMatrix<f64>) -> DMatrix<f64> {
    w.transpose().qr().q().columns(0, w.nrows()).into_owned()
}
