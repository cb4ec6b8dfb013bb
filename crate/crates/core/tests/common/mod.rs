#![allow(dead_code)]

use std::path::PathBuf;

use randchan::channels::LtiSystem;
use randchan::io::SystemFile;
use randchan::linalg::Matrix;
use randchan::rng::{self, StreamRng};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples_data")
        .join(name)
}

pub fn load_system(name: &str) -> LtiSystem {
    SystemFile::load(&data_path(name))
        .unwrap()
        .to_system()
        .unwrap()
}

pub fn uniform(r: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng::unit_f64(r)
}

pub fn random_matrix(r: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| uniform(r, -1.0, 1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// Small integer entries in `-lim..=lim`, so degenerate systems are common.
pub fn random_int_matrix(r: &mut StreamRng, rows: usize, cols: usize, lim: i64) -> Matrix {
    let span = (2 * lim + 1) as usize;
    let data = (0..rows * cols)
        .map(|_| (rng::uniform_index(r, span) as i64 - lim) as f64)
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `(A, B, C)` with `n` states, `m <= n` inputs and `q <= n` outputs.
pub fn random_system(r: &mut StreamRng, n: usize, m: usize, q: usize, ints: bool) -> LtiSystem {
    let gen = |r: &mut StreamRng, rows, cols| {
        if ints {
            random_int_matrix(r, rows, cols, 2)
        } else {
            random_matrix(r, rows, cols)
        }
    };
    let a = gen(r, n, n);
    let b = gen(r, n, m);
    let c = gen(r, q, n);
    LtiSystem::new(a, b, Some(c)).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
