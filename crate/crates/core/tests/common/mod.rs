//! Oracles shared by the integration tests. Everything here is written
//! independently of the library's index arithmetic.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use qcnn_core::linalg::SquareMatrix;

/// Amplitude-index bit of qubit `q` in an `n`-qubit register (qubit 0 is
/// the most significant bit).
pub fn bit(index: usize, q: usize, n: usize) -> usize {
    (index >> (n - 1 - q)) & 1
}

/// Full `2^n × 2^n` operator of `m` applied to `qubits`, built entry by
/// entry from the definition.
pub fn embed(m: &SquareMatrix, qubits: &[usize], n: usize) -> Vec<Vec<f64>> {
    let dim = 1usize << n;
    let local = |idx: usize| qubits.iter().fold(0, |acc, &q| (acc << 1) | bit(idx, q, n));
    let others_equal = |a: usize, b: usize| (0..n).filter(|q| !qubits.contains(q)).all(|q| bit(a, q, n) == bit(b, q, n));
    (0..dim)
        .map(|r| (0..dim).map(|c| if others_equal(r, c) { m.get(local(r), local(c)) } else { 0.0 }).collect())
        .collect()
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

pub fn brute_apply(state: &[f64], m: &SquareMatrix, qubits: &[usize]) -> Vec<f64> {
    let n = state.len().trailing_zeros() as usize;
    matvec(&embed(m, qubits, n), state)
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..1usize << n).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn random_matrix<R: Rng>(rng: &mut R, dim: usize) -> SquareMatrix {
    SquareMatrix::from_fn(dim, |_, _| rng.random_range(0.0..1.0))
}

/// Haar-ish random orthogonal matrix via nalgebra's QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, dim: usize) -> SquareMatrix {
    let g = nalgebra::DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let q = g.qr().q();
    SquareMatrix::from_fn(dim, |r, c| q[(r, c)])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
