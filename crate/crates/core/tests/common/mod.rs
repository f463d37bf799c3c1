#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qbmor_core::{HessianTensor, C64, CVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn complex_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Dense random tensor (not symmetrized).
pub fn dense_tensor(rng: &mut ChaCha8Rng, n: usize) -> HessianTensor {
    let mut ent = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                ent.push((i, j, k, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    HessianTensor::from_entries(n, ent).unwrap()
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

pub fn rel_c(a: &CVector, b: &CVector) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

/// Relative L2 distance between two sequences of vectors.
pub fn rel_seq(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - y).norm_squared();
        den += y.norm_squared();
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
