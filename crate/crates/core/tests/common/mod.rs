#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
}

pub fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(lo..=hi)).collect()
}

/// Causal FIR filtering with zero initial state.
pub fn direct_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| h.iter().enumerate().take(n + 1).map(|(i, hi)| hi * x[n - i]).sum())
        .collect()
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Chebyshev polynomial of the first kind from its trigonometric definition.
pub fn chebyshev_t(n: usize, x: f64) -> f64 {
    (n as f64 * x.clamp(-1.0, 1.0).acos()).cos()
}

/// Legendre polynomial from the explicit binomial sum
/// `P_n(x) = 2^-n Σ_k C(n,k)² (x−1)^(n−k) (x+1)^k`.
pub fn legendre_p(n: usize, x: f64) -> f64 {
    let mut binom = 1.0;
    let mut sum = 0.0;
    for k in 0..=n {
        sum += binom * binom * (x - 1.0).powi((n - k) as i32) * (x + 1.0).powi(k as i32);
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    sum / 2f64.powi(n as i32)
}
