//! Brute-force references: momenta are folded and searched for on the
//! grid, sums are written as plain nested loops, and the free propagation
//! is evaluated in closed form.

use std::f64::consts::PI;

use kbe_core::linalg::Mat2;
use kbe_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Momentum of zero-based grid point `j`.
pub fn kv(n: usize, j: usize) -> f64 {
    -PI + 2.0 * PI * j as f64 / n as f64
}

/// Zero-based index of momentum `k` after folding into [-π, π), found by
/// linear search. A one-point grid maps everything to its only point.
pub fn wrap_search(n: usize, k: f64) -> usize {
    if n == 1 {
        return 0;
    }
    let mut k = k;
    while k < -PI - 1e-9 {
        k += 2.0 * PI;
    }
    while k >= PI - 1e-9 {
        k -= 2.0 * PI;
    }
    (0..n)
        .find(|&j| (kv(n, j) - k).abs() < 1e-9)
        .expect("momentum on grid")
}

/// `n` matrices with entries uniform in the unit square.
pub fn random_slice(rng: &mut ChaCha8Rng, n: usize) -> Vec<Mat2> {
    (0..n)
        .map(|_| {
            let mut m = Mat2::ZERO;
            for z in m.0.iter_mut() {
                *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            m
        })
        .collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// First self-energy term as a direct triple sum, no polarizability.
pub fn sigma_first(a: &[Mat2], b: &[Mat2], pref: f64) -> Vec<Mat2> {
    let n = a.len();
    let mut out = vec![Mat2::ZERO; n];
    for (k, o) in out.iter_mut().enumerate() {
        for j in 0..2 {
            for m in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for q in 0..n {
                    let kmq = wrap_search(n, kv(n, k) - kv(n, q));
                    for kp in 0..n {
                        let kpq = wrap_search(n, kv(n, kp) + kv(n, q));
                        acc += a[kpq].get(1 - j, 1 - m) * b[kp].get(1 - m, 1 - j) * a[kmq].get(j, m);
                    }
                }
                o.set(j, m, acc * pref);
            }
        }
    }
    out
}

/// Second self-energy term as five nested loops.
pub fn sigma_second(a: &[Mat2], b: &[Mat2], pref: f64) -> Vec<Mat2> {
    let n = a.len();
    let mut out = vec![Mat2::ZERO; n];
    for (k, o) in out.iter_mut().enumerate() {
        for j in 0..2 {
            for m in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for q in 0..n {
                    for kp in 0..n {
                        let c = wrap_search(n, kv(n, kp) + kv(n, q) - kv(n, k));
                        acc += a[kp].get(j, 1 - m) * b[c].get(1 - m, 1 - j) * a[q].get(1 - j, m);
                    }
                }
                o.set(j, m, acc * pref);
            }
        }
    }
    out
}

/// Free lesser function of a filled band at energy `e`: `i e^{-i e τ}`.
pub fn free_lesser(e: f64, tau: f64) -> C64 {
    C64::new(0.0, 1.0) * C64::new(0.0, -e * tau).exp()
}

pub fn max_diff(x: &[Mat2], y: &[Mat2]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (*a - *b).max_abs())
        .fold(0.0, f64::max)
}

/// Max-abs difference relative to the largest entry of `y`.
pub fn rel_err(x: &[Mat2], y: &[Mat2]) -> f64 {
    let den = y.iter().map(Mat2::max_abs).fold(0.0, f64::max);
    max_diff(x, y) / den.max(f64::MIN_POSITIVE)
}

pub fn max_diff_rows(x: &[Vec<Mat2>], y: &[Vec<Mat2>]) -> f64 {
    assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| max_diff(a, b))
        .fold(0.0, f64::max)
}
