//! Uniform k sampling on [-π, π) and momentum index arithmetic.
//!
//! Public index functions are one-based, `1..=n_k`, matching the usual
//! statement of the grid `k_j = -π + 2π(j-1)/n_k`. Kernels work with
//! zero-based indices through the [`KIndex`] trait.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Uniform Brillouin-zone sampling with an even number of points.
#[derive(Clone, Debug, PartialEq)]
pub struct KGrid {
    n_k: usize,
    k_values: Vec<f64>,
}

impl KGrid {
    pub fn new(n_k: usize) -> Result<Self> {
        if n_k < 2 || !n_k.is_multiple_of(2) {
            return Err(Error::config(
                "n_k",
                format!("must be a positive even integer, got {n_k}"),
            ));
        }
        let k_values = (0..n_k)
            .map(|j| -PI + 2.0 * PI * j as f64 / n_k as f64)
            .collect();
        Ok(KGrid { n_k, k_values })
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    /// Momenta in grid order (zero-based storage of `k_1..k_{n_k}`).
    pub fn k_values(&self) -> &[f64] {
        &self.k_values
    }

    /// Momentum of one-based index `j`.
    pub fn k(&self, j: usize) -> f64 {
        self.k_values[j - 1]
    }

    /// Closed-form indexer for this grid.
    pub fn on_the_fly(&self) -> OnTheFly {
        OnTheFly::new(self.n_k)
    }

    pub fn index_tables(&self) -> IndexTables {
        build_index_tables(self)
    }
}

/// Same as [`KGrid::new`].
pub fn build_kgrid(n_k: usize) -> Result<KGrid> {
    KGrid::new(n_k)
}

fn check_index(j: usize, n_k: usize) {
    assert!(
        (1..=n_k).contains(&j),
        "k-index {j} outside 1..={n_k}"
    );
}

/// One-based index of `k_{j1} + k_{j2}` folded back into [-π, π).
///
/// Three cases, depending on whether the raw sum lies below -π, inside
/// [-π, π), or at/above π. The comparisons are done on integers:
/// `k_{j1} + k_{j2} = -2π + 2π(j1 + j2 - 2)/n_k`.
///
/// Panics if an index is outside `1..=n_k`.
pub fn index_of_sum(j1: usize, j2: usize, n_k: usize) -> usize {
    check_index(j1, n_k);
    check_index(j2, n_k);
    let half = n_k / 2;
    let s = j1 + j2;
    if s < half + 2 {
        // k_{j1} + k_{j2} < -π
        s + half - 1
    } else if s < 3 * half + 2 {
        // -π <= k_{j1} + k_{j2} < π
        s - half - 1
    } else {
        s - 3 * half - 1
    }
}

/// One-based index of `k_{j1} - k_{j2}` folded back into [-π, π).
///
/// `j1 - j2 + n_k/2 + 1`, shifted by `+n_k` when the raw difference is
/// below -π and by `-n_k` when it is at or above π.
///
/// Panics if an index is outside `1..=n_k`.
pub fn index_of_diff(j1: usize, j2: usize, n_k: usize) -> usize {
    check_index(j1, n_k);
    check_index(j2, n_k);
    let half = n_k as isize / 2;
    let d = j1 as isize - j2 as isize;
    let base = d + half + 1;
    let j = if d < -half {
        base + n_k as isize
    } else if d >= half {
        base - n_k as isize
    } else {
        base
    };
    j as usize
}

/// Zero-based momentum index arithmetic used inside kernels.
pub trait KIndex: Sync {
    fn n_k(&self) -> usize;
    /// Index of `k_a + k_b`.
    fn sum(&self, a: usize, b: usize) -> usize;
    /// Index of `k_a - k_b`.
    fn diff(&self, a: usize, b: usize) -> usize;
}

/// Closed-form indexer; no tables are touched.
#[derive(Clone, Copy, Debug)]
pub struct OnTheFly {
    n_k: usize,
    half: usize,
}

impl OnTheFly {
    pub fn new(n_k: usize) -> Self {
        debug_assert!(n_k >= 2 && n_k.is_multiple_of(2));
        OnTheFly { n_k, half: n_k / 2 }
    }
}

impl KIndex for OnTheFly {
    #[inline(always)]
    fn n_k(&self) -> usize {
        self.n_k
    }

    #[inline(always)]
    fn sum(&self, a: usize, b: usize) -> usize {
        // zero-based form of `index_of_sum`
        let s = a + b;
        if s < self.half {
            s + self.half
        } else if s < 3 * self.half {
            s - self.half
        } else {
            s - 3 * self.half
        }
    }

    #[inline(always)]
    fn diff(&self, a: usize, b: usize) -> usize {
        // zero-based form of `index_of_diff`; a + half - b is never negative
        // unless the raw difference is below -π
        let t = a + self.half;
        if t < b {
            t + self.n_k - b
        } else if t - b >= self.n_k {
            t - b - self.n_k
        } else {
            t - b
        }
    }
}

/// Precomputed sum and difference tables (row-major, zero-based entries).
#[derive(Clone, Debug, PartialEq)]
pub struct IndexTables {
    n_k: usize,
    sum: Vec<u32>,
    diff: Vec<u32>,
}

impl IndexTables {
    /// One-based table entry for `k_{j1} + k_{j2}`.
    pub fn sum_entry(&self, j1: usize, j2: usize) -> usize {
        self.sum[(j1 - 1) * self.n_k + (j2 - 1)] as usize + 1
    }

    /// One-based table entry for `k_{j1} - k_{j2}`.
    pub fn diff_entry(&self, j1: usize, j2: usize) -> usize {
        self.diff[(j1 - 1) * self.n_k + (j2 - 1)] as usize + 1
    }

    /// The sum table as one-based rows.
    pub fn sum_table(&self) -> Vec<Vec<usize>> {
        self.sum
            .chunks(self.n_k)
            .map(|row| row.iter().map(|&v| v as usize + 1).collect())
            .collect()
    }

    pub fn diff_table(&self) -> Vec<Vec<usize>> {
        self.diff
            .chunks(self.n_k)
            .map(|row| row.iter().map(|&v| v as usize + 1).collect())
            .collect()
    }
}

impl KIndex for IndexTables {
    #[inline(always)]
    fn n_k(&self) -> usize {
        self.n_k
    }

    #[inline(always)]
    fn sum(&self, a: usize, b: usize) -> usize {
        self.sum[a * self.n_k + b] as usize
    }

    #[inline(always)]
    fn diff(&self, a: usize, b: usize) -> usize {
        self.diff[a * self.n_k + b] as usize
    }
}

pub fn build_index_tables(grid: &KGrid) -> IndexTables {
    let n = grid.n_k();
    let mut sum = Vec::with_capacity(n * n);
    let mut diff = Vec::with_capacity(n * n);
    for j1 in 1..=n {
        for j2 in 1..=n {
            sum.push((index_of_sum(j1, j2, n) - 1) as u32);
            diff.push((index_of_diff(j1, j2, n) - 1) as u32);
        }
    }
    IndexTables { n_k: n, sum, diff }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fold a momentum into [-π, π) by adding/subtracting 2π, then search
    /// the grid for it.
    fn oracle_index(grid: &KGrid, k: f64) -> usize {
        let mut k = k;
        while k < -PI - 1e-9 {
            k += 2.0 * PI;
        }
        while k >= PI - 1e-9 {
            k -= 2.0 * PI;
        }
        let pos = grid
            .k_values()
            .iter()
            .position(|&kv| (kv - k).abs() < 1e-9)
            .expect("folded momentum not on grid");
        pos + 1
    }

    #[test]
    fn grid_of_eight() {
        let g = KGrid::new(8).unwrap();
        let want: Vec<f64> = (0..8).map(|j| -PI + j as f64 * PI / 4.0).collect();
        assert_eq!(g.k_values(), want.as_slice());
        assert_eq!(g.k(5), 0.0);
    }

    #[test]
    fn smallest_grid() {
        let g = KGrid::new(2).unwrap();
        assert_eq!(g.k_values(), &[-PI, 0.0]);
    }

    #[test]
    fn odd_or_zero_rejected() {
        for n in [0, 1, 3, 7] {
            match KGrid::new(n) {
                Err(Error::Config { key, .. }) => assert_eq!(key, "n_k"),
                other => panic!("expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_point_sits_at_half() {
        for n in [2, 4, 8, 16, 64, 1024] {
            let g = KGrid::new(n).unwrap();
            assert_eq!(g.k(n / 2 + 1), 0.0);
            assert!(g.k_values().windows(2).all(|w| w[0] < w[1]));
            assert!(g.k_values().iter().all(|&k| (-PI..PI).contains(&k)));
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(index_of_sum(3, 5, 8), 3);
        assert_eq!(index_of_sum(1, 1, 8), 5);
        assert_eq!(index_of_sum(8, 8, 8), 3);
        assert_eq!(index_of_diff(4, 4, 8), 5);
        assert_eq!(index_of_diff(1, 8, 8), 6);
        assert_eq!(index_of_diff(4, 1, 4), 2);
    }

    #[test]
    fn exhaustive_against_wrap_and_search() {
        for n in [2, 4, 8, 16, 64] {
            let g = KGrid::new(n).unwrap();
            let fly = g.on_the_fly();
            for j1 in 1..=n {
                for j2 in 1..=n {
                    let s = oracle_index(&g, g.k(j1) + g.k(j2));
                    let d = oracle_index(&g, g.k(j1) - g.k(j2));
                    assert_eq!(index_of_sum(j1, j2, n), s, "sum n={n} {j1} {j2}");
                    assert_eq!(index_of_diff(j1, j2, n), d, "diff n={n} {j1} {j2}");
                    assert_eq!(fly.sum(j1 - 1, j2 - 1) + 1, s);
                    assert_eq!(fly.diff(j1 - 1, j2 - 1) + 1, d);
                }
            }
        }
    }

    #[test]
    fn composite_index_matches_oracle() {
        let n = 8;
        let g = KGrid::new(n).unwrap();
        for a in 1..=n {
            for b in 1..=n {
                for c in 1..=n {
                    let got = index_of_diff(index_of_sum(a, b, n), c, n);
                    let want = oracle_index(&g, g.k(a) + g.k(b) - g.k(c));
                    assert_eq!(got, want);
                }
            }
        }
    }

    #[test]
    fn sum_commutes() {
        for n in [2, 8, 16] {
            for a in 1..=n {
                for b in 1..=n {
                    assert_eq!(index_of_sum(a, b, n), index_of_sum(b, a, n));
                }
            }
        }
    }

    #[test]
    fn tables() {
        let t2 = KGrid::new(2).unwrap().index_tables();
        assert_eq!(t2.sum_table(), vec![vec![2, 1], vec![1, 2]]);

        let g = KGrid::new(16).unwrap();
        let t = g.index_tables();
        let fly = g.on_the_fly();
        for j1 in 1..=16 {
            assert_eq!(t.diff_entry(j1, j1), 16 / 2 + 1);
            for j2 in 1..=16 {
                assert_eq!(t.sum_entry(j1, j2), index_of_sum(j1, j2, 16));
                assert_eq!(t.diff_entry(j1, j2), index_of_diff(j1, j2, 16));
                assert_eq!(t.sum(j1 - 1, j2 - 1), fly.sum(j1 - 1, j2 - 1));
                assert_eq!(t.diff(j1 - 1, j2 - 1), fly.diff(j1 - 1, j2 - 1));
            }
        }
    }

    #[test]
    #[should_panic(expected = "outside")]
    fn out_of_range_index_panics() {
        index_of_sum(0, 1, 8);
    }
}
