//! Two-time storage for G≷ (and Σ≷), symmetry fill, and observables.
//!
//! Storage layout is `(i, l, k)` with `i` the first time index, `l` the
//! second, and `k` the shard-local momentum, so every two-time point holds
//! a contiguous block of `n_k_local` band matrices. This keeps frontier
//! gathers a sequence of memcpys.

use num_complex::Complex64 as C64;

use crate::kgrid::KGrid;
use crate::linalg::Mat2;
use crate::{Error, Result};

/// Default cap on two-time storage, in bytes.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Lesser or greater component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Lesser,
    Greater,
}

/// Full two-time lesser/greater storage over a contiguous k-range.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoTimeStore {
    n_points: usize,
    n_k_local: usize,
    k_offset: usize,
    lesser: Vec<Mat2>,
    greater: Vec<Mat2>,
}

/// Bytes held by one lesser+greater store.
pub fn storage_bytes(n_k: usize, n_points: usize) -> u64 {
    2 * n_k as u64 * (n_points as u64).pow(2) * std::mem::size_of::<Mat2>() as u64
}

impl TwoTimeStore {
    pub fn zeros(n_points: usize, n_k_local: usize, k_offset: usize) -> Self {
        let len = n_points * n_points * n_k_local;
        TwoTimeStore {
            n_points,
            n_k_local,
            k_offset,
            lesser: vec![Mat2::ZERO; len],
            greater: vec![Mat2::ZERO; len],
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_k_local(&self) -> usize {
        self.n_k_local
    }

    pub fn k_offset(&self) -> usize {
        self.k_offset
    }

    #[inline]
    fn base(&self, i: usize, l: usize) -> usize {
        debug_assert!(i < self.n_points && l < self.n_points);
        (i * self.n_points + l) * self.n_k_local
    }

    fn data(&self, c: Component) -> &[Mat2] {
        match c {
            Component::Lesser => &self.lesser,
            Component::Greater => &self.greater,
        }
    }

    fn data_mut(&mut self, c: Component) -> &mut [Mat2] {
        match c {
            Component::Lesser => &mut self.lesser,
            Component::Greater => &mut self.greater,
        }
    }

    /// All local k at the two-time point `(t_i, t_l)`.
    #[inline]
    pub fn slice(&self, c: Component, i: usize, l: usize) -> &[Mat2] {
        let b = self.base(i, l);
        &self.data(c)[b..b + self.n_k_local]
    }

    #[inline]
    pub fn slice_mut(&mut self, c: Component, i: usize, l: usize) -> &mut [Mat2] {
        let b = self.base(i, l);
        let n = self.n_k_local;
        &mut self.data_mut(c)[b..b + n]
    }

    #[inline]
    pub fn get(&self, c: Component, k: usize, i: usize, l: usize) -> Mat2 {
        self.data(c)[self.base(i, l) + k]
    }

    #[inline]
    pub fn set(&mut self, c: Component, k: usize, i: usize, l: usize, v: Mat2) {
        let b = self.base(i, l);
        self.data_mut(c)[b + k] = v;
    }

    /// Fills `(t_l, t_n)` from `(t_n, t_l)` for every `l < n`, using
    /// `X(t', t) = -[X(t, t')]†`.
    pub fn mirror_row_to_column(&mut self, c: Component, n: usize) {
        for l in 0..n {
            for k in 0..self.n_k_local {
                let v = self.get(c, k, n, l).neg_adjoint();
                self.set(c, k, l, n, v);
            }
        }
    }

    /// Fills `(t_n, t_j)` from `(t_j, t_n)` for every `j < n`.
    pub fn mirror_column_to_row(&mut self, c: Component, n: usize) {
        for j in 0..n {
            for k in 0..self.n_k_local {
                let v = self.get(c, k, j, n).neg_adjoint();
                self.set(c, k, n, j, v);
            }
        }
    }

    /// Projects `(t_n, t_n)` onto its anti-Hermitian part.
    pub fn symmetrize_diagonal(&mut self, c: Component, n: usize) {
        for m in self.slice_mut(c, n, n) {
            *m = m.anti_hermitian_part();
        }
    }

    /// Largest `|X(t_i,t_l) + X(t_l,t_i)†|` over `i, l <= upto`.
    pub fn symmetry_residual(&self, upto: usize) -> f64 {
        let mut r: f64 = 0.0;
        for c in [Component::Lesser, Component::Greater] {
            for i in 0..=upto {
                for l in 0..=i {
                    for k in 0..self.n_k_local {
                        let a = self.get(c, k, i, l);
                        let b = self.get(c, k, l, i);
                        r = r.max((a + b.adjoint()).max_abs());
                    }
                }
            }
        }
        r
    }

    pub fn lesser_raw(&self) -> &[Mat2] {
        &self.lesser
    }

    pub fn greater_raw(&self) -> &[Mat2] {
        &self.greater
    }
}

/// Lesser and greater Green's functions on the two-time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoTimeGF {
    pub store: TwoTimeStore,
    n_k: usize,
    n_steps: usize,
    dt: f64,
    frontier: usize,
}

/// Ground state: valence band filled, conduction empty, at `(0, 0)`.
pub fn initial_point() -> (Mat2, Mat2) {
    let i = C64::new(0.0, 1.0);
    let z = C64::new(0.0, 0.0);
    (Mat2::diag(i, z), Mat2::diag(z, -i))
}

impl TwoTimeGF {
    /// Allocates storage for `n_steps` steps over the local k-range
    /// `k_offset..k_offset + n_k_local` of an `n_k` grid and sets the
    /// ground-state initial condition at `(0, 0)`.
    pub fn ground_state(
        n_k: usize,
        n_k_local: usize,
        k_offset: usize,
        n_steps: usize,
        dt: f64,
        budget: u64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if k_offset + n_k_local > n_k {
            return Err(Error::contract("local k-range exceeds grid"));
        }
        let required = storage_bytes(n_k_local, n_steps + 1);
        if required > budget {
            return Err(Error::Capacity { required, budget });
        }
        let mut store = TwoTimeStore::zeros(n_steps + 1, n_k_local, k_offset);
        let (gl, gg) = initial_point();
        store.slice_mut(Component::Lesser, 0, 0).fill(gl);
        store.slice_mut(Component::Greater, 0, 0).fill(gg);
        Ok(TwoTimeGF {
            store,
            n_k,
            n_steps,
            dt,
            frontier: 0,
        })
    }

    /// Wraps existing storage (used when reading trajectories back).
    pub fn from_store(store: TwoTimeStore, n_k: usize, dt: f64, frontier: usize) -> Self {
        let n_steps = store.n_points() - 1;
        TwoTimeGF {
            store,
            n_k,
            n_steps,
            dt,
            frontier,
        }
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn n_k_local(&self) -> usize {
        self.store.n_k_local()
    }

    pub fn k_offset(&self) -> usize {
        self.store.k_offset()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn frontier(&self) -> usize {
        self.frontier
    }

    pub fn set_frontier(&mut self, n: usize) {
        self.frontier = n;
    }

    /// Mirrors the current frontier: the lesser row into its column, the
    /// greater column into its row, and projects both diagonals.
    pub fn mirror_frontier(&mut self) {
        let n = self.frontier;
        self.store.mirror_row_to_column(Component::Lesser, n);
        self.store.mirror_column_to_row(Component::Greater, n);
        self.store.symmetrize_diagonal(Component::Lesser, n);
        self.store.symmetrize_diagonal(Component::Greater, n);
    }

    /// Equal-time lesser function at `t_i`, local k.
    pub fn rho(&self, i: usize) -> &[Mat2] {
        self.store.slice(Component::Lesser, i, i)
    }

    /// `max_k |G>(t,t) - G<(t,t) + i|` at `t_i`.
    pub fn anticommutator_drift(&self, i: usize) -> f64 {
        let id = Mat2::IDENTITY.scale(C64::new(0.0, 1.0));
        self.store
            .slice(Component::Greater, i, i)
            .iter()
            .zip(self.store.slice(Component::Lesser, i, i))
            .map(|(g, l)| (*g - *l + id).max_abs())
            .fold(0.0, f64::max)
    }

    /// True if every stored entry on frontier `n` is finite.
    pub fn frontier_is_finite(&self, n: usize) -> bool {
        [Component::Lesser, Component::Greater].iter().all(|&c| {
            (0..=n).all(|l| {
                self.store.slice(c, n, l).iter().all(Mat2::is_finite)
                    && self.store.slice(c, l, n).iter().all(Mat2::is_finite)
            })
        })
    }
}

/// Allocates a single-shard state for `n_steps >= 1` steps.
pub fn init_state(grid: &KGrid, n_steps: usize, dt: f64, budget: u64) -> Result<TwoTimeGF> {
    if n_steps < 1 {
        return Err(Error::config("n_t", "must be at least 1"));
    }
    TwoTimeGF::ground_state(grid.n_k(), grid.n_k(), 0, n_steps, dt, budget)
}

/// Band occupations at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct Observables {
    pub t: f64,
    pub n_v: Vec<f64>,
    pub n_c: Vec<f64>,
    pub density: f64,
}

impl Observables {
    pub fn mean_n_v(&self) -> f64 {
        self.n_v.iter().sum::<f64>() / self.n_v.len().max(1) as f64
    }

    pub fn mean_n_c(&self) -> f64 {
        self.n_c.iter().sum::<f64>() / self.n_c.len().max(1) as f64
    }
}

/// Occupations `n_b(k) = Im G<_{bb}(k; t, t)` from an equal-time slice
/// over the full grid.
pub fn observables_from_rho(rho: &[Mat2], t: f64) -> Observables {
    let n_v: Vec<f64> = rho.iter().map(|g| g.get(0, 0).im).collect();
    let n_c: Vec<f64> = rho.iter().map(|g| g.get(1, 1).im).collect();
    let density = if rho.is_empty() {
        0.0
    } else {
        n_v.iter().zip(&n_c).map(|(v, c)| v + c).sum::<f64>() / rho.len() as f64
    };
    Observables { t, n_v, n_c, density }
}

pub fn observables_at(state: &TwoTimeGF, i: usize) -> Observables {
    observables_from_rho(state.rho(i), i as f64 * state.dt())
}

/// Concatenates per-shard slices in shard order (ascending global k).
pub fn gather<S: AsRef<[Mat2]>>(shards: &[S]) -> Vec<Mat2> {
    let n: usize = shards.iter().map(|s| s.as_ref().len()).sum();
    let mut out = Vec::with_capacity(n);
    for s in shards {
        out.extend_from_slice(s.as_ref());
    }
    out
}

/// Globally replicated frontier `n`: `lesser_col[j] = G<(t_j, t_n)` and
/// `greater_row[j] = G>(t_n, t_j)` over all k, for `j = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierSlices {
    pub n: usize,
    pub lesser_col: Vec<Vec<Mat2>>,
    pub greater_row: Vec<Vec<Mat2>>,
}

/// Gathers frontier `n` from shard stores given in shard order.
pub fn gather_frontier(shards: &[&TwoTimeStore], n: usize) -> FrontierSlices {
    let lesser_col = (0..=n)
        .map(|j| gather(&shards.iter().map(|s| s.slice(Component::Lesser, j, n)).collect::<Vec<_>>()))
        .collect();
    let greater_row = (0..=n)
        .map(|j| gather(&shards.iter().map(|s| s.slice(Component::Greater, n, j)).collect::<Vec<_>>()))
        .collect();
    FrontierSlices {
        n,
        lesser_col,
        greater_row,
    }
}

/// Splits a global slice into `n_shards` contiguous pieces.
pub fn scatter(global: &[Mat2], n_shards: usize) -> Result<Vec<Vec<Mat2>>> {
    if n_shards == 0 || !global.len().is_multiple_of(n_shards) {
        return Err(Error::config(
            "n_shards",
            format!("{n_shards} does not divide {}", global.len()),
        ));
    }
    let per = global.len() / n_shards;
    Ok(global.chunks(per).map(<[Mat2]>::to_vec).collect())
}
