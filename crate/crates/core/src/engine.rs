//! Execution engine: k-sharding, time-pair batching, chunked inner
//! contractions on a worker pool, and deterministic reductions.
//!
//! A contraction output (one k, one time pair, one component) is a work
//! item. Its inner `k' × q` domain is flattened and cut into chunks; each
//! chunk yields a partial 2×2 sum, and the partials are reduced in chunk
//! order. Work items never share state, so results do not depend on how
//! the pool interleaves them.

use std::ops::{AddAssign, Range};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::kgrid::{IndexTables, KGrid, OnTheFly};
use crate::linalg::Mat2;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IndexMode {
    /// Precomputed sum/difference tables.
    Lookup,
    #[default]
    OnTheFly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReduceMode {
    Sequential,
    #[default]
    Tree,
}

/// Parallel execution configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub n_shards: usize,
    /// Pool size. Shards run one after another and share the pool.
    pub workers: usize,
    /// Chunk length over the flattened `k' × q` domain (fused mode).
    pub block_size: usize,
    /// One launch for all frontier pairs instead of one per pair.
    pub batch_enabled: bool,
    /// Fused `k' × q` chunks; otherwise one chunk per `k'`.
    pub fusion_enabled: bool,
    pub index_mode: IndexMode,
    pub reduce_mode: ReduceMode,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            n_shards: 1,
            workers: 1,
            block_size: 128,
            batch_enabled: true,
            fusion_enabled: true,
            index_mode: IndexMode::OnTheFly,
            reduce_mode: ReduceMode::Tree,
        }
    }
}

impl Schedule {
    pub fn validate(&self, n_k: usize) -> Result<()> {
        if self.n_shards == 0 || !n_k.is_multiple_of(self.n_shards) {
            return Err(Error::config(
                "n_shards",
                format!("{} does not divide n_k = {n_k}", self.n_shards),
            ));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.block_size == 0 {
            return Err(Error::config("block_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Contiguous k-range owned by one shard (zero-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShardRange {
    pub index: usize,
    pub start: usize,
    pub len: usize,
}

impl ShardRange {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

pub fn shard_ranges(n_k: usize, n_shards: usize) -> Result<Vec<ShardRange>> {
    if n_shards == 0 || !n_k.is_multiple_of(n_shards) {
        return Err(Error::config(
            "n_shards",
            format!("{n_shards} does not divide n_k = {n_k}"),
        ));
    }
    let len = n_k / n_shards;
    Ok((0..n_shards)
        .map(|index| ShardRange {
            index,
            start: index * len,
            len,
        })
        .collect())
}

/// A frontier point `(t_j, t_n)`; its partner `(t_n, t_j)` is evaluated
/// in the same pipeline call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimePair {
    pub j: usize,
    pub n: usize,
}

/// The `n + 1` pipeline pairs covering the `2n + 1` points of frontier `n`.
pub fn frontier_pairs(n: usize) -> Vec<TimePair> {
    (0..=n).map(|j| TimePair { j, n }).collect()
}

/// Chunks of the flattened `k' × q` domain, in reduction order.
pub fn chunk_ranges(n_k: usize, schedule: &Schedule) -> Vec<Range<usize>> {
    let total = n_k * n_k;
    let step = if schedule.fusion_enabled {
        schedule.block_size
    } else {
        n_k
    };
    (0..total)
        .step_by(step.max(1))
        .map(|s| s..(s + step).min(total))
        .collect()
}

/// Work decomposition for one frontier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    pub n_k: usize,
    pub shards: Vec<ShardRange>,
    pub batches: Vec<Vec<TimePair>>,
    pub chunks: Vec<Range<usize>>,
}

impl Plan {
    /// Output elements per shard and component: local k × pairs.
    pub fn outputs_per_shard(&self) -> usize {
        let pairs: usize = self.batches.iter().map(Vec::len).sum();
        self.shards.first().map_or(0, |s| s.len) * pairs
    }
}

pub fn plan(grid: &KGrid, n_t: usize, schedule: &Schedule) -> Result<Plan> {
    schedule.validate(grid.n_k())?;
    let pairs = frontier_pairs(n_t);
    let batches = if schedule.batch_enabled {
        vec![pairs]
    } else {
        pairs.into_iter().map(|p| vec![p]).collect()
    };
    Ok(Plan {
        n_k: grid.n_k(),
        shards: shard_ranges(grid.n_k(), schedule.n_shards)?,
        batches,
        chunks: chunk_ranges(grid.n_k(), schedule),
    })
}

/// Per-chunk partial sums of one output element, in chunk order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PartialSumSet {
    pub chunks: Vec<Mat2>,
}

/// Pairwise reduction with offset doubling. Returns the sum and the number
/// of rounds, `ceil(log2 m)`.
pub fn tree_reduce<T: Copy + Default + AddAssign>(values: &[T]) -> (T, u32) {
    let mut v = values.to_vec();
    let rounds = tree_reduce_in_place(&mut v);
    (v.first().copied().unwrap_or_default(), rounds)
}

fn tree_reduce_in_place<T: Copy + AddAssign>(v: &mut [T]) -> u32 {
    let m = v.len();
    let mut s = 1;
    let mut rounds = 0;
    while s < m {
        let mut i = 0;
        while i + s < m {
            let x = v[i + s];
            v[i] += x;
            i += 2 * s;
        }
        s *= 2;
        rounds += 1;
    }
    rounds
}

/// Left-to-right sum.
pub fn sequential_reduce<T: Copy + Default + AddAssign>(values: &[T]) -> T {
    let mut acc = T::default();
    for &v in values {
        acc += v;
    }
    acc
}

/// Concatenates per-shard outputs by shard index, whatever order they
/// arrived in.
pub fn combine_shards<T>(mut outputs: Vec<(usize, Vec<T>)>) -> Vec<T> {
    outputs.sort_by_key(|(i, _)| *i);
    outputs.into_iter().flat_map(|(_, v)| v).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelClass {
    Polarization,
    SigmaFirst,
    SigmaSecond,
    Collision,
    Propagate,
    Gather,
}

/// Accumulated wall time per kernel class, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub polarization: f64,
    pub sigma_first: f64,
    pub sigma_second: f64,
    pub collision: f64,
    pub propagate: f64,
    pub gather: f64,
}

impl Timings {
    fn slot(&mut self, class: KernelClass) -> &mut f64 {
        match class {
            KernelClass::Polarization => &mut self.polarization,
            KernelClass::SigmaFirst => &mut self.sigma_first,
            KernelClass::SigmaSecond => &mut self.sigma_second,
            KernelClass::Collision => &mut self.collision,
            KernelClass::Propagate => &mut self.propagate,
            KernelClass::Gather => &mut self.gather,
        }
    }

    pub fn add(&mut self, class: KernelClass, secs: f64) {
        *self.slot(class) += secs;
    }

    /// Everything spent on Σ.
    pub fn sigma(&self) -> f64 {
        self.polarization + self.sigma_first + self.sigma_second
    }

    pub fn minus(&self, o: &Timings) -> Timings {
        Timings {
            polarization: self.polarization - o.polarization,
            sigma_first: self.sigma_first - o.sigma_first,
            sigma_second: self.sigma_second - o.sigma_second,
            collision: self.collision - o.collision,
            propagate: self.propagate - o.propagate,
            gather: self.gather - o.gather,
        }
    }

    /// Entry-wise maximum, the critical path over concurrent shards.
    pub fn max(&self, o: &Timings) -> Timings {
        Timings {
            polarization: self.polarization.max(o.polarization),
            sigma_first: self.sigma_first.max(o.sigma_first),
            sigma_second: self.sigma_second.max(o.sigma_second),
            collision: self.collision.max(o.collision),
            propagate: self.propagate.max(o.propagate),
            gather: self.gather.max(o.gather),
        }
    }

    pub fn plus(&self, o: &Timings) -> Timings {
        Timings {
            polarization: self.polarization + o.polarization,
            sigma_first: self.sigma_first + o.sigma_first,
            sigma_second: self.sigma_second + o.sigma_second,
            collision: self.collision + o.collision,
            propagate: self.propagate + o.propagate,
            gather: self.gather + o.gather,
        }
    }
}

/// Worker pool plus index tables and chunk layout for one grid.
pub struct Engine {
    schedule: Schedule,
    grid: KGrid,
    pool: rayon::ThreadPool,
    fly: OnTheFly,
    tables: Option<IndexTables>,
    chunks: Vec<Range<usize>>,
    timings: Mutex<Timings>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("schedule", &self.schedule)
            .field("n_k", &self.grid.n_k())
            .finish()
    }
}

impl Engine {
    pub fn new(grid: &KGrid, schedule: Schedule) -> Result<Self> {
        schedule.validate(grid.n_k())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(schedule.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?;
        let tables = match schedule.index_mode {
            IndexMode::Lookup => Some(grid.index_tables()),
            IndexMode::OnTheFly => None,
        };
        Ok(Engine {
            chunks: chunk_ranges(grid.n_k(), &schedule),
            fly: grid.on_the_fly(),
            tables,
            pool,
            grid: grid.clone(),
            schedule,
            timings: Mutex::new(Timings::default()),
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn n_k(&self) -> usize {
        self.grid.n_k()
    }

    pub fn chunks(&self) -> &[Range<usize>] {
        &self.chunks
    }

    pub fn on_the_fly(&self) -> &OnTheFly {
        &self.fly
    }

    /// The lookup tables, present only in lookup mode.
    pub fn tables(&self) -> Option<&IndexTables> {
        self.tables.as_ref()
    }

    /// Runs `f(i)` for `i in 0..n` on the pool; output is in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if self.schedule.workers == 1 {
            return (0..n).map(f).collect();
        }
        self.pool
            .install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// Evaluates every chunk of every output and keeps the partials.
    pub fn execute<F>(&self, n_outputs: usize, kernel: F) -> Vec<PartialSumSet>
    where
        F: Fn(usize, Range<usize>) -> Mat2 + Sync + Send,
    {
        self.map(n_outputs, |o| PartialSumSet {
            chunks: self.chunks.iter().map(|r| kernel(o, r.clone())).collect(),
        })
    }

    /// Reduces one partial set with the scheduled reducer.
    pub fn reduce(&self, partials: &PartialSumSet) -> Mat2 {
        match self.schedule.reduce_mode {
            ReduceMode::Sequential => sequential_reduce(&partials.chunks),
            ReduceMode::Tree => tree_reduce(&partials.chunks).0,
        }
    }

    /// `execute` followed by `reduce`, with the partial buffer reused
    /// within each worker.
    pub fn contract<F>(&self, n_outputs: usize, kernel: F) -> Vec<Mat2>
    where
        F: Fn(usize, Range<usize>) -> Mat2 + Sync + Send,
    {
        let mode = self.schedule.reduce_mode;
        let chunks = &self.chunks;
        let one = |buf: &mut Vec<Mat2>, o: usize| {
            buf.clear();
            buf.extend(chunks.iter().map(|r| kernel(o, r.clone())));
            match mode {
                ReduceMode::Sequential => sequential_reduce(buf),
                ReduceMode::Tree => {
                    tree_reduce_in_place(buf);
                    buf.first().copied().unwrap_or_default()
                }
            }
        };
        if self.schedule.workers == 1 {
            let mut buf = Vec::with_capacity(chunks.len());
            return (0..n_outputs).map(|o| one(&mut buf, o)).collect();
        }
        self.pool.install(|| {
            (0..n_outputs)
                .into_par_iter()
                .map_init(|| Vec::with_capacity(chunks.len()), |buf, o| one(buf, o))
                .collect()
        })
    }

    /// Runs `f` and adds its wall time to `class`.
    pub fn timed<T>(&self, class: KernelClass, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(class, start.elapsed().as_secs_f64());
        out
    }

    pub fn record(&self, class: KernelClass, secs: f64) {
        self.timings.lock().unwrap().add(class, secs);
    }

    pub fn timings(&self) -> Timings {
        *self.timings.lock().unwrap()
    }

    pub fn reset_timings(&self) {
        *self.timings.lock().unwrap() = Timings::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn contiguous_shards() {
        let grid = KGrid::new(8).unwrap();
        let sched = Schedule {
            n_shards: 2,
            ..Default::default()
        };
        let p = plan(&grid, 3, &sched).unwrap();
        assert_eq!(p.shards[0].range(), 0..4);
        assert_eq!(p.shards[1].range(), 4..8);
        assert_eq!(p.batches.len(), 1);
        assert_eq!(p.batches[0].len(), 4);
        assert_eq!(p.outputs_per_shard(), 16);
    }

    #[test]
    fn non_divisor_shards_rejected() {
        let grid = KGrid::new(8).unwrap();
        let sched = Schedule {
            n_shards: 3,
            ..Default::default()
        };
        match plan(&grid, 1, &sched) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "n_shards"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbatched_plan_has_one_pair_per_batch() {
        let grid = KGrid::new(4).unwrap();
        let sched = Schedule {
            batch_enabled: false,
            ..Default::default()
        };
        let p = plan(&grid, 2, &sched).unwrap();
        assert_eq!(p.batches.len(), 3);
        assert!(p.batches.iter().all(|b| b.len() == 1));
    }

    #[test]
    fn chunk_counts() {
        for (n_k, bs) in [(8, 128), (16, 128), (32, 100), (64, 1), (12, 7)] {
            let sched = Schedule {
                block_size: bs,
                ..Default::default()
            };
            let c = chunk_ranges(n_k, &sched);
            assert_eq!(c.len(), (n_k * n_k).div_ceil(bs));
            assert_eq!(c.first().unwrap().start, 0);
            assert_eq!(c.last().unwrap().end, n_k * n_k);
            assert!(c.windows(2).all(|w| w[0].end == w[1].start));
        }
        let nested = Schedule {
            fusion_enabled: false,
            ..Default::default()
        };
        assert_eq!(chunk_ranges(16, &nested).len(), 16);
    }

    #[test]
    fn tree_reduce_small_cases() {
        assert_eq!(tree_reduce(&[C64::new(3.0, -1.0)]), (C64::new(3.0, -1.0), 0));
        let (s, r) = tree_reduce(&[1.0f64; 8]);
        assert_eq!((s, r), (8.0, 3));
        let (s, r) = tree_reduce::<f64>(&[]);
        assert_eq!((s, r), (0.0, 0));
        for m in 1..70usize {
            let v: Vec<f64> = (0..m).map(|i| i as f64).collect();
            let (s, r) = tree_reduce(&v);
            assert_eq!(s, (m * (m - 1) / 2) as f64);
            assert_eq!(r, (m as f64).log2().ceil() as u32, "m={m}");
        }
    }

    #[test]
    fn tree_reduce_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<C64> = (0..4096)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let (t, r) = tree_reduce(&v);
        let s = sequential_reduce(&v);
        assert_eq!(r, 12);
        assert!((t - s).norm() <= 1e-12 * s.norm().max(1.0));
    }

    #[test]
    fn combine_is_arrival_order_independent() {
        let a = combine_shards(vec![(1, vec![3, 4]), (0, vec![1, 2]), (2, vec![5])]);
        assert_eq!(a, vec![1, 2, 3, 4, 5]);
        assert_eq!(combine_shards(vec![(0, vec![7, 8])]), vec![7, 8]);
    }

    fn toy_kernel(o: usize, r: Range<usize>) -> Mat2 {
        let mut acc = Mat2::ZERO;
        for x in r {
            let v = ((o * 31 + x * 17) % 97) as f64 * 1e-3 + 1.0 / (x + 1) as f64;
            acc += Mat2::diag(C64::new(v, -v), C64::new(v * v, 0.5));
        }
        acc
    }

    #[test]
    fn workers_do_not_change_bits() {
        let grid = KGrid::new(16).unwrap();
        let base = Engine::new(&grid, Schedule::default()).unwrap();
        let want = base.contract(40, toy_kernel);
        for w in [2, 3, 4] {
            let e = Engine::new(
                &grid,
                Schedule {
                    workers: w,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(e.contract(40, toy_kernel), want);
        }
    }

    #[test]
    fn contract_equals_execute_then_reduce() {
        let grid = KGrid::new(16).unwrap();
        for reduce_mode in [ReduceMode::Sequential, ReduceMode::Tree] {
            let e = Engine::new(
                &grid,
                Schedule {
                    block_size: 10,
                    reduce_mode,
                    ..Default::default()
                },
            )
            .unwrap();
            let parts = e.execute(5, toy_kernel);
            assert_eq!(parts[0].chunks.len(), 26);
            let reduced: Vec<Mat2> = parts.iter().map(|p| e.reduce(p)).collect();
            assert_eq!(e.contract(5, toy_kernel), reduced);
        }
        let e = Engine::new(&grid, Schedule::default()).unwrap();
        assert!(e.execute(0, toy_kernel).is_empty());
    }

    #[test]
    fn timings_accumulate() {
        let grid = KGrid::new(4).unwrap();
        let e = Engine::new(&grid, Schedule::default()).unwrap();
        e.record(KernelClass::SigmaSecond, 0.25);
        e.record(KernelClass::SigmaSecond, 0.25);
        e.record(KernelClass::Collision, 1.0);
        let t = e.timings();
        assert_eq!(t.sigma_second, 0.5);
        assert_eq!(t.sigma(), 0.5);
        e.reset_timings();
        assert_eq!(e.timings(), Timings::default());
    }
}
