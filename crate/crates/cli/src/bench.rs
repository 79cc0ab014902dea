//! Kernel timing on seeded synthetic data: single benchmarks, parameter
//! sweeps, and strong/weak scaling tables.

use std::time::Instant;

use kbe_core::collision::{collision_frontier, frontier_entry_count, LimitMode, QuadratureKind, QuadratureRule};
use kbe_core::engine::{shard_ranges, Engine, Schedule, Timings};
use kbe_core::kgrid::KGrid;
use kbe_core::linalg::Mat2;
use kbe_core::model::UProtocol;
use kbe_core::selfenergy::evaluate_sigma;
use kbe_core::state::{Component, FrontierSlices, TwoTimeGF, TwoTimeStore};
use kbe_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Full Σ≷ on one frontier.
    Sigma,
    /// Collision integrals on one frontier.
    Ci,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub kernel: Kernel,
    pub n_k: usize,
    /// Frontier index; Σ sees `n_t + 1` pairs.
    pub n_t: usize,
    pub schedule: Schedule,
    pub warmup: usize,
    pub reps: usize,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(kernel: Kernel, n_k: usize, n_t: usize) -> Self {
        BenchSpec {
            kernel,
            n_k,
            n_t,
            schedule: Schedule::default(),
            warmup: 2,
            reps: 5,
            seed: 1,
        }
    }
}

/// One row of a benchmark table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub kernel: Kernel,
    pub n_k: usize,
    pub n_t: usize,
    pub shards: usize,
    pub workers: usize,
    pub block_size: usize,
    pub fusion: bool,
    pub index_mode: String,
    pub reduce_mode: String,
    pub batch: bool,
    pub reps: usize,
    /// Median over repetitions of the per-repetition critical path.
    pub median_s: f64,
    /// `(max - min) / median` over repetitions.
    pub spread: f64,
    /// Median time of the Σ² contraction alone (Σ kernel only).
    pub sigma2_median_s: f64,
    /// `median_s` per evaluated frontier entry.
    pub per_pair_s: f64,
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    match s.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => s[n / 2],
        n => 0.5 * (s[n / 2 - 1] + s[n / 2]),
    }
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    (max - min) / median(v)
}

fn random_mat(rng: &mut ChaCha8Rng) -> Mat2 {
    let mut m = Mat2::ZERO;
    for z in m.0.iter_mut() {
        *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    m
}

/// Seeded random frontier over the full grid.
pub fn synthetic_frontier(n_k: usize, n: usize, seed: u64) -> FrontierSlices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slice = |rng: &mut ChaCha8Rng| (0..n_k).map(|_| random_mat(rng)).collect::<Vec<_>>();
    FrontierSlices {
        n,
        lesser_col: (0..=n).map(|_| slice(&mut rng)).collect(),
        greater_row: (0..=n).map(|_| slice(&mut rng)).collect(),
    }
}

/// Seeded random G and Σ histories for one shard, frontier at `n`.
pub fn synthetic_history(n_k: usize, n_k_local: usize, offset: usize, n: usize, dt: f64, seed: u64) -> (TwoTimeGF, TwoTimeStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = n + 1;
    let mut g = TwoTimeStore::zeros(points, n_k_local, offset);
    let mut s = TwoTimeStore::zeros(points, n_k_local, offset);
    for c in [Component::Lesser, Component::Greater] {
        for i in 0..points {
            for l in 0..points {
                for k in 0..n_k_local {
                    g.set(c, k, i, l, random_mat(&mut rng));
                    s.set(c, k, i, l, random_mat(&mut rng));
                }
            }
        }
    }
    (TwoTimeGF::from_store(g, n_k, dt, n), s)
}

/// Timings of one repetition: critical path over shards.
struct Rep {
    total: f64,
    timings: Timings,
}

fn sigma_rep(engine: &Engine, frontier: &FrontierSlices, u: &UProtocol) -> CliResult<Rep> {
    let mut worst = Rep {
        total: 0.0,
        timings: Timings::default(),
    };
    for shard in shard_ranges(engine.n_k(), engine.schedule().n_shards)? {
        engine.reset_timings();
        let t0 = Instant::now();
        let out = evaluate_sigma(engine, frontier, u, shard.range())?;
        let dt = t0.elapsed().as_secs_f64();
        std::hint::black_box(out);
        worst.total = worst.total.max(dt);
        worst.timings = worst.timings.max(&engine.timings());
    }
    Ok(worst)
}

fn ci_rep(engine: &Engine, shards: &[(TwoTimeGF, TwoTimeStore)], n: usize, rule: &QuadratureRule) -> CliResult<Rep> {
    let mut worst = Rep {
        total: 0.0,
        timings: Timings::default(),
    };
    for (g, s) in shards {
        engine.reset_timings();
        let t0 = Instant::now();
        let out = collision_frontier(engine, g, s, n, rule, LimitMode::AsPrinted)?;
        let dt = t0.elapsed().as_secs_f64();
        std::hint::black_box(out);
        worst.total = worst.total.max(dt);
        worst.timings = worst.timings.max(&engine.timings());
    }
    Ok(worst)
}

fn check_spec(spec: &BenchSpec) -> CliResult<KGrid> {
    if spec.reps == 0 {
        return Err(CliError::Config("invalid configuration `reps`: must be at least 1".into()));
    }
    let grid = KGrid::new(spec.n_k)?;
    spec.schedule.validate(spec.n_k)?;
    Ok(grid)
}

/// Times one kernel: `warmup` discarded runs, then `reps` measured ones.
pub fn run_bench(spec: &BenchSpec) -> CliResult<BenchRow> {
    let grid = check_spec(spec)?;
    let engine = Engine::new(&grid, spec.schedule.clone())?;
    let mut reps = Vec::with_capacity(spec.reps);
    let entries = match spec.kernel {
        Kernel::Sigma => {
            let frontier = synthetic_frontier(spec.n_k, spec.n_t, spec.seed);
            let u = UProtocol::Constant(1.0);
            for r in 0..spec.warmup + spec.reps {
                let rep = sigma_rep(&engine, &frontier, &u)?;
                if r >= spec.warmup {
                    reps.push(rep);
                }
            }
            2 * spec.n_t + 1
        }
        Kernel::Ci => {
            let dt = 0.02;
            let shards: Vec<_> = shard_ranges(spec.n_k, spec.schedule.n_shards)?
                .iter()
                .map(|r| synthetic_history(spec.n_k, r.len, r.start, spec.n_t, dt, spec.seed + r.index as u64))
                .collect();
            let rule = QuadratureRule::new(QuadratureKind::Trapezoid, dt);
            for r in 0..spec.warmup + spec.reps {
                let rep = ci_rep(&engine, &shards, spec.n_t, &rule)?;
                if r >= spec.warmup {
                    reps.push(rep);
                }
            }
            frontier_entry_count(spec.n_t)
        }
    };
    let totals: Vec<f64> = reps.iter().map(|r| r.total).collect();
    let s2: Vec<f64> = reps.iter().map(|r| r.timings.sigma_second).collect();
    let med = median(&totals);
    let sch = &spec.schedule;
    Ok(BenchRow {
        kernel: spec.kernel,
        n_k: spec.n_k,
        n_t: spec.n_t,
        shards: sch.n_shards,
        workers: sch.workers,
        block_size: sch.block_size,
        fusion: sch.fusion_enabled,
        index_mode: format!("{:?}", sch.index_mode).to_lowercase(),
        reduce_mode: format!("{:?}", sch.reduce_mode).to_lowercase(),
        batch: sch.batch_enabled,
        reps: spec.reps,
        median_s: med,
        spread: spread(&totals),
        sigma2_median_s: if spec.kernel == Kernel::Sigma { median(&s2) } else { 0.0 },
        per_pair_s: med / entries as f64,
    })
}

/// Every `(block_size, workers)` combination once, block size outermost.
pub fn run_sweep(base: &BenchSpec, block_sizes: &[usize], workers: &[usize]) -> CliResult<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(block_sizes.len() * workers.len());
    for &bs in block_sizes {
        for &w in workers {
            let mut spec = base.clone();
            spec.schedule.block_size = bs;
            spec.schedule.workers = w;
            rows.push(run_bench(&spec)?);
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScalingMode {
    /// Fixed n_k; shards and workers grow together.
    Strong,
    /// `n_k = 16 × shards`.
    Weak,
}

/// k-points per shard in weak scaling.
pub const WEAK_K_PER_SHARD: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub mode: ScalingMode,
    pub shards: usize,
    pub workers: usize,
    pub n_k: usize,
    pub n_t: usize,
    /// Σ critical-path time.
    pub sigma_s: f64,
    /// Collision critical-path time.
    pub ci_s: f64,
    /// Ratio to the previous row.
    pub sigma_ratio: f64,
    pub ci_ratio: f64,
    /// Σ speedup over the first row.
    pub speedup: f64,
    /// Strong: `speedup / (shards / shards_0)`. Weak: `t_0 / t`.
    pub efficiency: f64,
}

pub fn run_scaling(
    mode: ScalingMode,
    shards: &[usize],
    n_k: usize,
    n_t: usize,
    base: &Schedule,
    warmup: usize,
    reps: usize,
) -> CliResult<Vec<ScalingRow>> {
    let mut rows: Vec<ScalingRow> = Vec::new();
    for &p in shards {
        let (nk, workers) = match mode {
            ScalingMode::Strong => (n_k, p),
            ScalingMode::Weak => (WEAK_K_PER_SHARD * p, base.workers),
        };
        let schedule = Schedule {
            n_shards: p,
            workers,
            ..base.clone()
        };
        let mut spec = BenchSpec {
            schedule,
            warmup,
            reps,
            ..BenchSpec::new(Kernel::Sigma, nk, n_t)
        };
        let sigma = run_bench(&spec)?.median_s;
        spec.kernel = Kernel::Ci;
        let ci = run_bench(&spec)?.median_s;
        let (sigma_ratio, ci_ratio) = rows
            .last()
            .map_or((1.0, 1.0), |r| (sigma / r.sigma_s, ci / r.ci_s));
        let first = rows.first();
        let t0 = first.map_or(sigma, |r| r.sigma_s);
        let p0 = first.map_or(p, |r| r.shards);
        let speedup = t0 / sigma;
        let efficiency = match mode {
            ScalingMode::Strong => speedup / (p as f64 / p0 as f64),
            ScalingMode::Weak => speedup,
        };
        rows.push(ScalingRow {
            mode,
            shards: p,
            workers,
            n_k: nk,
            n_t,
            sigma_s: sigma,
            ci_s: ci,
            sigma_ratio,
            ci_ratio,
            speedup,
            efficiency,
        });
    }
    Ok(rows)
}

/// Writes rows as comma-separated text with one header row.
pub fn write_csv<T: Serialize>(w: impl std::io::Write, rows: &[T]) -> CliResult<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
