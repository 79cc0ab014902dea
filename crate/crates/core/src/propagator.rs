//! Two-time stepping: predictor, corrector loop, both sweeps and the
//! diagonal.
//!
//! Step `n` (frontier `m = n - 1` already final):
//!
//! ```text
//! G<(t_n, t_l) = Φ [G<(t_m, t_l) - iΔt Ī<]           l < n
//! G>(t_j, t_n) = [G>(t_j, t_m) + iΔt Ī>] Φ†          j < n
//! G≷(t_n, t_n) = Φ [G≷(t_m, t_n) - iΔt Ī≷]
//! ```
//!
//! with `Φ = exp(-i h(t_m + Δt/2) Δt)`. The predictor takes `Ī` from
//! frontier `m` alone, the corrector averages it with frontier `n`.

use std::time::Instant;

use num_complex::Complex64 as C64;

use crate::collision::{
    collision_frontier, CollisionFrontier, LimitMode, QuadratureKind, QuadratureRule,
};
use crate::engine::{shard_ranges, Engine, Schedule, ShardRange, Timings};
use crate::kgrid::KGrid;
use crate::linalg::Mat2;
use crate::model::Model;
use crate::selfenergy::{evaluate_sigma, FrontierSigma};
use crate::state::{
    gather, gather_frontier, observables_from_rho, storage_bytes, Component, Observables,
    TwoTimeGF, TwoTimeStore, DEFAULT_MEMORY_BUDGET,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Corrector stops once the frontier changes by at most this much.
    pub eps: f64,
    pub max_iter: usize,
    pub quadrature: QuadratureKind,
    pub limit_mode: LimitMode,
    /// Cap on G and Σ storage over all shards, in bytes.
    pub memory_budget: u64,
}

impl StepConfig {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        StepConfig {
            dt,
            n_steps,
            eps: 1e-9,
            max_iter: 6,
            quadrature: QuadratureKind::Trapezoid,
            limit_mode: LimitMode::AsPrinted,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive and finite"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::config("eps", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn rule(&self) -> QuadratureRule {
        QuadratureRule::new(self.quadrature, self.dt)
    }
}

/// Diagnostics for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub iterations: usize,
    /// Frontier change of the last corrector pass.
    pub residual: f64,
    /// Frontier change of every corrector pass, in order.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// `max_k |G>(t,t) - G<(t,t) + i|` at the new time.
    pub drift: f64,
    pub density: f64,
    /// Critical-path time per kernel class over shards.
    pub timings: Timings,
    pub wall_s: f64,
}

/// One shard: its k-range, its G, and its Σ history.
#[derive(Clone, Debug)]
pub struct Shard {
    pub range: ShardRange,
    pub g: TwoTimeGF,
    pub sigma: TwoTimeStore,
}

/// A propagation over all shards with one engine.
#[derive(Debug)]
pub struct Propagation {
    model: Model,
    engine: Engine,
    cfg: StepConfig,
    shards: Vec<Shard>,
}

fn shard_times(engine: &Engine, before: Timings) -> Timings {
    engine.timings().minus(&before)
}

impl Propagation {
    pub fn new(model: Model, grid: &KGrid, schedule: Schedule, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        if model.n_k() != grid.n_k() {
            return Err(Error::contract("model and grid disagree on n_k"));
        }
        model.config.validate(grid.n_k(), cfg.n_steps)?;
        schedule.validate(grid.n_k())?;
        let ranges = shard_ranges(grid.n_k(), schedule.n_shards)?;
        let per = storage_bytes(ranges[0].len, cfg.n_steps + 1);
        let required = 2 * per * ranges.len() as u64;
        if required > cfg.memory_budget {
            return Err(Error::Capacity {
                required,
                budget: cfg.memory_budget,
            });
        }
        let shards = ranges
            .into_iter()
            .map(|range| {
                Ok(Shard {
                    g: TwoTimeGF::ground_state(
                        grid.n_k(),
                        range.len,
                        range.start,
                        cfg.n_steps,
                        cfg.dt,
                        u64::MAX,
                    )?,
                    sigma: TwoTimeStore::zeros(cfg.n_steps + 1, range.len, range.start),
                    range,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Propagation {
            engine: Engine::new(grid, schedule)?,
            model,
            cfg,
            shards,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn shard_mut(&mut self, i: usize) -> &mut Shard {
        &mut self.shards[i]
    }

    pub fn frontier(&self) -> usize {
        self.shards[0].g.frontier()
    }

    pub fn n_k(&self) -> usize {
        self.model.n_k()
    }

    /// Equal-time lesser function at `t_i` over the full grid.
    pub fn rho(&self, i: usize) -> Vec<Mat2> {
        gather(&self.shards.iter().map(|s| s.g.rho(i)).collect::<Vec<_>>())
    }

    pub fn observables(&self, i: usize) -> Observables {
        observables_from_rho(&self.rho(i), i as f64 * self.cfg.dt)
    }

    pub fn anticommutator_drift(&self, i: usize) -> f64 {
        self.shards
            .iter()
            .map(|s| s.g.anticommutator_drift(i))
            .fold(0.0, f64::max)
    }

    /// Single-store copy of the full state.
    pub fn gathered_state(&self) -> TwoTimeGF {
        let n_k = self.n_k();
        let points = self.cfg.n_steps + 1;
        let mut store = TwoTimeStore::zeros(points, n_k, 0);
        for c in [Component::Lesser, Component::Greater] {
            for i in 0..points {
                for l in 0..points {
                    let dst = store.slice_mut(c, i, l);
                    for s in &self.shards {
                        dst[s.range.range()].copy_from_slice(s.g.store.slice(c, i, l));
                    }
                }
            }
        }
        TwoTimeGF::from_store(store, n_k, self.cfg.dt, self.frontier())
    }

    /// Σ and then I on frontier `m` for every shard. Returns the collision
    /// frontiers and the critical-path timings.
    fn evaluate_frontier(&mut self, m: usize) -> Result<(Vec<CollisionFrontier>, Timings)> {
        let t0 = Instant::now();
        let stores: Vec<&TwoTimeStore> = self.shards.iter().map(|s| &s.g.store).collect();
        let frontier = gather_frontier(&stores, m);
        let gather_s = t0.elapsed().as_secs_f64();

        let rule = self.cfg.rule();
        let mut worst = Timings::default();
        let mut out = Vec::with_capacity(self.shards.len());
        for shard in &mut self.shards {
            let before = self.engine.timings();
            let sigma = evaluate_sigma(&self.engine, &frontier, &self.model.config.u, shard.range.range())?;
            store_sigma(&mut shard.sigma, &sigma);
            out.push(collision_frontier(
                &self.engine,
                &shard.g,
                &shard.sigma,
                m,
                &rule,
                self.cfg.limit_mode,
            )?);
            worst = worst.max(&shard_times(&self.engine, before));
        }
        worst.gather += gather_s;
        Ok((out, worst))
    }

    /// Advances one step. On a non-finite input frontier nothing changes.
    pub fn step(&mut self) -> Result<StepReport> {
        let start = Instant::now();
        let m = self.frontier();
        let n = m + 1;
        if n > self.cfg.n_steps {
            return Err(Error::contract(format!(
                "step {n} exceeds the allocated {} steps",
                self.cfg.n_steps
            )));
        }
        if let Some(s) = self.shards.iter().find(|s| !s.g.frontier_is_finite(m)) {
            return Err(Error::Poisoned {
                step: n,
                what: format!("frontier {m} of shard {} is not finite", s.range.index),
            });
        }

        let mut timings = Timings::default();
        let (prev, t) = self.evaluate_frontier(m)?;
        timings = timings.plus(&t);

        let rho_m = self.rho(m);
        let h = self.model.h_step(n, &rho_m);
        let dt = self.cfg.dt;
        let t0 = Instant::now();
        for (shard, prev) in self.shards.iter_mut().zip(&prev) {
            let phi = propagators(&h.h[shard.range.range()], dt);
            predict(&mut shard.g, &phi, prev, dt);
        }
        timings.propagate += t0.elapsed().as_secs_f64();

        let mut residuals = Vec::new();
        let mut converged = false;
        for _ in 0..self.cfg.max_iter {
            let (cur, t) = self.evaluate_frontier(n)?;
            timings = timings.plus(&t);
            let rho_n = self.rho(n);
            let rho_mid: Vec<Mat2> = rho_m
                .iter()
                .zip(&rho_n)
                .map(|(a, b)| (*a + *b).scale_re(0.5))
                .collect();
            let h = self.model.h_step(n, &rho_mid);
            let t0 = Instant::now();
            let mut residual: f64 = 0.0;
            for ((shard, prev), cur) in self.shards.iter_mut().zip(&prev).zip(&cur) {
                let phi = propagators(&h.h[shard.range.range()], dt);
                residual = residual.max(correct(&mut shard.g, &phi, prev, cur, dt));
            }
            timings.propagate += t0.elapsed().as_secs_f64();
            residuals.push(residual);
            if residual <= self.cfg.eps {
                converged = true;
                break;
            }
        }

        if let Some(s) = self.shards.iter().find(|s| !s.g.frontier_is_finite(n)) {
            return Err(Error::Poisoned {
                step: n,
                what: format!("step produced non-finite values in shard {}", s.range.index),
            });
        }
        let obs = self.observables(n);
        Ok(StepReport {
            step: n,
            iterations: residuals.len(),
            residual: *residuals.last().unwrap_or(&0.0),
            residuals,
            converged,
            drift: self.anticommutator_drift(n),
            density: obs.density,
            timings,
            wall_s: start.elapsed().as_secs_f64(),
        })
    }

    /// Takes `steps` steps, calling `sink` after each.
    pub fn run_with(
        &mut self,
        steps: usize,
        mut sink: impl FnMut(&StepReport, &Observables),
    ) -> Result<Vec<StepReport>> {
        let mut reports = Vec::with_capacity(steps);
        for _ in 0..steps {
            let r = self.step()?;
            sink(&r, &self.observables(r.step));
            reports.push(r);
        }
        Ok(reports)
    }

    /// Runs all configured steps.
    pub fn run(&mut self) -> Result<Vec<StepReport>> {
        let left = self.cfg.n_steps - self.frontier();
        self.run_with(left, |_, _| {})
    }
}

/// Writes Σ on frontier `n` into the history and fills the mirrored points.
pub fn store_sigma(store: &mut TwoTimeStore, sigma: &FrontierSigma) {
    let n = sigma.n;
    for j in 0..=n {
        store
            .slice_mut(Component::Lesser, j, n)
            .copy_from_slice(&sigma.lesser_col[j]);
        store
            .slice_mut(Component::Greater, n, j)
            .copy_from_slice(&sigma.greater_row[j]);
    }
    store.mirror_column_to_row(Component::Lesser, n);
    store.mirror_row_to_column(Component::Greater, n);
    store.symmetrize_diagonal(Component::Lesser, n);
    store.symmetrize_diagonal(Component::Greater, n);
}

/// `Φ(k) = exp(-i h(k) Δt)` per k.
pub fn propagators(h: &[Mat2], dt: f64) -> Vec<Mat2> {
    h.iter().map(|h| Mat2::propagator(h, dt)).collect()
}

const MINUS_I: C64 = C64::new(0.0, -1.0);

/// `Φ (G - iΔt I)`.
#[inline]
fn forward(phi: &Mat2, g: Mat2, i: Mat2, dt: f64) -> Mat2 {
    *phi * (g + i.scale(MINUS_I * dt))
}

/// `(G + iΔt I) Φ†`.
#[inline]
fn backward(phi: &Mat2, g: Mat2, i: Mat2, dt: f64) -> Mat2 {
    (g - i.scale(MINUS_I * dt)) * phi.adjoint()
}

fn average(a: &Mat2, b: &Mat2) -> Mat2 {
    (*a + *b).scale_re(0.5)
}

/// Writes frontier `n = g.frontier() + 1` from sources `src(l, k)` for
/// the lesser row, `src_g(j, k)` for the greater column, and the two
/// diagonal sources, then mirrors and advances the frontier counter.
#[allow(clippy::too_many_arguments)]
fn advance(
    g: &mut TwoTimeGF,
    phi: &[Mat2],
    dt: f64,
    n: usize,
    src_l: impl Fn(usize, usize) -> Mat2,
    src_g: impl Fn(usize, usize) -> Mat2,
    diag_l: impl Fn(usize) -> Mat2,
    diag_g: impl Fn(usize) -> Mat2,
) {
    use Component::{Greater, Lesser};
    let m = n - 1;
    let st = &mut g.store;
    for l in 0..n {
        for (k, p) in phi.iter().enumerate() {
            let v = forward(p, st.get(Lesser, k, m, l), src_l(l, k), dt);
            st.set(Lesser, k, n, l, v);
            let v = backward(p, st.get(Greater, k, l, m), src_g(l, k), dt);
            st.set(Greater, k, l, n, v);
        }
    }
    st.mirror_row_to_column(Lesser, n);
    st.mirror_column_to_row(Greater, n);
    for (k, p) in phi.iter().enumerate() {
        let v = forward(p, st.get(Lesser, k, m, n), diag_l(k), dt);
        st.set(Lesser, k, n, n, v);
        let v = forward(p, st.get(Greater, k, m, n), diag_g(k), dt);
        st.set(Greater, k, n, n, v);
    }
    g.set_frontier(n);
    g.mirror_frontier();
}

/// Predictor for step `n = g.frontier() + 1`, using collision integrals
/// from frontier `n - 1` only.
pub fn predict(g: &mut TwoTimeGF, phi: &[Mat2], prev: &CollisionFrontier, dt: f64) {
    let m = prev.n;
    debug_assert_eq!(g.frontier(), m);
    advance(
        g,
        phi,
        dt,
        m + 1,
        |l, k| prev.lesser_row[l][k],
        |j, k| prev.greater_col[j][k],
        |k| prev.lesser_row[m][k],
        |k| prev.greater_col[m][k],
    );
}

/// One corrector pass on frontier `n = cur.n`. Returns the largest entry
/// change of the lesser row and greater column.
pub fn correct(
    g: &mut TwoTimeGF,
    phi: &[Mat2],
    prev: &CollisionFrontier,
    cur: &CollisionFrontier,
    dt: f64,
) -> f64 {
    use Component::{Greater, Lesser};
    let n = cur.n;
    let m = prev.n;
    debug_assert_eq!(m + 1, n);
    let old_l: Vec<Mat2> = (0..=n).flat_map(|l| g.store.slice(Lesser, n, l).to_vec()).collect();
    let old_g: Vec<Mat2> = (0..=n).flat_map(|j| g.store.slice(Greater, j, n).to_vec()).collect();
    g.set_frontier(m);
    advance(
        g,
        phi,
        dt,
        n,
        |l, k| average(&prev.lesser_row[l][k], &cur.lesser_row[l][k]),
        |j, k| average(&prev.greater_col[j][k], &cur.greater_col[j][k]),
        |k| average(&cur.lesser_above[k], &cur.lesser_row[n][k]),
        |k| average(&cur.greater_col[m][k], &cur.greater_col[n][k]),
    );
    let new_l = (0..=n).flat_map(|l| g.store.slice(Lesser, n, l).to_vec());
    let new_g = (0..=n).flat_map(|j| g.store.slice(Greater, j, n).to_vec());
    old_l
        .iter()
        .zip(new_l)
        .chain(old_g.iter().zip(new_g))
        .map(|(a, b)| (*a - b).max_abs())
        .fold(0.0, f64::max)
}
