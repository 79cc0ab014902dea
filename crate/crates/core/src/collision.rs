//! Collision integrals I≷ over the time history.
//!
//! ```text
//! I<(t_i, t_l) = Σ_{t̄ ≤ t_i} w (G> - G<)(t_i, t̄) Σ<(t̄, t_l)
//!              + Σ_{t̄ ≤ t_u} w G<(t_i, t̄) (Σ< - Σ>)(t̄, t_l)
//! ```
//!
//! and I> with Σ> in the first term and G> in the second. The upper limit
//! `t_u` of the second sum is `t_i` or `t_l` depending on [`LimitMode`].

use num_complex::Complex64 as C64;

use crate::engine::{Engine, KernelClass};
use crate::linalg::Mat2;
use crate::state::{Component, TwoTimeGF, TwoTimeStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuadratureKind {
    #[default]
    Trapezoid,
    /// Composite Simpson; odd interval counts get a trapezoid first interval.
    Simpson,
}

/// Upper limit of the second history sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LimitMode {
    /// Both sums run to `t_i`.
    #[default]
    AsPrinted,
    /// The second sum runs to `t_l`.
    Langreth,
}

impl LimitMode {
    pub fn upper(self, i: usize, l: usize) -> usize {
        match self {
            LimitMode::AsPrinted => i,
            LimitMode::Langreth => l,
        }
    }
}

/// Weight of point `idx` in an `n`-interval rule on spacing `dt`.
pub fn quadrature_weight(n: usize, idx: usize, dt: f64, kind: QuadratureKind) -> f64 {
    debug_assert!(idx <= n);
    if n == 0 {
        return 0.0;
    }
    let trap = |idx: usize, n: usize| if idx == 0 || idx == n { 0.5 } else { 1.0 };
    let simpson = |r: usize, n: usize| {
        if r == 0 || r == n {
            1.0 / 3.0
        } else if r % 2 == 1 {
            4.0 / 3.0
        } else {
            2.0 / 3.0
        }
    };
    let w = match kind {
        QuadratureKind::Trapezoid => trap(idx, n),
        QuadratureKind::Simpson if n == 1 => trap(idx, n),
        QuadratureKind::Simpson if n.is_multiple_of(2) => simpson(idx, n),
        QuadratureKind::Simpson => match idx {
            0 => 0.5,
            1 => 0.5 + simpson(0, n - 1),
            _ => simpson(idx - 1, n - 1),
        },
    };
    w * dt
}

/// The `n + 1` weights of an `n`-interval rule. `n = 0` gives `[0.0]`.
pub fn quadrature_weights(n: usize, dt: f64, kind: QuadratureKind) -> Vec<f64> {
    (0..=n).map(|i| quadrature_weight(n, i, dt, kind)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub dt: f64,
}

impl QuadratureRule {
    pub fn new(kind: QuadratureKind, dt: f64) -> Self {
        QuadratureRule { kind, dt }
    }

    pub fn weights(&self, n: usize) -> Vec<f64> {
        quadrature_weights(n, self.dt, self.kind)
    }

    /// Integral of samples `f[0..=n]`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        match f.len() {
            0 => 0.0,
            len => self.weights(len - 1).iter().zip(f).map(|(w, y)| w * y).sum(),
        }
    }
}

/// One collision entry at local k, without bounds checks.
#[allow(clippy::too_many_arguments)]
fn entry(
    g: &TwoTimeStore,
    sigma: &TwoTimeStore,
    comp: Component,
    k: usize,
    i: usize,
    l: usize,
    rule: &QuadratureRule,
    limit: LimitMode,
) -> Mat2 {
    use Component::{Greater, Lesser};
    let mut acc = Mat2::ZERO;
    for tb in 0..=i {
        let w = quadrature_weight(i, tb, rule.dt, rule.kind);
        if w == 0.0 {
            continue;
        }
        let retarded = g.get(Greater, k, i, tb) - g.get(Lesser, k, i, tb);
        acc += (retarded * sigma.get(comp, k, tb, l)).scale_re(w);
    }
    let u = limit.upper(i, l);
    for tb in 0..=u {
        let w = quadrature_weight(u, tb, rule.dt, rule.kind);
        if w == 0.0 {
            continue;
        }
        let advanced = sigma.get(Lesser, k, tb, l) - sigma.get(Greater, k, tb, l);
        acc += (g.get(comp, k, i, tb) * advanced).scale_re(w);
    }
    acc
}

/// [`entry`] for every local k at once, k innermost.
fn entry_all_k(
    g: &TwoTimeStore,
    sigma: &TwoTimeStore,
    comp: Component,
    i: usize,
    l: usize,
    rule: &QuadratureRule,
    limit: LimitMode,
) -> Vec<Mat2> {
    use Component::{Greater, Lesser};
    let mut acc = vec![Mat2::ZERO; g.n_k_local()];
    for tb in 0..=i {
        let w = quadrature_weight(i, tb, rule.dt, rule.kind);
        if w == 0.0 {
            continue;
        }
        let (gg, gl, s) = (g.slice(Greater, i, tb), g.slice(Lesser, i, tb), sigma.slice(comp, tb, l));
        for (k, a) in acc.iter_mut().enumerate() {
            *a += ((gg[k] - gl[k]) * s[k]).scale_re(w);
        }
    }
    let u = limit.upper(i, l);
    for tb in 0..=u {
        let w = quadrature_weight(u, tb, rule.dt, rule.kind);
        if w == 0.0 {
            continue;
        }
        let (sl, sg, x) = (sigma.slice(Lesser, tb, l), sigma.slice(Greater, tb, l), g.slice(comp, i, tb));
        for (k, a) in acc.iter_mut().enumerate() {
            *a += (x[k] * (sl[k] - sg[k])).scale_re(w);
        }
    }
    acc
}

fn check_history(state: &TwoTimeGF, i: usize, l: usize, limit: LimitMode) -> Result<()> {
    let need = i.max(l).max(limit.upper(i, l));
    if need > state.frontier() {
        return Err(Error::contract(format!(
            "collision at ({i}, {l}) needs history up to {need}, frontier is {}",
            state.frontier()
        )));
    }
    Ok(())
}

/// `I<(k; t_i, t_l)` at local k.
pub fn collision_lesser(
    state: &TwoTimeGF,
    sigma: &TwoTimeStore,
    k: usize,
    i: usize,
    l: usize,
    rule: &QuadratureRule,
    limit: LimitMode,
) -> Result<Mat2> {
    check_history(state, i, l, limit)?;
    Ok(entry(&state.store, sigma, Component::Lesser, k, i, l, rule, limit))
}

/// `I>(k; t_i, t_l)` at local k.
pub fn collision_greater(
    state: &TwoTimeGF,
    sigma: &TwoTimeStore,
    k: usize,
    i: usize,
    l: usize,
    rule: &QuadratureRule,
    limit: LimitMode,
) -> Result<Mat2> {
    check_history(state, i, l, limit)?;
    Ok(entry(&state.store, sigma, Component::Greater, k, i, l, rule, limit))
}

/// Collision integrals needed around frontier `n`, local k:
/// `lesser_row[l] = I<(t_n, t_l)`, `greater_col[j] = I>(t_j, t_n)` for
/// `l, j = 0..=n`, and `lesser_above = I<(t_{n-1}, t_n)` (empty at `n = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionFrontier {
    pub n: usize,
    pub lesser_row: Vec<Vec<Mat2>>,
    pub greater_col: Vec<Vec<Mat2>>,
    pub lesser_above: Vec<Mat2>,
}

/// `(component, i, l)` of every frontier entry, in output order.
fn frontier_entries(n: usize) -> Vec<(Component, usize, usize)> {
    let mut e: Vec<_> = (0..=n).map(|l| (Component::Lesser, n, l)).collect();
    e.extend((0..=n).map(|j| (Component::Greater, j, n)));
    if n > 0 {
        e.push((Component::Lesser, n - 1, n));
    }
    e
}

/// `rows` holds one `Vec` over local k per entry, in entry order.
fn assemble_frontier(n: usize, mut rows: Vec<Vec<Mat2>>) -> CollisionFrontier {
    let lesser_above = if n > 0 { rows.pop().unwrap_or_default() } else { Vec::new() };
    let greater_col = rows.split_off(n + 1);
    CollisionFrontier {
        n,
        lesser_row: rows,
        greater_col,
        lesser_above,
    }
}

/// All frontier entries in one launch, one work item per entry covering
/// every local k.
pub fn collision_frontier(
    engine: &Engine,
    state: &TwoTimeGF,
    sigma: &TwoTimeStore,
    n: usize,
    rule: &QuadratureRule,
    limit: LimitMode,
) -> Result<CollisionFrontier> {
    check_history(state, n, n, limit)?;
    let entries = frontier_entries(n);
    let rows = engine.timed(KernelClass::Collision, || {
        engine.map(entries.len(), |o| {
            let (c, i, l) = entries[o];
            entry_all_k(&state.store, sigma, c, i, l, rule, limit)
        })
    });
    Ok(assemble_frontier(n, rows))
}

/// Same as [`collision_frontier`], one pair at a time through the public
/// per-entry functions.
pub fn collision_frontier_looped(
    state: &TwoTimeGF,
    sigma: &TwoTimeStore,
    n: usize,
    rule: &QuadratureRule,
    limit: LimitMode,
) -> Result<CollisionFrontier> {
    let n_k = state.n_k_local();
    let mut rows = Vec::new();
    for (c, i, l) in frontier_entries(n) {
        let mut row = Vec::with_capacity(n_k);
        for k in 0..n_k {
            row.push(match c {
                Component::Lesser => collision_lesser(state, sigma, k, i, l, rule, limit)?,
                Component::Greater => collision_greater(state, sigma, k, i, l, rule, limit)?,
            });
        }
        rows.push(row);
    }
    Ok(assemble_frontier(n, rows))
}

/// Applies `I -> c I` entry-wise (used to check linearity in Σ).
pub fn scale_frontier(f: &CollisionFrontier, c: C64) -> CollisionFrontier {
    let s = |v: &Vec<Mat2>| v.iter().map(|m| m.scale(c)).collect::<Vec<_>>();
    CollisionFrontier {
        n: f.n,
        lesser_row: f.lesser_row.iter().map(s).collect(),
        greater_col: f.greater_col.iter().map(s).collect(),
        lesser_above: s(&f.lesser_above),
    }
}

/// Number of collision entries evaluated around frontier `n`.
pub fn frontier_entry_count(n: usize) -> usize {
    frontier_entries(n).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Schedule;
    use crate::kgrid::KGrid;
    use crate::state::init_state;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng) -> Mat2 {
        let mut m = Mat2::ZERO;
        for z in m.0.iter_mut() {
            *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        m
    }

    fn random_history(seed: u64, n_k: usize, steps: usize) -> (TwoTimeGF, TwoTimeStore) {
        let grid = KGrid::new(n_k).unwrap();
        let mut g = init_state(&grid, steps, 0.1, u64::MAX).unwrap();
        let mut s = TwoTimeStore::zeros(steps + 1, n_k, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in [Component::Lesser, Component::Greater] {
            for i in 0..=steps {
                for l in 0..=steps {
                    for k in 0..n_k {
                        g.store.set(c, k, i, l, random_mat(&mut rng));
                        s.set(c, k, i, l, random_mat(&mut rng));
                    }
                }
            }
        }
        g.set_frontier(steps);
        (g, s)
    }

    #[test]
    fn empty_rule() {
        assert_eq!(quadrature_weights(0, 0.1, QuadratureKind::Trapezoid), vec![0.0]);
        assert_eq!(quadrature_weights(0, 0.1, QuadratureKind::Simpson), vec![0.0]);
    }

    #[test]
    fn trapezoid_values() {
        let rule = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        assert!((rule.integrate(&[1.0; 6]) - 0.5).abs() < 1e-15);
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let r = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        assert!((r.integrate(&x) - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn weights_sum_to_length() {
        for kind in [QuadratureKind::Trapezoid, QuadratureKind::Simpson] {
            for n in 0..40 {
                let s: f64 = quadrature_weights(n, 0.25, kind).iter().sum();
                assert!((s - 0.25 * n as f64).abs() < 1e-13, "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn polynomial_exactness() {
        for n in 1..30usize {
            let dt = 1.0 / n as f64;
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
            let lin: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
            let t = QuadratureRule::new(QuadratureKind::Trapezoid, dt).integrate(&lin);
            assert!((t - 0.5).abs() <= 1e-14);
            if n % 2 == 0 {
                let cub: Vec<f64> = xs.iter().map(|x| 4.0 * x * x * x - x + 2.0).collect();
                let s = QuadratureRule::new(QuadratureKind::Simpson, dt).integrate(&cub);
                assert!((s - 2.5).abs() <= 1e-14 * 2.5, "n={n}");
            }
        }
    }

    #[test]
    fn odd_simpson_is_second_order() {
        let f = |x: f64| x.sin();
        let err = |n: usize| {
            let dt = 1.0 / n as f64;
            let ys: Vec<f64> = (0..=n).map(|i| f(i as f64 * dt)).collect();
            (QuadratureRule::new(QuadratureKind::Simpson, dt).integrate(&ys) - (1.0 - 1f64.cos())).abs()
        };
        let ratio = err(21) / err(41);
        assert!(ratio > 3.0, "{ratio}");
    }

    #[test]
    fn zero_at_initial_time() {
        let (g, s) = random_history(1, 2, 2);
        let rule = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        let i0 = collision_lesser(&g, &s, 0, 0, 0, &rule, LimitMode::AsPrinted).unwrap();
        assert_eq!(i0, Mat2::ZERO);
        let i0 = collision_greater(&g, &s, 1, 0, 0, &rule, LimitMode::Langreth).unwrap();
        assert_eq!(i0, Mat2::ZERO);
    }

    #[test]
    fn zero_self_energy() {
        let (g, _) = random_history(2, 2, 3);
        let s = TwoTimeStore::zeros(4, 2, 0);
        let rule = QuadratureRule::new(QuadratureKind::Simpson, 0.1);
        for (i, l) in [(3, 1), (2, 2), (1, 3)] {
            assert_eq!(collision_lesser(&g, &s, 0, i, l, &rule, LimitMode::AsPrinted).unwrap(), Mat2::ZERO);
            assert_eq!(collision_greater(&g, &s, 1, i, l, &rule, LimitMode::AsPrinted).unwrap(), Mat2::ZERO);
        }
    }

    /// Direct re-summation with explicit weight lists and an explicit band sum.
    fn oracle(g: &TwoTimeGF, s: &TwoTimeStore, greater: bool, k: usize, i: usize, l: usize, u: usize) -> Mat2 {
        use Component::{Greater, Lesser};
        let w1 = quadrature_weights(i, 0.1, QuadratureKind::Trapezoid);
        let w2 = quadrature_weights(u, 0.1, QuadratureKind::Trapezoid);
        let (sc, gc) = if greater { (Greater, Greater) } else { (Lesser, Lesser) };
        let mut out = Mat2::ZERO;
        for a in 0..2 {
            for b in 0..2 {
                let mut z = C64::new(0.0, 0.0);
                for tb in 0..=i {
                    for c in 0..2 {
                        let r = g.store.get(Greater, k, i, tb).get(a, c) - g.store.get(Lesser, k, i, tb).get(a, c);
                        z += w1[tb] * r * s.get(sc, k, tb, l).get(c, b);
                    }
                }
                for tb in 0..=u {
                    for c in 0..2 {
                        let adv = s.get(Lesser, k, tb, l).get(c, b) - s.get(Greater, k, tb, l).get(c, b);
                        z += w2[tb] * g.store.get(gc, k, i, tb).get(a, c) * adv;
                    }
                }
                out.set(a, b, z);
            }
        }
        out
    }

    #[test]
    fn matches_weighted_sum_oracle() {
        let (g, s) = random_history(3, 2, 4);
        let rule = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        for (i, l) in [(2, 2), (4, 1), (1, 4), (3, 3)] {
            for limit in [LimitMode::AsPrinted, LimitMode::Langreth] {
                for k in 0..2 {
                    let u = limit.upper(i, l);
                    let lt = collision_lesser(&g, &s, k, i, l, &rule, limit).unwrap();
                    let gt = collision_greater(&g, &s, k, i, l, &rule, limit).unwrap();
                    assert!((lt - oracle(&g, &s, false, k, i, l, u)).max_abs() <= 1e-13);
                    assert!((gt - oracle(&g, &s, true, k, i, l, u)).max_abs() <= 1e-13);
                }
            }
        }
    }

    #[test]
    fn missing_history_is_contract_error() {
        let (mut g, s) = random_history(4, 2, 4);
        g.set_frontier(2);
        let rule = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        assert!(matches!(
            collision_lesser(&g, &s, 0, 3, 1, &rule, LimitMode::AsPrinted),
            Err(Error::Contract(_))
        ));
        assert!(collision_lesser(&g, &s, 0, 2, 1, &rule, LimitMode::AsPrinted).is_ok());
    }

    #[test]
    fn frontier_batched_equals_looped() {
        let (g, s) = random_history(5, 4, 8);
        let grid = KGrid::new(4).unwrap();
        for workers in [1, 3] {
            let engine = Engine::new(&grid, Schedule { workers, ..Default::default() }).unwrap();
            for kind in [QuadratureKind::Trapezoid, QuadratureKind::Simpson] {
                let rule = QuadratureRule::new(kind, 0.1);
                for n in [0, 1, 5, 8] {
                    for limit in [LimitMode::AsPrinted, LimitMode::Langreth] {
                        let a = collision_frontier(&engine, &g, &s, n, &rule, limit).unwrap();
                        let b = collision_frontier_looped(&g, &s, n, &rule, limit).unwrap();
                        assert_eq!(a, b);
                        assert_eq!(a.lesser_row.len(), n + 1);
                        assert_eq!(a.greater_col.len(), n + 1);
                        assert_eq!(a.lesser_above.len(), if n > 0 { 4 } else { 0 });
                        assert_eq!(a.lesser_row[0].len(), 4);
                    }
                }
            }
        }
    }

    #[test]
    fn single_pair_at_first_step() {
        let (g, s) = random_history(6, 2, 1);
        let rule = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        let f = collision_frontier_looped(&g, &s, 1, &rule, LimitMode::AsPrinted).unwrap();
        // I<(t_1, t_1) uses the one-interval rule {dt/2, dt/2}
        let want = oracle(&g, &s, false, 0, 1, 1, 1);
        assert!((f.lesser_row[1][0] - want).max_abs() <= 1e-13);
    }

    #[test]
    fn linear_in_sigma() {
        let (g, s) = random_history(7, 2, 5);
        let c = C64::new(0.3, -1.7);
        let mut cs = s.clone();
        for comp in [Component::Lesser, Component::Greater] {
            for i in 0..=5 {
                for l in 0..=5 {
                    for m in cs.slice_mut(comp, i, l) {
                        *m = m.scale(c);
                    }
                }
            }
        }
        let rule = QuadratureRule::new(QuadratureKind::Trapezoid, 0.1);
        let a = collision_frontier_looped(&g, &cs, 5, &rule, LimitMode::AsPrinted).unwrap();
        let b = scale_frontier(&collision_frontier_looped(&g, &s, 5, &rule, LimitMode::AsPrinted).unwrap(), c);
        for (x, y) in a.lesser_row.iter().flatten().zip(b.lesser_row.iter().flatten()) {
            assert!((*x - *y).max_abs() <= 1e-15 * y.max_abs().max(1.0));
        }
    }
}
