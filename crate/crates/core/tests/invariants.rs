use kbe_core::collision::{collision_frontier, LimitMode, QuadratureKind, QuadratureRule};
use kbe_core::engine::{sequential_reduce, shard_ranges, tree_reduce, Engine, IndexMode, Schedule};
use kbe_core::kgrid::{index_of_diff, index_of_sum, KGrid, KIndex};
use kbe_core::linalg::Mat2;
use kbe_core::model::UProtocol;
use kbe_core::selfenergy::{evaluate_sigma, sigma_pair};
use kbe_core::state::{Component, FrontierSlices, TwoTimeGF, TwoTimeStore};
use kbe_core::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rng: &mut ChaCha8Rng) -> Mat2 {
    let mut m = Mat2::ZERO;
    for z in m.0.iter_mut() {
        *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    m
}

fn random_slice(rng: &mut ChaCha8Rng, n: usize) -> Vec<Mat2> {
    (0..n).map(|_| random_mat(rng)).collect()
}

fn max_diff(x: &[Mat2], y: &[Mat2]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (*a - *b).max_abs()).fold(0.0, f64::max)
}

fn grid_size() -> impl Strategy<Value = usize> {
    prop_oneof![Just(2usize), Just(4), Just(6), Just(8), Just(10), Just(16), Just(32)]
}

proptest! {
    #[test]
    fn sum_then_diff_is_identity(n in grid_size(), a in 0usize..64, b in 0usize..64) {
        let (a, b) = (a % n + 1, b % n + 1);
        let s = index_of_sum(a, b, n);
        prop_assert!((1..=n).contains(&s));
        prop_assert_eq!(index_of_diff(s, b, n), a);
        prop_assert_eq!(index_of_sum(a, b, n), index_of_sum(b, a, n));
    }

    #[test]
    fn lookup_and_closed_form_agree(n in grid_size(), a in 0usize..64, b in 0usize..64) {
        let grid = KGrid::new(n).unwrap();
        let (a, b) = (a % n, b % n);
        let (f, t) = (grid.on_the_fly(), grid.index_tables());
        prop_assert_eq!(f.sum(a, b), t.sum(a, b));
        prop_assert_eq!(f.diff(a, b), t.diff(a, b));
        prop_assert_eq!(f.sum(a, b), index_of_sum(a + 1, b + 1, n) - 1);
    }

    #[test]
    fn tree_reduce_rounds_and_value(m in 0usize..300, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<C64> = (0..m).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let (t, rounds) = tree_reduce(&v);
        let s = sequential_reduce(&v);
        let want = if m <= 1 { 0 } else { (m as f64).log2().ceil() as u32 };
        prop_assert_eq!(rounds, want);
        prop_assert!((t - s).norm() <= 1e-12 * (1.0 + s.norm()) * m.max(1) as f64);
    }

    #[test]
    fn propagator_is_unitary(d0 in -5.0..5.0f64, d1 in -5.0..5.0f64, re in -3.0..3.0f64, im in -3.0..3.0f64, dt in 0.0..0.5f64) {
        let h = Mat2::new(C64::new(d0, 0.0), C64::new(re, -im), C64::new(re, im), C64::new(d1, 0.0));
        let u = Mat2::propagator(&h, dt);
        prop_assert!((u * u.adjoint() - Mat2::IDENTITY).max_abs() < 1e-12);
    }

    #[test]
    fn sigma_is_quadratic_in_a_and_linear_in_b(seed in any::<u64>(), c in -2.0..2.0f64) {
        let n = 8;
        let grid = KGrid::new(n).unwrap();
        let engine = Engine::new(&grid, Schedule::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_slice(&mut rng, n);
        let b = random_slice(&mut rng, n);
        let base = sigma_pair(&engine, &a, &b, 1.0, 0.8, 0..n).unwrap();
        let ca: Vec<Mat2> = a.iter().map(|m| m.scale_re(c)).collect();
        let cb: Vec<Mat2> = b.iter().map(|m| m.scale_re(c)).collect();
        let sa = sigma_pair(&engine, &ca, &b, 1.0, 0.8, 0..n).unwrap();
        let sb = sigma_pair(&engine, &a, &cb, 1.0, 0.8, 0..n).unwrap();
        let want_a: Vec<Mat2> = base.iter().map(|m| m.scale_re(c * c)).collect();
        let want_b: Vec<Mat2> = base.iter().map(|m| m.scale_re(c)).collect();
        prop_assert!(max_diff(&sa, &want_a) < 1e-12);
        prop_assert!(max_diff(&sb, &want_b) < 1e-12);
    }
}

fn frontier(n_k: usize, n: usize, seed: u64) -> FrontierSlices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FrontierSlices {
        n,
        lesser_col: (0..=n).map(|_| random_slice(&mut rng, n_k)).collect(),
        greater_row: (0..=n).map(|_| random_slice(&mut rng, n_k)).collect(),
    }
}

#[test]
fn sharded_sigma_concatenates_to_full() {
    let n_k = 16;
    let grid = KGrid::new(n_k).unwrap();
    let f = frontier(n_k, 3, 7);
    let u = UProtocol::Constant(1.2);
    for mode in [IndexMode::OnTheFly, IndexMode::Lookup] {
        let schedule = Schedule {
            index_mode: mode,
            block_size: 19,
            ..Schedule::default()
        };
        let engine = Engine::new(&grid, schedule).unwrap();
        let full = evaluate_sigma(&engine, &f, &u, 0..n_k).unwrap();
        for p in [2, 4, 8] {
            let parts: Vec<_> = shard_ranges(n_k, p)
                .unwrap()
                .iter()
                .map(|r| evaluate_sigma(&engine, &f, &u, r.range()).unwrap())
                .collect();
            for j in 0..=3 {
                let lc: Vec<Mat2> = parts.iter().flat_map(|s| s.lesser_col[j].clone()).collect();
                let gr: Vec<Mat2> = parts.iter().flat_map(|s| s.greater_row[j].clone()).collect();
                assert_eq!(lc, full.lesser_col[j]);
                assert_eq!(gr, full.greater_row[j]);
            }
        }
    }
}

#[test]
fn sigma_respects_time_reversal_pairing() {
    // Σ< at (t_j, t_n) and Σ> at (t_n, t_j) come from swapped roles, so
    // swapping the frontier slices swaps the outputs.
    let n_k = 8;
    let grid = KGrid::new(n_k).unwrap();
    let engine = Engine::new(&grid, Schedule::default()).unwrap();
    let f = frontier(n_k, 2, 11);
    let swapped = FrontierSlices {
        n: f.n,
        lesser_col: f.greater_row.clone(),
        greater_row: f.lesser_col.clone(),
    };
    let u = UProtocol::Constant(0.9);
    let a = evaluate_sigma(&engine, &f, &u, 0..n_k).unwrap();
    let b = evaluate_sigma(&engine, &swapped, &u, 0..n_k).unwrap();
    for j in 0..=2 {
        assert!(max_diff(&a.lesser_col[j], &b.greater_row[j]) < 1e-14);
    }
}

#[test]
fn collision_ignores_unused_future() {
    // Entries past the frontier never enter the collision integrals.
    let n_k = 4;
    let steps = 6;
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = TwoTimeStore::zeros(steps + 1, n_k, 0);
    let mut s = TwoTimeStore::zeros(steps + 1, n_k, 0);
    for c in [Component::Lesser, Component::Greater] {
        for i in 0..=n {
            for l in 0..=n {
                for k in 0..n_k {
                    g.set(c, k, i, l, random_mat(&mut rng));
                    s.set(c, k, i, l, random_mat(&mut rng));
                }
            }
        }
    }
    let state = TwoTimeGF::from_store(g.clone(), n_k, 0.1, n);
    let grid = KGrid::new(n_k).unwrap();
    let engine = Engine::new(&grid, Schedule::default()).unwrap();
    let rule = QuadratureRule::new(QuadratureKind::Simpson, 0.1);
    let before = collision_frontier(&engine, &state, &s, n, &rule, LimitMode::Langreth).unwrap();
    for c in [Component::Lesser, Component::Greater] {
        for k in 0..n_k {
            g.set(c, k, 5, 1, Mat2::IDENTITY);
            s.set(c, k, 1, 6, Mat2::IDENTITY);
        }
    }
    let state = TwoTimeGF::from_store(g, n_k, 0.1, n);
    let after = collision_frontier(&engine, &state, &s, n, &rule, LimitMode::Langreth).unwrap();
    assert_eq!(before, after);
}
