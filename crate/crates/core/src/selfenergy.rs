//! Second-Born self-energy on the frontier.
//!
//! One pipeline call takes `A = G(t, t')` and `B = G(t', t)` of opposite
//! components over all k and returns `Σ = Σ¹ - Σ²` on a local k-range:
//!
//! ```text
//! P_{jm}(q)  = Σ_{k'} A_{jm}(k'+q) B_{mj}(k')
//! Σ¹_{jm}(k) = U U'/n_k² Σ_q P_{j̄m̄}(q) A_{jm}(k-q)
//! Σ²_{jm}(k) = U U'/n_k² Σ_{k',q} A_{jm̄}(k') B_{m̄j̄}(k'+q-k) A_{j̄m}(q)
//! ```
//!
//! with `j̄ = 1 - j`. Σ< uses `(A, B) = (G<, G>)`, Σ> the swapped roles.

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::engine::{Engine, KernelClass};
use crate::kgrid::KIndex;
use crate::linalg::Mat2;
use crate::model::UProtocol;
use crate::state::FrontierSlices;
use crate::{Error, Result};

/// `U(t) U(t') / n_k²`.
pub fn prefactor(u_t: f64, u_tp: f64, n_k: usize) -> f64 {
    u_t * u_tp / (n_k * n_k) as f64
}

fn check_shapes(a: &[Mat2], b: &[Mat2], n_k: usize) -> Result<()> {
    if a.len() != n_k || b.len() != n_k {
        return Err(Error::contract(format!(
            "frontier slices of length {} and {} on a grid of {n_k}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `P(q)` at one q.
#[inline]
pub fn polarizability_at<K: KIndex>(a: &[Mat2], b: &[Mat2], idx: &K, q: usize) -> Mat2 {
    let mut p = [C64::new(0.0, 0.0); 4];
    for (kp, bk) in b.iter().enumerate() {
        let ak = &a[idx.sum(kp, q)].0;
        let bk = &bk.0;
        // P_{jm} += A_{jm} B_{mj}
        p[0] += ak[0] * bk[0];
        p[1] += ak[1] * bk[2];
        p[2] += ak[2] * bk[1];
        p[3] += ak[3] * bk[3];
    }
    Mat2(p)
}

/// Polarizability for every q.
pub fn polarizability<K: KIndex>(a: &[Mat2], b: &[Mat2], idx: &K) -> Result<Vec<Mat2>> {
    check_shapes(a, b, idx.n_k())?;
    Ok((0..idx.n_k()).map(|q| polarizability_at(a, b, idx, q)).collect())
}

/// `Σ¹(k)` at one global k.
#[inline]
pub fn sigma_first_at<K: KIndex>(p: &[Mat2], a: &[Mat2], pref: f64, idx: &K, k: usize) -> Mat2 {
    let mut s = [C64::new(0.0, 0.0); 4];
    for (q, pq) in p.iter().enumerate() {
        let ak = &a[idx.diff(k, q)].0;
        let pq = &pq.0;
        s[0] += pq[3] * ak[0];
        s[1] += pq[2] * ak[1];
        s[2] += pq[1] * ak[2];
        s[3] += pq[0] * ak[3];
    }
    Mat2(s).scale_re(pref)
}

/// `Σ¹` on the global k-range `k_range`.
pub fn sigma_first<K: KIndex>(
    p: &[Mat2],
    a: &[Mat2],
    u_t: f64,
    u_tp: f64,
    idx: &K,
    k_range: Range<usize>,
) -> Result<Vec<Mat2>> {
    check_shapes(p, a, idx.n_k())?;
    let pref = prefactor(u_t, u_tp, idx.n_k());
    Ok(k_range.map(|k| sigma_first_at(p, a, pref, idx, k)).collect())
}

/// Unscaled `Σ²(k)` summed over the flattened `(k', q)` positions in `r`
/// (position `k' n_k + q`). This is the chunk kernel.
#[inline]
pub fn sigma_second_chunk<K: KIndex>(
    a: &[Mat2],
    b: &[Mat2],
    idx: &K,
    k: usize,
    r: Range<usize>,
) -> Mat2 {
    let n = idx.n_k();
    let mut s = [C64::new(0.0, 0.0); 4];
    if r.is_empty() {
        return Mat2(s);
    }
    let mut kp = r.start / n;
    let mut q = r.start % n;
    for _ in r {
        let x = &a[kp].0;
        let y = &b[idx.diff(idx.sum(kp, q), k)].0;
        let z = &a[q].0;
        s[0] += x[1] * y[3] * z[2];
        s[1] += x[0] * y[1] * z[3];
        s[2] += x[3] * y[2] * z[0];
        s[3] += x[2] * y[0] * z[1];
        q += 1;
        if q == n {
            q = 0;
            kp += 1;
        }
    }
    Mat2(s)
}

fn sigma_second_with<K: KIndex>(
    engine: &Engine,
    idx: &K,
    inputs: &[(&[Mat2], &[Mat2], f64)],
    k_range: Range<usize>,
) -> Vec<Mat2> {
    let n_local = k_range.len();
    let start = k_range.start;
    let raw = engine.contract(inputs.len() * n_local, |o, r| {
        let (a, b, _) = inputs[o / n_local];
        sigma_second_chunk(a, b, idx, start + o % n_local, r)
    });
    raw.iter()
        .enumerate()
        .map(|(o, s)| s.scale_re(inputs[o / n_local].2))
        .collect()
}

/// `Σ²` for several pipeline inputs `(A, B, prefactor)` in one launch.
/// Output is input-major, then local k.
fn sigma_second_many(
    engine: &Engine,
    inputs: &[(&[Mat2], &[Mat2], f64)],
    k_range: Range<usize>,
) -> Vec<Mat2> {
    match engine.tables() {
        Some(t) => sigma_second_with(engine, t, inputs, k_range),
        None => sigma_second_with(engine, engine.on_the_fly(), inputs, k_range),
    }
}

/// `Σ²` on the global k-range `k_range`, scheduled by `engine`.
pub fn sigma_second(
    engine: &Engine,
    a: &[Mat2],
    b: &[Mat2],
    u_t: f64,
    u_tp: f64,
    k_range: Range<usize>,
) -> Result<Vec<Mat2>> {
    check_shapes(a, b, engine.n_k())?;
    let pref = prefactor(u_t, u_tp, engine.n_k());
    Ok(engine.timed(KernelClass::SigmaSecond, || {
        sigma_second_many(engine, &[(a, b, pref)], k_range)
    }))
}

/// `Σ = Σ¹ - Σ²`.
pub fn assemble_sigma(s1: &[Mat2], s2: &[Mat2]) -> Vec<Mat2> {
    s1.iter().zip(s2).map(|(x, y)| *x - *y).collect()
}

/// One full pipeline call: `Σ¹ - Σ²` for `(A, B)` at `(U(t), U(t'))`.
pub fn sigma_pair(
    engine: &Engine,
    a: &[Mat2],
    b: &[Mat2],
    u_t: f64,
    u_tp: f64,
    k_range: Range<usize>,
) -> Result<Vec<Mat2>> {
    check_shapes(a, b, engine.n_k())?;
    if prefactor(u_t, u_tp, engine.n_k()) == 0.0 {
        return Ok(vec![Mat2::ZERO; k_range.len()]);
    }
    let input = [(a, b, prefactor(u_t, u_tp, engine.n_k()))];
    let s1 = match engine.tables() {
        Some(t) => first_many(engine, t, &input, k_range.clone()),
        None => first_many(engine, engine.on_the_fly(), &input, k_range.clone()),
    };
    let s2 = sigma_second(engine, a, b, u_t, u_tp, k_range)?;
    Ok(assemble_sigma(&s1, &s2))
}

/// Polarizability and `Σ¹` for several pipeline inputs, two launches total.
fn first_many<K: KIndex>(
    engine: &Engine,
    idx: &K,
    inputs: &[(&[Mat2], &[Mat2], f64)],
    k_range: Range<usize>,
) -> Vec<Mat2> {
    let n_k = idx.n_k();
    let p = engine.timed(KernelClass::Polarization, || {
        engine.map(inputs.len() * n_k, |o| {
            let (a, b, _) = inputs[o / n_k];
            polarizability_at(a, b, idx, o % n_k)
        })
    });
    let n_local = k_range.len();
    let start = k_range.start;
    engine.timed(KernelClass::SigmaFirst, || {
        engine.map(inputs.len() * n_local, |o| {
            let i = o / n_local;
            let (a, _, pref) = inputs[i];
            sigma_first_at(&p[i * n_k..(i + 1) * n_k], a, pref, idx, start + o % n_local)
        })
    })
}

/// Σ on frontier `n`, local k-range: `lesser_col[j][k] = Σ<(t_j, t_n)` and
/// `greater_row[j][k] = Σ>(t_n, t_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierSigma {
    pub n: usize,
    pub lesser_col: Vec<Vec<Mat2>>,
    pub greater_row: Vec<Vec<Mat2>>,
}

/// Pipeline inputs for frontier pair `j`: the Σ< call then the Σ> call.
fn pair_inputs<'a>(
    f: &'a FrontierSlices,
    u: &UProtocol,
    j: usize,
    n_k: usize,
) -> [(&'a [Mat2], &'a [Mat2], f64); 2] {
    let (uj, un) = (u.at_index(j), u.at_index(f.n));
    [
        (&f.lesser_col[j], &f.greater_row[j], prefactor(uj, un, n_k)),
        (&f.greater_row[j], &f.lesser_col[j], prefactor(un, uj, n_k)),
    ]
}

fn check_frontier(f: &FrontierSlices, n_k: usize) -> Result<()> {
    if f.lesser_col.len() != f.n + 1 || f.greater_row.len() != f.n + 1 {
        return Err(Error::contract("frontier does not hold n + 1 pairs"));
    }
    for (a, b) in f.lesser_col.iter().zip(&f.greater_row) {
        check_shapes(a, b, n_k)?;
    }
    Ok(())
}

/// All frontier pairs in one launch per kernel class.
pub fn evaluate_sigma_batched(
    engine: &Engine,
    frontier: &FrontierSlices,
    u: &UProtocol,
    k_range: Range<usize>,
) -> Result<FrontierSigma> {
    let n_k = engine.n_k();
    check_frontier(frontier, n_k)?;
    let pairs = frontier.n + 1;
    let n_local = k_range.len();
    let inputs: Vec<_> = (0..pairs)
        .flat_map(|j| pair_inputs(frontier, u, j, n_k))
        .filter(|x| x.2 != 0.0)
        .collect();
    let live: Vec<bool> = (0..pairs)
        .flat_map(|j| pair_inputs(frontier, u, j, n_k).map(|x| x.2 != 0.0))
        .collect();

    let s1 = match engine.tables() {
        Some(t) => first_many(engine, t, &inputs, k_range.clone()),
        None => first_many(engine, engine.on_the_fly(), &inputs, k_range.clone()),
    };
    let s2 = engine.timed(KernelClass::SigmaSecond, || {
        sigma_second_many(engine, &inputs, k_range.clone())
    });

    let mut out = FrontierSigma {
        n: frontier.n,
        lesser_col: Vec::with_capacity(pairs),
        greater_row: Vec::with_capacity(pairs),
    };
    let mut next = 0;
    for (slot, &is_live) in live.iter().enumerate() {
        let sigma = if is_live {
            let r = next * n_local..(next + 1) * n_local;
            next += 1;
            assemble_sigma(&s1[r.clone()], &s2[r])
        } else {
            vec![Mat2::ZERO; n_local]
        };
        if slot % 2 == 0 {
            out.lesser_col.push(sigma);
        } else {
            out.greater_row.push(sigma);
        }
    }
    Ok(out)
}

/// One pipeline call per pair and component.
pub fn evaluate_sigma_looped(
    engine: &Engine,
    frontier: &FrontierSlices,
    u: &UProtocol,
    k_range: Range<usize>,
) -> Result<FrontierSigma> {
    let n_k = engine.n_k();
    check_frontier(frontier, n_k)?;
    let mut out = FrontierSigma {
        n: frontier.n,
        lesser_col: Vec::new(),
        greater_row: Vec::new(),
    };
    let (un, n) = (u.at_index(frontier.n), frontier.n);
    for j in 0..=n {
        let uj = u.at_index(j);
        let (gl, gg) = (&frontier.lesser_col[j], &frontier.greater_row[j]);
        out.lesser_col
            .push(sigma_pair(engine, gl, gg, uj, un, k_range.clone())?);
        out.greater_row
            .push(sigma_pair(engine, gg, gl, un, uj, k_range.clone())?);
    }
    Ok(out)
}

/// Batched or looped according to the engine schedule.
pub fn evaluate_sigma(
    engine: &Engine,
    frontier: &FrontierSlices,
    u: &UProtocol,
    k_range: Range<usize>,
) -> Result<FrontierSigma> {
    if engine.schedule().batch_enabled {
        evaluate_sigma_batched(engine, frontier, u, k_range)
    } else {
        evaluate_sigma_looped(engine, frontier, u, k_range)
    }
}
