//! Minimum-norm point of a Minkowski sum of scaled convex hulls.
//!
//! Solves
//!
//! ```text
//! minimize ‖o + Σ_b s_b · A_b μ_b‖_r   over   μ_b ∈ Δ(m_b)
//! ```
//!
//! where `A_b` has the points of block `b` as columns. Distances to
//! polytopes (one block, `s = -1`), nearest points of hulls to the origin and
//! the stacked certificate problems of the Helly solver are all instances.
//!
//! Every iterate carries a dual functional `ψ` with `‖ψ‖_* <= 1`, and
//! `⟨ψ, o⟩ + Σ_b min_j s_b⟨ψ, a_bj⟩` is a lower bound on the optimum, so the
//! reported gap is a rigorous optimality bound.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::Lp;
use crate::norm::{dot, dual_element, lp_norm, Exponent};

/// One hull in the sum: `scale · conv(points)`.
#[derive(Debug, Clone, Copy)]
pub struct Block<'a> {
    pub points: &'a [Vec<f64>],
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNorm {
    pub value: f64,
    pub lower_bound: f64,
    /// Simplex weights, one vector per block.
    pub weights: Vec<Vec<f64>>,
    /// The minimizing point `o + Σ s_b A_b μ_b`.
    pub point: Vec<f64>,
    /// Norming functional for `point`, dual norm at most 1.
    pub dual: Vec<f64>,
    pub iterations: usize,
}

impl MinNorm {
    pub fn gap(&self) -> f64 {
        (self.value - self.lower_bound).max(0.0)
    }
}

pub const DEFAULT_MAX_ITERS: usize = 100_000;
const LP_PIVOT_LIMIT: usize = 200_000;
const RESYNC_EVERY: usize = 128;
const LP_RESCUE_AFTER: usize = 256;

/// Minimizes the norm; returns the best iterate even if `tol` was not reached
/// (check [`MinNorm::gap`]).
pub fn min_norm(
    offset: &[f64],
    blocks: &[Block<'_>],
    p: Exponent,
    tol: f64,
    max_iters: usize,
    warm: Option<&[Vec<f64>]>,
) -> Result<MinNorm> {
    let dim = offset.len();
    if blocks.is_empty() {
        let value = lp_norm(offset, p);
        return Ok(MinNorm {
            value,
            lower_bound: value,
            weights: Vec::new(),
            point: offset.to_vec(),
            dual: dual_element(offset, p),
            iterations: 0,
        });
    }
    for b in blocks {
        if b.points.is_empty() {
            return Err(Error::Empty("point block"));
        }
        for v in b.points {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
            }
        }
    }
    if p.is_smooth() {
        let first = max_iters.min(LP_RESCUE_AFTER);
        let sol = frank_wolfe(offset, blocks, p, tol, first, warm);
        if sol.gap() <= tol || max_iters == first {
            return Ok(sol);
        }
        // Frank-Wolfe stalls when the optimum is near zero, where its dual
        // bound is weak. The l_∞ problem is an LP and finds zero exactly;
        // otherwise its weights may still be a better restart.
        let mut restart = sol.weights;
        if let Ok(lin) = polyhedral(offset, blocks, Exponent::Infinity) {
            let value = lp_norm(&lin.point, p);
            if value <= tol {
                let dual = dual_element(&lin.point, p);
                return Ok(MinNorm { value, lower_bound: 0.0, dual, iterations: first, ..lin });
            }
            if value < sol.value {
                restart = lin.weights;
            }
        }
        let mut rest = frank_wolfe(offset, blocks, p, tol, max_iters - first, Some(&restart));
        rest.iterations += first;
        Ok(rest)
    } else {
        polyhedral(offset, blocks, p)
    }
}

fn combine(offset: &[f64], blocks: &[Block<'_>], weights: &[Vec<f64>]) -> Vec<f64> {
    let mut z = offset.to_vec();
    for (b, w) in blocks.iter().zip(weights) {
        for (v, &wj) in b.points.iter().zip(w) {
            if wj != 0.0 {
                let f = b.scale * wj;
                for (zc, vc) in z.iter_mut().zip(v) {
                    *zc += f * vc;
                }
            }
        }
    }
    z
}

fn lower_bound(offset: &[f64], blocks: &[Block<'_>], psi: &[f64]) -> f64 {
    let mut lb = dot(psi, offset);
    for b in blocks {
        lb += b
            .points
            .iter()
            .map(|v| b.scale * dot(psi, v))
            .fold(f64::INFINITY, f64::min);
    }
    lb
}

fn initial_weights(offset: &[f64], blocks: &[Block<'_>], p: Exponent, warm: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    if let Some(w) = warm {
        let fits = w.len() == blocks.len()
            && w.iter().zip(blocks).all(|(wb, b)| wb.len() == b.points.len())
            && w.iter().all(|wb| wb.iter().all(|x| *x >= 0.0) && wb.iter().sum::<f64>() > 0.0);
        if fits {
            return w
                .iter()
                .map(|wb| {
                    let s: f64 = wb.iter().sum();
                    wb.iter().map(|x| x / s).collect()
                })
                .collect();
        }
    }
    // Greedy: each block in turn takes the vertex that best reduces the norm.
    let mut z = offset.to_vec();
    let mut tmp = vec![0.0; z.len()];
    let mut out = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut best = (0, f64::INFINITY);
        for (j, v) in b.points.iter().enumerate() {
            for ((t, zc), vc) in tmp.iter_mut().zip(&z).zip(v) {
                *t = zc + b.scale * vc;
            }
            let n = lp_norm(&tmp, p);
            if n < best.1 {
                best = (j, n);
            }
        }
        for (zc, vc) in z.iter_mut().zip(&b.points[best.0]) {
            *zc += b.scale * vc;
        }
        let mut w = vec![0.0; b.points.len()];
        w[best.0] = 1.0;
        out.push(w);
    }
    out
}

fn frank_wolfe(
    offset: &[f64],
    blocks: &[Block<'_>],
    p: Exponent,
    tol: f64,
    max_iters: usize,
    warm: Option<&[Vec<f64>]>,
) -> MinNorm {
    let r = p.as_f64();
    let mut weights = initial_weights(offset, blocks, p, warm);
    let mut z = combine(offset, blocks, &weights);
    let mut scores: Vec<Vec<f64>> = blocks.iter().map(|b| vec![0.0; b.points.len()]).collect();
    let mut d = vec![0.0; z.len()];
    let mut iterations = 0;
    loop {
        if iterations % RESYNC_EVERY == RESYNC_EVERY - 1 {
            z = combine(offset, blocks, &weights);
        }
        let value = lp_norm(&z, p);
        let psi = dual_element(&z, p);
        if value <= tol {
            return MinNorm { value, lower_bound: 0.0, weights, point: z, dual: psi, iterations };
        }
        let mut lb = dot(&psi, offset);
        let mut pick: Option<(usize, usize, usize, f64)> = None;
        for (bi, b) in blocks.iter().enumerate() {
            let (mut fw, mut fw_s) = (0, f64::INFINITY);
            let (mut aw, mut aw_s) = (usize::MAX, f64::NEG_INFINITY);
            for (j, v) in b.points.iter().enumerate() {
                let s = b.scale * dot(&psi, v);
                scores[bi][j] = s;
                if s < fw_s {
                    fw = j;
                    fw_s = s;
                }
                if weights[bi][j] > 0.0 && s > aw_s {
                    aw = j;
                    aw_s = s;
                }
            }
            lb += fw_s;
            let g = aw_s - fw_s;
            if aw != usize::MAX && fw != aw && pick.is_none_or(|(_, _, _, best)| g > best) {
                pick = Some((bi, fw, aw, g));
            }
        }
        // Norms are nonnegative, so 0 is always a valid bound.
        let lb = lb.max(0.0);
        if value - lb <= tol || iterations >= max_iters {
            return MinNorm { value, lower_bound: lb, weights, point: z, dual: psi, iterations };
        }
        let Some((bi, fw, aw, _)) = pick else {
            return MinNorm { value, lower_bound: lb, weights, point: z, dual: psi, iterations };
        };
        let b = &blocks[bi];
        for ((dc, f), a) in d.iter_mut().zip(&b.points[fw]).zip(&b.points[aw]) {
            *dc = b.scale * (f - a);
        }
        let gmax = weights[bi][aw];
        let gamma = line_search(&z, &d, r, gmax);
        if gamma <= 0.0 {
            // No progress is possible along the best pairwise direction.
            return MinNorm { value, lower_bound: lb, weights, point: z, dual: psi, iterations };
        }
        if gamma >= gmax {
            weights[bi][fw] += gmax;
            weights[bi][aw] = 0.0;
        } else {
            weights[bi][fw] += gamma;
            weights[bi][aw] -= gamma;
        }
        for (zc, dc) in z.iter_mut().zip(&d) {
            *zc += gamma * dc;
        }
        newton_correction(blocks, &mut weights, &mut z, r);
        iterations += 1;
    }
}

/// Curvature floor, relative to the largest coordinate, for `r < 2` where
/// `|z_i|^{r-2}` is unbounded.
const CURVATURE_FLOOR: f64 = 1e-8;

/// One Newton step for `‖z‖_r^r / r` over the affine hull of the current
/// support (weights summing to one per block), followed by an exact line
/// search that stops where a weight would turn negative. Frank-Wolfe alone
/// converges slowly once the support is right; this step makes the final
/// phase fast (for `r = 2` it solves the support problem exactly).
fn newton_correction(blocks: &[Block<'_>], weights: &mut [Vec<f64>], z: &mut [f64], r: f64) {
    let support: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .flat_map(|(bi, w)| w.iter().enumerate().filter(|(_, x)| **x > 0.0).map(move |(j, _)| (bi, j)))
        .collect();
    let active_blocks: Vec<usize> = {
        let mut v: Vec<usize> = support.iter().map(|s| s.0).collect();
        v.dedup();
        v
    };
    let n = support.len();
    if n <= active_blocks.len() {
        return;
    }
    let scale = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return;
    }
    let dim = z.len();
    // Gradient and diagonal Hessian of ‖z/scale‖_r^r / r.
    let mut grad = vec![0.0; dim];
    let mut hess = vec![0.0; dim];
    for i in 0..dim {
        let a = (z[i] / scale).abs().max(CURVATURE_FLOOR);
        grad[i] = (z[i] / scale).signum() * (z[i] / scale).abs().powf(r - 1.0);
        hess[i] = (r - 1.0) * if r == 2.0 { 1.0 } else { a.powf(r - 2.0) };
    }
    let column = |(bi, j): (usize, usize)| -> &[f64] { &blocks[bi].points[j] };
    let m = n + active_blocks.len();
    let mut kkt = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut trace = 0.0;
    for a in 0..n {
        let (ba, ja) = support[a];
        let sa = blocks[ba].scale;
        let va = column((ba, ja));
        rhs[a] = -sa * dot(va, &grad);
        for b in a..n {
            let (bb, jb) = support[b];
            let vb = column((bb, jb));
            let mut g = 0.0;
            for i in 0..dim {
                g += va[i] * hess[i] * vb[i];
            }
            g *= sa * blocks[bb].scale;
            kkt[(a, b)] = g;
            kkt[(b, a)] = g;
        }
        trace += kkt[(a, a)];
        let row = n + active_blocks.iter().position(|&x| x == ba).expect("listed");
        kkt[(row, a)] = 1.0;
        kkt[(a, row)] = 1.0;
    }
    // A small ridge keeps affinely dependent supports solvable.
    let ridge = 1e-12 * (trace / n as f64).max(1e-300);
    for a in 0..n {
        kkt[(a, a)] += ridge;
    }
    let Some(step) = kkt.lu().solve(&rhs) else { return };
    let delta: Vec<f64> = (0..n).map(|a| step[a] * scale).collect();
    if delta.iter().any(|v| !v.is_finite()) {
        return;
    }
    let mut d = vec![0.0; dim];
    let mut gmax = 2.0_f64;
    for (a, &(bi, j)) in support.iter().enumerate() {
        let f = blocks[bi].scale * delta[a];
        for (dc, vc) in d.iter_mut().zip(column((bi, j))) {
            *dc += f * vc;
        }
        if delta[a] < 0.0 {
            gmax = gmax.min(weights[bi][j] / -delta[a]);
        }
    }
    let gamma = line_search(z, &d, r, gmax);
    if !(gamma > 0.0) {
        return;
    }
    for (a, &(bi, j)) in support.iter().enumerate() {
        let w = &mut weights[bi][j];
        *w += gamma * delta[a];
        if *w <= 1e-15 {
            *w = 0.0;
        }
    }
    for (zc, dc) in z.iter_mut().zip(&d) {
        *zc += gamma * dc;
    }
}

/// `argmin_{γ ∈ [0, γ_max]} ‖z + γd‖_r` for `1 < r < ∞`.
fn line_search(z: &[f64], d: &[f64], r: f64, gmax: f64) -> f64 {
    if r == 2.0 {
        let dd = dot(d, d);
        if dd == 0.0 {
            return 0.0;
        }
        return (-dot(z, d) / dd).clamp(0.0, gmax);
    }
    let scale = z
        .iter()
        .chain(d.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    // derivative of ‖z+γd‖_r^r / r, and its derivative, with coordinates scaled
    let eval = |g: f64| -> (f64, f64) {
        let (mut h, mut hp) = (0.0, 0.0);
        for (zc, dc) in z.iter().zip(d) {
            let w = (zc + g * dc) / scale;
            let ds = dc / scale;
            let aw = w.abs();
            if aw > 0.0 {
                let pw = aw.powf(r - 2.0);
                h += w * pw * ds;
                hp += (r - 1.0) * pw * ds * ds;
            }
        }
        (h, hp)
    };
    let (h0, _) = eval(0.0);
    if h0 >= 0.0 {
        return 0.0;
    }
    let (hmax, _) = eval(gmax);
    if hmax <= 0.0 {
        return gmax;
    }
    let (mut lo, mut hi) = (0.0, gmax);
    let mut g = 0.5 * gmax;
    for _ in 0..100 {
        let (h, hp) = eval(g);
        if h == 0.0 {
            return g;
        }
        if h < 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        if hi - lo <= 1e-15 * gmax {
            break;
        }
        let newton = if hp > 0.0 { g - h / hp } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - g).abs() <= 1e-14 * gmax {
            return next;
        }
        g = next;
    }
    g.clamp(lo, hi)
}

/// `r ∈ {1, ∞}`: solve the dual LP
/// `max ⟨ψ,o⟩ + Σ_b t_b  s.t.  t_b <= s_b⟨ψ, a_bj⟩,  ‖ψ‖_* <= 1`
/// whose row multipliers are the optimal simplex weights. Each `t_b` is
/// shifted by `B_b = |s_b| max_j ‖a_bj‖ + 1 >= -t_b`, which keeps the
/// variables nonnegative and the right-hand sides positive.
fn polyhedral(offset: &[f64], blocks: &[Block<'_>], p: Exponent) -> Result<MinNorm> {
    let dim = offset.len();
    let nb = blocks.len();
    // columns: α (dim), β (dim), t + B (nb); ψ = α − β
    let cols = 2 * dim + nb;
    let mut c = vec![0.0; cols];
    for i in 0..dim {
        c[i] = offset[i];
        c[dim + i] = -offset[i];
    }
    for b in 0..nb {
        c[2 * dim + b] = 1.0;
    }
    let mut lp = Lp::new(cols, c);
    let mut row = vec![0.0; cols];
    for (bi, b) in blocks.iter().enumerate() {
        let shift = b.scale.abs() * b.points.iter().map(|v| lp_norm(v, p)).fold(0.0, f64::max) + 1.0;
        for v in b.points {
            row.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..dim {
                row[i] = -b.scale * v[i];
                row[dim + i] = b.scale * v[i];
            }
            row[2 * dim + bi] = 1.0;
            lp.push_row(&row, shift);
        }
    }
    match p {
        Exponent::Infinity => {
            // dual norm is l_1: Σ α + Σ β <= 1
            row.iter_mut().for_each(|x| *x = 0.0);
            row[..2 * dim].iter_mut().for_each(|x| *x = 1.0);
            lp.push_row(&row, 1.0);
        }
        _ => {
            // dual norm is l_∞: α_i <= 1, β_i <= 1
            for i in 0..2 * dim {
                row.iter_mut().for_each(|x| *x = 0.0);
                row[i] = 1.0;
                lp.push_row(&row, 1.0);
            }
        }
    }
    let sol = lp.solve(LP_PIVOT_LIMIT)?;
    let mut weights = Vec::with_capacity(nb);
    let mut k = 0;
    for b in blocks {
        let mut w: Vec<f64> = sol.duals[k..k + b.points.len()].to_vec();
        k += b.points.len();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter_mut().for_each(|x| *x /= s);
        } else {
            w[0] = 1.0;
        }
        weights.push(w);
    }
    let psi: Vec<f64> = (0..dim).map(|i| sol.x[i] - sol.x[dim + i]).collect();
    let point = combine(offset, blocks, &weights);
    let value = lp_norm(&point, p);
    // Recompute the bound from ψ itself rather than trusting the LP objective.
    let lb = lower_bound(offset, blocks, &psi);
    Ok(MinNorm { value, lower_bound: lb, weights, point, dual: psi, iterations: sol.pivots })
}
