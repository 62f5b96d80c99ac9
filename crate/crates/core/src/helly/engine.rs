//! Minimization of `F(x) = (1/k) Σ_i max_{K ∈ color i} dist(x, K)`.
//!
//! Phase one runs projected subgradient descent from several seeded starts.
//! Phase two refines the best point with a trust-region cutting-plane method:
//! every distance subgradient `ψ` gives the global minorant
//! `dist(y, K) >= ⟨ψ, y⟩ - σ_K(ψ)`, and minimizing the resulting piecewise
//! linear model over a box is a small LP. Solving the same LP over the whole
//! search box yields a rigorous lower bound on `min F`.

use rayon::prelude::*;

use crate::error::Result;
use crate::lp::Lp;
use crate::norm::{dot, dual_element, NormSpec};
use crate::polytope::{distance_capped, support_value, DistanceResult, VPolytope};
use crate::rng;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Region<'a> {
    Polytope(&'a VPolytope),
    /// The centered ball of the given radius.
    Ball(f64),
}

impl Region<'_> {
    fn radius(&self, space: &NormSpec) -> f64 {
        match self {
            Region::Polytope(k) => k.radius(space),
            Region::Ball(r) => *r,
        }
    }

    fn distance(&self, x: &[f64], space: &NormSpec, tol: f64, warm: Option<&[f64]>, iters: usize) -> Result<DistanceResult> {
        match self {
            Region::Polytope(k) => distance_capped(x, k, space, tol, warm, iters),
            Region::Ball(r) => {
                let n = space.norm_unchecked(x);
                let value = (n - r).max(0.0);
                let nearest = if n > *r { x.iter().map(|c| c * r / n).collect() } else { x.to_vec() };
                let subgradient = (value > tol).then(|| dual_element(x, space.p));
                Ok(DistanceResult { value, weights: Vec::new(), nearest, subgradient, gap: 0.0 })
            }
        }
    }

    pub(crate) fn support(&self, psi: &[f64], space: &NormSpec) -> f64 {
        match self {
            Region::Polytope(k) => support_value(k, psi).expect("dimension checked"),
            Region::Ball(r) => r * space.dual_norm_unchecked(psi),
        }
    }
}

pub(crate) struct Problem<'a> {
    pub space: NormSpec,
    pub colors: Vec<Vec<Region<'a>>>,
}

impl Problem<'_> {
    pub fn k(&self) -> usize {
        self.colors.len()
    }

    fn max_radius(&self) -> f64 {
        self.colors
            .iter()
            .flatten()
            .map(|r| r.radius(&self.space))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Eval {
    pub value: f64,
    pub radii: Vec<f64>,
    pub dists: Vec<Vec<DistanceResult>>,
}

impl Eval {
    /// `(1/k) Σ_i ψ_i` over one maximizing set per color.
    fn subgradient(&self, dim: usize) -> Vec<f64> {
        let k = self.dists.len() as f64;
        let mut g = vec![0.0; dim];
        for (color, r) in self.dists.iter().zip(&self.radii) {
            if let Some(d) = color.iter().find(|d| d.value == *r) {
                if let Some(psi) = &d.subgradient {
                    for (gc, pc) in g.iter_mut().zip(psi) {
                        *gc += pc / k;
                    }
                }
            }
        }
        g
    }
}

/// Distance solves first get this many iterations; only sets that may
/// attain their color's maximum are refined further.
const COARSE_ITERS: usize = 64;
const FINE_ITERS: usize = 20_000;

/// Values are attained distances, so `F` is never underestimated even when a
/// distance solve stops early.
pub(crate) fn evaluate(problem: &Problem<'_>, x: &[f64], tol: f64, warm: Option<&Eval>) -> Result<Eval> {
    let mut dists = Vec::with_capacity(problem.k());
    let mut radii = Vec::with_capacity(problem.k());
    for (i, color) in problem.colors.iter().enumerate() {
        let first = if color.len() == 1 { FINE_ITERS } else { COARSE_ITERS };
        let mut ds = Vec::with_capacity(color.len());
        for (j, region) in color.iter().enumerate() {
            let w = warm.map(|e| e.dists[i][j].weights.as_slice()).filter(|w| !w.is_empty());
            ds.push(region.distance(x, &problem.space, tol, w, first)?);
        }
        if first < FINE_ITERS {
            let floor = ds.iter().map(|d| d.value - d.gap).fold(0.0, f64::max);
            for (j, region) in color.iter().enumerate() {
                if ds[j].gap > tol && ds[j].value >= floor {
                    let w = ds[j].weights.clone();
                    ds[j] = region.distance(x, &problem.space, tol, Some(&w), FINE_ITERS)?;
                }
            }
        }
        radii.push(ds.iter().map(|d| d.value).fold(0.0, f64::max));
        dists.push(ds);
    }
    let value = radii.iter().sum::<f64>() / problem.k() as f64;
    Ok(Eval { value, radii, dists })
}

/// The minorant `f_color(y) >= ⟨psi, y⟩ - sigma`.
#[derive(Debug, Clone)]
pub(crate) struct Cut {
    pub color: usize,
    pub set: usize,
    pub psi: Vec<f64>,
    pub sigma: f64,
    idle: usize,
}

impl Cut {
    pub fn value_at(&self, y: &[f64]) -> f64 {
        dot(&self.psi, y) - self.sigma
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EngineOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub starts: usize,
    pub local_iters: usize,
    /// A known lower bound on `min F` (enables Polyak steps).
    pub lower_bound: Option<f64>,
    /// Stop once `F <= threshold` or the lower bound exceeds it.
    pub threshold: Option<f64>,
}

pub(crate) struct EngineResult {
    pub x: Vec<f64>,
    pub eval: Eval,
    pub lower_bound: f64,
    pub cuts: Vec<Cut>,
    pub iterations: usize,
    pub evaluations: usize,
    /// Minimizers of `F` have norm at most this.
    pub search_radius: f64,
}

const CUTS_PER_COLOR: usize = 2;
const GLOBAL_BOUND_EVERY: usize = 8;
const IDLE_LIMIT: usize = 25;
const LP_PIVOTS: usize = 50_000;

fn distance_tol(tol: f64) -> f64 {
    (0.01 * tol).max(1e-13)
}

fn cuts_from(problem: &Problem<'_>, eval: &Eval, out: &mut Vec<Cut>) {
    for (i, color) in eval.dists.iter().enumerate() {
        let mut order: Vec<usize> = (0..color.len()).filter(|&j| color[j].subgradient.is_some()).collect();
        order.sort_by(|&a, &b| color[b].value.total_cmp(&color[a].value).then(a.cmp(&b)));
        for &j in order.iter().take(CUTS_PER_COLOR) {
            let psi = color[j].subgradient.clone().expect("filtered");
            let sigma = problem.colors[i][j].support(&psi, &problem.space);
            out.push(Cut { color: i, set: j, psi, sigma, idle: 0 });
        }
    }
}

fn clip(x: &mut [f64], r: f64) {
    for c in x.iter_mut() {
        *c = c.clamp(-r, r);
    }
}

struct LocalRun {
    x: Vec<f64>,
    eval: Eval,
    cuts: Vec<Cut>,
    evaluations: usize,
}

fn subgradient_run(
    problem: &Problem<'_>,
    start: Vec<f64>,
    radius: f64,
    opts: &EngineOptions,
) -> Result<LocalRun> {
    let dtol = distance_tol(opts.tol);
    let dim = problem.space.dim;
    let mut x = start;
    let mut eval = evaluate(problem, &x, dtol, None)?;
    let mut best = (x.clone(), eval.clone());
    let mut cuts = Vec::new();
    cuts_from(problem, &eval, &mut cuts);
    let mut evaluations = 1;
    let mut delta = 0.5 * eval.value;
    let mut stall = 0;
    for t in 1..=opts.local_iters {
        let g = eval.subgradient(dim);
        let gn2 = dot(&g, &g);
        if gn2 == 0.0 || eval.value <= dtol {
            break;
        }
        let step = match opts.lower_bound {
            Some(lb) => {
                let target = lb.max(best.1.value - delta);
                (eval.value - target).max(0.0) / gn2
            }
            None => 0.5 * radius / (t as f64).sqrt() / gn2.sqrt(),
        };
        for (xc, gc) in x.iter_mut().zip(&g) {
            *xc -= step * gc;
        }
        clip(&mut x, radius);
        eval = evaluate(problem, &x, dtol, Some(&eval))?;
        evaluations += 1;
        cuts_from(problem, &eval, &mut cuts);
        if eval.value < best.1.value {
            best = (x.clone(), eval.clone());
            stall = 0;
        } else {
            stall += 1;
            if stall >= 5 {
                delta *= 0.5;
                stall = 0;
            }
        }
        if opts.threshold.is_some_and(|th| best.1.value <= th) {
            break;
        }
    }
    Ok(LocalRun { x: best.0, eval: best.1, cuts, evaluations })
}

struct ModelSolution {
    y: Vec<f64>,
    value: f64,
    multipliers: Vec<f64>,
}

/// Minimizes `(1/k) Σ_i max(0, max_{c ∈ color i} ⟨ψ_c, y⟩ - σ_c)` over
/// `lo <= y <= hi` through its dual
/// `max Σ_c μ_c (⟨ψ_c, lo⟩ - σ_c) - Σ_j ν_j (hi_j - lo_j)` subject to
/// `Σ_{c ∈ i} μ_c <= 1/k` and `Σ_c μ_c ψ_c + ν >= 0`.
fn solve_model(cuts: &[Cut], k: usize, lo: &[f64], hi: &[f64]) -> Result<ModelSolution> {
    let dim = lo.len();
    let n = cuts.len();
    let mut c = Vec::with_capacity(n + dim);
    for cut in cuts {
        c.push(dot(&cut.psi, lo) - cut.sigma);
    }
    for j in 0..dim {
        c.push(-(hi[j] - lo[j]));
    }
    let mut lp = Lp::new(n + dim, c);
    let mut row = vec![0.0; n + dim];
    for color in 0..k {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (ci, cut) in cuts.iter().enumerate() {
            if cut.color == color {
                row[ci] = 1.0;
            }
        }
        lp.push_row(&row, 1.0 / k as f64);
    }
    for j in 0..dim {
        row.iter_mut().for_each(|v| *v = 0.0);
        for (ci, cut) in cuts.iter().enumerate() {
            row[ci] = -cut.psi[j];
        }
        row[n + j] = -1.0;
        lp.push_row(&row, 0.0);
    }
    let sol = lp.solve(LP_PIVOTS)?;
    let y = (0..dim)
        .map(|j| (lo[j] + sol.duals[k + j]).clamp(lo[j], hi[j]))
        .collect();
    Ok(ModelSolution { y, value: sol.objective, multipliers: sol.x[..n].to_vec() })
}

/// Rigorous lower bound on `F` over `[-r, r]^dim` from the cut model,
/// recomputed from the LP multipliers rather than the LP objective.
fn global_bound(cuts: &[Cut], k: usize, dim: usize, r: f64) -> Option<f64> {
    let lo = vec![-r; dim];
    let hi = vec![r; dim];
    let sol = solve_model(cuts, k, &lo, &hi).ok()?;
    // Weak duality with any nonnegative μ obeying the color caps:
    // F(y) >= Σ μ_c (⟨ψ_c, y⟩ - σ_c) >= Σ μ_c(-σ_c) - r ‖Σ μ_c ψ_c‖_1 on the box.
    let mut mu = sol.multipliers;
    let mut per_color = vec![0.0; k];
    for (m, cut) in mu.iter().zip(cuts) {
        per_color[cut.color] += m;
    }
    for (m, cut) in mu.iter_mut().zip(cuts) {
        let cap = 1.0 / k as f64;
        if per_color[cut.color] > cap {
            *m *= cap / per_color[cut.color];
        }
    }
    let mut agg = vec![0.0; dim];
    let mut constant = 0.0;
    for (m, cut) in mu.iter().zip(cuts) {
        constant -= m * cut.sigma;
        for (a, p) in agg.iter_mut().zip(&cut.psi) {
            *a += m * p;
        }
    }
    let l1: f64 = agg.iter().map(|a| a.abs()).sum();
    Some((constant - r * l1).max(0.0))
}

pub(crate) fn minimize(problem: &Problem<'_>, opts: &EngineOptions) -> Result<EngineResult> {
    let dim = problem.space.dim;
    let k = problem.k();
    let dtol = distance_tol(opts.tol);
    let origin = vec![0.0; dim];
    let at_origin = evaluate(problem, &origin, dtol, None)?;
    let radius = at_origin.value + problem.max_radius();
    if at_origin.value <= dtol {
        return Ok(EngineResult {
            x: origin,
            eval: at_origin,
            lower_bound: 0.0,
            cuts: Vec::new(),
            iterations: 0,
            evaluations: 1,
            search_radius: radius,
        });
    }

    let starts: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|s| {
            if s == 0 {
                origin.clone()
            } else {
                let mut r = rng::stream(opts.seed, s as u64);
                let mut x = rng::uniform_in_ball(&mut r, &problem.space);
                x.iter_mut().for_each(|c| *c *= radius);
                x
            }
        })
        .collect();
    let runs: Vec<LocalRun> = starts
        .into_par_iter()
        .map(|s| subgradient_run(problem, s, radius, opts))
        .collect::<Result<_>>()?;
    let mut evaluations: usize = runs.iter().map(|r| r.evaluations).sum();
    let best_run = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.eval.value.total_cmp(&b.eval.value).then(ia.cmp(ib)))
        .map(|(_, r)| r)
        .expect("at least one start");

    let max_cuts = 40 + 6 * k + 2 * dim;
    let mut cuts = best_run.cuts;
    if cuts.len() > max_cuts {
        cuts.drain(..cuts.len() - max_cuts);
    }
    let mut x = best_run.x;
    let mut eval = best_run.eval;
    let mut lower = opts.lower_bound.unwrap_or(0.0).max(0.0);
    if let Some(b) = global_bound(&cuts, k, dim, radius) {
        lower = lower.max(b);
    }
    let mut trust = 0.25 * radius;
    let min_trust = 1e-12 * radius.max(1.0);
    let mut iterations = 0;
    let done = |value: f64, lower: f64| {
        value - lower <= opts.tol || opts.threshold.is_some_and(|th| value <= th || lower > th)
    };
    while iterations < opts.max_iters && !done(eval.value, lower) {
        iterations += 1;
        let lo: Vec<f64> = x.iter().map(|c| (c - trust).max(-radius)).collect();
        let hi: Vec<f64> = x.iter().map(|c| (c + trust).min(radius)).collect();
        let Ok(model) = solve_model(&cuts, k, &lo, &hi) else { break };
        for (cut, m) in cuts.iter_mut().zip(&model.multipliers) {
            cut.idle = if *m > 0.0 { 0 } else { cut.idle + 1 };
        }
        let predicted = eval.value - model.value;
        if predicted <= 0.1 * opts.tol || iterations % GLOBAL_BOUND_EVERY == 0 {
            if let Some(b) = global_bound(&cuts, k, dim, radius) {
                lower = lower.max(b);
            }
            if done(eval.value, lower) {
                break;
            }
            if predicted <= 0.1 * opts.tol {
                // The model is flat here but not yet tight globally: widen the box.
                trust = (2.0 * trust).min(radius);
                continue;
            }
        }
        let trial = evaluate(problem, &model.y, dtol, Some(&eval))?;
        evaluations += 1;
        cuts_from(problem, &trial, &mut cuts);
        if trial.value <= eval.value - 0.1 * predicted {
            let step = x.iter().zip(&model.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if step >= 0.9 * trust {
                trust = (2.0 * trust).min(radius);
            }
            x = model.y;
            eval = trial;
        } else if trial.value > eval.value {
            trust = (0.5 * trust).max(min_trust);
        }
        if cuts.len() > max_cuts {
            cuts.retain(|c| c.idle <= IDLE_LIMIT);
            if cuts.len() > 2 * max_cuts {
                cuts.drain(..cuts.len() - 2 * max_cuts);
            }
        }
    }
    if let Some(b) = global_bound(&cuts, k, dim, radius) {
        lower = lower.max(b);
    }
    Ok(EngineResult { x, eval, lower_bound: lower, cuts, iterations, evaluations, search_radius: radius })
}
