//! Subgradient certificates: `0 ∈ ∂F(x₀)` up to a residual, turned into a
//! rigorous lower bound on `min F`.

use serde::{Deserialize, Serialize};

use super::engine::{Cut, Eval, Problem};
use crate::error::Result;
use crate::minnorm::{min_norm, Block};
use crate::norm::dot;

/// One subgradient `ψ` of a distance function `dist(·, K_set)` with its
/// support value `σ_K(ψ)` and convex weight inside its color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateTerm {
    pub set: usize,
    pub weight: f64,
    pub functional: Vec<f64>,
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityCertificate {
    /// `‖(1/k) Σ_i Σ_j μ_ij ψ_ij‖_*`, minimized over the weights.
    pub residual: f64,
    /// Rigorous lower bound on `min F` implied by the terms.
    pub lower_bound: f64,
    /// Activity tolerance used per color.
    pub activity_tol: Vec<f64>,
    /// Terms per color with their weights; any missing weight sits on the
    /// zero functional.
    pub terms: Vec<Vec<CertificateTerm>>,
}

/// Spec-default activity tolerance `max(10 tol, 0.01 r)`.
pub(crate) fn default_activity(tol: f64, r: f64) -> f64 {
    (10.0 * tol).max(0.01 * r)
}

struct Candidate {
    /// `None` for the zero functional, a minorant of every distance function.
    set: Option<usize>,
    psi: Vec<f64>,
    sigma: f64,
}

fn candidates(problem: &Problem<'_>, eval: &Eval, x0: &[f64], cuts: &[Cut], activity: &[f64]) -> Vec<Vec<Candidate>> {
    let mut out = Vec::with_capacity(problem.k());
    for (i, (color, &r)) in eval.dists.iter().zip(&eval.radii).enumerate() {
        let mut list = Vec::new();
        let floor = r - activity[i];
        if floor <= 0.0 {
            list.push(Candidate { set: None, psi: vec![0.0; problem.space.dim], sigma: 0.0 });
        }
        for (j, d) in color.iter().enumerate() {
            if d.value >= floor {
                if let Some(psi) = &d.subgradient {
                    let sigma = problem.colors[i][j].support(psi, &problem.space);
                    list.push(Candidate { set: Some(j), psi: psi.clone(), sigma });
                }
            }
        }
        for c in cuts.iter().filter(|c| c.color == i) {
            if c.value_at(x0) >= floor {
                list.push(Candidate { set: Some(c.set), psi: c.psi.clone(), sigma: c.sigma });
            }
        }
        out.push(list);
    }
    out
}

const CERTIFICATE_ITERS: usize = 20_000;

/// Certificate at `x0` for the given per-color activity tolerances.
///
/// With `g = (1/k) Σ μ_ij ψ_ij` and every `ψ_ij` of dual norm at most one,
/// `F(y) >= (1/k) Σ μ_ij (⟨ψ_ij, x0⟩ - σ_ij) - ‖g‖_* ‖y - x0‖`, and
/// minimizers satisfy `‖y‖ <= search_radius`. Colors within their activity
/// tolerance of zero may also put weight on the zero functional, so their
/// term weights can sum to less than one.
pub(crate) fn certify(
    problem: &Problem<'_>,
    eval: &Eval,
    x0: &[f64],
    cuts: &[Cut],
    activity: &[f64],
    tol: f64,
    search_radius: f64,
) -> Result<OptimalityCertificate> {
    let k = problem.k();
    let dual = problem.space.dual();
    let cands = candidates(problem, eval, x0, cuts, activity);
    let mut terms: Vec<Vec<CertificateTerm>> = vec![Vec::new(); k];
    if cands.iter().any(|c| c.is_empty()) {
        return Ok(OptimalityCertificate {
            residual: f64::INFINITY,
            lower_bound: 0.0,
            activity_tol: activity.to_vec(),
            terms,
        });
    }
    let points: Vec<Vec<Vec<f64>>> = cands.iter().map(|c| c.iter().map(|t| t.psi.clone()).collect()).collect();
    let blocks: Vec<Block<'_>> = points.iter().map(|p| Block { points: p, scale: 1.0 / k as f64 }).collect();
    let origin = vec![0.0; problem.space.dim];
    let sol = min_norm(&origin, &blocks, dual.p, 0.1 * tol, CERTIFICATE_ITERS, None)?;
    let mut affine = 0.0;
    for (i, w) in sol.weights.iter().enumerate() {
        for (c, &mu) in cands[i].iter().zip(w) {
            affine += mu * (dot(&c.psi, x0) - c.sigma) / k as f64;
            if let (Some(set), true) = (c.set, mu > 0.0) {
                terms[i].push(CertificateTerm { set, weight: mu, functional: c.psi.clone(), support: c.sigma });
            }
        }
    }
    let residual = sol.value;
    let reach = search_radius + problem.space.norm_unchecked(x0);
    let lower_bound = (affine - residual * reach).max(0.0);
    Ok(OptimalityCertificate { residual, lower_bound, activity_tol: activity.to_vec(), terms })
}

/// Tries the default activity tolerance first, then a ladder of tighter and
/// looser ones, and keeps the first certificate meeting both
/// `residual <= tol` and `F(x0) - lower_bound <= 10 tol`, or else the one
/// with the best lower bound.
pub(crate) fn best_certificate(
    problem: &Problem<'_>,
    eval: &Eval,
    x0: &[f64],
    cuts: &[Cut],
    tol: f64,
    search_radius: f64,
) -> Result<OptimalityCertificate> {
    let ladder: [fn(f64, f64) -> f64; 5] = [
        default_activity,
        |t, r| (10.0 * t).max(1e-3 * r),
        |t, _| 10.0 * t,
        |t, _| 2.0 * t,
        |t, r| (10.0 * t).max(0.05 * r),
    ];
    let mut best: Option<OptimalityCertificate> = None;
    for rule in ladder {
        let activity: Vec<f64> = eval.radii.iter().map(|&r| rule(tol, r)).collect();
        let cert = certify(problem, eval, x0, cuts, &activity, tol, search_radius)?;
        if cert.residual <= tol && eval.value - cert.lower_bound <= 10.0 * tol {
            return Ok(cert);
        }
        if best.as_ref().is_none_or(|b| cert.lower_bound > b.lower_bound) {
            best = Some(cert);
        }
    }
    Ok(best.expect("ladder is nonempty"))
}
