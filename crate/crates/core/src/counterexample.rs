//! The explicit `l_∞^{2k}` family with Helly radius at least `k/(2k-1)`, and
//! its transfer into other finite-dimensional spaces along an embedding of
//! `l_1^{2k}` into the dual.

use nalgebra::DMatrix;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helly::{binomial, colex_subsets, Family, LowerCertificate, Witnesses};
use crate::minnorm::{min_norm, Block, DEFAULT_MAX_ITERS};
use crate::norm::{dot, Exponent, NormSpec};
use crate::polytope::VPolytope;

pub const MAX_K: usize = 10;
/// Invariants are checked in exact rationals up to this `k`.
pub const EXACT_MAX_K: usize = 6;

/// `a_k = k / (2k - 1)`.
pub fn a_k(k: usize) -> f64 {
    k as f64 / (2 * k - 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleInstance {
    pub k: usize,
    /// `2k` sets in `l_∞^{2k}`; `K_i` is the hull of `x_J` over `J ∋ i`.
    pub family: Family,
    /// `u_i = a_k (e_i - (1/2k) Σ_j e_j)`: `1/2` at `i`, `-1/(2(2k-1))`
    /// elsewhere.
    pub functionals: Vec<Vec<f64>>,
    pub a_k: f64,
    /// `x_J`: `-1` on `J`, `+1` off `J`, for every `k`-subset `J`.
    pub witnesses: Witnesses,
}

fn check_k(k: usize) -> Result<()> {
    if (1..=MAX_K).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("k = {k} outside 1..={MAX_K}")))
    }
}

fn functional(k: usize, i: usize) -> Vec<f64> {
    let off = -1.0 / (2 * (2 * k - 1)) as f64;
    (0..2 * k).map(|t| if t == i { 0.5 } else { off }).collect()
}

fn sign_vector(n: usize, subset: &[usize]) -> Vec<f64> {
    let mut x = vec![1.0; n];
    for &j in subset {
        x[j] = -1.0;
    }
    x
}

pub fn build_linf_counterexample(k: usize) -> Result<CounterexampleInstance> {
    check_k(k)?;
    let n = 2 * k;
    let mut witnesses = Witnesses::new();
    let mut vertices: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    for subset in colex_subsets(n, k) {
        let x = sign_vector(n, &subset);
        for &i in &subset {
            vertices[i].push(x.clone());
        }
        witnesses.insert(subset, x);
    }
    let sets = vertices.into_iter().map(VPolytope::new).collect::<Result<Vec<_>>>()?;
    let space = NormSpec::new(n, Exponent::Infinity)?;
    Ok(CounterexampleInstance {
        k,
        family: Family::new(sets, space)?,
        functionals: (0..n).map(|i| functional(k, i)).collect(),
        a_k: a_k(k),
        witnesses,
    })
}

impl CounterexampleInstance {
    /// The certificate `(u_i, a_k)`.
    pub fn lower_certificate(&self) -> LowerCertificate {
        LowerCertificate { functionals: self.functionals.clone(), bound: self.a_k, weights: None }
    }

    /// Checks every structural invariant, in exact rationals for
    /// `k <= EXACT_MAX_K` and in floats with tolerance `1e-12` beyond.
    pub fn check_invariants(&self) -> Result<()> {
        if self.k <= EXACT_MAX_K {
            check_exact(self.k)?;
        }
        self.check_float(1e-12)
    }

    fn check_float(&self, tol: f64) -> Result<()> {
        let n = 2 * self.k;
        let fail = |m: String| Err(Error::Hypothesis(m));
        let mut sum = vec![0.0; n];
        for (i, u) in self.functionals.iter().enumerate() {
            let l1: f64 = u.iter().map(|c| c.abs()).sum();
            if (l1 - 1.0).abs() > tol {
                return fail(format!("‖u_{i}‖₁ = {l1}"));
            }
            sum.iter_mut().zip(u).for_each(|(s, c)| *s += c);
        }
        if sum.iter().any(|s| s.abs() > tol) {
            return fail("Σ u_i ≠ 0".into());
        }
        let per_set = binomial(2 * self.k - 1, self.k - 1) as usize;
        for (i, (set, u)) in self.family.sets.iter().zip(&self.functionals).enumerate() {
            if set.len() != per_set {
                return fail(format!("K_{i} has {} vertices, expected {per_set}", set.len()));
            }
            for z in set.vertices() {
                if dot(u, z) > -self.a_k + tol {
                    return fail(format!("⟨u_{i}, z⟩ > -a_k for a vertex of K_{i}"));
                }
            }
        }
        for (subset, x) in self.witnesses.iter() {
            if x.iter().any(|c| c.abs() != 1.0) || x.iter().sum::<f64>() != 0.0 {
                return fail(format!("witness {subset:?} is not a balanced sign vector"));
            }
            for &i in subset {
                if (dot(&self.functionals[i], x) + self.a_k).abs() > tol {
                    return fail(format!("⟨u_{i}, x_J⟩ ≠ -a_k for J = {subset:?}"));
                }
            }
        }
        Ok(())
    }
}

/// Exact-arithmetic check of the construction for one `k`.
pub fn check_exact(k: usize) -> Result<()> {
    check_k(k)?;
    let n = 2 * k;
    let kk = k as i64;
    let a = Rational64::new(kk, 2 * kk - 1);
    let u = |i: usize, t: usize| {
        let w = if t == i { Rational64::new(2 * kk - 1, 2 * kk) } else { Rational64::new(-1, 2 * kk) };
        a * w
    };
    let fail = |m: String| Err(Error::Hypothesis(format!("exact check: {m}")));
    let zero = Rational64::from_integer(0);
    for i in 0..n {
        let l1: Rational64 = (0..n).map(|t| { let v = u(i, t); if v < zero { -v } else { v } }).sum();
        if l1 != Rational64::from_integer(1) {
            return fail(format!("‖u_{i}‖₁ = {l1}"));
        }
    }
    for t in 0..n {
        if (0..n).map(|i| u(i, t)).sum::<Rational64>() != zero {
            return fail(format!("coordinate {t} of Σ u_i is nonzero"));
        }
    }
    for subset in colex_subsets(n, k) {
        let x: Vec<i64> = (0..n).map(|t| if subset.contains(&t) { -1 } else { 1 }).collect();
        if x.iter().sum::<i64>() != 0 {
            return fail(format!("x_J for {subset:?} is unbalanced"));
        }
        for &i in &subset {
            let e: Rational64 = (0..n).map(|t| u(i, t) * x[t]).sum();
            if e != -a {
                return fail(format!("⟨u_{i}, x_J⟩ = {e} for J = {subset:?}"));
            }
        }
    }
    Ok(())
}

/// A linear map `T: l_1^{2k} → X*` given by the images of the unit vectors,
/// with `‖T‖ <= 1` and `‖T^{-1}‖ <= 1 + eta` on its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// The target space `X` (columns live in its dual).
    pub space: NormSpec,
    pub columns: Vec<Vec<f64>>,
    pub eta: f64,
}

impl Embedding {
    /// The coordinate embedding into the first `2k` dual coordinates.
    pub fn coordinate(k: usize, space: NormSpec) -> Result<Self> {
        if space.dim < 2 * k {
            return Err(Error::InvalidArgument(format!("{space} has fewer than {} coordinates", 2 * k)));
        }
        let columns = (0..2 * k)
            .map(|i| {
                let mut c = vec![0.0; space.dim];
                c[i] = 1.0;
                c
            })
            .collect();
        Ok(Embedding { space, columns, eta: 0.0 })
    }

    /// Checks `‖T‖_{l_1 → X*} <= 1 + 1e-9` (the largest column dual norm)
    /// and numerical rank `2k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        let n = 2 * k;
        if self.columns.len() != n {
            return Err(Error::Hypothesis(format!("embedding has {} columns, need {n}", self.columns.len())));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Hypothesis(format!("eta = {} must be finite and nonnegative", self.eta)));
        }
        let dual = self.space.dual();
        for (i, c) in self.columns.iter().enumerate() {
            dual.check_dim(c)?;
            let norm = dual.norm_unchecked(c);
            if norm > 1.0 + 1e-9 {
                return Err(Error::Hypothesis(format!("column {i} has dual norm {norm} > 1")));
            }
        }
        let m = DMatrix::from_fn(self.space.dim, n, |r, c| self.columns[c][r]);
        let sv = m.singular_values();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        let rank = sv.iter().filter(|s| **s > 1e-9 * top.max(1e-300)).count();
        if rank < n {
            return Err(Error::Hypothesis(format!("embedding has numerical rank {rank} < {n}")));
        }
        Ok(())
    }

    /// `T u = Σ_t u_t column_t`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.dim];
        for (ut, col) in u.iter().zip(&self.columns) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += ut * c;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub k: usize,
    pub family: Family,
    /// Functionals `T u_i` with bound `a_k/(1+eta) - delta`.
    pub certificate: LowerCertificate,
    pub witnesses: Witnesses,
    pub a_k: f64,
}

/// Moves the counterexample into `emb.space`: `ψ_i = T u_i`, and for every
/// `k`-subset `J` a point `x_J` of the unit ball minimizing
/// `max_{i ∈ J} ⟨ψ_i, x⟩` (whose optimum is `-dist_*(0, conv{ψ_i : i ∈ J})`).
/// `K_i` is the hull of the `x_J` with `i ∈ J`.
pub fn transfer_counterexample(k: usize, emb: &Embedding, delta: f64) -> Result<Transfer> {
    check_k(k)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    emb.validate(k)?;
    let n = 2 * k;
    let ak = a_k(k);
    let target = -ak / (1.0 + emb.eta);
    let psi: Vec<Vec<f64>> = (0..n).map(|i| emb.apply(&functional(k, i))).collect();
    let dual = emb.space.dual();
    let origin = vec![0.0; emb.space.dim];
    let mut witnesses = Witnesses::new();
    let mut vertices: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut worst: f64 = f64::NEG_INFINITY;
    for subset in colex_subsets(n, k) {
        let pts: Vec<Vec<f64>> = subset.iter().map(|&i| psi[i].clone()).collect();
        let sol = min_norm(&origin, &[Block { points: &pts, scale: 1.0 }], dual.p, 0.1 * delta, DEFAULT_MAX_ITERS, None)?;
        let mut x: Vec<f64> = sol.dual.iter().map(|c| -c).collect();
        let n_x = emb.space.norm_unchecked(&x);
        if n_x > 1.0 {
            x.iter_mut().for_each(|c| *c /= n_x);
        }
        let eval = subset.iter().map(|&i| dot(&psi[i], &x)).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(eval);
        for &i in &subset {
            vertices[i].push(x.clone());
        }
        witnesses.insert(subset, x);
    }
    if worst > target + delta {
        return Err(Error::RealizationInfeasible { best_gap: worst - target, delta });
    }
    let sets = vertices.into_iter().map(VPolytope::new).collect::<Result<Vec<_>>>()?;
    Ok(Transfer {
        k,
        family: Family::new(sets, emb.space)?,
        certificate: LowerCertificate { functionals: psi, bound: ak / (1.0 + emb.eta) - delta, weights: None },
        witnesses,
        a_k: ak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caratheodory::weights_for_zero;
    use crate::helly::{minimize_max_distance, optimality_certificate, verify_kwise_intersection, verify_lower_bound, SolveOptions};

    #[test]
    fn k1_instance() {
        let c = build_linf_counterexample(1).unwrap();
        assert_eq!(c.a_k, 1.0);
        assert_eq!(c.functionals, vec![vec![0.5, -0.5], vec![-0.5, 0.5]]);
        assert_eq!(c.family.sets[0].vertices(), &[vec![-1.0, 1.0]]);
        assert_eq!(c.family.sets[1].vertices(), &[vec![1.0, -1.0]]);
    }

    #[test]
    fn invariants_hold_for_all_k() {
        for k in 1..=MAX_K.min(8) {
            let c = build_linf_counterexample(k).unwrap();
            c.check_invariants().unwrap();
            assert_eq!(c.witnesses.len() as u128, binomial(2 * k, k));
        }
        assert!((a_k(2) - 2.0 / 3.0).abs() < 1e-16);
        assert!(build_linf_counterexample(0).is_err());
        assert!(build_linf_counterexample(11).is_err());
    }

    #[test]
    fn certificates_and_intersections() {
        for k in 1..=3 {
            let c = build_linf_counterexample(k).unwrap();
            assert!(verify_lower_bound(&c.family, &c.lower_certificate(), 1e-9).unwrap());
            let mut over = c.lower_certificate();
            over.bound += 0.1;
            assert!(!verify_lower_bound(&c.family, &over, 1e-9).unwrap());
            let r = verify_kwise_intersection(&c.family, k, 1e-9, Some(&c.witnesses)).unwrap();
            assert!(r.passed() && r.checks.iter().all(|s| s.by_witness));
            let z = weights_for_zero(&c.functionals, &c.family.space.dual(), 1e-12).unwrap();
            assert!(z.feasible);
        }
    }

    #[test]
    fn solver_respects_the_lower_bound() {
        for k in 1..=3 {
            let c = build_linf_counterexample(k).unwrap();
            let out = minimize_max_distance(&c.family, &SolveOptions::default()).unwrap();
            assert!(out.objective >= c.a_k - 1e-6, "k={k}: {}", out.objective);
        }
    }

    #[test]
    fn construction_functionals_certify_the_center() {
        // The u_i sum to zero, so their hull contains the origin exactly.
        let c = build_linf_counterexample(2).unwrap();
        let cert = optimality_certificate(&[0.0; 4], &c.family, 1e-9).unwrap();
        assert!(cert.residual.is_finite());
        let z = weights_for_zero(&c.functionals, &c.family.space.dual(), 1e-12).unwrap();
        assert!(z.residual <= 1e-12);
    }

    #[test]
    fn identity_transfer_recovers_the_instance() {
        for k in 1..=3 {
            let c = build_linf_counterexample(k).unwrap();
            let emb = Embedding::coordinate(k, c.family.space).unwrap();
            let t = transfer_counterexample(k, &emb, 1e-9).unwrap();
            assert!((t.certificate.bound - (c.a_k - 1e-9)).abs() < 1e-15);
            for (a, b) in t.family.sets.iter().zip(&c.family.sets) {
                for (va, vb) in a.vertices().iter().zip(b.vertices()) {
                    for (x, y) in va.iter().zip(vb) {
                        assert!((x - y).abs() <= 1e-9);
                    }
                }
            }
            assert!(verify_lower_bound(&t.family, &t.certificate, 1e-9).unwrap());
        }
    }

    #[test]
    fn transfer_into_a_larger_space() {
        let space = NormSpec::new(4, Exponent::Infinity).unwrap();
        let emb = Embedding::coordinate(1, space).unwrap();
        let t = transfer_counterexample(1, &emb, 1e-9).unwrap();
        assert!((t.certificate.bound - (1.0 - 1e-9)).abs() < 1e-15);
        assert!(verify_lower_bound(&t.family, &t.certificate, 1e-9).unwrap());
    }

    #[test]
    fn transfer_rejects_bad_embeddings() {
        let space = NormSpec::new(2, Exponent::Infinity).unwrap();
        let mut emb = Embedding::coordinate(1, space).unwrap();
        emb.columns[0] = vec![1.5, 0.0];
        assert!(matches!(transfer_counterexample(1, &emb, 1e-9), Err(Error::Hypothesis(_))));
        emb.columns[0] = vec![0.0, 1.0];
        assert!(matches!(transfer_counterexample(1, &emb, 1e-9), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn transfer_reports_infeasible_realization() {
        // Claiming eta = 0 for the Euclidean plane: the best realization only
        // reaches -1/√2 instead of -1.
        let space = NormSpec::new(2, Exponent::Finite(2.0)).unwrap();
        let emb = Embedding { space, columns: vec![vec![1.0, 0.0], vec![0.0, 1.0]], eta: 0.0 };
        match transfer_counterexample(1, &emb, 1e-9) {
            Err(Error::RealizationInfeasible { best_gap, .. }) => {
                assert!((best_gap - (1.0 - 0.5f64.sqrt())).abs() < 1e-6, "{best_gap}")
            }
            other => panic!("{other:?}"),
        }
        let honest = Embedding { eta: 2f64.sqrt() - 1.0, ..emb };
        assert!(transfer_counterexample(1, &honest, 1e-9).is_ok());
    }
}
