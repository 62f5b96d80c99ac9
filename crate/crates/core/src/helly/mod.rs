//! Helly centers: minimizing the (colorful) max-distance function, optimality
//! and lower-bound certificates, k-wise intersection checks, and the
//! theoretical radius bounds.

mod certificate;
mod engine;

use std::fmt;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use certificate::{CertificateTerm, OptimalityCertificate};
use engine::{EngineOptions, Problem, Region};

use crate::error::{Error, Result};
use crate::norm::{NormSpec, TypeEstimate};
use crate::polytope::{distance, support_value, VPolytope};

/// A finite family of polytopes in one space.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub sets: Vec<VPolytope>,
    pub space: NormSpec,
}

impl Family {
    pub fn new(sets: Vec<VPolytope>, space: NormSpec) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Empty("family"));
        }
        for (j, s) in sets.iter().enumerate() {
            if s.dim() != space.dim {
                return Err(Error::InvalidInstance(format!(
                    "set {j} has dimension {}, space has {}",
                    s.dim(),
                    space.dim
                )));
            }
        }
        Ok(Family { sets, space })
    }

    pub fn translate(&self, v: &[f64]) -> Family {
        Family { sets: self.sets.iter().map(|s| s.translate(v)).collect(), space: self.space }
    }

    pub fn scale(&self, s: f64) -> Family {
        Family { sets: self.sets.iter().map(|k| k.scale(s)).collect(), space: self.space }
    }
}

/// `k` families ("colors") in one space.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorfulFamily {
    pub colors: Vec<Family>,
}

impl ColorfulFamily {
    pub fn new(colors: Vec<Vec<VPolytope>>, space: NormSpec) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::Empty("color list"));
        }
        let colors = colors
            .into_iter()
            .enumerate()
            .map(|(i, sets)| {
                Family::new(sets, space).map_err(|e| match e {
                    Error::Empty(_) => Error::InvalidInstance(format!("color {i} is empty")),
                    Error::InvalidInstance(m) => Error::InvalidInstance(format!("color {i}: {m}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ColorfulFamily { colors })
    }

    pub fn space(&self) -> NormSpec {
        self.colors[0].space
    }

    pub fn k(&self) -> usize {
        self.colors.len()
    }

    pub fn translate(&self, v: &[f64]) -> ColorfulFamily {
        ColorfulFamily { colors: self.colors.iter().map(|f| f.translate(v)).collect() }
    }

    pub fn scale(&self, s: f64) -> ColorfulFamily {
        ColorfulFamily { colors: self.colors.iter().map(|f| f.scale(s)).collect() }
    }
}

impl From<Family> for ColorfulFamily {
    fn from(f: Family) -> Self {
        ColorfulFamily { colors: vec![f] }
    }
}

/// Anything the solver accepts: a plain family is the one-color case.
pub trait Colors {
    fn space(&self) -> NormSpec;
    fn color_sets(&self) -> Vec<&[VPolytope]>;
}

impl Colors for Family {
    fn space(&self) -> NormSpec {
        self.space
    }

    fn color_sets(&self) -> Vec<&[VPolytope]> {
        vec![&self.sets]
    }
}

impl Colors for ColorfulFamily {
    fn space(&self) -> NormSpec {
        ColorfulFamily::space(self)
    }

    fn color_sets(&self) -> Vec<&[VPolytope]> {
        self.colors.iter().map(|f| f.sets.as_slice()).collect()
    }
}

fn problem_of<F: Colors + ?Sized>(family: &F) -> Problem<'_> {
    Problem {
        space: family.space(),
        colors: family
            .color_sets()
            .into_iter()
            .map(|c| c.iter().map(Region::Polytope).collect())
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Target accuracy on the objective.
    pub tol: f64,
    /// Cutting-plane iterations after the multi-start phase.
    pub max_iters: usize,
    pub seed: u64,
    /// Number of projected-subgradient starts (the first is the origin).
    pub starts: usize,
    /// Subgradient iterations per start.
    pub local_iters: usize,
    /// A known lower bound on the optimum, e.g. from a [`LowerCertificate`];
    /// switches the subgradient phase to Polyak steps.
    pub lower_bound: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-6, max_iters: 400, seed: 0, starts: 8, local_iters: 12, lower_bound: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellyOutcome {
    pub center: Vec<f64>,
    /// `r_i = max_{K ∈ color i} dist(center, K)`.
    pub radii: Vec<f64>,
    /// `F(center) = mean of radii`.
    pub objective: f64,
    /// Per color, sets within the activity tolerance of `r_i`.
    pub active: Vec<Vec<usize>>,
    pub certificate_residual: f64,
    /// Residual at most `tol` and `objective - lower_bound` at most `10 tol`.
    pub certified: bool,
    /// Rigorous lower bound on `min F`.
    pub lower_bound: f64,
    pub certificate: OptimalityCertificate,
    pub iterations: usize,
    pub evaluations: usize,
}

impl HellyOutcome {
    /// Certified bound on `objective - min F`.
    pub fn gap(&self) -> f64 {
        (self.objective - self.lower_bound).max(0.0)
    }

    /// The weighted lower-bound certificate carried by a one-color outcome:
    /// one functional per set (zero for sets outside the certificate), with
    /// the certificate's weights and bound `-Σ w_j σ_{K_j}(ψ_j)`.
    pub fn lower_certificate(&self, family: &Family) -> Option<LowerCertificate> {
        if self.certificate.terms.len() != 1 {
            return None;
        }
        let dim = family.space.dim;
        let n = family.sets.len();
        let mut weights = vec![0.0; n];
        let mut functionals = vec![vec![0.0; dim]; n];
        for t in &self.certificate.terms[0] {
            weights[t.set] += t.weight;
            for (f, p) in functionals[t.set].iter_mut().zip(&t.functional) {
                *f += t.weight * p;
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut bound = 0.0;
        for j in 0..n {
            if weights[j] > 0.0 {
                let w = weights[j];
                functionals[j].iter_mut().for_each(|f| *f /= w);
                weights[j] /= total;
                bound -= weights[j] * support_value(&family.sets[j], &functionals[j]).ok()?;
            }
        }
        Some(LowerCertificate { functionals, bound, weights: Some(weights) })
    }
}

/// Minimizes `F(x) = (1/k) Σ_i max_{K ∈ color i} dist(x, K)`.
///
/// Never fails for lack of convergence: an outcome that could not be
/// certified is returned with `certified = false`.
pub fn minimize_max_distance<F: Colors + ?Sized>(family: &F, opts: &SolveOptions) -> Result<HellyOutcome> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let problem = problem_of(family);
    let engine_opts = EngineOptions {
        tol: opts.tol,
        max_iters: opts.max_iters,
        seed: opts.seed,
        starts: opts.starts,
        local_iters: opts.local_iters,
        lower_bound: opts.lower_bound,
        threshold: None,
    };
    let run = engine::minimize(&problem, &engine_opts)?;
    let cert = certificate::best_certificate(&problem, &run.eval, &run.x, &run.cuts, opts.tol, run.search_radius)?;
    let lower_bound = run.lower_bound.max(cert.lower_bound).min(run.eval.value);
    let active = active_sets(&run.eval, opts.tol);
    let certified = cert.residual <= opts.tol && run.eval.value - lower_bound <= 10.0 * opts.tol;
    Ok(HellyOutcome {
        center: run.x,
        objective: run.eval.value,
        radii: run.eval.radii.clone(),
        active,
        certificate_residual: cert.residual,
        certified,
        lower_bound,
        certificate: cert,
        iterations: run.iterations,
        evaluations: run.evaluations,
    })
}

fn active_sets(eval: &engine::Eval, tol: f64) -> Vec<Vec<usize>> {
    eval.dists
        .iter()
        .zip(&eval.radii)
        .map(|(ds, &r)| {
            let floor = r - certificate::default_activity(tol, r);
            (0..ds.len()).filter(|&j| ds[j].value >= floor).collect()
        })
        .collect()
}

/// The subgradient certificate at a given point, using only the
/// subgradients of the distance functions at `x0`.
pub fn optimality_certificate<F: Colors + ?Sized>(x0: &[f64], family: &F, tol: f64) -> Result<OptimalityCertificate> {
    let problem = problem_of(family);
    problem.space.check_dim(x0)?;
    let dtol = 0.01 * tol;
    let eval = engine::evaluate(&problem, x0, dtol, None)?;
    let origin = vec![0.0; problem.space.dim];
    let at_origin = engine::evaluate(&problem, &origin, dtol, None)?;
    let rho = family
        .color_sets()
        .iter()
        .flat_map(|c| c.iter())
        .map(|k| k.radius(&problem.space))
        .fold(0.0, f64::max);
    let activity: Vec<f64> = eval.radii.iter().map(|&r| certificate::default_activity(tol, r)).collect();
    certificate::certify(&problem, &eval, x0, &[], &activity, tol, at_origin.value + rho)
}

/// Functionals `ψ_i`, one per set, witnessing `max_i dist(y, K_i) >= b`.
///
/// Without weights the conditions are `‖Σ ψ_i‖_* <= tol`,
/// `‖ψ_i‖_* <= 1 + tol` and `σ_{K_i}(ψ_i) <= -b + tol` for every `i`. With
/// convex weights `w` the sum and support conditions are replaced by
/// `‖Σ w_i ψ_i‖_* <= tol` and `Σ w_i σ_{K_i}(ψ_i) <= -b + tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerCertificate {
    pub functionals: Vec<Vec<f64>>,
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Checks a [`LowerCertificate`] against a family.
///
/// When it passes, every `y` satisfies
/// `max_i dist(y, K_i) >= b - c·tol` with `c = 1 + |b| + ‖y‖`; on the
/// doubled unit ball and for `b <= 1` this is `c <= 4`.
pub fn verify_lower_bound(family: &Family, cert: &LowerCertificate, tol: f64) -> Result<bool> {
    let n = family.sets.len();
    if cert.functionals.len() != n {
        return Err(Error::InvalidArgument(format!(
            "certificate has {} functionals for {n} sets",
            cert.functionals.len()
        )));
    }
    let dual = family.space.dual();
    for psi in &cert.functionals {
        dual.check_dim(psi)?;
    }
    let weights = match &cert.weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidArgument(format!("certificate has {} weights for {n} sets", w.len())));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Ok(false);
            }
            Some(w)
        }
        None => None,
    };
    if cert.functionals.iter().any(|psi| !(dual.norm_unchecked(psi) <= 1.0 + tol)) {
        return Ok(false);
    }
    let mut sum = vec![0.0; family.space.dim];
    for (i, psi) in cert.functionals.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for (s, p) in sum.iter_mut().zip(psi) {
            *s += w * p;
        }
    }
    if !(dual.norm_unchecked(&sum) <= tol) {
        return Ok(false);
    }
    match weights {
        None => {
            for (k, psi) in family.sets.iter().zip(&cert.functionals) {
                if !(support_value(k, psi)? <= -cert.bound + tol) {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Some(w) => {
            let mut total = 0.0;
            for ((k, psi), wi) in family.sets.iter().zip(&cert.functionals).zip(w) {
                if *wi > 0.0 {
                    total += wi * support_value(k, psi)?;
                }
            }
            Ok(total <= -cert.bound + tol)
        }
    }
}

/// Witness points keyed by sorted index subsets, in insertion order.
///
/// Serialized as a JSON object whose keys are comma-separated indices,
/// e.g. `{"0,3": [1.0, -1.0]}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Witnesses(pub IndexMap<Vec<usize>, Vec<f64>>);

impl Witnesses {
    pub fn new() -> Self {
        Witnesses(IndexMap::new())
    }

    pub fn get(&self, subset: &[usize]) -> Option<&Vec<f64>> {
        self.0.get(subset)
    }

    pub fn insert(&mut self, subset: Vec<usize>, x: Vec<f64>) {
        self.0.insert(subset, x);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &Vec<f64>)> {
        self.0.iter()
    }
}

fn subset_key(s: &[usize]) -> String {
    s.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

impl Serialize for Witnesses {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(&subset_key(k), v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Witnesses {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Witnesses;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from comma-separated indices to points")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> std::result::Result<Witnesses, M::Error> {
                let mut out = IndexMap::new();
                while let Some((key, value)) = access.next_entry::<String, Vec<f64>>()? {
                    let subset = key
                        .split(',')
                        .map(|t| t.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| de::Error::custom(format!("bad witness key {key:?}")))?;
                    out.insert(subset, value);
                }
                Ok(Witnesses(out))
            }
        }
        deserializer.deserialize_map(V)
    }
}

/// All `k`-subsets of `0..n` in colexicographic order.
pub fn colex_subsets(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = (k <= n).then(|| (0..k).collect::<Vec<usize>>());
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut c = cur.clone();
        let mut i = 0;
        while i < k {
            let limit = if i + 1 < k { c[i + 1] } else { n };
            if c[i] + 1 < limit {
                c[i] += 1;
                for (t, v) in c.iter_mut().enumerate().take(i) {
                    *v = t;
                }
                next = Some(c);
                break;
            }
            i += 1;
        }
        Some(cur)
    })
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetCheck {
    pub subset: Vec<usize>,
    pub status: CheckStatus,
    /// `max(max_i dist(x, K_i), ‖x‖ - 1)` at the best point found.
    pub value: f64,
    pub by_witness: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwiseReport {
    pub k: usize,
    pub checks: Vec<SubsetCheck>,
}

impl KwiseReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }
}

/// Subsets solved numerically are capped at this many.
pub const KWISE_SOLVE_BUDGET: u128 = 100_000;
/// Subsets checked against witnesses are capped at this many.
pub const KWISE_WITNESS_BUDGET: u128 = 5_000_000;

/// Checks that every `k` sets of the family have a common point in the unit
/// ball, by witness where one is supplied and valid, and otherwise by
/// minimizing `max(max_{i ∈ J} dist(x, K_i), ‖x‖ - 1)`.
pub fn verify_kwise_intersection(
    family: &Family,
    k: usize,
    tol: f64,
    witnesses: Option<&Witnesses>,
) -> Result<KwiseReport> {
    let n = family.sets.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={n}")));
    }
    let total = binomial(n, k);
    let budget = if witnesses.is_some() { KWISE_WITNESS_BUDGET } else { KWISE_SOLVE_BUDGET };
    if total > budget {
        return Err(Error::BudgetExceeded { needed: total, budget });
    }
    let space = family.space;
    let subsets: Vec<Vec<usize>> = colex_subsets(n, k).collect();
    let checks = subsets
        .into_par_iter()
        .map(|subset| {
            if let Some(x) = witnesses.and_then(|w| w.get(&subset)) {
                if x.len() == space.dim && space.norm_unchecked(x) <= 1.0 + tol {
                    let mut worst: f64 = (space.norm_unchecked(x) - 1.0).max(0.0);
                    for &i in &subset {
                        worst = worst.max(distance(x, &family.sets[i], &space, 0.1 * tol)?.value);
                    }
                    if worst <= tol {
                        return Ok(SubsetCheck { subset, status: CheckStatus::Pass, value: worst, by_witness: true });
                    }
                }
            }
            solve_subset(family, subset, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KwiseReport { k, checks })
}

fn solve_subset(family: &Family, subset: Vec<usize>, tol: f64) -> Result<SubsetCheck> {
    let mut regions: Vec<Region<'_>> = subset.iter().map(|&i| Region::Polytope(&family.sets[i])).collect();
    regions.push(Region::Ball(1.0));
    let problem = Problem { space: family.space, colors: vec![regions] };
    let opts = EngineOptions {
        tol: 0.5 * tol,
        max_iters: 400,
        seed: 0,
        starts: 2,
        local_iters: 30,
        lower_bound: None,
        threshold: Some(tol),
    };
    let run = engine::minimize(&problem, &opts)?;
    let status = if run.eval.value <= tol {
        CheckStatus::Pass
    } else if run.lower_bound > tol {
        CheckStatus::Fail
    } else {
        CheckStatus::Undecided
    };
    Ok(SubsetCheck { subset, status, value: run.eval.value, by_witness: false })
}

/// `6 T k^(-1 + 1/p)`: the radius bound for `k`-wise intersecting families
/// when the dual space has type `p` with constant `T`.
pub fn upper_bound(t: &TypeEstimate, k: usize) -> Result<f64> {
    if !(t.p > 1.0 && t.p <= 2.0) {
        return Err(Error::InvalidArgument(format!("type exponent {} outside (1, 2]", t.p)));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(6.0 * t.constant * (k as f64).powf(-1.0 + 1.0 / t.p))
}

/// `k^(-1/2)`: the sharper bound for Euclidean spaces.
pub fn euclidean_bound(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}
