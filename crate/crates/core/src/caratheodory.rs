//! Approximate Carathéodory in the dual: Maurey's empirical method, its
//! colorful variant, weight recovery for `0 ∈ conv`, and exhaustive oracles.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minnorm::{min_norm, Block, DEFAULT_MAX_ITERS};
use crate::norm::{dual_element, dot, NormSpec, TypeEstimate};
use crate::rng;

/// Norm slack allowed for points of a cloud beyond the unit ball.
pub const CLOUD_NORM_SLACK: f64 = 1e-9;
/// Largest number of tuples the exhaustive oracle will visit.
pub const BRUTE_FORCE_BUDGET: u128 = 10_000_000;

/// Points in the unit ball of a space, optionally with convex weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>, space: &NormSpec) -> Result<Self> {
        let cloud = PointCloud { points, weights };
        cloud.validate(space)?;
        Ok(cloud)
    }

    pub fn validate(&self, space: &NormSpec) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Empty("point cloud"));
        }
        for (j, u) in self.points.iter().enumerate() {
            let n = space.norm(u)?;
            if !(n <= 1.0 + CLOUD_NORM_SLACK) {
                return Err(Error::InvalidInstance(format!("point {j} has norm {n} > 1")));
            }
        }
        if let Some(w) = &self.weights {
            check_simplex(w, self.points.len())?;
        }
        Ok(())
    }

    /// `Σ λ_j u_j`.
    pub fn anchor(&self) -> Result<Vec<f64>> {
        let w = self.weights.as_ref().ok_or(Error::InvalidArgument("cloud has no weights".into()))?;
        let mut a = vec![0.0; self.points[0].len()];
        for (u, &l) in self.points.iter().zip(w) {
            for (ac, uc) in a.iter_mut().zip(u) {
                *ac += l * uc;
            }
        }
        Ok(a)
    }
}

fn check_simplex(w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: w.len() });
    }
    if w.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidInstance("weights must be nonnegative".into()));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInstance(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// One weighted cloud per color, with anchors `a_i = Σ_j λ_ij u_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorGroup {
    pub groups: Vec<PointCloud>,
    pub anchors: Vec<Vec<f64>>,
}

impl ColorGroup {
    pub fn new(groups: Vec<PointCloud>, space: &NormSpec) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Empty("color list"));
        }
        let mut anchors = Vec::with_capacity(groups.len());
        for g in &groups {
            g.validate(space)?;
            anchors.push(g.anchor()?);
        }
        Ok(ColorGroup { groups, anchors })
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// `‖Σ_i a_i‖`, zero for a valid colorful instance.
    pub fn anchor_sum_norm(&self, space: &NormSpec) -> f64 {
        let mut s = vec![0.0; space.dim];
        for a in &self.anchors {
            for (sc, ac) in s.iter_mut().zip(a) {
                *sc += ac;
            }
        }
        space.norm_unchecked(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaureyResult {
    /// Selected indices: `k` draws, or one index per color.
    pub indices: Vec<usize>,
    pub average: Vec<f64>,
    pub norm: f64,
    pub trials_used: u64,
    pub seed: u64,
}

/// Result of [`weights_for_zero`].
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroWeights {
    pub weights: Vec<f64>,
    /// `‖Σ λ_j u_j‖` for the returned weights.
    pub residual: f64,
    /// Certified lower bound on the minimal residual over the simplex.
    pub lower_bound: f64,
    /// `residual <= tol`: the origin is (numerically) in the hull.
    pub feasible: bool,
}

/// Convex weights putting `Σ λ_j u_j` as close to the origin as possible.
pub fn weights_for_zero(points: &[Vec<f64>], space: &NormSpec, tol: f64) -> Result<ZeroWeights> {
    if points.is_empty() {
        return Err(Error::Empty("point list"));
    }
    for u in points {
        space.check_dim(u)?;
    }
    let origin = vec![0.0; space.dim];
    let block = [Block { points, scale: 1.0 }];
    let mut sol = min_norm(&origin, &block, space.p, tol, DEFAULT_MAX_ITERS, None)?;
    let weights = sol.weights.pop().expect("one block");
    Ok(ZeroWeights {
        residual: sol.value,
        lower_bound: sol.lower_bound.max(0.0),
        feasible: sol.value <= tol,
        weights,
    })
}

/// How index tuples are chosen by [`maurey_select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Best of independent draws from the weights.
    Sampling,
    /// Deterministic Frank–Wolfe vertex trace with step `1/t`.
    Greedy,
}

fn average_of(points: &[Vec<f64>], indices: &[usize], dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; dim];
    for &i in indices {
        for (sc, uc) in s.iter_mut().zip(&points[i]) {
            *sc += uc;
        }
    }
    let k = indices.len() as f64;
    s.iter_mut().for_each(|c| *c /= k);
    s
}

fn best_of<F>(trials: u64, run: F) -> (u64, Vec<usize>, Vec<f64>, f64)
where
    F: Fn(u64) -> (Vec<usize>, Vec<f64>, f64) + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let (idx, avg, n) = run(t);
            (t, idx, avg, n)
        })
        .min_by(|a, b| a.3.total_cmp(&b.3).then(a.0.cmp(&b.0)))
        .expect("at least one trial")
}

/// Draws `k` indices i.i.d. from the cloud weights in each of `trials`
/// independent trials and keeps the trial whose average has least norm
/// (ties go to the lowest trial number). Trial `t` uses stream `t`, so the
/// result for `trials = T` is the best of the first `T` trials of any
/// longer run.
///
/// The norm bound `2 T_p k^(-1+1/p)` holds in expectation when the weights
/// put the anchor at the origin.
pub fn maurey_sample(cloud: &PointCloud, k: usize, trials: u64, seed: u64, space: &NormSpec) -> Result<MaureyResult> {
    cloud.validate(space)?;
    let w = cloud.weights.as_ref().ok_or(Error::InvalidArgument("cloud has no weights".into()))?;
    if k == 0 || trials == 0 {
        return Err(Error::InvalidArgument("k and trials must be at least 1".into()));
    }
    let dist = WeightedIndex::new(w).map_err(|e| Error::InvalidInstance(format!("weights: {e}")))?;
    let (_, indices, average, norm) = best_of(trials, |t| {
        let mut r = rng::stream(seed, t);
        let idx: Vec<usize> = (0..k).map(|_| dist.sample(&mut r)).collect();
        let avg = average_of(&cloud.points, &idx, space.dim);
        let n = space.norm_unchecked(&avg);
        (idx, avg, n)
    });
    Ok(MaureyResult { indices, average, norm, trials_used: trials, seed })
}

/// Either sampling (see [`maurey_sample`]) or the greedy vertex trace.
pub fn maurey_select(
    cloud: &PointCloud,
    k: usize,
    trials: u64,
    seed: u64,
    space: &NormSpec,
    strategy: Selection,
) -> Result<MaureyResult> {
    match strategy {
        Selection::Sampling => maurey_sample(cloud, k, trials, seed, space),
        Selection::Greedy => greedy_tuple(cloud, k, space),
    }
}

/// Frank–Wolfe on `‖Σ λ_j u_j‖` from the shortest point with step `1/t`;
/// the vertices visited form the tuple.
pub fn greedy_tuple(cloud: &PointCloud, k: usize, space: &NormSpec) -> Result<MaureyResult> {
    cloud.validate(space)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let first = (0..cloud.points.len())
        .min_by(|&a, &b| space.norm_unchecked(&cloud.points[a]).total_cmp(&space.norm_unchecked(&cloud.points[b])))
        .expect("nonempty");
    let mut indices = vec![first];
    while indices.len() < k {
        let avg = average_of(&cloud.points, &indices, space.dim);
        let psi = dual_element(&avg, space.p);
        let next = (0..cloud.points.len())
            .min_by(|&a, &b| dot(&psi, &cloud.points[a]).total_cmp(&dot(&psi, &cloud.points[b])))
            .expect("nonempty");
        indices.push(next);
    }
    let average = average_of(&cloud.points, &indices, space.dim);
    let norm = space.norm_unchecked(&average);
    Ok(MaureyResult { indices, average, norm, trials_used: 1, seed: 0 })
}

/// Per trial, draws one point per color (color `i` of trial `t` uses stream
/// `stream_id(t, i)`) and keeps the trial with the shortest average.
pub fn colorful_maurey_sample(
    group: &ColorGroup,
    trials: u64,
    seed: u64,
    space: &NormSpec,
    tol: f64,
) -> Result<MaureyResult> {
    let s = group.anchor_sum_norm(space);
    if s > tol {
        return Err(Error::Hypothesis(format!("anchors sum to a vector of norm {s:e} > {tol:e}")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let dists = group
        .groups
        .iter()
        .map(|g| WeightedIndex::new(g.weights.as_ref().expect("validated")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidInstance(format!("weights: {e}")))?;
    let k = group.k() as f64;
    let (_, indices, average, norm) = best_of(trials, |t| {
        let mut avg = vec![0.0; space.dim];
        let mut idx = Vec::with_capacity(group.k());
        for (i, (g, d)) in group.groups.iter().zip(&dists).enumerate() {
            let mut r = rng::stream(seed, rng::stream_id(t, i as u64));
            let j = d.sample(&mut r);
            idx.push(j);
            for (ac, uc) in avg.iter_mut().zip(&g.points[j]) {
                *ac += uc;
            }
        }
        avg.iter_mut().for_each(|c| *c /= k);
        let n = space.norm_unchecked(&avg);
        (idx, avg, n)
    });
    Ok(MaureyResult { indices, average, norm, trials_used: trials, seed })
}

/// Exact minimum of the average norm over all multisets of `k` indices.
pub fn brute_force_best_tuple(points: &[Vec<f64>], k: usize, space: &NormSpec) -> Result<MaureyResult> {
    if points.is_empty() {
        return Err(Error::Empty("point list"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let needed = (points.len() as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if needed > BRUTE_FORCE_BUDGET {
        return Err(Error::BudgetExceeded { needed, budget: BRUTE_FORCE_BUDGET });
    }
    for u in points {
        space.check_dim(u)?;
    }
    let choices: Vec<&[Vec<f64>]> = vec![points; k];
    let mut search = Search::new(space, k);
    search.multisets = true;
    search.run(&choices);
    Ok(search.finish(&choices))
}

/// Exact minimum of the average norm over one index per color.
pub fn brute_force_colorful(group: &ColorGroup, space: &NormSpec) -> Result<MaureyResult> {
    let needed = group
        .groups
        .iter()
        .try_fold(1u128, |acc, g| acc.checked_mul(g.points.len() as u128))
        .unwrap_or(u128::MAX);
    if needed > BRUTE_FORCE_BUDGET {
        return Err(Error::BudgetExceeded { needed, budget: BRUTE_FORCE_BUDGET });
    }
    let choices: Vec<&[Vec<f64>]> = group.groups.iter().map(|g| g.points.as_slice()).collect();
    let mut search = Search::new(space, group.k());
    search.run(&choices);
    Ok(search.finish(&choices))
}

struct Search<'a> {
    space: &'a NormSpec,
    k: usize,
    multisets: bool,
    idx: Vec<usize>,
    sum: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
    visited: u64,
}

impl<'a> Search<'a> {
    fn new(space: &'a NormSpec, k: usize) -> Self {
        Search { space, k, multisets: false, idx: Vec::new(), sum: vec![0.0; space.dim], best: None, visited: 0 }
    }

    fn run(&mut self, choices: &[&[Vec<f64>]]) {
        let depth = self.idx.len();
        if depth == choices.len() {
            self.visited += 1;
            let n = self.space.norm_unchecked(&self.sum) / self.k as f64;
            if self.best.as_ref().is_none_or(|(b, _)| n < *b) {
                self.best = Some((n, self.idx.clone()));
            }
            return;
        }
        let start = if self.multisets { self.idx.last().copied().unwrap_or(0) } else { 0 };
        for j in start..choices[depth].len() {
            let u = &choices[depth][j];
            self.sum.iter_mut().zip(u.iter()).for_each(|(s, c)| *s += c);
            self.idx.push(j);
            self.run(choices);
            self.idx.pop();
            self.sum.iter_mut().zip(u.iter()).for_each(|(s, c)| *s -= c);
        }
    }

    fn finish(self, choices: &[&[Vec<f64>]]) -> MaureyResult {
        let (_, indices) = self.best.expect("at least one tuple");
        // recompute from scratch so the reported norm is exact for the tuple
        let mut average = vec![0.0; self.space.dim];
        for (c, &j) in choices.iter().zip(&indices) {
            average.iter_mut().zip(&c[j]).for_each(|(a, u)| *a += u);
        }
        average.iter_mut().for_each(|a| *a /= self.k as f64);
        let norm = self.space.norm_unchecked(&average);
        MaureyResult { indices, average, norm, trials_used: self.visited, seed: 0 }
    }
}

/// `2 T k^(-1+1/p)`: the expected-norm bound for `k` draws.
pub fn maurey_bound(t: &TypeEstimate, k: usize) -> f64 {
    2.0 * t.constant * (k as f64).powf(-1.0 + 1.0 / t.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::Exponent;
    use proptest::prelude::*;

    fn sp(dim: usize, p: f64) -> NormSpec {
        NormSpec::new(dim, Exponent::new(p).unwrap()).unwrap()
    }

    fn pm_one() -> PointCloud {
        PointCloud::new(vec![vec![1.0], vec![-1.0]], Some(vec![0.5, 0.5]), &sp(1, 1.0)).unwrap()
    }

    #[test]
    fn weights_for_zero_examples() {
        let z = weights_for_zero(&[vec![1.0, 0.0], vec![-1.0, 0.0]], &sp(2, 2.0), 1e-12).unwrap();
        assert!(z.feasible);
        assert!((z.weights[0] - 0.5).abs() < 1e-12);
        assert!(z.residual < 1e-12);

        let z = weights_for_zero(&[vec![1.0, 0.0], vec![0.0, 1.0]], &sp(2, 2.0), 1e-10).unwrap();
        assert!(!z.feasible);
        // ‖(t, 1-t)‖₂ is minimal at t = 1/2
        assert!((z.residual - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(z.lower_bound > z.residual - 1e-10);

        // the 2k functionals with entries 1/2 and -1/(2(2k-1)) sum to zero
        let k = 3;
        let u: Vec<Vec<f64>> = (0..2 * k)
            .map(|i| (0..2 * k).map(|j| if i == j { 0.5 } else { -0.5 / (2 * k - 1) as f64 }).collect())
            .collect();
        let z = weights_for_zero(&u, &sp(2 * k, 1.0), 1e-12).unwrap();
        assert!(z.feasible && z.residual < 1e-12);
        for w in &z.weights {
            assert!((w - 1.0 / (2 * k) as f64).abs() < 1e-9, "{:?}", z.weights);
        }
    }

    #[test]
    fn maurey_examples() {
        let c = pm_one();
        let s = sp(1, 1.0);
        let r = maurey_sample(&c, 2, 8, 1, &s).unwrap();
        assert_eq!(r.norm, 0.0);
        let mut idx = r.indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1]);
        assert_eq!(maurey_sample(&c, 1, 8, 1, &s).unwrap().norm, 1.0);
        assert!((maurey_sample(&c, 3, 8, 1, &s).unwrap().norm - 1.0 / 3.0).abs() < 1e-15);
        let no_weights = PointCloud { weights: None, ..c };
        assert!(maurey_sample(&no_weights, 2, 8, 1, &s).is_err());
    }

    #[test]
    fn colorful_examples() {
        let s1 = sp(1, 1.0);
        let g = ColorGroup::new(
            vec![
                PointCloud::new(vec![vec![1.0]], Some(vec![1.0]), &s1).unwrap(),
                PointCloud::new(vec![vec![-1.0]], Some(vec![1.0]), &s1).unwrap(),
            ],
            &s1,
        )
        .unwrap();
        assert_eq!(colorful_maurey_sample(&g, 3, 0, &s1, 1e-9).unwrap().norm, 0.0);

        let s2 = sp(2, 2.0);
        let g = ColorGroup::new(
            vec![
                PointCloud::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], Some(vec![0.5, 0.5]), &s2).unwrap(),
                PointCloud::new(vec![vec![0.0, 1.0], vec![0.0, -1.0]], Some(vec![0.5, 0.5]), &s2).unwrap(),
            ],
            &s2,
        )
        .unwrap();
        let r = colorful_maurey_sample(&g, 16, 0, &s2, 1e-9).unwrap();
        assert!((r.norm - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((brute_force_colorful(&g, &s2).unwrap().norm - 0.5f64.sqrt()).abs() < 1e-15);

        let bad = ColorGroup::new(
            vec![PointCloud::new(vec![vec![1.0, 0.0]], Some(vec![1.0]), &s2).unwrap()],
            &s2,
        )
        .unwrap();
        assert!(matches!(colorful_maurey_sample(&bad, 4, 0, &s2, 1e-9), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn brute_force_examples() {
        let s = sp(1, 1.0);
        let pts = vec![vec![1.0], vec![-1.0]];
        assert_eq!(brute_force_best_tuple(&pts, 2, &s).unwrap().norm, 0.0);
        let pts = vec![vec![0.9, 0.1], vec![-0.2, 0.3], vec![0.5, 0.5]];
        let s2 = sp(2, 2.0);
        let best_single = pts.iter().map(|u| s2.norm_unchecked(u)).fold(f64::INFINITY, f64::min);
        assert_eq!(brute_force_best_tuple(&pts, 1, &s2).unwrap().norm, best_single);
        let many = vec![vec![0.0]; 10];
        assert!(matches!(brute_force_best_tuple(&many, 8, &s), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn greedy_is_deterministic() {
        let c = pm_one();
        let s = sp(1, 1.0);
        let a = maurey_select(&c, 4, 1, 0, &s, Selection::Greedy).unwrap();
        assert_eq!(a, maurey_select(&c, 4, 1, 0, &s, Selection::Greedy).unwrap());
        assert_eq!(a.norm, 0.0);
    }

    fn cloud(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-0.5..0.5f64, dim), 1..6)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sampler_dominance(pts in cloud(3), k in 1usize..4, seed in 0u64..1000) {
            let s = sp(3, 2.0);
            let w = vec![1.0 / pts.len() as f64; pts.len()];
            let c = PointCloud::new(pts.clone(), Some(w), &s).unwrap();
            let oracle = brute_force_best_tuple(&pts, k, &s).unwrap().norm;
            let mut last = f64::INFINITY;
            for t in [1u64, 2, 4, 16, 64] {
                let r = maurey_sample(&c, k, t, seed, &s).unwrap();
                prop_assert!(r.norm <= last);
                prop_assert!(r.norm >= oracle - 1e-15);
                prop_assert_eq!(r.norm, s.norm_unchecked(&r.average));
                last = r.norm;
            }
            prop_assert_eq!(maurey_sample(&c, k, 16, seed, &s).unwrap(), maurey_sample(&c, k, 16, seed, &s).unwrap());
        }
    }
}
