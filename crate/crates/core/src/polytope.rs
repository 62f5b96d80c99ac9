//! V-polytopes and `l_p` distances to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minnorm::{min_norm, Block, DEFAULT_MAX_ITERS};
use crate::norm::{dot, NormSpec};

/// The convex hull of a nonempty finite list of vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVPolytope")]
pub struct VPolytope {
    vertices: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawVPolytope {
    vertices: Vec<Vec<f64>>,
}

impl TryFrom<RawVPolytope> for VPolytope {
    type Error = Error;

    fn try_from(raw: RawVPolytope) -> Result<Self> {
        VPolytope::new(raw.vertices)
    }
}

impl VPolytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let first = vertices.first().ok_or(Error::Empty("vertex list"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("vertices must have at least one coordinate".into()));
        }
        for (j, v) in vertices.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidInstance(format!(
                    "vertex {j} has dimension {}, vertex 0 has {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInstance(format!("vertex {j} has a non-finite coordinate")));
            }
        }
        Ok(VPolytope { vertices })
    }

    pub fn point(x: Vec<f64>) -> Result<Self> {
        VPolytope::new(vec![x])
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn push_vertex(&mut self, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        self.vertices.push(v);
        Ok(())
    }

    pub fn translate(&self, shift: &[f64]) -> VPolytope {
        let vertices = self
            .vertices
            .iter()
            .map(|v| v.iter().zip(shift).map(|(a, b)| a + b).collect())
            .collect();
        VPolytope { vertices }
    }

    pub fn scale(&self, s: f64) -> VPolytope {
        let vertices = self.vertices.iter().map(|v| v.iter().map(|a| s * a).collect()).collect();
        VPolytope { vertices }
    }

    /// Largest vertex norm: the polytope lies in this ball.
    pub fn radius(&self, space: &NormSpec) -> f64 {
        self.vertices
            .iter()
            .map(|v| space.norm_unchecked(v))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    /// Convex weights over the vertices; `nearest = Σ weights_j v_j`.
    pub weights: Vec<f64>,
    pub nearest: Vec<f64>,
    /// A dual-space functional `ψ` with `‖ψ‖_* <= 1` and
    /// `⟨ψ, v - x⟩ <= -(value - gap)` for every vertex; omitted when
    /// `value <= tol`.
    pub subgradient: Option<Vec<f64>>,
    /// Certified bound on `value - dist(x, K)`.
    pub gap: f64,
}

fn check(x: &[f64], k: &VPolytope, space: &NormSpec, tol: f64) -> Result<()> {
    space.check_dim(x)?;
    if k.dim() != space.dim {
        return Err(Error::DimensionMismatch { expected: space.dim, found: k.dim() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// `dist(x, K) = min_{λ ∈ Δ} ‖x - Σ λ_j v_j‖_p`.
///
/// Fails with [`Error::NotConverged`] if the certified gap still exceeds
/// `tol` after the iteration budget.
pub fn distance(x: &[f64], k: &VPolytope, space: &NormSpec, tol: f64) -> Result<DistanceResult> {
    let r = distance_warm(x, k, space, tol, None)?;
    if r.gap > tol {
        return Err(Error::NotConverged { iterations: DEFAULT_MAX_ITERS, gap: r.gap });
    }
    Ok(r)
}

/// Like [`distance`], but starts from `warm` weights when they fit and
/// returns the best iterate with its gap instead of failing.
pub fn distance_warm(
    x: &[f64],
    k: &VPolytope,
    space: &NormSpec,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<DistanceResult> {
    distance_capped(x, k, space, tol, warm, DEFAULT_MAX_ITERS)
}

/// [`distance_warm`] with an explicit iteration budget. The returned value
/// is always attained by a point of `K`, so it never underestimates.
pub(crate) fn distance_capped(
    x: &[f64],
    k: &VPolytope,
    space: &NormSpec,
    tol: f64,
    warm: Option<&[f64]>,
    max_iters: usize,
) -> Result<DistanceResult> {
    check(x, k, space, tol)?;
    let mut diff = vec![0.0; x.len()];
    let mut nearest_vertex = (0, f64::INFINITY);
    for (j, v) in k.vertices.iter().enumerate() {
        for ((d, a), b) in diff.iter_mut().zip(x).zip(v) {
            *d = a - b;
        }
        let n = space.norm_unchecked(&diff);
        if n < nearest_vertex.1 {
            nearest_vertex = (j, n);
        }
    }
    if nearest_vertex.1 <= tol || k.len() == 1 {
        let (j, value) = nearest_vertex;
        let mut weights = vec![0.0; k.len()];
        weights[j] = 1.0;
        let subgradient = (value > tol).then(|| {
            let z: Vec<f64> = x.iter().zip(&k.vertices[j]).map(|(a, b)| a - b).collect();
            crate::norm::dual_element(&z, space.p)
        });
        return Ok(DistanceResult { value, weights, nearest: k.vertices[j].clone(), subgradient, gap: 0.0 });
    }
    let warm_blocks;
    let warm = match warm {
        Some(w) => {
            warm_blocks = [w.to_vec()];
            Some(&warm_blocks[..])
        }
        None => None,
    };
    let block = [Block { points: &k.vertices, scale: -1.0 }];
    let mut sol = min_norm(x, &block, space.p, tol, max_iters, warm)?;
    let weights = sol.weights.pop().expect("one block");
    let nearest: Vec<f64> = x.iter().zip(&sol.point).map(|(a, z)| a - z).collect();
    let gap = sol.gap();
    let subgradient = (sol.value > tol).then(|| {
        let mut psi = sol.dual;
        let n = space.dual_norm_unchecked(&psi);
        if n > 1.0 {
            psi.iter_mut().for_each(|c| *c /= n);
        }
        psi
    });
    Ok(DistanceResult { value: sol.value, weights, nearest, subgradient, gap })
}

/// A subgradient of `dist(·, K)` at `x`; refuses points of `K`, where the
/// subdifferential is a normal cone rather than a single functional.
pub fn distance_subgradient(x: &[f64], k: &VPolytope, space: &NormSpec, tol: f64) -> Result<Vec<f64>> {
    distance(x, k, space, tol)?.subgradient.ok_or(Error::PointInSet)
}

/// `σ_K(ψ) = max_j ⟨ψ, v_j⟩`.
pub fn support_value(k: &VPolytope, psi: &[f64]) -> Result<f64> {
    if psi.len() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), found: psi.len() });
    }
    Ok(k.vertices
        .iter()
        .map(|v| dot(psi, v))
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn contains(x: &[f64], k: &VPolytope, space: &NormSpec, tol: f64) -> Result<bool> {
    Ok(distance(x, k, space, tol)?.value <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::Exponent;
    use proptest::prelude::*;

    fn sp(dim: usize, p: f64) -> NormSpec {
        NormSpec::new(dim, Exponent::new(p).unwrap()).unwrap()
    }

    fn poly(v: &[&[f64]]) -> VPolytope {
        VPolytope::new(v.iter().map(|x| x.to_vec()).collect()).unwrap()
    }

    const PS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

    #[test]
    fn distance_examples() {
        let k = poly(&[&[1.0, 0.0], &[0.0, 1.0]]);
        for p in PS {
            assert_eq!(distance(&[1.0, 0.0], &k, &sp(2, p), 1e-9).unwrap().value, 0.0);
        }
        let d = distance(&[0.0, 0.0], &k, &sp(2, 2.0), 1e-12).unwrap();
        // nearest point of the segment t(1,0)+(1-t)(0,1): |(t,1-t)|² = 2t²-2t+1, minimal at t=1/2
        assert!((d.value - 0.5f64.sqrt()).abs() < 1e-10);
        assert!((d.weights[0] - 0.5).abs() < 1e-6);
        let ones = poly(&[&[1.0; 5]]);
        assert_eq!(distance(&[0.0; 5], &ones, &sp(5, f64::INFINITY), 1e-9).unwrap().value, 1.0);
    }

    #[test]
    fn subgradient_examples() {
        let psi = distance_subgradient(&[0.0, 0.0], &poly(&[&[2.0, 0.0]]), &sp(2, 2.0), 1e-9).unwrap();
        assert_eq!(psi, vec![-1.0, 0.0]);

        let psi = distance_subgradient(&[0.0, 0.0], &poly(&[&[1.0, 1.0]]), &sp(2, 1.0), 1e-9).unwrap();
        assert_eq!(psi, vec![-1.0, -1.0]);

        let k = poly(&[&[1.0, 1.0], &[1.0, -1.0]]);
        let psi = distance_subgradient(&[0.0, 0.0], &k, &sp(2, f64::INFINITY), 1e-9).unwrap();
        assert!((psi[0] + 1.0).abs() < 1e-12 && psi[1].abs() < 1e-12, "{psi:?}");

        assert_eq!(
            distance_subgradient(&[1.0, 1.0], &k, &sp(2, 2.0), 1e-9).unwrap_err(),
            Error::PointInSet
        );
    }

    #[test]
    fn support_examples() {
        assert_eq!(support_value(&poly(&[&[-1.0, 0.0], &[1.0, 0.0]]), &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(support_value(&poly(&[&[-1.0, 0.0], &[1.0, 0.0]]), &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(support_value(&poly(&[&[1.0, 0.0], &[0.0, 1.0]]), &[1.0, 1.0]).unwrap(), 1.0);
        assert!(support_value(&poly(&[&[1.0, 0.0]]), &[1.0]).is_err());
    }

    #[test]
    fn contains_examples() {
        let k = poly(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]);
        for p in PS {
            let s = sp(2, p);
            assert!(contains(&[0.0, 1.0], &k, &s, 1e-9).unwrap());
            assert!(contains(&[0.5, 0.5], &k, &s, 1e-9).unwrap());
            // ‖x‖ - max vertex norm is a lower bound on the distance
            let far = [3.0, 3.0];
            assert!(s.norm_unchecked(&far) > k.radius(&s) + 1e-9);
            assert!(!contains(&far, &k, &s, 1e-9).unwrap());
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(VPolytope::new(vec![]).is_err());
        assert!(VPolytope::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(VPolytope::new(vec![vec![f64::NAN]]).is_err());
        assert!(distance(&[0.0], &poly(&[&[1.0, 2.0]]), &sp(2, 2.0), 1e-9).is_err());
        let json = r#"{"vertices": [[1.0, 2.0], [3.0]]}"#;
        assert!(serde_json::from_str::<VPolytope>(json).is_err());
    }

    fn instance() -> impl Strategy<Value = (usize, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, usize)> {
        (1usize..4).prop_flat_map(|dim| {
            (
                Just(dim),
                proptest::collection::vec(proptest::collection::vec(-2.0..2.0f64, dim), 1..6),
                proptest::collection::vec(-3.0..3.0f64, dim),
                proptest::collection::vec(-3.0..3.0f64, dim),
                0usize..5,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn distance_is_one_lipschitz((dim, verts, x, y, pi) in instance()) {
            let s = sp(dim, PS[pi]);
            let k = VPolytope::new(verts).unwrap();
            let tol = 1e-8;
            let dx = distance(&x, &k, &s, tol).unwrap().value;
            let dy = distance(&y, &k, &s, tol).unwrap().value;
            let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            prop_assert!((dx - dy).abs() <= s.norm_unchecked(&diff) + 2.0 * tol);
        }

        #[test]
        fn primal_dual_consistency((dim, verts, x, _y, pi) in instance()) {
            let s = sp(dim, PS[pi]);
            let k = VPolytope::new(verts).unwrap();
            let tol = 1e-8;
            let d = distance(&x, &k, &s, tol).unwrap();
            prop_assert!((d.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(d.weights.iter().all(|w| *w >= 0.0));
            if let Some(psi) = &d.subgradient {
                prop_assert!(s.dual_norm_unchecked(psi) <= 1.0 + 1e-9);
                let diff: Vec<f64> = x.iter().zip(&d.nearest).map(|(a, b)| a - b).collect();
                prop_assert!(d.value - dot(psi, &diff) <= 10.0 * tol);
                for v in k.vertices() {
                    let vx: Vec<f64> = v.iter().zip(&x).map(|(a, b)| a - b).collect();
                    prop_assert!(dot(psi, &vx) <= -(d.value - tol));
                }
            } else {
                prop_assert!(d.value <= tol);
            }
        }

        #[test]
        fn subgradient_matches_directional_derivative(
            (dim, verts, x, dir, pi) in instance()
        ) {
            let p = [1.5, 2.0, 3.0][pi % 3];
            let s = sp(dim, p);
            let k = VPolytope::new(verts).unwrap();
            let tol = 1e-12;
            let d = distance(&x, &k, &s, tol).unwrap();
            prop_assume!(d.value > 0.1);
            let n = crate::norm::lp_norm(&dir, Exponent::Finite(2.0));
            prop_assume!(n > 1e-3);
            let u: Vec<f64> = dir.iter().map(|c| c / n).collect();
            let h = 1e-6;
            let xp: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - h * b).collect();
            let fd = (distance(&xp, &k, &s, tol).unwrap().value - distance(&xm, &k, &s, tol).unwrap().value) / (2.0 * h);
            let psi = d.subgradient.unwrap();
            prop_assert!((fd - dot(&psi, &u)).abs() <= 1e-5, "fd {} vs {}", fd, dot(&psi, &u));
        }
    }
}
