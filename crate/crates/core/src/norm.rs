//! Finite-dimensional `l_p` spaces: norms, duality and Rademacher type.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// Largest sign-enumeration problem accepted by the exhaustive mode.
pub const MAX_EXHAUSTIVE_VECTORS: usize = 24;

/// An exponent `p` in `[1, ∞]`. Infinity is its own variant so that duality
/// `1 <-> ∞` stays exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::INFINITY {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    /// The conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn dual(self) -> Exponent {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(1.0) => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    /// `1 < p < ∞`: the norm is differentiable away from the origin.
    pub fn is_smooth(self) -> bool {
        matches!(self, Exponent::Finite(p) if p > 1.0)
    }

    /// `p ∈ {1, ∞}`: balls are polytopes and distances are linear programs.
    pub fn is_polyhedral(self) -> bool {
        !self.is_smooth()
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(p) => write!(f, "{p}"),
            Exponent::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "∞" => Ok(Exponent::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("cannot parse exponent {other:?}")))?;
                Exponent::new(p)
            }
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => serializer.serialize_f64(*p),
            Exponent::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(deserializer)? {
            Raw::Number(p) => Exponent::new(p),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Conjugate exponent; `dual_exponent(dual_exponent(p)) == p`.
pub fn dual_exponent(p: Exponent) -> Exponent {
    p.dual()
}

/// The space `l_p^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNormSpec")]
pub struct NormSpec {
    pub p: Exponent,
    pub dim: usize,
}

#[derive(Deserialize)]
struct RawNormSpec {
    p: Exponent,
    dim: usize,
}

impl TryFrom<RawNormSpec> for NormSpec {
    type Error = Error;

    fn try_from(raw: RawNormSpec) -> Result<Self> {
        NormSpec::new(raw.dim, raw.p)
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l_{}^{}", self.p, self.dim)
    }
}

impl NormSpec {
    pub fn new(dim: usize, p: Exponent) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if let Exponent::Finite(v) = p {
            Exponent::new(v)?;
        }
        Ok(NormSpec { p, dim })
    }

    pub fn euclidean(dim: usize) -> Self {
        NormSpec { p: Exponent::Finite(2.0), dim }
    }

    /// The dual space `l_q^dim`.
    pub fn dual(&self) -> NormSpec {
        NormSpec { p: self.p.dual(), dim: self.dim }
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: x.len() })
        }
    }

    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(lp_norm(x, self.p))
    }

    pub fn norm_unchecked(&self, x: &[f64]) -> f64 {
        lp_norm(x, self.p)
    }

    /// Norm of `x` viewed as a functional on this space.
    pub fn dual_norm_unchecked(&self, x: &[f64]) -> f64 {
        lp_norm(x, self.p.dual())
    }
}

/// `(Σ|x_i|^p)^(1/p)`, or `max|x_i|` for `p = ∞`.
pub fn norm(x: &[f64], space: &NormSpec) -> Result<f64> {
    space.norm(x)
}

pub fn lp_norm(x: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        Exponent::Finite(1.0) => x.iter().map(|v| v.abs()).sum(),
        Exponent::Finite(p) => {
            let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            if p == 2.0 {
                let s: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
                return scale * s.sqrt();
            }
            let s: f64 = x.iter().map(|v| (v.abs() / scale).powf(p)).sum();
            scale * s.powf(1.0 / p)
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A norming functional for `z`: `‖ψ‖_* = 1` and `⟨ψ, z⟩ = ‖z‖_p`.
///
/// For `1 < p < ∞` this is the gradient of the norm at `z`. For `p = 1` and
/// `p = ∞` it is the subgradient picked by sign pattern and by the first
/// maximal coordinate, respectively. Returns the zero vector at `z = 0`.
pub fn dual_element(z: &[f64], p: Exponent) -> Vec<f64> {
    let n = lp_norm(z, p);
    if n == 0.0 {
        return vec![0.0; z.len()];
    }
    match p {
        Exponent::Infinity => {
            let mut out = vec![0.0; z.len()];
            let (idx, _) = z
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
            out[idx] = z[idx].signum();
            out
        }
        Exponent::Finite(1.0) => z
            .iter()
            .map(|v| if *v == 0.0 { 0.0 } else { v.signum() })
            .collect(),
        Exponent::Finite(p) => z
            .iter()
            .map(|v| {
                if *v == 0.0 {
                    0.0
                } else {
                    v.signum() * (v.abs() / n).powf(p - 1.0)
                }
            })
            .collect(),
    }
}

/// How sign patterns are visited by [`rademacher_average`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// All `2^|S|` patterns (at most [`MAX_EXHAUSTIVE_VECTORS`] vectors).
    Exhaustive,
    /// Independent uniformly random patterns.
    MonteCarlo { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RademacherEstimate {
    /// `(E‖Σ ε_i s_i‖^p)^(1/p)`.
    pub value: f64,
    /// Standard error of `value` (delta method); zero when exhaustive.
    pub std_error: f64,
    pub patterns: u64,
}

/// `(E‖Σ ε_i s_i‖^p)^(1/p)` over independent uniform signs `ε_i`.
pub fn rademacher_average(
    vectors: &[Vec<f64>],
    moment: f64,
    space: &NormSpec,
    mode: SignMode,
) -> Result<RademacherEstimate> {
    if vectors.is_empty() {
        return Err(Error::Empty("vector list"));
    }
    if !(moment.is_finite() && moment >= 1.0) {
        return Err(Error::InvalidExponent(moment));
    }
    for v in vectors {
        space.check_dim(v)?;
    }
    match mode {
        SignMode::Exhaustive => exhaustive_moment(vectors, moment, space),
        SignMode::MonteCarlo { trials, seed } => monte_carlo_moment(vectors, moment, space, trials, seed),
    }
}

fn exhaustive_moment(vectors: &[Vec<f64>], moment: f64, space: &NormSpec) -> Result<RademacherEstimate> {
    let n = vectors.len();
    if n > MAX_EXHAUSTIVE_VECTORS {
        return Err(Error::BudgetExceeded {
            needed: 1u128 << n,
            budget: 1u128 << MAX_EXHAUSTIVE_VECTORS,
        });
    }
    // ‖Σ ε s‖ is invariant under a global sign flip, so fix ε_0 = +1 and walk
    // the remaining n-1 signs in Gray-code order.
    let mut signs = vec![1.0_f64; n];
    let mut sum = vec![0.0; space.dim];
    for v in vectors {
        for (acc, x) in sum.iter_mut().zip(v) {
            *acc += x;
        }
    }
    let half: u64 = 1 << (n - 1);
    let mut total = space.norm_unchecked(&sum).powf(moment);
    for g in 1..half {
        let j = g.trailing_zeros() as usize + 1;
        let s = signs[j];
        for (acc, x) in sum.iter_mut().zip(&vectors[j]) {
            *acc -= 2.0 * s * x;
        }
        signs[j] = -s;
        total += space.norm_unchecked(&sum).powf(moment);
    }
    let mean = total / half as f64;
    Ok(RademacherEstimate { value: mean.powf(1.0 / moment), std_error: 0.0, patterns: 1 << n })
}

const MC_BLOCK: u64 = 4096;

fn monte_carlo_moment(
    vectors: &[Vec<f64>],
    moment: f64,
    space: &NormSpec,
    trials: u64,
    seed: u64,
) -> Result<RademacherEstimate> {
    if trials < 2 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least 2 trials".into()));
    }
    let blocks = trials.div_ceil(MC_BLOCK);
    let partial: Vec<(f64, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b);
            let count = MC_BLOCK.min(trials - b * MC_BLOCK);
            let mut sum = vec![0.0; space.dim];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                sum.iter_mut().for_each(|v| *v = 0.0);
                let mut bits = 0u64;
                for (i, v) in vectors.iter().enumerate() {
                    if i % 64 == 0 {
                        bits = rng.random();
                    }
                    let sign = if bits & 1 == 1 { 1.0 } else { -1.0 };
                    bits >>= 1;
                    for (acc, x) in sum.iter_mut().zip(v) {
                        *acc += sign * x;
                    }
                }
                let sample = space.norm_unchecked(&sum).powf(moment);
                s1 += sample;
                s2 += sample * sample;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = partial.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = trials as f64;
    let mean = s1 / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let se_mean = (var / n).sqrt();
    let value = mean.powf(1.0 / moment);
    let std_error = if mean > 0.0 { se_mean * value / (moment * mean) } else { 0.0 };
    Ok(RademacherEstimate { value, std_error, patterns: trials })
}

/// Where a type constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Tabulated,
    EmpiricalLowerBound,
    UserSupplied,
}

/// A value for the Rademacher type-`p` constant `T_p` of some space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeEstimate {
    pub p: f64,
    pub constant: f64,
    pub provenance: Provenance,
}

impl TypeEstimate {
    pub fn user_supplied(p: f64, constant: f64) -> Result<Self> {
        check_type_exponent(p)?;
        if !(constant >= 1.0 && constant.is_finite()) {
            return Err(Error::InvalidArgument(format!("type constant {constant} must be finite and >= 1")));
        }
        Ok(TypeEstimate { p, constant, provenance: Provenance::UserSupplied })
    }
}

fn check_type_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("type exponent {p} outside (1, 2]")))
    }
}

/// Empirical lower bound on `T_p(space)` from one vector set:
/// `(E‖Σ ε_i s_i‖^p)^(1/p) / (Σ‖s_i‖^p)^(1/p)`, exhaustive over signs.
///
/// The returned constant is clamped below by 1, which any single nonzero
/// vector already forces.
pub fn type_lower_bound(vectors: &[Vec<f64>], p: f64, space: &NormSpec) -> Result<TypeEstimate> {
    let ratio = type_ratio(vectors, p, space)?;
    Ok(TypeEstimate { p, constant: ratio.max(1.0), provenance: Provenance::EmpiricalLowerBound })
}

/// The unclamped ratio behind [`type_lower_bound`].
pub fn type_ratio(vectors: &[Vec<f64>], p: f64, space: &NormSpec) -> Result<f64> {
    if vectors.is_empty() {
        return Err(Error::Empty("vector list"));
    }
    let mut denom = 0.0;
    for (i, v) in vectors.iter().enumerate() {
        let n = space.norm(v)?;
        if n == 0.0 {
            return Err(Error::InvalidArgument(format!("vector {i} is zero")));
        }
        denom += n.powf(p);
    }
    let avg = rademacher_average(vectors, p, space, SignMode::Exhaustive)?;
    Ok(avg.value / denom.powf(1.0 / p))
}

/// Built-in upper bounds on type constants of `l_q^n` (moment form).
///
/// * `T_p(l_q^n) = 1` for `1 < p <= q <= 2`;
/// * `T_p(l_q^n) <= √(q-1)` for `q >= 2` and any `p <= 2` (hypercontractive
///   Khintchine bound, a standard external value);
/// * `T_p(l_∞^n) <= max(1, C√(ln n))` with configurable `C`.
///
/// `l_1^n`, and `p > q` for `q < 2`, have no dimension-free entry and are
/// reported as unknown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeTable {
    pub linf_constant: f64,
}

impl Default for TypeTable {
    fn default() -> Self {
        TypeTable { linf_constant: 2.0 }
    }
}

impl TypeTable {
    pub fn with_linf_constant(c: f64) -> Self {
        TypeTable { linf_constant: c }
    }

    pub fn lookup(&self, space: &NormSpec, p: f64) -> Result<TypeEstimate> {
        check_type_exponent(p)?;
        let constant = match space.p {
            Exponent::Infinity => (self.linf_constant * (space.dim as f64).ln().sqrt()).max(1.0),
            Exponent::Finite(q) if q >= 2.0 => (q - 1.0).sqrt(),
            Exponent::Finite(q) if q > 1.0 && p <= q => 1.0,
            Exponent::Finite(_) => {
                return Err(Error::UnknownTypeConstant(format!("type {p} of {space}")));
            }
        };
        Ok(TypeEstimate { p, constant, provenance: Provenance::Tabulated })
    }

    /// The entry with the largest usable type exponent: `p = min(2, q)`.
    pub fn best(&self, space: &NormSpec) -> Result<TypeEstimate> {
        let p = match space.p {
            Exponent::Infinity => 2.0,
            Exponent::Finite(q) if q >= 2.0 => 2.0,
            Exponent::Finite(q) if q > 1.0 => q,
            Exponent::Finite(_) => {
                return Err(Error::UnknownTypeConstant(format!("{space} has trivial type")));
            }
        };
        self.lookup(space, p)
    }
}

/// Lookup in the default table.
pub fn type_constant_tabulated(space: &NormSpec, p: f64) -> Result<TypeEstimate> {
    TypeTable::default().lookup(space, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(dim: usize, p: f64) -> NormSpec {
        NormSpec::new(dim, Exponent::new(p).unwrap()).unwrap()
    }

    fn e(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&[1.0, 1.0], &sp(2, f64::INFINITY)).unwrap(), 1.0);
        assert_eq!(norm(&[1.0, 1.0], &sp(2, 1.0)).unwrap(), 2.0);
        assert!((norm(&[3.0, 4.0], &sp(2, 2.0)).unwrap() - 5.0).abs() < 1e-15);
        assert!(matches!(
            norm(&[1.0], &sp(2, 2.0)),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn dual_exponent_examples() {
        assert_eq!(dual_exponent(Exponent::Finite(2.0)), Exponent::Finite(2.0));
        assert_eq!(dual_exponent(Exponent::Finite(1.0)), Exponent::Infinity);
        assert_eq!(dual_exponent(Exponent::Infinity), Exponent::Finite(1.0));
        let q = dual_exponent(Exponent::Finite(4.0 / 3.0)).as_f64();
        assert!((q - 4.0).abs() < 1e-12);
        assert!(Exponent::new(0.5).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
    }

    #[test]
    fn exponent_json() {
        let s: NormSpec = serde_json::from_str(r#"{"p": "inf", "dim": 3}"#).unwrap();
        assert_eq!(s, sp(3, f64::INFINITY));
        let s: NormSpec = serde_json::from_str(r#"{"p": 1.5, "dim": 2}"#).unwrap();
        assert_eq!(s.p, Exponent::Finite(1.5));
        assert_eq!(serde_json::to_string(&sp(4, f64::INFINITY)).unwrap(), r#"{"p":"inf","dim":4}"#);
        assert!(serde_json::from_str::<NormSpec>(r#"{"p": 0.5, "dim": 2}"#).is_err());
        assert!(serde_json::from_str::<NormSpec>(r#"{"p": 2, "dim": 0}"#).is_err());
    }

    #[test]
    fn dual_element_norms_the_vector() {
        let z = [0.3, -1.2, 0.0, 2.0];
        for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
            let p = Exponent::new(p).unwrap();
            let psi = dual_element(&z, p);
            assert!((lp_norm(&psi, p.dual()) - 1.0).abs() < 1e-12);
            assert!((dot(&psi, &z) - lp_norm(&z, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn rademacher_examples() {
        let one = rademacher_average(&[vec![1.0]], 2.0, &sp(1, 2.0), SignMode::Exhaustive).unwrap();
        assert_eq!(one.value, 1.0);
        let basis = vec![e(2, 0), e(2, 1)];
        let l2 = rademacher_average(&basis, 2.0, &sp(2, 2.0), SignMode::Exhaustive).unwrap();
        assert!((l2.value - 2f64.sqrt()).abs() < 1e-15);
        let l1 = rademacher_average(&basis, 2.0, &sp(2, 1.0), SignMode::Exhaustive).unwrap();
        assert!((l1.value - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rademacher_errors() {
        assert!(matches!(
            rademacher_average(&[], 2.0, &sp(1, 2.0), SignMode::Exhaustive),
            Err(Error::Empty(_))
        ));
        let many = vec![vec![1.0]; 25];
        assert!(matches!(
            rademacher_average(&many, 2.0, &sp(1, 2.0), SignMode::Exhaustive),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn rademacher_enumeration_matches_brute_force() {
        // Direct enumeration of all 2^n patterns, no Gray code, no symmetry.
        let vs = vec![vec![0.3, -1.0, 0.2], vec![1.1, 0.4, 0.0], vec![-0.5, 0.5, 0.7], vec![0.0, 0.9, -0.1]];
        let space = sp(3, 3.0);
        let n = vs.len();
        let mut total = 0.0;
        for mask in 0..(1u32 << n) {
            let mut s = [0.0; 3];
            for (i, v) in vs.iter().enumerate() {
                let sign = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                for c in 0..3 {
                    s[c] += sign * v[c];
                }
            }
            total += space.norm_unchecked(&s).powf(1.5);
        }
        let expected = (total / (1u32 << n) as f64).powf(1.0 / 1.5);
        let got = rademacher_average(&vs, 1.5, &space, SignMode::Exhaustive).unwrap();
        assert!((got.value - expected).abs() < 1e-13);
    }

    #[test]
    fn monte_carlo_converges_to_exhaustive() {
        let mut r = rng::stream(99, 0);
        for (dim, p) in [(3, 2.0), (4, 1.0), (2, f64::INFINITY), (5, 3.0)] {
            let space = sp(dim, p);
            let vs: Vec<Vec<f64>> = (0..8).map(|_| rng::gaussian_vector(&mut r, dim)).collect();
            let exact = rademacher_average(&vs, 1.5, &space, SignMode::Exhaustive).unwrap();
            let mc = rademacher_average(&vs, 1.5, &space, SignMode::MonteCarlo { trials: 100_000, seed: 4 }).unwrap();
            assert!(mc.std_error > 0.0);
            assert!(
                (mc.value - exact.value).abs() <= 5.0 * mc.std_error,
                "{} vs {} (se {})",
                mc.value,
                exact.value,
                mc.std_error
            );
            let again = rademacher_average(&vs, 1.5, &space, SignMode::MonteCarlo { trials: 100_000, seed: 4 }).unwrap();
            assert_eq!(mc, again);
        }
    }

    #[test]
    fn type_lower_bound_examples() {
        for space in [sp(1, 2.0), sp(1, 1.0), sp(1, f64::INFINITY)] {
            let t = type_lower_bound(&[vec![1.0]], 2.0, &space).unwrap();
            assert_eq!(t.constant, 1.0);
            assert_eq!(t.provenance, Provenance::EmpiricalLowerBound);
        }
        let basis = vec![e(2, 0), e(2, 1)];
        let t1 = type_lower_bound(&basis, 2.0, &sp(2, 1.0)).unwrap();
        assert!((t1.constant - 2f64.sqrt()).abs() < 1e-12);
        let t2 = type_lower_bound(&basis, 2.0, &sp(2, 2.0)).unwrap();
        assert!((t2.constant - 1.0).abs() < 1e-12);
        assert!(type_lower_bound(&[vec![0.0, 0.0]], 2.0, &sp(2, 2.0)).is_err());
    }

    #[test]
    fn tabulated_examples() {
        assert_eq!(type_constant_tabulated(&sp(7, 2.0), 2.0).unwrap().constant, 1.0);
        let linf = type_constant_tabulated(&sp(10, f64::INFINITY), 2.0).unwrap();
        assert!((linf.constant - 2.0 * 10f64.ln().sqrt()).abs() < 1e-15);
        assert_eq!(linf.provenance, Provenance::Tabulated);
        let custom = TypeTable::with_linf_constant(1.5).lookup(&sp(10, f64::INFINITY), 2.0).unwrap();
        assert!((custom.constant - 1.5 * 10f64.ln().sqrt()).abs() < 1e-15);
        assert!(matches!(type_constant_tabulated(&sp(5, 1.0), 2.0), Err(Error::UnknownTypeConstant(_))));
        assert!(type_constant_tabulated(&sp(5, 2.0), 1.0).is_err());
        assert!(type_constant_tabulated(&sp(5, 2.0), 2.5).is_err());
        assert!((type_constant_tabulated(&sp(5, 4.0), 2.0).unwrap().constant - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(type_constant_tabulated(&sp(5, 1.5), 1.5).unwrap().constant, 1.0);
        assert!(type_constant_tabulated(&sp(5, 1.5), 2.0).is_err());
        // one-dimensional l_inf still has T >= 1
        assert_eq!(type_constant_tabulated(&sp(1, f64::INFINITY), 2.0).unwrap().constant, 1.0);
    }

    fn small_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0..5.0f64, dim)
    }

    proptest! {
        #[test]
        fn norm_is_a_norm(x in small_vec(4), y in small_vec(4), t in -3.0..3.0f64, pi in 0usize..5) {
            let p = [1.0, 1.5, 2.0, 3.5, f64::INFINITY][pi];
            let space = sp(4, p);
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let (nx, ny, ns) = (space.norm_unchecked(&x), space.norm_unchecked(&y), space.norm_unchecked(&sum));
            prop_assert!(ns <= (nx + ny) * (1.0 + 1e-12) + 1e-300);
            let scaled: Vec<f64> = x.iter().map(|a| t * a).collect();
            let ns = space.norm_unchecked(&scaled);
            prop_assert!((ns - t.abs() * nx).abs() <= 1e-12 * (t.abs() * nx).max(1e-300));
        }

        #[test]
        fn holder_inequality(x in small_vec(5), psi in small_vec(5), pi in 0usize..5) {
            let p = [1.0, 1.25, 2.0, 4.0, f64::INFINITY][pi];
            let space = sp(5, p);
            let lhs = dot(&psi, &x);
            prop_assert!(lhs <= space.dual_norm_unchecked(&psi) * space.norm_unchecked(&x) + 1e-12);
        }

        #[test]
        fn dual_exponent_is_an_involution(p in 1.0..50.0f64) {
            let e = Exponent::new(p).unwrap();
            let back = e.dual().dual().as_f64();
            prop_assert!((back - p).abs() <= 1e-9 * p);
        }

        #[test]
        fn empirical_type_below_table(
            vs in proptest::collection::vec(small_vec(3), 1..7),
            qi in 0usize..4,
            p in 1.05..2.0f64,
        ) {
            let q = [2.0, 3.0, 4.0, 8.0][qi];
            let space = sp(3, q);
            prop_assume!(vs.iter().all(|v| space.norm_unchecked(v) > 1e-6));
            let lower = type_ratio(&vs, p, &space).unwrap();
            let table = type_constant_tabulated(&space, p).unwrap().constant;
            prop_assert!(lower <= table * (1.0 + 1e-12));
        }
    }
}
