//! JSON instance format and random rainbow-feasible families.
//!
//! ```json
//! {"space": {"p": 2, "dim": 3},
//!  "colors": [[{"vertices": [[0, 0, 1]]}, {"vertices": [[1, 0, 0]]}]],
//!  "witnesses": {"0,1": [0.5, 0, 0.5]}}
//! ```
//!
//! A single family is a one-color instance. Witness keys are `k`-subsets of
//! set indices for one-color instances and rainbow tuples (one set index per
//! color) otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::helly::{ColorfulFamily, Family, LowerCertificate, Witnesses};
use crate::norm::NormSpec;
use crate::polytope::VPolytope;
use crate::rng;

/// Exhaustive rainbow generation refuses more tuples than this.
pub const RAINBOW_TUPLE_BUDGET: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub space: NormSpec,
    pub colors: Vec<Vec<VPolytope>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<Witnesses>,
    /// Which rainbow tuples carry the hypothesis: all of them, or only the
    /// witnessed ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<Coverage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<LowerCertificate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coverage {
    AllTuples,
    CoveredTuplesOnly,
}

impl Instance {
    pub fn from_family(family: &Family) -> Self {
        Instance {
            space: family.space,
            colors: vec![family.sets.clone()],
            witnesses: None,
            coverage: None,
            k: None,
            a_k: None,
            certificate: None,
        }
    }

    pub fn from_colorful(family: &ColorfulFamily) -> Self {
        Instance {
            colors: family.colors.iter().map(|f| f.sets.clone()).collect(),
            ..Instance::from_family(&family.colors[0])
        }
    }

    /// Parses and validates; errors carry the JSON path or the offending
    /// color, set and vertex indices.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let inst: Instance = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::InvalidInstance(format!("at {}: {}", e.path(), e.inner())))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.space.dim;
        if self.colors.is_empty() {
            return Err(Error::InvalidInstance("no colors".into()));
        }
        for (c, color) in self.colors.iter().enumerate() {
            if color.is_empty() {
                return Err(Error::InvalidInstance(format!("color {c} has no sets")));
            }
            for (s, set) in color.iter().enumerate() {
                if let Some(v) = set.vertices().iter().position(|v| v.len() != dim) {
                    return Err(Error::InvalidInstance(format!(
                        "color {c}, set {s}, vertex {v}: dimension {} but the space has {dim}",
                        set.vertices()[v].len()
                    )));
                }
            }
        }
        if let Some(w) = &self.witnesses {
            for (key, x) in w.iter() {
                if x.len() != dim {
                    return Err(Error::InvalidInstance(format!(
                        "witness {key:?}: dimension {} but the space has {dim}",
                        x.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn colorful(&self) -> Result<ColorfulFamily> {
        ColorfulFamily::new(self.colors.clone(), self.space)
    }

    /// The family of a one-color instance.
    pub fn family(&self) -> Result<Family> {
        match self.colors.as_slice() {
            [one] => Family::new(one.clone(), self.space),
            _ => Err(Error::InvalidInstance(format!("expected one color, found {}", self.colors.len()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TupleMode {
    /// Every rainbow tuple, within [`RAINBOW_TUPLE_BUDGET`].
    Exhaustive,
    /// This many tuples drawn uniformly with replacement.
    Sampled(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RainbowInstance {
    pub family: ColorfulFamily,
    /// Rainbow tuple → common point, in generation order.
    pub witnesses: Witnesses,
    pub coverage: Coverage,
}

impl RainbowInstance {
    pub fn to_instance(&self) -> Instance {
        Instance {
            witnesses: Some(self.witnesses.clone()),
            coverage: Some(self.coverage),
            ..Instance::from_colorful(&self.family)
        }
    }
}

/// Per-color sizes `[4, 3, 2, 2, 2]` followed by ones, truncated to `k`.
pub fn default_sizes(k: usize) -> Vec<usize> {
    (0..k).map(|i| [4, 3, 2, 2, 2].get(i).copied().unwrap_or(1)).collect()
}

/// Builds `k` colors of V-polytopes such that every covered rainbow tuple has
/// a common point in the unit ball: for each tuple a witness is drawn
/// uniformly from the ball and appended to each chosen set.
pub fn generate_rainbow_instance(
    space: NormSpec,
    k: usize,
    sizes: &[usize],
    seed: u64,
    mode: TupleMode,
) -> Result<RainbowInstance> {
    if k == 0 || sizes.len() != k {
        return Err(Error::InvalidArgument(format!("need k >= 1 sizes, got k = {k} and {} sizes", sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument("every color needs at least one set".into()));
    }
    let total = sizes.iter().try_fold(1u128, |acc, &s| acc.checked_mul(s as u128)).unwrap_or(u128::MAX);
    let mut r = rng::stream(seed, 0);
    let tuples: Vec<Vec<usize>> = match mode {
        TupleMode::Exhaustive => {
            if total > RAINBOW_TUPLE_BUDGET {
                return Err(Error::BudgetExceeded { needed: total, budget: RAINBOW_TUPLE_BUDGET });
            }
            (0..total as usize).map(|t| mixed_radix(t, sizes)).collect()
        }
        TupleMode::Sampled(n) => {
            use rand::Rng;
            if n == 0 {
                return Err(Error::InvalidArgument("sampled mode needs at least one tuple".into()));
            }
            (0..n).map(|_| sizes.iter().map(|&s| r.random_range(0..s)).collect()).collect()
        }
    };
    let mut vertices: Vec<Vec<Vec<Vec<f64>>>> = sizes.iter().map(|&s| vec![Vec::new(); s]).collect();
    let mut witnesses = Witnesses::new();
    for tuple in tuples {
        if witnesses.get(&tuple).is_some() {
            continue;
        }
        let w = rng::uniform_in_ball(&mut r, &space);
        for (c, &j) in tuple.iter().enumerate() {
            vertices[c][j].push(w.clone());
        }
        witnesses.insert(tuple, w);
    }
    // A sampled run can miss a set entirely; give it its own witness point.
    for color in vertices.iter_mut() {
        for set in color.iter_mut().filter(|s| s.is_empty()) {
            set.push(rng::uniform_in_ball(&mut r, &space));
        }
    }
    let colors = vertices
        .into_iter()
        .map(|c| c.into_iter().map(VPolytope::new).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let coverage = if witnesses.len() as u128 == total { Coverage::AllTuples } else { Coverage::CoveredTuplesOnly };
    Ok(RainbowInstance { family: ColorfulFamily::new(colors, space)?, witnesses, coverage })
}

/// The `t`-th rainbow tuple, first color varying fastest.
fn mixed_radix(mut t: usize, sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .map(|&s| {
            let d = t % s;
            t /= s;
            d
        })
        .collect()
}

/// Checks that every witness lies in the unit ball (plus `tol`) and within
/// `tol` of each set of its tuple.
pub fn check_rainbow_witnesses(family: &ColorfulFamily, witnesses: &Witnesses, tol: f64) -> Result<bool> {
    let space = family.space();
    for (tuple, x) in witnesses.iter() {
        if tuple.len() != family.k() {
            return Err(Error::InvalidInstance(format!("witness {tuple:?} does not name one set per color")));
        }
        if space.norm(x)? > 1.0 + tol {
            return Ok(false);
        }
        for (c, &j) in tuple.iter().enumerate() {
            let set = family.colors[c]
                .sets
                .get(j)
                .ok_or_else(|| Error::InvalidInstance(format!("witness {tuple:?}: color {c} has no set {j}")))?;
            if !crate::polytope::contains(x, set, &space, tol)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
