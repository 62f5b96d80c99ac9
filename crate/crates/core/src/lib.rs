//! Computational tools for no-dimensional Helly theorems in finite-dimensional
//! `l_p` spaces.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caratheodory;
pub mod counterexample;
pub mod error;
pub mod helly;
pub mod instance;
pub mod lp;
pub mod minnorm;
pub mod norm;
pub mod polytope;
pub mod rng;
pub mod sweep;

pub use caratheodory::{ColorGroup, MaureyResult, PointCloud};
pub use counterexample::{build_linf_counterexample, CounterexampleInstance, Embedding};
pub use error::{Error, Result};
pub use helly::{ColorfulFamily, Family, HellyOutcome, LowerCertificate, SolveOptions, Witnesses};
pub use instance::Instance;
pub use norm::{Exponent, NormSpec, TypeEstimate, TypeTable};
pub use polytope::{DistanceResult, VPolytope};
pub use sweep::{run_sweep, ExperimentConfig, SweepMode, SweepRow};
