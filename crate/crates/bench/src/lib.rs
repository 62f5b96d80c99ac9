//! Fixtures shared by the benchmarks in `benches/`.

use helly_core::instance::{default_sizes, generate_rainbow_instance, TupleMode};
use helly_core::rng::{stream, uniform_in_ball};
use helly_core::{ColorfulFamily, NormSpec, VPolytope};

/// A point and a polytope with `m` vertices, all drawn from the unit ball.
pub fn point_and_polytope(space: &NormSpec, m: usize, seed: u64) -> (Vec<f64>, VPolytope) {
    let mut r = stream(seed, 0);
    let x: Vec<f64> = uniform_in_ball(&mut r, space).iter().map(|c| 2.0 * c).collect();
    let k = VPolytope::new((0..m).map(|_| uniform_in_ball(&mut r, space)).collect()).expect("nonempty");
    (x, k)
}

/// A rainbow-feasible colorful family with the default color sizes.
pub fn rainbow(space: NormSpec, k: usize, seed: u64) -> ColorfulFamily {
    generate_rainbow_instance(space, k, &default_sizes(k), seed, TupleMode::Exhaustive).expect("within budget").family
}
