//! Bound sweeps: generate instances for a range of `k`, solve them, and
//! compare against the theoretical radius or norm bounds.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caratheodory::{maurey_bound, maurey_sample, PointCloud};
use crate::counterexample::{build_linf_counterexample, MAX_K};
use crate::error::{Error, Result};
use crate::helly::{euclidean_bound, minimize_max_distance, upper_bound, SolveOptions};
use crate::instance::{default_sizes, generate_rainbow_instance, TupleMode, RAINBOW_TUPLE_BUDGET};
use crate::norm::{Exponent, NormSpec, TypeTable};
use crate::rng;

/// Environment variable capping the sweep's worker pool.
pub const THREADS_ENV: &str = "HELLY_THREADS";

/// Cloud size for Maurey sweeps when no sizes are given.
pub const DEFAULT_CLOUD_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Colorful Helly centers of rainbow-feasible random families.
    HellySweep,
    /// Best-of-trials Maurey sampling on symmetric random clouds.
    MaureySweep,
    /// Helly radius of the `l_∞^{2k}` counterexample against `a_k`.
    CounterexampleCheck,
}

impl SweepMode {
    pub const ALL: [SweepMode; 3] = [SweepMode::HellySweep, SweepMode::MaureySweep, SweepMode::CounterexampleCheck];

    pub fn name(self) -> &'static str {
        match self {
            SweepMode::HellySweep => "helly_sweep",
            SweepMode::MaureySweep => "maurey_sweep",
            SweepMode::CounterexampleCheck => "counterexample_check",
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = SweepMode::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown sweep mode {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: SweepMode,
    /// Ignored by `counterexample_check`, which always works in `l_∞^{2k}`.
    pub space: NormSpec,
    pub ks: Vec<usize>,
    /// Per-color set counts for Helly sweeps (the last entry repeats), or
    /// `[m]` for the cloud size of Maurey sweeps. Defaults apply when absent.
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    /// Instances per `k`.
    pub instances: usize,
    /// Sampler trials per instance (Maurey sweeps).
    pub trials: u64,
    pub seed: u64,
    pub tol: f64,
    /// Draw this many rainbow tuples instead of enumerating all of them.
    #[serde(default)]
    pub sampled_tuples: Option<usize>,
    /// The constant `C` in `T_2(l_∞^n) <= C √(ln n)`.
    #[serde(default)]
    pub linf_constant: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(mode: SweepMode, space: NormSpec, ks: Vec<usize>) -> Self {
        ExperimentConfig {
            mode,
            space,
            ks,
            sizes: None,
            instances: 1,
            trials: 64,
            seed: 0,
            tol: 1e-6,
            sampled_tuples: None,
            linf_constant: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() {
            return Err(Error::InvalidArgument("k range is empty".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.instances == 0 || self.trials == 0 {
            return Err(Error::InvalidArgument("instances and trials must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if let Some(s) = &self.sizes {
            if s.is_empty() || s.contains(&0) {
                return Err(Error::InvalidArgument("sizes must be a nonempty list of positive counts".into()));
            }
        }
        if self.mode == SweepMode::CounterexampleCheck {
            if let Some(&k) = self.ks.iter().find(|&&k| k > MAX_K) {
                return Err(Error::InvalidArgument(format!("counterexample k = {k} exceeds {MAX_K}")));
            }
        }
        Ok(())
    }

    fn type_table(&self) -> TypeTable {
        self.linf_constant.map_or_else(TypeTable::default, TypeTable::with_linf_constant)
    }

    fn color_sizes(&self, k: usize) -> Vec<usize> {
        match &self.sizes {
            None => default_sizes(k),
            Some(s) => (0..k).map(|i| s[i.min(s.len() - 1)]).collect(),
        }
    }

    /// The bound each row is compared against: `k^(-1/2)` in Euclidean
    /// Helly sweeps, `6 T k^(-1+1/p)` with the dual's tabulated type
    /// otherwise, `2 T k^(-1+1/p)` with the space's own type for Maurey
    /// sweeps, and `a_k` (a lower bound) for counterexample checks.
    pub fn bound(&self, k: usize) -> Result<f64> {
        match self.mode {
            SweepMode::HellySweep if self.space.p == Exponent::Finite(2.0) => Ok(euclidean_bound(k)),
            SweepMode::HellySweep => upper_bound(&self.type_table().best(&self.space.dual())?, k),
            SweepMode::MaureySweep => Ok(maurey_bound(&self.type_table().best(&self.space)?, k)),
            SweepMode::CounterexampleCheck => Ok(crate::counterexample::a_k(k)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Pass,
    /// The bound is violated by a certified or otherwise rigorous value.
    Fail,
    /// The bound is not met, but the solve could not be certified.
    Uncertified,
}

/// One instance of a sweep. The CSV columns are exactly these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    /// Mean of the colorful radii, the sampled norm, or the counterexample
    /// radius.
    pub empirical: f64,
    pub bound: f64,
    /// Optimality-certificate residual; absent for Maurey rows and when no
    /// certificate could be formed.
    pub residual: Option<f64>,
    /// Wall time of the row in milliseconds.
    pub ms: f64,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RowStatus::Fail).count()
    }

    pub fn uncertified(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RowStatus::Uncertified).count()
    }

    /// Nonzero iff some row violates its bound rigorously.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures() > 0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(&self.rows, out)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.rows).map_err(|e| Error::InvalidArgument(format!("writing JSON: {e}")))
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    if rows.is_empty() {
        w.write_record(["k", "empirical", "bound", "residual", "ms", "status"]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("writing CSV: {e}")))
}

pub fn read_csv(text: &str) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()
        .map_err(|e| Error::InvalidInstance(format!("CSV: {e}")))
}

/// Seed for row `row` of a sweep keyed by `seed`.
pub fn row_seed(seed: u64, row: usize) -> u64 {
    rng::stream(seed, row as u64).random()
}

/// Runs every `(k, instance)` pair of the configuration. Rows are returned
/// ordered by the position of `k` in `ks`, then by instance index, and all
/// randomness in a row comes from `row_seed(seed, row)`, so results do not
/// depend on the pool size. The pool is capped by `HELLY_THREADS` when set.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> =
        config.ks.iter().flat_map(|&k| (0..config.instances).map(move |i| (k, i))).collect();
    let run = || {
        jobs.par_iter()
            .enumerate()
            .map(|(row, &(k, _))| run_row(config, k, row_seed(config.seed, row)))
            .collect::<Result<Vec<_>>>()
    };
    let rows = match pool_size() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(SweepReport { config: config.clone(), rows })
}

fn pool_size() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn run_row(config: &ExperimentConfig, k: usize, seed: u64) -> Result<SweepRow> {
    let start = Instant::now();
    let bound = config.bound(k)?;
    let tol = config.tol;
    let (empirical, residual, status) = match config.mode {
        SweepMode::HellySweep => {
            let sizes = config.color_sizes(k);
            let mode = match config.sampled_tuples {
                Some(n) => TupleMode::Sampled(n),
                None => TupleMode::Exhaustive,
            };
            let inst = generate_rainbow_instance(config.space, k, &sizes, seed, mode).map_err(|e| match e {
                Error::BudgetExceeded { needed, .. } => Error::InvalidArgument(format!(
                    "{needed} rainbow tuples exceed {RAINBOW_TUPLE_BUDGET}; use sampled tuples"
                )),
                other => other,
            })?;
            let out = minimize_max_distance(&inst.family, &SolveOptions { tol, seed, ..SolveOptions::default() })?;
            let status = if out.objective <= bound + tol {
                RowStatus::Pass
            } else if out.certified || out.lower_bound > bound + tol {
                RowStatus::Fail
            } else {
                RowStatus::Uncertified
            };
            (out.objective, finite(out.certificate_residual), status)
        }
        SweepMode::MaureySweep => {
            let m = config.sizes.as_ref().map_or(DEFAULT_CLOUD_SIZE, |s| s[0]);
            let cloud = symmetric_cloud(&config.space, m, seed)?;
            let res = maurey_sample(&cloud, k, config.trials, seed, &config.space)?;
            let status = if res.norm <= bound + tol { RowStatus::Pass } else { RowStatus::Fail };
            (res.norm, None, status)
        }
        SweepMode::CounterexampleCheck => {
            let ce = build_linf_counterexample(k)?;
            let out = minimize_max_distance(&ce.family, &SolveOptions { tol, seed, ..SolveOptions::default() })?;
            // the objective is attained at the returned center, so falling
            // below a_k is a genuine violation whether or not it is certified
            let status = if out.objective >= bound - tol { RowStatus::Pass } else { RowStatus::Fail };
            (out.objective, finite(out.certificate_residual), status)
        }
    };
    Ok(SweepRow { k, empirical, bound, residual, ms: start.elapsed().as_secs_f64() * 1e3, status })
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// `m` points of the unit ball with barycenter weights at the origin:
/// `m / 2` uniform points and their negatives, each pair sharing a random
/// weight, plus the origin when `m` is odd.
pub fn symmetric_cloud(space: &NormSpec, m: usize, seed: u64) -> Result<PointCloud> {
    if m == 0 {
        return Err(Error::Empty("point cloud"));
    }
    let mut r = rng::stream(seed, 0);
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m / 2 {
        let u = rng::uniform_in_ball(&mut r, space);
        let w: f64 = r.random_range(0.1..1.0);
        points.push(u.iter().map(|c| -c).collect());
        points.push(u);
        weights.extend([w, w]);
    }
    if m % 2 == 1 {
        points.push(vec![0.0; space.dim]);
        weights.push(r.random_range(0.1..1.0));
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    PointCloud::new(points, Some(weights), space)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid_config(ks: Vec<usize>) -> ExperimentConfig {
        ExperimentConfig { instances: 2, ..ExperimentConfig::new(SweepMode::HellySweep, NormSpec::euclidean(4), ks) }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in SweepMode::ALL {
            assert_eq!(m.name().parse::<SweepMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("helly".parse::<SweepMode>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(euclid_config(vec![]).validate().is_err());
        assert!(euclid_config(vec![0, 1]).validate().is_err());
        assert!(ExperimentConfig { tol: 0.0, ..euclid_config(vec![1]) }.validate().is_err());
        assert!(ExperimentConfig { trials: 0, ..euclid_config(vec![1]) }.validate().is_err());
        assert!(ExperimentConfig { sizes: Some(vec![2, 0]), ..euclid_config(vec![1]) }.validate().is_err());
        let ce = ExperimentConfig::new(SweepMode::CounterexampleCheck, NormSpec::euclidean(1), vec![11]);
        assert!(ce.validate().is_err());
        assert!(run_sweep(&euclid_config(vec![])).is_err());
    }

    #[test]
    fn bounds_by_mode() {
        let c = euclid_config(vec![4]);
        assert_eq!(c.bound(4).unwrap(), 0.5);
        let l3 = ExperimentConfig { space: NormSpec::new(5, Exponent::Finite(3.0)).unwrap(), ..c.clone() };
        // the dual l_{3/2} has type 3/2 with constant 1
        assert!((l3.bound(8).unwrap() - 3.0).abs() < 1e-12);
        let inf = ExperimentConfig { space: NormSpec::new(5, Exponent::Infinity).unwrap(), ..c.clone() };
        assert!(matches!(inf.bound(2), Err(Error::UnknownTypeConstant(_))));
        let m = ExperimentConfig { mode: SweepMode::MaureySweep, ..c };
        assert_eq!(m.bound(4).unwrap(), 1.0);
    }

    #[test]
    fn euclidean_sweep_rows_pass_in_order() {
        let rep = run_sweep(&euclid_config(vec![2, 1])).unwrap();
        let ks: Vec<usize> = rep.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, vec![2, 2, 1, 1]);
        for r in &rep.rows {
            assert_eq!(r.status, RowStatus::Pass, "{r:?}");
            assert!(r.empirical <= r.bound + 1e-6);
        }
        assert_eq!(rep.exit_code(), 0);
    }

    #[test]
    fn counterexample_rows_reach_a_k() {
        let c = ExperimentConfig::new(SweepMode::CounterexampleCheck, NormSpec::euclidean(1), vec![2, 3]);
        let rep = run_sweep(&c).unwrap();
        for r in &rep.rows {
            assert_eq!(r.status, RowStatus::Pass);
            assert!(r.empirical >= r.k as f64 / (2 * r.k - 1) as f64 - 1e-6);
        }
    }

    #[test]
    fn maurey_rows_and_clouds() {
        let sp = NormSpec::euclidean(3);
        for m in 1..6 {
            let cloud = symmetric_cloud(&sp, m, 7).unwrap();
            assert_eq!(cloud.points.len(), m);
            assert!(sp.norm_unchecked(&cloud.anchor().unwrap()) < 1e-15);
        }
        let c = ExperimentConfig { instances: 3, ..ExperimentConfig::new(SweepMode::MaureySweep, sp, vec![1, 4]) };
        let rep = run_sweep(&c).unwrap();
        assert_eq!(rep.rows.len(), 6);
        assert!(rep.rows.iter().all(|r| r.residual.is_none() && r.status == RowStatus::Pass));
    }

    fn strip_ms(rows: &[SweepRow]) -> Vec<SweepRow> {
        rows.iter().map(|r| SweepRow { ms: 0.0, ..r.clone() }).collect()
    }

    #[test]
    fn csv_matches_json() {
        let rep = run_sweep(&euclid_config(vec![1, 3])).unwrap();
        let mut csv_out = Vec::new();
        rep.write_csv(&mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert!(text.starts_with("k,empirical,bound,residual,ms,status\n"));
        let mut json_out = Vec::new();
        rep.write_json(&mut json_out).unwrap();
        let from_json: Vec<SweepRow> = serde_json::from_slice(&json_out).unwrap();
        assert_eq!(read_csv(&text).unwrap(), from_json);
        assert_eq!(from_json, rep.rows);

        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "k,empirical,bound,residual,ms,status\n");
    }

    #[test]
    fn reproducible_across_pool_sizes() {
        let c = euclid_config(vec![1, 2]);
        let a = run_sweep(&c).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run_sweep(&c).unwrap());
        assert_eq!(strip_ms(&a.rows), strip_ms(&b.rows));
        let other = run_sweep(&ExperimentConfig { seed: 1, ..c }).unwrap();
        assert_ne!(strip_ms(&a.rows), strip_ms(&other.rows));
    }
}
