//! Dense tableau simplex for small linear programs in the form
//!
//! ```text
//! maximize cᵀx  subject to  Ax <= b,  x >= 0,  with b >= 0.
//! ```
//!
//! With `b >= 0` the slack basis is feasible, so no phase one is needed. Every
//! LP built in this crate is brought into that form. Pricing is Dantzig's rule
//! until a run of degenerate pivots is seen, after which the solver switches to
//! Bland's rule for the remainder of the solve; both are deterministic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const REDUCED_COST_EPS: f64 = 1e-10;
const PIVOT_EPS: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const REINVERT_EVERY: usize = 32;
const FINAL_CHECKS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One multiplier per row; `duals ≥ 0` and `Aᵀ duals ≥ c` at optimality.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// A linear program with `rows × cols` row-major constraint matrix.
#[derive(Debug, Clone)]
pub struct Lp {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Lp {
    pub fn new(cols: usize, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), cols);
        Lp { rows: 0, cols, a: Vec::new(), b: Vec::new(), c }
    }

    /// Appends the row `coeffs · x <= rhs`. Panics if `rhs < 0`.
    pub fn push_row(&mut self, coeffs: &[f64], rhs: f64) {
        assert_eq!(coeffs.len(), self.cols);
        assert!(rhs >= 0.0, "right-hand side must be nonnegative");
        self.a.extend_from_slice(coeffs);
        self.b.push(rhs);
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn solve(&self, max_pivots: usize) -> Result<LpSolution> {
        Tableau::new(self).run(self, max_pivots)
    }
}

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    t: Vec<f64>,
    z: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(lp: &Lp) -> Self {
        let (m, n) = (lp.rows, lp.cols);
        let width = n + m + 1;
        let mut t = vec![0.0; m * width];
        for i in 0..m {
            let row = &mut t[i * width..(i + 1) * width];
            row[..n].copy_from_slice(&lp.a[i * n..(i + 1) * n]);
            row[n + i] = 1.0;
            row[width - 1] = lp.b[i];
        }
        let mut z = vec![0.0; width];
        for (zj, cj) in z.iter_mut().zip(&lp.c) {
            *zj = -cj;
        }
        Tableau { m, n, width, t, z, basis: (n..n + m).collect() }
    }

    /// Rebuilds the tableau as `B⁻¹ [A I b]` for the current basis, discarding
    /// the rounding error accumulated by pivoting. Keeps the old tableau if
    /// the basis matrix is numerically singular.
    fn reinvert(&mut self, lp: &Lp) {
        let (m, n, w) = (self.m, self.n, self.width);
        let entry = |i: usize, j: usize| -> f64 {
            if j < n {
                lp.a[i * n + j]
            } else if j < n + m {
                f64::from(u8::from(j - n == i))
            } else {
                lp.b[i]
            }
        };
        let basis_matrix = DMatrix::from_fn(m, m, |i, r| entry(i, self.basis[r]));
        let full = DMatrix::from_fn(m, w, entry);
        let Some(rows) = basis_matrix.lu().solve(&full) else { return };
        if rows.iter().any(|v| !v.is_finite()) {
            return;
        }
        for r in 0..m {
            for j in 0..w {
                self.t[r * w + j] = rows[(r, j)];
            }
            self.t[r * w + self.basis[r]] = 1.0;
        }
        for j in 0..w {
            let cost = if j < n { lp.c[j] } else { 0.0 };
            let zb: f64 = (0..m).map(|r| self.cost(lp, self.basis[r]) * self.t[r * w + j]).sum();
            self.z[j] = if j == w - 1 { zb } else { zb - cost };
        }
        for &bv in &self.basis {
            self.z[bv] = 0.0;
        }
    }

    fn cost(&self, lp: &Lp, j: usize) -> f64 {
        if j < self.n {
            lp.c[j]
        } else {
            0.0
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let cols = self.width - 1;
        if bland {
            (0..cols).find(|&j| self.z[j] < -REDUCED_COST_EPS)
        } else {
            let mut best = None;
            let mut most = -REDUCED_COST_EPS;
            for j in 0..cols {
                if self.z[j] < most {
                    most = self.z[j];
                    best = Some(j);
                }
            }
            best
        }
    }

    fn leaving(&self, e: usize) -> Option<usize> {
        let w = self.width;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * w + e];
            if a <= PIVOT_EPS {
                continue;
            }
            let ratio = self.t[i * w + w - 1].max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                    if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let inv = 1.0 / self.t[r * w + e];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + e];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[e] = 0.0;
            }
        }
        let f = self.z[e];
        if f != 0.0 {
            for (v, p) in self.z.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.z[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn run(mut self, lp: &Lp, max_pivots: usize) -> Result<LpSolution> {
        let w = self.width;
        let mut pivots = 0;
        let mut degenerate = 0;
        let mut bland = false;
        let mut since_reinvert = 0;
        let mut final_checks = 0;
        loop {
            let Some(e) = self.entering(bland) else {
                // Confirm optimality on a freshly rebuilt tableau.
                if since_reinvert == 0 || final_checks >= FINAL_CHECKS {
                    break;
                }
                self.reinvert(lp);
                since_reinvert = 0;
                final_checks += 1;
                continue;
            };
            if pivots >= max_pivots {
                return Err(Error::Lp("pivot limit reached"));
            }
            let Some(r) = self.leaving(e) else {
                // An apparent ray may be rounding error; decide on a clean tableau.
                if since_reinvert > 0 {
                    self.reinvert(lp);
                    since_reinvert = 0;
                    continue;
                }
                return Err(Error::Lp("unbounded"));
            };
            if self.t[r * w + w - 1] <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
            pivots += 1;
            since_reinvert += 1;
            if since_reinvert >= REINVERT_EVERY {
                self.reinvert(lp);
                since_reinvert = 0;
            }
        }
        let mut x = vec![0.0; self.n];
        for (i, &bv) in self.basis.iter().enumerate() {
            if bv < self.n {
                x[bv] = self.t[i * w + w - 1].max(0.0);
            }
        }
        let duals = (0..self.m).map(|i| self.z[self.n + i].max(0.0)).collect();
        Ok(LpSolution { x, duals, objective: self.z[w - 1], pivots })
    }
}
