//! Dense two-phase simplex for small linear programs.
//!
//! Entering columns are picked by largest reduced cost; after a run of
//! degenerate pivots the solver falls back to Bland's rule (smallest
//! eligible index for both entering and leaving variables) until the
//! objective moves again, which rules out cycling.

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost (optimality) tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Smallest magnitude accepted as a pivot element.
const PIVOT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// maximize `objective · x` subject to `constraints` and per-variable `bounds`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// `n_vars` variables with zero objective and bounds `[0, +∞)`.
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n_vars],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch {
                what: "bounds".into(),
                expected: n,
                found: self.bounds.len(),
            });
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: format!("constraint {i}"),
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::NonFinite(format!("constraint {i}")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::NonFinite("objective".into()));
        }
        for (var, &(lower, upper)) in self.bounds.iter().enumerate() {
            if lower > upper || lower.is_nan() || upper.is_nan() || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds { var, lower, upper });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub max_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("{what} has {found} coefficients, expected {expected}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("variable {var} has bounds [{lower}, {upper}]")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("simplex exceeded the iteration cap of {cap} pivots")]
    IterationLimit { cap: usize },
    #[error("solution violates constraints by {violation:e} after optimal termination")]
    Numerical { violation: f64 },
}

/// Largest breach of any constraint or bound at `x`.
pub fn max_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for c in &lp.constraints {
        let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let breach = match c.relation {
            Relation::Le => lhs - c.rhs,
            Relation::Ge => c.rhs - lhs,
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        worst = worst.max(breach);
    }
    for (&v, &(lower, upper)) in x.iter().zip(&lp.bounds) {
        worst = worst.max(lower - v).max(v - upper);
    }
    worst
}

/// How an original variable is expressed in nonnegative tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lower + y
    Shift { col: usize, lower: f64 },
    /// x = upper − y
    Reflect { col: usize, upper: f64 },
    /// x = y⁺ − y⁻
    Free { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// row-major, `cols + 1` entries per row; the last is the right-hand side
    data: Vec<f64>,
    basis: Vec<usize>,
    /// reduced costs followed by the objective value
    reduced: Vec<f64>,
    allowed: Vec<bool>,
    iterations: usize,
    cap: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn price(&mut self, cost: &[f64]) {
        let w = self.width();
        let mut reduced = cost.to_vec();
        reduced.push(0.0);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * w..(r + 1) * w];
                for (d, a) in reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
        self.reduced = reduced;
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width();
        let inv = 1.0 / self.data[pr * w + pc];
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let factor = row[pc];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= factor * p;
                }
                row[pc] = 0.0;
            }
        }
        let factor = self.reduced[pc];
        if factor != 0.0 {
            for (v, p) in self.reduced.iter_mut().zip(prow.iter()) {
                *v -= factor * p;
            }
            self.reduced[pc] = 0.0;
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let candidates = (0..self.cols).filter(|&j| self.allowed[j] && self.reduced[j] > OPT_TOL);
        if bland {
            candidates.into_iter().next()
        } else {
            candidates.max_by(|&a, &b| self.reduced[a].total_cmp(&self.reduced[b]).then(b.cmp(&a)))
        }
    }

    fn leaving(&self, pc: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > PIVOT_TOL {
                let ratio = self.rhs(r).max(0.0) / a;
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                        if ratio < bratio && !tie || tie && self.basis[r] < self.basis[br] {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
        }
        best.map(|(r, _)| r)
    }

    fn run(&mut self) -> Result<Outcome, LpError> {
        let mut streak = 0;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let Some(pc) = self.entering(bland) else {
                return Ok(Outcome::Optimal);
            };
            let Some(pr) = self.leaving(pc) else {
                return Ok(Outcome::Unbounded);
            };
            if self.iterations >= self.cap {
                return Err(LpError::IterationLimit { cap: self.cap });
            }
            let step = self.rhs(pr).max(0.0) / self.at(pr, pc);
            self.pivot(pr, pc);
            if step > 0.0 {
                streak = 0;
            } else {
                streak += 1;
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.width();
        self.data.drain(r * w..(r + 1) * w);
        self.basis.remove(r);
        self.rows -= 1;
    }
}

/// Solves `lp` with the two-phase simplex method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.n_vars();

    // Map original variables onto nonnegative columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut upper_rows = Vec::new();
    for &(lower, upper) in &lp.bounds {
        if lower.is_finite() {
            maps.push(VarMap::Shift { col: ncols, lower });
            if upper.is_finite() {
                upper_rows.push((ncols, upper - lower));
            }
            ncols += 1;
        } else if upper.is_finite() {
            maps.push(VarMap::Reflect { col: ncols, upper });
            ncols += 1;
        } else {
            maps.push(VarMap::Free {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }
    let structural = ncols;

    // Rows in column space: (coeffs, relation, rhs), rhs made nonnegative.
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.constraints.len() + upper_rows.len());
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; structural];
        let mut rhs = c.rhs;
        for (j, &a) in c.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lower } => {
                    coeffs[col] += a;
                    rhs -= a * lower;
                }
                VarMap::Reflect { col, upper } => {
                    coeffs[col] -= a;
                    rhs -= a * upper;
                }
                VarMap::Free { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, c.relation, rhs));
    }
    for &(col, width) in &upper_rows {
        let mut coeffs = vec![0.0; structural];
        coeffs[col] = 1.0;
        rows.push((coeffs, Relation::Le, width));
    }
    for (coeffs, rel, rhs) in &mut rows {
        let flip = *rhs < 0.0 || (*rhs == 0.0 && *rel == Relation::Ge);
        if flip {
            coeffs.iter_mut().for_each(|a| *a = -*a);
            *rhs = -*rhs;
            *rel = match *rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let cols = structural + n_slack + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut slack = structural;
    let mut art = structural + n_slack;
    for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let row = &mut data[r * w..(r + 1) * w];
        row[..structural].copy_from_slice(coeffs);
        row[cols] = *rhs;
        match rel {
            Relation::Le => {
                row[slack] = 1.0;
                basis[r] = slack;
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
                row[art] = 1.0;
                basis[r] = art;
                art += 1;
            }
            Relation::Eq => {
                row[art] = 1.0;
                basis[r] = art;
                art += 1;
            }
        }
    }
    let first_art = structural + n_slack;
    let cap = 50 * (n + lp.constraints.len()).max(1);
    let mut t = Tableau {
        rows: m,
        cols,
        data,
        basis,
        reduced: Vec::new(),
        allowed: vec![true; cols],
        iterations: 0,
        cap,
    };

    // Phase 1: maximize −Σ artificials.
    if n_art > 0 {
        let mut cost = vec![0.0; cols];
        cost[first_art..].iter_mut().for_each(|c| *c = -1.0);
        t.price(&cost);
        t.run()?;
        let infeasibility: f64 = (0..t.rows)
            .filter(|&r| t.basis[r] >= first_art)
            .map(|r| t.rhs(r).max(0.0))
            .sum();
        if infeasibility > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; n],
                objective_value: f64::NAN,
                max_violation: f64::NAN,
                iterations: t.iterations,
            });
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < t.rows {
            if t.basis[r] >= first_art {
                let pc = (0..first_art)
                    .filter(|&j| t.at(r, j).abs() > PIVOT_TOL)
                    .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
                match pc {
                    Some(pc) => {
                        t.pivot(r, pc);
                        r += 1;
                    }
                    None => t.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
        t.allowed[first_art..].iter_mut().for_each(|a| *a = false);
    }

    // Phase 2.
    let mut cost = vec![0.0; cols];
    for (j, &c) in lp.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Reflect { col, .. } => cost[col] -= c,
            VarMap::Free { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }
    t.price(&cost);
    let outcome = t.run()?;

    let mut y = vec![0.0; cols];
    for r in 0..t.rows {
        y[t.basis[r]] = t.rhs(r).max(0.0);
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, lower } => lower + y[col],
            VarMap::Reflect { col, upper } => upper - y[col],
            VarMap::Free { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x,
            objective_value: f64::INFINITY,
            max_violation: f64::NAN,
            iterations: t.iterations,
        });
    }
    let violation = max_violation(lp, &x);
    if violation > FEAS_TOL {
        return Err(LpError::Numerical { violation });
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum(),
        x,
        max_violation: violation,
        iterations: t.iterations,
    })
}
