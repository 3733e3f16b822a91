//! Dense two-phase primal simplex with variable bounds.
//!
//! Variables live in boxes `[l, u]` (upper bounds may be infinite);
//! constraint rows are turned into equalities with slack/surplus columns
//! and, where the slack basis is infeasible, artificial columns driven out
//! in phase 1. Nonbasic variables sit at a bound; the tableau stores the
//! basis-inverse image of the column matrix, and `xb` tracks the basic
//! variable values directly.
//!
//! Pricing is Dantzig (most negative reduced cost, ties to the lowest
//! column). After 50 iterations without objective progress the solver
//! switches to Bland's rule until progress resumes, which guarantees
//! termination on degenerate vertices.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::milp::{Relation, Row};

/// Outcome status of a linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution of a linear program. `x` is populated only for `Optimal`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

/// Reasons a solve stopped without an answer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Abort {
    Deadline,
    IterationLimit,
    Numerical(String),
}

const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const STALL_LIMIT: u32 = 50;
const GROWTH_LIMIT: f64 = 1e14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VStat {
    Basic,
    AtLower,
    AtUpper,
}

pub(crate) struct BoundedSimplex {
    m: usize,
    n_total: usize,
    n_struct: usize,
    art_start: usize,
    /// Row-major `m x n_total` tableau (basis-inverse times columns).
    tab: Vec<f64>,
    /// Current basic variable values, one per row.
    xb: Vec<f64>,
    basis: Vec<usize>,
    vstat: Vec<VStat>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Phase-1 and phase-2 reduced costs.
    d1: Vec<f64>,
    d2: Vec<f64>,
    scratch: Vec<f64>,
    pub(crate) iterations: usize,
    initial_scale: f64,
}

impl BoundedSimplex {
    /// Assemble the tableau from structural data. `lower` must be finite
    /// for every structural variable (all model variables are boxed below).
    pub(crate) fn new(rows: &[Row], lower: &[f64], upper: &[f64]) -> BoundedSimplex {
        let n_struct = lower.len();
        let m = rows.len();
        let n_slack = rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();

        // Nonbasic structural variables start at their lower bound.
        let start_val = |c: usize| -> f64 {
            debug_assert!(lower[c].is_finite(), "structural lower bound must be finite");
            lower[c]
        };

        // First pass: residuals and basis choice per row.
        let mut residual = vec![0.0; m];
        for (r, row) in rows.iter().enumerate() {
            let dot: f64 = row.coeffs.iter().map(|&(c, a)| a * start_val(c)).sum();
            residual[r] = row.rhs - dot;
        }

        let mut slack_col = vec![usize::MAX; m];
        let mut next_slack = n_struct;
        for (r, row) in rows.iter().enumerate() {
            if row.relation != Relation::Eq {
                slack_col[r] = next_slack;
                next_slack += 1;
            }
        }

        // Decide basic column, row sign and artificial need.
        let art_start = n_struct + n_slack;
        let mut sign = vec![1.0; m];
        let mut basis = vec![usize::MAX; m];
        let mut art_col = vec![usize::MAX; m];
        let mut next_art = art_start;
        let mut xb = vec![0.0; m];
        for (r, row) in rows.iter().enumerate() {
            let natural = match row.relation {
                Relation::Le => Some((slack_col[r], residual[r], 1.0)),
                Relation::Ge => Some((slack_col[r], -residual[r], -1.0)),
                Relation::Eq => None,
            };
            match natural {
                Some((col, value, row_sign)) if value >= 0.0 => {
                    basis[r] = col;
                    xb[r] = value;
                    sign[r] = row_sign;
                }
                _ => {
                    let s = if residual[r] >= 0.0 { 1.0 } else { -1.0 };
                    sign[r] = s;
                    art_col[r] = next_art;
                    basis[r] = next_art;
                    xb[r] = residual[r].abs();
                    next_art += 1;
                }
            }
        }
        let n_total = next_art;

        let mut tab = vec![0.0; m * n_total];
        for (r, row) in rows.iter().enumerate() {
            let base = r * n_total;
            for &(c, a) in &row.coeffs {
                tab[base + c] += sign[r] * a;
            }
            if slack_col[r] != usize::MAX {
                let slack_sign = if row.relation == Relation::Le { 1.0 } else { -1.0 };
                tab[base + slack_col[r]] = sign[r] * slack_sign;
            }
            if art_col[r] != usize::MAX {
                tab[base + art_col[r]] = 1.0;
            }
        }

        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        lo.resize(n_total, 0.0);
        hi.resize(n_total, f64::INFINITY);

        let mut vstat = vec![VStat::AtLower; n_total];
        for &b in &basis {
            vstat[b] = VStat::Basic;
        }

        // Phase-1 reduced costs: unit cost on artificials, eliminated on
        // the starting basis.
        let mut d1 = vec![0.0; n_total];
        for c in art_start..n_total {
            d1[c] = 1.0;
        }
        for r in 0..m {
            if basis[r] >= art_start {
                let base = r * n_total;
                for c in 0..n_total {
                    d1[c] -= tab[base + c];
                }
            }
        }

        let initial_scale = tab.iter().fold(1.0f64, |acc, &v| acc.max(v.abs()));

        BoundedSimplex {
            m,
            n_total,
            n_struct,
            art_start,
            tab,
            xb,
            basis,
            vstat,
            lower: lo,
            upper: hi,
            d1,
            d2: Vec::new(),
            scratch: vec![0.0; n_total],
            iterations: 0,
            initial_scale,
        }
    }

    fn bound_value(&self, c: usize) -> f64 {
        match self.vstat[c] {
            VStat::AtLower => self.lower[c],
            VStat::AtUpper => self.upper[c],
            VStat::Basic => unreachable!("basic variable has no bound value"),
        }
    }

    fn set_phase2_costs(&mut self, objective: &[f64]) {
        let mut d2 = vec![0.0; self.n_total];
        d2[..self.n_struct].copy_from_slice(objective);
        for r in 0..self.m {
            let cb = if self.basis[r] < self.n_struct {
                objective[self.basis[r]]
            } else {
                0.0
            };
            if cb != 0.0 {
                let base = r * self.n_total;
                for c in 0..self.n_total {
                    d2[c] -= cb * self.tab[base + c];
                }
            }
        }
        self.d2 = d2;
    }

    /// Most improving nonbasic column under the given reduced costs, or
    /// the lowest-index improving column under Bland's rule.
    fn price(&self, d: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..self.n_total {
            if self.vstat[c] == VStat::Basic {
                continue;
            }
            if self.upper[c] - self.lower[c] <= 0.0 {
                continue; // fixed (includes retired artificials)
            }
            let score = match self.vstat[c] {
                VStat::AtLower if d[c] < -DUAL_TOL => -d[c],
                VStat::AtUpper if d[c] > DUAL_TOL => d[c],
                _ => continue,
            };
            if bland {
                return Some((c, score));
            }
            match best {
                Some((_, s)) if s >= score => {}
                _ => best = Some((c, score)),
            }
        }
        best
    }

    /// Step length and leaving row for an entering column moving with
    /// direction `dir` (+1 from lower bound, -1 from upper).
    fn ratio_test(&self, entering: usize, dir: f64, bland: bool) -> (f64, Option<usize>) {
        let span = self.upper[entering] - self.lower[entering];
        let mut t_min = span;
        let mut candidate: Option<usize> = None;
        // First pass: strict minimum ratio.
        for r in 0..self.m {
            let w = dir * self.tab[r * self.n_total + entering];
            if w > PIVOT_TOL {
                let room = self.xb[r] - self.lower[self.basis[r]];
                let t = (room / w).max(0.0);
                if t < t_min {
                    t_min = t;
                    candidate = Some(r);
                }
            } else if w < -PIVOT_TOL {
                let ub = self.upper[self.basis[r]];
                if ub.is_finite() {
                    let t = ((ub - self.xb[r]) / -w).max(0.0);
                    if t < t_min {
                        t_min = t;
                        candidate = Some(r);
                    }
                }
            }
        }
        if candidate.is_none() {
            // Bound flip (or unbounded when the span is infinite).
            return (t_min, None);
        }
        // Second pass: deterministic tie-break among near-minimal ratios.
        let eps = 1e-9 * (1.0 + t_min.abs());
        let mut best_row = usize::MAX;
        let mut best_pivot = 0.0f64;
        for r in 0..self.m {
            let w = dir * self.tab[r * self.n_total + entering];
            let t = if w > PIVOT_TOL {
                (self.xb[r] - self.lower[self.basis[r]]) / w
            } else if w < -PIVOT_TOL {
                let ub = self.upper[self.basis[r]];
                if !ub.is_finite() {
                    continue;
                }
                (ub - self.xb[r]) / -w
            } else {
                continue;
            };
            if t.max(0.0) <= t_min + eps {
                let better = if bland {
                    best_row == usize::MAX || self.basis[r] < self.basis[best_row]
                } else {
                    w.abs() > best_pivot
                };
                if better {
                    best_row = r;
                    best_pivot = w.abs();
                }
            }
        }
        (t_min.max(0.0), Some(best_row))
    }

    /// Move the entering variable by `t`, updating basic values.
    fn apply_step(&mut self, entering: usize, dir: f64, t: f64) {
        if t != 0.0 {
            for r in 0..self.m {
                let w = self.tab[r * self.n_total + entering];
                if w != 0.0 {
                    self.xb[r] -= dir * t * w;
                }
            }
        }
    }

    /// Replace the basic variable of `row` with `entering`, whose current
    /// value is `value`. The leaving variable is parked at `leave_stat`.
    fn pivot(&mut self, row: usize, entering: usize, value: f64, leave_stat: VStat) {
        let n = self.n_total;
        let leaving = self.basis[row];
        self.vstat[leaving] = leave_stat;
        self.basis[row] = entering;
        self.vstat[entering] = VStat::Basic;
        self.xb[row] = value;

        let piv = self.tab[row * n + entering];
        debug_assert!(piv.abs() > 1e-12, "pivot too small");
        let inv = 1.0 / piv;
        {
            let prow = &mut self.tab[row * n..(row + 1) * n];
            for v in prow.iter_mut() {
                *v *= inv;
            }
            prow[entering] = 1.0;
            self.scratch.copy_from_slice(prow);
        }
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let f = self.tab[r * n + entering];
            if f != 0.0 {
                let rrow = &mut self.tab[r * n..(r + 1) * n];
                for (v, &p) in rrow.iter_mut().zip(self.scratch.iter()) {
                    *v -= f * p;
                }
                rrow[entering] = 0.0;
            }
        }
        let f1 = self.d1[entering];
        if f1 != 0.0 {
            for (v, &p) in self.d1.iter_mut().zip(self.scratch.iter()) {
                *v -= f1 * p;
            }
            self.d1[entering] = 0.0;
        }
        if !self.d2.is_empty() {
            let f2 = self.d2[entering];
            if f2 != 0.0 {
                for (v, &p) in self.d2.iter_mut().zip(self.scratch.iter()) {
                    *v -= f2 * p;
                }
                self.d2[entering] = 0.0;
            }
        }
    }

    fn max_abs(&self) -> f64 {
        self.tab.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
    }

    /// Run one phase to optimality under the given reduced-cost vector.
    fn optimize(
        &mut self,
        phase_one: bool,
        iter_limit: usize,
        deadline: &mut dyn FnMut() -> bool,
    ) -> Result<(), Abort> {
        let mut stall: u32 = 0;
        let mut bland = false;
        loop {
            self.iterations += 1;
            if self.iterations % 128 == 0 && deadline() {
                return Err(Abort::Deadline);
            }
            if self.iterations > iter_limit {
                return Err(Abort::IterationLimit);
            }
            if self.iterations % 1024 == 0 && self.max_abs() > GROWTH_LIMIT * self.initial_scale {
                return Err(Abort::Numerical(String::from(
                    "tableau magnitude growth exceeds conditioning threshold",
                )));
            }

            let d = if phase_one { &self.d1 } else { &self.d2 };
            let (entering, score) = match self.price(d, bland) {
                Some(e) => e,
                None => return Ok(()),
            };
            let dir = if self.vstat[entering] == VStat::AtLower {
                1.0
            } else {
                -1.0
            };
            let (t, leave) = self.ratio_test(entering, dir, bland);
            if t.is_infinite() {
                if phase_one {
                    return Err(Abort::Numerical(String::from(
                        "unbounded phase-1 ray",
                    )));
                }
                return Err(Abort::Numerical(String::from("unbounded-ray")));
            }

            match leave {
                None => {
                    // Entering runs to its opposite bound.
                    self.apply_step(entering, dir, t);
                    self.vstat[entering] = if dir > 0.0 {
                        VStat::AtUpper
                    } else {
                        VStat::AtLower
                    };
                }
                Some(r) => {
                    let w = dir * self.tab[r * self.n_total + entering];
                    let leave_stat = if w > 0.0 { VStat::AtLower } else { VStat::AtUpper };
                    let new_value = self.bound_value(entering) + dir * t;
                    self.apply_step(entering, dir, t);
                    self.pivot(r, entering, new_value, leave_stat);
                }
            }

            // Stall detection drives the Bland's-rule switch.
            if t * score > 1e-12 {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    bland = true;
                }
            }
        }
    }

    fn phase1_objective(&self) -> f64 {
        (0..self.m)
            .filter(|&r| self.basis[r] >= self.art_start)
            .map(|r| self.xb[r])
            .sum()
    }

    /// Pivot zero-level artificials out of the basis where possible and
    /// retire all artificial columns.
    fn retire_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let base = r * self.n_total;
            let mut col = None;
            for c in 0..self.art_start {
                if self.vstat[c] != VStat::Basic && self.tab[base + c].abs() > 1e-7 {
                    col = Some(c);
                    break;
                }
            }
            if let Some(c) = col {
                let value = self.bound_value(c);
                self.pivot(r, c, value, VStat::AtLower);
                // Leaving artificial sits at zero; its lower bound is zero.
            }
            // A row with no eligible column is structurally redundant; its
            // artificial stays basic pinned at zero and can never move
            // since every remaining coefficient in the row is negligible.
        }
        for c in self.art_start..self.n_total {
            self.upper[c] = 0.0;
        }
    }

    fn extract(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_struct];
        for c in 0..self.n_struct {
            x[c] = match self.vstat[c] {
                VStat::AtLower => self.lower[c],
                VStat::AtUpper => self.upper[c],
                VStat::Basic => 0.0,
            };
        }
        for r in 0..self.m {
            if self.basis[r] < self.n_struct {
                x[self.basis[r]] = self.xb[r];
            }
        }
        x
    }
}

/// Solve `min c.x` over the rows and boxes. Returns the solution or an
/// abort reason (deadline, iteration cap, numerical trouble).
pub(crate) fn solve_bounded_lp(
    objective: &[f64],
    rows: &[Row],
    lower: &[f64],
    upper: &[f64],
    feasibility_tol: f64,
    deadline: &mut dyn FnMut() -> bool,
) -> Result<LpSolution, Abort> {
    debug_assert_eq!(objective.len(), lower.len());
    debug_assert_eq!(lower.len(), upper.len());
    for c in 0..lower.len() {
        if lower[c] > upper[c] {
            // Branch fixings can cross bounds; that node is empty.
            return Ok(LpSolution {
                x: Vec::new(),
                objective: f64::INFINITY,
                status: LpStatus::Infeasible,
                iterations: 0,
            });
        }
    }

    let mut spx = BoundedSimplex::new(rows, lower, upper);
    let iter_limit = 10_000 + 40 * (spx.m + spx.n_total);

    spx.optimize(true, iter_limit, deadline)?;
    if spx.phase1_objective() > feasibility_tol {
        return Ok(LpSolution {
            x: Vec::new(),
            objective: f64::INFINITY,
            status: LpStatus::Infeasible,
            iterations: spx.iterations,
        });
    }
    spx.retire_artificials();
    spx.set_phase2_costs(objective);

    match spx.optimize(false, iter_limit, deadline) {
        Ok(()) => {}
        Err(Abort::Numerical(s)) if s == "unbounded-ray" => {
            return Ok(LpSolution {
                x: Vec::new(),
                objective: f64::NEG_INFINITY,
                status: LpStatus::Unbounded,
                iterations: spx.iterations,
            });
        }
        Err(e) => return Err(e),
    }

    let x = spx.extract();
    let objective_value: f64 = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective: objective_value,
        status: LpStatus::Optimal,
        iterations: spx.iterations,
    })
}
