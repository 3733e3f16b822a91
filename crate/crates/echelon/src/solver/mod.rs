//! Embedded exact optimizer: two-phase simplex for LP relaxations and
//! best-bound branch-and-bound over the binary variables.
//!
//! The tree search is fully deterministic for a given problem, config and
//! warm start: most-fractional branching with lowest-column tie-breaks,
//! best-bound node selection with FIFO tie-breaks, and no wall-clock
//! dependence anywhere except the time limit itself. Every node re-solves
//! its relaxation from a fresh crash basis; warm starts across nodes are
//! deliberately out of scope.

mod simplex;

pub use simplex::{LpSolution, LpStatus};

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::milp::{MilpProblem, SolveStatus};
use simplex::{solve_bounded_lp, Abort};

/// Monotone clock abstraction so the core stays `no_std`-compatible.
pub trait TimeSource {
    fn elapsed_seconds(&self) -> f64;
}

/// Clock that never advances; limits by node count only.
pub struct NoTime;

impl TimeSource for NoTime {
    fn elapsed_seconds(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
pub struct WallClock(std::time::Instant);

#[cfg(feature = "std")]
impl WallClock {
    pub fn start() -> Self {
        WallClock(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl TimeSource for WallClock {
    fn elapsed_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Branching rule. Only most-fractional is implemented; reproducibility
/// beats sophistication here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BranchRule {
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative optimality gap at which the search stops with `Optimal`.
    pub gap_tolerance: f64,
    pub time_limit_seconds: f64,
    pub node_limit: usize,
    pub branching: BranchRule,
    /// Largest accepted constraint violation for incumbents.
    pub feasibility_tolerance: f64,
    /// Distance from 0/1 at which a binary counts as integral.
    pub integrality_tolerance: f64,
    /// Record per-node bound/incumbent history on the solution.
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gap_tolerance: 1e-2,
            time_limit_seconds: 60.0,
            node_limit: 1_000_000,
            branching: BranchRule::MostFractional,
            feasibility_tolerance: 1e-6,
            integrality_tolerance: 1e-6,
            record_history: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        for (name, v) in [
            ("gap_tolerance", self.gap_tolerance),
            ("feasibility_tolerance", self.feasibility_tolerance),
            ("integrality_tolerance", self.integrality_tolerance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SolverError::InvalidConfig { field: name });
            }
        }
        Ok(())
    }
}

/// Per-node bound and incumbent trajectory (optional diagnostics).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveHistory {
    /// Global lower bound at each processed node.
    pub bounds: Vec<f64>,
    /// Incumbent objective at each processed node (infinity before the
    /// first incumbent).
    pub incumbents: Vec<f64>,
}

/// Result of a branch-and-bound run.
#[derive(Debug, Clone)]
pub struct MilpSolution {
    /// Incumbent vector, absent when no feasible point was found.
    pub x: Option<Vec<f64>>,
    /// Incumbent objective (infinity when `x` is `None`).
    pub objective: f64,
    pub status: SolveStatus,
    /// Relative optimality gap of the incumbent.
    pub gap: f64,
    pub nodes_explored: usize,
    pub history: Option<SolveHistory>,
}

/// Errors that abort a solve entirely (statuses cover the normal ends).
#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    InvalidConfig { field: &'static str },
    NumericalBreakdown { node: usize, detail: String },
}

impl core::fmt::Display for SolverError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolverError::InvalidConfig { field } => write!(f, "invalid solver config: {field}"),
            SolverError::NumericalBreakdown { node, detail } => {
                write!(f, "numerical breakdown at node {node}: {detail}")
            }
        }
    }
}

impl core::error::Error for SolverError {}

/// Errors from a standalone LP solve.
#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    NumericalBreakdown { detail: String },
    IterationLimit,
}

impl core::fmt::Display for LpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LpError::NumericalBreakdown { detail } => write!(f, "numerical breakdown: {detail}"),
            LpError::IterationLimit => write!(f, "simplex iteration limit exceeded"),
        }
    }
}

impl core::error::Error for LpError {}

/// Solve the continuous relaxation of `problem` (integrality ignored).
pub fn solve_lp(problem: &MilpProblem) -> Result<LpSolution, LpError> {
    let mut never = || false;
    let sol = solve_bounded_lp(
        &problem.objective,
        &problem.rows,
        &problem.var_lower,
        &problem.var_upper,
        1e-7,
        &mut never,
    )
    .map_err(|abort| match abort {
        Abort::Numerical(detail) => LpError::NumericalBreakdown { detail },
        Abort::IterationLimit => LpError::IterationLimit,
        Abort::Deadline => unreachable!("no deadline installed"),
    })?;
    if sol.status == LpStatus::Optimal {
        let resid = problem
            .max_row_violation(&sol.x)
            .max(problem.max_bound_violation(&sol.x));
        if resid > 1e-7 {
            return Err(LpError::NumericalBreakdown {
                detail: alloc::format!("primal residual {resid:.3e} after optimal basis"),
            });
        }
    }
    Ok(sol)
}

struct NodeEntry {
    bound: f64,
    seq: u64,
    /// `(column, value)` binary fixings accumulated from the root.
    fixings: Vec<(u32, bool)>,
}

impl PartialEq for NodeEntry {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for NodeEntry {}
impl PartialOrd for NodeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for NodeEntry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // BinaryHeap pops the maximum; order so the best (lowest) bound
        // wins, then the oldest node.
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Solve with the wall clock enforcing `time_limit_seconds`.
#[cfg(feature = "std")]
pub fn solve_milp(problem: &MilpProblem, cfg: &SolverConfig) -> Result<MilpSolution, SolverError> {
    solve_milp_with(problem, cfg, &WallClock::start(), None)
}

/// Solve with an explicit clock and optional warm-start incumbent.
///
/// The warm start is accepted only if it satisfies every row, bound and
/// integrality mask at the configured tolerances; it bounds the tree but
/// is never returned unverified.
pub fn solve_milp_with<T: TimeSource>(
    problem: &MilpProblem,
    cfg: &SolverConfig,
    time: &T,
    warm_start: Option<&[f64]>,
) -> Result<MilpSolution, SolverError> {
    cfg.validate()?;
    let _ = problem.n_vars();
    let int_tol = cfg.integrality_tolerance;
    let feas_tol = cfg.feasibility_tolerance;

    let expired = |t: &T| t.elapsed_seconds() >= cfg.time_limit_seconds;
    if expired(time) {
        // Out of budget before doing anything; report honestly with no
        // incumbent, even when a warm start was offered.
        return Ok(MilpSolution {
            x: None,
            objective: f64::INFINITY,
            status: SolveStatus::TimeLimit,
            gap: f64::INFINITY,
            nodes_explored: 0,
            history: cfg.record_history.then(SolveHistory::default),
        });
    }

    let mut incumbent: Option<Vec<f64>> = None;
    let mut incumbent_obj = f64::INFINITY;

    let accept = |x: &[f64], problem: &MilpProblem| -> bool {
        if x.len() != problem.n_vars() {
            return false;
        }
        if problem.max_row_violation(x) > feas_tol || problem.max_bound_violation(x) > feas_tol {
            return false;
        }
        problem
            .integrality
            .iter()
            .zip(x)
            .all(|(&m, &v)| !m || (v - crate::fmath::round(v)).abs() <= int_tol)
    };

    if let Some(ws) = warm_start {
        if accept(ws, problem) {
            incumbent_obj = problem.objective_value(ws);
            incumbent = Some(ws.to_vec());
            log::debug!("warm start accepted, objective {incumbent_obj:.6}");
        } else {
            log::warn!("warm start rejected: infeasible at configured tolerances");
        }
    }

    let mut heap: BinaryHeap<NodeEntry> = BinaryHeap::new();
    let mut seq: u64 = 0;
    heap.push(NodeEntry {
        bound: f64::NEG_INFINITY,
        seq,
        fixings: Vec::new(),
    });

    let mut nodes_explored = 0usize;
    let mut best_bound = f64::NEG_INFINITY;
    let mut hit_time = false;
    let mut hit_nodes = false;
    let mut history = cfg.record_history.then(SolveHistory::default);

    let rel_gap = |inc: f64, lb: f64| -> f64 {
        if !inc.is_finite() {
            return f64::INFINITY;
        }
        if !lb.is_finite() {
            return f64::INFINITY;
        }
        ((inc - lb) / inc.abs().max(1e-9)).max(0.0)
    };

    let mut lower = problem.var_lower.clone();
    let mut upper = problem.var_upper.clone();

    while let Some(node) = heap.pop() {
        if expired(time) {
            hit_time = true;
            break;
        }
        if nodes_explored >= cfg.node_limit {
            hit_nodes = true;
            break;
        }
        best_bound = best_bound.max(node.bound);
        if incumbent.is_some() {
            if rel_gap(incumbent_obj, best_bound) <= cfg.gap_tolerance {
                break; // proved within tolerance
            }
            if node.bound >= incumbent_obj - 1e-9 * incumbent_obj.abs().max(1.0) {
                continue; // cannot improve
            }
        }

        lower.copy_from_slice(&problem.var_lower);
        upper.copy_from_slice(&problem.var_upper);
        for &(col, v) in &node.fixings {
            if v {
                lower[col as usize] = 1.0;
            } else {
                upper[col as usize] = 0.0;
            }
        }

        nodes_explored += 1;
        let mut deadline = || expired(time);
        let lp = match solve_bounded_lp(
            &problem.objective,
            &problem.rows,
            &lower,
            &upper,
            1e-7,
            &mut deadline,
        ) {
            Ok(sol) => sol,
            Err(Abort::Deadline) => {
                hit_time = true;
                break;
            }
            Err(Abort::IterationLimit) => {
                log::warn!("simplex iteration limit at node {nodes_explored}; stopping search");
                hit_time = true;
                break;
            }
            Err(Abort::Numerical(detail)) => {
                return Err(SolverError::NumericalBreakdown {
                    node: nodes_explored,
                    detail,
                });
            }
        };

        if let Some(h) = history.as_mut() {
            h.bounds.push(best_bound);
            h.incumbents.push(incumbent_obj);
        }

        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(SolverError::NumericalBreakdown {
                    node: nodes_explored,
                    detail: String::from(
                        "unbounded relaxation: model variables must be box-bounded",
                    ),
                });
            }
            LpStatus::Optimal => {}
        }
        if incumbent.is_some() && lp.objective >= incumbent_obj - 1e-9 * incumbent_obj.abs().max(1.0)
        {
            continue;
        }

        // Fractional binaries at this relaxation.
        let mut branch_col = None;
        let mut branch_score = int_tol;
        for (c, &mask) in problem.integrality.iter().enumerate() {
            if !mask {
                continue;
            }
            let v = lp.x[c];
            let score = v.min(1.0 - v);
            if score > branch_score {
                branch_score = score;
                branch_col = Some(c);
            }
        }

        match branch_col {
            None => {
                // Integral relaxation: candidate incumbent.
                if accept(&lp.x, problem) {
                    if lp.objective < incumbent_obj {
                        incumbent_obj = lp.objective;
                        incumbent = Some(lp.x);
                        log::debug!(
                            "node {nodes_explored}: integral incumbent {incumbent_obj:.6}, bound {best_bound:.6}"
                        );
                    }
                } else {
                    log::warn!("integral relaxation failed the feasibility check; dropped");
                }
            }
            Some(col) => {
                // Round-up completion: opening every touched connection
                // preserves feasibility of the continuous part in this
                // model family, so try it as a cheap incumbent.
                let mut rounded = lp.x.clone();
                for (c, &mask) in problem.integrality.iter().enumerate() {
                    if mask {
                        rounded[c] = if lp.x[c] > int_tol { 1.0 } else { 0.0 };
                    }
                }
                if accept(&rounded, problem) {
                    let obj = problem.objective_value(&rounded);
                    if obj < incumbent_obj {
                        incumbent_obj = obj;
                        incumbent = Some(rounded);
                        log::debug!(
                            "node {nodes_explored}: round-up incumbent {incumbent_obj:.6}"
                        );
                    }
                }

                for value in [false, true] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((col as u32, value));
                    seq += 1;
                    heap.push(NodeEntry {
                        bound: lp.objective,
                        seq,
                        fixings,
                    });
                }
            }
        }
    }

    let exhausted = heap.is_empty() && !hit_time && !hit_nodes;
    if exhausted {
        best_bound = if incumbent.is_some() {
            incumbent_obj
        } else {
            f64::INFINITY
        };
    } else if let Some(top) = heap.peek() {
        best_bound = best_bound.max(top.bound.min(incumbent_obj));
    }

    let gap = if incumbent.is_some() {
        if exhausted {
            0.0
        } else {
            rel_gap(incumbent_obj, best_bound)
        }
    } else {
        f64::INFINITY
    };

    let status = if hit_time {
        SolveStatus::TimeLimit
    } else if incumbent.is_some() {
        if gap <= cfg.gap_tolerance {
            SolveStatus::Optimal
        } else {
            SolveStatus::FeasibleWithGap
        }
    } else if hit_nodes {
        SolveStatus::TimeLimit
    } else {
        SolveStatus::Infeasible
    };

    log::debug!(
        "search done: status {status:?}, nodes {nodes_explored}, gap {gap:.4}, bound {best_bound:.6}"
    );

    Ok(MilpSolution {
        x: incumbent,
        objective: incumbent_obj,
        status,
        gap,
        nodes_explored,
        history,
    })
}
