//! Translation of an [`InstanceSpec`] into a sparse mixed-integer linear
//! program, and extraction of solver vectors back into a typed solution.
//!
//! Variable columns are laid out in a fixed order (production, inbound
//! flows, outbound flows, warehouse capacities, warehouse binaries, arc
//! binaries); constraint rows follow a fixed documented order (plant
//! balances, warehouse balances, demand covers, link activations, flow
//! capacities, warehouse capacity floor and cap). Two builds of the same
//! instance are structurally identical.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{witness_fits, witness_flows, InstanceSpec};

/// Symbolic variable names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarId {
    /// Production quantity of a plant.
    P(usize),
    /// Flow on a plant->warehouse arc.
    Qij(usize, usize),
    /// Flow on a warehouse->customer arc.
    Qjk(usize, usize),
    /// Installed capacity of a warehouse.
    W(usize),
    /// Warehouse installation binary.
    Y(usize),
    /// Plant->warehouse connection binary.
    Xij(usize, usize),
    /// Warehouse->customer connection binary.
    Xjk(usize, usize),
    /// Unstructured column (problems built outside the network model).
    Col(usize),
}

impl core::fmt::Display for VarId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            VarId::P(i) => write!(f, "P_{i}"),
            VarId::Qij(i, j) => write!(f, "Qij_{i}_{j}"),
            VarId::Qjk(j, k) => write!(f, "Qjk_{j}_{k}"),
            VarId::W(j) => write!(f, "W_{j}"),
            VarId::Y(j) => write!(f, "Y_{j}"),
            VarId::Xij(i, j) => write!(f, "Xij_{i}_{j}"),
            VarId::Xjk(j, k) => write!(f, "Xjk_{j}_{k}"),
            VarId::Col(c) => write!(f, "x_{c}"),
        }
    }
}

/// Column layout for the network model; a bijection between [`VarId`]s and
/// `0..n_vars`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarLayout {
    pub n_plants: usize,
    pub n_warehouses: usize,
    pub n_customers: usize,
}

impl VarLayout {
    pub fn n_vars(&self) -> usize {
        let (ni, nj, nk) = (self.n_plants, self.n_warehouses, self.n_customers);
        ni + 2 * ni * nj + 2 * nj * nk + 2 * nj
    }

    fn offsets(&self) -> [usize; 7] {
        let (ni, nj, nk) = (self.n_plants, self.n_warehouses, self.n_customers);
        let p = 0;
        let qij = p + ni;
        let qjk = qij + ni * nj;
        let w = qjk + nj * nk;
        let y = w + nj;
        let xij = y + nj;
        let xjk = xij + ni * nj;
        [p, qij, qjk, w, y, xij, xjk]
    }

    pub fn col(&self, var: VarId) -> usize {
        let (nj, nk) = (self.n_warehouses, self.n_customers);
        let [p, qij, qjk, w, y, xij, xjk] = self.offsets();
        match var {
            VarId::P(i) => p + i,
            VarId::Qij(i, j) => qij + i * nj + j,
            VarId::Qjk(j, k) => qjk + j * nk + k,
            VarId::W(j) => w + j,
            VarId::Y(j) => y + j,
            VarId::Xij(i, j) => xij + i * nj + j,
            VarId::Xjk(j, k) => xjk + j * nk + k,
            VarId::Col(c) => c,
        }
    }

    pub fn var(&self, col: usize) -> VarId {
        let (nj, nk) = (self.n_warehouses, self.n_customers);
        let [_, qij, qjk, w, y, xij, xjk] = self.offsets();
        if col < qij {
            VarId::P(col)
        } else if col < qjk {
            let o = col - qij;
            VarId::Qij(o / nj, o % nj)
        } else if col < w {
            let o = col - qjk;
            VarId::Qjk(o / nk, o % nk)
        } else if col < y {
            VarId::W(col - w)
        } else if col < xij {
            VarId::Y(col - y)
        } else if col < xjk {
            let o = col - xij;
            VarId::Xij(o / nj, o % nj)
        } else {
            let o = col - xjk;
            VarId::Xjk(o / nk, o % nk)
        }
    }
}

/// Bidirectional map between symbolic variable names and column indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarIndex {
    /// Columns follow the network [`VarLayout`].
    Layout(VarLayout),
    /// Bare columns named by index (hand-built problems, solver tests).
    Anonymous(usize),
}

impl VarIndex {
    pub fn n_vars(&self) -> usize {
        match self {
            VarIndex::Layout(l) => l.n_vars(),
            VarIndex::Anonymous(n) => *n,
        }
    }

    pub fn var(&self, col: usize) -> VarId {
        match self {
            VarIndex::Layout(l) => l.var(col),
            VarIndex::Anonymous(_) => VarId::Col(col),
        }
    }

    pub fn col(&self, var: VarId) -> usize {
        match self {
            VarIndex::Layout(l) => l.col(var),
            VarIndex::Anonymous(_) => match var {
                VarId::Col(c) => c,
                _ => panic!("structured variable on anonymous problem"),
            },
        }
    }
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// Role of a constraint row, used in diagnostics and violation reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowLabel {
    /// Plant production equals its shipped quantity.
    PlantBalance(usize),
    /// Warehouse inflow plus inventory equals outflow.
    WarehouseBalance(usize),
    /// Deliveries cover the customer demand target.
    DemandCover(usize),
    /// A plant->warehouse link needs the warehouse installed.
    InboundLink(usize, usize),
    /// A warehouse->customer link needs the warehouse installed.
    OutboundLink(usize, usize),
    /// Inbound flow only on an open link, up to arc capacity.
    InboundFlowCap(usize, usize),
    /// Outbound flow only on an open link, up to arc capacity.
    OutboundFlowCap(usize, usize),
    /// Installed capacity covers throughput plus inventory.
    WarehouseCapacityFloor(usize),
    /// Capacity only at installed warehouses, up to the cap.
    WarehouseCapacityCap(usize),
    /// Unstructured row.
    Row(usize),
}

impl core::fmt::Display for RowLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match *self {
            RowLabel::PlantBalance(i) => write!(f, "plant_balance_{i}"),
            RowLabel::WarehouseBalance(j) => write!(f, "warehouse_balance_{j}"),
            RowLabel::DemandCover(k) => write!(f, "demand_cover_{k}"),
            RowLabel::InboundLink(i, j) => write!(f, "inbound_link_{i}_{j}"),
            RowLabel::OutboundLink(j, k) => write!(f, "outbound_link_{j}_{k}"),
            RowLabel::InboundFlowCap(i, j) => write!(f, "inbound_flow_cap_{i}_{j}"),
            RowLabel::OutboundFlowCap(j, k) => write!(f, "outbound_flow_cap_{j}_{k}"),
            RowLabel::WarehouseCapacityFloor(j) => write!(f, "warehouse_capacity_floor_{j}"),
            RowLabel::WarehouseCapacityCap(j) => write!(f, "warehouse_capacity_cap_{j}"),
            RowLabel::Row(r) => write!(f, "row_{r}"),
        }
    }
}

/// One sparse constraint row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: RowLabel,
    /// `(column, coefficient)` pairs, column-sorted.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().map(|&(c, a)| a * x[c]).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Sparse standard-form mixed-integer program. Every integrality-masked
/// variable is binary (bounds `[0, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub integrality: Vec<bool>,
    pub var_index: VarIndex,
}

impl MilpProblem {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_binaries(&self) -> usize {
        self.integrality.iter().filter(|&&b| b).count()
    }

    /// Objective value of a solution vector.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest constraint-row violation of `x`.
    pub fn max_row_violation(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.violation(x))
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (c, &v) in x.iter().enumerate() {
            worst = worst.max(self.var_lower[c] - v).max(v - self.var_upper[c]);
        }
        worst
    }

    /// Hand-built problem with anonymous columns; rows get positional
    /// labels. Intended for tests and direct solver use.
    pub fn anonymous(
        objective: Vec<f64>,
        rows: Vec<(Vec<(usize, f64)>, Relation, f64)>,
        var_lower: Vec<f64>,
        var_upper: Vec<f64>,
        integrality: Vec<bool>,
    ) -> Self {
        let n = objective.len();
        assert_eq!(var_lower.len(), n);
        assert_eq!(var_upper.len(), n);
        assert_eq!(integrality.len(), n);
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(idx, (coeffs, relation, rhs))| Row {
                label: RowLabel::Row(idx),
                coeffs,
                relation,
                rhs,
            })
            .collect();
        MilpProblem {
            objective,
            rows,
            var_lower,
            var_upper,
            integrality,
            var_index: VarIndex::Anonymous(n),
        }
    }
}

/// Solution status vocabulary shared by the LP/MILP solver and the typed
/// stage-1 solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    FeasibleWithGap,
    Infeasible,
    TimeLimit,
}

/// Typed stage-1 solution: flows, capacities, network binaries and the
/// recomputed total network cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Solution {
    pub p: Vec<f64>,
    pub q_ij: Vec<Vec<f64>>,
    pub q_jk: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub y: Vec<bool>,
    pub x_ij: Vec<Vec<bool>>,
    pub x_jk: Vec<Vec<bool>>,
    /// Total network cost: production, variable transport on flows, fixed
    /// transport on connections, installation.
    pub tc: f64,
    pub status: SolveStatus,
    pub gap: f64,
}

impl Stage1Solution {
    /// Total quantity delivered to customer `k`.
    pub fn delivered(&self, k: usize) -> f64 {
        self.q_jk.iter().map(|row| row[k]).sum()
    }

    pub fn any_warehouse_open(&self) -> bool {
        self.y.iter().any(|&y| y)
    }
}

/// Errors from solution extraction.
#[derive(Debug, Clone, PartialEq)]
pub enum MilpError {
    /// An integrality-masked variable is farther than the tolerance from 0
    /// or 1.
    NonIntegralBinary { var: String, value: f64 },
    /// The recomputed cost disagrees with the solver objective.
    ObjectiveMismatch { recomputed: f64, solver: f64 },
    /// Extraction needs a problem built from an instance.
    UnstructuredProblem,
}

impl core::fmt::Display for MilpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MilpError::NonIntegralBinary { var, value } => {
                write!(f, "binary variable {var} has non-integral value {value}")
            }
            MilpError::ObjectiveMismatch { recomputed, solver } => write!(
                f,
                "recomputed cost {recomputed} does not match solver objective {solver}"
            ),
            MilpError::UnstructuredProblem => {
                write!(f, "problem has no network variable layout")
            }
        }
    }
}

impl core::error::Error for MilpError {}

const BINARY_TOL: f64 = 1e-6;

/// Build the stage-1 network design program.
///
/// Demand enters through its deterministic equivalent
/// `mu + safety_factor * sigma`. Production bounds become variable bounds
/// (a positive lower bound forces the plant to produce); flow and capacity
/// activation use the arc capacities and the warehouse cap as big-M
/// coefficients, exactly as given.
pub fn build_stage1(spec: &InstanceSpec, safety_factor: f64) -> MilpProblem {
    let layout = VarLayout {
        n_plants: spec.n_plants,
        n_warehouses: spec.n_warehouses,
        n_customers: spec.n_customers,
    };
    let n = layout.n_vars();
    let (ni, nj, nk) = (spec.n_plants, spec.n_warehouses, spec.n_customers);

    let mut objective = vec![0.0; n];
    let mut var_lower = vec![0.0; n];
    let mut var_upper = vec![0.0; n];
    let mut integrality = vec![false; n];

    for i in 0..ni {
        let c = layout.col(VarId::P(i));
        objective[c] = spec.costs.c_prod[i];
        var_lower[c] = spec.p_lower[i];
        var_upper[c] = spec.p_upper[i];
    }
    for i in 0..ni {
        for j in 0..nj {
            let q = layout.col(VarId::Qij(i, j));
            objective[q] = spec.costs.c_var_ij[i][j];
            var_upper[q] = spec.q_upper_ij[i][j];
            let x = layout.col(VarId::Xij(i, j));
            objective[x] = spec.costs.c_fix_ij[i][j];
            var_upper[x] = 1.0;
            integrality[x] = true;
        }
    }
    for j in 0..nj {
        for k in 0..nk {
            let q = layout.col(VarId::Qjk(j, k));
            objective[q] = spec.costs.c_var_jk[j][k];
            var_upper[q] = spec.q_upper_jk[j][k];
            let x = layout.col(VarId::Xjk(j, k));
            objective[x] = spec.costs.c_fix_jk[j][k];
            var_upper[x] = 1.0;
            integrality[x] = true;
        }
    }
    for j in 0..nj {
        let w = layout.col(VarId::W(j));
        var_upper[w] = spec.w_upper[j];
        let y = layout.col(VarId::Y(j));
        objective[y] = spec.costs.c_install[j];
        var_upper[y] = 1.0;
        integrality[y] = true;
    }

    let mut rows = Vec::new();

    // Plant balances: production equals shipped quantity.
    for i in 0..ni {
        let mut coeffs = Vec::with_capacity(1 + nj);
        coeffs.push((layout.col(VarId::P(i)), 1.0));
        for j in 0..nj {
            coeffs.push((layout.col(VarId::Qij(i, j)), -1.0));
        }
        rows.push(Row {
            label: RowLabel::PlantBalance(i),
            coeffs,
            relation: Relation::Eq,
            rhs: 0.0,
        });
    }
    // Warehouse balances, inventory on the right-hand side.
    for j in 0..nj {
        let mut coeffs = Vec::with_capacity(ni + nk);
        for i in 0..ni {
            coeffs.push((layout.col(VarId::Qij(i, j)), 1.0));
        }
        for k in 0..nk {
            coeffs.push((layout.col(VarId::Qjk(j, k)), -1.0));
        }
        rows.push(Row {
            label: RowLabel::WarehouseBalance(j),
            coeffs,
            relation: Relation::Eq,
            rhs: -spec.inventory[j],
        });
    }
    // Demand cover.
    for k in 0..nk {
        let coeffs = (0..nj)
            .map(|j| (layout.col(VarId::Qjk(j, k)), 1.0))
            .collect();
        rows.push(Row {
            label: RowLabel::DemandCover(k),
            coeffs,
            relation: Relation::Ge,
            rhs: spec.demand[k].target(safety_factor),
        });
    }
    // Link activation.
    for i in 0..ni {
        for j in 0..nj {
            rows.push(Row {
                label: RowLabel::InboundLink(i, j),
                coeffs: vec![
                    (layout.col(VarId::Xij(i, j)), 1.0),
                    (layout.col(VarId::Y(j)), -1.0),
                ],
                relation: Relation::Le,
                rhs: 0.0,
            });
        }
    }
    for j in 0..nj {
        for k in 0..nk {
            rows.push(Row {
                label: RowLabel::OutboundLink(j, k),
                coeffs: vec![
                    (layout.col(VarId::Xjk(j, k)), 1.0),
                    (layout.col(VarId::Y(j)), -1.0),
                ],
                relation: Relation::Le,
                rhs: 0.0,
            });
        }
    }
    // Flow only on open links.
    for i in 0..ni {
        for j in 0..nj {
            rows.push(Row {
                label: RowLabel::InboundFlowCap(i, j),
                coeffs: vec![
                    (layout.col(VarId::Qij(i, j)), 1.0),
                    (layout.col(VarId::Xij(i, j)), -spec.q_upper_ij[i][j]),
                ],
                relation: Relation::Le,
                rhs: 0.0,
            });
        }
    }
    for j in 0..nj {
        for k in 0..nk {
            rows.push(Row {
                label: RowLabel::OutboundFlowCap(j, k),
                coeffs: vec![
                    (layout.col(VarId::Qjk(j, k)), 1.0),
                    (layout.col(VarId::Xjk(j, k)), -spec.q_upper_jk[j][k]),
                ],
                relation: Relation::Le,
                rhs: 0.0,
            });
        }
    }
    // Capacity floor: throughput plus inventory, scaled by the warehouse
    // coefficient; inventory term on the right-hand side.
    for j in 0..nj {
        let mut coeffs = Vec::with_capacity(1 + ni);
        coeffs.push((layout.col(VarId::W(j)), 1.0));
        for i in 0..ni {
            coeffs.push((layout.col(VarId::Qij(i, j)), -spec.a[j]));
        }
        rows.push(Row {
            label: RowLabel::WarehouseCapacityFloor(j),
            coeffs,
            relation: Relation::Ge,
            rhs: spec.a[j] * spec.inventory[j],
        });
    }
    // Capacity only at installed warehouses.
    for j in 0..nj {
        rows.push(Row {
            label: RowLabel::WarehouseCapacityCap(j),
            coeffs: vec![
                (layout.col(VarId::W(j)), 1.0),
                (layout.col(VarId::Y(j)), -spec.w_upper[j]),
            ],
            relation: Relation::Le,
            rhs: 0.0,
        });
    }

    MilpProblem {
        objective,
        rows,
        var_lower,
        var_upper,
        integrality,
        var_index: VarIndex::Layout(layout),
    }
}

/// Assemble a full solution vector from the all-open witness, if it fits
/// the instance capacities. Used as a warm-start incumbent.
pub fn witness_vector(spec: &InstanceSpec, problem: &MilpProblem, safety_factor: f64) -> Option<Vec<f64>> {
    let layout = match problem.var_index {
        VarIndex::Layout(l) => l,
        VarIndex::Anonymous(_) => return None,
    };
    let wit = witness_flows(spec, safety_factor);
    if !witness_fits(spec, &wit) {
        return None;
    }
    let mut x = vec![0.0; problem.n_vars()];
    for i in 0..spec.n_plants {
        x[layout.col(VarId::P(i))] = wit.p[i];
        for j in 0..spec.n_warehouses {
            x[layout.col(VarId::Qij(i, j))] = wit.q_ij[i][j];
            x[layout.col(VarId::Xij(i, j))] = 1.0;
        }
    }
    for j in 0..spec.n_warehouses {
        x[layout.col(VarId::W(j))] = wit.w[j];
        x[layout.col(VarId::Y(j))] = 1.0;
        for k in 0..spec.n_customers {
            x[layout.col(VarId::Qjk(j, k))] = wit.q_jk[j][k];
            x[layout.col(VarId::Xjk(j, k))] = 1.0;
        }
    }
    Some(x)
}

/// Map a solver vector back into a typed [`Stage1Solution`].
///
/// Binaries are rounded to the nearest integer after checking they sit
/// within `1e-6` of one; the total cost is recomputed from the extracted
/// values (not copied from the solver) and must agree with the solver
/// objective to `1e-6` relative.
pub fn extract_stage1(
    problem: &MilpProblem,
    x: &[f64],
    status: SolveStatus,
    gap: f64,
) -> Result<Stage1Solution, MilpError> {
    assert_eq!(x.len(), problem.n_vars());
    let layout = match problem.var_index {
        VarIndex::Layout(l) => l,
        VarIndex::Anonymous(_) => return Err(MilpError::UnstructuredProblem),
    };

    let mut rounded = x.to_vec();
    for (c, &mask) in problem.integrality.iter().enumerate() {
        if !mask {
            continue;
        }
        let v = x[c];
        let r = crate::fmath::round(v);
        if (v - r).abs() > BINARY_TOL || !(r == 0.0 || r == 1.0) {
            return Err(MilpError::NonIntegralBinary {
                var: format!("{}", layout.var(c)),
                value: v,
            });
        }
        rounded[c] = r;
    }

    let tc = problem.objective_value(&rounded);
    let solver_obj = problem.objective_value(x);
    if (tc - solver_obj).abs() > 1e-6 * solver_obj.abs().max(1.0) {
        return Err(MilpError::ObjectiveMismatch {
            recomputed: tc,
            solver: solver_obj,
        });
    }

    let (ni, nj, nk) = (layout.n_plants, layout.n_warehouses, layout.n_customers);
    let sol = Stage1Solution {
        p: (0..ni).map(|i| rounded[layout.col(VarId::P(i))]).collect(),
        q_ij: (0..ni)
            .map(|i| {
                (0..nj)
                    .map(|j| rounded[layout.col(VarId::Qij(i, j))])
                    .collect()
            })
            .collect(),
        q_jk: (0..nj)
            .map(|j| {
                (0..nk)
                    .map(|k| rounded[layout.col(VarId::Qjk(j, k))])
                    .collect()
            })
            .collect(),
        w: (0..nj).map(|j| rounded[layout.col(VarId::W(j))]).collect(),
        y: (0..nj)
            .map(|j| rounded[layout.col(VarId::Y(j))] > 0.5)
            .collect(),
        x_ij: (0..ni)
            .map(|i| {
                (0..nj)
                    .map(|j| rounded[layout.col(VarId::Xij(i, j))] > 0.5)
                    .collect()
            })
            .collect(),
        x_jk: (0..nj)
            .map(|j| {
                (0..nk)
                    .map(|k| rounded[layout.col(VarId::Xjk(j, k))] > 0.5)
                    .collect()
            })
            .collect(),
        tc,
        status,
        gap,
    };
    Ok(sol)
}
