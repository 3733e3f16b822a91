//! Domain data model: instance specification, validation and seeded
//! synthetic instance generation.
//!
//! An [`InstanceSpec`] fixes every parameter of the three-echelon network:
//! plant production bounds, arc capacities, warehouse capacity coefficients
//! and inventories, customer demand distributions, delivery-time bounds and
//! all cost coefficients. Instances are immutable after construction and
//! safe to share across workers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::{self, purpose};

/// Demand of one customer: normally distributed with mean `mu` and
/// standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub mu: f64,
    pub sigma: f64,
}

impl DemandSpec {
    /// Deterministic equivalent used as the stage-1 delivery target:
    /// `mu + z * sigma` for a configurable safety factor `z`.
    pub fn target(&self, safety_factor: f64) -> f64 {
        self.mu + safety_factor * self.sigma
    }
}

/// All cost coefficients of the network, in currency units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Unit production cost per plant.
    pub c_prod: Vec<f64>,
    /// Variable transportation cost per unit on plant->warehouse arcs.
    pub c_var_ij: Vec<Vec<f64>>,
    /// Fixed transportation cost for opening a plant->warehouse connection.
    pub c_fix_ij: Vec<Vec<f64>>,
    /// Variable transportation cost per unit on warehouse->customer arcs.
    pub c_var_jk: Vec<Vec<f64>>,
    /// Fixed transportation cost for opening a warehouse->customer connection.
    pub c_fix_jk: Vec<Vec<f64>>,
    /// Warehouse installation cost.
    pub c_install: Vec<f64>,
    /// Unit cost of recovery production for large deficits.
    pub c_po: Vec<Vec<f64>>,
    /// Unit cost of recovery production for small deficits.
    pub c_pu: Vec<Vec<f64>>,
}

/// Immutable description of one problem instance.
///
/// Index conventions: `i` ranges over plants, `j` over warehouses, `k` over
/// customers. All matrices are row-major `[first index][second index]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n_plants: usize,
    pub n_warehouses: usize,
    pub n_customers: usize,
    /// Production upper bound per plant.
    pub p_upper: Vec<f64>,
    /// Production lower bound per plant. A positive value forces the plant
    /// to produce (there is no plant-selection binary in the model).
    pub p_lower: Vec<f64>,
    /// Arc capacity plant->warehouse.
    pub q_upper_ij: Vec<Vec<f64>>,
    /// Arc capacity warehouse->customer.
    pub q_upper_jk: Vec<Vec<f64>>,
    /// Lower arc capacities. Stored for completeness; no constraint uses
    /// them.
    #[serde(default)]
    pub q_lower_ij: Vec<Vec<f64>>,
    #[serde(default)]
    pub q_lower_jk: Vec<Vec<f64>>,
    /// Warehouse capacity cap.
    pub w_upper: Vec<f64>,
    /// Inventory held at each warehouse.
    pub inventory: Vec<f64>,
    /// Customer demand distributions.
    pub demand: Vec<DemandSpec>,
    /// Coefficient relating warehouse throughput to required capacity.
    pub a: Vec<f64>,
    /// Production rate for covering large deficits, per warehouse/customer.
    pub beta: Vec<Vec<f64>>,
    /// Production rate for covering small deficits, per warehouse/customer.
    pub gamma: Vec<Vec<f64>>,
    /// Minimum inventory level earmarked for recovery production.
    pub h: Vec<Vec<f64>>,
    /// Maximum delivery time.
    pub t_upper: f64,
    /// Minimum delivery time.
    pub t_lower: f64,
    pub costs: CostParams,
}

/// One failed invariant: which field and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Outcome of [`validate_instance`]. `ok` holds exactly when `violations`
/// is empty; `warnings` carry advisory findings that do not fail
/// validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    fn new(violations: Vec<Violation>, warnings: Vec<String>) -> Self {
        ValidationReport {
            ok: violations.is_empty(),
            violations,
            warnings,
        }
    }
}

/// Inclusive `[lo, hi]` sampling interval.
pub type Range = (f64, f64);

/// Sampling intervals for every generated parameter, plus the construction
/// knobs that keep generated instances feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationRanges {
    pub demand_mu: Range,
    /// sigma = ratio * mu.
    pub demand_sigma_ratio: f64,
    pub p_upper: Range,
    pub p_lower: Range,
    pub q_upper_ij: Range,
    pub q_upper_jk: Range,
    pub q_lower: Range,
    pub w_upper: Range,
    pub inventory: Range,
    pub a: Range,
    pub beta: Range,
    pub gamma: Range,
    pub h: Range,
    pub t_lower: Range,
    pub t_upper: Range,
    pub c_prod: Range,
    pub c_var: Range,
    pub c_fix: Range,
    pub c_install: Range,
    pub c_po: Range,
    pub c_pu: Range,
    /// Relative slack applied on top of the construction witness when a
    /// capacity has to be raised to keep the instance feasible.
    pub feasibility_margin: f64,
    /// Generated capacities stay feasible for delivery targets up to
    /// `mu + safety_z * sigma`.
    pub safety_z: f64,
}

impl Default for GenerationRanges {
    fn default() -> Self {
        GenerationRanges {
            demand_mu: (100.0, 500.0),
            demand_sigma_ratio: 0.1,
            p_upper: (200.0, 3000.0),
            p_lower: (0.0, 0.0),
            q_upper_ij: (50.0, 1500.0),
            q_upper_jk: (50.0, 1500.0),
            q_lower: (0.0, 0.0),
            w_upper: (100.0, 4000.0),
            inventory: (0.0, 50.0),
            a: (0.2, 1.0),
            beta: (0.05, 0.35),
            gamma: (0.05, 0.35),
            h: (10.0, 100.0),
            t_lower: (1.0, 3.0),
            t_upper: (5.0, 10.0),
            c_prod: (5.0, 20.0),
            c_var: (1.0, 10.0),
            c_fix: (50.0, 300.0),
            c_install: (500.0, 2000.0),
            c_po: (5.0, 50.0),
            c_pu: (5.0, 50.0),
            feasibility_margin: 0.25,
            safety_z: 3.0,
        }
    }
}

/// Errors from instance generation.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// All three set sizes must be at least one.
    InvalidSize { which: &'static str },
    /// A range is malformed (lo > hi, negative where nonnegative is
    /// required, or non-finite).
    InvalidRange { field: &'static str },
    /// The ranges cannot accommodate the capacities required to make the
    /// instance feasible by construction.
    InfeasibleRanges {
        field: &'static str,
        needed: f64,
        max: f64,
    },
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::InvalidSize { which } => write!(f, "set size {which} must be >= 1"),
            ModelError::InvalidRange { field } => write!(f, "invalid generation range {field}"),
            ModelError::InfeasibleRanges { field, needed, max } => write!(
                f,
                "ranges make feasibility-by-construction impossible: {field} needs {needed} but tops out at {max}"
            ),
        }
    }
}

impl core::error::Error for ModelError {}

/// Validate every invariant of an instance, reporting all violations
/// rather than the first.
pub fn validate_instance(spec: &InstanceSpec) -> ValidationReport {
    let mut v: Vec<Violation> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    fn push(v: &mut Vec<Violation>, field: String, message: &str) {
        v.push(Violation {
            field,
            message: String::from(message),
        });
    }

    let (ni, nj, nk) = (spec.n_plants, spec.n_warehouses, spec.n_customers);
    if ni == 0 {
        push(&mut v, String::from("n_plants"), "must be >= 1");
    }
    if nj == 0 {
        push(&mut v, String::from("n_warehouses"), "must be >= 1");
    }
    if nk == 0 {
        push(&mut v, String::from("n_customers"), "must be >= 1");
    }

    let check_vec = |v: &mut Vec<Violation>, name: &str, data: &[f64], len: usize| {
        if data.len() != len {
            v.push(Violation {
                field: String::from(name),
                message: format!("expected length {len}, got {}", data.len()),
            });
            return;
        }
        for (idx, &x) in data.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                v.push(Violation {
                    field: format!("{name}[{idx}]"),
                    message: String::from("must be finite and nonnegative"),
                });
            }
        }
    };
    let check_mat = |v: &mut Vec<Violation>, name: &str, data: &[Vec<f64>], rows: usize, cols: usize| {
        if data.len() != rows {
            v.push(Violation {
                field: String::from(name),
                message: format!("expected {rows} rows, got {}", data.len()),
            });
            return;
        }
        for (r, row) in data.iter().enumerate() {
            if row.len() != cols {
                v.push(Violation {
                    field: format!("{name}[{r}]"),
                    message: format!("expected {cols} columns, got {}", row.len()),
                });
                continue;
            }
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    v.push(Violation {
                        field: format!("{name}[{r}][{c}]"),
                        message: String::from("must be finite and nonnegative"),
                    });
                }
            }
        }
    };

    check_vec(&mut v, "p_upper", &spec.p_upper, ni);
    check_vec(&mut v, "p_lower", &spec.p_lower, ni);
    if spec.p_upper.len() == ni && spec.p_lower.len() == ni {
        for i in 0..ni {
            if spec.p_lower[i] > spec.p_upper[i] {
                v.push(Violation {
                    field: format!("p_lower[{i}]"),
                    message: format!(
                        "lower production bound {} exceeds upper bound {}",
                        spec.p_lower[i], spec.p_upper[i]
                    ),
                });
            }
        }
    }
    check_mat(&mut v, "q_upper_ij", &spec.q_upper_ij, ni, nj);
    check_mat(&mut v, "q_upper_jk", &spec.q_upper_jk, nj, nk);
    if !spec.q_lower_ij.is_empty() {
        check_mat(&mut v, "q_lower_ij", &spec.q_lower_ij, ni, nj);
    }
    if !spec.q_lower_jk.is_empty() {
        check_mat(&mut v, "q_lower_jk", &spec.q_lower_jk, nj, nk);
    }
    check_vec(&mut v, "w_upper", &spec.w_upper, nj);
    check_vec(&mut v, "inventory", &spec.inventory, nj);
    check_vec(&mut v, "a", &spec.a, nj);

    if spec.demand.len() != nk {
        push(
            &mut v,
            String::from("demand"),
            "length does not match n_customers",
        );
    } else {
        for (k, d) in spec.demand.iter().enumerate() {
            if !d.mu.is_finite() || d.mu < 0.0 {
                v.push(Violation {
                    field: format!("demand[{k}].mu"),
                    message: String::from("must be finite and nonnegative"),
                });
            }
            if !d.sigma.is_finite() || d.sigma < 0.0 {
                v.push(Violation {
                    field: format!("demand[{k}].sigma"),
                    message: String::from("must be finite and nonnegative"),
                });
            }
        }
    }

    let check_unit = |v: &mut Vec<Violation>, name: &str, data: &[Vec<f64>]| {
        for (r, row) in data.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) {
                    v.push(Violation {
                        field: format!("{name}[{r}][{c}]"),
                        message: String::from("must lie in [0, 1]"),
                    });
                }
            }
        }
    };
    check_mat(&mut v, "beta", &spec.beta, nj, nk);
    check_mat(&mut v, "gamma", &spec.gamma, nj, nk);
    check_unit(&mut v, "beta", &spec.beta);
    check_unit(&mut v, "gamma", &spec.gamma);
    check_mat(&mut v, "h", &spec.h, nj, nk);

    if !spec.t_lower.is_finite() || spec.t_lower < 0.0 {
        push(&mut v, String::from("t_lower"), "must be finite and nonnegative");
    }
    if !spec.t_upper.is_finite() || spec.t_upper < 0.0 {
        push(&mut v, String::from("t_upper"), "must be finite and nonnegative");
    }
    if spec.t_lower > spec.t_upper {
        push(&mut v, String::from("t_lower"), "exceeds t_upper");
    }

    check_vec(&mut v, "costs.c_prod", &spec.costs.c_prod, ni);
    check_mat(&mut v, "costs.c_var_ij", &spec.costs.c_var_ij, ni, nj);
    check_mat(&mut v, "costs.c_fix_ij", &spec.costs.c_fix_ij, ni, nj);
    check_mat(&mut v, "costs.c_var_jk", &spec.costs.c_var_jk, nj, nk);
    check_mat(&mut v, "costs.c_fix_jk", &spec.costs.c_fix_jk, nj, nk);
    check_vec(&mut v, "costs.c_install", &spec.costs.c_install, nj);
    check_mat(&mut v, "costs.c_po", &spec.costs.c_po, nj, nk);
    check_mat(&mut v, "costs.c_pu", &spec.costs.c_pu, nj, nk);

    // Aggregate capacity is advisory only: warehouses also produce in the
    // recovery stage, so a shortfall here is not necessarily fatal.
    if spec.p_upper.len() == ni && spec.demand.len() == nk {
        let cap: f64 = spec.p_upper.iter().sum();
        let dem: f64 = spec.demand.iter().map(|d| d.mu).sum();
        if cap < dem {
            warnings.push(format!(
                "total plant capacity {cap} is below total mean demand {dem}"
            ));
        }
    }

    ValidationReport::new(v, warnings)
}

/// A feasible assignment constructed directly from the instance data:
/// every warehouse open, demand and inventory routed evenly. Used to seed
/// capacity generation and as a warm-start incumbent for the solver.
#[derive(Debug, Clone)]
pub struct Witness {
    pub p: Vec<f64>,
    pub q_ij: Vec<Vec<f64>>,
    pub q_jk: Vec<Vec<f64>>,
    pub w: Vec<f64>,
}

/// Build the canonical witness for delivery targets `mu + z * sigma`.
/// Returns the flows regardless of capacities; callers decide whether the
/// witness fits (the generator sizes capacities around it).
pub fn witness_flows(spec: &InstanceSpec, safety_factor: f64) -> Witness {
    let (ni, nj, nk) = (spec.n_plants, spec.n_warehouses, spec.n_customers);
    let targets: Vec<f64> = spec.demand.iter().map(|d| d.target(safety_factor)).collect();
    let total_target: f64 = targets.iter().sum();
    let total_inventory: f64 = spec.inventory.iter().sum();
    let forced: f64 = spec.p_lower.iter().sum();

    let needed = (total_target - total_inventory).max(forced).max(0.0);
    let p: Vec<f64> = (0..ni)
        .map(|i| (needed / ni as f64).max(spec.p_lower[i]))
        .collect();
    let produced: f64 = p.iter().sum();

    let inflow = produced / nj as f64;
    let q_ij: Vec<Vec<f64>> = (0..ni)
        .map(|i| (0..nj).map(|_| p[i] / nj as f64).collect())
        .collect();

    let q_jk: Vec<Vec<f64>> = (0..nj)
        .map(|j| {
            let outflow = inflow + spec.inventory[j];
            (0..nk)
                .map(|k| {
                    if total_target > 0.0 {
                        outflow * targets[k] / total_target
                    } else {
                        outflow / nk as f64
                    }
                })
                .collect()
        })
        .collect();

    let w: Vec<f64> = (0..nj)
        .map(|j| spec.a[j] * (inflow + spec.inventory[j]))
        .collect();

    Witness { p, q_ij, q_jk, w }
}

/// True when the witness respects every capacity of the instance, so it
/// can serve as a feasible incumbent with all warehouses open.
pub fn witness_fits(spec: &InstanceSpec, wit: &Witness) -> bool {
    let tol = 1e-9;
    for i in 0..spec.n_plants {
        if wit.p[i] > spec.p_upper[i] + tol {
            return false;
        }
        for j in 0..spec.n_warehouses {
            if wit.q_ij[i][j] > spec.q_upper_ij[i][j] + tol {
                return false;
            }
        }
    }
    for j in 0..spec.n_warehouses {
        if wit.w[j] > spec.w_upper[j] + tol {
            return false;
        }
        for k in 0..spec.n_customers {
            if wit.q_jk[j][k] > spec.q_upper_jk[j][k] + tol {
                return false;
            }
        }
    }
    true
}

fn check_range(field: &'static str, r: Range, nonneg: bool) -> Result<(), ModelError> {
    if !r.0.is_finite() || !r.1.is_finite() || r.0 > r.1 || (nonneg && r.0 < 0.0) {
        return Err(ModelError::InvalidRange { field });
    }
    Ok(())
}

/// Deterministically generate an instance from a seed, set sizes and
/// sampling ranges.
///
/// Capacities are drawn from their ranges and then raised, where needed,
/// to the construction witness times `1 + feasibility_margin`, so every
/// generated instance admits a feasible network design. When a required
/// capacity exceeds the top of its range the ranges themselves are
/// inconsistent and [`ModelError::InfeasibleRanges`] is returned.
pub fn generate_instance(
    seed: u64,
    n_plants: usize,
    n_warehouses: usize,
    n_customers: usize,
    ranges: &GenerationRanges,
) -> Result<InstanceSpec, ModelError> {
    if n_plants == 0 {
        return Err(ModelError::InvalidSize { which: "n_plants" });
    }
    if n_warehouses == 0 {
        return Err(ModelError::InvalidSize { which: "n_warehouses" });
    }
    if n_customers == 0 {
        return Err(ModelError::InvalidSize { which: "n_customers" });
    }

    check_range("demand_mu", ranges.demand_mu, true)?;
    check_range("p_upper", ranges.p_upper, true)?;
    check_range("p_lower", ranges.p_lower, true)?;
    check_range("q_upper_ij", ranges.q_upper_ij, true)?;
    check_range("q_upper_jk", ranges.q_upper_jk, true)?;
    check_range("q_lower", ranges.q_lower, true)?;
    check_range("w_upper", ranges.w_upper, true)?;
    check_range("inventory", ranges.inventory, true)?;
    check_range("a", ranges.a, true)?;
    check_range("beta", ranges.beta, true)?;
    check_range("gamma", ranges.gamma, true)?;
    check_range("h", ranges.h, true)?;
    check_range("t_lower", ranges.t_lower, true)?;
    check_range("t_upper", ranges.t_upper, true)?;
    check_range("c_prod", ranges.c_prod, true)?;
    check_range("c_var", ranges.c_var, true)?;
    check_range("c_fix", ranges.c_fix, true)?;
    check_range("c_install", ranges.c_install, true)?;
    check_range("c_po", ranges.c_po, true)?;
    check_range("c_pu", ranges.c_pu, true)?;
    if ranges.beta.1 > 1.0 || ranges.gamma.1 > 1.0 {
        return Err(ModelError::InvalidRange {
            field: "beta/gamma",
        });
    }
    if !(ranges.demand_sigma_ratio.is_finite() && ranges.demand_sigma_ratio >= 0.0) {
        return Err(ModelError::InvalidRange {
            field: "demand_sigma_ratio",
        });
    }
    if !(ranges.feasibility_margin.is_finite() && ranges.feasibility_margin >= 0.0) {
        return Err(ModelError::InvalidRange {
            field: "feasibility_margin",
        });
    }

    let (ni, nj, nk) = (n_plants, n_warehouses, n_customers);
    // One stream per parameter family keeps the draw order independent of
    // code layout: adding a parameter cannot shift existing draws.
    let draws = |family: u64, count: usize, r: Range| -> Vec<f64> {
        let mut s = rng::stream(seed, &[purpose::GENERATOR, family, ni as u64, nj as u64, nk as u64]);
        (0..count).map(|_| rng::uniform_in(&mut s, r.0, r.1)).collect()
    };

    let mu = draws(1, nk, ranges.demand_mu);
    let demand: Vec<DemandSpec> = mu
        .iter()
        .map(|&m| DemandSpec {
            mu: m,
            sigma: ranges.demand_sigma_ratio * m,
        })
        .collect();

    let inventory = draws(2, nj, ranges.inventory);
    let a = draws(3, nj, ranges.a);
    let p_lower = draws(4, ni, ranges.p_lower);

    // Construction witness at the most demanding supported safety factor.
    let margin = 1.0 + ranges.feasibility_margin;
    let targets: Vec<f64> = demand
        .iter()
        .map(|d| d.target(ranges.safety_z))
        .collect();
    let total_target: f64 = targets.iter().sum();
    let total_inventory: f64 = inventory.iter().sum();
    let forced: f64 = p_lower.iter().sum();
    let needed = (total_target - total_inventory).max(forced).max(0.0);

    let p_star: Vec<f64> = (0..ni)
        .map(|i| (needed / ni as f64).max(p_lower[i]))
        .collect();
    let produced: f64 = p_star.iter().sum();
    let inflow = produced / nj as f64;

    let raise = |field: &'static str, raw: f64, floor: f64, hi: f64| -> Result<f64, ModelError> {
        let need = floor * margin;
        if need > hi {
            return Err(ModelError::InfeasibleRanges {
                field,
                needed: need,
                max: hi,
            });
        }
        Ok(raw.max(need))
    };

    let p_upper_raw = draws(5, ni, ranges.p_upper);
    let mut p_upper = Vec::with_capacity(ni);
    for i in 0..ni {
        p_upper.push(raise("p_upper", p_upper_raw[i], p_star[i], ranges.p_upper.1)?);
    }

    let q_ij_raw = draws(6, ni * nj, ranges.q_upper_ij);
    let mut q_upper_ij = vec![vec![0.0; nj]; ni];
    for i in 0..ni {
        for j in 0..nj {
            let wit = p_star[i] / nj as f64;
            q_upper_ij[i][j] = raise("q_upper_ij", q_ij_raw[i * nj + j], wit, ranges.q_upper_ij.1)?;
        }
    }

    let q_jk_raw = draws(7, nj * nk, ranges.q_upper_jk);
    let mut q_upper_jk = vec![vec![0.0; nk]; nj];
    for j in 0..nj {
        let outflow = inflow + inventory[j];
        for k in 0..nk {
            let wit = if total_target > 0.0 {
                outflow * targets[k] / total_target
            } else {
                outflow / nk as f64
            };
            q_upper_jk[j][k] = raise("q_upper_jk", q_jk_raw[j * nk + k], wit, ranges.q_upper_jk.1)?;
        }
    }

    let w_raw = draws(8, nj, ranges.w_upper);
    let mut w_upper = Vec::with_capacity(nj);
    for j in 0..nj {
        let wit = a[j] * (inflow + inventory[j]);
        w_upper.push(raise("w_upper", w_raw[j], wit, ranges.w_upper.1)?);
    }

    let t_lo_draw = draws(9, 1, ranges.t_lower)[0];
    let t_hi_draw = draws(10, 1, ranges.t_upper)[0];
    let t_lower = t_lo_draw.min(t_hi_draw);
    let t_upper = t_lo_draw.max(t_hi_draw);

    let beta_flat = draws(11, nj * nk, ranges.beta);
    let gamma_flat = draws(12, nj * nk, ranges.gamma);
    let h_flat = draws(13, nj * nk, ranges.h);
    let to_mat = |flat: &[f64], rows: usize, cols: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|r| flat[r * cols..(r + 1) * cols].to_vec())
            .collect()
    };

    let q_lower_ij = to_mat(&draws(14, ni * nj, ranges.q_lower), ni, nj);
    let q_lower_jk = to_mat(&draws(15, nj * nk, ranges.q_lower), nj, nk);

    let costs = CostParams {
        c_prod: draws(16, ni, ranges.c_prod),
        c_var_ij: to_mat(&draws(17, ni * nj, ranges.c_var), ni, nj),
        c_fix_ij: to_mat(&draws(18, ni * nj, ranges.c_fix), ni, nj),
        c_var_jk: to_mat(&draws(19, nj * nk, ranges.c_var), nj, nk),
        c_fix_jk: to_mat(&draws(20, nj * nk, ranges.c_fix), nj, nk),
        c_install: draws(21, nj, ranges.c_install),
        c_po: to_mat(&draws(22, nj * nk, ranges.c_po), nj, nk),
        c_pu: to_mat(&draws(23, nj * nk, ranges.c_pu), nj, nk),
    };

    let spec = InstanceSpec {
        n_plants: ni,
        n_warehouses: nj,
        n_customers: nk,
        p_upper,
        p_lower,
        q_upper_ij,
        q_upper_jk,
        q_lower_ij,
        q_lower_jk,
        w_upper,
        inventory,
        demand,
        a,
        beta: to_mat(&beta_flat, nj, nk),
        gamma: to_mat(&gamma_flat, nj, nk),
        h: to_mat(&h_flat, nj, nk),
        t_upper,
        t_lower,
        costs,
    };

    debug_assert!(validate_instance(&spec).ok);
    Ok(spec)
}
