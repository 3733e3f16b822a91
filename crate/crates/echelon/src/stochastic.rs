//! Noise laboratory: additive stochastic perturbation of the solved
//! stage-1 variables.
//!
//! Draws come from streams derived per `(seed, outer, inner, variable)`,
//! so any single cell is replayable in isolation and results are a pure
//! function of the inputs regardless of evaluation order or thread count.
//! The double loop produces `n x n` perturbed copies of the solution; the
//! inner index is averaged per outer replicate, feasibility is flagged per
//! outer replicate on that averaged copy, and the pairwise-product RMS
//! combines the per-replicate means.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::milp::Stage1Solution;
use crate::model::InstanceSpec;
use crate::rng::{self, purpose};

/// Distribution family of the injected noise, with its own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum NoiseFamily {
    Gaussian {
        gaussian_sigma: f64,
    },
    Lognormal {
        lognormal_mu: f64,
        lognormal_sigma: f64,
    },
    Pareto {
        pareto_alpha: f64,
        pareto_xm: f64,
    },
}

/// One noise configuration: family, a global scale applied to every draw,
/// and an optional independent sign flip.
///
/// Raw Lognormal and Pareto draws are strictly positive; the sign flip
/// (on by default) makes the injected noise two-sided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub family: NoiseFamily,
    pub scale: f64,
    #[serde(default = "default_signed")]
    pub signed: bool,
}

fn default_signed() -> bool {
    true
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, scale: f64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Gaussian {
                gaussian_sigma: sigma,
            },
            scale,
            signed: true,
        }
    }

    pub fn lognormal(mu: f64, sigma: f64, scale: f64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Lognormal {
                lognormal_mu: mu,
                lognormal_sigma: sigma,
            },
            scale,
            signed: true,
        }
    }

    pub fn pareto(alpha: f64, xm: f64, scale: f64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Pareto {
                pareto_alpha: alpha,
                pareto_xm: xm,
            },
            scale,
            signed: true,
        }
    }

    /// Scale zero is allowed and turns the noise off entirely.
    pub fn validate(&self) -> Result<(), StochasticError> {
        if !self.scale.is_finite() || self.scale < 0.0 {
            return Err(StochasticError::InvalidNoiseSpec {
                field: "scale",
            });
        }
        match self.family {
            NoiseFamily::Gaussian { gaussian_sigma } => {
                if !gaussian_sigma.is_finite() || gaussian_sigma < 0.0 {
                    return Err(StochasticError::InvalidNoiseSpec {
                        field: "gaussian_sigma",
                    });
                }
            }
            NoiseFamily::Lognormal {
                lognormal_mu,
                lognormal_sigma,
            } => {
                if !lognormal_mu.is_finite() {
                    return Err(StochasticError::InvalidNoiseSpec {
                        field: "lognormal_mu",
                    });
                }
                if !lognormal_sigma.is_finite() || lognormal_sigma < 0.0 {
                    return Err(StochasticError::InvalidNoiseSpec {
                        field: "lognormal_sigma",
                    });
                }
            }
            NoiseFamily::Pareto {
                pareto_alpha,
                pareto_xm,
            } => {
                if !pareto_alpha.is_finite() || pareto_alpha <= 0.0 {
                    return Err(StochasticError::InvalidNoiseSpec {
                        field: "pareto_alpha",
                    });
                }
                if !pareto_xm.is_finite() || pareto_xm <= 0.0 {
                    return Err(StochasticError::InvalidNoiseSpec {
                        field: "pareto_xm",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Errors from the stochastic layer.
#[derive(Debug, Clone, PartialEq)]
pub enum StochasticError {
    InvalidNoiseSpec { field: &'static str },
    /// The double loop needs at least two outer replicates.
    TooFewReplicates { n: usize },
    /// Fewer than two replicates qualify for the RMS combination.
    TooFewFeasible { feasible_count: usize },
    /// The pairwise-product sum is negative (possible with signed noise);
    /// the raw radicand is reported instead of a non-real result.
    NegativeRadicand { radicand: f64 },
}

impl core::fmt::Display for StochasticError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StochasticError::InvalidNoiseSpec { field } => {
                write!(f, "invalid noise spec field {field}")
            }
            StochasticError::TooFewReplicates { n } => {
                write!(f, "ensemble needs n >= 2, got {n}")
            }
            StochasticError::TooFewFeasible { feasible_count } => {
                write!(
                    f,
                    "only {feasible_count} feasible replicates; RMS needs at least 2"
                )
            }
            StochasticError::NegativeRadicand { radicand } => {
                write!(f, "pairwise-product RMS radicand is negative: {radicand}")
            }
        }
    }
}

impl core::error::Error for StochasticError {}

/// Pareto quantile function: `xm * u^(-1/alpha)` for `u` in `(0, 1]`.
/// Values beyond the double range saturate at `f64::MAX` so downstream
/// statistics stay finite.
pub fn pareto_inverse_cdf(u: f64, alpha: f64, xm: f64) -> f64 {
    let v = xm * fmath::powf(u, -1.0 / alpha);
    if v.is_finite() {
        v
    } else {
        f64::MAX
    }
}

/// Draw one noise value. The value uniforms are consumed before the sign
/// uniform, so unsigned and signed draws of the same stream share the
/// magnitude.
pub fn sample_noise(spec: &NoiseSpec, stream: &mut ChaCha8Rng) -> f64 {
    let raw = match spec.family {
        NoiseFamily::Gaussian { gaussian_sigma } => gaussian_sigma * rng::standard_normal(stream),
        NoiseFamily::Lognormal {
            lognormal_mu,
            lognormal_sigma,
        } => {
            let z = rng::standard_normal(stream);
            let v = fmath::exp(lognormal_mu + lognormal_sigma * z);
            if v.is_finite() {
                v
            } else {
                f64::MAX
            }
        }
        NoiseFamily::Pareto {
            pareto_alpha,
            pareto_xm,
        } => pareto_inverse_cdf(rng::uniform_open_closed(stream), pareto_alpha, pareto_xm),
    };
    let mut eta = spec.scale * raw;
    if !eta.is_finite() {
        eta = f64::MAX.copysign(eta);
    }
    if spec.signed {
        let flip = rng::uniform(stream) < 0.5;
        if flip {
            eta = -eta;
        }
    }
    eta
}

/// Variable groups that receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarGroup {
    P,
    Qij,
    Qjk,
}

impl VarGroup {
    fn tag(self) -> u64 {
        match self {
            VarGroup::P => 1,
            VarGroup::Qij => 2,
            VarGroup::Qjk => 3,
        }
    }

    /// Shape of the group for an instance: (rows, cols).
    pub fn shape(self, spec_dims: (usize, usize, usize)) -> (usize, usize) {
        let (ni, nj, nk) = spec_dims;
        match self {
            VarGroup::P => (1, ni),
            VarGroup::Qij => (ni, nj),
            VarGroup::Qjk => (nj, nk),
        }
    }
}

fn cell_stream(seed: u64, e: usize, e_inner: usize, group: VarGroup, a: usize, b: usize) -> ChaCha8Rng {
    rng::stream(
        seed,
        &[
            purpose::NOISE,
            e as u64,
            e_inner as u64,
            group.tag(),
            a as u64,
            b as u64,
        ],
    )
}

/// A full perturbed copy of the stage-1 solution: continuous variables
/// carry independent additive noise, binaries and capacities are the
/// originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSolution {
    pub p: Vec<f64>,
    pub q_ij: Vec<Vec<f64>>,
    pub q_jk: Vec<Vec<f64>>,
    pub eta_p: Vec<f64>,
    pub eta_qij: Vec<Vec<f64>>,
    pub eta_qjk: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub y: Vec<bool>,
    pub x_ij: Vec<Vec<bool>>,
    pub x_jk: Vec<Vec<bool>>,
}

impl PerturbedSolution {
    /// Number of independent noise draws this solution consumed.
    pub fn draws_consumed(&self) -> usize {
        self.eta_p.len()
            + self.eta_qij.iter().map(Vec::len).sum::<usize>()
            + self.eta_qjk.iter().map(Vec::len).sum::<usize>()
    }
}

/// Perturb one `(outer, inner)` cell of the double loop.
pub fn perturb(
    sol: &Stage1Solution,
    noise: &NoiseSpec,
    seed: u64,
    e: usize,
    e_inner: usize,
) -> PerturbedSolution {
    let ni = sol.p.len();
    let nj = sol.w.len();
    let nk = sol.q_jk.first().map_or(0, Vec::len);

    let mut eta_p = Vec::with_capacity(ni);
    let mut p = Vec::with_capacity(ni);
    for i in 0..ni {
        let mut s = cell_stream(seed, e, e_inner, VarGroup::P, i, 0);
        let eta = sample_noise(noise, &mut s);
        eta_p.push(eta);
        p.push(sol.p[i] + eta);
    }

    let mut eta_qij = vec![vec![0.0; nj]; ni];
    let mut q_ij = sol.q_ij.clone();
    for (i, row) in q_ij.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let mut s = cell_stream(seed, e, e_inner, VarGroup::Qij, i, j);
            let eta = sample_noise(noise, &mut s);
            eta_qij[i][j] = eta;
            *v += eta;
        }
    }

    let mut eta_qjk = vec![vec![0.0; nk]; nj];
    let mut q_jk = sol.q_jk.clone();
    for (j, row) in q_jk.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            let mut s = cell_stream(seed, e, e_inner, VarGroup::Qjk, j, k);
            let eta = sample_noise(noise, &mut s);
            eta_qjk[j][k] = eta;
            *v += eta;
        }
    }

    PerturbedSolution {
        p,
        q_ij,
        q_jk,
        eta_p,
        eta_qij,
        eta_qjk,
        w: sol.w.clone(),
        y: sol.y.clone(),
        x_ij: sol.x_ij.clone(),
        x_jk: sol.x_jk.clone(),
    }
}

/// One violated constraint with its residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub constraint: String,
    pub residual: f64,
}

/// Feasibility verdict for a perturbed solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violations: Vec<ConstraintViolation>,
}

/// Evaluate the stage-1 constraints on perturbed values with the original
/// binaries: production bounds, both mass balances, demand cover, flow
/// activation caps and the warehouse capacity pair. Demand cover uses the
/// mean demand as its target; see [`check_feasibility_with_target`] for a
/// nonzero safety factor.
pub fn check_feasibility(
    pert: &PerturbedSolution,
    spec: &InstanceSpec,
    tol: f64,
) -> FeasibilityReport {
    check_feasibility_with_target(pert, spec, tol, 0.0)
}

/// [`check_feasibility`] with demand targets `mu + safety_factor * sigma`
/// matching the stage-1 build.
pub fn check_feasibility_with_target(
    pert: &PerturbedSolution,
    spec: &InstanceSpec,
    tol: f64,
    safety_factor: f64,
) -> FeasibilityReport {
    let (ni, nj, nk) = (spec.n_plants, spec.n_warehouses, spec.n_customers);
    let mut violations = Vec::new();
    let mut record = |constraint: String, residual: f64| {
        if residual > tol {
            violations.push(ConstraintViolation {
                constraint,
                residual: fmath::saturate(residual),
            });
        }
    };

    for i in 0..ni {
        record(
            format!("production_upper_{i}"),
            pert.p[i] - spec.p_upper[i],
        );
        record(
            format!("production_lower_{i}"),
            spec.p_lower[i] - pert.p[i],
        );
        let shipped: f64 = pert.q_ij[i].iter().sum();
        record(format!("plant_balance_{i}"), fmath::abs(pert.p[i] - shipped));
    }
    for j in 0..nj {
        let inflow: f64 = (0..ni).map(|i| pert.q_ij[i][j]).sum();
        let outflow: f64 = pert.q_jk[j].iter().sum();
        record(
            format!("warehouse_balance_{j}"),
            fmath::abs(inflow + spec.inventory[j] - outflow),
        );
        record(
            format!("warehouse_capacity_floor_{j}"),
            spec.a[j] * (inflow + spec.inventory[j]) - pert.w[j],
        );
        let cap = if pert.y[j] { spec.w_upper[j] } else { 0.0 };
        record(format!("warehouse_capacity_cap_{j}"), pert.w[j] - cap);
    }
    for k in 0..nk {
        let delivered: f64 = (0..nj).map(|j| pert.q_jk[j][k]).sum();
        record(
            format!("demand_cover_{k}"),
            spec.demand[k].target(safety_factor) - delivered,
        );
    }
    for i in 0..ni {
        for j in 0..nj {
            let cap = if pert.x_ij[i][j] {
                spec.q_upper_ij[i][j]
            } else {
                0.0
            };
            record(format!("inbound_flow_cap_{i}_{j}"), pert.q_ij[i][j] - cap);
        }
    }
    for j in 0..nj {
        for k in 0..nk {
            let cap = if pert.x_jk[j][k] {
                spec.q_upper_jk[j][k]
            } else {
                0.0
            };
            record(format!("outbound_flow_cap_{j}_{k}"), pert.q_jk[j][k] - cap);
        }
    }

    FeasibilityReport {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Overflow-safe running mean; exact for constant sequences.
fn running_mean(values: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for (idx, &x) in values.iter().enumerate() {
        let k = (idx + 1) as f64;
        let d = x - m;
        if d.is_finite() {
            m += d / k;
        } else {
            m = fmath::saturate(m * ((k - 1.0) / k) + x / k);
        }
    }
    m
}

/// Inner-replicate average of one variable cell (the stored inner count
/// is the normalizer).
pub fn ensemble_mean(replicates: &[f64]) -> f64 {
    assert!(!replicates.is_empty(), "mean of an empty replicate row");
    running_mean(replicates)
}

/// Pairwise-product RMS of the replicate means:
/// `sqrt( sum over unordered pairs of m_a * m_b / C(N, 2) )`.
///
/// The products are prescaled by a power of two so squaring cannot
/// overflow, summed with compensation, and divided exactly; a constant
/// vector comes back as `|c|` bit-for-bit.
pub fn ensemble_rms(means: &[f64]) -> Result<f64, StochasticError> {
    let n = means.len();
    assert!(n >= 2, "RMS needs at least two replicate means");
    let maxabs = means.iter().fold(0.0f64, |a, &v| a.max(fmath::abs(v)));
    if maxabs == 0.0 {
        return Ok(0.0);
    }
    let shift = fmath::exponent_of(maxabs);
    let scaled: Vec<f64> = means
        .iter()
        .map(|&v| fmath::scale_by_pow2(v, -shift))
        .collect();

    // Neumaier-compensated sum of all unordered pair products.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for a in 0..n {
        for b in (a + 1)..n {
            let term = scaled[a] * scaled[b];
            let t = sum + term;
            if fmath::abs(sum) >= fmath::abs(term) {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    // Divide the compensated sum exactly enough that a constant input
    // yields its own square back.
    let hi = sum / pairs;
    let resid = libm::fma(-hi, pairs, sum) + comp;
    let radicand = hi + resid / pairs;

    if radicand < 0.0 {
        return Err(StochasticError::NegativeRadicand {
            radicand: fmath::saturate(fmath::scale_by_pow2(radicand, 2 * shift)),
        });
    }
    Ok(fmath::saturate(fmath::scale_by_pow2(
        fmath::sqrt(radicand),
        shift,
    )))
}

/// Ensemble controls beyond the noise spec itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleOptions {
    /// Outer replicate count (the inner loop reuses it).
    pub n: usize,
    pub seed: u64,
    /// Residual tolerance of the per-replicate feasibility check.
    pub feasibility_tol: f64,
    /// Include infeasible replicates in means and RMS (kept in the
    /// tensors either way).
    pub include_infeasible: bool,
    /// Safety factor of the demand targets used by the check.
    pub safety_factor: f64,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            n: 50,
            seed: 0,
            feasibility_tol: 1e-6,
            include_infeasible: false,
            safety_factor: 0.0,
        }
    }
}

/// Feasibility status of one outer replicate (judged on its inner-mean
/// solution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplicateStatus {
    Feasible,
    Infeasible { violations: usize, max_residual: f64 },
}

/// Raw replicate values of one variable group, flattened
/// `[outer][inner][cell]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTensor {
    pub cells: usize,
    pub values: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateTensors {
    pub n_outer: usize,
    pub n_inner: usize,
    pub p: GroupTensor,
    pub qij: GroupTensor,
    pub qjk: GroupTensor,
}

/// Everything produced for one outer replicate. Public so ensembles can
/// be evaluated in parallel (or injected by tests) and assembled with
/// [`NoiseEnsemble::from_replicates`].
#[derive(Debug, Clone, PartialEq)]
pub struct OuterReplicate {
    pub e: usize,
    /// `n_inner x cells` rows per group.
    pub p_rows: Vec<f64>,
    pub qij_rows: Vec<f64>,
    pub qjk_rows: Vec<f64>,
    pub eta_p_rows: Vec<f64>,
    pub eta_qij_rows: Vec<f64>,
    pub eta_qjk_rows: Vec<f64>,
    /// Inner-mean per cell, per group.
    pub mean_p: Vec<f64>,
    pub mean_qij: Vec<f64>,
    pub mean_qjk: Vec<f64>,
    pub status: ReplicateStatus,
}

/// Evaluate one outer replicate of the double loop.
pub fn evaluate_outer_replicate(
    spec: &InstanceSpec,
    sol: &Stage1Solution,
    noise: &NoiseSpec,
    opts: &EnsembleOptions,
    e: usize,
) -> OuterReplicate {
    let (ni, nj, nk) = (spec.n_plants, spec.n_warehouses, spec.n_customers);
    let (cp, cij, cjk) = (ni, ni * nj, nj * nk);
    let n = opts.n;

    let mut rep = OuterReplicate {
        e,
        p_rows: Vec::with_capacity(n * cp),
        qij_rows: Vec::with_capacity(n * cij),
        qjk_rows: Vec::with_capacity(n * cjk),
        eta_p_rows: Vec::with_capacity(n * cp),
        eta_qij_rows: Vec::with_capacity(n * cij),
        eta_qjk_rows: Vec::with_capacity(n * cjk),
        mean_p: vec![0.0; cp],
        mean_qij: vec![0.0; cij],
        mean_qjk: vec![0.0; cjk],
        status: ReplicateStatus::Feasible,
    };

    for e_inner in 0..n {
        let pert = perturb(sol, noise, opts.seed, e, e_inner);
        rep.p_rows.extend_from_slice(&pert.p);
        rep.eta_p_rows.extend_from_slice(&pert.eta_p);
        for row in &pert.q_ij {
            rep.qij_rows.extend_from_slice(row);
        }
        for row in &pert.eta_qij {
            rep.eta_qij_rows.extend_from_slice(row);
        }
        for row in &pert.q_jk {
            rep.qjk_rows.extend_from_slice(row);
        }
        for row in &pert.eta_qjk {
            rep.eta_qjk_rows.extend_from_slice(row);
        }
    }

    let col_mean = |rows: &[f64], cells: usize, cell: usize| -> f64 {
        let column: Vec<f64> = (0..n).map(|r| rows[r * cells + cell]).collect();
        running_mean(&column)
    };
    for c in 0..cp {
        rep.mean_p[c] = col_mean(&rep.p_rows, cp, c);
    }
    for c in 0..cij {
        rep.mean_qij[c] = col_mean(&rep.qij_rows, cij, c);
    }
    for c in 0..cjk {
        rep.mean_qjk[c] = col_mean(&rep.qjk_rows, cjk, c);
    }

    // Judge feasibility on the inner-mean solution.
    let mean_solution = PerturbedSolution {
        p: rep.mean_p.clone(),
        q_ij: (0..ni)
            .map(|i| rep.mean_qij[i * nj..(i + 1) * nj].to_vec())
            .collect(),
        q_jk: (0..nj)
            .map(|j| rep.mean_qjk[j * nk..(j + 1) * nk].to_vec())
            .collect(),
        eta_p: vec![0.0; cp],
        eta_qij: vec![vec![0.0; nj]; ni],
        eta_qjk: vec![vec![0.0; nk]; nj],
        w: sol.w.clone(),
        y: sol.y.clone(),
        x_ij: sol.x_ij.clone(),
        x_jk: sol.x_jk.clone(),
    };
    let report = check_feasibility_with_target(
        &mean_solution,
        spec,
        opts.feasibility_tol,
        opts.safety_factor,
    );
    rep.status = if report.feasible {
        ReplicateStatus::Feasible
    } else {
        ReplicateStatus::Infeasible {
            violations: report.violations.len(),
            max_residual: report
                .violations
                .iter()
                .fold(0.0, |a, v| a.max(v.residual)),
        }
    };
    rep
}

/// Per-group RMS outcome; a negative radicand is reported, not hidden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RmsOutcome {
    Value { rms: f64 },
    NegativeRadicand { radicand: f64 },
}

/// Aggregated noise ensemble: replicate tensors, per-replicate means,
/// feasibility counter and per-group RMS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnsemble {
    pub n: usize,
    pub dims: (usize, usize, usize),
    pub include_infeasible: bool,
    /// Inner means per outer replicate, `[e][cell]`.
    pub mean_p: Vec<Vec<f64>>,
    pub mean_qij: Vec<Vec<f64>>,
    pub mean_qjk: Vec<Vec<f64>>,
    pub feasible: Vec<bool>,
    pub feasible_count: usize,
    pub statuses: Vec<ReplicateStatus>,
    /// RMS of the per-replicate group means (cell-averaged trace).
    pub rms_p: RmsOutcome,
    pub rms_qij: RmsOutcome,
    pub rms_qjk: RmsOutcome,
    /// Full replicate tensors, kept for diagnostics and binary dumps.
    #[serde(skip)]
    pub tensors: Option<ReplicateTensors>,
}

impl NoiseEnsemble {
    /// Outer replicates that participate in means and RMS.
    pub fn included(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&e| self.include_infeasible || self.feasible[e])
            .collect()
    }

    pub fn included_count(&self) -> usize {
        if self.include_infeasible {
            self.n
        } else {
            self.feasible_count
        }
    }

    /// Grand per-cell mean over the included replicates, or `None` when
    /// nothing is included.
    pub fn grand_mean(&self, group: VarGroup) -> Option<Vec<f64>> {
        let included = self.included();
        if included.is_empty() {
            return None;
        }
        let means = match group {
            VarGroup::P => &self.mean_p,
            VarGroup::Qij => &self.mean_qij,
            VarGroup::Qjk => &self.mean_qjk,
        };
        let cells = means[0].len();
        let mut out = vec![0.0; cells];
        for (c, slot) in out.iter_mut().enumerate() {
            let column: Vec<f64> = included.iter().map(|&e| means[e][c]).collect();
            *slot = running_mean(&column);
        }
        Some(out)
    }

    /// Assemble an ensemble from evaluated outer replicates. This is also
    /// the injection point for tests and for parallel evaluation.
    pub fn from_replicates(
        dims: (usize, usize, usize),
        opts: &EnsembleOptions,
        replicates: Vec<OuterReplicate>,
    ) -> Result<NoiseEnsemble, StochasticError> {
        let n = replicates.len();
        if n < 2 {
            return Err(StochasticError::TooFewReplicates { n });
        }
        let (ni, nj, nk) = dims;
        let (cp, cij, cjk) = (ni, ni * nj, nj * nk);

        let mut tensors = ReplicateTensors {
            n_outer: n,
            n_inner: opts.n,
            p: GroupTensor {
                cells: cp,
                values: Vec::with_capacity(n * opts.n * cp),
                eta: Vec::with_capacity(n * opts.n * cp),
            },
            qij: GroupTensor {
                cells: cij,
                values: Vec::with_capacity(n * opts.n * cij),
                eta: Vec::with_capacity(n * opts.n * cij),
            },
            qjk: GroupTensor {
                cells: cjk,
                values: Vec::with_capacity(n * opts.n * cjk),
                eta: Vec::with_capacity(n * opts.n * cjk),
            },
        };

        let mut mean_p = Vec::with_capacity(n);
        let mut mean_qij = Vec::with_capacity(n);
        let mut mean_qjk = Vec::with_capacity(n);
        let mut feasible = Vec::with_capacity(n);
        let mut statuses = Vec::with_capacity(n);
        for rep in replicates {
            tensors.p.values.extend_from_slice(&rep.p_rows);
            tensors.p.eta.extend_from_slice(&rep.eta_p_rows);
            tensors.qij.values.extend_from_slice(&rep.qij_rows);
            tensors.qij.eta.extend_from_slice(&rep.eta_qij_rows);
            tensors.qjk.values.extend_from_slice(&rep.qjk_rows);
            tensors.qjk.eta.extend_from_slice(&rep.eta_qjk_rows);
            mean_p.push(rep.mean_p);
            mean_qij.push(rep.mean_qij);
            mean_qjk.push(rep.mean_qjk);
            feasible.push(rep.status == ReplicateStatus::Feasible);
            statuses.push(rep.status);
        }
        let feasible_count = feasible.iter().filter(|&&f| f).count();

        let included: Vec<usize> = (0..n)
            .filter(|&e| opts.include_infeasible || feasible[e])
            .collect();
        if included.len() < 2 {
            return Err(StochasticError::TooFewFeasible {
                feasible_count,
            });
        }

        let group_rms = |means: &[Vec<f64>]| -> RmsOutcome {
            let trace: Vec<f64> = included
                .iter()
                .map(|&e| running_mean(&means[e]))
                .collect();
            match ensemble_rms(&trace) {
                Ok(rms) => RmsOutcome::Value { rms },
                Err(StochasticError::NegativeRadicand { radicand }) => {
                    RmsOutcome::NegativeRadicand { radicand }
                }
                Err(_) => unreachable!("trace length checked above"),
            }
        };
        let rms_p = group_rms(&mean_p);
        let rms_qij = group_rms(&mean_qij);
        let rms_qjk = group_rms(&mean_qjk);

        Ok(NoiseEnsemble {
            n,
            dims,
            include_infeasible: opts.include_infeasible,
            mean_p,
            mean_qij,
            mean_qjk,
            feasible,
            feasible_count,
            statuses,
            rms_p,
            rms_qij,
            rms_qjk,
            tensors: Some(tensors),
        })
    }

    /// Release the raw tensors (the summary statistics stay).
    pub fn drop_tensors(&mut self) {
        self.tensors = None;
    }
}

/// Run the full double loop sequentially.
pub fn run_ensemble(
    spec: &InstanceSpec,
    sol: &Stage1Solution,
    noise: &NoiseSpec,
    opts: &EnsembleOptions,
) -> Result<NoiseEnsemble, StochasticError> {
    noise.validate()?;
    if opts.n < 2 {
        return Err(StochasticError::TooFewReplicates { n: opts.n });
    }
    let replicates: Vec<OuterReplicate> = (0..opts.n)
        .map(|e| evaluate_outer_replicate(spec, sol, noise, opts, e))
        .collect();
    NoiseEnsemble::from_replicates(
        (spec.n_plants, spec.n_warehouses, spec.n_customers),
        opts,
        replicates,
    )
}
