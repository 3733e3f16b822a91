//! Deterministic second stage: realized-demand deficits, threshold
//! regimes, warehouse recovery production, stockout/overstock
//! probabilities, expected lead times and the augmented total cost.
//!
//! The stage never reroutes the solved network; it only augments it with
//! recovery production at warehouses that are already open.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::milp::Stage1Solution;
use crate::model::InstanceSpec;
use crate::rng::{self, purpose};

// ---------------------------------------------------------------------
// Error function.
//
// Rational minimax approximation over five ranges, following FreeBSD's
// msun s_erf.c (the same scheme libm and Go use); accurate to about one
// ulp, comfortably below the 1e-12 contract of the probability formulas.
// ---------------------------------------------------------------------

const ERX: f64 = 8.45062911510467529297e-01;

const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

/// Error function. Odd by construction; `|erf(x) - truth| <= 1e-12` over
/// the working range.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return -1.0;
    }
    let sign = x < 0.0;
    let x = fmath::abs(x);

    let result = if x < 0.84375 {
        if x < 3.725290298461914e-9 {
            // below 2^-28 the linear term suffices
            if x < 2.848094538889218e-306 {
                0.125 * (8.0 * x + EFX8 * x)
            } else {
                x + EFX * x
            }
        } else {
            let z = x * x;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            x + x * (r / s)
        }
    } else if x < 1.25 {
        let s = x - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        ERX + p / q
    } else if x >= 6.0 {
        1.0
    } else {
        let s = 1.0 / (x * x);
        let (r, q) = if x < 1.0 / 0.35 {
            (
                RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
                1.0 + s
                    * (SA1
                        + s * (SA2
                            + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
            )
        } else {
            (
                RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
                1.0 + s
                    * (SB1
                        + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
            )
        };
        // Split x into a 20-bit head for the exact part of exp(-x^2).
        let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
        let tail = fmath::exp(-z * z - 0.5625) * fmath::exp((z - x) * (z + x) + r / q);
        1.0 - tail / x
    };
    if sign {
        -result
    } else {
        result
    }
}

// ---------------------------------------------------------------------
// Deficits and regimes.
// ---------------------------------------------------------------------

/// Whether the realized demand exceeded the delivered quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeficitSign {
    Shortage,
    Surplus,
}

/// Rule that splits customers into the low/high insufficiency regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Low regime when the deficit is at most the midpoint of the deficit
    /// range.
    #[default]
    Midpoint,
    /// Low regime when the deficit is at most the mean deficit.
    Mean,
}

/// Per-customer deficit magnitudes, regime split and spread statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitProfile {
    /// Absolute mismatch between realized demand and delivery.
    pub delta: Vec<f64>,
    pub delta_lo: f64,
    pub delta_mid: f64,
    pub delta_hi: f64,
    /// Low-insufficiency regime flags.
    pub lambda: Vec<bool>,
    /// High-insufficiency regime flags (complement of `lambda`).
    pub zeta: Vec<bool>,
    /// Mean deficit across customers.
    pub delta_bar: f64,
    /// Sample standard deviation of the deficits (divisor n-1).
    pub sigma_delta: f64,
    pub sign: Vec<DeficitSign>,
    /// All deficits equal; the low regime is assigned by convention.
    pub degenerate: bool,
}

/// Compute deficits and regime flags for one demand realization.
///
/// When every deficit is equal the range collapses and the split is
/// undefined; by convention every customer lands in the low regime and
/// the profile is marked degenerate.
pub fn compute_deficits(
    sol: &Stage1Solution,
    realized_demand: &[f64],
    rule: ThresholdRule,
) -> DeficitProfile {
    let nk = realized_demand.len();
    assert!(nk > 0, "at least one customer required");

    let mut delta = Vec::with_capacity(nk);
    let mut sign = Vec::with_capacity(nk);
    for (k, &d) in realized_demand.iter().enumerate() {
        let delivered = sol.delivered(k);
        delta.push(fmath::abs(d - delivered));
        sign.push(if d > delivered {
            DeficitSign::Shortage
        } else {
            DeficitSign::Surplus
        });
    }

    let delta_lo = delta.iter().copied().fold(f64::INFINITY, f64::min);
    let delta_hi = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let delta_mid = 0.5 * (delta_lo + delta_hi);
    let delta_bar = delta.iter().sum::<f64>() / nk as f64;
    let sigma_delta = if nk > 1 {
        let ss: f64 = delta.iter().map(|&d| (d - delta_bar) * (d - delta_bar)).sum();
        fmath::sqrt(ss / (nk - 1) as f64)
    } else {
        0.0
    };

    let degenerate = delta_hi - delta_lo <= 0.0;
    let threshold = match rule {
        ThresholdRule::Midpoint => delta_mid,
        ThresholdRule::Mean => delta_bar,
    };
    let lambda: Vec<bool> = if degenerate {
        vec![true; nk]
    } else {
        delta.iter().map(|&d| d <= threshold).collect()
    };
    let zeta: Vec<bool> = lambda.iter().map(|&l| !l).collect();

    DeficitProfile {
        delta,
        delta_lo,
        delta_mid,
        delta_hi,
        lambda,
        zeta,
        delta_bar,
        sigma_delta,
        sign,
        degenerate,
    }
}

// ---------------------------------------------------------------------
// Recovery production.
// ---------------------------------------------------------------------

/// Warehouse activations and recovery quantities per customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    /// Low-regime activation of warehouse j for customer k.
    pub kq: Vec<Vec<bool>>,
    /// High-regime activation of warehouse j for customer k.
    pub omega: Vec<Vec<bool>>,
    /// Low-regime recovery production quantities.
    pub r: Vec<Vec<f64>>,
    /// High-regime recovery production quantities.
    pub e: Vec<Vec<f64>>,
    /// Low-regime covered deficit per customer.
    pub qu: Vec<f64>,
    /// High-regime covered deficit per customer.
    pub qo: Vec<f64>,
    /// Number of customers whose deficit had to be clamped into its
    /// regime interval (possible under the mean threshold rule).
    pub clamp_events: usize,
}

/// Errors from the recovery stage.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage2Error {
    /// A deficit exists but the network opened no warehouse.
    NoWarehouseOpen { customer: usize },
}

impl core::fmt::Display for Stage2Error {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Stage2Error::NoWarehouseOpen { customer } => write!(
                f,
                "customer {customer} has a deficit but no warehouse is open"
            ),
        }
    }
}

impl core::error::Error for Stage2Error {}

/// Assign each deficit to the single open warehouse with the cheapest
/// marginal recovery cost and set the recovery quantities.
pub fn plan_recovery(
    spec: &InstanceSpec,
    sol: &Stage1Solution,
    profile: &DeficitProfile,
) -> Result<RecoveryPlan, Stage2Error> {
    let nj = spec.n_warehouses;
    let nk = spec.n_customers;
    let mut plan = RecoveryPlan {
        kq: vec![vec![false; nk]; nj],
        omega: vec![vec![false; nk]; nj],
        r: vec![vec![0.0; nk]; nj],
        e: vec![vec![0.0; nk]; nj],
        qu: vec![0.0; nk],
        qo: vec![0.0; nk],
        clamp_events: 0,
    };

    for k in 0..nk {
        let deficit = profile.delta[k];
        if deficit <= 0.0 {
            continue;
        }
        if !sol.any_warehouse_open() {
            return Err(Stage2Error::NoWarehouseOpen { customer: k });
        }
        let low = profile.lambda[k];
        // Cheapest open warehouse by marginal cost of its recovery term.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..nj {
            if !sol.y[j] {
                continue;
            }
            let cost = if low {
                spec.costs.c_pu[j][k] * spec.gamma[j][k] * spec.h[j][k]
            } else {
                spec.costs.c_po[j][k] * spec.beta[j][k] * (spec.inventory[j] + deficit)
            };
            match best {
                Some((_, c)) if c <= cost => {}
                _ => best = Some((j, cost)),
            }
        }
        let (j, _) = best.expect("an open warehouse exists");
        if low {
            plan.kq[j][k] = true;
            plan.r[j][k] = spec.gamma[j][k] * spec.h[j][k];
            let clamped = deficit.max(profile.delta_lo).min(profile.delta_mid);
            if clamped != deficit {
                plan.clamp_events += 1;
            }
            plan.qu[k] = clamped;
        } else {
            plan.omega[j][k] = true;
            plan.e[j][k] = spec.beta[j][k] * (spec.inventory[j] + deficit);
            let clamped = deficit.max(profile.delta_mid).min(profile.delta_hi);
            if clamped != deficit {
                plan.clamp_events += 1;
            }
            plan.qo[k] = clamped;
        }
    }
    Ok(plan)
}

// ---------------------------------------------------------------------
// Probabilities, lead time, cost.
// ---------------------------------------------------------------------

/// Stockout/overstock probability pair for one customer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StockoutProb {
    pub p_under: f64,
    pub p_over: f64,
    /// Set when sigma is zero and the probability collapses to a step.
    pub degenerate_sigma: bool,
}

/// Stockout probability from the normal demand model:
/// `p_under = (1 + erf((qu - delta_mean) / (sigma * sqrt(2)))) / 2` and
/// `p_over = 1 - p_under`.
///
/// With `sigma == 0` the distribution collapses; the step function value
/// is returned and flagged.
pub fn stockout_probabilities(qu: f64, delta_mean: f64, sigma: f64) -> StockoutProb {
    if sigma == 0.0 {
        let p_under = if qu < delta_mean {
            0.0
        } else if qu > delta_mean {
            1.0
        } else {
            0.5
        };
        return StockoutProb {
            p_under,
            p_over: 1.0 - p_under,
            degenerate_sigma: true,
        };
    }
    let p_under = 0.5 * (1.0 + erf((qu - delta_mean) / (sigma * core::f64::consts::SQRT_2)));
    StockoutProb {
        p_under,
        p_over: 1.0 - p_under,
        degenerate_sigma: false,
    }
}

/// Expected lead time of one customer: the delivery-time bound weighted
/// by the probability of its regime. Exactly one term survives because
/// the regimes are mutually exclusive.
pub fn expected_lead_time(
    lambda: bool,
    p_under: f64,
    p_over: f64,
    t_lower: f64,
    t_upper: f64,
) -> f64 {
    if lambda {
        t_lower * p_under
    } else {
        t_upper * p_over
    }
}

/// Augmented total cost: stage-1 cost plus both recovery production terms
/// plus the lead-time penalty weighted by the deficit spread.
pub fn total_cost_stage2(
    tc: f64,
    plan: &RecoveryPlan,
    profile: &DeficitProfile,
    eld: &[f64],
    spec: &InstanceSpec,
) -> f64 {
    let mut total = tc;
    for j in 0..spec.n_warehouses {
        for k in 0..spec.n_customers {
            total += spec.costs.c_po[j][k] * plan.e[j][k];
            total += spec.costs.c_pu[j][k] * plan.r[j][k];
        }
    }
    for &l in eld {
        total += profile.sigma_delta * fmath::sqrt(l);
    }
    total
}

// ---------------------------------------------------------------------
// Orchestration.
// ---------------------------------------------------------------------

/// How realized demand is produced for the deficit computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DemandRealization {
    /// Draw once from the per-customer normal distribution (negative
    /// draws are clamped to zero).
    Sampled { seed: u64 },
    /// Use the mean demand directly; deficits then measure only the
    /// safety-factor slack.
    MeanOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Options {
    pub threshold_rule: ThresholdRule,
    pub realization: DemandRealization,
}

impl Default for Stage2Options {
    fn default() -> Self {
        Stage2Options {
            threshold_rule: ThresholdRule::Midpoint,
            realization: DemandRealization::Sampled { seed: 0 },
        }
    }
}

/// Full second-stage report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub realized_demand: Vec<f64>,
    pub profile: DeficitProfile,
    pub plan: RecoveryPlan,
    pub p_under: Vec<f64>,
    pub p_over: Vec<f64>,
    /// Per-customer sigma-collapse flags from the probability model.
    pub degenerate_sigma: Vec<bool>,
    /// Per-customer expected shortfall `|mu - delivered|` used as the
    /// location parameter of the probability model.
    pub expected_shortfall: Vec<f64>,
    pub eld: Vec<f64>,
    pub tc1: f64,
}

/// Draw the demand realization for a solved instance.
pub fn realize_demand(spec: &InstanceSpec, realization: DemandRealization) -> Vec<f64> {
    match realization {
        DemandRealization::MeanOnly => spec.demand.iter().map(|d| d.mu).collect(),
        DemandRealization::Sampled { seed } => spec
            .demand
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let mut stream = rng::stream(seed, &[purpose::DEMAND_REALIZATION, k as u64]);
                (d.mu + d.sigma * rng::standard_normal(&mut stream)).max(0.0)
            })
            .collect(),
    }
}

/// Run the whole second stage on a stage-1 solution.
pub fn run_stage2(
    spec: &InstanceSpec,
    sol: &Stage1Solution,
    opts: &Stage2Options,
) -> Result<Stage2Report, Stage2Error> {
    let realized = realize_demand(spec, opts.realization);
    let profile = compute_deficits(sol, &realized, opts.threshold_rule);
    let plan = plan_recovery(spec, sol, &profile)?;

    let nk = spec.n_customers;
    let mut p_under = Vec::with_capacity(nk);
    let mut p_over = Vec::with_capacity(nk);
    let mut degenerate_sigma = Vec::with_capacity(nk);
    let mut expected_shortfall = Vec::with_capacity(nk);
    for k in 0..nk {
        let shortfall = fmath::abs(spec.demand[k].mu - sol.delivered(k));
        let prob = stockout_probabilities(plan.qu[k], shortfall, spec.demand[k].sigma);
        p_under.push(prob.p_under);
        p_over.push(prob.p_over);
        degenerate_sigma.push(prob.degenerate_sigma);
        expected_shortfall.push(shortfall);
    }

    let eld: Vec<f64> = (0..nk)
        .map(|k| {
            expected_lead_time(
                profile.lambda[k],
                p_under[k],
                p_over[k],
                spec.t_lower,
                spec.t_upper,
            )
        })
        .collect();

    let tc1 = total_cost_stage2(sol.tc, &plan, &profile, &eld, spec);

    Ok(Stage2Report {
        realized_demand: realized,
        profile,
        plan,
        p_under,
        p_over,
        degenerate_sigma,
        expected_shortfall,
        eld,
        tc1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::SolveStatus;
    use crate::model::{generate_instance, CostParams, GenerationRanges};

    /// Independent erf oracle: Maclaurin series on [0, 2.5], Lentz
    /// continued fraction for the complementary function beyond.
    fn erf_oracle(x: f64) -> f64 {
        if x < 0.0 {
            return -erf_oracle(-x);
        }
        if x <= 2.5 {
            let mut term = x;
            let mut sum = x;
            let mut n = 0usize;
            while term.abs() > 1e-22 * sum.abs().max(1.0) {
                n += 1;
                term *= -x * x / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            return 2.0 / libm::sqrt(core::f64::consts::PI) * sum;
        }
        // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
        let mut f = x;
        let mut c = x;
        let mut d = 0.0f64;
        let tiny = 1e-300;
        for i in 1..200 {
            let a = i as f64 / 2.0;
            d = x + a * d;
            if d == 0.0 {
                d = tiny;
            }
            c = x + a / c;
            if c == 0.0 {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-18 {
                break;
            }
        }
        let erfc = libm::exp(-x * x) / libm::sqrt(core::f64::consts::PI) / f;
        1.0 - erfc
    }

    fn tiny_sol(q_jk: Vec<Vec<f64>>, y: Vec<bool>) -> Stage1Solution {
        let nj = q_jk.len();
        let nk = q_jk[0].len();
        Stage1Solution {
            p: vec![0.0],
            q_ij: vec![vec![0.0; nj]],
            q_jk,
            w: vec![0.0; nj],
            y,
            x_ij: vec![vec![false; nj]],
            x_jk: vec![vec![false; nk]; nj],
            tc: 0.0,
            status: SolveStatus::Optimal,
            gap: 0.0,
        }
    }

    #[test]
    fn erf_fixed_points() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-15);
        assert_eq!(erf(-2.0), -erf(2.0));
        assert_eq!(erf(f64::INFINITY), 1.0);
        assert_eq!(erf(f64::NEG_INFINITY), -1.0);
    }

    #[test]
    fn erf_matches_series_oracle() {
        for i in 0..=1200 {
            let x = -6.0 + 12.0 * i as f64 / 1200.0;
            let got = erf(x);
            let want = erf_oracle(x);
            assert!(
                (got - want).abs() <= 1e-12,
                "x={x}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn deficit_midpoint_split() {
        let sol = tiny_sol(vec![vec![0.0, 0.0]], vec![true]);
        let profile = compute_deficits(&sol, &[10.0, 30.0], ThresholdRule::Midpoint);
        assert_eq!(profile.delta, vec![10.0, 30.0]);
        assert_eq!(profile.delta_mid, 20.0);
        assert_eq!(profile.lambda, vec![true, false]);
        assert_eq!(profile.zeta, vec![false, true]);
        assert!(!profile.degenerate);
    }

    #[test]
    fn deficit_degenerate_convention() {
        let sol = tiny_sol(vec![vec![5.0, 7.0]], vec![true]);
        let profile = compute_deficits(&sol, &[5.0, 7.0], ThresholdRule::Midpoint);
        assert!(profile.degenerate);
        assert!(profile.lambda.iter().all(|&l| l));
        assert_eq!(profile.sigma_delta, 0.0);
    }

    #[test]
    fn deficit_sample_stddev() {
        let sol = tiny_sol(vec![vec![0.0, 0.0]], vec![true]);
        let profile = compute_deficits(&sol, &[0.0, 2.0], ThresholdRule::Midpoint);
        assert_eq!(profile.delta_bar, 1.0);
        assert!((profile.sigma_delta - libm::sqrt(2.0)).abs() < 1e-15);
    }

    fn recovery_fixture() -> (InstanceSpec, Stage1Solution) {
        let mut spec = generate_instance(1, 1, 2, 1, &GenerationRanges::default()).unwrap();
        spec.costs = CostParams {
            c_prod: vec![0.0],
            c_var_ij: vec![vec![0.0; 2]],
            c_fix_ij: vec![vec![0.0; 2]],
            c_var_jk: vec![vec![0.0]; 2],
            c_fix_jk: vec![vec![0.0]; 2],
            c_install: vec![0.0; 2],
            c_po: vec![vec![1.0], vec![1.0]],
            c_pu: vec![vec![1.0], vec![1.0]],
        };
        let sol = Stage1Solution {
            p: vec![0.0],
            q_ij: vec![vec![0.0; 2]],
            q_jk: vec![vec![0.0], vec![0.0]],
            w: vec![0.0; 2],
            y: vec![true, true],
            x_ij: vec![vec![false; 2]],
            x_jk: vec![vec![false]; 2],
            tc: 0.0,
            status: SolveStatus::Optimal,
            gap: 0.0,
        };
        (spec, sol)
    }

    #[test]
    fn recovery_picks_cheapest_open_warehouse() {
        let (mut spec, sol) = recovery_fixture();
        // Marginal low-regime costs: warehouse 0 -> 5, warehouse 1 -> 7.
        spec.gamma = vec![vec![0.5], vec![0.5]];
        spec.h = vec![vec![10.0], vec![14.0]];
        spec.costs.c_pu = vec![vec![1.0], vec![1.0]];
        let profile = compute_deficits(&sol, &[4.0], ThresholdRule::Midpoint);
        assert!(profile.lambda[0]);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        assert!(plan.kq[0][0]);
        assert!(!plan.kq[1][0]);
        assert_eq!(plan.r[0][0], 5.0);
    }

    #[test]
    fn recovery_quantity_formulas() {
        let (mut spec, mut sol) = recovery_fixture();
        // Low regime: r = gamma * h = 0.5 * 40 = 20.
        spec.gamma = vec![vec![0.5], vec![0.5]];
        spec.h = vec![vec![40.0], vec![40.0]];
        let profile = compute_deficits(&sol, &[4.0], ThresholdRule::Midpoint);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        let r: f64 = plan.r.iter().flatten().sum();
        assert_eq!(r, 20.0);

        // High regime: e = beta * (inventory + deficit) = 0.2 * 150 = 30.
        spec.beta = vec![vec![0.2], vec![0.2]];
        spec.inventory = vec![100.0, 100.0];
        // Two customers would be needed for a non-degenerate split; force
        // the high regime by flipping the profile directly.
        sol.q_jk = vec![vec![0.0], vec![0.0]];
        let mut profile = compute_deficits(&sol, &[50.0], ThresholdRule::Midpoint);
        profile.lambda[0] = false;
        profile.zeta[0] = true;
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        let e: f64 = plan.e.iter().flatten().sum();
        assert_eq!(e, 30.0);
    }

    #[test]
    fn recovery_zero_deficit_is_empty() {
        let (spec, sol) = recovery_fixture();
        let profile = compute_deficits(&sol, &[0.0], ThresholdRule::Midpoint);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        assert!(plan.r.iter().flatten().all(|&v| v == 0.0));
        assert!(plan.e.iter().flatten().all(|&v| v == 0.0));
        assert!(plan.qu.iter().all(|&v| v == 0.0));
        assert!(plan.qo.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recovery_requires_open_warehouse() {
        let (spec, mut sol) = recovery_fixture();
        sol.y = vec![false, false];
        let profile = compute_deficits(&sol, &[4.0], ThresholdRule::Midpoint);
        match plan_recovery(&spec, &sol, &profile) {
            Err(Stage2Error::NoWarehouseOpen { customer: 0 }) => {}
            other => panic!("expected NoWarehouseOpen, got {other:?}"),
        }
    }

    #[test]
    fn probability_identities() {
        let p = stockout_probabilities(5.0, 5.0, 2.0);
        assert_eq!(p.p_under, 0.5);
        assert_eq!(p.p_under + p.p_over, 1.0);

        let sigma = 2.0;
        let p = stockout_probabilities(5.0 + sigma * core::f64::consts::SQRT_2, 5.0, sigma);
        assert!((p.p_under - 0.5 * (1.0 + erf(1.0))).abs() < 1e-15);
        assert!((p.p_under - 0.92135).abs() < 1e-5);

        for i in 0..100 {
            let qu = i as f64 * 0.37 - 20.0;
            let p = stockout_probabilities(qu, 3.0, 1.7);
            assert_eq!(p.p_under + p.p_over, 1.0);
        }
    }

    #[test]
    fn zero_sigma_step() {
        assert_eq!(stockout_probabilities(1.0, 2.0, 0.0).p_under, 0.0);
        assert_eq!(stockout_probabilities(2.0, 2.0, 0.0).p_under, 0.5);
        assert_eq!(stockout_probabilities(3.0, 2.0, 0.0).p_under, 1.0);
        assert!(stockout_probabilities(1.0, 2.0, 0.0).degenerate_sigma);
    }

    #[test]
    fn lead_time_single_term() {
        assert_eq!(expected_lead_time(true, 0.5, 0.5, 2.0, 8.0), 1.0);
        assert_eq!(expected_lead_time(false, 0.75, 0.25, 2.0, 8.0), 2.0);
        // Bounded by the larger delivery time over random inputs.
        let mut stream = crate::rng::stream(9, &[99]);
        for _ in 0..1000 {
            let p = crate::rng::uniform(&mut stream);
            let lam = crate::rng::uniform(&mut stream) < 0.5;
            let t_l = 5.0 * crate::rng::uniform(&mut stream);
            let t_u = t_l + 5.0 * crate::rng::uniform(&mut stream);
            let eld = expected_lead_time(lam, p, 1.0 - p, t_l, t_u);
            assert!(eld >= 0.0 && eld <= t_u.max(t_l) + 1e-12);
        }
    }

    #[test]
    fn tc1_terms() {
        let (mut spec, sol) = recovery_fixture();
        spec.costs.c_po = vec![vec![2.0], vec![2.0]];
        let profile = compute_deficits(&sol, &[0.0], ThresholdRule::Midpoint);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        // No deficits: every stage-2 term vanishes.
        assert_eq!(total_cost_stage2(123.0, &plan, &profile, &[0.0], &spec), 123.0);

        // One recovery term of 30 units at unit cost 2 on top of tc=100.
        let mut plan2 = plan.clone();
        plan2.e[0][0] = 30.0;
        let mut profile2 = profile.clone();
        profile2.sigma_delta = 0.0;
        assert_eq!(
            total_cost_stage2(100.0, &plan2, &profile2, &[4.0], &spec),
            160.0
        );
    }

    #[test]
    fn full_stage2_pipeline_tc1_dominates_tc() {
        for seed in 0..10 {
            let spec = generate_instance(seed, 2, 2, 3, &GenerationRanges::default()).unwrap();
            let problem = crate::milp::build_stage1(&spec, 0.0);
            let ws = crate::milp::witness_vector(&spec, &problem, 0.0).unwrap();
            let milp = crate::solver::solve_milp_with(
                &problem,
                &crate::solver::SolverConfig {
                    time_limit_seconds: f64::INFINITY,
                    node_limit: 20_000,
                    ..Default::default()
                },
                &crate::solver::NoTime,
                Some(&ws),
            )
            .unwrap();
            let sol = crate::milp::extract_stage1(
                &problem,
                milp.x.as_ref().unwrap(),
                milp.status,
                milp.gap,
            )
            .unwrap();
            let report = run_stage2(
                &spec,
                &sol,
                &Stage2Options {
                    threshold_rule: ThresholdRule::Midpoint,
                    realization: DemandRealization::Sampled { seed: seed * 7 + 1 },
                },
            )
            .unwrap();
            assert!(report.tc1 >= sol.tc, "seed {seed}");
            for k in 0..spec.n_customers {
                assert_eq!(report.p_under[k] + report.p_over[k], 1.0);
                assert!(report.eld[k] >= 0.0);
            }
        }
    }

    #[test]
    fn mean_rule_clamps_into_regime_interval() {
        // Deficits 0, 7, 12, 12, 12: mean 8.6, midpoint 6. The deficit of
        // 7 is low under the mean rule but sits above the midpoint, so its
        // covered quantity clamps down to the top of the low interval.
        let wide = GenerationRanges {
            p_upper: (200.0, 10_000.0),
            q_upper_ij: (50.0, 10_000.0),
            q_upper_jk: (50.0, 10_000.0),
            w_upper: (100.0, 10_000.0),
            ..GenerationRanges::default()
        };
        let spec = generate_instance(3, 1, 1, 5, &wide).unwrap();
        let sol = tiny_sol(vec![vec![0.0; 5]], vec![true]);
        let realized = [0.0, 7.0, 12.0, 12.0, 12.0];
        let profile = compute_deficits(&sol, &realized, ThresholdRule::Mean);
        assert_eq!(profile.lambda, vec![true, true, false, false, false]);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        assert_eq!(plan.qu[1], 6.0);
        assert_eq!(plan.clamp_events, 1);

        // Deficits 0, 0, 5.9, 12: mean 4.475, midpoint 6. The deficit of
        // 5.9 is high under the mean rule but below the midpoint, so it
        // clamps up to the bottom of the high interval.
        let spec = generate_instance(3, 1, 1, 4, &wide).unwrap();
        let sol = tiny_sol(vec![vec![0.0; 4]], vec![true]);
        let profile = compute_deficits(&sol, &[0.0, 0.0, 5.9, 12.0], ThresholdRule::Mean);
        assert_eq!(profile.zeta, vec![false, false, true, true]);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        assert_eq!(plan.qo[2], 6.0);
        assert_eq!(plan.clamp_events, 1);

        // Under the midpoint rule the clamp is the identity.
        let profile = compute_deficits(&sol, &[0.0, 0.0, 5.9, 12.0], ThresholdRule::Midpoint);
        let plan = plan_recovery(&spec, &sol, &profile).unwrap();
        assert_eq!(plan.clamp_events, 0);
    }
}
