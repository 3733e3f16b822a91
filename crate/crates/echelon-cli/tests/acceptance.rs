//! Acceptance suite: one test per criterion, each printing a PASS line
//! when its assertions hold. Timed criteria take a shared lock so wall
//! clocks are not polluted by sibling tests.

use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use echelon::milp::{
    build_stage1, extract_stage1, witness_vector, SolveStatus, Stage1Solution,
};
use echelon::model::{generate_instance, GenerationRanges, InstanceSpec};
use echelon::report::{deviation_table, diff_matrix};
use echelon::solver::{solve_milp_with, NoTime, SolverConfig};
use echelon::stage2::{
    erf, run_stage2, DemandRealization, Stage2Options, ThresholdRule,
};
use echelon::stochastic::{
    check_feasibility, ensemble_mean, ensemble_rms, pareto_inverse_cdf, perturb, run_ensemble,
    sample_noise, EnsembleOptions, NoiseSpec, StochasticError, VarGroup,
};
use echelon_cli::config::{InstanceSource, RunConfig};
use echelon_cli::pipeline::cmd_pipeline;

fn serial() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

// =====================================================================
// Independent oracles (test-local; they share no code with the library
// paths they check).
// =====================================================================

/// Dense big-M simplex with Bland's rule: `min c.x` subject to rows and
/// `x >= 0`. Bounds must be passed as rows. Returns `None` on
/// infeasibility.
mod naive_lp {
    #[derive(Clone, Copy, PartialEq)]
    pub enum Rel {
        Le,
        Eq,
        Ge,
    }

    pub fn minimize(c: &[f64], rows: &[(Vec<f64>, Rel, f64)]) -> Option<(f64, Vec<f64>)> {
        let n = c.len();
        let m = rows.len();
        // Normalize to b >= 0.
        let mut dense: Vec<(Vec<f64>, Rel, f64)> = rows
            .iter()
            .map(|(a, r, b)| {
                if *b < 0.0 {
                    let flipped = match r {
                        Rel::Le => Rel::Ge,
                        Rel::Ge => Rel::Le,
                        Rel::Eq => Rel::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flipped, -b)
                } else {
                    (a.clone(), *r, *b)
                }
            })
            .collect();

        let n_slack = dense
            .iter()
            .filter(|(_, r, _)| *r != Rel::Eq)
            .count();
        let n_art = dense
            .iter()
            .filter(|(_, r, _)| *r != Rel::Le)
            .count();
        let total = n + n_slack + n_art;
        let big_m = 1e7 * (1.0 + c.iter().fold(0.0f64, |a, &v| a.max(v.abs())));

        // Tableau: m rows x (total + 1) with the rhs last; cost row after.
        let mut t = vec![vec![0.0; total + 1]; m + 1];
        let mut basis = vec![0usize; m];
        let mut slack_at = n;
        let mut art_at = n + n_slack;
        for (r, (a, rel, b)) in dense.drain(..).enumerate() {
            t[r][..n].copy_from_slice(&a);
            t[r][total] = b;
            match rel {
                Rel::Le => {
                    t[r][slack_at] = 1.0;
                    basis[r] = slack_at;
                    slack_at += 1;
                }
                Rel::Ge => {
                    t[r][slack_at] = -1.0;
                    slack_at += 1;
                    t[r][art_at] = 1.0;
                    basis[r] = art_at;
                    art_at += 1;
                }
                Rel::Eq => {
                    t[r][art_at] = 1.0;
                    basis[r] = art_at;
                    art_at += 1;
                }
            }
        }
        for j in 0..n {
            t[m][j] = c[j];
        }
        for j in (n + n_slack)..total {
            t[m][j] = big_m;
        }
        // Price out the basic artificials.
        for r in 0..m {
            if basis[r] >= n + n_slack {
                let factor = t[m][basis[r]];
                for j in 0..=total {
                    t[m][j] -= factor * t[r][j];
                }
            }
        }

        for _ in 0..200_000 {
            // Bland: first column with a negative reduced cost.
            let mut entering = None;
            for j in 0..total {
                if t[m][j] < -1e-9 {
                    entering = Some(j);
                    break;
                }
            }
            let Some(e) = entering else { break };
            // Ratio test, lowest basis index on ties.
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for r in 0..m {
                if t[r][e] > 1e-11 {
                    let ratio = t[r][total] / t[r][e];
                    if ratio < best - 1e-12
                        || ((ratio - best).abs() <= 1e-12
                            && leave.map_or(true, |l| basis[r] < basis[l]))
                    {
                        best = ratio;
                        leave = Some(r);
                    }
                }
            }
            let Some(l) = leave else { return None }; // unbounded: treat as failure
            let piv = t[l][e];
            for j in 0..=total {
                t[l][j] /= piv;
            }
            for r in 0..=m {
                if r != l && t[r][e].abs() > 0.0 {
                    let factor = t[r][e];
                    for j in 0..=total {
                        t[r][j] -= factor * t[l][j];
                    }
                }
            }
            basis[l] = e;
        }

        // Positive artificial in the basis means infeasible.
        for r in 0..m {
            if basis[r] >= n + n_slack && t[r][total] > 1e-6 {
                return None;
            }
        }
        let mut x = vec![0.0; n];
        for r in 0..m {
            if basis[r] < n {
                x[basis[r]] = t[r][total];
            }
        }
        let obj = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Some((obj, x))
    }
}

/// Exhaustive MILP oracle for 2x2x2 instances: enumerate all 1024 binary
/// patterns, solve the continuous remainder with the naive simplex, take
/// the minimum.
fn brute_force_optimum(spec: &InstanceSpec) -> Option<f64> {
    assert_eq!(
        (spec.n_plants, spec.n_warehouses, spec.n_customers),
        (2, 2, 2)
    );
    // Continuous variables: P(2), Qij(4 row-major), Qjk(4), W(2).
    let col_p = |i: usize| i;
    let col_qij = |i: usize, j: usize| 2 + 2 * i + j;
    let col_qjk = |j: usize, k: usize| 6 + 2 * j + k;
    let col_w = |j: usize| 10 + j;
    let n = 12;

    let mut best: Option<f64> = None;
    for pattern in 0u32..1024 {
        let bit = |b: u32| (pattern >> b) & 1 == 1;
        let y = [bit(0), bit(1)];
        let xij = [[bit(2), bit(3)], [bit(4), bit(5)]];
        let xjk = [[bit(6), bit(7)], [bit(8), bit(9)]];
        // Link activations must hold for the pattern itself.
        let mut ok = true;
        for i in 0..2 {
            for j in 0..2 {
                if xij[i][j] && !y[j] {
                    ok = false;
                }
            }
        }
        for j in 0..2 {
            for k in 0..2 {
                if xjk[j][k] && !y[j] {
                    ok = false;
                }
            }
        }
        if !ok {
            continue;
        }

        let mut c = vec![0.0; n];
        for i in 0..2 {
            c[col_p(i)] = spec.costs.c_prod[i];
            for j in 0..2 {
                c[col_qij(i, j)] = spec.costs.c_var_ij[i][j];
            }
        }
        for j in 0..2 {
            for k in 0..2 {
                c[col_qjk(j, k)] = spec.costs.c_var_jk[j][k];
            }
        }

        let mut rows: Vec<(Vec<f64>, naive_lp::Rel, f64)> = Vec::new();
        let mut row = |coeffs: Vec<(usize, f64)>, rel: naive_lp::Rel, rhs: f64| {
            let mut dense = vec![0.0; n];
            for (cidx, v) in coeffs {
                dense[cidx] += v;
            }
            rows.push((dense, rel, rhs));
        };
        for i in 0..2 {
            row(
                vec![
                    (col_p(i), 1.0),
                    (col_qij(i, 0), -1.0),
                    (col_qij(i, 1), -1.0),
                ],
                naive_lp::Rel::Eq,
                0.0,
            );
            row(vec![(col_p(i), 1.0)], naive_lp::Rel::Le, spec.p_upper[i]);
            row(vec![(col_p(i), 1.0)], naive_lp::Rel::Ge, spec.p_lower[i]);
        }
        for j in 0..2 {
            row(
                vec![
                    (col_qij(0, j), 1.0),
                    (col_qij(1, j), 1.0),
                    (col_qjk(j, 0), -1.0),
                    (col_qjk(j, 1), -1.0),
                ],
                naive_lp::Rel::Eq,
                -spec.inventory[j],
            );
            row(
                vec![
                    (col_w(j), 1.0),
                    (col_qij(0, j), -spec.a[j]),
                    (col_qij(1, j), -spec.a[j]),
                ],
                naive_lp::Rel::Ge,
                spec.a[j] * spec.inventory[j],
            );
            let w_cap = if y[j] { spec.w_upper[j] } else { 0.0 };
            row(vec![(col_w(j), 1.0)], naive_lp::Rel::Le, w_cap);
        }
        for k in 0..2 {
            row(
                vec![(col_qjk(0, k), 1.0), (col_qjk(1, k), 1.0)],
                naive_lp::Rel::Ge,
                spec.demand[k].mu,
            );
        }
        for i in 0..2 {
            for j in 0..2 {
                let cap = if xij[i][j] { spec.q_upper_ij[i][j] } else { 0.0 };
                row(vec![(col_qij(i, j), 1.0)], naive_lp::Rel::Le, cap);
            }
        }
        for j in 0..2 {
            for k in 0..2 {
                let cap = if xjk[j][k] { spec.q_upper_jk[j][k] } else { 0.0 };
                row(vec![(col_qjk(j, k), 1.0)], naive_lp::Rel::Le, cap);
            }
        }

        let Some((cont_obj, _)) = naive_lp::minimize(&c, &rows) else {
            continue;
        };
        let mut fixed = 0.0;
        for j in 0..2 {
            if y[j] {
                fixed += spec.costs.c_install[j];
            }
            for k in 0..2 {
                if xjk[j][k] {
                    fixed += spec.costs.c_fix_jk[j][k];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                if xij[i][j] {
                    fixed += spec.costs.c_fix_ij[i][j];
                }
            }
        }
        let total = cont_obj + fixed;
        if best.map_or(true, |b| total < b) {
            best = Some(total);
        }
    }
    best
}

/// Independent erf oracle: Maclaurin series up to 2.5, Lentz continued
/// fraction beyond.
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
        return 2.0 / libm::sqrt(std::f64::consts::PI) * sum;
    }
    let mut f = x;
    let mut c = x;
    let mut d = 0.0f64;
    for i in 1..400 {
        let a = i as f64 / 2.0;
        d = x + a * d;
        if d == 0.0 {
            d = 1e-300;
        }
        c = x + a / c;
        if c == 0.0 {
            c = 1e-300;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-18 {
            break;
        }
    }
    1.0 - libm::exp(-x * x) / libm::sqrt(std::f64::consts::PI) / f
}

fn solved(seed: u64, size: usize, gap: f64, nodes: usize) -> (InstanceSpec, Stage1Solution) {
    let spec = generate_instance(seed, size, size, size, &GenerationRanges::default()).unwrap();
    let problem = build_stage1(&spec, 0.0);
    let ws = witness_vector(&spec, &problem, 0.0).unwrap();
    let cfg = SolverConfig {
        gap_tolerance: gap,
        time_limit_seconds: f64::INFINITY,
        node_limit: nodes,
        ..Default::default()
    };
    let milp = solve_milp_with(&problem, &cfg, &NoTime, Some(&ws)).unwrap();
    let sol = extract_stage1(&problem, milp.x.as_ref().unwrap(), milp.status, milp.gap).unwrap();
    (spec, sol)
}

// =====================================================================
// Criteria.
// =====================================================================

#[test]
fn criterion_1_milp_oracle_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let cfg = SolverConfig {
        gap_tolerance: 1e-9,
        time_limit_seconds: f64::INFINITY,
        node_limit: 1_000_000,
        ..Default::default()
    };
    for seed in 0..20u64 {
        let spec = generate_instance(seed, 2, 2, 2, &GenerationRanges::default()).unwrap();
        let oracle = brute_force_optimum(&spec).expect("generated instance is feasible");
        let problem = build_stage1(&spec, 0.0);
        let milp = solve_milp_with(&problem, &cfg, &NoTime, None).unwrap();
        assert_eq!(milp.status, SolveStatus::Optimal, "seed {seed}");
        let rel = (milp.objective - oracle).abs() / oracle.abs().max(1.0);
        assert!(
            rel <= 1e-6,
            "seed {seed}: solver {} vs oracle {} (rel {rel:.3e})",
            milp.objective,
            oracle
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "oracle sweep took {elapsed:?}"
    );
    println!("acceptance criterion 1: PASS (20 seeds, oracle-equal, {elapsed:?})");
}

#[test]
fn criterion_2_feasibility_residuals() {
    let _guard = serial();
    let mut checked = 0;
    for seed in 0..100u64 {
        let ni = 2 + (seed % 3) as usize;
        let nj = 2 + ((seed / 3) % 3) as usize;
        let nk = 2 + ((seed / 9) % 3) as usize;
        let spec = generate_instance(1000 + seed, ni, nj, nk, &GenerationRanges::default()).unwrap();
        let problem = build_stage1(&spec, 0.0);
        let ws = witness_vector(&spec, &problem, 0.0).unwrap();
        let cfg = SolverConfig {
            time_limit_seconds: f64::INFINITY,
            node_limit: 3_000,
            ..Default::default()
        };
        let milp = solve_milp_with(&problem, &cfg, &NoTime, Some(&ws)).unwrap();
        let x = milp.x.as_ref().expect("incumbent exists");
        let resid = problem.max_row_violation(x).max(problem.max_bound_violation(x));
        assert!(
            resid <= 1e-6,
            "seed {seed} ({ni}x{nj}x{nk}): residual {resid:.3e}"
        );
        checked += 1;
    }
    println!("acceptance criterion 2: PASS ({checked} instances, residuals <= 1e-6)");
}

#[test]
fn criterion_3_probability_identities() {
    use echelon::stage2::stockout_probabilities;
    // erf against the series oracle over a 1000-point grid.
    for i in 0..=1000 {
        let x = -6.0 + 12.0 * i as f64 / 1000.0;
        assert!(
            (erf(x) - erf_oracle(x)).abs() <= 1e-12,
            "erf({x}) off the oracle"
        );
    }
    assert_eq!(erf(0.0), 0.0);
    // Exact normalization and the centered value.
    for i in 0..500 {
        let qu = -30.0 + i as f64 * 0.123;
        let p = stockout_probabilities(qu, 4.0, 2.5);
        assert_eq!(p.p_under + p.p_over, 1.0);
    }
    let centered = stockout_probabilities(7.25, 7.25, 3.0);
    assert_eq!(centered.p_under, 0.5);
    println!("acceptance criterion 3: PASS (erf grid 1e-12, identities exact)");
}

#[test]
fn criterion_4_stage2_decomposition() {
    let mut max_rel = 0.0f64;
    for seed in 0..50u64 {
        let size = 2 + (seed % 3) as usize;
        let (spec, sol) = solved(2000 + seed, size, 1e-2, 3_000);
        let opts = Stage2Options {
            threshold_rule: if seed % 2 == 0 {
                ThresholdRule::Midpoint
            } else {
                ThresholdRule::Mean
            },
            realization: DemandRealization::Sampled { seed: 31 * seed + 5 },
        };
        let report = run_stage2(&spec, &sol, &opts).unwrap();

        // Recompute each term independently from the report pieces.
        let mut recovery_e = 0.0;
        let mut recovery_r = 0.0;
        for j in 0..spec.n_warehouses {
            for k in 0..spec.n_customers {
                recovery_e += spec.costs.c_po[j][k] * report.plan.e[j][k];
                recovery_r += spec.costs.c_pu[j][k] * report.plan.r[j][k];
            }
        }
        let mut lead_penalty = 0.0;
        for k in 0..spec.n_customers {
            let eld = if report.profile.lambda[k] {
                spec.t_lower * report.p_under[k]
            } else {
                spec.t_upper * report.p_over[k]
            };
            let rel = (eld - report.eld[k]).abs() / eld.abs().max(1.0);
            assert!(rel <= 1e-9, "seed {seed} customer {k}: eld {rel:.3e}");
            lead_penalty += report.profile.sigma_delta * libm::sqrt(eld);
        }
        let tc1 = sol.tc + recovery_e + recovery_r + lead_penalty;
        let rel = (tc1 - report.tc1).abs() / report.tc1.abs().max(1.0);
        assert!(rel <= 1e-9, "seed {seed}: tc1 decomposition {rel:.3e}");
        assert!(report.tc1 >= sol.tc, "seed {seed}: tc1 < tc");
        max_rel = max_rel.max(rel);
    }
    println!("acceptance criterion 4: PASS (50 pipelines, max rel {max_rel:.2e})");
}

#[test]
fn criterion_5_ensemble_mean_and_rms_oracles() {
    // Means against two-pass summation.
    let mut stream = echelon::rng::stream(77, &[1]);
    for len in [1usize, 3, 10, 100] {
        for _ in 0..50 {
            let row: Vec<f64> = (0..len)
                .map(|_| (echelon::rng::uniform(&mut stream) - 0.5) * 1e4)
                .collect();
            let got = ensemble_mean(&row);
            let two_pass: f64 = row.iter().sum::<f64>() / len as f64;
            assert!(
                (got - two_pass).abs() <= 1e-12 * two_pass.abs().max(1.0),
                "mean mismatch"
            );
        }
    }

    // RMS against explicit pair enumeration for N <= 10, on a coarse grid
    // where both paths are exact.
    for n in 2usize..=10 {
        for round in 0..50 {
            let means: Vec<f64> = (0..n)
                .map(|i| {
                    let u = echelon::rng::uniform(&mut stream);
                    libm::round(u * 1024.0) / 64.0 + (i + round) as f64 * 0.25
                })
                .collect();
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for a in 0..n {
                for b in (a + 1)..n {
                    sum += means[a] * means[b];
                    pairs += 1;
                }
            }
            let radicand = sum / pairs as f64;
            if radicand < 0.0 {
                match ensemble_rms(&means) {
                    Err(StochasticError::NegativeRadicand { .. }) => {}
                    other => panic!("expected NegativeRadicand, got {other:?}"),
                }
            } else {
                let oracle = libm::sqrt(radicand);
                let got = ensemble_rms(&means).unwrap();
                assert_eq!(got, oracle, "n={n} means={means:?}");
            }
        }
    }

    // Fixtures.
    assert_eq!(ensemble_rms(&[2.0, 8.0]).unwrap(), 4.0);
    assert_eq!(
        ensemble_rms(&[1.0, 2.0, 3.0]).unwrap(),
        libm::sqrt(11.0 / 3.0)
    );
    match ensemble_rms(&[1.0, -2.0]) {
        Err(StochasticError::NegativeRadicand { radicand }) => assert_eq!(radicand, -2.0),
        other => panic!("expected NegativeRadicand, got {other:?}"),
    }
    println!("acceptance criterion 5: PASS (means 1e-12, RMS exact for N <= 10)");
}

#[test]
fn criterion_6_zero_scale_identity() {
    let _guard = serial();
    let (spec, sol) = solved(42, 4, 1e-2, 3_000);
    let zero_suite = [
        NoiseSpec::gaussian(1.0, 0.0),
        NoiseSpec::lognormal(0.0, 1.0, 0.0),
        NoiseSpec::pareto(0.5, 1.0, 0.0),
    ];
    let opts = EnsembleOptions {
        n: 8,
        seed: 5,
        ..Default::default()
    };
    let mut labeled = Vec::new();
    for (idx, noise) in zero_suite.iter().enumerate() {
        let ens = run_ensemble(&spec, &sol, noise, &opts).unwrap();
        assert_eq!(ens.feasible_count, opts.n, "all replicates feasible");
        // Bit-for-bit reproduction of the deterministic solution.
        for e in 0..opts.n {
            assert_eq!(ens.mean_p[e], sol.p);
        }
        let grand = ens.grand_mean(VarGroup::Qjk).unwrap();
        for j in 0..spec.n_warehouses {
            for k in 0..spec.n_customers {
                assert_eq!(grand[j * spec.n_customers + k].to_bits(), sol.q_jk[j][k].to_bits());
            }
        }
        for group in [VarGroup::P, VarGroup::Qij, VarGroup::Qjk] {
            let diff = diff_matrix(&sol, &ens, group).unwrap();
            assert!(diff.values.iter().flatten().all(|&v| v == 0.0));
        }
        labeled.push((format!("zero_{idx}"), ens));
    }
    let refs: Vec<(String, &echelon::stochastic::NoiseEnsemble)> = labeled
        .iter()
        .map(|(l, e)| (l.clone(), e))
        .collect();
    let table = deviation_table(&sol, &refs).unwrap();
    assert!(table.rows.iter().all(|r| r.stddev == 0.0));
    println!("acceptance criterion 6: PASS (zero-scale ensembles are exact identities)");
}

#[test]
fn criterion_7_sampler_statistics() {
    let _guard = serial();
    // Gaussian sample mean within the CLT band.
    let spec = NoiseSpec::gaussian(1.0, 1.0);
    let n = 100_000usize;
    let mut sum = 0.0;
    for i in 0..n {
        let mut s = echelon::rng::stream(123, &[9, i as u64]);
        sum += sample_noise(&spec, &mut s);
    }
    let mean = sum / n as f64;
    assert!(
        mean.abs() <= 4.0 / (n as f64).sqrt(),
        "gaussian mean {mean} outside CLT band"
    );

    // Pareto inverse-CDF spot checks.
    assert!((pareto_inverse_cdf(0.25, 0.5, 1.0) - 16.0).abs() <= 1e-12);
    assert!((pareto_inverse_cdf(0.5, 2.0, 3.0) - 3.0 * libm::sqrt(2.0)).abs() <= 1e-12);

    // Unsigned Pareto ensembles only add, so diffs are nonpositive.
    let (inst, sol) = solved(7, 3, 1e-2, 3_000);
    let noise = NoiseSpec {
        signed: false,
        ..NoiseSpec::pareto(0.99, 1.0, 1.0)
    };
    let opts = EnsembleOptions {
        n: 10,
        seed: 3,
        include_infeasible: true,
        ..Default::default()
    };
    let ens = run_ensemble(&inst, &sol, &noise, &opts).unwrap();
    for group in [VarGroup::P, VarGroup::Qij, VarGroup::Qjk] {
        let diff = diff_matrix(&sol, &ens, group).unwrap();
        assert!(
            diff.values.iter().flatten().all(|&v| v <= 0.0),
            "positive diff under unsigned noise"
        );
    }

    // Heavy-tailed draws overwhelm the slack: the feasible fraction over
    // 100 perturbed copies sits strictly below one.
    let (inst5, sol5) = solved(11, 5, 5e-2, 2_000);
    let heavy = NoiseSpec::pareto(0.01, 1.0, 1.0);
    let feasible = (0..100)
        .filter(|&r| {
            let pert = perturb(&sol5, &heavy, 99, r, 0);
            check_feasibility(&pert, &inst5, 1e-6).feasible
        })
        .count();
    assert!(feasible < 100, "heavy noise never violated anything");
    println!("acceptance criterion 7: PASS (CLT band, quantile checks, sign structure)");
}

fn assert_csvs_identical(a: &Path, b: &Path) {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no CSV artifacts in {}", a.display());
    for name in &names {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name))
            .unwrap_or_else(|_| panic!("missing {name} in {}", b.display()));
        assert_eq!(left, right, "{name} differs");
    }
}

fn pipeline_config(dir: &Path, workers: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.instance = InstanceSource::Generate {
        seed: 42,
        n_plants: 5,
        n_warehouses: 5,
        n_customers: 5,
        ranges: GenerationRanges::default(),
    };
    // Deterministic termination: generous node budget, no wall clock.
    cfg.solver.time_limit_seconds = 1e9;
    cfg.solver.node_limit = 50_000;
    cfg.noise.n = 20;
    cfg.output_dir = dir.to_path_buf();
    cfg.workers = workers;
    cfg
}

#[test]
fn criterion_8_pipeline_determinism() {
    let _guard = serial();
    let base = tempfile::tempdir().unwrap();
    let dir_a = base.path().join("a");
    let dir_b = base.path().join("b");
    let dir_w = base.path().join("w");

    let code_a = cmd_pipeline(&pipeline_config(&dir_a, 1), false, false).unwrap();
    let code_b = cmd_pipeline(&pipeline_config(&dir_b, 1), false, false).unwrap();
    assert_eq!(code_a, code_b);
    assert_csvs_identical(&dir_a, &dir_b);

    // Same directory re-run: identical manifest bytes.
    let manifest_1 = std::fs::read(dir_a.join("manifest.json")).unwrap();
    let code_c = cmd_pipeline(&pipeline_config(&dir_a, 1), false, false).unwrap();
    assert_eq!(code_a, code_c);
    let manifest_2 = std::fs::read(dir_a.join("manifest.json")).unwrap();
    assert_eq!(manifest_1, manifest_2, "manifests differ across reruns");

    // Many workers, byte-identical CSVs.
    let code_w = cmd_pipeline(&pipeline_config(&dir_w, 4), false, false).unwrap();
    assert_eq!(code_a, code_w);
    assert_csvs_identical(&dir_a, &dir_w);
    println!("acceptance criterion 8: PASS (reruns and worker counts byte-identical)");
}

#[test]
fn criterion_9_scale_replication() {
    let _guard = serial();
    let start = Instant::now();
    let base = tempfile::tempdir().unwrap();
    let dir = base.path().join("scale20");

    let mut cfg = RunConfig::default();
    cfg.instance = InstanceSource::Generate {
        seed: 42,
        n_plants: 20,
        n_warehouses: 20,
        n_customers: 20,
        ranges: GenerationRanges::default(),
    };
    cfg.solver.time_limit_seconds = 60.0;
    cfg.solver.gap_tolerance = 1e-2;
    cfg.noise.n = 50;
    cfg.output_dir = dir.clone();
    cfg.workers = 4;

    let problem_probe = build_stage1(
        &match &cfg.instance {
            InstanceSource::Generate {
                seed,
                n_plants,
                n_warehouses,
                n_customers,
                ranges,
            } => generate_instance(*seed, *n_plants, *n_warehouses, *n_customers, ranges).unwrap(),
            _ => unreachable!(),
        },
        0.0,
    );
    assert_eq!(problem_probe.n_vars(), 1660);
    assert_eq!(problem_probe.n_binaries(), 820);

    let code = cmd_pipeline(&cfg, false, false).unwrap();
    assert!(
        code == 0 || code == 5,
        "pipeline failed outright with exit {code}"
    );

    // A feasible incumbent was reached (within the gap or at the cutoff).
    let stage1: echelon_cli::formats::Stage1Artifact =
        echelon_cli::formats::load_json(&dir.join("stage1.json")).unwrap();
    assert!(
        stage1.solution.gap <= 1e-2
            || matches!(
                stage1.solution.status,
                SolveStatus::TimeLimit | SolveStatus::FeasibleWithGap
            ),
        "no usable incumbent: status {:?}, gap {}",
        stage1.solution.status,
        stage1.solution.gap
    );

    // Six positive finite deviation rows.
    let table = std::fs::read_to_string(dir.join("deviation_table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 6, "expected six deviation rows:\n{table}");
    for row in rows {
        let stddev: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(
            stddev.is_finite() && stddev > 0.0,
            "deviation row not positive finite: {row}"
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "scale run took {elapsed:?}, budget is 5 minutes"
    );
    println!(
        "acceptance criterion 9: PASS (1660 vars / 820 binaries, full suite in {elapsed:?})"
    );
}

// Regenerates the frozen optimum recorded next to the committed fixture
// instance (see tests/cli.rs). Run with `--ignored --nocapture`.
#[test]
#[ignore]
fn fixture_oracle_value() {
    let text = std::fs::read_to_string("tests/fixtures/tiny_instance.json").unwrap();
    let spec: InstanceSpec = serde_json::from_str(&text).unwrap();
    let oracle = brute_force_optimum(&spec).unwrap();
    println!("fixture brute-force optimum: {oracle:.10}");
}

// Keep the oracle helpers honest: the naive simplex must agree with the
// library solver on the continuous relaxation of a small instance.
#[test]
fn oracle_cross_check() {
    let spec = generate_instance(3, 2, 2, 2, &GenerationRanges::default()).unwrap();
    let problem = build_stage1(&spec, 0.0);
    let lp = echelon::solver::solve_lp(&problem).unwrap();

    // All-open pattern continuous LP equals the relaxation only when the
    // relaxation happens to be integral, so just sanity-check the oracle
    // optimum dominates the relaxation and is dominated by the witness.
    let oracle = brute_force_optimum(&spec).unwrap();
    assert!(oracle >= lp.objective - 1e-6);
    let ws = witness_vector(&spec, &problem, 0.0).unwrap();
    let witness_cost: f64 = problem.objective_value(&ws);
    assert!(oracle <= witness_cost + 1e-6);
}
