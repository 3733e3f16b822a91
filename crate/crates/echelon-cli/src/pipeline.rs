//! Command implementations: generate, validate, solve, perturb, report
//! and the full pipeline. Each returns a process exit code from the
//! stable contract in [`crate::exit`].

use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;

use echelon::milp::{build_stage1, extract_stage1, witness_vector, SolveStatus, Stage1Solution};
use echelon::model::{generate_instance, validate_instance, GenerationRanges, InstanceSpec};
use echelon::report::{
    deviation_table, diff_matrix, matrix_to_csv, stage2_to_csv, table_to_csv, DeviationTable,
};
use echelon::solver::{solve_milp_with, WallClock};
use echelon::stage2::{run_stage2, Stage2Options, Stage2Report};
use echelon::stochastic::{
    evaluate_outer_replicate, EnsembleOptions, NoiseEnsemble, NoiseSpec, OuterReplicate,
    StochasticError, VarGroup,
};

use crate::config::{label_slug, InstanceSource, RunConfig};
use crate::exit;
use crate::formats::{
    export_csv, load_instance, load_json, save_json, sha256_hex, to_lp_string, write_all_tensors,
    write_manifest, write_text, Stage1Artifact, PLOT_STUB,
};

/// Generate an instance file. Exit 0 on success, 2 on invalid sizes or
/// ranges.
pub fn cmd_generate(
    seed: u64,
    n_plants: usize,
    n_warehouses: usize,
    n_customers: usize,
    ranges: &GenerationRanges,
    out: &Path,
) -> anyhow::Result<i32> {
    let spec = match generate_instance(seed, n_plants, n_warehouses, n_customers, ranges) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("generate: {e}");
            return Ok(exit::CONFIG);
        }
    };
    save_json(out, &spec)?;
    println!("wrote {}", out.display());
    Ok(exit::OK)
}

/// Validate an instance file, printing every violation.
pub fn cmd_validate(path: &Path) -> anyhow::Result<i32> {
    let spec: InstanceSpec = load_json(path)?;
    let report = validate_instance(&spec);
    for v in &report.violations {
        println!("violation: {}: {}", v.field, v.message);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.ok {
        println!("ok");
        Ok(exit::OK)
    } else {
        Ok(exit::CONFIG)
    }
}

pub fn resolve_instance(cfg: &RunConfig) -> anyhow::Result<InstanceSpec> {
    match &cfg.instance {
        InstanceSource::Generate {
            seed,
            n_plants,
            n_warehouses,
            n_customers,
            ranges,
        } => generate_instance(*seed, *n_plants, *n_warehouses, *n_customers, ranges)
            .map_err(|e| anyhow::anyhow!("instance generation failed: {e}")),
        InstanceSource::File { path } => load_instance(path),
    }
}

fn write_summary(
    dir: &Path,
    status: SolveStatus,
    sol: Option<&Stage1Solution>,
    nodes: usize,
    stage2: Option<&Stage2Report>,
) -> anyhow::Result<()> {
    let mut text = format!("status: {status:?}\nnodes explored: {nodes}\n");
    if let Some(sol) = sol {
        text.push_str(&format!(
            "network cost TC: {:.6}\nrelative gap: {:.6}\nopen warehouses: {}\n",
            sol.tc,
            sol.gap,
            sol.y.iter().filter(|&&y| y).count(),
        ));
    }
    if let Some(report) = stage2 {
        text.push_str(&format!("augmented cost TC1: {:.6}\n", report.tc1));
        text.push_str("expected lead time per customer:\n");
        for (k, eld) in report.eld.iter().enumerate() {
            text.push_str(&format!("  k={k}: {eld:.6}\n"));
        }
    }
    write_text(&dir.join("summary.txt"), &text)
}

/// Solve stage 1 and run the stage-2 analytics, writing all artifacts
/// into the configured output directory.
pub fn cmd_solve(cfg: &RunConfig, emit_lp: bool) -> anyhow::Result<i32> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let spec = resolve_instance(cfg)?;
    save_json(&dir.join("instance.json"), &spec)?;
    save_json(&dir.join("config.json"), cfg)?;

    let problem = build_stage1(&spec, cfg.stage2.safety_factor);
    if emit_lp {
        write_text(&dir.join("model.lp"), &to_lp_string(&problem))?;
    }

    let warm = witness_vector(&spec, &problem, cfg.stage2.safety_factor);
    let milp = solve_milp_with(&problem, &cfg.solver, &WallClock::start(), warm.as_deref())
        .map_err(|e| anyhow::anyhow!("solver failed: {e}"))?;
    log::info!(
        "stage 1: {:?}, objective {}, gap {:.4}, nodes {}",
        milp.status,
        milp.objective,
        milp.gap,
        milp.nodes_explored
    );

    match milp.status {
        SolveStatus::Infeasible => {
            write_summary(&dir, milp.status, None, milp.nodes_explored, None)?;
            write_manifest(&dir, sha256_hex(&cfg.canonical_bytes()))?;
            return Ok(exit::INFEASIBLE);
        }
        SolveStatus::TimeLimit if milp.x.is_none() => {
            write_summary(&dir, milp.status, None, milp.nodes_explored, None)?;
            write_manifest(&dir, sha256_hex(&cfg.canonical_bytes()))?;
            return Ok(exit::TIMEOUT);
        }
        _ => {}
    }

    let x = milp.x.as_ref().expect("incumbent exists");
    let sol = extract_stage1(&problem, x, milp.status, milp.gap)
        .map_err(|e| anyhow::anyhow!("extraction failed: {e}"))?;
    let artifact = Stage1Artifact {
        solution: sol.clone(),
        objective: milp.objective,
        nodes_explored: milp.nodes_explored,
    };
    save_json(&dir.join("stage1.json"), &artifact)?;

    let stage2_opts = Stage2Options {
        threshold_rule: cfg.stage2.threshold_rule,
        realization: cfg.stage2.realization,
    };
    let report = run_stage2(&spec, &sol, &stage2_opts)
        .map_err(|e| anyhow::anyhow!("stage 2 failed: {e}"))?;
    save_json(&dir.join("stage2.json"), &report)?;
    export_csv(&dir.join("stage2_customers.csv"), &stage2_to_csv(&report))?;
    write_summary(&dir, milp.status, Some(&sol), milp.nodes_explored, Some(&report))?;
    write_manifest(&dir, sha256_hex(&cfg.canonical_bytes()))?;
    Ok(exit::OK)
}

/// Evaluate one noise ensemble, fanning outer replicates across workers.
/// The result is a pure function of the inputs for any worker count.
pub fn run_ensemble_parallel(
    spec: &InstanceSpec,
    sol: &Stage1Solution,
    noise: &NoiseSpec,
    opts: &EnsembleOptions,
    workers: usize,
) -> Result<NoiseEnsemble, StochasticError> {
    noise.validate()?;
    if opts.n < 2 {
        return Err(StochasticError::TooFewReplicates { n: opts.n });
    }
    let replicates: Vec<OuterReplicate> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("worker pool");
        pool.install(|| {
            (0..opts.n)
                .into_par_iter()
                .map(|e| evaluate_outer_replicate(spec, sol, noise, opts, e))
                .collect()
        })
    } else {
        (0..opts.n)
            .map(|e| evaluate_outer_replicate(spec, sol, noise, opts, e))
            .collect()
    };
    NoiseEnsemble::from_replicates(
        (spec.n_plants, spec.n_warehouses, spec.n_customers),
        opts,
        replicates,
    )
}

/// Run every configured noise ensemble against the stored stage-1
/// solution and emit diff matrices, the deviation table, feasibility
/// counters and RMS values.
pub fn cmd_perturb(cfg: &RunConfig, dump_tensors: bool) -> anyhow::Result<i32> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let spec: InstanceSpec = load_json(&dir.join("instance.json"))
        .context("perturb needs the instance artifact of a prior solve")?;
    let stage1: Stage1Artifact = load_json(&dir.join("stage1.json"))
        .context("perturb needs the stage-1 artifact of a prior solve")?;
    let sol = stage1.solution;

    let opts = EnsembleOptions {
        n: cfg.noise.n,
        seed: cfg.noise.seed,
        feasibility_tol: cfg.noise.feasibility_tolerance,
        include_infeasible: cfg.noise.include_infeasible,
        safety_factor: cfg.stage2.safety_factor,
    };

    let mut all_counters_ok = true;
    let mut ensembles: Vec<(String, NoiseEnsemble)> = Vec::new();
    for labeled in &cfg.noise.specs {
        let mut ens = match run_ensemble_parallel(&spec, &sol, &labeled.spec, &opts, cfg.workers) {
            Ok(ens) => ens,
            Err(StochasticError::TooFewReplicates { n }) => {
                eprintln!("ensemble {}: n = {n} is below the minimum of 2", labeled.label);
                return Ok(exit::DEGENERATE);
            }
            Err(StochasticError::TooFewFeasible { feasible_count }) => {
                eprintln!(
                    "ensemble {}: only {feasible_count} feasible replicates; skipped",
                    labeled.label
                );
                all_counters_ok = false;
                continue;
            }
            Err(e) => return Err(anyhow::anyhow!("ensemble {}: {e}", labeled.label)),
        };
        log::info!(
            "ensemble {}: feasible {}/{}",
            labeled.label,
            ens.feasible_count,
            ens.n
        );
        if ens.feasible_count < 2 {
            all_counters_ok = false;
        }
        let slug = label_slug(&labeled.label);
        if dump_tensors {
            write_all_tensors(&dir, &slug, &ens)?;
        }
        for (group, name) in [
            (VarGroup::P, "p"),
            (VarGroup::Qij, "qij"),
            (VarGroup::Qjk, "qjk"),
        ] {
            let diff = diff_matrix(&sol, &ens, group)
                .map_err(|e| anyhow::anyhow!("diff matrix {}: {e}", labeled.label))?;
            export_csv(&dir.join(format!("diff_{name}_{slug}.csv")), &matrix_to_csv(&diff))?;
        }
        ens.drop_tensors();
        save_json(&dir.join(format!("ensemble_{slug}.json")), &ens)?;
        ensembles.push((labeled.label.clone(), ens));
    }

    if ensembles.is_empty() {
        write_manifest(&dir, sha256_hex(&cfg.canonical_bytes()))?;
        return Ok(exit::DEGENERATE);
    }

    let refs: Vec<(String, &NoiseEnsemble)> = ensembles
        .iter()
        .map(|(label, ens)| (label.clone(), ens))
        .collect();
    let table: DeviationTable =
        deviation_table(&sol, &refs).map_err(|e| anyhow::anyhow!("deviation table: {e}"))?;
    export_csv(&dir.join("deviation_table.csv"), &table_to_csv(&table))?;
    write_text(&dir.join("plot_stub.py"), PLOT_STUB)?;
    write_manifest(&dir, sha256_hex(&cfg.canonical_bytes()))?;

    Ok(if all_counters_ok {
        exit::OK
    } else {
        exit::DEGENERATE
    })
}

/// Re-render the CSV deliverables from stored JSON artifacts.
pub fn cmd_report(dir: &Path) -> anyhow::Result<i32> {
    let stage1: Stage1Artifact = load_json(&dir.join("stage1.json"))?;
    let sol = stage1.solution;
    if let Ok(report) = load_json::<Stage2Report>(&dir.join("stage2.json")) {
        export_csv(&dir.join("stage2_customers.csv"), &stage2_to_csv(&report))?;
    }

    // Labels (and their order) come from the stored run config when
    // available; otherwise fall back to the sanitized file names.
    let named: Vec<(String, String)> = match load_json::<RunConfig>(&dir.join("config.json")) {
        Ok(stored) => stored
            .noise
            .specs
            .iter()
            .map(|l| {
                (
                    format!("ensemble_{}.json", label_slug(&l.label)),
                    l.label.clone(),
                )
            })
            .filter(|(name, _)| dir.join(name).exists())
            .collect(),
        Err(_) => {
            let mut names: Vec<String> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.starts_with("ensemble_") && n.ends_with(".json"))
                .collect();
            names.sort();
            names
                .into_iter()
                .map(|n| {
                    let label = n
                        .trim_start_matches("ensemble_")
                        .trim_end_matches(".json")
                        .to_string();
                    (n, label)
                })
                .collect()
        }
    };

    let mut labeled: Vec<(String, NoiseEnsemble)> = Vec::new();
    for (name, label) in named {
        let ens: NoiseEnsemble = load_json(&dir.join(&name))?;
        for (group, gname) in [
            (VarGroup::P, "p"),
            (VarGroup::Qij, "qij"),
            (VarGroup::Qjk, "qjk"),
        ] {
            let diff = diff_matrix(&sol, &ens, group)
                .map_err(|e| anyhow::anyhow!("diff matrix {label}: {e}"))?;
            export_csv(
                &dir.join(format!("diff_{gname}_{}.csv", label_slug(&label))),
                &matrix_to_csv(&diff),
            )?;
        }
        labeled.push((label, ens));
    }
    if !labeled.is_empty() {
        let refs: Vec<(String, &NoiseEnsemble)> = labeled
            .iter()
            .map(|(label, ens)| (label.clone(), ens))
            .collect();
        let table = deviation_table(&sol, &refs).map_err(|e| anyhow::anyhow!("{e}"))?;
        export_csv(&dir.join("deviation_table.csv"), &table_to_csv(&table))?;
        write_text(&dir.join("plot_stub.py"), PLOT_STUB)?;
    }
    println!("report artifacts refreshed in {}", dir.display());
    Ok(exit::OK)
}

/// Full pipeline: solve, then the noise suite, then the manifest. The
/// exit code is the first non-success stage result.
pub fn cmd_pipeline(cfg: &RunConfig, dump_tensors: bool, emit_lp: bool) -> anyhow::Result<i32> {
    let solve_code = cmd_solve(cfg, emit_lp)?;
    if solve_code != exit::OK {
        return Ok(solve_code);
    }
    let perturb_code = cmd_perturb(cfg, dump_tensors)?;
    Ok(perturb_code)
}
