//! On-disk formats: instance documents, run artifacts, CSV exports, the
//! LP-format cross-check dump, raw tensor dumps and the replay manifest.
//!
//! Everything written here is a deterministic function of the in-memory
//! value: JSON field order follows the struct definitions and floats
//! render round-trip safe, so identical runs produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use echelon::milp::{MilpProblem, Relation, Stage1Solution};
use echelon::model::{validate_instance, InstanceSpec};
use echelon::stochastic::{GroupTensor, NoiseEnsemble, ReplicateTensors};

/// Stage-1 artifact: the typed solution plus search statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Artifact {
    pub solution: Stage1Solution,
    pub objective: f64,
    pub nodes_explored: usize,
}

/// Replay manifest: config hash plus every emitted file with its digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("serializing {}", path.display()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Load an instance document and validate it; validation failures list
/// every violated field.
pub fn load_instance(path: &Path) -> anyhow::Result<InstanceSpec> {
    let spec: InstanceSpec = load_json(path)?;
    let report = validate_instance(&spec);
    if !report.ok {
        let mut msg = format!("instance {} fails validation:", path.display());
        for v in &report.violations {
            msg.push_str(&format!("\n  {}: {}", v.field, v.message));
        }
        anyhow::bail!(msg);
    }
    for w in &report.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(spec)
}

/// Export a matrix or table rendered to CSV text. The write reports the
/// underlying cause on failure.
pub fn export_csv(path: &Path, csv_text: &str) -> anyhow::Result<()> {
    write_text(path, csv_text).with_context(|| format!("exporting CSV {}", path.display()))
}

/// Render the program in the line-oriented LP text format (for
/// cross-checking against external solvers; grammar documented in
/// `docs/formats.md`).
pub fn to_lp_string(problem: &MilpProblem) -> String {
    let name = |col: usize| problem.var_index.var(col).to_string();
    let mut out = String::from("\\ three-echelon network design, stage 1\nMinimize\n obj:");
    let mut first = true;
    for (c, &coef) in problem.objective.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        if first && coef >= 0.0 {
            out.push_str(&format!(" {} {}", coef, name(c)));
        } else {
            out.push_str(&format!(
                " {} {} {}",
                if coef >= 0.0 { "+" } else { "-" },
                coef.abs(),
                name(c)
            ));
        }
        first = false;
    }
    if first {
        out.push_str(" 0 x_0");
    }
    out.push_str("\nSubject To\n");
    for row in &problem.rows {
        out.push_str(&format!(" {}:", row.label));
        let mut first = true;
        for &(c, coef) in &row.coeffs {
            if first && coef >= 0.0 {
                out.push_str(&format!(" {} {}", coef, name(c)));
            } else {
                out.push_str(&format!(
                    " {} {} {}",
                    if coef >= 0.0 { "+" } else { "-" },
                    coef.abs(),
                    name(c)
                ));
            }
            first = false;
        }
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        out.push_str(&format!(" {rel} {}\n", row.rhs));
    }
    out.push_str("Bounds\n");
    for c in 0..problem.n_vars() {
        let lo = problem.var_lower[c];
        let hi = problem.var_upper[c];
        if hi.is_finite() {
            out.push_str(&format!(" {lo} <= {} <= {hi}\n", name(c)));
        } else {
            out.push_str(&format!(" {} >= {lo}\n", name(c)));
        }
    }
    let binaries: Vec<usize> = (0..problem.n_vars())
        .filter(|&c| problem.integrality[c])
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for c in binaries {
            out.push_str(&format!(" {}\n", name(c)));
        }
    }
    out.push_str("End\n");
    out
}

const TENSOR_MAGIC: &[u8; 8] = b"ECHTENS1";

/// Dump one group tensor as little-endian doubles, row-major
/// `[outer][inner][cell]`, values block then noise block. Header:
/// magic, then `n_outer`, `n_inner`, `cells` as little-endian u64.
pub fn write_tensor_dump(path: &Path, tensors: &ReplicateTensors, group: &GroupTensor) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f =
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(TENSOR_MAGIC)?;
    for dim in [tensors.n_outer as u64, tensors.n_inner as u64, group.cells as u64] {
        f.write_all(&dim.to_le_bytes())?;
    }
    for &v in &group.values {
        f.write_all(&v.to_le_bytes())?;
    }
    for &v in &group.eta {
        f.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Write all three group tensors of an ensemble.
pub fn write_all_tensors(dir: &Path, slug: &str, ens: &NoiseEnsemble) -> anyhow::Result<Vec<PathBuf>> {
    let tensors = ens
        .tensors
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("ensemble tensors were dropped"))?;
    let mut written = Vec::new();
    for (group_name, group) in [
        ("p", &tensors.p),
        ("qij", &tensors.qij),
        ("qjk", &tensors.qjk),
    ] {
        let path = dir.join(format!("tensor_{slug}_{group_name}.bin"));
        write_tensor_dump(&path, tensors, group)?;
        written.push(path);
    }
    Ok(written)
}

/// Build the manifest over every file in the run directory (sorted by
/// name) and write it as `manifest.json`.
pub fn write_manifest(dir: &Path, config_hash: String) -> anyhow::Result<Manifest> {
    let mut names: Vec<String> = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != "manifest.json" {
                names.push(name);
            }
        }
    }
    names.sort();
    let mut files = Vec::with_capacity(names.len());
    for name in names {
        let bytes = fs::read(dir.join(&name))?;
        files.push(FileEntry {
            sha256: sha256_hex(&bytes),
            name,
        });
    }
    let manifest = Manifest { config_hash, files };
    save_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Static plotting stub shipped alongside the CSV artifacts.
pub const PLOT_STUB: &str = r#"#!/usr/bin/env python3
"""Render the run artifacts: difference heatmaps and the deviation table.

Usage: python3 plot_stub.py [run_dir]
"""
import csv
import glob
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

run_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))

for path in sorted(glob.glob(os.path.join(run_dir, "diff_qij_*.csv"))):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = [[float(x) for x in row[1:]] for row in rows[1:]]
    fig, ax = plt.subplots()
    im = ax.imshow(data, cmap="viridis")
    fig.colorbar(im, ax=ax)
    label = os.path.basename(path)[len("diff_qij_"):-len(".csv")]
    ax.set_title(f"deterministic - ensemble mean ({label})")
    ax.set_xlabel("warehouse j")
    ax.set_ylabel("plant i")
    out = os.path.join(run_dir, f"heatmap_{label}.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    print(f"wrote {out}")

table = os.path.join(run_dir, "deviation_table.csv")
if os.path.exists(table):
    with open(table) as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        print(f"{row['label']}: sigma = {float(row['stddev']):.4g}")
"#;
