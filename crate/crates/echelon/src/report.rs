//! Plot-ready deliverables: deterministic-vs-ensemble difference
//! matrices, the per-noise deviation table and CSV rendering.
//!
//! Rendering is text-only; heatmap drawing is left to external plotters.
//! Floats print with 17 significant digits so a written value parses back
//! bit-for-bit on any platform.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::milp::Stage1Solution;
use crate::stage2::Stage2Report;
use crate::stochastic::{NoiseEnsemble, VarGroup};

/// Cellwise difference `deterministic - ensemble mean` for one variable
/// group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Vec<f64>>,
    pub group: VarGroup,
}

/// One row per noise label: sample standard deviation of the flattened
/// flow difference matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationTable {
    pub rows: Vec<DeviationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub label: String,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportError {
    /// No replicate qualifies for the ensemble mean.
    EmptyEnsemble,
    /// The group has fewer than two cells; a sample deviation needs two.
    SingleCell,
}

impl core::fmt::Display for ReportError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ReportError::EmptyEnsemble => write!(f, "ensemble has no included replicates"),
            ReportError::SingleCell => write!(f, "variable group has fewer than two cells"),
        }
    }
}

impl core::error::Error for ReportError {}

fn det_values(det: &Stage1Solution, group: VarGroup) -> (usize, usize, Vec<f64>) {
    match group {
        VarGroup::P => (1, det.p.len(), det.p.clone()),
        VarGroup::Qij => (
            det.q_ij.len(),
            det.q_ij.first().map_or(0, Vec::len),
            det.q_ij.iter().flatten().copied().collect(),
        ),
        VarGroup::Qjk => (
            det.q_jk.len(),
            det.q_jk.first().map_or(0, Vec::len),
            det.q_jk.iter().flatten().copied().collect(),
        ),
    }
}

/// Cellwise deterministic value minus the ensemble mean of the group.
pub fn diff_matrix(
    det: &Stage1Solution,
    ens: &NoiseEnsemble,
    group: VarGroup,
) -> Result<DiffMatrix, ReportError> {
    let mean = ens.grand_mean(group).ok_or(ReportError::EmptyEnsemble)?;
    let (rows, cols, flat) = det_values(det, group);
    debug_assert_eq!(flat.len(), mean.len());
    let values = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| flat[r * cols + c] - mean[r * cols + c])
                .collect()
        })
        .collect();
    Ok(DiffMatrix {
        rows,
        cols,
        values,
        group,
    })
}

/// Overflow-safe sample standard deviation (divisor `n - 1`).
pub fn sample_stddev(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "sample deviation needs at least two values");
    let maxabs = values.iter().fold(0.0f64, |a, &v| a.max(fmath::abs(v)));
    if maxabs == 0.0 {
        return 0.0;
    }
    let shift = fmath::exponent_of(maxabs);
    let scaled: Vec<f64> = values
        .iter()
        .map(|&v| fmath::scale_by_pow2(v, -shift))
        .collect();
    let mean = scaled.iter().sum::<f64>() / n as f64;
    let ss: f64 = scaled.iter().map(|&v| (v - mean) * (v - mean)).sum();
    fmath::saturate(fmath::scale_by_pow2(fmath::sqrt(ss / (n - 1) as f64), shift))
}

/// Deviation table over the flow group between plants and warehouses,
/// one row per labeled ensemble, in input order.
pub fn deviation_table(
    det: &Stage1Solution,
    ensembles: &[(String, &NoiseEnsemble)],
) -> Result<DeviationTable, ReportError> {
    let mut rows = Vec::with_capacity(ensembles.len());
    for (label, ens) in ensembles {
        let diff = diff_matrix(det, ens, VarGroup::Qij)?;
        let flat: Vec<f64> = diff.values.iter().flatten().copied().collect();
        if flat.len() < 2 {
            return Err(ReportError::SingleCell);
        }
        rows.push(DeviationRow {
            label: label.clone(),
            stddev: sample_stddev(&flat),
        });
    }
    Ok(DeviationTable { rows })
}

/// Round-trip-safe float rendering: 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a difference matrix as CSV: an index header row, then one line
/// per row index.
pub fn matrix_to_csv(m: &DiffMatrix) -> String {
    let mut out = String::from("index");
    for c in 0..m.cols {
        out.push_str(&format!(",{c}"));
    }
    out.push('\n');
    for r in 0..m.rows {
        out.push_str(&format!("{r}"));
        for c in 0..m.cols {
            out.push(',');
            out.push_str(&format_float(m.values[r][c]));
        }
        out.push('\n');
    }
    out
}

/// Render the deviation table as CSV.
pub fn table_to_csv(t: &DeviationTable) -> String {
    let mut out = String::from("label,stddev\n");
    for row in &t.rows {
        out.push_str(&format!("{},{}\n", row.label, format_float(row.stddev)));
    }
    out
}

/// Flat per-customer view of the second stage for plotting.
pub fn stage2_to_csv(report: &Stage2Report) -> String {
    let mut out = String::from("k,delta,lambda,p_under,p_over,eld\n");
    for k in 0..report.eld.len() {
        out.push_str(&format!(
            "{k},{},{},{},{},{}\n",
            format_float(report.profile.delta[k]),
            u8::from(report.profile.lambda[k]),
            format_float(report.p_under[k]),
            format_float(report.p_over[k]),
            format_float(report.eld[k]),
        ));
    }
    out
}
