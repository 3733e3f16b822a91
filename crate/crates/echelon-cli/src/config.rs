//! Run configuration: a single structured document driving the whole
//! pipeline, hashable for replay manifests. CLI flags override fields
//! after loading.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use echelon::model::GenerationRanges;
use echelon::solver::SolverConfig;
use echelon::stage2::{DemandRealization, ThresholdRule};
use echelon::stochastic::NoiseSpec;

/// Where the instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Generate {
        seed: u64,
        n_plants: usize,
        n_warehouses: usize,
        n_customers: usize,
        #[serde(default)]
        ranges: GenerationRanges,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Config {
    pub threshold_rule: ThresholdRule,
    /// Safety factor of the stage-1 demand target `mu + z * sigma`.
    pub safety_factor: f64,
    pub realization: DemandRealization,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            threshold_rule: ThresholdRule::Midpoint,
            safety_factor: 0.0,
            realization: DemandRealization::Sampled { seed: 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledNoise {
    pub label: String,
    #[serde(flatten)]
    pub spec: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Outer replicate count of the double loop.
    pub n: usize,
    pub seed: u64,
    /// Residual tolerance of the per-replicate feasibility counter.
    pub feasibility_tolerance: f64,
    /// Keep infeasible replicates in the statistics. Additive independent
    /// noise violates the balance equalities at any tolerance below the
    /// noise scale, so the shipped profile includes everything and leaves
    /// the counter as a diagnostic.
    pub include_infeasible: bool,
    pub specs: Vec<LabeledNoise>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            n: 50,
            seed: 7,
            feasibility_tolerance: 1e-6,
            include_infeasible: true,
            specs: default_noise_suite(),
        }
    }
}

/// The shipped noise suite: Gaussian, Lognormal and four Pareto tail
/// levels. Scales are calibrated so the lighter families perturb flows by
/// magnitudes comparable to the solved quantities; the heavy Pareto tails
/// dominate any scale choice.
pub fn default_noise_suite() -> Vec<LabeledNoise> {
    vec![
        LabeledNoise {
            label: "gaussian".into(),
            spec: NoiseSpec::gaussian(1.0, 50.0),
        },
        LabeledNoise {
            label: "lognormal".into(),
            spec: NoiseSpec::lognormal(0.0, 1.0, 25.0),
        },
        LabeledNoise {
            label: "pareto_0.01".into(),
            spec: NoiseSpec::pareto(0.01, 1.0, 1.0),
        },
        LabeledNoise {
            label: "pareto_0.05".into(),
            spec: NoiseSpec::pareto(0.05, 1.0, 1.0),
        },
        LabeledNoise {
            label: "pareto_0.5".into(),
            spec: NoiseSpec::pareto(0.5, 1.0, 5.0),
        },
        LabeledNoise {
            label: "pareto_0.99".into(),
            spec: NoiseSpec::pareto(0.99, 1.0, 10.0),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub instance: InstanceSource,
    pub solver: SolverConfig,
    pub stage2: Stage2Config,
    pub noise: NoiseConfig,
    pub output_dir: PathBuf,
    /// Worker threads for the perturbation stage; results are identical
    /// for any worker count.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            instance: InstanceSource::Generate {
                seed: 42,
                n_plants: 5,
                n_warehouses: 5,
                n_customers: 5,
                ranges: GenerationRanges::default(),
            },
            solver: SolverConfig::default(),
            stage2: Stage2Config::default(),
            noise: NoiseConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.noise.specs.is_empty() {
            anyhow::bail!("noise suite is empty: the perturb stage needs at least one spec");
        }
        for labeled in &self.noise.specs {
            labeled
                .spec
                .validate()
                .map_err(|e| anyhow::anyhow!("noise spec {}: {e}", labeled.label))?;
        }
        if !(self.stage2.safety_factor.is_finite()) {
            anyhow::bail!("safety_factor must be finite");
        }
        Ok(())
    }

    /// Canonical JSON bytes of the resolved config (struct field order is
    /// fixed, so this is deterministic).
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }
}

/// Sanitize a noise label into a filename fragment.
pub fn label_slug(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}
