//! Harness configuration: defaults, JSON override files, and flag plumbing.
//!
//! Precedence: built-in defaults, then the `--config` JSON file, then
//! explicit command-line flags.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use rmpm_core::dms::DmsConfig;
use rmpm_core::optim::{Granularity, OptimizeOptions};
use rmpm_core::params::{ParamBounds, PARAM_COUNT};
use rmpm_core::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct InitSearchConfig {
    /// Candidate count drawn by the Latin hypercube sampler.
    pub candidates: usize,
    /// Frames of the short scoring rollouts.
    pub frames: usize,
    /// Sample a single vector shared by all parts instead of one per part.
    pub shared: bool,
}

impl Default for InitSearchConfig {
    fn default() -> Self {
        InitSearchConfig {
            candidates: 32,
            frames: 16,
            shared: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub iterations: usize,
    pub learning_rate: Scalar,
    pub beta1: Scalar,
    pub beta2: Scalar,
    pub weight_decay: Scalar,
    pub grad_clip: Scalar,
    pub fd_step: Scalar,
    pub granularity: Granularity,
    /// Parameter names frozen during optimization.
    pub freeze: Vec<String>,
    pub blowup_limit: usize,
    pub spsa_samples: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            iterations: 150,
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.0,
            grad_clip: 1.0,
            fd_step: 0.3,
            granularity: Granularity::Part,
            freeze: Vec::new(),
            blowup_limit: 8,
            spsa_samples: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct EvalConfig {
    /// F-score distance threshold in meters; when absent, 1% of the grid
    /// domain diagonal.
    pub tau: Option<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LabelConfig {
    /// Apply majority-vote smoothing to the part labels after loading.
    pub knn_smooth: bool,
    pub knn_k: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct HarnessConfig {
    pub init: InitSearchConfig,
    pub optimize: OptimizeConfig,
    pub dms: DmsConfig<Scalar>,
    pub eval: EvalConfig,
    pub labels: LabelConfig,
    pub bounds: ParamBounds<Scalar>,
}

impl HarnessConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(HarnessConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: HarnessConfig = serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    pub fn optimize_options(&self, seed: u64) -> anyhow::Result<OptimizeOptions<Scalar>> {
        let mut trainable = [true; PARAM_COUNT];
        for name in &self.optimize.freeze {
            let idx = rmpm_core::params::ParamIndex::ALL
                .iter()
                .find(|p| p.name() == name)
                .copied()
                .ok_or_else(|| anyhow::anyhow!("unknown parameter name in freeze list: {name}"))?;
            trainable[idx as usize] = false;
        }
        Ok(OptimizeOptions {
            iterations: self.optimize.iterations,
            learning_rate: self.optimize.learning_rate,
            beta1: self.optimize.beta1,
            beta2: self.optimize.beta2,
            weight_decay: self.optimize.weight_decay,
            grad_clip: self.optimize.grad_clip,
            fd_step: self.optimize.fd_step,
            granularity: self.optimize.granularity,
            trainable,
            dms: self.dms.clone(),
            blowup_limit: self.optimize.blowup_limit,
            spsa_samples: self.optimize.spsa_samples,
            seed,
        })
    }
}
