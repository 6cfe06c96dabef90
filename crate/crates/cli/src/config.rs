//! JSON run configuration. Every block is optional; `{}` is the baseline.

use std::path::{Path, PathBuf};

use nadir_core::optimizer::SolveConfig;
use nadir_core::oracles::montecarlo::SimConfig;
use nadir_core::params::{scale_noise, EventSpec, NoiseScaling, SystemParams};
use nadir_core::sweep::{ClassifyConfig, GridSpec, SweepBase};
use nadir_core::validation::ValidationConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Physical(PhysicalNoise),
    Scaled(ScaledNoise),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalNoise {
    pub sigma: f64,
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledNoise {
    pub sigma_tilde: f64,
    pub lambda_tilde: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Physical(PhysicalNoise {
            sigma: 0.2916,
            lambda: 1e-3,
            epsilon: 0.1,
        })
    }
}

impl NoiseSpec {
    pub fn scaling(&self) -> nadir_core::Result<NoiseScaling> {
        match *self {
            NoiseSpec::Physical(p) => scale_noise(p.sigma, p.lambda, p.epsilon),
            NoiseSpec::Scaled(s) => NoiseScaling::new(s.epsilon, s.sigma_tilde, s.lambda_tilde),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeterministicBlock {
    pub k: Vec<u32>,
    pub points: usize,
}

impl Default for DeterministicBlock {
    fn default() -> Self {
        DeterministicBlock {
            k: vec![1, 2],
            points: 2001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InertiaBlock {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for InertiaBlock {
    fn default() -> Self {
        InertiaBlock {
            min: 1.0,
            max: 20.0,
            points: 39,
        }
    }
}

/// Bisection for the `k*` step along `σ` at fixed `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryBlock {
    pub enabled: bool,
    pub lambda: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub tol: f64,
}

impl Default for BoundaryBlock {
    fn default() -> Self {
        BoundaryBlock {
            enabled: true,
            lambda: 1e-3,
            sigma_min: 0.03,
            sigma_max: 0.5,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub svg: bool,
    pub dump_matrices: bool,
    pub histogram_bins: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: PathBuf::from("out"),
            svg: false,
            dump_matrices: false,
            histogram_bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemParams,
    pub event: EventSpec,
    pub noise: NoiseSpec,
    pub solver: SolveConfig,
    pub sweep: GridSpec,
    pub boundary: BoundaryBlock,
    pub inertia: InertiaBlock,
    pub deterministic: DeterministicBlock,
    pub simulation: SimConfig,
    pub validation: ValidationConfig,
    pub classification: ClassifyConfig,
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.to_owned(), e))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.system.validate()?;
        EventSpec::new(self.event.gamma)?;
        self.noise.scaling()?;
        self.solver.validate()?;
        self.sweep.validate()?;
        self.simulation.validate()?;
        if !(self.classification.gaussian_share >= 0.0 && self.classification.gaussian_share <= 1.0) {
            return Err(CliError::Config("classification.gaussian_share must lie in [0, 1]".into()));
        }
        if self.output.histogram_bins == 0 {
            return Err(CliError::Config("output.histogram_bins must be >= 1".into()));
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.solver.seed = seed;
        self.simulation.seed = seed;
        self.validation.seed = seed;
    }

    pub fn sweep_base(&self) -> Result<SweepBase, CliError> {
        let noise = self.noise.scaling()?;
        let mut base = SweepBase::new(self.system, self.event.gamma, noise.sigma(), noise.lambda(), noise.epsilon);
        base.solver = self.solver;
        base.classify = self.classification;
        Ok(base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_baseline() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let noise = cfg.noise.scaling().unwrap();
        assert!((noise.lambda_tilde - 0.690_775_527_898_213_7).abs() < 1e-12);
        assert_eq!(cfg.event.gamma, 0.1397);
    }

    #[test]
    fn noise_forms() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"noise": {"sigma_tilde": 1.0, "lambda_tilde": 0.5, "epsilon": 0.2}}"#).unwrap();
        assert!(matches!(cfg.noise, NoiseSpec::Scaled(_)));
        let mixed = r#"{"noise": {"sigma": 0.1, "lambda": 1e-3, "sigma_tilde": 1.0, "lambda_tilde": 0.5}}"#;
        assert!(serde_json::from_str::<RunConfig>(mixed).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"systm": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"system": {"mass": 3}}"#).is_err());
    }

    #[test]
    fn sweep_axes_parse() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"sweep": {"axes": [{"name": "gamma", "min": 0.1, "max": 0.2, "points": 3}]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.sweep.axes.len(), 1);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sweep": {"axes": [{"name": "alpha", "min": 0, "max": 1, "points": 2}]}}"#).is_err());
    }
}
