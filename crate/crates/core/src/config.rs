//! Experiment configuration: one JSON document, every key optional.
//!
//! ```json
//! {
//!   "group": "su2", "n": 4, "m": 13, "seed": 0,
//!   "generator": {"kind": "singular_model", "epsilon": 0.05},
//!   "strat": {"epsilon": null, "kappa": 0.5, "d": 8.0, "c_r": 4.0},
//!   "m_max": 3,
//!   "sampling": {"base_samples": 256, "inductive_samples": 128, "tol": 1e-9, "delta": 0.5},
//!   "coulomb": {"tol": 1e-9, "max_iter": 200, "threshold": 0.2},
//!   "audits": {"lipschitz_pairs": 200, "stokes_triangles": 40},
//!   "bounds": {"truncation_factor": 20.0},
//!   "threads": null,
//!   "out": "gfrg-out"
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coulomb::CoulombConfig;
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::gaugebuild::SamplingConfig;
use crate::generate::{GeneratorKind, GeneratorSpec};
use crate::lie::Group;
use crate::morrey::StratConfig;

/// Stratification constants; `epsilon: None` means the measured
/// scale-invariant Morrey norm of F, floored at the generator amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StratSettings {
    pub epsilon: Option<f64>,
    pub kappa: f64,
    pub d: f64,
    pub c_r: f64,
}

impl Default for StratSettings {
    fn default() -> Self {
        let s = StratConfig::default();
        StratSettings { epsilon: None, kappa: s.kappa, d: s.d, c_r: s.c_r }
    }
}

impl StratSettings {
    pub fn resolve(&self, measured: f64, floor: f64) -> StratConfig {
        StratConfig { epsilon: self.epsilon.unwrap_or(measured.max(floor)), kappa: self.kappa, d: self.d, c_r: self.c_r }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSizes {
    pub lipschitz_pairs: usize,
    pub stokes_triangles: usize,
    pub density_balls: usize,
    pub density_points: usize,
    pub bootstrap_balls: usize,
    /// Amplitude of the random gauge in the gauge-invariance audit.
    pub gauge_amplitude: f64,
}

impl Default for AuditSizes {
    fn default() -> Self {
        AuditSizes {
            lipschitz_pairs: 200,
            stokes_triangles: 40,
            density_balls: 100,
            density_points: 256,
            bootstrap_balls: 20,
            gauge_amplitude: 0.1,
        }
    }
}

/// Thresholds of the assertions a run must pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    /// ||F(truncated)||_{M^{n/2}_2} <= factor * generator epsilon.
    pub truncation_factor: f64,
    /// Spread (max/min) of the truncation constant across levels.
    pub truncation_spread: f64,
    pub stokes_ratio: f64,
    /// Gauge-invariance defect of |F| relative to max |F|.
    pub gauge_defect: f64,
    pub coulomb_divergence: f64,
    pub boundary_defect: f64,
    pub density: f64,
    /// Flat input: max |sigma_m(A)| on Omega_m.
    pub flat_residual: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            truncation_factor: 20.0,
            truncation_spread: 2.0,
            stokes_ratio: 2.0,
            gauge_defect: 1e-2,
            coulomb_divergence: 1e-6,
            boundary_defect: 1e-6,
            density: 0.01,
            flat_residual: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub group: Group,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub generator: GeneratorSpec,
    pub strat: StratSettings,
    pub m_max: u32,
    pub sampling: SamplingConfig,
    pub coulomb: CoulombConfig,
    pub audits: AuditSizes,
    pub bounds: Bounds,
    /// Worker threads; GFRG_THREADS or all cores when absent.
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            group: Group::SU2,
            n: 4,
            m: 13,
            seed: 0,
            generator: GeneratorSpec { kind: GeneratorKind::SingularModel, ..Default::default() },
            strat: StratSettings::default(),
            m_max: 3,
            sampling: SamplingConfig::default(),
            coulomb: CoulombConfig::default(),
            audits: AuditSizes::default(),
            bounds: Bounds::default(),
            threads: None,
            out: PathBuf::from("gfrg-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n, self.m)?;
        if !matches!(self.group, Group::U1 | Group::SU2) {
            return Err(Error::InvalidInput(format!("group {:?} not supported by the pipeline", self.group)));
        }
        if self.m_max == 0 {
            return Err(Error::InvalidInput("m_max must be at least 1".into()));
        }
        if let Some(e) = self.strat.epsilon {
            if !(e > 0.0) {
                return Err(Error::InvalidInput(format!("strat.epsilon must be positive, got {e}")));
            }
        }
        self.strat.resolve(1.0, 1.0).validate()?;
        if !(self.sampling.delta > 0.0 && self.sampling.delta < 1.0) {
            return Err(Error::InvalidInput(format!("sampling.delta must lie in (0, 1), got {}", self.sampling.delta)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefaultOrigin {
    pub key: String,
    pub value: String,
    /// "theory" when the value is fixed by the construction, "tuned" when it
    /// was chosen for the reference lattices.
    pub origin: String,
}

/// Where each constant's default comes from.
pub fn default_origins(cfg: &ExperimentConfig) -> Vec<DefaultOrigin> {
    let row = |key: &str, value: String, origin: &str| DefaultOrigin { key: key.into(), value, origin: origin.into() };
    let eps = match cfg.strat.epsilon {
        Some(e) => format!("{e}"),
        None => "measured".into(),
    };
    vec![
        row("strat.kappa", format!("{}", cfg.strat.kappa), "theory"),
        row("strat.epsilon", eps, "tuned"),
        row("strat.d", format!("{}", cfg.strat.d), "tuned"),
        row("strat.c_r", format!("{}", cfg.strat.c_r), "tuned"),
        row("sampling.delta", format!("{}", cfg.sampling.delta), "tuned"),
        row("sampling.tol", format!("{:e}", cfg.sampling.tol), "tuned"),
        row("sampling.base_samples", cfg.sampling.base_samples.to_string(), "tuned"),
        row("sampling.inductive_samples", cfg.sampling.inductive_samples.to_string(), "tuned"),
        row("sampling.clearance", format!("{}", cfg.sampling.clearance), "tuned"),
        row("sampling.max_drop_fraction", format!("{}", cfg.sampling.max_drop_fraction), "tuned"),
        row("coulomb.threshold", format!("{}", cfg.coulomb.threshold), "tuned"),
        row("coulomb.tol", format!("{:e}", cfg.coulomb.tol), "tuned"),
        row("bounds.truncation_factor", format!("{}", cfg.bounds.truncation_factor), "tuned"),
        row("lipschitz.c1", "reported".into(), "tuned"),
        row("cover.dilation", "5".into(), "theory"),
        row("cover.support", "10".into(), "theory"),
        row("truncation.far_region", "20".into(), "theory"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn partial_document_overrides() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"group":"u1","n":3,"m":17,"generator":{"kind":"zero"},"strat":{"epsilon":0.1}}"#).unwrap();
        assert_eq!((c.group, c.n, c.m, c.generator.kind), (Group::U1, 3, 17, GeneratorKind::Zero));
        assert_eq!(c.strat.epsilon, Some(0.1));
        assert_eq!(c.strat.kappa, 0.5);
    }

    #[test]
    fn invalid_values_rejected() {
        let c = ExperimentConfig { m: 1, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { strat: StratSettings { kappa: 1.5, ..Default::default() }, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
