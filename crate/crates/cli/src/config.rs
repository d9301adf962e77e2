//! Experiment configuration files.

use std::path::Path;

use anyhow::Context;
use qobstacle::solver::{BoundaryData, SolverConfig, DEFAULT_WINDOW};
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    #[default]
    Minimize,
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    A,
    #[serde(rename = "s")]
    S,
    #[serde(rename = "epsilon")]
    Epsilon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Margin of the interior window `[margin, 1 - margin]³`.
    pub margin: f64,
    /// Distance levels for the scaling fit; the default ladder when absent.
    pub levels: Option<Vec<f64>>,
    /// Levels of the distance retraction used for the minimality check.
    pub comparison_levels: Vec<f64>,
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            margin: DEFAULT_WINDOW,
            levels: None,
            comparison_levels: vec![0.02, 0.05],
            cutoff_inner: 0.2,
            cutoff_outer: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: RunKind,
    pub n: usize,
    pub solver: SolverConfig,
    pub boundary: BoundaryData,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Amplitude of the seeded random perturbation of the initial guess.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Everything that can be rejected before any compute.
    pub fn validate(&self) -> Result<(), Invalid> {
        let fail = |e: qobstacle::Error| Invalid(e.to_string());
        qobstacle::solver::Grid::new(self.n).map_err(fail)?;
        self.solver.validate().map_err(fail)?;
        self.boundary.validate().map_err(fail)?;
        let a = &self.analysis;
        if !(0.0..0.5).contains(&a.margin) {
            return Err(Invalid(format!("analysis.margin must lie in [0, 1/2), got {}", a.margin)));
        }
        if !(0.0 < a.cutoff_outer && a.cutoff_outer < a.cutoff_inner && a.cutoff_inner < 0.5) {
            return Err(Invalid("cutoff margins must satisfy 0 < outer < inner < 1/2".into()));
        }
        if a.levels.iter().flatten().chain(&a.comparison_levels).any(|l| !(*l > 0.0)) {
            return Err(Invalid("analysis levels must be positive".into()));
        }
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(Invalid(format!("perturbation must be non-negative, got {}", self.perturbation)));
        }
        match (&self.kind, &self.sweep) {
            (RunKind::Sweep, None) => return Err(Invalid("kind = sweep needs a sweep section".into())),
            (_, Some(s)) if s.values.is_empty() => return Err(Invalid("sweep.values is empty".into())),
            _ => {}
        }
        if let Some(s) = &self.sweep {
            for &v in &s.values {
                self.with_sweep_value(s.axis, v)?.solver.validate().map_err(fail)?;
            }
        }
        Ok(())
    }

    /// Copy with one swept parameter replaced. An ε-sweep becomes the
    /// continuation schedule, so it is applied to all values at once.
    pub fn with_sweep_value(&self, axis: SweepAxis, v: f64) -> Result<Self, Invalid> {
        let mut c = self.clone();
        match axis {
            SweepAxis::A => {
                if c.solver.elastic.is_some() {
                    return Err(Invalid("an A-sweep needs the default elastic constants".into()));
                }
                c.solver.a = v;
            }
            SweepAxis::S => match c.solver.potential.as_mut().map(|p| &mut p.family) {
                Some(qobstacle::potentials::Family::InversePower { s, .. }) => *s = v,
                _ => return Err(Invalid("an s-sweep needs an inverse_power potential".into())),
            },
            SweepAxis::Epsilon => {
                if c.solver.potential.is_none() {
                    return Err(Invalid("an epsilon sweep needs a potential".into()));
                }
                c.solver.epsilon_schedule = self.sweep.as_ref().map(|s| s.values.clone()).unwrap_or_default();
            }
        }
        Ok(c)
    }
}
