//! Run configuration, read from TOML.
//!
//! ```toml
//! [problem]
//! n = 2
//! k = 2
//! sigma = 0.55
//! psi = { family = "constant", c = 0.36 }
//! subsolution = { family = "cap", sigma = 0.7, radius = 0.5, center = [0.0, 0.0] }
//!
//! [grid]
//! h = 0.03125
//!
//! [path]
//! eps = [0.1]
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use plateau_core::continuation::{ContinuationOptions, DiagnosticOptions, EpsilonSchedule, HPolicy};
use plateau_core::families::{PsiFamily, SubsolutionFamily};
use plateau_core::grid::SubsolutionSpec;
use plateau_core::solver::{ProblemSpec, SolverOptions};
use plateau_core::verify::{CheckOptions, RadialOptions};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub path: PathConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticOptions,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub k: usize,
    /// Barrier curvature used by the boundary gradient bound.
    pub sigma: f64,
    pub psi: PsiFamily,
    pub subsolution: SubsolutionFamily,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    /// When set, `h = min(h, h_ratio · ε)` on each level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    /// Strictly decreasing levels; `solve` uses the first.
    pub eps: Vec<f64>,
    /// Level of the stability probe; defaults to the first `eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_eps: Option<f64>,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub node_table: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: String::from("out"), node_table: true }
    }
}

/// Controls of the `verify` suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub curvature_samples: usize,
    pub jacobian_samples: usize,
    pub barrier_trials: usize,
    pub curvature_tol: f64,
    pub identity_tol: f64,
    pub jacobian_tol: f64,
    pub fd_step: f64,
    /// Relative tolerance against the radial oracle; radial problems only.
    pub radial_tol: f64,
    pub conditions: CheckOptions,
    pub radial: RadialOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            curvature_samples: 200,
            jacobian_samples: 100,
            barrier_trials: 50,
            curvature_tol: 1e-8,
            identity_tol: 1e-10,
            jacobian_tol: 1e-6,
            fd_step: 1e-6,
            radial_tol: 1e-2,
            conditions: CheckOptions::default(),
            radial: RadialOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let p = &self.problem;
        if p.n < 2 {
            return bad(format!("problem.n = {} must be at least 2", p.n));
        }
        if p.k == 0 || p.k > p.n {
            return bad(format!("problem.k = {} must satisfy 1 <= k <= n = {}", p.k, p.n));
        }
        if !(p.sigma > 0.0 && p.sigma < 1.0) {
            return bad(format!("problem.sigma = {} must lie in (0, 1)", p.sigma));
        }
        p.psi.validate(p.n).map_err(|e| ConfigError::Invalid(format!("problem.psi: {e}")))?;
        if p.subsolution.dim() != p.n {
            return bad(format!("problem.subsolution has dimension {}, expected {}", p.subsolution.dim(), p.n));
        }
        let sub = p.subsolution.build().map_err(|e| ConfigError::Invalid(format!("problem.subsolution: {e}")))?;
        if !(self.grid.h > 0.0) || !self.grid.h.is_finite() {
            return bad(format!("grid.h = {} must be positive", self.grid.h));
        }
        if let Some(r) = self.grid.h_ratio {
            if !(r > 0.0) {
                return bad(format!("grid.h_ratio = {r} must be positive"));
            }
        }
        if i64::try_from(self.verify.seed).is_err() {
            return bad(format!("verify.seed = {} does not fit in a TOML integer", self.verify.seed));
        }
        self.schedule()
            .validate(sub.max_value())
            .map_err(|e| ConfigError::Invalid(format!("path: {e}")))?;
        Ok(())
    }

    /// Problem at the first level of the schedule.
    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        let p = &self.problem;
        let invalid = |e: plateau_core::Error| ConfigError::Invalid(e.to_string());
        let sub = SubsolutionSpec::new(p.subsolution.build().map_err(invalid)?);
        ProblemSpec::new(p.n, p.k, Arc::new(p.psi.clone()), sub, self.path.eps[0], p.sigma).map_err(invalid)
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        let eps = &self.path.eps;
        EpsilonSchedule {
            eps_values: eps.clone(),
            eps_floor: eps.last().copied().unwrap_or(0.0),
            probe_eps: self.path.probe_eps.unwrap_or_else(|| eps.first().copied().unwrap_or(0.0)),
        }
    }

    pub fn h_policy(&self) -> HPolicy {
        match self.grid.h_ratio {
            Some(ratio) => HPolicy::Proportional { ratio, h_max: self.grid.h },
            None => HPolicy::Fixed { h: self.grid.h },
        }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        ContinuationOptions {
            solver: self.solver.clone(),
            h_policy: self.h_policy(),
            diagnostics: self.diagnostics.clone(),
            warm_start: self.path.warm_start,
        }
    }
}
