//! Experiment configuration files: flat `key = value` TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithm::StepRule;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::pde::{ControlParam, PdeFamily};
use crate::prox::{constant_diffusion, Coupling, RegConfig};
use crate::splitting::SplittingKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    /// Scalar reaction coefficient.
    Exp1,
    /// Diffusion field plus scalar reaction coefficient, TV regularized.
    Exp2,
}

impl Experiment {
    pub fn family(&self) -> PdeFamily {
        match self {
            Experiment::Exp1 => PdeFamily::ScalarReaction,
            Experiment::Exp2 => PdeFamily::DiffusionReaction,
        }
    }

    /// Initial control: `c⁰ = 4` for the scalar case, `a⁰ ≡ 1`, `c⁰ = 2`
    /// for the diffusion case.
    pub fn initial_control(&self, grid: &GridSpec) -> ControlParam {
        match self {
            Experiment::Exp1 => ControlParam::scalar(4.0),
            Experiment::Exp2 => constant_diffusion(grid, 1.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GridChoice {
    Coarse,
    Fine,
    Custom(usize),
}

impl GridChoice {
    pub fn n_per_side(&self) -> usize {
        match self {
            GridChoice::Coarse => 51,
            GridChoice::Fine => 101,
            GridChoice::Custom(n) => *n,
        }
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.n_per_side())
    }
}

impl TryFrom<String> for GridChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        match s.trim() {
            "coarse" => Ok(GridChoice::Coarse),
            "fine" => Ok(GridChoice::Fine),
            other => other
                .parse::<usize>()
                .map(GridChoice::Custom)
                .map_err(|_| Error::Config(format!("grid must be coarse, fine or a node count, got {other:?}"))),
        }
    }
}

impl From<GridChoice> for String {
    fn from(g: GridChoice) -> Self {
        match g {
            GridChoice::Coarse => "coarse".into(),
            GridChoice::Fine => "fine".into(),
            GridChoice::Custom(n) => n.to_string(),
        }
    }
}

/// Splitting kind stored as its string name (`jacobi`, `sor:1`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SplittingName(pub SplittingKind);

impl TryFrom<String> for SplittingName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse().map(SplittingName)
    }
}

impl From<SplittingName> for String {
    fn from(s: SplittingName) -> Self {
        s.0.to_string()
    }
}

/// Step-rule selector: `constant`, `accelerated:<γ̃_F>` or
/// `linear:<γ̃_F>:<γ̃_G*>`. `tau`, `sigma` and `omega` come from the
/// surrounding config where the rule uses them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StepRuleName {
    Constant,
    Accelerated { gamma_f: f64 },
    LinearRate { gamma_f: f64, gamma_gstar: f64 },
}

impl TryFrom<String> for StepRuleName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let bad = || Error::Config(format!("bad step rule {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["constant"] => Ok(StepRuleName::Constant),
            ["accelerated", g] => Ok(StepRuleName::Accelerated { gamma_f: num(g)? }),
            ["linear", f, g] => Ok(StepRuleName::LinearRate {
                gamma_f: num(f)?,
                gamma_gstar: num(g)?,
            }),
            _ => Err(bad()),
        }
    }
}

impl From<StepRuleName> for String {
    fn from(r: StepRuleName) -> Self {
        match r {
            StepRuleName::Constant => "constant".into(),
            StepRuleName::Accelerated { gamma_f } => format!("accelerated:{gamma_f}"),
            StepRuleName::LinearRate { gamma_f, gamma_gstar } => format!("linear:{gamma_f}:{gamma_gstar}"),
        }
    }
}

fn default_noise() -> f64 {
    0.01
}

fn default_log_every() -> usize {
    100
}

fn default_true() -> bool {
    true
}

fn default_rule() -> StepRuleName {
    StepRuleName::Constant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub grid: GridChoice,
    pub splitting: SplittingName,
    pub iterations: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub sigma: f64,
    pub omega: f64,
    pub lambda: f64,
    pub m: usize,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Relative noise level of the synthetic measurements.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_rule")]
    pub step_rule: StepRuleName,
    /// Log `J` with an exact solve at every log point.
    #[serde(default = "default_true")]
    pub log_objective: bool,
    /// Log optimality residuals at every log point.
    #[serde(default)]
    pub log_residuals: bool,
    /// Record wall-clock time; when off, `t_sec` is logged as 0 so repeated
    /// runs give byte-identical logs.
    #[serde(default = "default_true")]
    pub record_time: bool,
}

impl ExperimentConfig {
    /// Stock parameter set of an experiment on the given grid.
    pub fn preset(experiment: Experiment, grid: GridChoice) -> Self {
        let fine = grid == GridChoice::Fine;
        let (alpha, gamma, m) = match experiment {
            Experiment::Exp1 => (1e-5, 0.0, 6),
            Experiment::Exp2 => (0.0, 1e-2, 10),
        };
        let (tau, iterations) = match (experiment, fine) {
            (Experiment::Exp1, false) => (2.5e-2, 20_000),
            (Experiment::Exp1, true) => (2.0e-3, 125_000),
            (Experiment::Exp2, false) => (2.5e-2, 200_000),
            (Experiment::Exp2, true) => (1e-2, 500_000),
        };
        Self {
            experiment,
            grid,
            splitting: SplittingName(SplittingKind::Full),
            iterations,
            seed: 1,
            alpha,
            beta: 1e2,
            gamma,
            tau,
            sigma: 1.0,
            omega: 1.0,
            lambda: 0.1,
            m,
            log_every: default_log_every(),
            output: None,
            noise: default_noise(),
            step_rule: StepRuleName::Constant,
            log_objective: true,
            log_residuals: false,
            record_time: true,
        }
    }

    pub fn kind(&self) -> SplittingKind {
        self.splitting.0
    }

    pub fn with_splitting(mut self, kind: SplittingKind) -> Self {
        self.splitting = SplittingName(kind);
        self
    }

    pub fn reg(&self) -> RegConfig {
        RegConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            gamma: self.gamma,
        }
    }

    pub fn step_rule(&self) -> StepRule {
        match self.step_rule {
            StepRuleName::Constant => StepRule::Constant {
                tau: self.tau,
                sigma: self.sigma,
                omega: self.omega,
            },
            StepRuleName::Accelerated { gamma_f } => StepRule::Accelerated {
                tau0: self.tau,
                sigma0: self.sigma,
                gamma_f,
            },
            StepRuleName::LinearRate { gamma_f, gamma_gstar } => StepRule::LinearRate {
                tau: self.tau,
                gamma_f,
                gamma_gstar,
            },
        }
    }

    /// `τσ‖K‖²` for the configured problem (0 without total variation).
    pub fn step_product(&self) -> Result<f64> {
        let grid = self.grid.spec()?;
        let k = Coupling::for_problem(self.experiment.family(), grid, &self.reg())?;
        let (tau, sigma) = self.step_rule().initial();
        Ok(tau * sigma * k.estimate_norm().powi(2))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.spec()?;
        self.reg().validate()?;
        self.kind().validate()?;
        self.step_rule().validate()?;
        if self.m == 0 || !self.m.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "m must be a positive even number (cos/sin pairs), got {}",
                self.m
            )));
        }
        if !(self.beta >= 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("beta and noise must be nonnegative".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        if self.gamma > 0.0 {
            if self.experiment == Experiment::Exp1 {
                return Err(Error::Config("gamma > 0 needs the diffusion experiment".into()));
            }
            let product = self.step_product()?;
            if !(product < 1.0) {
                return Err(Error::Config(format!(
                    "step condition tau*sigma*|K|^2 < 1 violated: {product}"
                )));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
