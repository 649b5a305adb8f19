//! Experiment orchestration: data, runs, surrogate references and logs.

pub mod config;
pub mod data;
pub mod log;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algorithm::{relative_error, IterateState, IterationLog, Problem, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::pde::ControlParam;
use crate::splitting::SplittingKind;

pub use config::{Experiment, ExperimentConfig, GridChoice, SplittingName, StepRuleName};
pub use data::{generate_data, ground_truth, phantom};
pub use log::{read_log, CsvLog};

pub use crate::pde::MeasurementSet;

/// Inner thread count from `PDPAP_THREADS`; defaults to 1.
pub fn threads_from_env() -> usize {
    std::env::var("PDPAP_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Measurements for a config: ground truth solve plus seeded noise.
pub fn measurements(cfg: &ExperimentConfig) -> Result<MeasurementSet> {
    let grid = cfg.grid.spec()?;
    let truth = ground_truth(cfg.experiment, &grid);
    generate_data(cfg.experiment.family(), &grid, &truth, cfg.m, cfg.seed, cfg.noise)
}

pub fn build_problem(cfg: &ExperimentConfig, threads: usize) -> Result<Problem> {
    cfg.validate()?;
    let grid = cfg.grid.spec()?;
    let data = measurements(cfg)?;
    Problem::new(cfg.experiment.family(), grid, data, cfg.beta, cfg.reg())?.with_options(SolverOptions {
        threads,
        freeze_control: false,
    })
}

pub struct RunOutcome {
    pub logs: Vec<IterationLog>,
    pub state: IterateState,
    pub problem: Problem,
}

impl RunOutcome {
    pub fn final_control(&self) -> &ControlParam {
        &self.state.x
    }
}

fn log_point(
    problem: &Problem,
    cfg: &ExperimentConfig,
    state: &IterateState,
    seconds: f64,
    reference: Option<&ControlParam>,
) -> Result<IterationLog> {
    let u = problem.primal_bundle(state);
    Ok(IterationLog {
        k: state.k,
        wall_clock_seconds: seconds,
        c_value: state.x.c,
        rel_error: reference.map(|r| relative_error(&state.x, r)).transpose()?,
        j_exact: if cfg.log_objective {
            Some(problem.objective(&state.x)?)
        } else {
            None
        },
        j_inexact: Some(problem.objective_at(&state.x, &u)?),
        residuals: if cfg.log_residuals {
            Some(problem.optimality_residuals(state)?)
        } else {
            None
        },
    })
}

/// Runs `cfg.iterations` outer iterations from the experiment's initial
/// control, logging at `k = 0`, every `log_every` iterations and at the end.
/// The clock covers iterations only; it is sampled at log points and logging
/// time is excluded. When `csv` is given, rows are written as they are
/// produced.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    reference: Option<&ControlParam>,
    csv: Option<&Path>,
    threads: usize,
) -> Result<RunOutcome> {
    let problem = build_problem(cfg, threads)?;
    let x0 = cfg.experiment.initial_control(problem.grid());
    let rule = cfg.step_rule();
    let kind = cfg.kind();
    let mut state = problem.initialize(x0, &rule, kind)?;
    let mut sink = csv.map(CsvLog::create).transpose()?;
    let mut logs = Vec::new();
    let mut record = |log: IterationLog, logs: &mut Vec<IterationLog>| -> Result<()> {
        if let Some(s) = sink.as_mut() {
            s.write(&log)?;
        }
        logs.push(log);
        Ok(())
    };
    record(log_point(&problem, cfg, &state, 0.0, reference)?, &mut logs)?;

    let mut elapsed = 0.0;
    let mut clock = Instant::now();
    for k in 1..=cfg.iterations {
        problem.iterate(&mut state, &rule, kind)?;
        if k % cfg.log_every == 0 || k == cfg.iterations {
            if cfg.record_time {
                elapsed += clock.elapsed().as_secs_f64();
            }
            record(log_point(&problem, cfg, &state, elapsed, reference)?, &mut logs)?;
            clock = Instant::now();
        }
    }
    Ok(RunOutcome { logs, state, problem })
}

/// Long-run iterate with exact PDE solves, standing in for the unknown
/// minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: ControlParam,
    pub iterations: usize,
    pub kind: SplittingKind,
    /// `c` at `iterations - tail` (tail stationarity check), if recorded.
    pub c_tail: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ReferenceFile {
    experiment: Experiment,
    n: usize,
    iterations: usize,
    splitting: SplittingName,
    c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_tail: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<f64>>,
}

impl ReferenceSolution {
    /// `|c_final - c_tail| / |c_final|`.
    pub fn tail_change(&self) -> Option<f64> {
        self.c_tail.map(|t| (self.x.c - t).abs() / self.x.c.abs())
    }

    pub fn save(&self, path: &Path, cfg: &ExperimentConfig) -> Result<()> {
        let file = ReferenceFile {
            experiment: cfg.experiment,
            n: cfg.grid.n_per_side(),
            iterations: self.iterations,
            splitting: SplittingName(self.kind),
            c: self.x.c,
            c_tail: self.c_tail,
            a: self.x.a.as_ref().map(|a| a.values.clone()),
        };
        let text = toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ReferenceFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let Some(a) = &file.a {
            if a.len() != file.n * file.n {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("field has {} values for n = {}", a.len(), file.n),
                });
            }
        }
        Ok(Self {
            x: ControlParam {
                a: file.a.map(|values| GridFunction { values }),
                c: file.c,
            },
            iterations: file.iterations,
            kind: file.splitting.0,
            c_tail: file.c_tail,
        })
    }
}

/// Runs the config with exact solves (`Full`) for `iterations` iterations.
/// Also records `c` at `iterations - tail` when `tail < iterations`.
pub fn compute_reference(cfg: &ExperimentConfig, iterations: usize, tail: usize) -> Result<ReferenceSolution> {
    if iterations < cfg.iterations {
        return Err(Error::Config(format!(
            "reference needs at least {} iterations, got {iterations}",
            cfg.iterations
        )));
    }
    let cfg = cfg.clone().with_splitting(SplittingKind::Full);
    let problem = build_problem(&cfg, threads_from_env())?;
    let rule = cfg.step_rule();
    let mut state = problem.initialize(
        cfg.experiment.initial_control(problem.grid()),
        &rule,
        SplittingKind::Full,
    )?;
    let mut c_tail = None;
    for k in 1..=iterations {
        problem.iterate(&mut state, &rule, SplittingKind::Full)?;
        if tail < iterations && k == iterations - tail {
            c_tail = Some(state.x.c);
        }
    }
    Ok(ReferenceSolution {
        x: state.x,
        iterations,
        kind: SplittingKind::Full,
        c_tail,
    })
}
