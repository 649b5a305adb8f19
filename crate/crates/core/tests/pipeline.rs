use std::process::Command;

use pdpap::algorithm::SolverOptions;
use pdpap::harness::{
    self, build_problem, run_experiment, Experiment, ExperimentConfig, GridChoice, ReferenceSolution,
};
use pdpap::pde::solve_exact;
use pdpap::{SplittingKind, StepRule};

fn exp1(n: usize, iterations: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Experiment::Exp1, GridChoice::Custom(n));
    cfg.iterations = iterations;
    cfg
}

fn exp2(n: usize, iterations: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Experiment::Exp2, GridChoice::Custom(n));
    cfg.iterations = iterations;
    cfg
}

#[test]
fn exact_solves_reach_a_stationary_point() {
    let cfg = exp1(11, 3000);
    let out = run_experiment(&cfg, None, None, 1).unwrap();
    let r = out.problem.optimality_residuals(&out.state).unwrap();
    for (name, v) in [
        ("pde", r.pde),
        ("adjoint", r.adjoint),
        ("control", r.control),
        ("dual", r.dual),
    ] {
        assert!(v < 1e-8, "{name} residual {v}");
    }
}

#[test]
fn frozen_control_reduces_to_plain_linear_iteration() {
    for kind in [
        SplittingKind::Jacobi,
        SplittingKind::GaussSeidel,
        SplittingKind::QuasiCg,
    ] {
        let cfg = exp2(9, 0).with_splitting(kind);
        let problem = build_problem(&cfg, 1)
            .unwrap()
            .with_options(SolverOptions {
                threads: 1,
                freeze_control: true,
            })
            .unwrap();
        let x0 = cfg.experiment.initial_control(problem.grid());
        let rule = StepRule::Constant {
            tau: cfg.tau,
            sigma: cfg.sigma,
            omega: cfg.omega,
        };
        let mut state = problem.initialize(x0.clone(), &rule, kind).unwrap();
        // perturb the solver states, then let the splitting pull them back
        for s in state.solver_u.iter_mut().chain(state.solver_w.iter_mut()) {
            s.u.iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v += ((i * 7919) % 13) as f64 * 0.01);
            s.fresh = true;
        }
        for _ in 0..3000 {
            problem.iterate(&mut state, &rule, kind).unwrap();
        }
        assert_eq!(state.x, x0);
        let exact = solve_exact(&problem.assembler().assemble(&x0).unwrap()).unwrap();
        let u = problem.primal_bundle(&state);
        for (a, b) in u.fields.iter().zip(&exact.fields) {
            let d = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(d < 1e-9, "{kind}: {d}");
        }
    }
}

#[test]
fn seeded_runs_write_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = exp2(11, 300).with_splitting(SplittingKind::GaussSeidel);
    cfg.record_time = false;
    cfg.log_every = 50;
    cfg.log_residuals = true;
    let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    run_experiment(&cfg, None, Some(&p1), 1).unwrap();
    run_experiment(&cfg, None, Some(&p2), 2).unwrap();
    let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(a, b);
    let logs = harness::read_log(&p1).unwrap();
    assert_eq!(logs.len(), 7);
    assert!(logs.iter().all(|l| l.residuals.is_some()));
}

#[test]
fn iterates_stay_feasible_and_duals_stay_in_the_ball() {
    let mut cfg = exp2(13, 1000).with_splitting(SplittingKind::Jacobi);
    cfg.log_every = 1;
    let problem = build_problem(&cfg, 1).unwrap();
    let rule = cfg.step_rule();
    let mut state = problem
        .initialize(cfg.experiment.initial_control(problem.grid()), &rule, cfg.kind())
        .unwrap();
    for _ in 0..cfg.iterations {
        problem.iterate(&mut state, &rule, cfg.kind()).unwrap();
        assert!(problem.reg().is_feasible(&state.x));
        assert!(state.y.max_pointwise_norm(problem.grid()) <= cfg.gamma + 1e-12);
    }
}

#[test]
fn command_line_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_pdpap");
    let cfg_path = dir.path().join("exp.toml");
    let out = Command::new(bin)
        .args(["template", "exp1", "--grid", "9"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut cfg = ExperimentConfig::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    cfg.iterations = 200;
    cfg.save(&cfg_path).unwrap();

    let cfgs = cfg_path.to_str().unwrap();
    let data = dir.path().join("data");
    let reference = dir.path().join("ref.toml");
    let run = dir.path().join("run");
    let ok = |args: &[&str]| {
        let o = Command::new(bin).args(args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    ok(&["generate-data", "--config", cfgs, "--out", data.to_str().unwrap()]);
    assert!(data.join("measurements.csv").exists());
    ok(&[
        "reference",
        "--config",
        cfgs,
        "--iters",
        "400",
        "--out",
        reference.to_str().unwrap(),
        "--tail",
        "100",
    ]);
    let r = ReferenceSolution::load(&reference).unwrap();
    assert_eq!(r.iterations, 400);
    ok(&[
        "run",
        "--config",
        cfgs,
        "--out",
        run.to_str().unwrap(),
        "--reference",
        reference.to_str().unwrap(),
    ]);
    let logs = harness::read_log(&run.join("log.csv")).unwrap();
    assert_eq!(logs.last().unwrap().k, 200);
    assert!(logs.iter().all(|l| l.rel_error.is_some()));
    let diag = ok(&["diagnose", "--config", cfgs]);
    assert!(diag.contains("alpha"));

    let bad = Command::new(bin)
        .args(["run", "--config", "/nonexistent.toml", "--out", "x"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
