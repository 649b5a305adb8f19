use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdpap::harness::data::write_measurements;
use pdpap::harness::{self, ExperimentConfig, ReferenceSolution};
use pdpap::splitting::diagnose_with;
use pdpap::splitting::DiagnoseOptions;
use pdpap::Result;

#[derive(Parser)]
#[command(name = "pdpap", version, about = "Primal-dual proximal splitting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic measurements and the ground truth for a config.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the iteration and write `log.csv` and the final control.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference control for the relative-error column.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Compute a long-run reference with exact PDE solves.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        iters: usize,
        #[arg(long)]
        out: PathBuf,
        /// Record c this many iterations before the end.
        #[arg(long, default_value_t = 1000)]
        tail: usize,
    },
    /// Print splitting diagnostics at the initial control.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        power_iters: usize,
    },
    /// Print a config with the stock parameters of an experiment.
    Template {
        #[arg(value_parser = ["exp1", "exp2"])]
        experiment: String,
        #[arg(long, default_value = "coarse")]
        grid: String,
    },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            let grid = cfg.grid.spec()?;
            let data = harness::measurements(&cfg)?;
            std::fs::create_dir_all(&out)?;
            write_measurements(&out.join("measurements.csv"), &grid, &data)?;
            let truth = ReferenceSolution {
                x: harness::ground_truth(cfg.experiment, &grid),
                iterations: 0,
                kind: pdpap::SplittingKind::Full,
                c_tail: None,
            };
            truth.save(&out.join("ground_truth.toml"), &cfg)?;
            println!(
                "wrote {} conditions on {} nodes to {}",
                data.z.len(),
                grid.node_count(),
                out.display()
            );
        }
        Command::Run { config, out, reference } => {
            let cfg = ExperimentConfig::load(&config)?;
            let reference = reference.map(|p| ReferenceSolution::load(&p)).transpose()?;
            std::fs::create_dir_all(&out)?;
            let log_path = out.join("log.csv");
            let outcome = harness::run_experiment(
                &cfg,
                reference.as_ref().map(|r| &r.x),
                Some(&log_path),
                harness::threads_from_env(),
            )?;
            let final_x = ReferenceSolution {
                x: outcome.state.x.clone(),
                iterations: outcome.state.k,
                kind: cfg.kind(),
                c_tail: None,
            };
            final_x.save(&out.join("final.toml"), &cfg)?;
            if let Some(last) = outcome.logs.last() {
                println!(
                    "k={} c={} relerr={} J={} t={:.3}s",
                    last.k,
                    last.c_value,
                    fmt_opt(last.rel_error),
                    fmt_opt(last.j_exact.or(last.j_inexact)),
                    last.wall_clock_seconds
                );
            }
        }
        Command::Reference {
            config,
            iters,
            out,
            tail,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = harness::compute_reference(&cfg, iters, tail)?;
            r.save(&out, &cfg)?;
            println!(
                "reference after {} iterations: c={} tail change={}",
                r.iterations,
                r.x.c,
                fmt_opt(r.tail_change())
            );
        }
        Command::Diagnose { config, power_iters } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = harness::build_problem(&cfg, 1)?;
            let x0 = cfg.experiment.initial_control(problem.grid());
            let sys = problem.assembler().assemble(&x0)?;
            let opts = DiagnoseOptions {
                max_iters: power_iters,
                ..DiagnoseOptions::default()
            };
            let report = diagnose_with(cfg.kind(), &sys.matrix, opts);
            println!("splitting        {}", cfg.kind());
            println!("gamma_N          {}", fmt_opt(report.gamma_n));
            println!("alpha            {}", fmt_opt(report.alpha));
            println!("diag dominant    {}", report.diag_dominant);
            println!("spd              {}", report.spd);
            println!("tau*sigma*|K|^2  {:.6}", cfg.step_product()?);
        }
        Command::Template { experiment, grid } => {
            let exp = if experiment == "exp1" {
                harness::Experiment::Exp1
            } else {
                harness::Experiment::Exp2
            };
            let grid = harness::GridChoice::try_from(grid)?;
            print!("{}", ExperimentConfig::preset(exp, grid).to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
