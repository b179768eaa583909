//! Batch CLI over the library: simulate paths, build solver artifacts,
//! evaluate strategies, and reproduce the result tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use aquafarm::experiments::{
    emit_trajectory, render_table, run_fd_scenarios, table_rows, write_csv, ExperimentConfig,
    Preset, ReportRow, Session,
};
use aquafarm::fd::{stability_check, SolveMode};
use aquafarm::model::BiologicalControl;
use aquafarm::payoff::StopAtStep;
use aquafarm::pinn::ControlApproach;

#[derive(Parser)]
#[command(name = "aquafarm", version, about = "Joint feeding-control and harvest-timing solvers for the stochastic fish-farm model")]
struct Cli {
    /// Configuration file overlaying the preset (a previous run's
    /// manifest.toml reproduces that run exactly)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scale preset: desk (minutes) or paper (production scale)
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Override the shared Monte-Carlo seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact and report directory
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores); results are identical either way,
    /// single-threaded runs are the reference for byte-exactness
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the shared price-path batch and export it as CSV
    SimulatePaths,
    /// Run the finite-difference solver and store the solution dump
    FdSolve {
        /// Solve the pure control problem instead of the joint one
        #[arg(long)]
        control_only: bool,
        /// Truncate the horizon at the biomass peak (control-only)
        #[arg(long)]
        truncate_at_peak: bool,
    },
    /// Train the value network (and control network) for one approach
    PinnTrain {
        /// Control approach: 1 = feedback, 2 = mean-error net, 3 = grid-hinge net
        #[arg(long, default_value_t = 1)]
        approach: u32,
    },
    /// Train the deep stopping rule for a named control policy
    DeeposTrain {
        /// Policy: "uf" (biological), "u0" (starve), "fd" (joint solver),
        /// "pinn-1|2|3" (network solver)
        #[arg(long, default_value = "uf")]
        policy: String,
    },
    /// Evaluate one scenario id on the shared batch
    Evaluate {
        /// Scenario id, e.g. bench-tau1-uf, fd-6, pinn-2, pinn-deepos-3
        scenario: String,
    },
    /// Reproduce a result table (2, 4, 5, 6, 7, 8, 9)
    Reproduce {
        #[arg(long)]
        table: u32,
    },
    /// Export one path's trajectory for a scenario as a figure CSV
    Trajectory {
        scenario: String,
        #[arg(long, default_value_t = 0)]
        path: usize,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("initializing the thread pool")?;
    }
    let preset: Preset = cli.preset.parse()?;
    let mut cfg = ExperimentConfig::load(preset, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    cfg.write_manifest(&cli.out_dir)?;
    let session = Session::new(cfg, cli.out_dir.clone())?;

    match cli.command {
        Command::SimulatePaths => {
            let path = cli.out_dir.join("paths.csv");
            let mut out = BufWriter::new(File::create(&path)?);
            session.eval_paths().write_csv(&mut out)?;
            out.flush()?;
            println!(
                "wrote {} paths x {} steps to {}",
                session.eval_paths().n_paths,
                session.eval_paths().n_steps,
                path.display()
            );
        }
        Command::FdSolve {
            control_only,
            truncate_at_peak,
        } => {
            let report = stability_check(&session.cfg.grid, session.params(), session.feeding());
            println!("{report}");
            if !report.is_stable() {
                bail!("refusing to run the explicit scheme on an unstable grid");
            }
            let sol = match (control_only, truncate_at_peak) {
                (false, false) => session.fd_vi()?,
                (true, false) => session.fd_control_full()?,
                (true, true) => session.fd_control_truncated()?,
                (false, true) => bail!("--truncate-at-peak requires --control-only"),
            };
            let mode = match sol.mode {
                SolveMode::VariationalInequality => "joint (variational inequality)",
                SolveMode::ControlOnly => "control only",
            };
            println!(
                "solved {mode} to horizon {:.4}; V(0, x0) = {:.6} (retained {} slices)",
                sol.horizon,
                session.h0_scale() * sol.v0,
                sol.retained_steps.len()
            );
        }
        Command::PinnTrain { approach } => {
            let approach = parse_approach(approach)?;
            let sol = session.pinn(approach)?;
            match sol.loss_history.last() {
                Some(r) => println!(
                    "trained {} for {} epochs; final losses: pde {:.3e}, boundary {:.3e}, terminal {:.3e}",
                    approach.label(),
                    sol.loss_history.len(),
                    r.pde,
                    r.boundary,
                    r.terminal
                ),
                None => println!("loaded cached networks for {}", approach.label()),
            }
        }
        Command::DeeposTrain { policy } => {
            let bio = BiologicalControl(session.feeding().clone());
            let rule = match policy.as_str() {
                "uf" => session.deepos_rule(&bio, "bench-uf")?,
                "u0" => session.deepos_rule(&aquafarm::model::ZeroControl, "bench-u0")?,
                "fd" => {
                    let vi = session.fd_vi()?;
                    session.deepos_rule(&vi.policy(), "fdstar")?
                }
                p if p.starts_with("pinn-") => {
                    let idx: usize = p.trim_start_matches("pinn-").parse()?;
                    let approach = parse_approach(idx as u32)?;
                    let sol = session.pinn(approach)?;
                    let pol = sol.policy(session.params(), session.feeding());
                    session.deepos_rule(&pol, &format!("pinn-{}", approach.label()))?
                }
                other => bail!("unknown policy {other:?}"),
            };
            println!(
                "stopping rule ready: {} decision times (every {} steps)",
                rule.decision_steps().len(),
                session.cfg.deepos.stride
            );
        }
        Command::Evaluate { scenario } => {
            let rows = evaluate_scenario(&session, &scenario)?;
            print!("{}", render_table(&rows));
            write_rows(&cli.out_dir, &format!("evaluate_{scenario}.csv"), &rows)?;
        }
        Command::Reproduce { table } => {
            let rows = table_rows(&session, table)?;
            print!("{}", render_table(&rows));
            write_rows(&cli.out_dir, &format!("table{table}.csv"), &rows)?;
        }
        Command::Trajectory { scenario, path } => {
            let file = cli.out_dir.join(format!("trajectory_{scenario}_{path}.csv"));
            let mut out = BufWriter::new(File::create(&file)?);
            emit_trajectory(&session, &scenario, path, &mut out)?;
            out.flush()?;
            println!("wrote {}", file.display());
        }
    }
    Ok(())
}

fn parse_approach(approach: u32) -> Result<ControlApproach> {
    Ok(match approach {
        1 => ControlApproach::Feedback,
        2 => ControlApproach::MeanError,
        3 => ControlApproach::HingeGrid,
        other => bail!("approach must be 1, 2 or 3 (got {other})"),
    })
}

fn evaluate_scenario(session: &Session, scenario: &str) -> Result<Vec<ReportRow>> {
    match scenario {
        s if s.starts_with("bench-") => pick(aquafarm::experiments::run_benchmarks(session)?, s),
        s if s.starts_with("fd-") => pick(run_fd_scenarios(session)?, s),
        s if s.starts_with("pinn-deepos-") => {
            pick(aquafarm::experiments::run_pinn_tables(session, true)?, s)
        }
        s if s.starts_with("pinn-") => {
            pick(aquafarm::experiments::run_pinn_tables(session, false)?, s)
        }
        // quick smoke test: biological feeding harvested at the biomass peak
        "tau1" => {
            let bio = BiologicalControl(session.feeding().clone());
            let rep = session.evaluate(&bio, &StopAtStep(session.tau1_step()))?;
            Ok(vec![ReportRow::new("bench-tau1-uf", &rep, session.h0_scale())])
        }
        other => bail!("unknown scenario id {other:?}"),
    }
}

fn pick(rows: Vec<ReportRow>, id: &str) -> Result<Vec<ReportRow>> {
    let picked: Vec<ReportRow> = rows.into_iter().filter(|r| r.scenario == id).collect();
    if picked.is_empty() {
        bail!("unknown scenario id {id:?}");
    }
    Ok(picked)
}

fn write_rows(dir: &std::path::Path, name: &str, rows: &[ReportRow]) -> Result<()> {
    let path = dir.join(name);
    let mut out = BufWriter::new(File::create(&path)?);
    write_csv(rows, &mut out)?;
    out.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}
