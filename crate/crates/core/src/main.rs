use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::error;

use ponres::runner::{
    self, emit, render_comparison, render_survivability, summarize, survivability_table, Format, RunConfig,
    ScenarioSelection, Seeds, SolverChoice, TargetSelection,
};
use ponres::topology::{build_cell, Variant};

/// Resilience, routing power and queuing delay of PON data-centre cells.
///
/// Exit codes: 0 success, 1 configuration or I/O error, 2 a baseline was
/// infeasible, 3 some failure scenario runs failed (recorded in the output).
/// `check-table1` exits 3 when the computed matrix differs from the
/// reference.
#[derive(Parser)]
#[command(name = "ponres", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Heuristic,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep failure scenarios over traffic seeds and write the records.
    Run {
        /// TOML configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `all` or a comma-separated list such as `S1,S3`.
        #[arg(long)]
        scenario: Option<String>,
        /// Use seeds 0..N.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Fail every link of each class instead of the first.
        #[arg(long)]
        all_targets: bool,
        /// Print measured mean deltas beside the published figures.
        #[arg(long)]
        compare_paper: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Write the cell's edge list.
    Topo {
        #[arg(long)]
        export: PathBuf,
        /// Read cell parameters from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured variant.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Print the survivability matrix of both variants against the
    /// reference verdicts.
    CheckTable1,
}

fn load(config: Option<&PathBuf>) -> Result<RunConfig, ExitCode> {
    match config {
        Some(p) => runner::parse_config(p).map_err(|e| {
            error!("{e}");
            ExitCode::from(1)
        }),
        None => Ok(RunConfig::default()),
    }
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    error!("{msg}");
    ExitCode::from(1)
}

#[allow(clippy::too_many_arguments)]
fn run(
    config: Option<PathBuf>,
    scenario: Option<String>,
    seeds: Option<u64>,
    solver: Option<SolverArg>,
    all_targets: bool,
    compare_paper: bool,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
) -> ExitCode {
    let mut cfg = match load(config.as_ref()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(s) = scenario {
        cfg.scenarios = if s.eq_ignore_ascii_case("all") {
            ScenarioSelection::Keyword(s)
        } else {
            ScenarioSelection::List(s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
        };
    }
    if let Some(n) = seeds {
        cfg.traffic.seeds = Seeds::Count(n);
    }
    if let Some(s) = solver {
        cfg.solver = match s {
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Heuristic => SolverChoice::Heuristic,
            SolverArg::Both => SolverChoice::Both,
        };
    }
    if all_targets {
        cfg.target = TargetSelection::All;
    }
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    if let Some(f) = format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    if let Err(e) = cfg.validate() {
        return fail(e);
    }
    let outcome = match runner::run_sweep(&cfg) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    for (_, reason) in &outcome.failed_baselines {
        error!("{reason}");
    }
    match emit(&outcome.records, cfg.output.format, &cfg.output.dir) {
        Ok(path) => eprintln!("wrote {} records to {}", outcome.records.len(), path.display()),
        Err(e) => return fail(e),
    }
    if compare_paper {
        for solver in cfg.solver.solvers() {
            println!("solver: {}", solver.as_str());
            print!("{}", render_comparison(&summarize(&outcome.records, solver)));
        }
    }
    let failed = outcome.records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs did not produce a solution; see the status column", outcome.records.len());
    }
    ExitCode::from(outcome.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, scenario, seeds, solver, all_targets, compare_paper, out, format } => {
            run(config, scenario, seeds, solver, all_targets, compare_paper, out, format)
        }
        Command::Topo { export, config, variant } => {
            let mut cfg = match load(config.as_ref()) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(v) = variant {
                cfg.cell.variant = v;
            }
            let t = match build_cell(&cfg.cell_params()) {
                Ok(t) => t,
                Err(e) => return fail(e),
            };
            let file = match std::fs::File::create(&export) {
                Ok(f) => std::io::BufWriter::new(f),
                Err(e) => return fail(format!("{}: {e}", export.display())),
            };
            if let Err(e) = t.export_edge_list(file) {
                return fail(format!("{}: {e}", export.display()));
            }
            ExitCode::SUCCESS
        }
        Command::CheckTable1 => {
            let rows = match survivability_table() {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            print!("{}", render_survivability(&rows));
            if rows.iter().all(|r| r.matches()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
    }
}
