//! `dirac-bvp`: runs the solvers on problem files and the verification suite.
//!
//! Every command writes a JSON report with the checked inequalities. The
//! exit status is 0 when all checks pass, 1 when one fails and 2 on errors.

mod commands;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dirac_bvp::fredholm::BoundaryRows;
use dirac_bvp::io::{load_problem, load_torus};
use dirac_bvp::poincare::{EndCondition, RayleighKind};
use dirac_bvp::verify::{run_criterion, SuiteReport, CRITERIA, DEFAULT_SEED};
use serde_json::json;

use commands::FieldOutputs;
use report::emit;

#[derive(Parser)]
#[command(name = "dirac-bvp", version, about = "Spectral solvers and constant checks for Dirac-type boundary value problems")]
struct Cli {
    /// Worker threads for the parallel parts; defaults to all cores.
    #[arg(long, global = true, env = "DIRAC_BVP_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    /// Report file; stdout when omitted.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Input {
    /// Problem file (JSON).
    #[arg(long, visible_alias = "config")]
    input: PathBuf,
}

#[derive(clap::Args)]
struct Fields {
    /// Write the solution as CSV, one row per grid node.
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Write the solution as a JSON field.
    #[arg(long)]
    field: Option<PathBuf>,
}

impl Fields {
    fn outputs(&self) -> FieldOutputs<'_> {
        FieldOutputs {
            csv: self.csv.as_deref(),
            field: self.field.as_deref(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rows {
    Graph,
    DropP,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Hardy,
    Mckean,
}

#[derive(Clone, Copy, ValueEnum)]
enum Outer {
    Dirichlet,
    Natural,
    LogNeumann,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral partition, derived constants and boundary-condition algebra.
    Spectrum {
        #[command(flatten)]
        input: Input,
    },
    /// Solves the model problem and checks the a priori estimate.
    Solve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        fields: Fields,
    },
    /// Solves the perturbed problem by contraction iteration.
    Perturbed {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        fields: Fields,
        /// Stop when the H^1 step falls below this.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Variable-coefficient solve on the torus.
    Torus {
        #[command(flatten)]
        input: Input,
        /// Shrinks the admissible perturbation bound to (1 - slack) eta / 3.
        #[arg(long)]
        eta_slack: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Share of b treated as the H^1 -> L^2 part of the perturbation.
        #[arg(long)]
        b0_fraction: Option<f64>,
        /// Write the solution as a spectral dump.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Kernel, cokernel, index and solvability of the discretized problem.
    Fredholm {
        #[command(flatten)]
        input: Input,
        /// Grid cells to assemble at, comma separated; the file's grid by default.
        #[arg(long, value_delimiter = ',')]
        refine: Vec<usize>,
        #[arg(long, value_enum, default_value = "graph")]
        rows: Rows,
    },
    /// Minimum of a weighted Rayleigh quotient against its oracle.
    Poincare {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: u32,
        /// Log length of the domain, e.g. `2pi` or `3.5`.
        #[arg(long, value_parser = commands::parse_ratio)]
        ratio: f64,
        /// Grid cells.
        #[arg(long, default_value_t = 4096)]
        grid: usize,
        /// Outer end condition (McKean only).
        #[arg(long, value_enum)]
        outer: Option<Outer>,
    },
    /// Runs the seeded verification suite.
    VerifyAll {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Run only these criteria, comma separated.
        #[arg(long, value_delimiter = ',')]
        criterion: Vec<u32>,
    },
}

fn verify_all(seed: u64, only: &[u32], out: Option<&Path>) -> Result<bool> {
    let ids: Vec<u32> = if only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { only.to_vec() };
    let mut criteria = Vec::new();
    for id in ids {
        let start = Instant::now();
        let r = run_criterion(id, seed).map_err(|e| dirac_bvp::Error::config("criterion", e.to_string()))?;
        eprintln!(
            "criterion {:>2} {:<34} {} ({:.2}s)",
            r.id,
            r.title,
            if r.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        criteria.push(r);
    }
    let suite = SuiteReport {
        schema_version: dirac_bvp::io::SCHEMA_VERSION,
        seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    };
    let mut value = serde_json::to_value(&suite)?;
    value["command"] = json!("verify-all");
    emit(&value, out).context("cannot write report")?;
    Ok(suite.passed)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("cannot start the worker pool")?;
    }
    let out = cli.out.as_deref();
    let report = match &cli.command {
        Command::Spectrum { input } => commands::spectrum(&load_problem(&input.input)?)?,
        Command::Solve { input, fields } => commands::solve(&load_problem(&input.input)?, &fields.outputs())?,
        Command::Perturbed {
            input,
            fields,
            tol,
            max_iter,
        } => commands::perturbed(&load_problem(&input.input)?, *tol, *max_iter, &fields.outputs())?,
        Command::Torus {
            input,
            eta_slack,
            tol,
            max_iter,
            b0_fraction,
            field,
        } => {
            let mut spec = load_torus(&input.input)?;
            let o = &mut spec.options;
            o.eta_slack = eta_slack.unwrap_or(o.eta_slack);
            o.tol = tol.unwrap_or(o.tol);
            o.max_iter = max_iter.unwrap_or(o.max_iter);
            o.b0_fraction = b0_fraction.unwrap_or(o.b0_fraction);
            commands::torus(&spec, field.as_deref())?
        }
        Command::Fredholm { input, refine, rows } => {
            let rows = match rows {
                Rows::Graph => BoundaryRows::Graph,
                Rows::DropP => BoundaryRows::DropP,
            };
            commands::fredholm(&load_problem(&input.input)?, refine, rows)?
        }
        Command::Poincare {
            kind,
            n,
            ratio,
            grid,
            outer,
        } => {
            let kind = match kind {
                Kind::Hardy => RayleighKind::Hardy,
                Kind::Mckean => RayleighKind::Mckean,
            };
            let outer = outer.map(|o| match o {
                Outer::Dirichlet => EndCondition::Dirichlet,
                Outer::Natural => EndCondition::Natural,
                Outer::LogNeumann => EndCondition::LogNeumann,
            });
            commands::poincare(kind, *n, *ratio, *grid, outer)?
        }
        Command::VerifyAll { seed, criterion } => return verify_all(*seed, criterion, out),
    };
    emit(&report.to_json(), out).context("cannot write report")?;
    Ok(report.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
