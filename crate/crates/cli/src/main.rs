mod commands;
mod config;
mod error;
mod run;
mod svg;

use clap::{Parser, Subcommand};
use commands::{Ctx, Outcome};
use config::Config;
use error::CliError;
use run::{resolve_out_dir, Manifest};
use std::path::PathBuf;
use std::process::ExitCode;

/// Batch experiments for the non-unique Caputo problem x^(alpha) = g(x), x(0) = 0.
///
/// Exit codes: 0 success, 1 usage or configuration error, 2 hypotheses
/// infeasible, 3 numerical non-convergence.
#[derive(Debug, Parser)]
#[command(name = "fdemulti", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Parent directory for run directories [env: FDEMULTI_OUT_DIR, default: runs].
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate or search for a certificate of the hypothesis system.
    Check,
    /// Solve for one T and reconstruct x.
    Solve,
    /// Solve for a list of T values and compare the members.
    Family,
    /// Compare Picard solutions with the power-law closed form on a mesh ladder.
    Oracle,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Family => "family",
            Command::Oracle => "oracle",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    ExitCode::from(run(cli))
}

fn run(cli: Cli) -> u8 {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    }
    let Some(path) = cli.config.clone() else {
        eprintln!("error: --config <path> is required");
        return 1;
    };
    let cfg = match Config::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let (out_dir, out_dir_source) = resolve_out_dir(cli.out.clone());
    let command = cli.command.name();
    let mut ctx = Ctx {
        cfg: &cfg,
        command,
        seed: cli.seed,
        quiet: cli.quiet,
        out_dir: out_dir.clone(),
        run: None,
    };
    let result = match cli.command {
        Command::Check => commands::check(&mut ctx),
        Command::Solve => commands::solve(&mut ctx),
        Command::Family => commands::family(&mut ctx),
        Command::Oracle => commands::oracle(&mut ctx),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            Outcome {
                exit_code: e.exit_code(),
                status: commands::error_status(&e).into(),
                summary: serde_json::json!({ "error": e.to_string() }),
            }
        }
    };
    // validation failures never open a run directory
    let Some(dir) = ctx.run.take() else {
        return outcome.exit_code;
    };
    let run_id = dir.id.clone();
    let manifest = Manifest {
        run_id: &run_id,
        command,
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        created: String::new(),
        seed: cli.seed,
        jobs: cli.jobs,
        config_path: path.display().to_string(),
        config: &cfg.text,
        out_dir: out_dir.display().to_string(),
        out_dir_source,
        files: Vec::new(),
        exit_code: outcome.exit_code,
        status: &outcome.status,
        summary: outcome.summary,
    };
    let run_path = dir.path.clone();
    if let Err(e) = dir.finish(manifest) {
        eprintln!("error: cannot write manifest: {}", CliError::from(e));
        return 1;
    }
    if !cli.quiet {
        println!("run: {}", run_path.display());
    }
    outcome.exit_code
}
