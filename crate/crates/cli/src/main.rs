use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ffd_cli::{
    cmd_converge, cmd_defect, cmd_params, cmd_solve, cmd_stabmap, CliError, CliResult, RunConfig,
};

#[derive(Parser)]
#[command(name = "ffd", about = "Filtered finite differences for highly oscillatory Klein-Gordon problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set epsilon=1e-3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// CSV destination; standard output when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve filter parameters and report consistency and stability.
    Params,
    /// Run the scheme and report norms and errors.
    Solve,
    /// Sweep epsilon and h and fit convergence slopes.
    Converge,
    /// Per-mode amplification factors.
    Stabmap,
    /// Defect of the envelope approximation over time.
    Defect,
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        config.override_with(o)?;
    }
    config.validate()?;
    let target = cli.output.clone().or_else(|| config.output.clone().map(PathBuf::from));
    let out: Box<dyn Write> = match target {
        Some(path) => Box::new(BufWriter::new(
            File::create(&path).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match cli.command {
        Command::Params => cmd_params(&config, out),
        Command::Solve => cmd_solve(&config, out),
        Command::Converge => cmd_converge(&config, out),
        Command::Stabmap => cmd_stabmap(&config, out),
        Command::Defect => cmd_defect(&config, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ffd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
