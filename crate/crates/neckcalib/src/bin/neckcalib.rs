//! Command-line front end: loads a run configuration, applies flag
//! overrides, checks that the subcommand matches the config's command
//! block, and executes it.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neckcalib::cli::{self, apply_set_override, Format, RunConfig};
use neckcalib::error::Error;

#[derive(Parser)]
#[command(
    name = "neckcalib",
    about = "Comass and volume experiments for neck product metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Cauchy–Binet and weighted-expansion property suites
    Selftest(CommonArgs),
    /// Locate the fiber point minimizing the factor product
    #[command(name = "find-q0")]
    FindQ0(CommonArgs),
    /// Monte-Carlo comass sweep of the candidate calibration
    Calibrate(CommonArgs),
    /// Multi-start local search for the maximal comass ratio
    #[command(name = "comass-max")]
    ComassMax(CommonArgs),
    /// Hypothesis probe: sweep plus search, reporting gap witnesses
    Probe(CommonArgs),
    /// Volume comparison against random graph perturbations
    #[command(name = "volume-compare")]
    VolumeCompare(CommonArgs),
    /// First-variation defect of the flat graph
    Minimality(CommonArgs),
}

impl CliCommand {
    fn name(&self) -> &'static str {
        match self {
            CliCommand::Selftest(_) => "selftest",
            CliCommand::FindQ0(_) => "find-q0",
            CliCommand::Calibrate(_) => "calibrate",
            CliCommand::ComassMax(_) => "comass-max",
            CliCommand::Probe(_) => "probe",
            CliCommand::VolumeCompare(_) => "volume-compare",
            CliCommand::Minimality(_) => "minimality",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            CliCommand::Selftest(a)
            | CliCommand::FindQ0(a)
            | CliCommand::Calibrate(a)
            | CliCommand::ComassMax(a)
            | CliCommand::Probe(a)
            | CliCommand::VolumeCompare(a)
            | CliCommand::Minimality(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON)
    #[arg(long)]
    config: PathBuf,

    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,

    /// Report path override (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Report format override
    #[arg(long)]
    format: Option<Format>,

    /// Worker pool size (hardware parallelism when absent)
    #[arg(long)]
    threads: Option<usize>,

    /// Dot-path config overrides, e.g. --set command.calibrate.points=1000
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load_config(cmd: &CliCommand) -> Result<RunConfig, Error> {
    let args = cmd.args();
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        Error::config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::config(e.to_string()))?;
    for assignment in &args.set {
        apply_set_override(&mut doc, assignment)?;
    }
    let mut config: RunConfig =
        serde_json::from_value(doc).map_err(|e| Error::config(e.to_string()))?;
    if config.command.name() != cmd.name() {
        return Err(Error::config(format!(
            "config declares command block '{}' but subcommand '{}' was invoked",
            config.command.name(),
            cmd.name()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output.path = Some(out.clone());
    }
    if let Some(format) = args.format {
        config.output.format = format;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.command.args().threads;
    let config = match load_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("neckcalib: {e}");
            return ExitCode::from(1);
        }
    };
    match cli::run(config, threads) {
        Ok(outcome) => {
            if outcome.written_to.is_none() {
                print!("{}", outcome.document);
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("neckcalib: {e}");
            ExitCode::from(cli::exit_code_for(&e) as u8)
        }
    }
}
