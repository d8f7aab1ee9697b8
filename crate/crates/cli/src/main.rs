use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use paramsim_cli::config::ModelKey;
use paramsim_cli::{parse_config, resolve_workers, run, Command, Invocation};

#[derive(Debug, Parser)]
#[command(
    name = "paramsim",
    version,
    about = "Parametric tunable-coupler simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: PARAMSIM_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Calibrate effective frequencies by a contrast scan.
    #[arg(long, global = true)]
    calibrate: bool,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    /// Allow Lindblad runs of the full transmon model.
    #[arg(long, global = true)]
    full_lindblad: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Analytic first- and second-order couplings on a modulation grid.
    Couplings,
    /// XX-gate benchmark per modulation amplitude.
    Gate,
    /// One adiabatic protocol run.
    Anneal,
    /// Protocol runs over every row of the molecule table.
    AnnealSweep,
    /// Fidelity versus run time under dissipation.
    ToptScan,
    /// Energy error versus qubit coherence time for three coupler variants.
    CoherenceSweep,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Full,
    Effective,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let command = match cli.command {
        Sub::Couplings => Command::Couplings,
        Sub::Gate => Command::Gate,
        Sub::Anneal => Command::Anneal,
        Sub::AnnealSweep => Command::AnnealSweep,
        Sub::ToptScan => Command::ToptScan,
        Sub::CoherenceSweep => Command::CoherenceSweep,
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config <file> is required");
        return ExitCode::from(1);
    };
    let cfg = match parse_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let out = cli.out.unwrap_or_else(|| cfg.output.dir.clone());
    let inv = Invocation {
        calibrate: cli.calibrate,
        model: cli.model.map(|m| match m {
            ModelArg::Full => ModelKey::Full,
            ModelArg::Effective => ModelKey::Effective,
        }),
        full_lindblad: cli.full_lindblad,
        workers: resolve_workers(cli.workers),
    };
    match run(command, cfg, inv, &out) {
        Ok(o) => {
            println!("wrote {} and {}", o.csv.display(), o.manifest.display());
            if o.failed_points > 0 {
                eprintln!(
                    "{} sweep point(s) failed; see the manifest",
                    o.failed_points
                );
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
