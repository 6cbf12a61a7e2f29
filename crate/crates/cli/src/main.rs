use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maxstable_cli::commands::{cmd_condsim, cmd_diag, cmd_extcoef, cmd_uncond};
use maxstable_cli::{Overrides, RunConfig};

/// Unconditional and conditional simulation of max-stable random fields.
#[derive(Parser)]
#[command(name = "maxstable", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unconditional realizations on the target sites.
    Uncond(Common),
    /// Realizations given the conditioning data.
    Condsim(Common),
    /// Gibbs sampler trace and partition-size diagnostics.
    Diag(Common),
    /// Extremal coefficient function of the model.
    Extcoef(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON or TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the replicate count in the config.
    #[arg(long)]
    replicates: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, args): (fn(&RunConfig) -> anyhow::Result<Vec<PathBuf>>, Common) = match cli.command {
        Command::Uncond(a) => (cmd_uncond, a),
        Command::Condsim(a) => (cmd_condsim, a),
        Command::Diag(a) => (cmd_diag, a),
        Command::Extcoef(a) => (cmd_extcoef, a),
    };
    let result = RunConfig::load(&args.config).and_then(|mut cfg| {
        cfg.apply(&Overrides {
            seed: args.seed,
            out: args.out,
            replicates: args.replicates,
        });
        run(&cfg)
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
