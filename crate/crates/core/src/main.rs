use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cdpg::cli::{self, RunOptions};

#[derive(Parser)]
#[command(name = "cdpg", version, about = "Risk-sensitive distributional policy gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides run.output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this seed only; overrides run.seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured algorithm on every seed.
    Train(Common),
    /// Evaluate a saved policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy JSON (`{"theta": [[...], ...]}`).
        #[arg(long)]
        policy: PathBuf,
    },
    /// Compare analytic risk gradients with finite differences.
    Gradcheck(Common),
    /// Run CDPG and SPG on matched seeds and report time to threshold.
    Compare(Common),
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions {
            config: self.config.clone(),
            out: self.out.clone(),
            seed: self.seed,
            quiet: self.quiet,
        }
    }
}

fn main() {
    let args = Cli::parse();
    let quiet = match &args.command {
        Command::Train(c) | Command::Gradcheck(c) | Command::Compare(c) => c.quiet,
        Command::Evaluate { common, .. } => common.quiet,
    };
    env_logger::Builder::new()
        .filter_level(if quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .parse_default_env()
        .init();
    let code = match &args.command {
        Command::Train(c) => cli::cmd_train(&c.options()),
        Command::Evaluate { common, policy } => cli::cmd_evaluate(&common.options(), policy),
        Command::Gradcheck(c) => cli::cmd_gradcheck(&c.options()),
        Command::Compare(c) => cli::cmd_compare(&c.options()),
    };
    std::process::exit(code);
}
