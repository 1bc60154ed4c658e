use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use liescale_cli::{run, CliError, Command, Config};

/// Entropy at a scale for random walks on matrix Lie groups.
#[derive(Parser)]
#[command(version)]
struct Args {
    command: Command,
    /// TOML experiment file; the built-in free pair on SL2R when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. LIESCALE_OUT is used when this is absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(args: &Args) -> Result<Config, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.display().to_string(), source })?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("the pool is built once");
    }
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os("LIESCALE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("liescale-out"));
    let result = load(&args).and_then(|config| run(args.command, &config, &out));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: checks failed", args.command.name());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
