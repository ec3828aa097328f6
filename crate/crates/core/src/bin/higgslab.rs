use clap::{Parser, Subcommand};
use higgslab::cli::{load_config, run_experiment, CliError, Experiment};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "higgslab", version, about = "Higgs bundle experiments on flat tori and a truncated cusp")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for pointwise loops.
    #[arg(long, global = true, env = "HIGGSLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Check the model assumptions, whatever experiment the config names.
    CheckAssumptions { config: PathBuf },
    /// Run the ε-sweep classifier, whatever experiment the config names.
    Sweep { config: PathBuf },
}

fn run(args: Args) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let (path, force) = match &args.command {
        Command::Run { config } => (config, None),
        Command::CheckAssumptions { config } => (config, Some(Experiment::Assumptions)),
        Command::Sweep { config } => (config, Some(Experiment::Sweep)),
    };
    let mut cfg = load_config(path)?;
    if let Some(e) = force {
        cfg.experiment = e;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let summary = run_experiment(&cfg, args.out.as_deref())?;
    match summary.verdict {
        Some(v) => println!("{:?}: {v}", summary.experiment),
        None => println!("{:?}: done", summary.experiment),
    }
    for f in &summary.files {
        println!("  {f}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("higgslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
