use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irl_dr_cli::{run, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "irl-dr", version, about = "Household demand-response inverse RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the expert under the generating reward and record its days.
    SimulateExpert(Args),
    /// Recover basis weights from the expert's trajectories.
    LearnReward(Args),
    /// Compare expert and learned policies on the test days.
    Evaluate(Args),
    /// Tabular reward recovery on the built-in gridworld.
    BenchExact(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (TOML) or a run manifest (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::SimulateExpert(a) => (Command::SimulateExpert, a),
        Cmd::LearnReward(a) => (Command::LearnReward, a),
        Cmd::Evaluate(a) => (Command::Evaluate, a),
        Cmd::BenchExact(a) => (Command::BenchExact, a),
    };
    let result = ExperimentConfig::load(&args.config).and_then(|mut cfg| {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        let out = args
            .out
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        cfg.out_dir = None;
        run(command, &cfg, &out).map(|m| (m, out))
    });
    match result {
        Ok((m, out)) => {
            println!(
                "{}: {} artifacts in {}",
                m.command,
                m.artifacts.len(),
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("irl-dr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
