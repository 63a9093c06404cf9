use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gta_cli::report::RunReport;
use gta_cli::{commands, Flags, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "gta",
    version,
    about = "Topology attacks and robust training for GCNs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train natural models, one per seed.
    Train(Flags),
    /// Attack a natural or saved model.
    Attack(Flags),
    /// Adversarial training with an inner attack.
    RobustTrain(Flags),
    /// Clean and attacked misclassification of saved models.
    Eval(Flags),
    /// Attack strength across greedy step sizes.
    SweepN(Flags),
    /// Write a synthetic dataset with the statistics of a citation graph.
    Generate {
        #[arg(long)]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_table(report: &RunReport) {
    println!("{}", report.command);
    for row in &report.table {
        let m = &row.misclassification_pct;
        let step = row.step.map(|s| format!(" n={s}")).unwrap_or_default();
        let std = m.std.map(|s| format!(" ± {s:.2}")).unwrap_or_default();
        println!(
            "  {:<8}{step:<8} {:6.2}{std}  ({:.2}s mean)",
            row.setting, m.mean, row.wall_clock_s.mean
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let (flags, f): (Flags, fn(RunConfig) -> Result<RunReport>) = match cli.command {
        Command::Generate { profile, seed, out } => {
            commands::generate_dataset(&profile, seed, &out)?;
            println!("wrote {}", out.display());
            return Ok(());
        }
        Command::Train(flags) => (flags, commands::train),
        Command::Attack(flags) => (flags, commands::attack),
        Command::RobustTrain(flags) => (flags, commands::robust_train),
        Command::Eval(flags) => (flags, commands::eval),
        Command::SweepN(flags) => (flags, commands::sweep_n),
    };
    let report = f(RunConfig::from_flags(&flags)?)?;
    print_table(&report);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
