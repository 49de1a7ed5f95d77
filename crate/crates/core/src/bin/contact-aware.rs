use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contact_aware::controllers::ControllerKind;
use contact_aware::harness::artifacts::comparison_rows;
use contact_aware::harness::{
    emit_comparison_artifacts, emit_run_artifacts, prepare_output_dir, run_matrix, run_scenario,
    summarize, RunOverrides, Scenario,
};

#[derive(Parser)]
#[command(
    name = "contact-aware",
    version,
    about = "Run contact-aware tracking scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log, plots and manifest.
    Run {
        scenario: PathBuf,
        /// Output directory [default: out/<scenario name>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// greedy | nullspace | frictionless_qp | frictional_qp
        #[arg(long)]
        controller: Option<ControllerKind>,
    },
    /// Run a scenario under several controllers and seeds and compare them.
    Compare {
        scenario: PathBuf,
        /// Comma-separated controller names.
        #[arg(long, value_delimiter = ',', required = true)]
        controllers: Vec<ControllerKind>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Output directory [default: out/<scenario name>-compare]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a scenario file without running it.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when a run was aborted on repeated faults.
fn execute(command: Command) -> contact_aware::Result<bool> {
    match command {
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!(
                "{}: ok (schema v{}, {} joints, {} ticks, config {})",
                s.name,
                s.schema_version,
                s.robot.num_joints(),
                s.num_ticks(),
                &s.config_hash()[..12]
            );
            Ok(true)
        }
        Command::Run {
            scenario,
            out,
            seed,
            controller,
        } => {
            let s = RunOverrides { seed, controller }.apply(&Scenario::load(&scenario)?);
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(&s.name));
            let dir = prepare_output_dir(&out)?;
            let result = run_scenario(&s)?;
            emit_run_artifacts(&result, &dir)?;
            let m = summarize(&result.logs, s.separation_window);
            println!("{} [{}] seed {}", s.name, s.controller, s.rng_seed);
            println!("  ticks            {}", m.ticks);
            println!("  peak force       {:.3} N", m.peak_force);
            println!("  mean force       {:.3} N", m.mean_contact_force);
            println!("  tracking rmse    {:.5} rad", m.tracking_rmse);
            println!("  peak sep. |v_q|  {:.4} rad/s", m.peak_separation_velocity);
            println!("  contact toggles  {}", m.contact_toggles);
            println!("  fault ticks      {}", m.fault_ticks);
            println!("  artifacts        {}", dir.display());
            match result.aborted {
                Some(reason) => {
                    eprintln!("aborted: {reason}");
                    Ok(false)
                }
                None => Ok(true),
            }
        }
        Command::Compare {
            scenario,
            controllers,
            repeats,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let out =
                out.unwrap_or_else(|| PathBuf::from("out").join(format!("{}-compare", s.name)));
            let dir = prepare_output_dir(&out)?;
            let matrix = run_matrix(&s, &controllers, repeats)?;
            emit_comparison_artifacts(&s, &matrix, &dir)?;
            println!(
                "{:<16} {:>10} {:>10} {:>12} {:>12} {:>8}",
                "controller", "peak_f", "mean_f", "rmse", "peak_v_sep", "aborted"
            );
            for row in comparison_rows(&matrix) {
                println!(
                    "{:<16} {:>10.3} {:>10.3} {:>12.5} {:>12.4} {:>8}",
                    row.controller.to_string(),
                    row.peak_force.max,
                    row.mean_contact_force.mean,
                    row.tracking_rmse.mean,
                    row.peak_separation_velocity.max,
                    row.aborted
                );
            }
            println!("artifacts in {}", dir.display());
            let aborted = matrix
                .iter()
                .flat_map(|(_, runs)| runs)
                .any(|r| r.aborted.is_some());
            Ok(!aborted)
        }
    }
}
