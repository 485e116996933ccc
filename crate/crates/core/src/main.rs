use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use drem::diagnostics::excitation_report;
use drem::expcli::{load_scenario, plant_bound, read_csv, run_experiment, LawSelection, Overrides, RunConfig};
use drem::signals::DiagnosticsParams;

#[derive(Parser)]
#[command(name = "drem", version, about = "DREM parameter identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Law {
    Gradient,
    Averaging,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace, report and summary files.
    Run {
        /// Scenario file, or a bundled name (scenario_a, scenario_b, scenario_c).
        config: String,
        #[arg(long, value_enum, default_value = "both")]
        law: Law,
        #[arg(long)]
        gamma: Option<f64>,
        /// Kreisselmeier forgetting factor.
        #[arg(long)]
        l: Option<f64>,
        /// Gain of the decaying finite-excitation extension.
        #[arg(long)]
        mu: Option<f64>,
        /// Averaging-law offsets, comma separated.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        sample_every: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute the excitation report from an existing trace CSV.
    Diagnose {
        trace: PathBuf,
        #[arg(long)]
        pe_window: Option<f64>,
        #[arg(long)]
        detect_fraction: Option<f64>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the steady-state reconstruction error bound of a plant scenario.
    Bound { config: String },
    /// List the bundled scenarios.
    List,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> drem::Result<ExitCode> {
    match cli.command {
        Command::Run { config, law, gamma, l, mu, k, step, horizon, sample_every, out } => {
            let config = RunConfig {
                scenario: config,
                law: match law {
                    Law::Gradient => LawSelection::Gradient,
                    Law::Averaging => LawSelection::Averaging,
                    Law::Both => LawSelection::Both,
                },
                overrides: Overrides { gamma, l, mu, k, step, horizon, sample_every },
                out_dir: out,
            };
            let bundle = run_experiment(&config)?;
            for r in &bundle.runs {
                let s = &r.summary;
                println!(
                    "{} {:<9} theta_tilde(T) = {:?}  eta_max = {}  -> {}",
                    s.scenario,
                    s.law.as_str(),
                    s.theta_tilde_final,
                    s.eta_max.map_or("-".to_string(), |e| format!("{e:.4}")),
                    r.trace.display()
                );
                if let Some(f) = &s.failure {
                    eprintln!("{} {}: integration stopped: {f}", s.scenario, s.law.as_str());
                }
            }
            Ok(if bundle.failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Diagnose { trace, pe_window, detect_fraction, out } => {
            let mut params = DiagnosticsParams::default();
            if let Some(w) = pe_window {
                params.pe_window = w;
            }
            if let Some(f) = detect_fraction {
                params.detect_fraction = f;
            }
            let report = excitation_report(&read_csv(&trace)?, &params)?;
            let text = serde_json::to_string_pretty(&report).expect("serialisable") + "\n";
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| drem::Error::Io { path: p, source: e })?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bound { config } => {
            println!("{:.10e}", plant_bound(&load_scenario(&config)?)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::List => {
            for name in drem::bundled_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
