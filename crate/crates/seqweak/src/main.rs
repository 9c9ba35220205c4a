use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use seqweak::scenarios::{
    self, convergence_study, emit_csv_with, run_scenario, self_check_flags, summarize,
    ConfigOverrides, PlanKind, Scenario, ScenarioConfig,
};
use seqweak::vonneumann::Normalization;
use seqweak::{Error, Result};

/// Sequences of weak polarization measurements on Gaussian pointers:
/// order-swap sweeps, convergence studies, CSV output.
#[derive(Parser)]
#[command(name = "seqweak", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario sweep and write a CSV table.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario: fig2 | fig3a | fig3b | convergence | custom.
    #[arg(long)]
    scenario: Option<Scenario>,

    /// Sweep start angle in degrees (convergence: the single θ evaluated).
    #[arg(long, value_name = "D")]
    theta_start: Option<f64>,

    /// Sweep end angle in degrees, inclusive.
    #[arg(long, value_name = "D")]
    theta_end: Option<f64>,

    /// Sweep step in degrees.
    #[arg(long, value_name = "D")]
    theta_step: Option<f64>,

    /// hwp (amplitudes use 2θ) or polarization (amplitudes use θ).
    #[arg(long)]
    theta_convention: Option<scenarios::ThetaConvention>,

    /// Walk-off shift δ in µm; must be an integer multiple of the spacing.
    #[arg(long, value_name = "UM")]
    delta: Option<f64>,

    /// Pointer width σ in µm.
    #[arg(long, value_name = "UM")]
    sigma: Option<f64>,

    /// Pointer grid cell size in µm.
    #[arg(long, value_name = "UM")]
    grid_spacing: Option<f64>,

    /// Pointer grid cells per axis.
    #[arg(long, value_name = "N")]
    grid_count: Option<usize>,

    /// unnormalized (divide by δⁿ) or conditional (also by Prob(K)).
    #[arg(long)]
    normalization: Option<Normalization>,

    /// Comma-separated plan labels, e.g. piH.piD.PiH,piD.piH.PiH.
    #[arg(long, value_delimiter = ',')]
    orderings: Option<Vec<PlanKind>>,

    /// Output CSV path (default: <scenario>.csv).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Flat key = value config file; command-line flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Append an ok/fail column comparing each grid value to its analytic
    /// companion at the scenario tolerance.
    #[arg(long)]
    self_check: bool,
}

impl RunArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            scenario: self.scenario,
            theta_start_deg: self.theta_start,
            theta_end_deg: self.theta_end,
            theta_step_deg: self.theta_step,
            theta_convention: self.theta_convention,
            delta_um: self.delta,
            sigma_um: self.sigma,
            grid_spacing_um: self.grid_spacing,
            grid_count: self.grid_count,
            normalization: self.normalization,
            orderings: self.orderings.clone(),
            out: self.out.clone(),
        }
    }
}

fn build_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let from_file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ConfigOverrides::from_pairs(&scenarios::parse_config_file(&text)?)?
        }
        None => ConfigOverrides::default(),
    };
    args.overrides().over(from_file).into_config()
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    cfg.validate()?;

    let rows;
    let mut report_lines: Vec<String> = Vec::new();
    if cfg.scenario == Scenario::Convergence {
        let report = convergence_study(&cfg, &scenarios::DEFAULT_CONVERGENCE_STRENGTHS)?;
        report_lines.push(report.to_string());
        rows = report.rows;
    } else {
        rows = run_scenario(&cfg)?;
        if cfg.orderings.len() == 2 {
            report_lines.push(summarize(&rows)?.to_string());
        }
    }

    let flags = if args.self_check {
        Some(self_check_flags(&cfg, &rows)?)
    } else {
        None
    };
    emit_csv_with(
        &rows,
        &cfg.output_path,
        &cfg.csv_metadata(),
        flags.as_deref(),
    )?;

    println!(
        "{}: {} rows -> {}",
        cfg.scenario,
        rows.len(),
        cfg.output_path.display()
    );
    for line in report_lines {
        println!("{line}");
    }
    if let Some(flags) = &flags {
        let failures = flags.iter().filter(|ok| !**ok).count();
        println!(
            "self-check: {} of {} rows within tolerance",
            flags.len() - failures,
            flags.len()
        );
        if failures > 0 {
            return Err(Error::InvalidConfig(format!(
                "self-check failed for {failures} rows"
            )));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(err) => {
                eprintln!("error: {err}");
                ExitCode::from(err.exit_code() as u8)
            }
        },
    }
}
