use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lbddnn::checks;
use lbddnn::experiment::{self, ExperimentError, SweepReport};
use lbddnn::scenario::ScenarioConfig;

#[derive(Parser)]
#[command(name = "lbddnn", version, about = "Dropout deep-network adaptive controller simulator")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for CSV/JSON outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Override the integrator step in seconds.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Override the simulated duration in seconds.
    #[arg(long, global = true)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trajectory and metrics.
    Run {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        /// JSON scenario file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run presets over several seeds and report median/min/max metrics.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "baseline,dropout-default")]
        presets: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Run the verification checks and print a pass/fail table.
    Verify {
        /// Only the oracle checks (Jacobian, Kronecker, Lyapunov).
        #[arg(long)]
        quick: bool,
    },
    /// List the built-in presets.
    ListPresets,
}

impl Overrides {
    fn apply(&self, mut cfg: ScenarioConfig) -> Result<ScenarioConfig, ExperimentError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = self.step {
            cfg.step = h;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = Some(dir.clone());
        }
        cfg.validate().map_err(lbddnn::sim::SimError::from)?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match &cli.command {
        Command::ListPresets => {
            for name in experiment::PRESET_NAMES {
                println!("{name:<20} {}", experiment::preset_description(name).unwrap_or(""));
            }
            Ok(true)
        }
        Command::Run { preset, config } => {
            let cfg = match (preset, config) {
                (Some(p), _) => experiment::preset(p)?,
                (None, Some(path)) => ScenarioConfig::from_path(path)?,
                (None, None) => unreachable!("clap requires one of --preset/--config"),
            };
            let mut cfg = cli.overrides.apply(cfg)?;
            if cfg.output_dir.is_none() {
                cfg.output_dir = Some(PathBuf::from("out"));
            }
            let out = experiment::run_scenario(&cfg)?;
            let m = &out.metrics;
            println!("{} seed {}: {} samples", cfg.name, cfg.seed, m.samples);
            println!("  tracking        rms {:>12.6}  stacked {:>14.6}", m.tracking.rms, m.tracking.stacked);
            println!(
                "  approximation   rms {:>12.6}  stacked {:>14.6}",
                m.approximation.rms, m.approximation.stacked
            );
            println!("  control         rms {:>12.6}  stacked {:>14.6}", m.control.rms, m.control.stacked);
            println!("  radial corrections {}", out.record.radial_corrections);
            for f in &out.files {
                println!("  wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Sweep { presets, seeds } => {
            let mut reports: Vec<SweepReport> = Vec::new();
            for name in presets {
                let cfg = cli.overrides.apply(experiment::preset(name)?)?;
                let cfg = ScenarioConfig { output_dir: None, ..cfg };
                let report = experiment::seed_sweep(&cfg, seeds)?;
                print_sweep(&report);
                reports.push(report);
            }
            let mut comparisons = Vec::new();
            if let Some(base) = reports.iter().find(|r| r.preset == "baseline") {
                for r in reports.iter().filter(|r| r.preset != "baseline") {
                    let c = experiment::paired_comparison(base, r)?;
                    let med = |s: Option<experiment::Stats>| s.map_or(f64::NAN, |s| s.median);
                    println!(
                        "{} vs baseline, median improvement: tracking {:.2}%, approximation {:.2}%, control {:.2}%",
                        r.preset,
                        med(c.tracking),
                        med(c.approximation),
                        med(c.control)
                    );
                    comparisons.push(c);
                }
            }
            if let Some(dir) = &cli.overrides.out_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join("sweep.json");
                let body = serde_json::json!({
                    "version": experiment::artifact_version(),
                    "seeds": seeds,
                    "sweeps": reports,
                    "comparisons": comparisons,
                });
                std::fs::write(&path, serde_json::to_string_pretty(&body)?)?;
                println!("wrote {}", path.display());
            }
            Ok(reports.iter().all(|r| r.failures().next().is_none()))
        }
        Command::Verify { quick } => {
            let results = if *quick { checks::quick_checks() } else { checks::all_checks() };
            for r in &results {
                println!("{}", r.line());
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} checks passed", results.len());
            if let Some(dir) = &cli.overrides.out_dir {
                std::fs::create_dir_all(dir)?;
                let path = dir.join("verify.json");
                let body = serde_json::json!({
                    "version": experiment::artifact_version(),
                    "passed": passed == results.len(),
                    "checks": results,
                });
                std::fs::write(&path, serde_json::to_string_pretty(&body)?)?;
                println!("wrote {}", path.display());
            }
            Ok(passed == results.len())
        }
    }
}

fn print_sweep(r: &SweepReport) {
    let fmt = |s: Option<experiment::Stats>| {
        s.map_or("n/a".to_string(), |s| format!("{:.4} [{:.4}, {:.4}]", s.median, s.min, s.max))
    };
    println!("{} ({} seeds)", r.preset, r.outcomes.len());
    println!("  tracking rms      {}", fmt(r.tracking));
    println!("  approximation rms {}", fmt(r.approximation));
    println!("  control rms       {}", fmt(r.control));
    for f in r.failures() {
        println!("  seed {} failed: {}", f.seed, f.result.as_ref().err().map_or("", |s| s.as_str()));
    }
}
