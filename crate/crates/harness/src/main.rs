use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridtrack_harness::config::{ModeConfig, ScenarioConfig};
use gridtrack_harness::experiment::Experiment;
use gridtrack_harness::{io, oracle, HarnessError, Result};

/// Grid-based channel-state tracking and channel-gain map prediction.
#[derive(Parser, Debug)]
#[command(name = "gridtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the quantized transition matrix and write transition.bin.
    Transition(Common),
    /// Track the state; writes state_trace.csv and metrics.json.
    Track(WithTransition),
    /// Track the state and predict channel-gain maps at the snapshot times.
    PredictMap(WithTransition),
    /// Run the whole pipeline and write every artifact.
    Experiment(Common),
    /// Compare the filter with exhaustive enumeration on random tiny scenarios.
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// JSON scenario file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transition-matrix estimator.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Prediction horizon.
    #[arg(long)]
    rho: Option<usize>,
}

#[derive(Args, Debug)]
struct WithTransition {
    #[command(flatten)]
    common: Common,
    /// Reuse a matrix written by `transition` instead of estimating one.
    #[arg(long)]
    transition: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Markovian,
    Marginal,
}

impl Common {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut config = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(mode) = self.mode {
            config.transition.mode = match mode {
                Mode::Markovian => ModeConfig::Markovian,
                Mode::Marginal => ModeConfig::Marginal,
            };
        }
        if let Some(rho) = self.rho {
            config.rho = rho;
        }
        config.validate()?;
        Ok(config)
    }
}

fn create_dir(dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })
}

fn track(args: &WithTransition, with_maps: bool) -> Result<()> {
    let mut config = args.common.resolve()?;
    if !with_maps {
        config.snapshots.clear();
    }
    let seed = config.seed;
    let dir = config.output_dir.clone();
    let exp = Experiment::new(config)?;
    let transition = args.transition.as_deref().map(io::read_transition).transpose()?;
    let out = exp.run_with_transition(seed, transition)?;
    create_dir(&dir)?;
    io::write_trace(&dir.join("state_trace.csv"), &out.trace)?;
    for map in &out.maps {
        io::write_map(&dir.join(format!("map_t{}.csv", map.t)), map)?;
    }
    io::write_json(&dir.join("metrics.json"), &out.metrics)?;
    report(&out.metrics);
    Ok(())
}

fn report(m: &gridtrack_harness::RunMetrics) {
    if let (Some(f), Some(b)) = (&m.rmse_state, &m.rmse_baseline) {
        println!("state rmse {f:?} (prior baseline {b:?})");
    }
    for map in &m.rmse_map {
        println!("map rmse at t={}: {:.4} dB", map.t, map.rmse);
    }
    println!("resets: {}, runtime {:.2} s", m.resets.len(), m.runtime_s.total);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transition(common) => {
            let config = common.resolve()?;
            let dir = config.output_dir.clone();
            let seed = config.seed;
            let outcome = Experiment::new(config)?.estimate_transition(seed)?;
            create_dir(&dir)?;
            let path = dir.join("transition.bin");
            io::write_transition(&path, &outcome.transition)?;
            println!(
                "wrote {} ({} cells, {} patched columns)",
                path.display(),
                outcome.transition.len(),
                outcome.patched_columns.len()
            );
        }
        Command::Track(args) => track(&args, false)?,
        Command::PredictMap(args) => track(&args, true)?,
        Command::Experiment(common) => {
            let config = common.resolve()?;
            let dir = config.output_dir.clone();
            let seed = config.seed;
            let out = Experiment::new(config)?.run(seed)?;
            io::write_run(&dir, &out)?;
            report(&out.metrics);
        }
        Command::OracleCheck { seed, cases, tolerance } => {
            let results = oracle::oracle_suite(seed, cases)?;
            let worst = results.iter().map(|c| c.max_abs_error).fold(0.0, f64::max);
            for c in &results {
                println!(
                    "case {:3}: cells={} sensors={} steps={} max|diff|={:.3e}",
                    c.index, c.cells, c.sensors, c.steps, c.max_abs_error
                );
            }
            println!("worst discrepancy {worst:.3e} (tolerance {tolerance:.1e})");
            if worst.is_nan() || worst > tolerance {
                return Err(HarnessError::Numerical {
                    phase: "oracle check",
                    source: gridtrack::Error::Invalid(format!("discrepancy {worst:.3e} exceeds {tolerance:.1e}")),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
