use clap::{Parser, ValueEnum};
use polysim::geometry::PENETRATION_TOLERANCE;
use polysim::output::{self, CsvLog};
use polysim::scenario::Scenario;
use polysim::simulator::{SimError, Simulator};
use polysim::verify::{resample_step, Finding};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate rigid bodies and chains of convex polytopes without
/// interpenetration, stepping so that no contact change is missed.
#[derive(Debug, Parser)]
#[command(name = "polysim", version)]
struct Args {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Simulated end time in seconds (overrides the scenario).
    #[arg(long)]
    end_time: Option<f64>,
    /// Largest integration step in seconds (overrides the scenario).
    #[arg(long)]
    max_step: Option<f64>,
    /// Seed for randomized initial states (overrides the scenario).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for events.csv, trace.csv and summary.toml.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Resample every step densely and report missed contact changes.
    #[arg(long)]
    verify: bool,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
}

const VERIFY_SUBSTEPS: usize = 100;

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if args.quiet { "error" } else { "warn" }))
        .init();

    let scenario = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    let (state, mut config) = match scenario.build(args.seed) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    if let Some(t) = args.end_time {
        config.end_time = t;
    }
    if let Some(h) = args.max_step {
        config.max_step = h;
    }
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match args.format {
        Format::Csv => {}
    }

    let mut log = match CsvLog::create(&args.out_dir) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let mut sim = match Simulator::new(state, config.clone()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    let mut previous = sim.state.clone();
    let mut findings: Vec<Finding> = Vec::new();
    let eps_geo = config.tolerances.eps_geo;
    let result = sim.run_with(|out, after| {
        log.write_step(out).map_err(|e| SimError::Sink(e.to_string()))?;
        if args.verify {
            findings.extend(resample_step(&previous, out.record.h, eps_geo, VERIFY_SUBSTEPS, PENETRATION_TOLERANCE));
            previous = after.clone();
        }
        Ok(())
    });
    let stats = match result {
        Ok(s) => s,
        Err(e) => {
            let _ = log.flush();
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = output::write_summary(&args.out_dir, &stats) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if !args.quiet {
        match output::summary_toml(&stats) {
            Ok(text) => print!("{text}"),
            Err(e) => eprintln!("warning: {e}"),
        }
    }
    if args.verify {
        for f in &findings {
            eprintln!("verify: {f:?}");
        }
        if !findings.is_empty() {
            eprintln!("error: dense resampling found {} problem(s)", findings.len());
            return ExitCode::from(1);
        }
        if !args.quiet {
            println!("# verify: {} steps resampled at {VERIFY_SUBSTEPS} points, no problems", stats.steps);
        }
    }
    ExitCode::SUCCESS
}
