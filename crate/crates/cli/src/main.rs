//! Command-line front end: sweeps, validation runs and preset listing.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coopcache::experiments::{self, Scale, SweepSpec};
use coopcache::{RunConfig, RunMode, Strategy, SweepVariable};

#[derive(Parser)]
#[command(name = "coopcache", version, about = "Energy efficiency of cooperative UAV caching")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file or preset.
    Run(RunArgs),
    /// Run a config with its sweep axis replaced from the command line.
    Sweep(SweepArgs),
    /// Compare the exact rate factor with the simulator.
    Validate(ValidateArgs),
    /// Shipped figure presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as TOML.
    Show { name: String },
}

#[derive(Args)]
struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped preset (see `presets list`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; defaults to the config's `output_dir`, then
    /// `out/<name>`.
    #[arg(long, env = "UAVCACHE_OUT_DIR")]
    out: Option<PathBuf>,
    /// Skip the SVG chart.
    #[arg(long)]
    no_plot: bool,
}

impl Source {
    fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), None) => RunConfig::load(path).with_context(|| format!("reading {}", path.display())),
            (None, Some(name)) => Ok(RunConfig::preset(name)?),
            _ => bail!("give exactly one of --config or --preset"),
        }
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| Path::new("out").join(&cfg.name))
    }
}

#[derive(Args)]
struct Overrides {
    /// Comma-separated strategies replacing the configured list.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Altitude partition count.
    #[arg(long)]
    n_max: Option<usize>,
    /// Simulate the most popular content at every point with this many trials.
    #[arg(long)]
    mc_trials: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = &self.strategies {
            cfg.strategies = s.clone();
        }
        if let Some(n) = self.n_max {
            cfg.grid.n_max = n;
        }
        if let Some(t) = self.mc_trials {
            let mut sim = cfg.simulation.unwrap_or_default();
            sim.trials = t;
            cfg.simulation = Some(sim);
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// kappa, xcop, lambda, cache-size, cache-fraction or h0.
    variable: String,
    /// `start..stop` or a comma-separated list.
    range: String,
    /// Number of points for a `start..stop` range.
    #[arg(long, default_value_t = 8)]
    points: usize,
    /// Space the points logarithmically.
    #[arg(long)]
    log: bool,
    /// Evaluation mode replacing the configured one.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    /// Trials per point, replacing the configured count.
    #[arg(long)]
    trials: Option<usize>,
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    match s {
        "fixed-altitude" => Ok(RunMode::FixedAltitude),
        "joint" => Ok(RunMode::Joint),
        "displacement-gain" => Ok(RunMode::DisplacementGain),
        _ => Err(format!("unknown mode '{s}' (fixed-altitude, joint, displacement-gain)")),
    }
}

fn parse_range(variable: SweepVariable, range: &str, points: usize, log: bool) -> Result<SweepSpec> {
    let scale = if log { Scale::Log } else { Scale::Linear };
    if let Some((a, b)) = range.split_once("..") {
        let start: f64 = a.trim().parse().with_context(|| format!("bad range start '{a}'"))?;
        let stop: f64 = b.trim().parse().with_context(|| format!("bad range end '{b}'"))?;
        Ok(SweepSpec {
            variable,
            values: vec![],
            start: Some(start),
            stop: Some(stop),
            points: Some(points),
            scale,
        })
    } else {
        let values = range
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad sweep value '{v}'")))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepSpec {
            variable,
            values,
            start: None,
            stop: None,
            points: None,
            scale,
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

fn run_and_write(cfg: &RunConfig, source: &Source) -> Result<usize> {
    let dir = source.out_dir(cfg);
    let outcome = experiments::run_sweep(cfg)?;
    let csv = experiments::write_sweep(&dir, cfg, &outcome)?;
    println!("{:>10} {:>8} {:>12} {:>10} {:>8} error", cfg.sweep.variable.name(), "strategy", "eta", "gain", "h1_km");
    for r in &outcome.rows {
        println!(
            "{:>10.4} {:>8} {:>12} {:>10} {:>8} {}",
            r.value,
            r.strategy.to_string(),
            fmt_opt(r.eta),
            r.gain.map_or_else(|| "-".into(), |g| format!("{g:.4}")),
            r.h1_km.map_or_else(|| "-".into(), |h| format!("{h:.4}")),
            r.error
        );
    }
    if !source.no_plot {
        let svg = dir.join("sweep.svg");
        plot::sweep_chart(&svg, cfg, &outcome)?;
        println!("chart: {}", svg.display());
    }
    println!("results: {}", csv.display());
    Ok(outcome.failures())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} point(s) failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns the number of failed points.
fn dispatch(command: Command) -> Result<usize> {
    match command {
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for p in experiments::presets()? {
                        println!("{:<18} {}", p.name, p.description);
                    }
                }
                PresetAction::Show { name } => print!("{}", experiments::preset_text(&name)?),
            }
            Ok(0)
        }
        Command::Run(args) => {
            let mut cfg = args.source.load()?;
            args.overrides.apply(&mut cfg);
            run_and_write(&cfg, &args.source)
        }
        Command::Sweep(args) => {
            let mut cfg = args.source.load()?;
            let variable = SweepVariable::parse(&args.variable)?;
            cfg.sweep = parse_range(variable, &args.range, args.points, args.log)?;
            if let Some(m) = args.mode {
                cfg.mode = m;
            }
            args.overrides.apply(&mut cfg);
            run_and_write(&cfg, &args.source)
        }
        Command::Validate(args) => {
            let mut cfg = args.source.load()?;
            if let Some(t) = args.trials {
                let mut sim = cfg.simulation.unwrap_or_default();
                sim.trials = t;
                cfg.simulation = Some(sim);
            }
            let dir = args.source.out_dir(&cfg);
            let report = experiments::validate(&cfg)?;
            let csv = experiments::write_validation(&dir, &cfg, &report)?;
            println!(
                "{:>8} {:>12} {:>12} {:>10} {:>7} {:>12} {:>8}",
                cfg.sweep.variable.name(),
                "analytic",
                "mc",
                "se",
                "z",
                "literal",
                "lit_z"
            );
            for r in &report.rows {
                println!(
                    "{:>8.3} {:>12.4e} {:>12.4e} {:>10.3e} {:>7} {:>12} {:>8} {}",
                    r.value,
                    r.analytic_bps,
                    r.mc_bps,
                    r.mc_std_error_bps,
                    r.z.map_or_else(|| "-".into(), |z| format!("{z:.2}")),
                    fmt_opt(r.literal_bps),
                    r.literal_z.map_or_else(|| "-".into(), |z| format!("{z:.1}")),
                    r.error
                );
            }
            if !args.source.no_plot {
                plot::validation_chart(&dir.join("validation.svg"), &cfg, &report)?;
            }
            println!(
                "{} (|z| <= {}); results: {}",
                if report.passed() { "PASS" } else { "FAIL" },
                report.z_limit,
                csv.display()
            );
            let disagreements = report.rows.iter().filter(|r| !r.pass).count();
            Ok(disagreements.max(report.failures()))
        }
    }
}
