//! Run configurations, figure presets, parameter sweeps and the analytic
//! against Monte Carlo validation report.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{thermal_noise_w, InterferenceLimits, KernelCache, NetworkConfig, QuadratureSpec};
use crate::channel::EnvironmentParams;
use crate::energy::{DisplacementPlan, UavPlatform};
use crate::error::{Error, Result};
use crate::optimizer::{solve_p, solve_p_cache, AltitudeGrid, EvalContext, Solution, Strategy};
use crate::placement::{Catalog, PlacementVector, RshrOptions};
use crate::simulator::{simulate_gamma, SimSpec};

/// Bumped whenever a column of the sweep or validation CSV changes.
pub const SCHEMA_VERSION: u32 = 1;

const FIGURE_PRESETS: &[(&str, &str)] = &[
    ("fig1-urban", include_str!("../presets/figures/fig1-urban.toml")),
    ("fig2-high-rise", include_str!("../presets/figures/fig2-high-rise.toml")),
    ("fig3-high-rise", include_str!("../presets/figures/fig3-high-rise.toml")),
    ("fig3-suburban", include_str!("../presets/figures/fig3-suburban.toml")),
    ("fig4-dense-urban", include_str!("../presets/figures/fig4-dense-urban.toml")),
    ("fig4-high-rise", include_str!("../presets/figures/fig4-high-rise.toml")),
    ("fig4-urban", include_str!("../presets/figures/fig4-urban.toml")),
    ("fig5-high-rise", include_str!("../presets/figures/fig5-high-rise.toml")),
    ("fig6-high-rise", include_str!("../presets/figures/fig6-high-rise.toml")),
    ("fig7-high-rise", include_str!("../presets/figures/fig7-high-rise.toml")),
];

/// What each sweep row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Placement optimized at `network.altitude_km`, no displacement.
    #[default]
    FixedAltitude,
    /// Joint placement and altitude search starting from `grid.h0_km`.
    Joint,
    /// Joint optimum divided by the fixed-altitude optimum at `grid.h0_km`.
    DisplacementGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    Kappa,
    Xcop,
    Lambda,
    CacheSize,
    CacheFraction,
    /// Initial altitude in km; also sets the fixed evaluation altitude.
    H0,
    /// Caching probability of the validated content.
    Probability,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Kappa => "kappa",
            SweepVariable::Xcop => "xcop",
            SweepVariable::Lambda => "lambda",
            SweepVariable::CacheSize => "cache-size",
            SweepVariable::CacheFraction => "cache-fraction",
            SweepVariable::H0 => "h0",
            SweepVariable::Probability => "probability",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let all = [
            SweepVariable::Kappa,
            SweepVariable::Xcop,
            SweepVariable::Lambda,
            SweepVariable::CacheSize,
            SweepVariable::CacheFraction,
            SweepVariable::H0,
            SweepVariable::Probability,
        ];
        all.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown sweep variable '{s}' (expected one of {})",
                all.map(|v| v.name()).join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// The single sweep axis of a run: explicit `values`, or `points` values
/// from `start` to `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default)]
    pub scale: Scale,
}

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        let range = (self.start, self.stop, self.points);
        let out = match (self.values.is_empty(), range) {
            (false, (None, None, None)) => self.values.clone(),
            (true, (Some(a), Some(b), Some(n))) => {
                if n == 0 {
                    return Err(Error::config("sweep needs at least one point"));
                }
                if self.scale == Scale::Log && !(a > 0.0 && b > 0.0) {
                    return Err(Error::config("a log sweep needs positive end points"));
                }
                (0..n)
                    .map(|i| {
                        let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                        match self.scale {
                            Scale::Linear => a + f * (b - a),
                            Scale::Log => (a.ln() + f * (b.ln() - a.ln())).exp(),
                        }
                    })
                    .collect()
            }
            _ => {
                return Err(Error::config(
                    "sweep takes either `values` or all of `start`, `stop` and `points`",
                ))
            }
        };
        if out.is_empty() || out.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep values must be finite and non-empty"));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSpec {
    pub size: usize,
    pub skew: f64,
    pub cache_size: usize,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec {
            size: 20,
            skew: 1.0,
            cache_size: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSpec {
    pub probability: f64,
    /// Largest accepted |z| between the analytic value and the simulation.
    pub z_limit: f64,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        ValidationSpec {
            probability: 0.5,
            z_limit: 3.0,
        }
    }
}

/// A complete run description, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Name of an environment preset.
    pub environment: String,
    /// Field-by-field replacements applied on top of the preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_overrides: Option<toml::Table>,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub network: NetworkConfig,
    /// When set, `network.noise_power_w` is replaced by thermal noise over
    /// `network.bandwidth_hz` with this noise figure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_figure_db: Option<f64>,
    #[serde(default)]
    pub platform: UavPlatform,
    #[serde(default)]
    pub catalog: CatalogSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub rshr: RshrOptions,
    #[serde(default)]
    pub grid: AltitudeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimSpec>,
    #[serde(default)]
    pub validation: ValidationSpec,
    pub sweep: SweepSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Name and description of a shipped figure preset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: String,
}

pub fn preset_names() -> Vec<&'static str> {
    FIGURE_PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn presets() -> Result<Vec<PresetInfo>> {
    FIGURE_PRESETS
        .iter()
        .map(|(name, text)| {
            let cfg = RunConfig::from_toml(text)?;
            Ok(PresetInfo {
                name,
                description: cfg.description,
            })
        })
        .collect()
}

/// Raw TOML text of a shipped preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    FIGURE_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::config(format!("unknown preset '{name}' (available: {})", preset_names().join(", "))))
}

/// One resolved sweep point.
#[derive(Debug, Clone)]
pub struct Point {
    pub value: f64,
    pub network: NetworkConfig,
    pub catalog: Catalog,
    pub cache_size: usize,
    pub grid: AltitudeGrid,
    pub probability: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        Self::from_toml(preset_text(name)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn environment_params(&self) -> Result<EnvironmentParams> {
        let base = EnvironmentParams::preset(&self.environment)?;
        let env = match &self.environment_overrides {
            None => base,
            Some(over) => {
                let mut table = toml::Table::try_from(base)?;
                for (k, v) in over {
                    if !table.contains_key(k) {
                        return Err(Error::config(format!("unknown environment field '{k}'")));
                    }
                    table.insert(k.clone(), v.clone());
                }
                table.try_into()?
            }
        };
        env.validate()?;
        Ok(env)
    }

    fn base_network(&self) -> NetworkConfig {
        let mut net = self.network;
        if let Some(nf) = self.noise_figure_db {
            net.noise_power_w = thermal_noise_w(net.bandwidth_hz, nf);
        }
        net
    }

    /// Applies one sweep value to the base parameters.
    pub fn point(&self, value: f64) -> Result<Point> {
        let mut network = self.base_network();
        let mut cat = self.catalog;
        let mut grid = self.grid;
        let mut probability = self.validation.probability;
        match self.sweep.variable {
            SweepVariable::Kappa => cat.skew = value,
            SweepVariable::Xcop => network.coop_radius_km = value,
            SweepVariable::Lambda => network.density_per_km2 = value,
            SweepVariable::CacheSize => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!("cache size must be a whole number, got {value}")));
                }
                cat.cache_size = value as usize;
            }
            SweepVariable::CacheFraction => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::config(format!("cache fraction must lie in [0, 1], got {value}")));
                }
                cat.cache_size = (value * cat.size as f64).round() as usize;
            }
            SweepVariable::H0 => {
                grid.h0_km = value;
                network.altitude_km = value;
            }
            SweepVariable::Probability => probability = value,
        }
        if self.mode != RunMode::FixedAltitude {
            network.altitude_km = grid.h0_km;
        }
        network.validate()?;
        self.quadrature.validate(&network)?;
        if cat.cache_size > cat.size {
            return Err(Error::config(format!(
                "cache size {} exceeds catalog size {}",
                cat.cache_size, cat.size
            )));
        }
        if !(probability > 0.0 && probability <= 1.0) {
            return Err(Error::config(format!("caching probability must lie in (0, 1], got {probability}")));
        }
        if self.mode != RunMode::FixedAltitude {
            grid.validate()?;
        }
        if let Some(sim) = &self.simulation {
            sim.validate(&network, &self.quadrature)?;
        }
        Ok(Point {
            value,
            network,
            catalog: Catalog::zipf(cat.size, cat.skew)?,
            cache_size: cat.cache_size,
            grid,
            probability,
        })
    }

    /// Checks every parameter of every sweep point without computing
    /// anything expensive.
    pub fn validate(&self) -> Result<Vec<Point>> {
        self.environment_params()?;
        self.platform.validate()?;
        if self.platform.tx_power_w != self.network.tx_power_w {
            return Err(Error::config(format!(
                "platform.tx_power_w = {} differs from network.tx_power_w = {}",
                self.platform.tx_power_w, self.network.tx_power_w
            )));
        }
        if let Some(nf) = self.noise_figure_db {
            if !nf.is_finite() {
                return Err(Error::config("noise figure must be finite"));
            }
        }
        if self.sweep.variable == SweepVariable::Probability && !self.strategies.is_empty() {
            return Err(Error::config("a probability sweep only makes sense for `validate`"));
        }
        let mut seen = Vec::new();
        for s in &self.strategies {
            if seen.contains(s) {
                return Err(Error::config(format!("strategy {s} listed twice")));
            }
            seen.push(*s);
        }
        self.sweep.values()?.into_iter().map(|v| self.point(v)).collect()
    }
}

/// One CSV row of a sweep: a sweep value and one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub variable: &'static str,
    pub value: f64,
    pub strategy: Strategy,
    /// Network energy efficiency in bit/J.
    pub eta: Option<f64>,
    /// Fixed-altitude optimum at `h0` (displacement-gain mode).
    pub baseline_eta: Option<f64>,
    pub gain: Option<f64>,
    pub h0_km: Option<f64>,
    pub h1_km: Option<f64>,
    pub communication_j: Option<f64>,
    pub hover_j: Option<f64>,
    pub displacement_j: Option<f64>,
    pub total_j: Option<f64>,
    pub active_window_s: Option<f64>,
    /// Popularity-weighted rate factor in bit/s.
    pub mean_gamma_bps: Option<f64>,
    pub gamma_error_bps: Option<f64>,
    pub popular_slots: Option<usize>,
    pub iterations: Option<usize>,
    /// Rate factor of the most popular content, analytic and simulated.
    pub top_gamma_bps: Option<f64>,
    pub mc_top_gamma_bps: Option<f64>,
    pub mc_std_error_bps: Option<f64>,
    pub mc_z: Option<f64>,
    /// Empty unless this point failed.
    pub error: String,
}

impl SweepRow {
    fn failed(variable: SweepVariable, value: f64, strategy: Strategy, err: &Error) -> Self {
        SweepRow {
            variable: variable.name(),
            value,
            strategy,
            eta: None,
            baseline_eta: None,
            gain: None,
            h0_km: None,
            h1_km: None,
            communication_j: None,
            hover_j: None,
            displacement_j: None,
            total_j: None,
            active_window_s: None,
            mean_gamma_bps: None,
            gamma_error_bps: None,
            popular_slots: None,
            iterations: None,
            top_gamma_bps: None,
            mc_top_gamma_bps: None,
            mc_std_error_bps: None,
            mc_z: None,
            error: err.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Placement behind each row, `None` for failed rows.
    pub placements: Vec<Option<(Catalog, PlacementVector)>>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.error.is_empty()).count()
    }

    /// Rows of one strategy in sweep order.
    pub fn series(&self, strategy: Strategy) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.strategy == strategy).collect()
    }
}

/// Runs every (sweep value, strategy) pair. Points run in parallel; rows
/// come back in sweep order, strategies in configured order.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutcome> {
    let points = config.validate()?;
    if config.strategies.is_empty() {
        return Err(Error::config("a sweep needs at least one strategy"));
    }
    let env = config.environment_params()?;
    let kernels = KernelCache::new();
    let ctx = EvalContext {
        env: &env,
        platform: &config.platform,
        quad: &config.quadrature,
        rshr: &config.rshr,
        kernels: &kernels,
    };
    let jobs: Vec<(&Point, Strategy)> = points
        .iter()
        .flat_map(|p| config.strategies.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<(SweepRow, Option<(Catalog, PlacementVector)>)> = jobs
        .par_iter()
        .map(|&(point, strategy)| match evaluate_point(config, point, strategy, &ctx) {
            Ok((row, placement)) => (row, Some((point.catalog.clone(), placement))),
            Err(e) => {
                log::warn!("{} = {} with {strategy}: {e}", config.sweep.variable.name(), point.value);
                (SweepRow::failed(config.sweep.variable, point.value, strategy, &e), None)
            }
        })
        .collect();
    let (rows, placements) = results.into_iter().unzip();
    Ok(SweepOutcome { rows, placements })
}

fn evaluate_point(
    config: &RunConfig,
    point: &Point,
    strategy: Strategy,
    ctx: &EvalContext<'_>,
) -> Result<(SweepRow, PlacementVector)> {
    let fixed = |h: f64| {
        solve_p_cache(
            strategy,
            &point.catalog,
            point.cache_size,
            &point.network,
            &DisplacementPlan::hover(h),
            ctx,
        )
    };
    let (sol, baseline): (Solution, Option<f64>) = match config.mode {
        RunMode::FixedAltitude => (fixed(point.network.altitude_km)?, None),
        RunMode::Joint => (
            solve_p(strategy, &point.catalog, point.cache_size, &point.network, &point.grid, ctx)?,
            None,
        ),
        RunMode::DisplacementGain => {
            let base = fixed(point.grid.h0_km)?;
            let best = solve_p(strategy, &point.catalog, point.cache_size, &point.network, &point.grid, ctx)?;
            (best, Some(base.eta))
        }
    };
    let mean_gamma = point
        .catalog
        .popularity()
        .iter()
        .zip(&sol.per_content_gamma)
        .map(|(a, g)| a * g)
        .sum();
    let top_p = sol.placement.probs().first().copied().unwrap_or(0.0);
    let top_gamma = sol.per_content_gamma.first().copied().unwrap_or(0.0);
    let (mc, se, z) = match (&config.simulation, top_p > 0.0) {
        (Some(spec), true) => {
            let at = point.network.with_altitude(sol.h1_km);
            let est = simulate_gamma(&at, ctx.env, top_p, spec, ctx.quad)?;
            (Some(est.value), Some(est.std_error), z_score(top_gamma, est.value, est.std_error))
        }
        _ => (None, None, None),
    };
    let row = SweepRow {
        variable: config.sweep.variable.name(),
        value: point.value,
        strategy,
        eta: Some(sol.eta),
        baseline_eta: baseline,
        gain: baseline.map(|b| if b > 0.0 { sol.eta / b } else { f64::NAN }),
        h0_km: Some(sol.h0_km),
        h1_km: Some(sol.h1_km),
        communication_j: Some(sol.energy.communication_j),
        hover_j: Some(sol.energy.hover_j),
        displacement_j: Some(sol.energy.displacement_j),
        total_j: Some(sol.energy.total_j),
        active_window_s: Some(sol.energy.active_window_s),
        mean_gamma_bps: Some(mean_gamma),
        gamma_error_bps: Some(sol.gamma_error),
        popular_slots: sol.popular_slots,
        iterations: sol.iterations,
        top_gamma_bps: Some(top_gamma),
        mc_top_gamma_bps: mc,
        mc_std_error_bps: se,
        mc_z: z,
        error: String::new(),
    };
    Ok((row, sol.placement))
}

fn z_score(analytic: f64, mc: f64, se: f64) -> Option<f64> {
    if se > 0.0 {
        Some((mc - analytic) / se)
    } else if mc == analytic {
        Some(0.0)
    } else {
        None
    }
}

/// One point of the analytic against simulation comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub variable: &'static str,
    pub value: f64,
    pub probability: f64,
    pub analytic_bps: f64,
    pub analytic_error_bps: f64,
    pub mc_bps: f64,
    pub mc_std_error_bps: f64,
    pub z: Option<f64>,
    /// Same analytic evaluation with the interference limits as printed.
    pub literal_bps: Option<f64>,
    pub literal_z: Option<f64>,
    pub served_fraction: f64,
    pub trials: usize,
    pub pass: bool,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub z_limit: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.error.is_empty()).count()
    }
}

/// Compares the exact rate factor with the simulator at every sweep point.
pub fn validate(config: &RunConfig) -> Result<ValidationReport> {
    let spec = config
        .simulation
        .ok_or_else(|| Error::config("validation needs a [simulation] section"))?;
    let points = config.validate()?;
    let env = config.environment_params()?;
    let literal = QuadratureSpec {
        interference_limits: InterferenceLimits::Literal,
        ..config.quadrature
    };
    let z_limit = config.validation.z_limit;
    let mut rows = Vec::with_capacity(points.len());
    for point in &points {
        let net = &point.network;
        let p = point.probability;
        let outcome = (|| -> Result<ValidationRow> {
            let exact = crate::analysis::gamma_exact(net, &env, p, &config.quadrature)?;
            let est = simulate_gamma(net, &env, p, &spec, &config.quadrature)?;
            let z = z_score(exact.value, est.value, est.std_error);
            let lit = if config.quadrature.interference_limits == InterferenceLimits::Literal {
                None
            } else {
                crate::analysis::gamma_exact(net, &env, p, &literal).ok().map(|g| g.value)
            };
            Ok(ValidationRow {
                variable: config.sweep.variable.name(),
                value: point.value,
                probability: p,
                analytic_bps: exact.value,
                analytic_error_bps: exact.error,
                mc_bps: est.value,
                mc_std_error_bps: est.std_error,
                z,
                literal_bps: lit,
                literal_z: lit.and_then(|l| z_score(l, est.value, est.std_error)),
                served_fraction: est.served_fraction,
                trials: est.trials,
                pass: z.is_some_and(|z| z.abs() <= z_limit),
                error: String::new(),
            })
        })();
        rows.push(outcome.unwrap_or_else(|e| ValidationRow {
            variable: config.sweep.variable.name(),
            value: point.value,
            probability: p,
            analytic_bps: f64::NAN,
            analytic_error_bps: f64::NAN,
            mc_bps: f64::NAN,
            mc_std_error_bps: f64::NAN,
            z: None,
            literal_bps: None,
            literal_z: None,
            served_fraction: f64::NAN,
            trials: 0,
            pass: false,
            error: e.to_string(),
        }));
    }
    Ok(ValidationReport { rows, z_limit })
}

/// Reproducibility record written next to every result file.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub package_version: &'static str,
    pub command: &'a str,
    pub rows: usize,
    pub failures: usize,
    /// Environment parameters after presets and overrides.
    pub resolved_environment: EnvironmentParams,
    pub config: &'a RunConfig,
}

pub fn write_manifest(dir: &Path, command: &str, config: &RunConfig, rows: usize, failures: usize) -> Result<PathBuf> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        package_version: env!("CARGO_PKG_VERSION"),
        command,
        rows,
        failures,
        resolved_environment: config.environment_params()?,
        config,
    };
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest)?)?;
    Ok(path)
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sweep.csv`, one placement CSV per successful row and the
/// manifest into `dir`. Returns the sweep CSV path.
pub fn write_sweep(dir: &Path, config: &RunConfig, outcome: &SweepOutcome) -> Result<PathBuf> {
    let csv_path = dir.join("sweep.csv");
    write_rows(&csv_path, &outcome.rows)?;
    let pdir = dir.join("placements");
    for (i, (row, placement)) in outcome.rows.iter().zip(&outcome.placements).enumerate() {
        if let Some((catalog, p)) = placement {
            fs::create_dir_all(&pdir)?;
            let file = fs::File::create(pdir.join(format!("{:03}-{}.csv", i / config.strategies.len(), row.strategy)))?;
            p.write_csv(catalog, file)?;
        }
    }
    write_manifest(dir, "sweep", config, outcome.rows.len(), outcome.failures())?;
    Ok(csv_path)
}

pub fn write_validation(dir: &Path, config: &RunConfig, report: &ValidationReport) -> Result<PathBuf> {
    let csv_path = dir.join("validation.csv");
    write_rows(&csv_path, &report.rows)?;
    write_manifest(dir, "validate", config, report.rows.len(), report.failures())?;
    Ok(csv_path)
}
