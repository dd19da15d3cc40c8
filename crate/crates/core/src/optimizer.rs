//! Network energy efficiency and the joint placement/altitude search.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{KernelCache, NetworkConfig, QuadratureSpec};
use crate::channel::EnvironmentParams;
use crate::energy::{efficiency_from, total_energy, DisplacementPlan, Direction, EnergyBreakdown, UavPlatform};
use crate::error::{Error, Result};
use crate::placement::{self, Catalog, PlacementVector, RshrOptions};

/// Placement strategy evaluated at one altitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Mpcp,
    Mprc,
    Rshr,
    Hitrate,
    Lru,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Mpcp,
        Strategy::Mprc,
        Strategy::Rshr,
        Strategy::Hitrate,
        Strategy::Lru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Mpcp => "mpcp",
            Strategy::Mprc => "mprc",
            Strategy::Rshr => "rshr",
            Strategy::Hitrate => "hitrate",
            Strategy::Lru => "lru",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown strategy '{s}' (expected mpcp, mprc, rshr, hitrate or lru)")))
    }
}

/// Altitude partition of `[h_min, h_max]` into `n_max` equal intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltitudeGrid {
    pub h_min_km: f64,
    pub h_max_km: f64,
    pub n_max: usize,
    pub h0_km: f64,
}

impl Default for AltitudeGrid {
    fn default() -> Self {
        AltitudeGrid {
            h_min_km: 0.05,
            h_max_km: 0.4,
            n_max: 16,
            h0_km: 0.2,
        }
    }
}

impl AltitudeGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_min_km > 0.0 && self.h_min_km < self.h_max_km && self.h_max_km.is_finite()) {
            return Err(Error::config(format!(
                "altitude grid needs 0 < h_min < h_max, got [{}, {}] km",
                self.h_min_km, self.h_max_km
            )));
        }
        if self.n_max == 0 {
            return Err(Error::config("altitude grid needs n_max >= 1"));
        }
        if !(self.h0_km > 0.0 && self.h0_km.is_finite()) {
            return Err(Error::config(format!("initial altitude must be positive, got {} km", self.h0_km)));
        }
        Ok(())
    }

    pub fn midpoints(&self) -> Vec<f64> {
        let step = (self.h_max_km - self.h_min_km) / self.n_max as f64;
        (0..self.n_max)
            .map(|l| self.h_min_km + (l as f64 + 0.5) * step)
            .collect()
    }

    /// Midpoints plus `h0`, in evaluation order (`h0` first).
    pub fn candidates(&self) -> Vec<f64> {
        let mut out = vec![self.h0_km];
        out.extend(self.midpoints().into_iter().filter(|&h| h != self.h0_km));
        out
    }
}

/// Everything besides the placement that fixes a network EE evaluation.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub env: &'a EnvironmentParams,
    pub platform: &'a UavPlatform,
    pub quad: &'a QuadratureSpec,
    pub rshr: &'a RshrOptions,
    pub kernels: &'a KernelCache,
}

/// Network EE of one placement at one altitude plan.
#[derive(Debug, Clone)]
pub struct NetworkEe {
    pub eta: f64,
    pub per_content_eta: Vec<f64>,
    /// Rate factor per content in bit/s, zero where nothing is cached.
    pub per_content_gamma: Vec<f64>,
    /// Largest quadrature error estimate among the rate factors.
    pub gamma_error: f64,
    pub energy: EnergyBreakdown,
}

/// `η = Σ a_c η_c` with each `γ_c` from the exact kernel at the plan's final
/// altitude. `cfg.altitude_km` is ignored in favour of `plan.h1_km`.
pub fn network_ee(
    placement: &PlacementVector,
    catalog: &Catalog,
    cfg: &NetworkConfig,
    plan: &DisplacementPlan,
    ctx: &EvalContext<'_>,
) -> Result<NetworkEe> {
    if placement.len() != catalog.size() {
        return Err(Error::config(format!(
            "placement has {} entries for a catalog of {}",
            placement.len(),
            catalog.size()
        )));
    }
    let energy = total_energy(ctx.platform, plan, placement.cache_size() as f64)?;
    let at = cfg.with_altitude(plan.h1_km);
    let any_cached = placement.probs().iter().any(|&p| p > 0.0);
    let kernel = if any_cached {
        Some(ctx.kernels.get(&at, ctx.env, ctx.quad)?)
    } else {
        None
    };
    let mut per_content_gamma = Vec::with_capacity(placement.len());
    let mut gamma_error: f64 = 0.0;
    for &p in placement.probs() {
        match (&kernel, p > 0.0) {
            (Some(k), true) => {
                let g = k.gamma(p)?;
                gamma_error = gamma_error.max(g.error);
                per_content_gamma.push(g.value);
            }
            _ => per_content_gamma.push(0.0),
        }
    }
    let per_content_eta: Vec<f64> = per_content_gamma.iter().map(|&g| efficiency_from(&energy, g)).collect();
    let eta = catalog
        .popularity()
        .iter()
        .zip(&per_content_eta)
        .map(|(a, e)| a * e)
        .sum();
    Ok(NetworkEe {
        eta,
        per_content_eta,
        per_content_gamma,
        gamma_error,
        energy,
    })
}

/// Best placement of one strategy at one altitude plan.
#[derive(Debug, Clone)]
pub struct Solution {
    pub strategy: Strategy,
    pub h0_km: f64,
    pub h1_km: f64,
    /// `None` when the UAVs stay at `h0`.
    pub direction: Option<Direction>,
    pub placement: PlacementVector,
    pub eta: f64,
    pub per_content_eta: Vec<f64>,
    pub per_content_gamma: Vec<f64>,
    pub gamma_error: f64,
    pub energy: EnergyBreakdown,
    /// Popular slot count picked by MPRC.
    pub popular_slots: Option<usize>,
    /// RSHR iterations used.
    pub iterations: Option<usize>,
}

impl Solution {
    fn assemble(strategy: Strategy, plan: &DisplacementPlan, placement: PlacementVector, ee: NetworkEe) -> Self {
        Solution {
            strategy,
            h0_km: plan.h0_km,
            h1_km: plan.h1_km,
            direction: Direction::between(plan.h0_km, plan.h1_km),
            placement,
            eta: ee.eta,
            per_content_eta: ee.per_content_eta,
            per_content_gamma: ee.per_content_gamma,
            gamma_error: ee.gamma_error,
            energy: ee.energy,
            popular_slots: None,
            iterations: None,
        }
    }
}

/// Solves the placement problem of `strategy` at a fixed altitude plan.
pub fn solve_p_cache(
    strategy: Strategy,
    catalog: &Catalog,
    cache_size: usize,
    cfg: &NetworkConfig,
    plan: &DisplacementPlan,
    ctx: &EvalContext<'_>,
) -> Result<Solution> {
    let at = cfg.with_altitude(plan.h1_km);
    at.validate()?;
    let evaluate = |p: &PlacementVector| network_ee(p, catalog, &at, plan, ctx);
    let theta = at.theta_cop();
    let (placement, popular_slots, iterations) = match strategy {
        Strategy::Mpcp => (placement::mpcp(catalog, cache_size)?, None, None),
        Strategy::Lru => (placement::lru_reference(catalog, cache_size)?, None, None),
        Strategy::Hitrate => {
            let sol = placement::hitrate_solver(catalog.popularity(), theta, cache_size)?;
            (sol.placement, None, None)
        }
        Strategy::Mprc => {
            let out = placement::mprc_optimize(catalog, cache_size, |p| evaluate(p).map(|e| e.eta))?;
            (out.placement, Some(out.popular_slots), None)
        }
        Strategy::Rshr => {
            let out = placement::rshr(
                catalog,
                cache_size,
                theta,
                |p| evaluate(p).map(|e| e.per_content_eta),
                ctx.rshr,
            )?;
            if let Some(msg) = &out.diagnostic {
                log::warn!("RSHR at {} km: {msg}", plan.h1_km);
            }
            (out.placement, None, Some(out.iterations))
        }
    };
    let ee = evaluate(&placement)?;
    let mut sol = Solution::assemble(strategy, plan, placement, ee);
    sol.popular_slots = popular_slots;
    sol.iterations = iterations;
    Ok(sol)
}

/// Joint search over the altitude grid; `h0` itself is always a candidate.
pub fn solve_p(
    strategy: Strategy,
    catalog: &Catalog,
    cache_size: usize,
    cfg: &NetworkConfig,
    grid: &AltitudeGrid,
    ctx: &EvalContext<'_>,
) -> Result<Solution> {
    grid.validate()?;
    let heights = grid.candidates();
    let outcomes: Vec<Result<Solution>> = heights
        .par_iter()
        .map(|&h1| {
            let plan = DisplacementPlan::new(grid.h0_km, h1)?;
            solve_p_cache(strategy, catalog, cache_size, cfg, &plan, ctx)
        })
        .collect();

    let mut best: Option<Solution> = None;
    for (h1, outcome) in heights.iter().zip(outcomes) {
        let sol = match outcome {
            Ok(s) => s,
            Err(Error::Constraint(reason)) => {
                log::info!("skipping altitude {h1} km: {reason}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some(b) => {
                sol.eta > b.eta
                    || (sol.eta == b.eta && (sol.h1_km - grid.h0_km).abs() < (b.h1_km - grid.h0_km).abs())
            }
        };
        if better {
            best = Some(sol);
        }
    }
    best.ok_or_else(|| Error::Constraint("no feasible altitude candidate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixture {
        env: EnvironmentParams,
        platform: UavPlatform,
        quad: QuadratureSpec,
        rshr: RshrOptions,
        kernels: KernelCache,
    }

    impl Fixture {
        fn new() -> Self {
            Fixture {
                env: EnvironmentParams::preset("suburban").unwrap(),
                platform: UavPlatform::default(),
                quad: QuadratureSpec::default(),
                rshr: RshrOptions::default(),
                kernels: KernelCache::new(),
            }
        }

        fn ctx(&self) -> EvalContext<'_> {
            EvalContext {
                env: &self.env,
                platform: &self.platform,
                quad: &self.quad,
                rshr: &self.rshr,
                kernels: &self.kernels,
            }
        }
    }

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            density_per_km2: 0.1,
            coop_radius_km: 2.0,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            let toml_text = toml::to_string(&std::collections::BTreeMap::from([("s", s)])).unwrap();
            assert!(toml_text.contains(s.name()));
        }
        assert!("random".parse::<Strategy>().is_err());
    }

    #[test]
    fn grid_midpoints() {
        let g = AltitudeGrid {
            h_min_km: 0.0 + 0.1,
            h_max_km: 0.5,
            n_max: 4,
            h0_km: 0.2,
        };
        let m = g.midpoints();
        let expect = [0.15, 0.25, 0.35, 0.45];
        for (a, b) in m.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(g.candidates().len(), 5);
        assert_eq!(g.candidates()[0], 0.2);
        assert!(AltitudeGrid { n_max: 0, ..g }.validate().is_err());
        assert!(AltitudeGrid { h_min_km: 0.6, ..g }.validate().is_err());
    }

    #[test]
    fn empty_placement_has_zero_efficiency() {
        let f = Fixture::new();
        let catalog = Catalog::zipf(4, 1.0).unwrap();
        let p = PlacementVector::new(vec![0.0; 4], 0).unwrap();
        let ee = network_ee(&p, &catalog, &cfg(), &DisplacementPlan::hover(0.2), &f.ctx()).unwrap();
        assert_eq!(ee.eta, 0.0);
        assert!(ee.per_content_eta.iter().all(|&e| e == 0.0));
        assert!(f.kernels.is_empty());
    }

    #[test]
    fn single_content_equals_its_efficiency() {
        let f = Fixture::new();
        let catalog = Catalog::zipf(1, 0.8).unwrap();
        let p = PlacementVector::new(vec![1.0], 1).unwrap();
        let plan = DisplacementPlan::hover(0.2);
        let ee = network_ee(&p, &catalog, &cfg(), &plan, &f.ctx()).unwrap();
        let gamma = crate::analysis::gamma_exact(&cfg(), &f.env, 1.0, &f.quad).unwrap();
        let eta1 = crate::energy::energy_efficiency(&f.platform, &plan, 1.0, gamma.value).unwrap();
        assert!(ee.eta > 0.0);
        assert!((ee.eta - eta1).abs() <= 1e-9 * eta1);
    }

    #[test]
    fn three_content_weighted_sum() {
        let f = Fixture::new();
        let catalog = Catalog::from_weights(&[0.5, 0.3, 0.2]).unwrap();
        let p = PlacementVector::new(vec![0.9, 0.6, 0.5], 2).unwrap();
        let plan = DisplacementPlan::new(0.2, 0.15).unwrap();
        let ee = network_ee(&p, &catalog, &cfg(), &plan, &f.ctx()).unwrap();
        let at = cfg().with_altitude(0.15);
        let mut oracle = 0.0;
        for (a, &pc) in [0.5, 0.3, 0.2].iter().zip(p.probs()) {
            let g = crate::analysis::gamma_exact(&at, &f.env, pc, &f.quad).unwrap();
            oracle += a * crate::energy::energy_efficiency(&f.platform, &plan, 2.0, g.value).unwrap();
        }
        assert!((ee.eta - oracle).abs() <= 1e-9 * oracle, "{} vs {}", ee.eta, oracle);
    }

    #[test]
    fn mpcp_dispatch_matches_direct_evaluation() {
        let f = Fixture::new();
        let catalog = Catalog::zipf(6, 1.0).unwrap();
        let plan = DisplacementPlan::hover(0.2);
        let sol = solve_p_cache(Strategy::Mpcp, &catalog, 2, &cfg(), &plan, &f.ctx()).unwrap();
        assert_eq!(sol.placement.probs(), &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let direct = network_ee(&placement::mpcp(&catalog, 2).unwrap(), &catalog, &cfg(), &plan, &f.ctx()).unwrap();
        assert_eq!(sol.eta, direct.eta);
        assert_eq!(sol.direction, None);
    }

    #[test]
    fn solution_eta_is_recomputable() {
        let f = Fixture::new();
        let catalog = Catalog::zipf(8, 0.8).unwrap();
        let grid = AltitudeGrid {
            n_max: 4,
            ..AltitudeGrid::default()
        };
        for s in Strategy::ALL {
            let sol = solve_p(s, &catalog, 3, &cfg(), &grid, &f.ctx()).unwrap();
            let plan = DisplacementPlan::new(sol.h0_km, sol.h1_km).unwrap();
            let again = network_ee(&sol.placement, &catalog, &cfg(), &plan, &f.ctx()).unwrap();
            assert!((sol.eta - again.eta).abs() <= 1e-9 * again.eta.abs(), "{s}");
            let sum: f64 = catalog
                .popularity()
                .iter()
                .zip(&sol.per_content_eta)
                .map(|(a, e)| a * e)
                .sum();
            assert!((sol.eta - sum).abs() <= 1e-9 * sum.abs());
            assert_eq!(sol.direction, Direction::between(sol.h0_km, sol.h1_km));
            let stay = solve_p_cache(s, &catalog, 3, &cfg(), &DisplacementPlan::hover(grid.h0_km), &f.ctx()).unwrap();
            assert!(sol.eta >= stay.eta);
        }
    }

    #[test]
    fn slow_climb_keeps_initial_altitude() {
        let mut f = Fixture::new();
        // 1 cm/s: any move on the grid takes longer than the window.
        f.platform.vertical_speed_mps = 0.01;
        let catalog = Catalog::zipf(5, 1.0).unwrap();
        let grid = AltitudeGrid {
            n_max: 4,
            h0_km: 0.3,
            ..AltitudeGrid::default()
        };
        let sol = solve_p(Strategy::Hitrate, &catalog, 2, &cfg(), &grid, &f.ctx()).unwrap();
        assert_eq!(sol.h1_km, 0.3);
        assert_eq!(sol.direction, None);
        assert!(sol.eta > 0.0);
    }

    #[test]
    fn single_interval_compares_two_heights() {
        let f = Fixture::new();
        let catalog = Catalog::zipf(5, 1.0).unwrap();
        let grid = AltitudeGrid {
            h_min_km: 0.05,
            h_max_km: 0.15,
            n_max: 1,
            h0_km: 0.3,
        };
        assert_eq!(grid.candidates(), vec![0.3, 0.1]);
        let sol = solve_p(Strategy::Mpcp, &catalog, 2, &cfg(), &grid, &f.ctx()).unwrap();
        let stay = solve_p_cache(Strategy::Mpcp, &catalog, 2, &cfg(), &DisplacementPlan::hover(0.3), &f.ctx()).unwrap();
        let moved = solve_p_cache(
            Strategy::Mpcp,
            &catalog,
            2,
            &cfg(),
            &DisplacementPlan::new(0.3, 0.1).unwrap(),
            &f.ctx(),
        )
        .unwrap();
        assert_eq!(sol.eta, stay.eta.max(moved.eta));
    }

    #[test]
    fn infeasible_descent_is_skipped() {
        let mut f = Fixture::new();
        // Below the critical descent speed every downward move is rejected.
        f.platform.vertical_speed_mps = 1.0;
        let catalog = Catalog::zipf(4, 1.0).unwrap();
        let grid = AltitudeGrid {
            n_max: 2,
            h0_km: 0.39,
            ..AltitudeGrid::default()
        };
        let sol = solve_p(Strategy::Mpcp, &catalog, 1, &cfg(), &grid, &f.ctx()).unwrap();
        assert_eq!(sol.h1_km, 0.39);
    }

    #[test]
    fn refining_the_grid_does_not_lose_efficiency() {
        let f = Fixture::new();
        let catalog = Catalog::zipf(6, 1.0).unwrap();
        let coarse = AltitudeGrid {
            n_max: 2,
            ..AltitudeGrid::default()
        };
        let fine = AltitudeGrid { n_max: 4, ..coarse };
        let a = solve_p(Strategy::Hitrate, &catalog, 2, &cfg(), &coarse, &f.ctx()).unwrap();
        let b = solve_p(Strategy::Hitrate, &catalog, 2, &cfg(), &fine, &f.ctx()).unwrap();
        assert!(b.eta >= a.eta * (1.0 - 1e-3));
    }
}
