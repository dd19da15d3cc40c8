//! Per-UAV energy over one communication window: transmission, circuit and
//! cache power, rotary-wing hovering, and vertical displacement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRAVITY_MPS2: f64 = 9.81;

/// Physical and power constants of one UAV type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavPlatform {
    pub mass_kg: f64,
    pub rotor_radius_m: f64,
    pub vertical_speed_mps: f64,
    pub tx_power_w: f64,
    pub circuit_power_w: f64,
    pub cache_power_per_unit_w: f64,
    pub c1: f64,
    pub c2: f64,
    pub rho0_kgm3: f64,
    pub c_rho_per_km: f64,
    pub window_s: f64,
    /// Use the weight force `M·g` instead of `M` inside the displacement
    /// radicals.
    pub use_weight_force: bool,
}

impl Default for UavPlatform {
    fn default() -> Self {
        UavPlatform {
            mass_kg: 10.2,
            rotor_radius_m: 0.5,
            vertical_speed_mps: 10.0,
            tx_power_w: 1.0,
            circuit_power_w: 1e-5,
            cache_power_per_unit_w: 1e-6,
            c1: 1.91,
            c2: 1.1,
            rho0_kgm3: 1.225,
            c_rho_per_km: 0.118,
            window_s: 200.0,
            use_weight_force: false,
        }
    }
}

impl UavPlatform {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass_kg", self.mass_kg),
            ("rotor_radius_m", self.rotor_radius_m),
            ("vertical_speed_mps", self.vertical_speed_mps),
            ("tx_power_w", self.tx_power_w),
            ("circuit_power_w", self.circuit_power_w),
            ("cache_power_per_unit_w", self.cache_power_per_unit_w),
            ("c1", self.c1),
            ("c2", self.c2),
            ("rho0_kgm3", self.rho0_kgm3),
            ("c_rho_per_km", self.c_rho_per_km),
            ("window_s", self.window_s),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("platform field {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn disk_area_m2(&self) -> f64 {
        PI * self.rotor_radius_m * self.rotor_radius_m
    }

    /// `2M/(ρπd²)` (or with `M·g`), the induced-velocity term of the
    /// displacement power.
    fn induced_term(&self, rho: f64) -> f64 {
        let m = if self.use_weight_force {
            self.mass_kg * GRAVITY_MPS2
        } else {
            self.mass_kg
        };
        2.0 * m / (rho * self.disk_area_m2())
    }

    /// Slowest admissible descent speed at air density `rho`.
    pub fn min_descent_speed(&self, rho: f64) -> f64 {
        self.induced_term(rho).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    /// Direction implied by moving from `h0` to `h1`; `None` when they agree.
    pub fn between(h0_km: f64, h1_km: f64) -> Option<Direction> {
        if h1_km > h0_km {
            Some(Direction::Up)
        } else if h1_km < h0_km {
            Some(Direction::Down)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementPlan {
    pub h0_km: f64,
    pub h1_km: f64,
    pub direction: Direction,
}

impl DisplacementPlan {
    /// Plan whose direction is inferred from the two altitudes.
    pub fn new(h0_km: f64, h1_km: f64) -> Result<Self> {
        if !(h0_km >= 0.0 && h1_km >= 0.0 && h0_km.is_finite() && h1_km.is_finite()) {
            return Err(Error::config(format!("altitudes must be finite and >= 0, got {h0_km}, {h1_km}")));
        }
        Ok(DisplacementPlan {
            h0_km,
            h1_km,
            direction: Direction::between(h0_km, h1_km).unwrap_or(Direction::Up),
        })
    }

    pub fn hover(h_km: f64) -> Self {
        DisplacementPlan {
            h0_km: h_km,
            h1_km: h_km,
            direction: Direction::Up,
        }
    }

    pub fn with_direction(h0_km: f64, h1_km: f64, direction: Direction) -> Result<Self> {
        let plan = DisplacementPlan {
            h0_km,
            h1_km,
            direction,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = Direction::between(self.h0_km, self.h1_km) {
            if d != self.direction {
                return Err(Error::Constraint(format!(
                    "direction {:?} inconsistent with {} km -> {} km",
                    self.direction, self.h0_km, self.h1_km
                )));
            }
        }
        Ok(())
    }

    pub fn delta_km(&self) -> f64 {
        (self.h1_km - self.h0_km).abs()
    }

    pub fn midpoint_km(&self) -> f64 {
        0.5 * (self.h0_km + self.h1_km)
    }

    pub fn is_hover(&self) -> bool {
        self.h0_km == self.h1_km
    }
}

pub fn air_density(platform: &UavPlatform, h_km: f64) -> f64 {
    platform.rho0_kgm3 * (-platform.c_rho_per_km * h_km).exp()
}

/// Rotary-wing hovering power at altitude `h_km`.
pub fn hover_power(platform: &UavPlatform, h_km: f64) -> f64 {
    let rho = air_density(platform, h_km);
    platform.c1 * rho + platform.c2 * platform.mass_kg.powf(1.5) / (rho * platform.disk_area_m2()).sqrt()
}

/// Vertical displacement power at altitude `h_km`.
pub fn displacement_power(platform: &UavPlatform, h_km: f64, direction: Direction) -> Result<f64> {
    let rho = air_density(platform, h_km);
    let induced = platform.induced_term(rho);
    let vv = platform.vertical_speed_mps;
    let half_m = 0.5 * platform.mass_kg;
    match direction {
        Direction::Up => Ok(half_m * vv + half_m * (vv * vv + induced).sqrt()),
        Direction::Down => {
            let mut radicand = vv * vv - induced;
            // Rounding at the critical speed itself.
            if radicand < 0.0 && -radicand <= 8.0 * f64::EPSILON * induced {
                radicand = 0.0;
            }
            if radicand < 0.0 {
                return Err(Error::Constraint(format!(
                    "descent at {vv} m/s is infeasible at {h_km} km: vertical speed must be at least {:.4} m/s",
                    induced.sqrt()
                )));
            }
            if radicand <= 8.0 * f64::EPSILON * induced {
                return Ok(half_m * vv);
            }
            Ok(half_m * vv - half_m * radicand.sqrt())
        }
    }
}

/// Energy of one window, split into its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// Transmission during the remaining window plus circuit and cache.
    pub communication_j: f64,
    pub hover_j: f64,
    pub displacement_j: f64,
    pub total_j: f64,
    /// Seconds of the window left for delivery after moving.
    pub active_window_s: f64,
    pub displacement_time_s: f64,
}

/// Total energy of a window with optional vertical displacement and
/// `cache_units` units of cache.
pub fn total_energy(platform: &UavPlatform, plan: &DisplacementPlan, cache_units: f64) -> Result<EnergyBreakdown> {
    plan.validate()?;
    let travel_s = plan.delta_km() * 1000.0 / platform.vertical_speed_mps;
    let active_s = (platform.window_s - travel_s).max(0.0);
    let static_w = platform.circuit_power_w + cache_units * platform.cache_power_per_unit_w;
    let communication_j = active_s * platform.tx_power_w + static_w;
    let hover_j = active_s * hover_power(platform, plan.h1_km);
    let displacement_j = if plan.is_hover() {
        0.0
    } else {
        travel_s * displacement_power(platform, plan.midpoint_km(), plan.direction)?
    };
    Ok(EnergyBreakdown {
        communication_j,
        hover_j,
        displacement_j,
        total_j: communication_j + hover_j + displacement_j,
        active_window_s: active_s,
        displacement_time_s: travel_s,
    })
}

/// Per-content energy efficiency: delivery time share of the energy times
/// the rate-like factor `gamma`.
pub fn energy_efficiency(platform: &UavPlatform, plan: &DisplacementPlan, cache_units: f64, gamma: f64) -> Result<f64> {
    let e = total_energy(platform, plan, cache_units)?;
    Ok(efficiency_from(&e, gamma))
}

pub fn efficiency_from(energy: &EnergyBreakdown, gamma: f64) -> f64 {
    if energy.active_window_s == 0.0 || gamma == 0.0 {
        return 0.0;
    }
    energy.active_window_s / energy.total_j * gamma
}
