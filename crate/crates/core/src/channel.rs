//! Air-to-ground channel: elevation-dependent LOS probability, LOS/NLOS
//! power-law path loss, log-normal shadowing with elevation-dependent spread
//! and unit-mean Nakagami power fading.
//!
//! Distances are in km. Received powers are for unit transmit power.

use std::collections::BTreeMap;
use std::f64::consts::{LN_10, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, NormalRule};

const ENVIRONMENTS_TOML: &str = include_str!("../presets/environments.toml");

/// Propagation constants of one environment class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    /// LOS S-curve offset.
    pub phi: f64,
    /// LOS S-curve slope per degree of elevation.
    pub psi: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub k_los: f64,
    pub k_nlos: f64,
    /// Shadowing means in dB.
    pub mu_los: f64,
    pub mu_nlos: f64,
    /// `σ(θ) = a·exp(−c·θ)`, θ in degrees.
    pub a_los: f64,
    pub c_los: f64,
    pub a_nlos: f64,
    pub c_nlos: f64,
    /// Nakagami shape parameters.
    pub w_los: f64,
    pub w_nlos: f64,
}

impl EnvironmentParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("phi", self.phi),
            ("psi", self.psi),
            ("k_los", self.k_los),
            ("k_nlos", self.k_nlos),
            ("a_los", self.a_los),
            ("c_los", self.c_los),
            ("a_nlos", self.a_nlos),
            ("c_nlos", self.c_nlos),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("environment field {name} must be positive, got {v}")));
            }
        }
        if !(self.alpha_los >= 2.0 && self.alpha_nlos >= self.alpha_los) {
            return Err(Error::config(format!(
                "path-loss exponents need 2 <= alpha_los <= alpha_nlos, got {} and {}",
                self.alpha_los, self.alpha_nlos
            )));
        }
        if !(self.w_los >= self.w_nlos && self.w_nlos >= 0.5) {
            return Err(Error::config(format!(
                "Nakagami shapes need w_los >= w_nlos >= 0.5, got {} and {}",
                self.w_los, self.w_nlos
            )));
        }
        if !(self.mu_los.is_finite() && self.mu_nlos.is_finite()) {
            return Err(Error::config("shadowing means must be finite"));
        }
        Ok(())
    }

    /// Looks up a shipped preset by name (`suburban`, `urban`,
    /// `dense-urban`, `high-rise`).
    pub fn preset(name: &str) -> Result<Self> {
        let all = Self::presets();
        all.get(name).copied().ok_or_else(|| {
            Error::config(format!(
                "unknown environment preset '{name}' (available: {})",
                all.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn presets() -> BTreeMap<String, EnvironmentParams> {
        toml::from_str(ENVIRONMENTS_TOML).expect("shipped environment presets parse")
    }

    fn state(&self, state: LinkState) -> StateParams {
        match state {
            LinkState::Los => StateParams {
                alpha: self.alpha_los,
                k: self.k_los,
                mu: self.mu_los,
                a: self.a_los,
                c: self.c_los,
                w: self.w_los,
            },
            LinkState::Nlos => StateParams {
                alpha: self.alpha_nlos,
                k: self.k_nlos,
                mu: self.mu_nlos,
                a: self.a_nlos,
                c: self.c_nlos,
                w: self.w_nlos,
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct StateParams {
    alpha: f64,
    k: f64,
    mu: f64,
    a: f64,
    c: f64,
    w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    Los,
    Nlos,
}

impl LinkState {
    pub const BOTH: [LinkState; 2] = [LinkState::Los, LinkState::Nlos];
}

/// Ground-projected distance and altitude of one UAV–user link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub horizontal_distance_km: f64,
    pub altitude_km: f64,
}

impl Link {
    pub fn new(horizontal_distance_km: f64, altitude_km: f64) -> Result<Self> {
        let link = Link {
            horizontal_distance_km,
            altitude_km,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        let (x, h) = (self.horizontal_distance_km, self.altitude_km);
        if !(x >= 0.0 && h >= 0.0 && x.is_finite() && h.is_finite()) {
            return Err(Error::config(format!("link distances must be finite and >= 0, got x={x}, H={h}")));
        }
        if x == 0.0 && h == 0.0 {
            return Err(Error::config("link with zero length has no elevation angle"));
        }
        Ok(())
    }

    /// Elevation angle in degrees; 90° directly overhead.
    pub fn elevation_deg(&self) -> f64 {
        self.altitude_km.atan2(self.horizontal_distance_km).to_degrees()
    }

    pub fn distance_sq_km2(&self) -> f64 {
        self.altitude_km * self.altitude_km + self.horizontal_distance_km * self.horizontal_distance_km
    }
}

pub fn los_probability(env: &EnvironmentParams, link: &Link) -> f64 {
    los_probability_at_angle(env, link.elevation_deg())
}

pub(crate) fn los_probability_at_angle(env: &EnvironmentParams, theta_deg: f64) -> f64 {
    1.0 / (1.0 + env.phi * (-env.psi * (theta_deg - env.phi)).exp())
}

pub fn state_probability(env: &EnvironmentParams, link: &Link, state: LinkState) -> f64 {
    let p = los_probability(env, link);
    match state {
        LinkState::Los => p,
        LinkState::Nlos => 1.0 - p,
    }
}

/// Linear power gain `K / d^α` of the given propagation state.
pub fn path_loss(env: &EnvironmentParams, link: &Link, state: LinkState) -> f64 {
    let s = env.state(state);
    s.k * link.distance_sq_km2().powf(-0.5 * s.alpha)
}

pub fn shadow_std_db(env: &EnvironmentParams, link: &Link, state: LinkState) -> f64 {
    let s = env.state(state);
    s.a * (-s.c * link.elevation_deg()).exp()
}

pub fn shadow_mean_db(env: &EnvironmentParams, state: LinkState) -> f64 {
    env.state(state).mu
}

pub fn nakagami_shape(env: &EnvironmentParams, state: LinkState) -> f64 {
    env.state(state).w
}

/// `E[10^{U/10}]` for `U ~ N(μ, σ²)` in dB.
pub fn lognormal_mean_gain(mu_db: f64, sigma_db: f64) -> f64 {
    let k = LN_10 / 10.0;
    (mu_db * k + 0.5 * (sigma_db * k).powi(2)).exp()
}

/// Average received power over LOS state, shadowing and fading.
pub fn mean_received_power(env: &EnvironmentParams, link: &Link) -> f64 {
    let p_los = los_probability(env, link);
    LinkState::BOTH
        .iter()
        .map(|&state| {
            let prob = match state {
                LinkState::Los => p_los,
                LinkState::Nlos => 1.0 - p_los,
            };
            prob * path_loss(env, link, state)
                * lognormal_mean_gain(shadow_mean_db(env, state), shadow_std_db(env, link, state))
        })
        .sum()
}

/// Which range the shadowing variable `u` (dB) is integrated over in the
/// single-link Laplace transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShadowLimits {
    /// The whole real line, as the Gaussian law of `U` requires.
    #[default]
    FullLine,
    /// Only `u >= 0`; the Gaussian mass below zero is dropped.
    NonNegative,
}

/// Quadrature rule for the shadowing expectation.
#[derive(Debug, Clone)]
pub struct ShadowRule {
    normal: NormalRule,
    legendre: (Vec<f64>, Vec<f64>),
    limits: ShadowLimits,
}

impl ShadowRule {
    pub fn new(nodes: usize, limits: ShadowLimits) -> Self {
        ShadowRule {
            normal: NormalRule::gauss_hermite(nodes),
            legendre: gauss_legendre(nodes),
            limits,
        }
    }

    pub fn nodes(&self) -> usize {
        self.normal.len()
    }

    pub fn limits(&self) -> ShadowLimits {
        self.limits
    }

    /// `(weight, u)` pairs such that `E[f(U)] ≈ Σ weight·f(u)` (restricted
    /// to `u >= 0` under [`ShadowLimits::NonNegative`]).
    fn points(&self, mu: f64, sigma: f64) -> Vec<(f64, f64)> {
        match self.limits {
            ShadowLimits::FullLine => self
                .normal
                .nodes
                .iter()
                .zip(&self.normal.weights)
                .map(|(&z, &w)| (w, mu + sigma * z))
                .collect(),
            ShadowLimits::NonNegative => {
                let hi = mu + 12.0 * sigma;
                if hi <= 0.0 {
                    return Vec::new();
                }
                if sigma == 0.0 {
                    return if mu >= 0.0 { vec![(1.0, mu)] } else { Vec::new() };
                }
                let half = 0.5 * hi;
                let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
                self.legendre
                    .0
                    .iter()
                    .zip(&self.legendre.1)
                    .map(|(&t, &w)| {
                        let u = half * (t + 1.0);
                        let d = (u - mu) / sigma;
                        (w * half * norm * (-0.5 * d * d).exp(), u)
                    })
                    .collect()
            }
        }
    }
}

/// Hermite order used unless configured otherwise. With NLOS spreads near
/// 30 dB the transform is a sharp step in `u` and 32 nodes miss it by ~1%.
pub const DEFAULT_SHADOW_NODES: usize = 64;

impl Default for ShadowRule {
    fn default() -> Self {
        ShadowRule::new(DEFAULT_SHADOW_NODES, ShadowLimits::FullLine)
    }
}

/// Precomputed quadrature terms of one link's received-power law, so the
/// Laplace transform can be evaluated for many transform variables.
///
/// `L(v) = Σ_k c_k (1 + v·g_k)^{−W_k}` with `g_k = L_state·10^{u_k/10}/W`.
#[derive(Debug, Clone)]
pub struct LinkProfile {
    terms: Vec<ProfileTerm>,
    /// Total weight; 1 unless the shadowing integral is truncated.
    mass: f64,
}

#[derive(Debug, Clone, Copy)]
struct ProfileTerm {
    weight: f64,
    gain: f64,
    shape: f64,
}

impl LinkProfile {
    pub fn new(env: &EnvironmentParams, link: &Link, rule: &ShadowRule) -> Self {
        let p_los = los_probability(env, link);
        let mut terms = Vec::with_capacity(2 * rule.nodes());
        for state in LinkState::BOTH {
            let prob = match state {
                LinkState::Los => p_los,
                LinkState::Nlos => 1.0 - p_los,
            };
            if prob <= 0.0 {
                continue;
            }
            let s = env.state(state);
            let base = path_loss(env, link, state) / s.w;
            let sigma = shadow_std_db(env, link, state);
            for (w, u) in rule.points(s.mu, sigma) {
                terms.push(ProfileTerm {
                    weight: prob * w,
                    gain: base * 10f64.powf(u / 10.0),
                    shape: s.w,
                });
            }
        }
        let mass = terms.iter().map(|t| t.weight).sum();
        LinkProfile { terms, mass }
    }

    /// `E[e^{−v·P_r}]`.
    pub fn laplace(&self, v: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight * (-t.shape * (v * t.gain).ln_1p()).exp())
            .sum()
    }

    /// `mass − L(v)`, i.e. `1 − E[e^{−v·P_r}]` on the full line, computed
    /// without cancellation for small `v`.
    pub fn laplace_complement(&self, v: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.weight * (-t.shape * (v * t.gain).ln_1p()).exp_m1())
            .sum()
    }

    /// `(L(v), mass − L(v))` from one pass over the terms.
    pub fn laplace_pair(&self, v: f64) -> (f64, f64) {
        let mut l = 0.0;
        let mut comp = 0.0;
        for t in &self.terms {
            let e = (-t.shape * (v * t.gain).ln_1p()).exp_m1();
            l += t.weight * (1.0 + e);
            comp -= t.weight * e;
        }
        (l, comp)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Laplace transform `E[e^{−v·L·V·W}]` of the received power of one link.
pub fn laplace_single_link(env: &EnvironmentParams, link: &Link, v: f64, rule: &ShadowRule) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::config(format!("transform variable must be >= 0, got {v}")));
    }
    if v == 0.0 {
        return Ok(LinkProfile::new(env, link, rule).mass());
    }
    let value = LinkProfile::new(env, link, rule).laplace(v);
    if !value.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&value) {
        return Err(Error::numeric(
            "single-link Laplace transform",
            format!(
                "value {value} outside [0, 1] at x={} km, v={v:e}",
                link.horizontal_distance_km
            ),
        ));
    }
    Ok(value.clamp(0.0, 1.0))
}
