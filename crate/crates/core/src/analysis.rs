//! Analytic rate factor of a requested content: the exact double integral,
//! its Poisson-series approximation, and the interference Laplace transform
//! they share.
//!
//! All radial integrals are taken over a finite disk of radius
//! [`QuadratureSpec::truncation_radius_km`]; the simulator drops UAVs in the
//! same disk so both describe one model. A tail estimate for the annulus
//! beyond that radius is reported with every kernel.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI};
use std::io::Write;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{mean_received_power, EnvironmentParams, Link, LinkProfile, ShadowLimits, ShadowRule, DEFAULT_SHADOW_NODES};
use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, PanelNodes, NODES_PER_PANEL};

const BOLTZMANN_J_PER_K: f64 = 1.380_649e-23;
const REFERENCE_TEMPERATURE_K: f64 = 290.0;

/// Thermal noise power over `bandwidth_hz` with the given noise figure.
pub fn thermal_noise_w(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN_J_PER_K * REFERENCE_TEMPERATURE_K * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub density_per_km2: f64,
    pub coop_radius_km: f64,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub altitude_km: f64,
    pub tx_power_w: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            density_per_km2: 0.1,
            coop_radius_km: 2.0,
            bandwidth_hz: 1e6,
            noise_power_w: thermal_noise_w(1e6, 9.0),
            altitude_km: 0.2,
            tx_power_w: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("density_per_km2", self.density_per_km2),
            ("coop_radius_km", self.coop_radius_km),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("altitude_km", self.altitude_km),
            ("tx_power_w", self.tx_power_w),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Mean number of UAVs in the cooperation zone, `πλX²`.
    pub fn theta_cop(&self) -> f64 {
        PI * self.density_per_km2 * self.coop_radius_km.powi(2)
    }

    /// Noise normalised by transmit power.
    pub fn noise_to_power(&self) -> f64 {
        self.noise_power_w / self.tx_power_w
    }

    pub fn with_altitude(&self, altitude_km: f64) -> Self {
        NetworkConfig { altitude_km, ..*self }
    }
}

/// Which UAVs caching the requested content count as interference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceLimits {
    /// Carriers outside the cooperation zone interfere.
    #[default]
    Zone,
    /// Carriers inside the zone are added instead, as the integration limits
    /// were printed. Kept only for side-by-side comparison.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    /// Absolute tolerance on the rate factor in nats per channel use.
    pub abs_tol: f64,
    pub shadow_nodes: usize,
    pub shadow_limits: ShadowLimits,
    pub interference_limits: InterferenceLimits,
    /// Radius of the disk holding all UAVs; defaults to ten zone radii.
    pub interference_truncation_km: Option<f64>,
    /// Largest accepted relative change of γ from the annulus between the
    /// truncation radius and four times it. Infinite means report only.
    pub tail_tolerance: f64,
    /// Panel width of the outer integral in `ln v`.
    pub log_v_step: f64,
    /// Radial panels per factor of two in distance.
    pub panels_per_octave: usize,
    /// How often the panel layout may be halved to meet `rel_tol`.
    pub max_refinements: usize,
    /// Poisson mass left out of the approximation series.
    pub series_tail_eps: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-4,
            abs_tol: 1e-9,
            shadow_nodes: DEFAULT_SHADOW_NODES,
            shadow_limits: ShadowLimits::FullLine,
            interference_limits: InterferenceLimits::Zone,
            interference_truncation_km: None,
            tail_tolerance: f64::INFINITY,
            log_v_step: 2.0,
            panels_per_octave: 1,
            max_refinements: 3,
            series_tail_eps: 1e-12,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol), ("series_tail_eps", self.series_tail_eps)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.shadow_nodes < 2 {
            return Err(Error::config("shadow_nodes must be at least 2"));
        }
        if !(self.log_v_step > 0.0 && self.log_v_step <= 8.0) {
            return Err(Error::config(format!("log_v_step must lie in (0, 8], got {}", self.log_v_step)));
        }
        if self.panels_per_octave == 0 {
            return Err(Error::config("panels_per_octave must be at least 1"));
        }
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::config("tail_tolerance must be positive"));
        }
        if let Some(r) = self.interference_truncation_km {
            if !(r >= 10.0 * cfg.coop_radius_km && r.is_finite()) {
                return Err(Error::config(format!(
                    "truncation radius {r} km must be at least ten zone radii ({} km)",
                    10.0 * cfg.coop_radius_km
                )));
            }
        }
        Ok(())
    }

    pub fn truncation_radius_km(&self, cfg: &NetworkConfig) -> f64 {
        self.interference_truncation_km.unwrap_or(10.0 * cfg.coop_radius_km)
    }

    pub fn shadow_rule(&self) -> ShadowRule {
        ShadowRule::new(self.shadow_nodes, self.shadow_limits)
    }
}

/// A rate factor in bit/s with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaValue {
    pub value: f64,
    pub error: f64,
}

impl GammaValue {
    pub const ZERO: GammaValue = GammaValue { value: 0.0, error: 0.0 };
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("caching probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Subdivides every interval of `breaks` into `parts` equal panels.
fn subdivide(breaks: &[f64], parts: usize) -> Vec<f64> {
    let mut out = vec![breaks[0]];
    for w in breaks.windows(2) {
        for k in 1..=parts {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / parts as f64);
        }
    }
    out
}

/// Breakpoints on `(0, X)`: octaves shrinking towards the origin until the
/// innermost panel is below half the altitude.
fn zone_breaks(cfg: &NetworkConfig, per_octave: usize) -> Vec<f64> {
    let x = cfg.coop_radius_km;
    let levels = ((2.0 * x / cfg.altitude_km).log2().ceil() as i64).clamp(2, 40) as usize;
    let mut b = vec![0.0];
    for k in (1..=levels).rev() {
        b.push(x * 0.5f64.powi(k as i32));
    }
    b.push(x);
    subdivide(&b, per_octave)
}

/// Octave breakpoints from `a` to `b`.
fn octave_breaks(a: f64, b: f64, per_octave: usize) -> Vec<f64> {
    let mut out = vec![a];
    let mut r = a;
    while r * 2.0 < b * (1.0 - 1e-12) {
        r *= 2.0;
        out.push(r);
    }
    out.push(b);
    subdivide(&out, per_octave)
}

fn profiles(env: &EnvironmentParams, h: f64, nodes: &[f64], rule: &ShadowRule) -> Vec<LinkProfile> {
    nodes
        .iter()
        .map(|&x| {
            LinkProfile::new(
                env,
                &Link {
                    horizontal_distance_km: x,
                    altitude_km: h,
                },
                rule,
            )
        })
        .collect()
}

/// `e^{−Θp}·(e^s − 1)/s`, evaluated without overflow for `0 <= s <= Θp`.
fn scaled_growth(s: f64, theta_p: f64) -> f64 {
    if s < 1.0 {
        if s == 0.0 {
            (-theta_p).exp()
        } else {
            (-theta_p).exp() * s.exp_m1() / s
        }
    } else {
        ((s - theta_p).exp() - (-theta_p).exp()) / s
    }
}

/// Values that depend on one transform variable `v` but not on `p`.
#[derive(Debug, Clone)]
struct VNode {
    v: f64,
    noise: f64,
    /// `∫_0^R z(1 − L1) dz`
    area_total: f64,
    /// `∫_0^X z(1 − L1) dz`
    area_zone: f64,
    /// `∫_R^{4R} z(1 − L1) dz`
    area_tail: f64,
    l1: Vec<f64>,
    /// `∫_{x_j}^X 2y(1 − L1(y)) dy` at every zone node.
    psi_comp: Vec<f64>,
}

struct Geometry<'a> {
    zone: &'a PanelNodes,
    zone_prof: &'a [LinkProfile],
    outer: &'a PanelNodes,
    outer_prof: &'a [LinkProfile],
    tail: &'a PanelNodes,
    tail_prof: &'a [LinkProfile],
}

impl Geometry<'_> {
    fn area(rule: &PanelNodes, prof: &[LinkProfile], v: f64) -> f64 {
        let vals: Vec<f64> = rule
            .x
            .iter()
            .zip(prof)
            .map(|(&z, p)| z * p.laplace_complement(v))
            .collect();
        rule.integrate_values(&vals).0
    }

    fn node(&self, v: f64, noise_to_power: f64) -> VNode {
        let n = self.zone.len();
        let mut l1 = Vec::with_capacity(n);
        let mut f = Vec::with_capacity(n);
        for (&x, p) in self.zone.x.iter().zip(self.zone_prof) {
            let (l, c) = p.laplace_pair(v);
            l1.push(l);
            f.push(2.0 * x * c);
        }
        let psi_comp = self.zone.integrals_to_end(&f);
        let area_zone = 0.5 * self.zone.integrate_values(&f).0;
        let area_total = area_zone + Self::area(self.outer, self.outer_prof, v);
        let area_tail = Self::area(self.tail, self.tail_prof, v);
        VNode {
            v,
            noise: (-v * noise_to_power).exp(),
            area_total,
            area_zone,
            area_tail,
            l1,
            psi_comp,
        }
    }
}

/// Everything needed to evaluate γ(p) for one network configuration and
/// environment. Building costs many Laplace evaluations; each γ(p) after
/// that is a cheap weighted sum, memoised per `p`.
pub struct GammaKernel {
    cfg: NetworkConfig,
    limits: InterferenceLimits,
    rel_tol: f64,
    abs_tol: f64,
    truncation_km: f64,
    zone: PanelNodes,
    t: PanelNodes,
    nodes: Vec<VNode>,
    mean_power: Vec<f64>,
    mean_power_mid: Vec<f64>,
    refinements: usize,
    t_step: f64,
    truncation_effect: f64,
    series_tail_eps: f64,
    memo: Mutex<HashMap<u64, GammaValue>>,
}

impl std::fmt::Debug for GammaKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GammaKernel")
            .field("cfg", &self.cfg)
            .field("v_nodes", &self.nodes.len())
            .field("zone_nodes", &self.zone.len())
            .field("refinements", &self.refinements)
            .field("truncation_effect", &self.truncation_effect)
            .finish()
    }
}

/// Rate-factor sums at one `p`, before the `2πλp·B/ln2` prefactor.
struct Sums {
    value: f64,
    error: f64,
}

const PROBES: [f64; 3] = [1.0, 0.3, 0.05];
const MAX_V_PANELS: usize = 200;

impl GammaKernel {
    pub fn build(cfg: &NetworkConfig, env: &EnvironmentParams, quad: &QuadratureSpec) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        quad.validate(cfg)?;
        let mut last = None;
        for r in 0..=quad.max_refinements {
            let step = quad.log_v_step / 2f64.powi(r as i32);
            let per_octave = quad.panels_per_octave << r;
            let k = Self::build_once(cfg, env, quad, step, per_octave, r)?;
            let ok = PROBES.iter().all(|&p| {
                let s = k.sums(p);
                s.error <= k.tolerance(s.value)
            });
            last = Some(k);
            if ok {
                break;
            }
        }
        let kernel = last.expect("at least one build");
        if kernel.truncation_effect > quad.tail_tolerance {
            return Err(Error::numeric(
                "interference truncation",
                format!(
                    "annulus beyond {:.3} km changes γ by {:.3e} (limit {:.3e}); increase the truncation radius",
                    kernel.truncation_km, kernel.truncation_effect, quad.tail_tolerance
                ),
            ));
        }
        Ok(kernel)
    }

    fn tolerance(&self, nats_sum: f64) -> f64 {
        // `sums` omit the 2πλp prefactor; compare on the same scale.
        (self.rel_tol * nats_sum.abs()).max(self.abs_tol / (2.0 * PI * self.cfg.density_per_km2))
    }

    fn build_once(
        cfg: &NetworkConfig,
        env: &EnvironmentParams,
        quad: &QuadratureSpec,
        step: f64,
        per_octave: usize,
        refinements: usize,
    ) -> Result<Self> {
        let rule = quad.shadow_rule();
        let h = cfg.altitude_km;
        let x_cop = cfg.coop_radius_km;
        let radius = quad.truncation_radius_km(cfg);
        let zone = PanelNodes::from_breakpoints(&zone_breaks(cfg, per_octave));
        let outer = PanelNodes::from_breakpoints(&octave_breaks(x_cop, radius, per_octave));
        let tail = PanelNodes::from_breakpoints(&octave_breaks(radius, 4.0 * radius, per_octave));
        let zone_prof = profiles(env, h, &zone.x, &rule);
        let outer_prof = profiles(env, h, &outer.x, &rule);
        let tail_prof = profiles(env, h, &tail.x, &rule);
        let geo = Geometry {
            zone: &zone,
            zone_prof: &zone_prof,
            outer: &outer,
            outer_prof: &outer_prof,
            tail: &tail,
            tail_prof: &tail_prof,
        };
        let n0 = cfg.noise_to_power();

        let mean_power: Vec<f64> = zone.x.iter().map(|&x| mean_received_power(env, &Link::new(x, h).unwrap())).collect();
        let mean_power_mid: Vec<f64> = zone
            .x
            .iter()
            .map(|&x| mean_received_power(env, &Link::new(0.5 * x + 0.5 * x_cop, h).unwrap()))
            .collect();

        // Panels in ln v, built downward from where e^{−vN0} is negligible,
        // until further panels no longer move any probe value.
        let t_hi = (60.0 / n0).ln();
        let mut kernel = GammaKernel {
            cfg: *cfg,
            limits: quad.interference_limits,
            rel_tol: quad.rel_tol,
            abs_tol: quad.abs_tol,
            truncation_km: radius,
            zone: zone.clone(),
            t: PanelNodes::from_breakpoints(&[]),
            nodes: Vec::new(),
            mean_power,
            mean_power_mid,
            refinements,
            t_step: step,
            truncation_effect: 0.0,
            series_tail_eps: quad.series_tail_eps,
            memo: Mutex::new(HashMap::new()),
        };
        let mut panels: Vec<(f64, f64, Vec<VNode>)> = Vec::new();
        let mut totals = [0.0; PROBES.len()];
        let mut quiet = 0;
        loop {
            if panels.len() == MAX_V_PANELS {
                return Err(Error::numeric(
                    "rate-factor outer integral",
                    format!("no decay after {MAX_V_PANELS} panels in ln v"),
                ));
            }
            let b = t_hi - step * panels.len() as f64;
            let a = b - step;
            let rule = PanelNodes::from_breakpoints(&[a, b]);
            let geo_ref = &geo;
            let nodes: Vec<VNode> = rule.x.par_iter().map(|&t| geo_ref.node(t.exp(), n0)).collect();
            let mut small = true;
            for (k, &p) in PROBES.iter().enumerate() {
                let c: f64 = nodes
                    .iter()
                    .zip(&rule.w_kronrod)
                    .map(|(n, &w)| w * kernel.node_value(n, p, true))
                    .sum();
                totals[k] += c;
                // Nothing accumulated yet means the decay has not started.
                if totals[k] == 0.0 || c.abs() > 1e-3 * quad.rel_tol * totals[k].abs() {
                    small = false;
                }
            }
            panels.push((a, b, nodes));
            quiet = if small { quiet + 1 } else { 0 };
            if quiet >= 2 {
                break;
            }
        }
        panels.reverse();
        let mut breaks = vec![panels[0].0];
        let mut nodes = Vec::with_capacity(panels.len() * NODES_PER_PANEL);
        for (_, b, n) in panels {
            breaks.push(b);
            nodes.extend(n);
        }
        kernel.t = PanelNodes::from_breakpoints(&breaks);
        kernel.nodes = nodes;
        kernel.truncation_effect = PROBES
            .iter()
            .map(|&p| kernel.tail_effect(p))
            .fold(0.0, f64::max);
        Ok(kernel)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn truncation_radius_km(&self) -> f64 {
        self.truncation_km
    }

    /// Largest relative change of γ over the probe probabilities if the
    /// UAV disk were extended to four times its radius.
    pub fn truncation_effect(&self) -> f64 {
        self.truncation_effect
    }

    pub fn refinements(&self) -> usize {
        self.refinements
    }

    pub fn v_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn interference(&self, n: &VNode, p: f64) -> f64 {
        let lam = 2.0 * PI * self.cfg.density_per_km2;
        match self.limits {
            InterferenceLimits::Zone => (-lam * (n.area_total - p * n.area_zone)).exp(),
            InterferenceLimits::Literal => (-lam * ((1.0 - p) * n.area_total + p * n.area_zone)).exp(),
        }
    }

    /// Inner x-integral at one v node, times noise and interference factors.
    fn node_value(&self, n: &VNode, p: f64, kronrod: bool) -> f64 {
        let (inner, _) = self.inner(n, p, kronrod);
        n.noise * self.interference(n, p) * inner
    }

    fn inner(&self, n: &VNode, p: f64, kronrod: bool) -> (f64, f64) {
        let s = PI * self.cfg.density_per_km2 * p;
        let theta_p = self.cfg.theta_cop() * p;
        let x2 = self.cfg.coop_radius_km.powi(2);
        let mut k = 0.0;
        let mut g = 0.0;
        for (j, &x) in self.zone.x.iter().enumerate() {
            let a = s * (x2 - x * x);
            let b = (a - s * n.psi_comp[j]).max(0.0);
            let term = x * (scaled_growth(a, theta_p) - n.l1[j] * scaled_growth(b, theta_p));
            if kronrod {
                k += self.zone.w_kronrod[j] * term;
            }
            g += self.zone.w_gauss[j] * term;
        }
        (k, g)
    }

    fn sums(&self, p: f64) -> Sums {
        let mut value = 0.0;
        let mut err_t = 0.0;
        let mut err_x = 0.0;
        for panel in 0..self.t.panels {
            let mut k = 0.0;
            let mut g = 0.0;
            for i in panel * NODES_PER_PANEL..(panel + 1) * NODES_PER_PANEL {
                let n = &self.nodes[i];
                let scale = n.noise * self.interference(n, p);
                let (ik, ig) = self.inner(n, p, true);
                k += self.t.w_kronrod[i] * scale * ik;
                g += self.t.w_gauss[i] * scale * ik;
                err_x += self.t.w_kronrod[i].abs() * scale * (ik - ig).abs();
            }
            value += k;
            err_t += (k - g).abs();
            if panel == 0 {
                // Remainder below the lowest panel, which decays at least
                // geometrically from panel to panel.
                err_t += 2.0 * k.abs() / self.t_step.exp_m1().min(1.0);
            }
        }
        Sums {
            value,
            error: err_t + err_x,
        }
    }

    fn tail_effect(&self, p: f64) -> f64 {
        let lam = 2.0 * PI * self.cfg.density_per_km2;
        let mut base = 0.0;
        let mut extended = 0.0;
        for (i, n) in self.nodes.iter().enumerate() {
            let f = self.t.w_kronrod[i] * self.node_value(n, p, true);
            base += f;
            extended += f * (-lam * n.area_tail).exp();
        }
        if base == 0.0 {
            0.0
        } else {
            ((base - extended) / base).abs()
        }
    }

    fn bits_scale(&self, p: f64) -> f64 {
        2.0 * PI * self.cfg.density_per_km2 * p * self.cfg.bandwidth_hz / LN_2
    }

    /// Exact rate factor in bit/s, or a numeric error if the quadrature
    /// error estimate exceeds the tolerance.
    pub fn gamma(&self, p: f64) -> Result<GammaValue> {
        check_probability(p)?;
        if p == 0.0 {
            return Ok(GammaValue::ZERO);
        }
        if let Some(v) = self.memo.lock().unwrap().get(&p.to_bits()) {
            return Ok(*v);
        }
        let s = self.sums(p);
        if !s.value.is_finite() {
            return Err(Error::numeric("rate factor", format!("non-finite value at p={p}")));
        }
        if s.error > self.tolerance(s.value) {
            return Err(Error::numeric(
                "rate factor",
                format!(
                    "error estimate {:.3e} exceeds tolerance at p={p} (value {:.6e}, {} refinements)",
                    s.error,
                    s.value,
                    self.refinements
                ),
            ));
        }
        let scale = self.bits_scale(p);
        let out = GammaValue {
            value: (scale * s.value).max(0.0),
            error: scale * s.error,
        };
        self.memo.lock().unwrap().insert(p.to_bits(), out);
        Ok(out)
    }

    /// Interference Laplace transform at the kernel's v nodes.
    pub fn interference_at_nodes(&self, p: f64) -> Vec<(f64, f64)> {
        self.nodes.iter().map(|n| (n.v, self.interference(n, p))).collect()
    }

    /// Series approximation in bit/s: mean signal power over the mean
    /// interference-plus-noise term, Poisson-weighted by carrier count.
    pub fn gamma_approx(&self, p: f64) -> Result<f64> {
        check_probability(p)?;
        if p == 0.0 {
            return Ok(0.0);
        }
        let lam = self.cfg.density_per_km2;
        let s = PI * lam * p;
        let theta_p = self.cfg.theta_cop() * p;
        // ∫ e^{−vN0} L_Ic(v) dv = ∫ v e^{−vN0} L_Ic dt
        let inv_ipn: f64 = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| self.t.w_kronrod[i] * n.v * n.noise * self.interference(n, p))
            .sum();
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (j, &x) in self.zone.x.iter().enumerate() {
            let w = self.zone.w_kronrod[j] * x * (-s * x * x).exp();
            s1 += w * self.mean_power[j];
            s2 += w * self.mean_power_mid[j];
        }
        s1 *= 2.0 * PI * lam * p;
        s2 *= 2.0 * PI * lam * p;
        let last = poisson_truncation(theta_p, self.series_tail_eps);
        let mut log_pmf = -theta_p;
        let mut sum = 0.0;
        for n in 1..=last {
            log_pmf += theta_p.ln() - (n as f64).ln();
            let snr = (s1 + (n as f64 - 1.0) * s2) * inv_ipn;
            sum += log_pmf.exp() / n as f64 * snr.ln_1p();
        }
        Ok(sum * self.cfg.bandwidth_hz / LN_2)
    }

    /// Writes `t,v,weight,integrand` rows of the outer integral at `p`.
    pub fn write_integrand_csv<W: Write>(&self, p: f64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "v", "weight", "integrand"])?;
        for (i, n) in self.nodes.iter().enumerate() {
            w.write_record([
                format!("{:.17e}", self.t.x[i]),
                format!("{:.17e}", n.v),
                format!("{:.17e}", self.t.w_kronrod[i]),
                format!("{:.17e}", self.node_value(n, p, true)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest `N >= 1` with `P{Poisson(mean) > N} < eps`.
pub fn poisson_truncation(mean: f64, eps: f64) -> usize {
    if mean <= 0.0 {
        return 1;
    }
    let mut log_pmf = -mean;
    let mut cdf = log_pmf.exp();
    let cap = (10.0 * mean) as usize + 200;
    for n in 1..cap {
        log_pmf += mean.ln() - (n as f64).ln();
        cdf += log_pmf.exp();
        if 1.0 - cdf < eps && (n as f64) >= mean {
            return n;
        }
    }
    cap
}

/// Kernels keyed by the full configuration, shared across sweeps.
#[derive(Default)]
pub struct KernelCache {
    map: Mutex<HashMap<String, Arc<GammaKernel>>>,
}

impl KernelCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, cfg: &NetworkConfig, env: &EnvironmentParams, quad: &QuadratureSpec) -> Result<Arc<GammaKernel>> {
        let key = format!("{cfg:?}|{env:?}|{quad:?}");
        if let Some(k) = self.map.lock().unwrap().get(&key) {
            return Ok(Arc::clone(k));
        }
        let k = Arc::new(GammaKernel::build(cfg, env, quad)?);
        Ok(Arc::clone(self.map.lock().unwrap().entry(key).or_insert(k)))
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn radial_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, h: f64) -> Result<f64> {
    let mut total = 0.0;
    let breaks = if a == 0.0 {
        let mut br = vec![0.0];
        let mut r = (0.5 * h).min(b);
        while r < b {
            br.push(r);
            r *= 2.0;
        }
        br.push(b);
        br
    } else {
        octave_breaks(a, b, 1)
    };
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            total += integrate_adaptive(&f, w[0], w[1], 0.0, 1e-11, 2000)?.value;
        }
    }
    Ok(total)
}

/// Laplace transform of the interference at transform variable `v`.
pub fn interference_laplace(
    cfg: &NetworkConfig,
    env: &EnvironmentParams,
    p: f64,
    v: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    cfg.validate()?;
    quad.validate(cfg)?;
    check_probability(p)?;
    if !(v >= 0.0) {
        return Err(Error::config(format!("transform variable must be >= 0, got {v}")));
    }
    if v == 0.0 {
        return Ok(1.0);
    }
    let rule = quad.shadow_rule();
    let h = cfg.altitude_km;
    let comp = |z: f64| -> f64 {
        z * LinkProfile::new(env, &Link { horizontal_distance_km: z, altitude_km: h }, &rule).laplace_complement(v)
    };
    let x = cfg.coop_radius_km;
    let r = quad.truncation_radius_km(cfg);
    let zone = radial_integral(comp, 0.0, x, h)?;
    let outer = radial_integral(comp, x, r, h)?;
    let lam = 2.0 * PI * cfg.density_per_km2;
    if quad.tail_tolerance.is_finite() {
        let tail = radial_integral(comp, r, 4.0 * r, h)?;
        if lam * tail > quad.tail_tolerance {
            return Err(Error::numeric(
                "interference truncation",
                format!("tail exponent {:.3e} beyond {r} km; increase the truncation radius", lam * tail),
            ));
        }
    }
    let total = zone + outer;
    let exponent = match quad.interference_limits {
        InterferenceLimits::Zone => total - p * zone,
        InterferenceLimits::Literal => (1.0 - p) * total + p * zone,
    };
    Ok((-lam * exponent).exp())
}

/// `Ψ(x, v) = ∫_x^X 2y L1(y, v) dy`.
pub fn psi(cfg: &NetworkConfig, env: &EnvironmentParams, x: f64, v: f64, quad: &QuadratureSpec) -> Result<f64> {
    cfg.validate()?;
    let x_cop = cfg.coop_radius_km;
    if !(0.0..=x_cop).contains(&x) {
        return Err(Error::config(format!("x = {x} outside [0, {x_cop}]")));
    }
    if !(v >= 0.0) {
        return Err(Error::config(format!("transform variable must be >= 0, got {v}")));
    }
    if v == 0.0 {
        return Ok(x_cop * x_cop - x * x);
    }
    if x == x_cop {
        return Ok(0.0);
    }
    let rule = quad.shadow_rule();
    let h = cfg.altitude_km;
    let f = |y: f64| 2.0 * y * LinkProfile::new(env, &Link { horizontal_distance_km: y, altitude_km: h }, &rule).laplace(v);
    Ok(integrate_adaptive(f, x, x_cop, 0.0, 1e-12, 4000)?.value)
}

/// Exact rate factor in bit/s. Builds a one-off kernel; use
/// [`KernelCache`] when evaluating many probabilities.
pub fn gamma_exact(cfg: &NetworkConfig, env: &EnvironmentParams, p: f64, quad: &QuadratureSpec) -> Result<GammaValue> {
    check_probability(p)?;
    if p == 0.0 {
        return Ok(GammaValue::ZERO);
    }
    GammaKernel::build(cfg, env, quad)?.gamma(p)
}

/// Series approximation of the rate factor in bit/s.
pub fn gamma_approx(cfg: &NetworkConfig, env: &EnvironmentParams, p: f64, quad: &QuadratureSpec) -> Result<f64> {
    check_probability(p)?;
    if p == 0.0 {
        return Ok(0.0);
    }
    GammaKernel::build(cfg, env, quad)?.gamma_approx(p)
}

/// Threshold of the virtual-capacity estimate, `1 + (C + σ²/P)/χ`, with
/// `χ` the mean in-zone signal power and `C` the mean power from the rest
/// of the disk.
pub fn virtual_capacity_theta(cfg: &NetworkConfig, env: &EnvironmentParams, quad: &QuadratureSpec) -> Result<f64> {
    cfg.validate()?;
    quad.validate(cfg)?;
    let h = cfg.altitude_km;
    let f = |x: f64| {
        x * mean_received_power(
            env,
            &Link {
                horizontal_distance_km: x,
                altitude_km: h,
            },
        )
    };
    let lam = 2.0 * PI * cfg.density_per_km2;
    let signal = lam * radial_integral(f, 0.0, cfg.coop_radius_km, h)?;
    let outside = lam * radial_integral(f, cfg.coop_radius_km, quad.truncation_radius_km(cfg), h)?;
    Ok(1.0 + (outside + cfg.noise_to_power()) / signal)
}
