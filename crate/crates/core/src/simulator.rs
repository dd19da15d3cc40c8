//! Monte Carlo estimate of the rate factor by dropping the UAV network.
//!
//! Trial `k` draws from its own ChaCha stream derived from `(seed, k)`, and
//! trials are reduced in fixed-size chunks in index order, so results do not
//! depend on the thread count.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{NetworkConfig, QuadratureSpec};
use crate::channel::{los_probability, nakagami_shape, path_loss, shadow_mean_db, shadow_std_db, EnvironmentParams, Link, LinkState};
use crate::error::{Error, Result};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub trials: usize,
    /// Radius of the disk UAVs are dropped in; defaults to the analysis
    /// truncation radius.
    pub sim_radius_km: Option<f64>,
    pub seed: u64,
    /// Pairs trials `2k, 2k+1` on complementary random bits.
    pub antithetic: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            trials: 100_000,
            sim_radius_km: None,
            seed: 0x5eed,
            antithetic: false,
        }
    }
}

impl SimSpec {
    pub fn validate(&self, cfg: &NetworkConfig, quad: &QuadratureSpec) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.antithetic && self.trials % 2 == 1 {
            return Err(Error::config("antithetic sampling needs an even trial count"));
        }
        let r = self.radius_km(cfg, quad);
        let needed = quad.truncation_radius_km(cfg);
        if !(r >= needed && r.is_finite()) {
            return Err(Error::config(format!(
                "simulation radius {r} km is below the interference truncation radius {needed} km"
            )));
        }
        Ok(())
    }

    pub fn radius_km(&self, cfg: &NetworkConfig, quad: &QuadratureSpec) -> f64 {
        self.sim_radius_km.unwrap_or_else(|| quad.truncation_radius_km(cfg))
    }
}

/// Complements every output word, turning a uniform draw `u` into
/// (almost exactly) `1 − u`.
struct Complement<R>(R);

impl<R: RngCore> RngCore for Complement<R> {
    fn next_u32(&mut self) -> u32 {
        !self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        !self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest);
        for b in dest.iter_mut() {
            *b = !*b;
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

fn trial_rng(spec: &SimSpec, trial: usize) -> Box<dyn RngCore> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if spec.antithetic {
        rng.set_stream((trial / 2) as u64);
        if trial % 2 == 1 {
            return Box::new(Complement(rng));
        }
    } else {
        rng.set_stream(trial as u64);
    }
    Box::new(rng)
}

/// One UAV of a realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavDraw {
    pub position_km: (f64, f64),
    pub caches_content: bool,
    pub los: bool,
    pub shadow_db: f64,
    pub fading: f64,
    /// Received power for unit transmit power.
    pub power: f64,
}

impl UavDraw {
    pub fn distance_km(&self) -> f64 {
        self.position_km.0.hypot(self.position_km.1)
    }
}

/// One drop of the network around a user at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub uavs: Vec<UavDraw>,
}

/// Signal and interference split of one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub serving: usize,
    pub signal: f64,
    pub interference: f64,
}

impl Realization {
    /// Carriers within `zone_km` serve; every other UAV interferes.
    pub fn budget(&self, zone_km: f64) -> LinkBudget {
        let mut b = LinkBudget {
            serving: 0,
            signal: 0.0,
            interference: 0.0,
        };
        for u in &self.uavs {
            if u.caches_content && u.distance_km() <= zone_km {
                b.serving += 1;
                b.signal += u.power;
            } else {
                b.interference += u.power;
            }
        }
        b
    }
}

struct Sampler {
    env: EnvironmentParams,
    altitude_km: f64,
    radius_km: f64,
    p: f64,
    count: Option<Poisson<f64>>,
}

impl Sampler {
    fn new(cfg: &NetworkConfig, env: &EnvironmentParams, p: f64, radius_km: f64) -> Result<Self> {
        let mean = cfg.density_per_km2 * PI * radius_km * radius_km;
        let count = if mean > 0.0 {
            Some(Poisson::new(mean).map_err(|e| Error::config(format!("UAV count law: {e}")))?)
        } else {
            None
        };
        Ok(Sampler {
            env: *env,
            altitude_km: cfg.altitude_km,
            radius_km,
            p,
            count,
        })
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Realization {
        let n = self.count.map_or(0, |c| c.sample(rng) as usize);
        let mut uavs = Vec::with_capacity(n);
        for _ in 0..n {
            let r = self.radius_km * rng.gen::<f64>().sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            let caches = rng.gen::<f64>() < self.p;
            let link = Link {
                horizontal_distance_km: r,
                altitude_km: self.altitude_km,
            };
            let los = rng.gen::<f64>() < los_probability(&self.env, &link);
            let state = if los { LinkState::Los } else { LinkState::Nlos };
            let sigma = shadow_std_db(&self.env, &link, state);
            let mu = shadow_mean_db(&self.env, state);
            let shadow_db = if sigma > 0.0 {
                Normal::new(mu, sigma).expect("finite spread").sample(rng)
            } else {
                mu
            };
            let m = nakagami_shape(&self.env, state);
            let fading = Gamma::new(m, 1.0 / m).expect("positive shape").sample(rng);
            let power = path_loss(&self.env, &link, state) * 10f64.powf(shadow_db / 10.0) * fading;
            uavs.push(UavDraw {
                position_km: (r * phi.cos(), r * phi.sin()),
                caches_content: caches,
                los,
                shadow_db,
                fading,
                power,
            });
        }
        Realization { uavs }
    }
}

/// Draws realization `trial` from the stream family seeded by this `SimSpec`.
pub fn sample_realization(
    cfg: &NetworkConfig,
    env: &EnvironmentParams,
    p: f64,
    spec: &SimSpec,
    quad: &QuadratureSpec,
    trial: usize,
) -> Result<Realization> {
    cfg.validate()?;
    spec.validate(cfg, quad)?;
    let sampler = Sampler::new(cfg, env, p, spec.radius_km(cfg, quad))?;
    Ok(sampler.draw(&mut *trial_rng(spec, trial)))
}

/// Rate-factor estimate in bit/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: usize,
    /// Share of trials with at least one serving carrier.
    pub served_fraction: f64,
    pub mean_uav_count: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
    served: f64,
    uavs: f64,
}

impl Moments {
    fn merge(self, o: Moments) -> Moments {
        Moments {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
            served: self.served + o.served,
            uavs: self.uavs + o.uavs,
        }
    }
}

fn check_inputs(cfg: &NetworkConfig, p: f64, spec: &SimSpec, quad: &QuadratureSpec) -> Result<()> {
    cfg.validate()?;
    spec.validate(cfg, quad)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("caching probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Per-trial contribution `1{n>0}·ln(1+SINR)/n` in nats.
fn contribution(b: &LinkBudget, noise: f64) -> f64 {
    if b.serving == 0 {
        0.0
    } else {
        (b.signal / (b.interference + noise)).ln_1p() / b.serving as f64
    }
}

/// Monte Carlo rate factor with its standard error.
pub fn simulate_gamma(
    cfg: &NetworkConfig,
    env: &EnvironmentParams,
    p: f64,
    spec: &SimSpec,
    quad: &QuadratureSpec,
) -> Result<SimEstimate> {
    check_inputs(cfg, p, spec, quad)?;
    let radius = spec.radius_km(cfg, quad);
    let degenerate = cfg.density_per_km2 * PI * radius * radius < 1e-6;
    if p == 0.0 || degenerate {
        return Ok(SimEstimate {
            value: 0.0,
            std_error: 0.0,
            trials: spec.trials,
            served_fraction: 0.0,
            mean_uav_count: 0.0,
        });
    }
    let sampler = Sampler::new(cfg, env, p, radius)?;
    let noise = cfg.noise_to_power();
    let x_cop = cfg.coop_radius_km;
    // Antithetic pairs are averaged before taking moments.
    let unit = if spec.antithetic { 2 } else { 1 };
    let units = spec.trials / unit;
    let chunks = units.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            for u in c * CHUNK..((c + 1) * CHUNK).min(units) {
                let mut y = 0.0;
                for k in 0..unit {
                    let real = sampler.draw(&mut *trial_rng(spec, u * unit + k));
                    let b = real.budget(x_cop);
                    y += contribution(&b, noise);
                    m.served += (b.serving > 0) as u8 as f64;
                    m.uavs += real.uavs.len() as f64;
                }
                y /= unit as f64;
                m.n += 1.0;
                m.sum += y;
                m.sum_sq += y * y;
            }
            m
        })
        .collect();
    let m = parts.into_iter().fold(Moments::default(), Moments::merge);
    let mean = m.sum / m.n;
    let var = if m.n > 1.0 {
        ((m.sum_sq - m.n * mean * mean) / (m.n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let scale = cfg.bandwidth_hz / LN_2;
    Ok(SimEstimate {
        value: scale * mean,
        std_error: scale * (var / m.n).sqrt(),
        trials: spec.trials,
        served_fraction: m.served / spec.trials as f64,
        mean_uav_count: m.uavs / spec.trials as f64,
    })
}

/// Empirical SINR exceedance among trials with at least one serving carrier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinrCcdf {
    pub thresholds: Vec<f64>,
    pub exceedance: Vec<f64>,
    pub served_trials: usize,
}

/// `P{SINR > t}` for each linear threshold `t`.
pub fn simulate_sinr_ccdf(
    cfg: &NetworkConfig,
    env: &EnvironmentParams,
    p: f64,
    spec: &SimSpec,
    quad: &QuadratureSpec,
    thresholds: &[f64],
) -> Result<SinrCcdf> {
    check_inputs(cfg, p, spec, quad)?;
    if thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::config("SINR thresholds must not be NaN"));
    }
    let sampler = Sampler::new(cfg, env, p, spec.radius_km(cfg, quad))?;
    let noise = cfg.noise_to_power();
    let chunks = spec.trials.div_ceil(CHUNK);
    let parts: Vec<(usize, Vec<usize>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut served = 0;
            let mut counts = vec![0usize; thresholds.len()];
            for trial in c * CHUNK..((c + 1) * CHUNK).min(spec.trials) {
                let b = sampler.draw(&mut *trial_rng(spec, trial)).budget(cfg.coop_radius_km);
                if b.serving == 0 {
                    continue;
                }
                served += 1;
                let sinr = b.signal / (b.interference + noise);
                for (k, &t) in thresholds.iter().enumerate() {
                    if sinr > t {
                        counts[k] += 1;
                    }
                }
            }
            (served, counts)
        })
        .collect();
    let mut served = 0;
    let mut counts = vec![0usize; thresholds.len()];
    for (s, c) in parts {
        served += s;
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    let exceedance = counts
        .iter()
        .map(|&c| if served == 0 { 0.0 } else { c as f64 / served as f64 })
        .collect();
    Ok(SinrCcdf {
        thresholds: thresholds.to_vec(),
        exceedance,
        served_trials: served,
    })
}

/// Writes one summary row per trial for the first `trials` trials.
pub fn write_trials_csv<W: Write>(
    cfg: &NetworkConfig,
    env: &EnvironmentParams,
    p: f64,
    spec: &SimSpec,
    quad: &QuadratureSpec,
    trials: usize,
    out: W,
) -> Result<()> {
    check_inputs(cfg, p, spec, quad)?;
    let sampler = Sampler::new(cfg, env, p, spec.radius_km(cfg, quad))?;
    let noise = cfg.noise_to_power();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "uavs", "serving", "signal", "interference", "sinr", "contribution_nats"])?;
    for trial in 0..trials.min(spec.trials) {
        let real = sampler.draw(&mut *trial_rng(spec, trial));
        let b = real.budget(cfg.coop_radius_km);
        w.write_record([
            trial.to_string(),
            real.uavs.len().to_string(),
            b.serving.to_string(),
            format!("{:.17e}", b.signal),
            format!("{:.17e}", b.interference),
            format!("{:.17e}", b.signal / (b.interference + noise)),
            format!("{:.17e}", contribution(&b, noise)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::interference_laplace;

    fn urban() -> EnvironmentParams {
        EnvironmentParams::preset("urban").unwrap()
    }

    fn small() -> NetworkConfig {
        NetworkConfig {
            coop_radius_km: 0.5,
            altitude_km: 0.03,
            ..NetworkConfig::default()
        }
    }

    fn spec(trials: usize) -> SimSpec {
        SimSpec {
            trials,
            ..SimSpec::default()
        }
    }

    #[test]
    fn zero_probability_is_exact_zero() {
        let q = QuadratureSpec::default();
        let e = simulate_gamma(&small(), &urban(), 0.0, &spec(100), &q).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
    }

    #[test]
    fn sparse_network_gives_nothing() {
        let q = QuadratureSpec::default();
        let cfg = NetworkConfig {
            density_per_km2: 1e-12,
            ..small()
        };
        let e = simulate_gamma(&cfg, &urban(), 1.0, &spec(100), &q).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let q = QuadratureSpec::default();
        assert!(simulate_gamma(&small(), &urban(), 0.5, &spec(0), &q).is_err());
        let short = SimSpec {
            sim_radius_km: Some(1.0),
            ..spec(10)
        };
        assert!(simulate_gamma(&small(), &urban(), 0.5, &short, &q).is_err());
    }

    #[test]
    fn repeatable_for_a_seed() {
        let q = QuadratureSpec::default();
        let a = simulate_gamma(&small(), &urban(), 0.5, &spec(3000), &q).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate_gamma(&small(), &urban(), 0.5, &spec(3000), &q).unwrap());
        assert_eq!(a, b);
        let other = SimSpec { seed: 99, ..spec(3000) };
        assert_ne!(a.value, simulate_gamma(&small(), &urban(), 0.5, &other, &q).unwrap().value);
    }

    #[test]
    fn uav_count_and_los_share_match_the_model() {
        let q = QuadratureSpec::default();
        let cfg = small();
        let s = spec(4000);
        let mean = cfg.density_per_km2 * PI * 25.0;
        let e = simulate_gamma(&cfg, &urban(), 0.5, &s, &q).unwrap();
        let se = (mean / s.trials as f64).sqrt();
        assert!((e.mean_uav_count - mean).abs() < 3.0 * se, "{} vs {mean}", e.mean_uav_count);

        // LOS share of UAVs in a thin ring around 1 km.
        let mut los = 0usize;
        let mut total = 0usize;
        for t in 0..4000 {
            for u in sample_realization(&cfg, &urban(), 0.5, &s, &q, t).unwrap().uavs {
                let d = u.distance_km();
                if (0.9..1.1).contains(&d) {
                    total += 1;
                    los += u.los as usize;
                }
            }
        }
        let pl = los_probability(&urban(), &Link::new(1.0, 0.03).unwrap());
        let share = los as f64 / total as f64;
        // The ring spans a range of angles, so allow the spread in p_L too.
        let lo = los_probability(&urban(), &Link::new(1.1, 0.03).unwrap());
        let hi = los_probability(&urban(), &Link::new(0.9, 0.03).unwrap());
        let ci = 3.0 * (pl * (1.0 - pl) / total as f64).sqrt();
        assert!(share > lo - ci && share < hi + ci, "{share} vs [{lo}, {hi}]");
    }

    #[test]
    fn interference_laplace_matches_sampling() {
        let q = QuadratureSpec::default();
        let cfg = NetworkConfig {
            density_per_km2: 0.05,
            ..small()
        };
        let s = spec(20_000);
        let p = 0.4;
        let v = 0.1 / cfg.noise_to_power();
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for t in 0..s.trials {
            let b = sample_realization(&cfg, &urban(), p, &s, &q, t).unwrap().budget(cfg.coop_radius_km);
            let y = (-v * b.interference).exp();
            acc += y;
            acc2 += y * y;
        }
        let n = s.trials as f64;
        let mean = acc / n;
        let se = ((acc2 / n - mean * mean) / n).sqrt();
        let exact = interference_laplace(&cfg, &urban(), p, v, &q).unwrap();
        assert!((mean - exact).abs() < 3.0 * se + 1e-12, "mc={mean}±{se} exact={exact}");
    }

    #[test]
    fn ccdf_edges_and_order() {
        let q = QuadratureSpec::default();
        let thr = [0.0, 0.1, 1.0, 10.0, 1e300];
        let c = simulate_sinr_ccdf(&small(), &urban(), 0.8, &spec(2000), &q, &thr).unwrap();
        assert!(c.served_trials > 0);
        assert_eq!(c.exceedance[0], 1.0);
        assert_eq!(*c.exceedance.last().unwrap(), 0.0);
        assert!(c.exceedance.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn median_sinr_drops_with_density() {
        // Suburban links at 200 m: LOS interferers pile up with density. In
        // the shadowing-heavy presets the strongest NLOS interferer sets the
        // SINR and the ordering flips.
        let env = EnvironmentParams::preset("suburban").unwrap();
        let q = QuadratureSpec::default();
        let thr: Vec<f64> = (-40..=60).map(|d| 10f64.powf(d as f64 / 10.0)).collect();
        let median = |lam: f64| -> f64 {
            let cfg = NetworkConfig {
                density_per_km2: lam,
                coop_radius_km: 2.0,
                altitude_km: 0.2,
                ..NetworkConfig::default()
            };
            let c = simulate_sinr_ccdf(&cfg, &env, 0.5, &spec(400), &q, &thr).unwrap();
            let k = c.exceedance.iter().position(|&e| e < 0.5).unwrap_or(thr.len() - 1);
            thr[k]
        };
        assert!(median(10.0) < median(0.1));
    }

    #[test]
    fn antithetic_pairs_are_consistent() {
        let q = QuadratureSpec::default();
        let plain = simulate_gamma(&small(), &urban(), 0.5, &spec(20_000), &q).unwrap();
        let anti = SimSpec {
            antithetic: true,
            ..spec(20_000)
        };
        let a = simulate_gamma(&small(), &urban(), 0.5, &anti, &q).unwrap();
        let se = plain.std_error.hypot(a.std_error);
        assert!((plain.value - a.value).abs() < 4.0 * se);
        assert!(simulate_gamma(&small(), &urban(), 0.5, &SimSpec { trials: 3, ..anti }, &q).is_err());
    }

    #[test]
    fn trial_dump_has_one_row_per_trial() {
        let q = QuadratureSpec::default();
        let mut buf = Vec::new();
        write_trials_csv(&small(), &urban(), 0.5, &spec(50), &q, 10, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }
}
