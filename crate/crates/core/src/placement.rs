//! Content popularity and probabilistic placement strategies.
//!
//! A placement assigns each content `c` the probability `p_c` that a UAV
//! caches it, with `0 <= p_c <= 1` and `Σ p_c = S` (the cache size).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

/// Content library sorted from most to least popular.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    skew: f64,
    popularity: Vec<f64>,
}

impl Catalog {
    /// Zipf popularity `a_m ∝ m^{−κ}`.
    pub fn zipf(size: usize, skew: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::config("catalog must hold at least one content"));
        }
        if !(skew >= 0.0 && skew.is_finite()) {
            return Err(Error::config(format!("Zipf skew must be >= 0, got {skew}")));
        }
        let raw: Vec<f64> = (1..=size).map(|m| (m as f64).powf(-skew)).collect();
        let total: f64 = raw.iter().sum();
        Ok(Catalog {
            skew,
            popularity: raw.into_iter().map(|a| a / total).collect(),
        })
    }

    /// Catalog from explicit weights, normalised to sum to one. Weights must
    /// be positive and nonincreasing.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("catalog must hold at least one content"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::config("popularity weights must be positive"));
        }
        if weights.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("popularity must be nonincreasing in the content index"));
        }
        let total: f64 = weights.iter().sum();
        Ok(Catalog {
            skew: f64::NAN,
            popularity: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.popularity.len()
    }

    /// Zipf exponent, NaN for catalogs built from explicit weights.
    pub fn skew(&self) -> f64 {
        self.skew
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }
}

/// Per-content caching probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementVector {
    probs: Vec<f64>,
    cache_size: usize,
}

impl PlacementVector {
    pub fn new(probs: Vec<f64>, cache_size: usize) -> Result<Self> {
        let p = PlacementVector { probs, cache_size };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((c, &p)) = self
            .probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(0.0..=1.0).contains(&p))
        {
            return Err(Error::Constraint(format!("p_{} = {p} outside [0, 1]", c + 1)));
        }
        let sum: f64 = self.probs.iter().sum();
        let target = self.cache_size as f64;
        if (sum - target).abs() > SUM_TOL * target.max(1.0) {
            return Err(Error::Constraint(format!(
                "placement sums to {sum}, cache size is {}",
                self.cache_size
            )));
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cache_size(&self) -> usize {
        self.cache_size
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Writes `content,popularity,probability` rows.
    pub fn write_csv<W: Write>(&self, catalog: &Catalog, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["content", "popularity", "probability"])?;
        for (c, (&a, &p)) in catalog.popularity().iter().zip(&self.probs).enumerate() {
            w.write_record([(c + 1).to_string(), format!("{a:.17e}"), format!("{p:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_cache_size(catalog: &Catalog, cache_size: usize) -> Result<()> {
    if cache_size > catalog.size() {
        return Err(Error::config(format!(
            "cache size {cache_size} exceeds catalog size {}",
            catalog.size()
        )));
    }
    Ok(())
}

/// Most-popular placement: the top `S` contents everywhere.
pub fn mpcp(catalog: &Catalog, cache_size: usize) -> Result<PlacementVector> {
    check_cache_size(catalog, cache_size)?;
    let probs = (0..catalog.size())
        .map(|c| if c < cache_size { 1.0 } else { 0.0 })
        .collect();
    Ok(PlacementVector { probs, cache_size })
}

/// Mixed popular-randomised placement: the `S_pop` most popular contents are
/// always cached; the remaining `S − S_pop` slots hold a window of
/// consecutive contents whose start is uniform over the less popular ones.
pub fn mprc_probs(catalog: &Catalog, cache_size: usize, popular_slots: usize) -> Result<PlacementVector> {
    check_cache_size(catalog, cache_size)?;
    if popular_slots > cache_size {
        return Err(Error::config(format!(
            "popular part {popular_slots} exceeds cache size {cache_size}"
        )));
    }
    let f = catalog.size() as i64;
    let s = cache_size as i64;
    let s_pop = popular_slots as i64;
    let s_rnd = s - s_pop;
    let starts = (f - s + 1) as f64;
    let probs = (1..=f)
        .map(|c| {
            if c <= s_pop {
                1.0
            } else if s_rnd == 0 {
                0.0
            } else {
                // Window starts m in [S_pop+1, F−S_rnd+1] with m <= c <= m+S_rnd−1.
                let lo = (s_pop + 1).max(c - s_rnd + 1);
                let hi = (f - s_rnd + 1).min(c);
                ((hi - lo + 1).max(0) as f64) / starts
            }
        })
        .collect();
    Ok(PlacementVector { probs, cache_size })
}

/// Outcome of the greedy search over the popular part.
#[derive(Debug, Clone)]
pub struct MprcOutcome {
    pub popular_slots: usize,
    pub placement: PlacementVector,
    pub objective: f64,
    /// Objective of every candidate `S_pop = 0..=S`.
    pub candidates: Vec<f64>,
}

/// Evaluates every `S_pop ∈ {0..S}` and keeps the best; ties go to the
/// larger `S_pop`.
pub fn mprc_optimize<F>(catalog: &Catalog, cache_size: usize, ee_eval: F) -> Result<MprcOutcome>
where
    F: Fn(&PlacementVector) -> Result<f64> + Sync,
{
    check_cache_size(catalog, cache_size)?;
    let placements: Vec<PlacementVector> = (0..=cache_size)
        .map(|s_pop| mprc_probs(catalog, cache_size, s_pop))
        .collect::<Result<_>>()?;
    let candidates: Vec<f64> = placements
        .par_iter()
        .map(&ee_eval)
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &v) in candidates.iter().enumerate() {
        if v >= candidates[best] {
            best = i;
        }
    }
    Ok(MprcOutcome {
        popular_slots: best,
        placement: placements[best].clone(),
        objective: candidates[best],
        candidates,
    })
}

/// Solution of the weighted hit-rate program.
#[derive(Debug, Clone)]
pub struct HitRateSolution {
    pub placement: PlacementVector,
    /// Log of the KKT multiplier of the sum constraint (`−∞` if unused).
    pub log_multiplier: f64,
    /// Set when some or all cache mass had to be spread over zero-weight
    /// contents because the weights could not absorb it.
    pub degenerate_weights: bool,
}

/// `Σ w_c (1 − e^{−Θ p_c})`.
pub fn hit_rate_objective(weights: &[f64], theta: f64, probs: &[f64]) -> f64 {
    weights
        .iter()
        .zip(probs)
        .map(|(&w, &p)| -w * (-theta * p).exp_m1())
        .sum()
}

/// Maximises `Σ w_c (1 − e^{−Θ p_c})` over the feasible placements.
///
/// Stationarity gives `p_c = clamp(ln(Θ w_c / μ)/Θ, 0, 1)`; the multiplier `μ`
/// is found by bisection on `ln μ` so the probabilities sum to `S`.
pub fn hitrate_solver(weights: &[f64], theta: f64, cache_size: usize) -> Result<HitRateSolution> {
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::config("hit-rate weights must be finite and >= 0"));
    }
    let log_w: Vec<f64> = weights.iter().map(|&w| w.ln()).collect();
    hitrate_solver_log(&log_w, theta, cache_size)
}

/// [`hitrate_solver`] with weights given by their logarithms, which keeps
/// softmax-scaled weights from underflowing. `−∞` marks a zero weight.
pub fn hitrate_solver_log(log_weights: &[f64], theta: f64, cache_size: usize) -> Result<HitRateSolution> {
    let n = log_weights.len();
    if n == 0 {
        return Err(Error::config("hit-rate program needs at least one content"));
    }
    if cache_size > n {
        return Err(Error::config(format!("cache size {cache_size} exceeds catalog size {n}")));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::config(format!("hit-rate scale must be positive, got {theta}")));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::config("log-weights must be finite or -inf"));
    }
    let s = cache_size as f64;
    let positive: Vec<usize> = (0..n).filter(|&c| log_weights[c].is_finite()).collect();
    if cache_size == 0 {
        return Ok(HitRateSolution {
            placement: PlacementVector {
                probs: vec![0.0; n],
                cache_size,
            },
            log_multiplier: f64::INFINITY,
            degenerate_weights: false,
        });
    }
    if positive.len() <= cache_size {
        // Every positive-weight content is saturated; the rest is spread
        // uniformly since it does not change the objective.
        let zeros = n - positive.len();
        let fill = if zeros > 0 {
            (s - positive.len() as f64) / zeros as f64
        } else {
            0.0
        };
        let probs = (0..n)
            .map(|c| if log_weights[c].is_finite() { 1.0 } else { fill })
            .collect();
        return Ok(HitRateSolution {
            placement: PlacementVector { probs, cache_size },
            log_multiplier: f64::NEG_INFINITY,
            degenerate_weights: zeros > 0 && positive.len() < cache_size,
        });
    }

    let ln_theta = theta.ln();
    let level: Vec<f64> = log_weights.iter().map(|&w| ln_theta + w).collect();
    let prob_at = |nu: f64, c: usize| -> f64 {
        if level[c].is_finite() {
            ((level[c] - nu) / theta).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let total_at = |nu: f64| -> f64 { (0..n).map(|c| prob_at(nu, c)).sum() };

    let finite = positive.iter().map(|&c| level[c]);
    let mut hi = finite.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = finite.fold(f64::INFINITY, f64::min) - theta;
    // total_at(hi) = 0 < S <= total_at(lo) = |positive|
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total_at(mid) > s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut nu = 0.5 * (lo + hi);
    let mut probs: Vec<f64> = (0..n).map(|c| prob_at(nu, c)).collect();
    // Remove the bisection residual through the unclamped components, which
    // all move at rate 1/Θ in ν.
    let free: Vec<usize> = (0..n).filter(|&c| probs[c] > 0.0 && probs[c] < 1.0).collect();
    let residual = s - probs.iter().sum::<f64>();
    if !free.is_empty() && residual != 0.0 {
        let shift = residual / free.len() as f64;
        let mut ok = true;
        for &c in &free {
            let q = probs[c] + shift;
            if !(0.0..=1.0).contains(&q) {
                ok = false;
            }
        }
        if ok {
            for &c in &free {
                probs[c] += shift;
            }
            nu -= shift * theta;
        }
    }
    let placement = PlacementVector { probs, cache_size };
    placement.validate().map_err(|e| Error::numeric("hit-rate solver", e.to_string()))?;
    Ok(HitRateSolution {
        placement,
        log_multiplier: nu,
        degenerate_weights: false,
    })
}

/// Largest relative violation of the KKT conditions of the hit-rate program.
pub fn hitrate_kkt_residual(weights: &[f64], theta: f64, solution: &HitRateSolution) -> f64 {
    let mu = solution.log_multiplier.exp();
    let mut worst: f64 = 0.0;
    for (&w, &p) in weights.iter().zip(solution.placement.probs()) {
        let grad = w * theta * (-theta * p).exp();
        let r = if p > 0.0 && p < 1.0 {
            (grad - mu).abs() / mu.max(f64::MIN_POSITIVE)
        } else if p == 0.0 {
            ((grad - mu) / mu).max(0.0)
        } else {
            ((mu - grad) / mu).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

/// Softmax with max-subtraction, returned as log-probabilities.
pub fn log_softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    scores.iter().map(|s| s - lse).collect()
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    log_softmax(scores).into_iter().map(f64::exp).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RshrOptions {
    pub max_iter: usize,
    /// Stop once the relative change of the objective falls below this.
    pub tol: f64,
    /// Softmax scores are `η_c / unit`. With a fixed `score_unit` the unit is
    /// that value; otherwise it is `temperature` times the network
    /// objective of the previous iterate, which keeps the scaling
    /// independent of the units of `η`.
    pub score_unit: Option<f64>,
    pub temperature: f64,
}

impl Default for RshrOptions {
    fn default() -> Self {
        RshrOptions {
            max_iter: 25,
            tol: 1e-4,
            score_unit: None,
            temperature: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RshrOutcome {
    /// Best iterate by network objective.
    pub placement: PlacementVector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Network objective `Σ a_c η_c` of each iterate.
    pub objective_trace: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// Recursive scaled hit rate.
///
/// Iteration 1 solves the hit-rate program with the popularity as weights.
/// Each later iteration rescales the weights by the softmax of the
/// per-content efficiencies of the previous iterate and solves again, until
/// the network objective `Σ a_c η_c` is stable or `max_iter` is reached.
pub fn rshr<F>(
    catalog: &Catalog,
    cache_size: usize,
    theta: f64,
    ee_per_content: F,
    options: &RshrOptions,
) -> Result<RshrOutcome>
where
    F: Fn(&PlacementVector) -> Result<Vec<f64>>,
{
    if options.max_iter == 0 {
        return Err(Error::config("RSHR needs max_iter >= 1"));
    }
    if !options.score_unit.map_or(options.temperature > 0.0, |u| u > 0.0) {
        return Err(Error::config("RSHR score unit and temperature must be positive"));
    }
    check_cache_size(catalog, cache_size)?;
    let a = catalog.popularity();
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();

    let mut log_scale = vec![0.0; a.len()];
    let mut trace = Vec::new();
    let mut best: Option<(PlacementVector, f64)> = None;
    let mut converged = false;
    let mut diagnostic = None;

    for _ in 0..options.max_iter {
        let log_w: Vec<f64> = log_a.iter().zip(&log_scale).map(|(x, y)| x + y).collect();
        let sol = hitrate_solver_log(&log_w, theta, cache_size)?;
        let eta = ee_per_content(&sol.placement)?;
        if eta.len() != a.len() || eta.iter().any(|e| !e.is_finite()) {
            diagnostic = Some(format!(
                "evaluator returned non-finite or mis-sized efficiencies at iteration {}",
                trace.len() + 1
            ));
            break;
        }
        let objective: f64 = a.iter().zip(&eta).map(|(x, e)| x * e).sum();
        let previous = trace.last().copied();
        trace.push(objective);
        if best.as_ref().map_or(true, |(_, b)| objective > *b) {
            best = Some((sol.placement.clone(), objective));
        }
        if let Some(prev) = previous {
            let scale = prev.abs().max(objective.abs()).max(f64::MIN_POSITIVE);
            if (objective - prev).abs() / scale < options.tol {
                converged = true;
                break;
            }
        }
        let unit = options
            .score_unit
            .unwrap_or(options.temperature * objective.abs())
            .max(f64::MIN_POSITIVE);
        let scores: Vec<f64> = eta.iter().map(|e| e / unit).collect();
        log_scale = log_softmax(&scores);
    }

    let (placement, objective) = best.ok_or_else(|| {
        Error::numeric(
            "RSHR",
            diagnostic.clone().unwrap_or_else(|| "no stable iterate".into()),
        )
    })?;
    Ok(RshrOutcome {
        placement,
        objective,
        iterations: trace.len(),
        converged,
        objective_trace: trace,
        diagnostic,
    })
}

/// LRU stationary occupancy under the characteristic-time approximation:
/// `p_c = 1 − e^{−a_c t_C}` with `t_C` chosen so `Σ p_c = S`.
pub fn lru_reference(catalog: &Catalog, cache_size: usize) -> Result<PlacementVector> {
    check_cache_size(catalog, cache_size)?;
    let a = catalog.popularity();
    let n = a.len();
    if cache_size == 0 {
        return Ok(PlacementVector {
            probs: vec![0.0; n],
            cache_size,
        });
    }
    if cache_size == n {
        return Ok(PlacementVector {
            probs: vec![1.0; n],
            cache_size,
        });
    }
    let s = cache_size as f64;
    let occupancy = |t: f64| -> f64 { a.iter().map(|&x| -(-x * t).exp_m1()).sum() };
    let mut hi = s;
    while occupancy(hi) < s {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::numeric("LRU characteristic time", "no bracket found"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if occupancy(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let mut probs: Vec<f64> = a.iter().map(|&x| -(-x * t).exp_m1()).collect();
    // Newton polish on t for an exact sum.
    let residual = s - probs.iter().sum::<f64>();
    let slope: f64 = a.iter().map(|&x| x * (-x * t).exp()).sum();
    if slope > 0.0 {
        let t2 = t + residual / slope;
        probs = a.iter().map(|&x| -(-x * t2).exp_m1()).collect();
    }
    let placement = PlacementVector { probs, cache_size };
    placement
        .validate()
        .map_err(|e| Error::numeric("LRU characteristic time", e.to_string()))?;
    Ok(placement)
}

/// `ln(1 + p/(Θ_vc − p))`, the virtual-capacity estimate.
pub fn virtual_capacity(prob: f64, theta_vc: f64) -> Result<f64> {
    if !(theta_vc > 1.0) {
        return Err(Error::config(format!("virtual-capacity threshold must exceed 1, got {theta_vc}")));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::config(format!("probability {prob} outside [0, 1]")));
    }
    Ok((prob / (theta_vc - prob)).ln_1p())
}
