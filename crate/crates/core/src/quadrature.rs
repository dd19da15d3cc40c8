//! Quadrature engine shared by the channel and analysis modules.
//!
//! Three tools live here:
//!
//! * Gauss–Hermite rules for expectations over a Gaussian variable,
//! * fixed composite Gauss–Kronrod (7/15) node sets over an arbitrary list of
//!   breakpoints, which let callers precompute integrands once and reuse
//!   them, with an embedded Gauss estimate of the discretisation error,
//! * a plain adaptive Gauss–Kronrod integrator for one-off integrals.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Nodes of a standard-normal expectation rule: `E[f(Z)] ≈ Σ w_k f(z_k)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    /// Gauss–Hermite rule with `n` nodes rescaled to the standard normal law.
    pub fn gauss_hermite(n: usize) -> Self {
        let (t, w) = gauss_hermite(n);
        let norm = PI.sqrt();
        NormalRule {
            nodes: t.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|x| x / norm).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

/// Physicists' Gauss–Hermite nodes and weights for `∫ e^{-t²} f(t) dt`,
/// nodes in ascending order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    x.reverse();
    w.reverse();
    (x, w)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A composite 15-point Kronrod rule over consecutive panels, with the
/// embedded 7-point Gauss weights kept for error estimation.
#[derive(Debug, Clone)]
pub struct PanelNodes {
    pub x: Vec<f64>,
    pub w_kronrod: Vec<f64>,
    pub w_gauss: Vec<f64>,
    /// Number of panels; each panel owns 15 consecutive nodes.
    pub panels: usize,
}

pub const NODES_PER_PANEL: usize = 15;

impl PanelNodes {
    /// Builds the rule from an increasing list of breakpoints.
    pub fn from_breakpoints(breaks: &[f64]) -> Self {
        let panels = breaks.len().saturating_sub(1);
        let mut x = Vec::with_capacity(panels * NODES_PER_PANEL);
        let mut wk = Vec::with_capacity(panels * NODES_PER_PANEL);
        let mut wg = Vec::with_capacity(panels * NODES_PER_PANEL);
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            // Ascending order within the panel.
            for j in 0..7 {
                x.push(c - h * XGK[j]);
                wk.push(h * WGK[j]);
                wg.push(if j % 2 == 1 { h * WG[j / 2] } else { 0.0 });
            }
            x.push(c);
            wk.push(h * WGK[7]);
            wg.push(h * WG[3]);
            for j in (0..7).rev() {
                x.push(c + h * XGK[j]);
                wk.push(h * WGK[j]);
                wg.push(if j % 2 == 1 { h * WG[j / 2] } else { 0.0 });
            }
        }
        PanelNodes {
            x,
            w_kronrod: wk,
            w_gauss: wg,
            panels,
        }
    }

    /// Breakpoints `0, b·2^{-k}, …, b/2, b`: panels shrink geometrically
    /// towards the origin.
    pub fn geometric_from_zero(b: f64, levels: usize) -> Self {
        Self::from_breakpoints(&geometric_breaks(0.0, b, levels))
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Kronrod estimate and the summed per-panel |Kronrod − Gauss| error.
    pub fn integrate_values(&self, values: &[f64]) -> (f64, f64) {
        debug_assert_eq!(values.len(), self.x.len());
        let mut total = 0.0;
        let mut err = 0.0;
        for p in 0..self.panels {
            let r = p * NODES_PER_PANEL..(p + 1) * NODES_PER_PANEL;
            let mut k = 0.0;
            let mut g = 0.0;
            for i in r {
                k += self.w_kronrod[i] * values[i];
                g += self.w_gauss[i] * values[i];
            }
            total += k;
            err += (k - g).abs();
        }
        (total, err)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> (f64, f64) {
        let values: Vec<f64> = self.x.iter().map(|&x| f(x)).collect();
        self.integrate_values(&values)
    }
}

impl PanelNodes {
    /// Right-tail integrals `∫_{x_i}^{end} f` at every node, from the
    /// degree-14 interpolant on each panel.
    pub fn integrals_to_end(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.x.len());
        let m = cumulative_matrix();
        let mut out = vec![0.0; values.len()];
        let mut beyond = 0.0;
        for p in (0..self.panels).rev() {
            let base = p * NODES_PER_PANEL;
            let f = &values[base..base + NODES_PER_PANEL];
            let h = 0.5 * (self.x[base + NODES_PER_PANEL - 1] - self.x[base]) / XGK[0];
            let total: f64 = (0..NODES_PER_PANEL).map(|k| self.w_kronrod[base + k] * f[k]).sum();
            for j in 0..NODES_PER_PANEL {
                let from_start: f64 = (0..NODES_PER_PANEL).map(|k| m[j][k] * f[k]).sum::<f64>() * h;
                out[base + j] = beyond + (total - from_start);
            }
            beyond += total;
        }
        out
    }
}

fn reference_nodes() -> [f64; NODES_PER_PANEL] {
    let mut s = [0.0; NODES_PER_PANEL];
    for j in 0..7 {
        s[j] = -XGK[j];
        s[NODES_PER_PANEL - 1 - j] = XGK[j];
    }
    s
}

/// `M[j][k] = ∫_{−1}^{s_j} ℓ_k(s) ds` for the Lagrange basis on the panel
/// reference nodes.
fn cumulative_matrix() -> &'static [[f64; NODES_PER_PANEL]; NODES_PER_PANEL] {
    static M: std::sync::OnceLock<[[f64; NODES_PER_PANEL]; NODES_PER_PANEL]> = std::sync::OnceLock::new();
    M.get_or_init(|| {
        let s = reference_nodes();
        let (gx, gw) = gauss_legendre(8);
        let basis = |k: usize, t: f64| -> f64 {
            let mut v = 1.0;
            for (i, &si) in s.iter().enumerate() {
                if i != k {
                    v *= (t - si) / (s[k] - si);
                }
            }
            v
        };
        let mut m = [[0.0; NODES_PER_PANEL]; NODES_PER_PANEL];
        for j in 0..NODES_PER_PANEL {
            let c = 0.5 * (s[j] - 1.0);
            let h = 0.5 * (s[j] + 1.0);
            for (k, row) in m[j].iter_mut().enumerate() {
                *row = gx.iter().zip(&gw).map(|(&x, &w)| w * basis(k, c + h * x)).sum::<f64>() * h;
            }
        }
        m
    })
}

/// `a, a + (b−a)·2^{-levels}, …, a + (b−a)/2, b`.
pub fn geometric_breaks(a: f64, b: f64, levels: usize) -> Vec<f64> {
    let mut out = vec![a];
    for k in (1..=levels).rev() {
        out.push(a + (b - a) * 0.5f64.powi(k as i32));
    }
    out.push(b);
    out
}

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let s = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod integration on a finite interval.
///
/// Bisects the panel with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol·|value|)`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b);
    panels.push((a, b, v, e));
    let mut evals = 15;
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::numeric(
                "adaptive quadrature",
                format!("non-finite integrand on [{a}, {b}]"),
            ));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                error,
                evaluations: evals,
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::numeric(
                "adaptive quadrature",
                format!("tolerance not met on [{a}, {b}]: value {value:e}, error {error:e}"),
            ));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evals += 30;
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Adaptive integration over `[a, ∞)` via `x = a + t/(1−t)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Integral> {
    integrate_adaptive(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
        max_panels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_integrates_gaussian_moments() {
        let rule = NormalRule::gauss_hermite(32);
        assert!((rule.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(rule.expect(|z| z).abs() < 1e-13);
        assert!((rule.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((rule.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        // E[e^{sZ}] = e^{s²/2}
        assert!((rule.expect(|z| (0.7 * z).exp()) - (0.245f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn hermite_small_orders_are_exact() {
        let (x, w) = gauss_hermite(1);
        assert!(x[0].abs() < 1e-15);
        assert!((w[0] - PI.sqrt()).abs() < 1e-13);
        let (x, _) = gauss_hermite(2);
        assert!((x[1] - 0.5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn panel_rule_matches_closed_forms() {
        let nodes = PanelNodes::from_breakpoints(&[0.0, 0.5, 1.0, 3.0]);
        let (v, e) = nodes.integrate(|x| x.exp());
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-12);
        assert!(e < 1e-8);
        let geo = PanelNodes::geometric_from_zero(2.0, 6);
        let (v, _) = geo.integrate(|x| x.sqrt());
        assert!((v - 2.0 / 3.0 * 2f64.powf(1.5)).abs() < 1e-7);
    }

    #[test]
    fn adaptive_handles_peaks_and_tails() {
        let r = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-10, 500).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value - exact).abs() / exact < 1e-9);
        let r = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-13, 1e-11, 500).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_reports_failure() {
        let r = integrate_adaptive(|x| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-14, 1e-14, 4);
        assert!(matches!(r, Err(Error::Numeric { .. })));
    }

    #[test]
    fn integrals_to_end_match_antiderivative() {
        let rule = PanelNodes::from_breakpoints(&[0.0, 0.3, 1.0, 2.5]);
        let values: Vec<f64> = rule.x.iter().map(|x| x.cos() * x).collect();
        let tails = rule.integrals_to_end(&values);
        let anti = |x: f64| x.cos() + x * x.sin();
        for (&x, &t) in rule.x.iter().zip(&tails) {
            assert!((t - (anti(2.5) - anti(x))).abs() < 1e-12, "x={x}");
        }
    }
}
