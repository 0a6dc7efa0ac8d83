//! Soliton–soliton interaction integrals, the source term
//! `R_W = f(ΣW_k) − Σf(W_k)`, and log-log power-law fits.
//!
//! Integrals are grid-free: the `(x₁, ρ)` half-plane is covered by composite
//! Gauss–Legendre panels that are geometrically graded around every soliton
//! centre and mapped to infinity at the ends, so no truncation error enters.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::SPHERE3;
use crate::profiles::{f_nl, f_prime, w_s_derivs, SolitonConfig};
use crate::quadrature::gauss_legendre_on;

const PANEL_NODES: usize = 12;
const TAIL_NODES: usize = 32;

/// One-dimensional composite rule with panels graded around `centers`.
///
/// `lo` bounds the variable from below (`None` means the rule extends to −∞).
fn graded_rule(centers: &[f64], lo: Option<f64>, reach: f64) -> (Vec<f64>, Vec<f64>) {
    let mut breaks: Vec<f64> = Vec::new();
    for &c in centers {
        breaks.push(c);
        let mut h = 0.25;
        while h < reach {
            breaks.push(c - h);
            breaks.push(c + h);
            h *= 2.0;
        }
        breaks.push(c - reach);
        breaks.push(c + reach);
    }
    if let Some(l) = lo {
        breaks.retain(|b| *b > l);
        breaks.push(l);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut x = Vec::new();
    let mut w = Vec::new();
    for p in breaks.windows(2) {
        let (px, pw) = gauss_legendre_on(PANEL_NODES, p[0], p[1]);
        x.extend(px);
        w.extend(pw);
    }
    // Tails through v = b ± L·u/(1−u).
    let (u, uw) = gauss_legendre_on(TAIL_NODES, 0.0, 1.0);
    let hi = *breaks.last().expect("non-empty breaks");
    let scale = reach.max(1.0);
    for (ui, wi) in u.iter().zip(&uw) {
        let jac = scale / ((1.0 - ui) * (1.0 - ui));
        x.push(hi + scale * ui / (1.0 - ui));
        w.push(wi * jac);
        if lo.is_none() {
            let lo_b = breaks[0];
            x.push(lo_b - scale * ui / (1.0 - ui));
            w.push(wi * jac);
        }
    }
    (x, w)
}

/// `∫_{ℝ⁵} g` for an axially symmetric integrand `g(x₁, ρ)` with peaks on the axis at `centers`.
pub fn plane_integral<F: Fn(f64, f64) -> f64 + Sync>(centers: &[f64], reach: f64, g: F) -> f64 {
    use rayon::prelude::*;
    let (xs, xw) = graded_rule(centers, None, reach);
    let (rs, rw) = graded_rule(&[0.0], Some(0.0), reach);
    let total: f64 = xs
        .par_iter()
        .zip(&xw)
        .map(|(x, wx)| {
            let mut acc = 0.0;
            for (r, wr) in rs.iter().zip(&rw) {
                acc += wr * r * r * r * g(*x, *r);
            }
            wx * acc
        })
        .sum();
    SPHERE3 * total
}

/// Value and gradient `(u, ∂₁u, ∂_ρu)` of a boosted, rescaled soliton at time `t`.
pub fn soliton_grad(c: &SolitonConfig, t: f64, x1: f64, rho: f64) -> (f64, f64, f64) {
    let a = c.contraction();
    let (xi, r) = c.local_coords(t, x1, rho);
    let d = w_s_derivs(xi * xi + r * r);
    let amp = c.iota * c.lambda.powf(-1.5);
    (
        amp * d[0],
        amp * d[1] * 2.0 * xi / (c.lambda * a),
        amp * d[1] * 2.0 * r / c.lambda,
    )
}

fn check_pair(c1: &SolitonConfig, c2: &SolitonConfig, r1: f64, r2: f64, t: f64) -> Result<()> {
    c1.validate()?;
    c2.validate()?;
    if !(r1 >= r2 && r2 > 0.0 && r1 + r2 > 5.0 / 3.0) {
        return Err(LabError::InvalidParameter(format!(
            "exponents must satisfy r1 ≥ r2 > 0 and r1 + r2 > 5/3, got ({r1}, {r2})"
        )));
    }
    if c1.ell == c2.ell {
        return Err(LabError::InvalidParameter("interacting solitons need distinct speeds".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::InvalidParameter(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// Interaction integral with the share coming from far away reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairIntegral {
    /// `∫_{ℝ⁵}|W₁|^{r₁}|W₂|^{r₂}` including the far field.
    pub value: f64,
    /// Contribution of `|x − m| > 4d` (`m` the midpoint, `d` the core separation),
    /// where both profiles follow their `|x|⁻³` asymptotics.
    pub tail: f64,
}

/// `∫|W₁|^{r₁}|W₂|^{r₂}` with the solitons at their positions at time `t`.
pub fn pair_integral_report(c1: &SolitonConfig, c2: &SolitonConfig, r1: f64, r2: f64, t: f64) -> Result<PairIntegral> {
    check_pair(c1, c2, r1, r2, t)?;
    let (p, q) = (c1.center(t), c2.center(t));
    let sep = (p - q).abs();
    let reach = 4.0 * sep + 8.0 * c1.lambda.max(c2.lambda);
    let mid = 0.5 * (p + q);
    let g = |x: f64, r: f64| {
        let w1 = crate::profiles::eval_boosted(c1, t, x, r).abs();
        let w2 = crate::profiles::eval_boosted(c2, t, x, r).abs();
        w1.powf(r1) * w2.powf(r2)
    };
    let value = plane_integral(&[p, q], reach, g);
    let far = 4.0 * sep;
    let tail = plane_integral(&[p, q], reach, |x, r| {
        if (x - mid).hypot(r) > far {
            g(x, r)
        } else {
            0.0
        }
    });
    Ok(PairIntegral { value, tail })
}

/// `∫|W₁|^{r₁}|W₂|^{r₂}` with the solitons centred at `ℓ_k t + y_k`.
pub fn pair_integral(c1: &SolitonConfig, c2: &SolitonConfig, r1: f64, r2: f64, t: f64) -> Result<f64> {
    Ok(pair_integral_report(c1, c2, r1, r2, t)?.value)
}

/// `R_W` and its gradient `(R, ∂₁R, ∂_ρR)` at a point.
pub fn source_point(cfgs: &[SolitonConfig], t: f64, x1: f64, rho: f64) -> (f64, f64, f64) {
    let (mut s, mut s1, mut sr) = (0.0, 0.0, 0.0);
    let (mut r, mut r1, mut rr) = (0.0, 0.0, 0.0);
    for c in cfgs {
        let (w, w1, wr) = soliton_grad(c, t, x1, rho);
        s += w;
        s1 += w1;
        sr += wr;
        let fp = f_prime(w);
        r -= f_nl(w);
        r1 -= fp * w1;
        rr -= fp * wr;
    }
    let fp = f_prime(s);
    (r + f_nl(s), r1 + fp * s1, rr + fp * sr)
}

/// Norms of the interaction source term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceNorms {
    pub rw_l2: f64,
    /// `(∫(R² + |∇R|²)⟨x⟩)^{1/2}`.
    pub rw_y0: f64,
}

fn check_configs(cfgs: &[SolitonConfig], t: f64) -> Result<()> {
    for c in cfgs {
        c.validate()?;
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(LabError::InvalidParameter(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// `‖R_W(t)‖_{L²}` and `‖R_W(t)‖_{Y⁰}` by quadrature (both vanish for a single soliton).
pub fn source_norms(cfgs: &[SolitonConfig], t: f64) -> Result<SourceNorms> {
    check_configs(cfgs, t)?;
    if cfgs.len() < 2 {
        return Ok(SourceNorms { rw_l2: 0.0, rw_y0: 0.0 });
    }
    let centers: Vec<f64> = cfgs.iter().map(|c| c.center(t)).collect();
    let span = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - centers.iter().cloned().fold(f64::INFINITY, f64::min);
    let reach = 4.0 * span + 8.0 * cfgs.iter().map(|c| c.lambda).fold(0.0, f64::max);
    let l2 = plane_integral(&centers, reach, |x, r| source_point(cfgs, t, x, r).0.powi(2));
    let y0 = plane_integral(&centers, reach, |x, r| {
        let (v, v1, vr) = source_point(cfgs, t, x, r);
        (v * v + v1 * v1 + vr * vr) * (1.0 + x * x + r * r).sqrt()
    });
    Ok(SourceNorms {
        rw_l2: l2.sqrt(),
        rw_y0: y0.sqrt(),
    })
}

/// Largest ratio `|R_W| / Σ_{k≠k'}|W_k|^{4/3}|W_{k'}|` over the given points.
pub fn source_domination(cfgs: &[SolitonConfig], t: f64, points: &[(f64, f64)]) -> Result<f64> {
    check_configs(cfgs, t)?;
    let mut worst: f64 = 0.0;
    for &(x, r) in points {
        let w: Vec<f64> = cfgs.iter().map(|c| crate::profiles::eval_boosted(c, t, x, r).abs()).collect();
        let mut bound = 0.0;
        for (k, wk) in w.iter().enumerate() {
            for (m, wm) in w.iter().enumerate() {
                if k != m {
                    bound += wk.powf(4.0 / 3.0) * wm;
                }
            }
        }
        let rw = source_point(cfgs, t, x, r).0.abs();
        if bound > 0.0 {
            worst = worst.max(rw / bound);
        }
    }
    Ok(worst)
}

/// Least-squares fit of `log v = slope·log t + c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fit a power law to `(t, value)` samples (at least four, all positive).
pub fn fit_power_law(series: &[(f64, f64)]) -> Result<PowerFit> {
    if series.len() < 4 {
        return Err(LabError::InvalidParameter(format!(
            "a power-law fit needs at least 4 points, got {}",
            series.len()
        )));
    }
    if let Some(bad) = series.iter().find(|(t, v)| !(*t > 0.0) || !(*v > 0.0)) {
        return Err(LabError::Domain(format!(
            "power-law fit needs positive times and values, got {bad:?}"
        )));
    }
    let n = series.len() as f64;
    let xs: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::Domain("power-law fit needs distinct times".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Exponent predicted for `∫|W₁|^{r₁}|W₂|^{r₂}` and the regime it belongs to.
pub fn predicted_exponent(r1: f64, r2: f64) -> (f64, &'static str) {
    if r1 > 5.0 / 3.0 {
        (-3.0 * r2, "r1 > 5/3")
    } else {
        (5.0 - 3.0 * (r1 + r2), "r1 <= 5/3")
    }
}

/// `pair_integral` sampled at the given times.
pub fn pair_series(c1: &SolitonConfig, c2: &SolitonConfig, r1: f64, r2: f64, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times.iter().map(|&t| Ok((t, pair_integral(c1, c2, r1, r2, t)?))).collect()
}

/// Evenly spaced sample of `[t0, t1]` in log scale.
pub fn log_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| (t0.ln() + (t1 / t0).ln() * k as f64 / (n - 1) as f64).exp())
        .collect()
}
