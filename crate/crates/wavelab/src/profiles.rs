//! Closed-form soliton family, its boosts and scalings, the speed cutoff χ_K
//! and the polynomial localizer φ.
//!
//! The soliton is `W(x) = (1 + |x|²/15)^(-3/2)`, a positive solution of
//! `ΔW + W^(7/3) = 0` on ℝ⁵. Every quantity derived from it is expressed through
//! the derivatives of `𝒲(s) = W` as a function of `s = |x|²`, which are rational
//! in `b = 1/(1 + s/15)` and `√b`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{CylField, CylGrid, State};
use crate::jet::{Jet, ORDER};
use std::sync::Arc;

/// Parameters of one modulated, boosted soliton `θ W_ℓ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonConfig {
    /// Sign ι ∈ {−1, +1}.
    pub iota: f64,
    /// Scale λ > 0.
    pub lambda: f64,
    /// Axial centre.
    pub y1: f64,
    /// Axial speed in (−1, 1).
    pub ell: f64,
}

impl Default for SolitonConfig {
    fn default() -> Self {
        SolitonConfig {
            iota: 1.0,
            lambda: 1.0,
            y1: 0.0,
            ell: 0.0,
        }
    }
}

impl SolitonConfig {
    /// Build and validate a configuration.
    pub fn new(iota: f64, lambda: f64, y1: f64, ell: f64) -> Result<Self> {
        let c = SolitonConfig {
            iota,
            lambda,
            y1,
            ell,
        };
        c.validate()?;
        Ok(c)
    }

    /// Check the invariants `λ > 0`, `|ℓ| < 1`, `ι = ±1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.ell.abs() < 1.0) {
            return Err(LabError::InvalidParameter(format!(
                "speed must lie in (−1,1), got ell = {}",
                self.ell
            )));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "scale lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.iota != 1.0 && self.iota != -1.0 {
            return Err(LabError::InvalidParameter(format!(
                "sign iota must be +1 or -1, got {}",
                self.iota
            )));
        }
        if !self.y1.is_finite() {
            return Err(LabError::InvalidParameter("centre y1 must be finite".into()));
        }
        Ok(())
    }

    /// Lorentz factor `√(1 − ℓ²)`.
    pub fn contraction(&self) -> f64 {
        (1.0 - self.ell * self.ell).sqrt()
    }

    /// Axial position of the centre at time `t`.
    pub fn center(&self, t: f64) -> f64 {
        self.ell * t + self.y1
    }

    /// Normalised coordinates `(ξ₁, ρ/λ)` of a physical point at time `t`.
    pub fn local_coords(&self, t: f64, x1: f64, rho: f64) -> (f64, f64) {
        let z1 = (x1 - self.center(t)) / self.lambda;
        (z1 / self.contraction(), rho / self.lambda)
    }
}

/// Derivatives `𝒲^(k)(s)`, `k = 0..=5`, of `𝒲(s) = (1 + s/15)^(-3/2)`.
pub fn w_s_derivs(s: f64) -> [f64; ORDER + 1] {
    let b = 1.0 / (1.0 + s / 15.0);
    let mut out = [0.0; ORDER + 1];
    // d^k/ds^k (1+s/15)^(-3/2) = (-1)^k (3/2)(5/2)...((2k+1)/2) 15^(-k) b^(3/2 + k)
    let mut coef = 1.0;
    let mut bp = b * b.sqrt();
    for (k, o) in out.iter_mut().enumerate() {
        *o = coef * bp;
        coef *= -(1.5 + k as f64) / 15.0;
        bp *= b;
    }
    out
}

/// The soliton `W(x₁, ρ) = (1 + (x₁² + ρ²)/15)^(-3/2)`.
pub fn eval_w(x1: f64, rho: f64) -> f64 {
    let b = 1.0 / (1.0 + (x1 * x1 + rho * rho) / 15.0);
    b * b.sqrt()
}

/// `|Δ₅W + W^(7/3)|` at a point of ℝ⁵, with the Laplacian taken by fourth-order
/// central differences of step `h` along the five Cartesian axes.
pub fn soliton_residual_fd(x: [f64; 5], h: f64) -> f64 {
    let w = |y: [f64; 5]| {
        let r2 = y[1] * y[1] + y[2] * y[2] + y[3] * y[3] + y[4] * y[4];
        eval_w(y[0], r2.sqrt())
    };
    let w0 = w(x);
    let mut lap = 0.0;
    for k in 0..5 {
        let at = |d: f64| {
            let mut y = x;
            y[k] += d;
            w(y)
        };
        lap += (-at(2.0 * h) + 16.0 * at(h) - 30.0 * w0 + 16.0 * at(-h) - at(-2.0 * h)) / (12.0 * h * h);
    }
    (lap + w0.powf(7.0 / 3.0)).abs()
}

/// The boosted, rescaled soliton `ι λ^(-3/2) W((x₁ − ℓt − y₁)/(λ√(1−ℓ²)), ρ/λ)`.
pub fn eval_boosted(cfg: &SolitonConfig, t: f64, x1: f64, rho: f64) -> f64 {
    let (xi, r) = cfg.local_coords(t, x1, rho);
    cfg.iota * cfg.lambda.powf(-1.5) * eval_w(xi, r)
}

/// Sign-preserving nonlinearity `f(u) = |u|^(4/3) u`.
#[inline]
pub fn f_nl(u: f64) -> f64 {
    u * u.abs() * u.abs().cbrt()
}

/// Derivative `f'(u) = (7/3)|u|^(4/3)`.
#[inline]
pub fn f_prime(u: f64) -> f64 {
    let a = u.abs();
    7.0 / 3.0 * a * a.cbrt()
}

/// Potential `F(u) = (3/10)|u|^(10/3)`.
#[inline]
pub fn f_potential(u: f64) -> f64 {
    let a = u.abs();
    0.3 * a * a * a * a.cbrt()
}

/// Pointwise values of the θ-scaled soliton and of its modulation directions.
///
/// Each entry is `θ G` for the named profile `G`, that is `ι λ^(-3/2) G(z)` at the
/// rescaled point `z`; derivatives are taken in `z`, so the physical derivative
/// of `θ G` carries an extra `1/λ`. The `ph_*` entries are the Ḣ¹_ℓ test weights
/// `−((1−ℓ²)∂₁² + Δ̄)(θG)` (physical derivatives) so that
/// `(ε, θG)_{Ḣ¹_ℓ} = ∫ ε · ph`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolitonPoint {
    /// `θ W_ℓ`
    pub w: f64,
    /// `θ(∂₁W_ℓ)`
    pub d1w: f64,
    /// `θ(ΛW_ℓ)`
    pub lw: f64,
    /// `θ(∂₁ΛW_ℓ)`
    pub d1lw: f64,
    /// `θ(∂₁²W_ℓ)`
    pub d11w: f64,
    /// Ḣ¹_ℓ test weight of `θ(ΛW_ℓ)`
    pub ph_lw: f64,
    /// Ḣ¹_ℓ test weight of `θ(∂₁W_ℓ)`
    pub ph_d1w: f64,
}

/// Evaluate [`SolitonPoint`] for `cfg` at time `t` and point `(x₁, ρ)`.
pub fn soliton_point(cfg: &SolitonConfig, t: f64, x1: f64, rho: f64) -> SolitonPoint {
    let a = cfg.contraction();
    let (xi, r) = cfg.local_coords(t, x1, rho);
    let s = xi * xi + r * r;
    let d = w_s_derivs(s);
    let amp = cfg.iota * cfg.lambda.powf(-1.5);
    // radial identities: Λg = 1.5g + 2s g', (Λg)' = 3.5g' + 2s g'', Δg = 4s g'' + 10g'
    let lw = 1.5 * d[0] + 2.0 * s * d[1];
    let lw_s = 3.5 * d[1] + 2.0 * s * d[2];
    let h = 4.0 * s * d[2] + 10.0 * d[1];
    let h_s = 14.0 * d[2] + 4.0 * s * d[3];
    let lap_lw = 3.5 * h + 2.0 * s * h_s;
    let amp_h = amp / (cfg.lambda * cfg.lambda);
    SolitonPoint {
        w: amp * d[0],
        d1w: amp / a * 2.0 * xi * d[1],
        lw: amp * lw,
        d1lw: amp / a * 2.0 * xi * lw_s,
        d11w: amp / (a * a) * (2.0 * d[1] + 4.0 * xi * xi * d[2]),
        ph_lw: -amp_h * lap_lw,
        ph_d1w: -amp_h / a * 2.0 * xi * h_s,
    }
}

/// Which soliton quantity to sample on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolitonQuantity {
    W,
    D1W,
    LambdaW,
    D1LambdaW,
    D11W,
    PairLambdaW,
    PairD1W,
}

impl SolitonPoint {
    /// Select one component.
    pub fn get(&self, q: SolitonQuantity) -> f64 {
        match q {
            SolitonQuantity::W => self.w,
            SolitonQuantity::D1W => self.d1w,
            SolitonQuantity::LambdaW => self.lw,
            SolitonQuantity::D1LambdaW => self.d1lw,
            SolitonQuantity::D11W => self.d11w,
            SolitonQuantity::PairLambdaW => self.ph_lw,
            SolitonQuantity::PairD1W => self.ph_d1w,
        }
    }
}

/// Sample several soliton quantities on a grid in one pass.
pub fn sample_soliton(
    grid: &Arc<CylGrid>,
    cfg: &SolitonConfig,
    t: f64,
    which: &[SolitonQuantity],
) -> Vec<CylField> {
    let mut outs: Vec<CylField> = which.iter().map(|_| CylField::zeros(grid)).collect();
    let n_rho = grid.n_rho;
    let mut slices: Vec<&mut [f64]> = outs.iter_mut().map(|f| f.values.as_mut_slice()).collect();
    use rayon::prelude::*;
    // Process row by row; each row writes disjoint chunks of every output.
    let mut rows: Vec<Vec<&mut [f64]>> = (0..grid.n_x1).map(|_| Vec::new()).collect();
    for s in slices.iter_mut() {
        let taken = std::mem::take(s);
        for (i, chunk) in taken.chunks_mut(n_rho).enumerate() {
            rows[i].push(chunk);
        }
    }
    rows.par_iter_mut().enumerate().for_each(|(i, row)| {
        let x1 = grid.x1(i);
        for j in 0..n_rho {
            let p = soliton_point(cfg, t, x1, grid.rho(j));
            for (k, q) in which.iter().enumerate() {
                row[k][j] = p.get(*q);
            }
        }
    });
    outs
}

/// Fill `(W_k, ∂ₜW_k)` for one soliton on the grid.
///
/// Fails if the soliton centre lies outside the axial extent of the grid.
pub fn eval_state(grid: &Arc<CylGrid>, cfg: &SolitonConfig, t: f64) -> Result<State> {
    cfg.validate()?;
    let c = cfg.center(t);
    if c < grid.x1_min || c > grid.x1_max {
        return Err(LabError::Domain(format!(
            "soliton centre {c} lies outside [{}, {}]",
            grid.x1_min, grid.x1_max
        )));
    }
    let f = sample_soliton(grid, cfg, t, &[SolitonQuantity::W, SolitonQuantity::D1W]);
    let mut it = f.into_iter();
    let u = it.next().expect("two fields");
    let mut ut = it.next().expect("two fields");
    let k = -cfg.ell / cfg.lambda;
    ut.values.iter_mut().for_each(|v| *v *= k);
    Ok(State { u, ut })
}

/// Sum of soliton states.
pub fn eval_sum_state(grid: &Arc<CylGrid>, cfgs: &[SolitonConfig], t: f64) -> Result<State> {
    let mut total = State::zeros(grid);
    for c in cfgs {
        let s = eval_state(grid, c, t)?;
        total.u.axpy(1.0, &s.u);
        total.ut.axpy(1.0, &s.ut);
    }
    Ok(total)
}

/// Jet of the boosted soliton `W_ℓ(x₁ − c, ρ)` (λ = 1, ι = 1) at a point.
pub fn w_ell_jet(ell: f64, x1: f64, q: f64) -> Jet {
    let a2 = 1.0 - ell * ell;
    let x = Jet::var_x(x1);
    let qj = Jet::var_q(q);
    let s = x * x * (1.0 / a2) + qj;
    s.compose(&w_s_derivs(s.value()))
}

/// Speed-interpolating cutoff χ_K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiProfile {
    /// Strictly increasing speeds ℓ_1 < … < ℓ_K.
    pub speeds: Vec<f64>,
    /// Transition fraction σ.
    pub sigma: f64,
}

impl ChiProfile {
    /// Build and validate.
    pub fn new(speeds: Vec<f64>, sigma: f64) -> Result<Self> {
        let c = ChiProfile { speeds, sigma };
        c.validate()?;
        Ok(c)
    }

    /// Check ordering, speed range and `0 < σ < min gap / 10`.
    pub fn validate(&self) -> Result<()> {
        if self.speeds.is_empty() {
            return Err(LabError::InvalidParameter("chi needs at least one speed".into()));
        }
        for &l in &self.speeds {
            if !(l.abs() < 1.0) {
                return Err(LabError::InvalidParameter(format!(
                    "speed must lie in (−1,1), got {l}"
                )));
            }
        }
        if !(self.sigma > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        for w in self.speeds.windows(2) {
            if !(w[1] > w[0]) {
                return Err(LabError::InvalidParameter(
                    "speeds must be strictly increasing".into(),
                ));
            }
        }
        if let Some(gap) = self.min_gap() {
            if self.sigma >= gap / 10.0 {
                return Err(LabError::InvalidParameter(format!(
                    "sigma = {} must be below one tenth of the minimal speed gap ({})",
                    self.sigma,
                    gap / 10.0
                )));
            }
        }
        Ok(())
    }

    /// Smallest gap between consecutive speeds (None for K = 1).
    pub fn min_gap(&self) -> Option<f64> {
        self.speeds
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |v| v.min(g))))
    }

    /// `ℓ_k^+ = ℓ_k + σ(ℓ_{k+1} − ℓ_k)` for `k = 0..K-2`.
    pub fn ell_plus(&self, k: usize) -> f64 {
        self.speeds[k] + self.sigma * (self.speeds[k + 1] - self.speeds[k])
    }

    /// `ℓ_k^- = ℓ_k − σ(ℓ_k − ℓ_{k−1})` for `k = 1..K-1`.
    pub fn ell_minus(&self, k: usize) -> f64 {
        self.speeds[k] - self.sigma * (self.speeds[k] - self.speeds[k - 1])
    }

    /// Affine branch used on the transition strip between speeds `k` and `k+1`.
    pub fn transition_value(&self, k: usize, t: f64, x1: f64) -> f64 {
        let s = self.sigma;
        x1 / ((1.0 - 2.0 * s) * t) - s / (1.0 - 2.0 * s) * (self.speeds[k + 1] + self.speeds[k])
    }

    /// Index of the transition strip containing `x₁` at time `t`, if any.
    pub fn strip(&self, t: f64, x1: f64) -> Option<usize> {
        (0..self.speeds.len().saturating_sub(1))
            .find(|&k| x1 > self.ell_plus(k) * t && x1 < self.ell_minus(k + 1) * t)
    }

    /// Evaluate χ_K(t, x₁).
    pub fn eval(&self, t: f64, x1: f64) -> f64 {
        let k_max = self.speeds.len() - 1;
        if k_max == 0 {
            return self.speeds[0];
        }
        if x1 <= self.ell_plus(0) * t {
            return self.speeds[0];
        }
        for k in 0..k_max {
            let lo = self.ell_plus(k) * t;
            let hi = self.ell_minus(k + 1) * t;
            if x1 > lo && x1 < hi {
                return self.transition_value(k, t, x1);
            }
            if k + 1 < k_max && x1 >= hi && x1 <= self.ell_plus(k + 1) * t {
                return self.speeds[k + 1];
            }
        }
        self.speeds[k_max]
    }

    /// Whether `x₁` belongs to Ω(t), the union of transition strips.
    pub fn in_omega(&self, t: f64, x1: f64) -> bool {
        self.strip(t, x1).is_some()
    }

    /// `∂₁χ_K`: `1/((1−2σ)t)` on Ω(t), zero elsewhere.
    pub fn d1(&self, t: f64, x1: f64) -> f64 {
        if self.in_omega(t, x1) {
            1.0 / ((1.0 - 2.0 * self.sigma) * t)
        } else {
            0.0
        }
    }

    /// `∂ₜχ_K`: `−x₁/((1−2σ)t²)` on Ω(t), zero elsewhere.
    pub fn dt(&self, t: f64, x1: f64) -> f64 {
        if self.in_omega(t, x1) {
            -x1 / ((1.0 - 2.0 * self.sigma) * t * t)
        } else {
            0.0
        }
    }
}

/// Evaluate χ_K (free-function form of [`ChiProfile::eval`]).
pub fn eval_chi(chi: &ChiProfile, t: f64, x1: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::InvalidParameter(format!("chi requires t > 0, got {t}")));
    }
    Ok(chi.eval(t, x1))
}

/// Polynomial localizer `φ(x) = (1 + |(x − c)/scale|²)^(−α)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localizer {
    pub alpha: f64,
    pub center_x1: f64,
    pub scale: f64,
}

impl Localizer {
    /// Build and validate (`0 < α ≤ 1/2`, `scale > 0`).
    pub fn new(alpha: f64, center_x1: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(LabError::InvalidParameter(format!(
                "localizer exponent must lie in (0, 1/2], got {alpha}"
            )));
        }
        if !(scale > 0.0) {
            return Err(LabError::InvalidParameter("localizer scale must be positive".into()));
        }
        Ok(Localizer {
            alpha,
            center_x1,
            scale,
        })
    }

    fn r2(&self, x1: f64, rho: f64) -> f64 {
        let z = (x1 - self.center_x1) / self.scale;
        let r = rho / self.scale;
        z * z + r * r
    }

    /// φ at a point.
    pub fn eval(&self, x1: f64, rho: f64) -> f64 {
        (1.0 + self.r2(x1, rho)).powf(-self.alpha)
    }

    /// Closed-form `Δφ = −2α((3−2α)|x|² + 5) φ/(1+|x|²)²` (scaled coordinates).
    pub fn laplacian(&self, x1: f64, rho: f64) -> f64 {
        let r2 = self.r2(x1, rho);
        let a = self.alpha;
        -2.0 * a * ((3.0 - 2.0 * a) * r2 + 5.0) * self.eval(x1, rho)
            / ((1.0 + r2) * (1.0 + r2))
            / (self.scale * self.scale)
    }

    /// Jet of φ at a point (for independent derivative checks).
    pub fn jet(&self, x1: f64, q: f64) -> Jet {
        let x = Jet::var_x(x1).add_scalar(-self.center_x1).scale(1.0 / self.scale);
        let qj = Jet::var_q(q).scale(1.0 / (self.scale * self.scale));
        let s = (x * x + qj).add_scalar(1.0);
        let v = s.value();
        let mut d = [0.0; ORDER + 1];
        let mut coef = 1.0;
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = coef * v.powf(-self.alpha - k as f64);
            coef *= -self.alpha - k as f64;
        }
        s.compose(&d)
    }
}

/// Scaling operator selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingOp {
    /// `Λg = (3/2)g + x·∇g`
    Lambda,
    /// `Λ̃g = (5/2)g + x·∇g`
    LambdaTilde,
}

/// Apply Λ or Λ̃ to a grid field with 4th-order differences.
pub fn eval_scaling_ops(field: &CylField, which: ScalingOp) -> CylField {
    let c = match which {
        ScalingOp::Lambda => 1.5,
        ScalingOp::LambdaTilde => 2.5,
    };
    let d1 = field.d1();
    let dr = field.drho();
    let g = field.grid.clone();
    let mut out = CylField::zeros(&g);
    for i in 0..g.n_x1 {
        let x1 = g.x1(i);
        for j in 0..g.n_rho {
            let k = g.idx(i, j);
            out.values[k] = c * field.values[k] + x1 * d1.values[k] + g.rho(j) * dr.values[k];
        }
    }
    out
}
