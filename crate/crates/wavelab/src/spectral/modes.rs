//! The directions `Z_ℓ^Λ, Z_ℓ^∇, Z_ℓ^W`, the unstable modes `Z_ℓ^±` of `H_ℓ J`
//! and their antecedents `z_ℓ^±`.
//!
//! Everything is centred at the origin with unit scale. Pointwise values come
//! in two flavours: fast closed forms for grid sampling, and jets for exact
//! derivatives in identities and residual checks.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::grid::{pair_h1, pair_l2, CylField, CylGrid, State};
use crate::jet::{grad_dot, Jet, ORDER};
use crate::profiles::{f_prime, w_ell_jet};
use crate::quadrature::HalfPlaneRule;
use crate::spectral::ground::GroundState;

/// Largest admissible exponential tilt factor `e^{κ|x₁|}` on a grid.
pub const TILT_CLAMP: f64 = 1e12;

/// Derivatives of `v ↦ v^p` at `v > 0`.
pub fn pow_derivs(v: f64, p: f64) -> [f64; ORDER + 1] {
    let mut out = [0.0; ORDER + 1];
    let mut coef = 1.0;
    for (k, o) in out.iter_mut().enumerate() {
        *o = coef * v.powf(p - k as f64);
        coef *= p - k as f64;
    }
    out
}

/// Jet of `f'(g) = (7/3)|g|^{4/3}` for a positive jet `g`.
pub fn f_prime_jet(g: &Jet) -> Jet {
    g.compose(&pow_derivs(g.value(), 4.0 / 3.0)).scale(7.0 / 3.0)
}

/// A pair of jets representing a vector `(g, h)`.
pub type PairJet = (Jet, Jet);

/// `H_ℓ (g, h) = ((−Δ − f'(W_ℓ))g − ℓ∂₁h, ℓ∂₁g + h)`.
pub fn apply_h(ell: f64, fp: &Jet, q: &Jet, v: &PairJet) -> PairJet {
    let (g, h) = v;
    let first = -g.laplacian(q) - *fp * *g - h.dx().scale(ell);
    let second = g.dx().scale(ell) + *h;
    (first, second)
}

/// `−H_ℓ J (A, B) = (−ℓ∂₁A + ΔB + f'(W_ℓ)B, A − ℓ∂₁B)`.
pub fn apply_minus_hj(ell: f64, fp: &Jet, q: &Jet, v: &PairJet) -> PairJet {
    let (a, b) = v;
    let first = -a.dx().scale(ell) + b.laplacian(q) + *fp * *b;
    let second = *a - b.dx().scale(ell);
    (first, second)
}

/// `J (A, B) = (B, −A)`.
pub fn apply_j(v: &PairJet) -> PairJet {
    (v.1, -v.0)
}

/// Unstable modes, kernel directions and antecedents for one speed `ℓ`.
#[derive(Clone, Debug)]
pub struct ModeFamily {
    pub ell: f64,
    /// `√(1 − ℓ²)`
    pub a: f64,
    /// `√λ₀`
    pub kappa: f64,
    pub ground: Arc<GroundState>,
    /// `(α^Λ, α^∇)` for `z_ℓ^+`.
    pub alpha_plus: (f64, f64),
    /// `(α^Λ, α^∇)` for `z_ℓ^−`.
    pub alpha_minus: (f64, f64),
}

/// Default half-plane rule used by identity quadratures.
pub fn default_rule(ell: f64) -> HalfPlaneRule {
    HalfPlaneRule::new(140, 56, 4.0, (1.0 - ell * ell).sqrt(), 0.0)
}

impl ModeFamily {
    /// Build the family and solve the E-orthogonality conditions of the antecedents.
    pub fn new(ell: f64, ground: Arc<GroundState>) -> Result<Self> {
        if !(ell.abs() < 1.0) {
            return Err(LabError::InvalidParameter(format!(
                "speed must lie in (−1,1), got ell = {ell}"
            )));
        }
        let mut fam = ModeFamily {
            ell,
            a: (1.0 - ell * ell).sqrt(),
            kappa: ground.lambda0.sqrt(),
            ground,
            alpha_plus: (0.0, 0.0),
            alpha_minus: (0.0, 0.0),
        };
        let rule = default_rule(ell);
        // Gram entries ⟨Z^Λ,Z^Λ⟩_E, ⟨Z^Λ,Z^∇⟩_E, ⟨Z^∇,Z^∇⟩_E and right-hand sides ⟨JZ^±, Z^{Λ,∇}⟩_E.
        let sums = rule.integrate_many(7, |x1, rho, out| {
            let q0 = rho * rho;
            let zl = fam.z_lambda_jets(x1, q0);
            let zg = fam.z_grad_jets(x1, q0);
            let jp = apply_j(&fam.z_pm_jets(1.0, x1, q0));
            let jm = apply_j(&fam.z_pm_jets(-1.0, x1, q0));
            out[0] = pair_e_point(&zl, &zl, q0);
            out[1] = pair_e_point(&zl, &zg, q0);
            out[2] = pair_e_point(&zg, &zg, q0);
            out[3] = pair_e_point(&jp, &zl, q0);
            out[4] = pair_e_point(&jp, &zg, q0);
            out[5] = pair_e_point(&jm, &zl, q0);
            out[6] = pair_e_point(&jm, &zg, q0);
        });
        let (g11, g12, g22) = (sums[0], sums[1], sums[2]);
        let det = g11 * g22 - g12 * g12;
        if !(det.abs() > 1e-14 * g11.abs() * g22.abs()) {
            return Err(LabError::Singular(format!(
                "Gram matrix of Z^Λ, Z^∇ is singular (det = {det:e})"
            )));
        }
        let c = fam.kappa * fam.a;
        // z^± = ∓JZ^±/c + α^Λ Z^Λ + α^∇ Z^∇ with ⟨z^±, Z^{Λ,∇}⟩_E = 0.
        let solve = |r1: f64, r2: f64| -> (f64, f64) {
            ((r1 * g22 - r2 * g12) / det, (g11 * r2 - g12 * r1) / det)
        };
        fam.alpha_plus = solve(sums[3] / c, sums[4] / c);
        fam.alpha_minus = solve(-sums[5] / c, -sums[6] / c);
        Ok(fam)
    }

    /// Jet of `W_ℓ`.
    pub fn w_jet(&self, x1: f64, q0: f64) -> Jet {
        w_ell_jet(self.ell, x1, q0)
    }

    /// Jet of `Y_ℓ(x) = Y(x₁/a, x̄)`.
    pub fn y_jet(&self, x1: f64, q0: f64) -> Jet {
        let x = Jet::var_x(x1);
        let q = Jet::var_q(q0);
        let s = x * x * (1.0 / (self.a * self.a)) + q;
        s.compose(&self.ground.y.s_derivs(s.value()))
    }

    /// `Λg = (3/2)g + x·∇g` on jets.
    pub fn lambda_op(g: &Jet, x1: f64, q0: f64) -> Jet {
        g.truncate(g.order() - 1).scale(1.5) + g.euler(&Jet::var_x(x1), &Jet::var_q(q0))
    }

    /// `Z^Λ = (ΛW_ℓ, −ℓ∂₁ΛW_ℓ)`.
    pub fn z_lambda_jets(&self, x1: f64, q0: f64) -> PairJet {
        let lw = Self::lambda_op(&self.w_jet(x1, q0), x1, q0);
        (lw, lw.dx().scale(-self.ell))
    }

    /// `Z^∇ = (∂₁W_ℓ, −ℓ∂₁²W_ℓ)`.
    pub fn z_grad_jets(&self, x1: f64, q0: f64) -> PairJet {
        let d = self.w_jet(x1, q0).dx();
        (d, d.dx().scale(-self.ell))
    }

    /// `Z^W = (W_ℓ, −ℓ∂₁W_ℓ)`.
    pub fn z_w_jets(&self, x1: f64, q0: f64) -> PairJet {
        let w = self.w_jet(x1, q0);
        (w, w.dx().scale(-self.ell))
    }

    /// `Z^± = ((ℓ∂₁Y_ℓ ± (κ/a)Y_ℓ)E, Y_ℓE)` with `E = e^{±ℓκx₁/a}`.
    pub fn z_pm_jets(&self, sign: f64, x1: f64, q0: f64) -> PairJet {
        let y = self.y_jet(x1, q0);
        let tilt = Jet::var_x(x1).scale(sign * self.ell * self.kappa / self.a).exp();
        let first = (y.dx().scale(self.ell) + y.scale(sign * self.kappa / self.a)) * tilt;
        (first, y * tilt)
    }

    /// Antecedent `z^±`.
    pub fn antecedent_jets(&self, sign: f64, x1: f64, q0: f64) -> PairJet {
        let jz = apply_j(&self.z_pm_jets(sign, x1, q0));
        let (al, ag) = if sign > 0.0 { self.alpha_plus } else { self.alpha_minus };
        let zl = self.z_lambda_jets(x1, q0);
        let zg = self.z_grad_jets(x1, q0);
        let c = -sign / (self.kappa * self.a);
        (
            jz.0.scale(c) + zl.0.scale(al) + zg.0.scale(ag),
            jz.1.scale(c) + zl.1.scale(al) + zg.1.scale(ag),
        )
    }

    /// `f'(W_ℓ)` as a jet.
    pub fn potential_jet(&self, x1: f64, q0: f64) -> Jet {
        f_prime_jet(&self.w_jet(x1, q0))
    }

    /// Fast closed-form values `(Z^±₁, Z^±₂)` at a point, with the tilt clamp.
    ///
    /// Returns `Err` only if the clamp would discard a non-negligible value.
    pub fn z_pm_point(&self, sign: f64, x1: f64, rho: f64) -> Result<(f64, f64)> {
        z_pm_point_raw(&self.ground, self.ell, sign, x1, rho)
    }
}

/// Closed-form `(Z^±₁, Z^±₂)` of speed `ℓ` at `(x₁, ρ)` (unit scale, centred at the origin).
pub fn z_pm_point_raw(gs: &GroundState, ell: f64, sign: f64, x1: f64, rho: f64) -> Result<(f64, f64)> {
    let a = (1.0 - ell * ell).sqrt();
    let kappa = gs.lambda0.sqrt();
    let xi = x1 / a;
    let r = (xi * xi + rho * rho).sqrt();
    let (y, dy, _) = gs.y.eval3(r);
    let expo = sign * ell * kappa * xi;
    if expo > TILT_CLAMP.ln() {
        if y > 1e-12 {
            return Err(LabError::TiltClamp(format!(
                "tilt e^{expo:.1} exceeds {TILT_CLAMP:e} where Y_ℓ = {y:e} at x1 = {x1}"
            )));
        }
        return Ok((0.0, 0.0));
    }
    let e = expo.exp();
    let d1 = if r > 0.0 { xi / (a * r) * dy } else { 0.0 };
    Ok(((ell * d1 + sign * kappa / a * y) * e, y * e))
}

/// `⟨(g₁,g₂), (h₁,h₂)⟩_E` density at a point.
pub fn pair_e_point(u: &PairJet, v: &PairJet, q0: f64) -> f64 {
    grad_dot(&u.0, &v.0, q0) + u.1.value() * v.1.value()
}

/// `Z_ℓ^±` sampled on a grid with the measured eigen-residuals.
#[derive(Clone, Debug)]
pub struct ZModes {
    pub ell: f64,
    pub zp: State,
    pub zm: State,
    /// Relative discrete E-norm residual of `−H_ℓJZ^+ = +√λ₀ a Z^+` (exact derivatives at the nodes).
    pub residual_plus: f64,
    /// Same for `Z^−`.
    pub residual_minus: f64,
    /// Rayleigh quotients `⟨−H_ℓJZ^±, Z^±⟩/⟨Z^±, Z^±⟩` with finite-difference derivatives.
    pub rayleigh_plus: f64,
    pub rayleigh_minus: f64,
}

/// Report on the ZModes construction, serialisable for the CLI.
#[derive(Clone, Debug, Serialize)]
pub struct ZModeReport {
    pub ell: f64,
    pub eigenvalue: f64,
    pub residual_plus: f64,
    pub residual_minus: f64,
    pub rayleigh_plus: f64,
    pub rayleigh_minus: f64,
}

impl ZModes {
    /// Summary for reports.
    pub fn report(&self, kappa: f64) -> ZModeReport {
        ZModeReport {
            ell: self.ell,
            eigenvalue: kappa * (1.0 - self.ell * self.ell).sqrt(),
            residual_plus: self.residual_plus,
            residual_minus: self.residual_minus,
            rayleigh_plus: self.rayleigh_plus,
            rayleigh_minus: self.rayleigh_minus,
        }
    }
}

/// Sample a pair-valued jet function on the grid (values only).
fn sample_pair<F: Fn(f64, f64) -> PairJet + Sync>(grid: &Arc<CylGrid>, f: F) -> State {
    use rayon::prelude::*;
    let mut s = State::zeros(grid);
    let nr = grid.n_rho;
    s.u.values
        .par_chunks_mut(nr)
        .zip(s.ut.values.par_chunks_mut(nr))
        .enumerate()
        .for_each(|(i, (a, b))| {
            let x1 = grid.x1(i);
            for j in 0..nr {
                let r = grid.rho(j);
                let (p, q) = f(x1, r * r);
                a[j] = p.value();
                b[j] = q.value();
            }
        });
    s
}

/// Build `Z_ℓ^±` on a grid and measure the eigenrelation.
pub fn build_zmodes(ell: f64, gs: Arc<GroundState>, grid: &Arc<CylGrid>) -> Result<ZModes> {
    let fam = ModeFamily::new(ell, gs)?;
    let mut states = Vec::new();
    for sign in [1.0, -1.0] {
        let mut z = State::zeros(grid);
        for i in 0..grid.n_x1 {
            for j in 0..grid.n_rho {
                let (p, q) = fam.z_pm_point(sign, grid.x1(i), grid.rho(j))?;
                let k = grid.idx(i, j);
                z.u.values[k] = p;
                z.ut.values[k] = q;
            }
        }
        states.push(z);
    }
    let zm = states.pop().expect("two");
    let zp = states.pop().expect("two");
    let eig = fam.kappa * fam.a;
    let mut res = [0.0; 2];
    let mut ray = [0.0; 2];
    for (k, (sign, z)) in [(1.0, &zp), (-1.0, &zm)].into_iter().enumerate() {
        // Exact-derivative residual, measured in the discrete E-norm.
        let r = sample_pair(grid, |x1, q0| {
            let v = fam.z_pm_jets(sign, x1, q0);
            let fp = fam.potential_jet(x1, q0);
            let mhj = apply_minus_hj(ell, &fp, &Jet::var_q(q0), &v);
            (
                mhj.0 - v.0.truncate(mhj.0.order()).scale(sign * eig),
                mhj.1 - v.1.truncate(mhj.1.order()).scale(sign * eig),
            )
        });
        let num = (pair_h1(&r.u, &r.u) + pair_l2(&r.ut, &r.ut)).sqrt();
        let den = (pair_h1(&z.u, &z.u) + pair_l2(&z.ut, &z.ut)).sqrt() * eig;
        res[k] = num / den;
        // Rayleigh quotient with finite-difference derivatives.
        let wl = CylField::from_fn(grid, |x1, rho| {
            let xi = x1 / fam.a;
            crate::profiles::eval_w(xi, rho)
        });
        let fp = wl.map(f_prime);
        let (a, b) = (&z.u, &z.ut);
        let mut first = a.d1().scaled(-ell);
        first.axpy(1.0, &b.laplacian());
        first.axpy(1.0, &fp.zip(b, |p, v| p * v));
        let mut second = a.clone();
        second.axpy(-ell, &b.d1());
        let num = pair_l2(&first, a) + pair_l2(&second, b);
        let den = pair_l2(a, a) + pair_l2(b, b);
        ray[k] = num / den;
    }
    Ok(ZModes {
        ell,
        zp,
        zm,
        residual_plus: res[0],
        residual_minus: res[1],
        rayleigh_plus: ray[0],
        rayleigh_minus: ray[1],
    })
}

/// Sample the antecedents `(z_ℓ^+, z_ℓ^−)` on a grid.
pub fn build_antecedents(ell: f64, gs: Arc<GroundState>, grid: &Arc<CylGrid>) -> Result<(State, State)> {
    let fam = ModeFamily::new(ell, gs)?;
    let zp = sample_pair(grid, |x1, q0| fam.antecedent_jets(1.0, x1, q0));
    let zm = sample_pair(grid, |x1, q0| fam.antecedent_jets(-1.0, x1, q0));
    Ok((zp, zm))
}
