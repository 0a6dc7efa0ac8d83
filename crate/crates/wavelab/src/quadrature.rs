//! Gauss–Legendre rules and mapped rules for integrals over ℝ⁵ of functions
//! that are symmetric around the `x₁` axis.
//!
//! These rules evaluate closed-form integrands without a grid and serve as the
//! high-accuracy route for identities and oracle values.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// Surface area of the unit sphere S⁴ ⊂ ℝ⁵.
pub const SPHERE4: f64 = 8.0 * PI * PI / 3.0;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by the Golub–Welsch method.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], 2.0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrise to remove the tiny asymmetry left by the eigensolver.
    let mut x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for k in 0..n / 2 {
        let m = n - 1 - k;
        let xs = 0.5 * (x[m] - x[k]);
        let ws = 0.5 * (w[m] + w[k]);
        x[k] = -xs;
        x[m] = xs;
        w[k] = ws;
        w[m] = ws;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Rule on `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| h * v).collect(),
    )
}

/// Rule on `[0, ∞)` through the map `r = c·u/(1−u)`, `u ∈ (0, 1)`.
pub fn half_line_rule(n: usize, c: f64) -> (Vec<f64>, Vec<f64>) {
    let (u, w) = gauss_legendre_on(n, 0.0, 1.0);
    let mut r = Vec::with_capacity(n);
    let mut wr = Vec::with_capacity(n);
    for (ui, wi) in u.iter().zip(w.iter()) {
        let d = 1.0 - ui;
        r.push(c * ui / d);
        wr.push(wi * c / (d * d));
    }
    (r, wr)
}

/// `∫_{ℝ⁵} g(|x|) dx = |S⁴| ∫₀^∞ g(r) r⁴ dr` for a radial integrand.
pub fn radial_integral<F: Fn(f64) -> f64>(g: F, n: usize, c: f64) -> f64 {
    let (r, w) = half_line_rule(n, c);
    SPHERE4 * r.iter().zip(w.iter()).map(|(ri, wi)| wi * g(*ri) * ri.powi(4)).sum::<f64>()
}

/// One node of a half-plane rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneNode {
    pub x1: f64,
    pub rho: f64,
    /// Weight including `2π²ρ³` and all Jacobians.
    pub w: f64,
}

/// Tensor rule on the `(x₁, ρ)` half-plane for integrals over ℝ⁵.
///
/// Polar coordinates `x₁ = a R cos φ`, `ρ = R sin φ` with `R = c·u/(1−u)`.
/// The axial stretch `a` matches profiles of the form `g(x₁/a, ρ)`, and `x₀` shifts
/// the centre.
#[derive(Clone, Debug)]
pub struct HalfPlaneRule {
    pub nodes: Vec<PlaneNode>,
}

impl HalfPlaneRule {
    /// Build a rule with `n_r` radial and `n_phi` angular nodes.
    pub fn new(n_r: usize, n_phi: usize, c: f64, a: f64, x0: f64) -> Self {
        let (r, wr) = half_line_rule(n_r, c);
        let (phi, wp) = gauss_legendre_on(n_phi, 0.0, PI);
        let mut nodes = Vec::with_capacity(n_r * n_phi);
        for (ri, wri) in r.iter().zip(wr.iter()) {
            for (pi, wpi) in phi.iter().zip(wp.iter()) {
                let s = pi.sin();
                nodes.push(PlaneNode {
                    x1: x0 + a * ri * pi.cos(),
                    rho: ri * s,
                    w: 2.0 * PI * PI * a * ri.powi(4) * s * s * s * wri * wpi,
                });
            }
        }
        HalfPlaneRule { nodes }
    }

    /// `∫ g` over ℝ⁵.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, g: F) -> f64 {
        self.nodes.iter().map(|n| n.w * g(n.x1, n.rho)).sum()
    }

    /// Several integrals in one sweep: `g` fills `out` at each node.
    pub fn integrate_many<F: FnMut(f64, f64, &mut [f64])>(&self, m: usize, mut g: F) -> Vec<f64> {
        let mut acc = vec![0.0; m];
        let mut buf = vec![0.0; m];
        for n in &self.nodes {
            buf.iter_mut().for_each(|v| *v = 0.0);
            g(n.x1, n.rho, &mut buf);
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += n.w * b;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(w.iter()).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn radial_gaussian_volume() {
        // ∫_{ℝ⁵} e^{-|x|²} = π^{5/2}
        let v = radial_integral(|r| (-r * r).exp(), 80, 2.0);
        assert!((v - PI.powf(2.5)).abs() < 1e-12 * v);
    }

    #[test]
    fn half_plane_matches_radial() {
        let rule = HalfPlaneRule::new(80, 40, 2.0, 1.0, 0.0);
        let v = rule.integrate(|x, r| (-(x * x + r * r)).exp());
        assert!((v - PI.powf(2.5)).abs() < 1e-12 * v);
    }
}
