//! Residuals of the algebraic identities satisfied by `W_ℓ`, `Y_ℓ`, the
//! directions `Z_ℓ` and the antecedents `z_ℓ^±`.
//!
//! Every identity is evaluated pointwise with exact jet derivatives and then
//! integrated over ℝ⁵ with a mapped half-plane Gauss rule.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::jet::{grad_dot, grad_sq, Jet};
use crate::profiles::w_ell_jet;
use crate::quadrature::HalfPlaneRule;
use crate::spectral::ground::GroundState;
use crate::spectral::modes::{apply_h, default_rule, f_prime_jet, pair_e_point, ModeFamily, PairJet};

/// Map from identity name to relative residual.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub ell: f64,
    pub residuals: BTreeMap<String, f64>,
}

impl IdentityReport {
    /// Largest residual in the report.
    pub fn max_residual(&self) -> f64 {
        self.residuals.values().fold(0.0, |m, v| m.max(*v))
    }

    /// Names whose residual is not below `tol`.
    pub fn failures(&self, tol: f64) -> Vec<(String, f64)> {
        self.residuals
            .iter()
            .filter(|(_, v)| !(**v < tol))
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }
}

/// `‖Σ terms‖ / Σ ‖term‖` in `L²(ℝ⁵)` for a pointwise identity `Σ terms = 0`.
///
/// `f` returns the terms of each component at a point; `n_terms` counts the terms of
/// all components together.
fn pointwise<F>(rule: &HalfPlaneRule, n_terms: usize, f: F) -> f64
where
    F: Fn(f64, f64) -> Vec<Vec<f64>>,
{
    let sums = rule.integrate_many(n_terms + 1, |x1, rho, out| {
        let comps = f(x1, rho * rho);
        let mut k = 1;
        for terms in &comps {
            let s: f64 = terms.iter().sum();
            out[0] += s * s;
            for t in terms {
                out[k] += t * t;
                k += 1;
            }
        }
    });
    let scale: f64 = sums[1..].iter().map(|v| v.sqrt()).sum();
    sums[0].sqrt() / scale
}

fn v(j: &Jet) -> f64 {
    j.value()
}

/// `−(1−ℓ²)∂₁²g`, `−Δ̄g`, `−f'g` as separate terms.
fn l_ell_terms(ell: f64, fp: &Jet, q: &Jet, g: &Jet) -> Vec<f64> {
    vec![
        -(1.0 - ell * ell) * v(&g.dx().dx()),
        -v(&g.laplacian_bar(q)),
        -v(fp) * v(g),
    ]
}

/// Terms of `H_ℓ(g, h)` per component.
fn h_terms(ell: f64, fp: &Jet, q: &Jet, z: &PairJet) -> Vec<Vec<f64>> {
    let (g, h) = z;
    vec![
        vec![-v(&g.laplacian(q)), -v(fp) * v(g), -ell * v(&h.dx())],
        vec![ell * v(&g.dx()), v(h)],
    ]
}

/// Compute every identity residual at speed `ℓ`.
pub fn verify_identities(ell: f64, gs: Arc<GroundState>) -> Result<IdentityReport> {
    verify_identities_with(ell, gs, &default_rule(ell), &default_rule(0.0))
}

/// Same as [`verify_identities`] with explicit quadrature rules for the stretched
/// (`a = √(1−ℓ²)`) and unstretched integrands.
pub fn verify_identities_with(
    ell: f64,
    gs: Arc<GroundState>,
    rule: &HalfPlaneRule,
    rule0: &HalfPlaneRule,
) -> Result<IdentityReport> {
    let fam = ModeFamily::new(ell, gs.clone())?;
    let a = fam.a;
    let kappa = fam.kappa;
    let lambda0 = gs.lambda0;
    let mut res = BTreeMap::new();
    let mut put = |k: &str, x: f64| {
        res.insert(k.to_string(), x);
    };

    // Kernel of L.
    let ker_lw = pointwise(rule0, 3, |x1, q0| {
        let q = Jet::var_q(q0);
        let w = w_ell_jet(0.0, x1, q0);
        let fp = f_prime_jet(&w);
        let lw = ModeFamily::lambda_op(&w, x1, q0);
        vec![l_ell_terms(0.0, &fp, &q, &lw)]
    });
    put("kernel of L: L(ΛW) = 0", ker_lw);
    let ker_d1 = pointwise(rule0, 3, |x1, q0| {
        let q = Jet::var_q(q0);
        let w = w_ell_jet(0.0, x1, q0);
        let fp = f_prime_jet(&w);
        vec![l_ell_terms(0.0, &fp, &q, &w.dx())]
    });
    put("kernel of L: L(∂₁W) = 0", ker_d1);

    // Boosted operator identities.
    put(
        "boosted L: L_ℓ(ΛW_ℓ) = 0",
        pointwise(rule, 3, |x1, q0| {
            let q = Jet::var_q(q0);
            let fp = fam.potential_jet(x1, q0);
            let lw = ModeFamily::lambda_op(&fam.w_jet(x1, q0), x1, q0);
            vec![l_ell_terms(ell, &fp, &q, &lw)]
        }),
    );
    put(
        "boosted L: L_ℓ(∂₁W_ℓ) = 0",
        pointwise(rule, 3, |x1, q0| {
            let q = Jet::var_q(q0);
            let fp = fam.potential_jet(x1, q0);
            vec![l_ell_terms(ell, &fp, &q, &fam.w_jet(x1, q0).dx())]
        }),
    );
    put(
        "boosted L: L_ℓ Y_ℓ = −λ₀Y_ℓ",
        pointwise(rule, 4, |x1, q0| {
            let q = Jet::var_q(q0);
            let fp = fam.potential_jet(x1, q0);
            let y = fam.y_jet(x1, q0);
            let mut t = l_ell_terms(ell, &fp, &q, &y);
            t.push(lambda0 * v(&y));
            vec![t]
        }),
    );
    put(
        "boosted L: L_ℓ W_ℓ = −(4/3)W_ℓ^{7/3}",
        pointwise(rule, 4, |x1, q0| {
            let q = Jet::var_q(q0);
            let w = fam.w_jet(x1, q0);
            let fp = f_prime_jet(&w);
            let mut t = l_ell_terms(ell, &fp, &q, &w);
            t.push(4.0 / 3.0 * v(&w).powf(7.0 / 3.0));
            vec![t]
        }),
    );

    // Kernel and W-direction of H_ℓ.
    put(
        "kernel of H: H_ℓ Z^Λ = 0",
        pointwise(rule, 5, |x1, q0| {
            let fp = fam.potential_jet(x1, q0);
            h_terms(ell, &fp, &Jet::var_q(q0), &fam.z_lambda_jets(x1, q0))
        }),
    );
    put(
        "kernel of H: H_ℓ Z^∇ = 0",
        pointwise(rule, 5, |x1, q0| {
            let fp = fam.potential_jet(x1, q0);
            h_terms(ell, &fp, &Jet::var_q(q0), &fam.z_grad_jets(x1, q0))
        }),
    );
    put(
        "kernel of H: H_ℓ Z^W = (−(4/3)W_ℓ^{7/3}, 0)",
        pointwise(rule, 6, |x1, q0| {
            let fp = fam.potential_jet(x1, q0);
            let z = fam.z_w_jets(x1, q0);
            let mut t = h_terms(ell, &fp, &Jet::var_q(q0), &z);
            t[0].push(4.0 / 3.0 * v(&z.0).powf(7.0 / 3.0));
            t
        }),
    );

    // Quadratic identity for Z^W.
    let hzw = rule.integrate_many(2, |x1, rho, out| {
        let q0 = rho * rho;
        let q = Jet::var_q(q0);
        let fp = fam.potential_jet(x1, q0);
        let z = fam.z_w_jets(x1, q0);
        let hz = apply_h(ell, &fp, &q, &z);
        out[0] = v(&hz.0) * v(&z.0) + v(&hz.1) * v(&z.1);
        out[1] = -4.0 / 3.0 * v(&z.0).powf(10.0 / 3.0);
    });
    put("Z^W quadratic: ⟨H_ℓZ^W, Z^W⟩ = −(4/3)∫W_ℓ^{10/3}", ((hzw[0] - hzw[1]) / hzw[1]).abs());

    // Eigenrelation of −H_ℓJ.
    for (sign, name) in [(1.0, "unstable modes: −H_ℓJ Z^+ = +√λ₀a Z^+"), (-1.0, "unstable modes: −H_ℓJ Z^− = −√λ₀a Z^−")] {
        put(
            name,
            pointwise(rule, 7, |x1, q0| {
                let q = Jet::var_q(q0);
                let fp = fam.potential_jet(x1, q0);
                let (za, zb) = fam.z_pm_jets(sign, x1, q0);
                let e = sign * kappa * a;
                vec![
                    vec![-ell * v(&za.dx()), v(&zb.laplacian(&q)), v(&fp) * v(&zb), -e * v(&za)],
                    vec![v(&za), -ell * v(&zb.dx()), -e * v(&zb)],
                ]
            }),
        );
    }

    // Orthogonality relations, relative to the product of norms.
    let o = rule.integrate_many(16, |x1, rho, out| {
        let q0 = rho * rho;
        let zl = fam.z_lambda_jets(x1, q0);
        let zg = fam.z_grad_jets(x1, q0);
        let zw = fam.z_w_jets(x1, q0);
        let zp = fam.z_pm_jets(1.0, x1, q0);
        let zm = fam.z_pm_jets(-1.0, x1, q0);
        let l2 = |u: &PairJet, w: &PairJet| v(&u.0) * v(&w.0) + v(&u.1) * v(&w.1);
        out[0] = pair_e_point(&zl, &zw, q0);
        out[1] = pair_e_point(&zg, &zw, q0);
        out[2] = pair_e_point(&zl, &zl, q0);
        out[3] = pair_e_point(&zg, &zg, q0);
        out[4] = pair_e_point(&zw, &zw, q0);
        out[5] = l2(&zl, &zp);
        out[6] = l2(&zl, &zm);
        out[7] = l2(&zg, &zp);
        out[8] = l2(&zg, &zm);
        out[9] = l2(&zl, &zl);
        out[10] = l2(&zg, &zg);
        out[11] = l2(&zp, &zp);
        out[12] = l2(&zm, &zm);
    });
    put("mode orthogonality: ⟨Z^Λ, Z^W⟩_E = 0", o[0].abs() / (o[2] * o[4]).sqrt());
    put("mode orthogonality: ⟨Z^∇, Z^W⟩_E = 0", o[1].abs() / (o[3] * o[4]).sqrt());
    put("mode orthogonality: (Z^Λ, Z^+) = 0", o[5].abs() / (o[9] * o[11]).sqrt());
    put("mode orthogonality: (Z^Λ, Z^−) = 0", o[6].abs() / (o[9] * o[12]).sqrt());
    put("mode orthogonality: (Z^∇, Z^+) = 0", o[7].abs() / (o[10] * o[11]).sqrt());
    put("mode orthogonality: (Z^∇, Z^−) = 0", o[8].abs() / (o[10] * o[12]).sqrt());

    // Antecedents.
    for (sign, tag) in [(1.0, "+"), (-1.0, "−")] {
        put(
            &format!("antecedents: H_ℓ z^{tag} = Z^{tag}"),
            pointwise(rule, 7, |x1, q0| {
                let fp = fam.potential_jet(x1, q0);
                let z = fam.antecedent_jets(sign, x1, q0);
                let zz = fam.z_pm_jets(sign, x1, q0);
                let mut t = h_terms(ell, &fp, &Jet::var_q(q0), &z);
                t[0].push(-v(&zz.0));
                t[1].push(-v(&zz.1));
                t
            }),
        );
        let s = rule.integrate_many(8, |x1, rho, out| {
            let q0 = rho * rho;
            let q = Jet::var_q(q0);
            let fp = fam.potential_jet(x1, q0);
            let z = fam.antecedent_jets(sign, x1, q0);
            let hz = apply_h(ell, &fp, &q, &z);
            let zl = fam.z_lambda_jets(x1, q0);
            let zg = fam.z_grad_jets(x1, q0);
            out[0] = v(&hz.0) * v(&z.0) + v(&hz.1) * v(&z.1);
            out[1] = v(&hz.0).powi(2) + v(&hz.1).powi(2);
            out[2] = v(&z.0).powi(2) + v(&z.1).powi(2);
            out[3] = pair_e_point(&z, &zl, q0);
            out[4] = pair_e_point(&z, &zg, q0);
            out[5] = pair_e_point(&z, &z, q0);
            out[6] = pair_e_point(&zl, &zl, q0);
            out[7] = pair_e_point(&zg, &zg, q0);
        });
        put(&format!("antecedents: ⟨H_ℓz^{tag}, z^{tag}⟩ = 0"), s[0].abs() / (s[1] * s[2]).sqrt());
        put(&format!("antecedents: ⟨z^{tag}, Z^Λ⟩_E = 0"), s[3].abs() / (s[5] * s[6]).sqrt());
        put(&format!("antecedents: ⟨z^{tag}, Z^∇⟩_E = 0"), s[4].abs() / (s[5] * s[7]).sqrt());
    }

    // The ℓ-pairing of stretched functions.
    type Profile<'a> = Box<dyn Fn(f64, f64, f64) -> Jet + 'a>;
    let profiles: Vec<(&str, Profile)> = vec![
        ("W", Box::new(|l, x1, q0| w_ell_jet(l, x1, q0))),
        ("ΛW", Box::new(|l, x1, q0| ModeFamily::lambda_op(&w_ell_jet(l, x1, q0), x1, q0))),
        ("Y", Box::new(|l, x1, q0| {
            let a2 = 1.0 - l * l;
            let x = Jet::var_x(x1);
            let s = x * x * (1.0 / a2) + Jet::var_q(q0);
            s.compose(&fam.ground.y.s_derivs(s.value()))
        })),
    ];
    for (i, j) in [(0, 0), (1, 1), (0, 1), (0, 2)] {
        let (ni, fi) = &profiles[i];
        let (nj, fj) = &profiles[j];
        let lhs = rule.integrate(|x1, rho| {
            let q0 = rho * rho;
            let (g, h) = (fi(ell, x1, q0), fj(ell, x1, q0));
            (1.0 - ell * ell) * g.coeff(1, 0) * h.coeff(1, 0) + 4.0 * q0 * g.coeff(0, 1) * h.coeff(0, 1)
        });
        let n = rule0.integrate_many(3, |x1, rho, out| {
            let q0 = rho * rho;
            let (g, h) = (fi(0.0, x1, q0), fj(0.0, x1, q0));
            out[0] = grad_dot(&g, &h, q0);
            out[1] = grad_sq(&g, q0);
            out[2] = grad_sq(&h, q0);
        });
        let scale = a * (n[1] * n[2]).sqrt();
        put(&format!("stretched pairing: ({ni}_ℓ, {nj}_ℓ)_ℓ = a({ni}, {nj})"), (lhs - a * n[0]).abs() / scale);
    }

    // Energy of the boosted soliton.
    let lhs = rule.integrate(|x1, rho| {
        let q0 = rho * rho;
        let w = fam.w_jet(x1, q0);
        let d1 = w.coeff(1, 0);
        let e = 0.5 * grad_sq(&w, q0) + 0.5 * ell * ell * d1 * d1 - 0.3 * v(&w).powf(10.0 / 3.0);
        e - ell * ell * d1 * d1
    });
    let rhs = rule0.integrate(|x1, rho| {
        let q0 = rho * rho;
        let w = w_ell_jet(0.0, x1, q0);
        0.5 * grad_sq(&w, q0) - 0.3 * v(&w).powf(10.0 / 3.0)
    });
    put("boosted energy: E(W_ℓ, −ℓ∂₁W_ℓ) − ℓ²‖∂₁W_ℓ‖² = aE(W, 0)", ((lhs - a * rhs) / (a * rhs)).abs());

    Ok(IdentityReport { ell, residuals: res })
}
