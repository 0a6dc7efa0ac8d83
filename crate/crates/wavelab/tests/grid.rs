use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab::grid::*;
use wavelab::profiles::{eval_state, eval_w, SolitonConfig};
use wavelab::quadrature::gauss_legendre_on;

/// Area of the unit sphere in ℝ⁵.
const S4: f64 = 8.0 * PI * PI / 3.0;

fn lambda_w(x: f64, r: f64) -> f64 {
    let s = (x * x + r * r) / 15.0;
    1.5 * (1.0 + s).powf(-1.5) - 3.0 * s * (1.0 + s).powf(-2.5)
}

fn grid(half: f64, h: f64) -> Arc<CylGrid> {
    let n = (2.0 * half / h).round() as usize + 1;
    let m = (half / h).round() as usize + 1;
    CylGrid::new(-half, half, half, n, m).unwrap()
}

/// Composite Gauss–Legendre integral of `f(x₁, ρ)·2π²ρ³` over `[a, b] × [0, c]`.
fn gauss_cylinder<F: Fn(f64, f64) -> f64>(f: F, a: f64, b: f64, c: f64, panels: usize) -> f64 {
    let mut total = 0.0;
    for p in 0..panels {
        let (xa, xb) = (a + (b - a) * p as f64 / panels as f64, a + (b - a) * (p + 1) as f64 / panels as f64);
        let (xs, wx) = gauss_legendre_on(12, xa, xb);
        for q in 0..panels {
            let (ra, rb) = (c * q as f64 / panels as f64, c * (q + 1) as f64 / panels as f64);
            let (rs, wr) = gauss_legendre_on(12, ra, rb);
            for (x, a) in xs.iter().zip(&wx) {
                for (r, b) in rs.iter().zip(&wr) {
                    total += a * b * 2.0 * PI * PI * r.powi(3) * f(*x, *r);
                }
            }
        }
    }
    total
}

#[test]
fn gaussian_integral_matches_closed_form() {
    let g = grid(10.0, 0.1);
    let f = CylField::from_fn(&g, |x, r| (-(x * x + r * r)).exp());
    let exact = PI.powf(2.5);
    assert!((integrate(&f) / exact - 1.0).abs() < 1e-6);
    assert_eq!(integrate(&CylField::zeros(&g)), 0.0);
}

#[test]
fn quadrature_is_linear_and_positive() {
    let g = grid(8.0, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = CylField::from_fn(&g, |x, r| (x * 0.3).sin() * (-(r * r) / 9.0).exp());
    let noise: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h = CylField { grid: g.clone(), values: noise };
    let (a, b) = (1.7, -0.4);
    let mut comb = f.scaled(a);
    comb.axpy(b, &h);
    let lhs = integrate(&comb);
    let rhs = a * integrate(&f) + b * integrate(&h);
    assert!((lhs - rhs).abs() <= 1e-12 * (integrate(&f.map(f64::abs)) + integrate(&h.map(f64::abs))));
    assert!(pair_l2(&h, &h) >= 0.0);
    assert!(integrate(&h.map(|v| v * v)) >= 0.0);
}

#[test]
fn soliton_potential_integral_converges_with_domain() {
    // ∫W^{10/3} = |S⁴|·15^{5/2}·Γ(5/2)²/(2Γ(5)).
    let gamma52 = 0.75 * PI.sqrt();
    let exact = S4 * 15f64.powf(2.5) * gamma52 * gamma52 / 48.0;
    let mut vals = Vec::new();
    for half in [50.0, 100.0] {
        let g = grid(half, 0.2);
        let w = CylField::from_fn(&g, eval_w);
        vals.push(integrate(&w.map(|v| v.powf(10.0 / 3.0))));
    }
    // The tail outside the cylinder of half-width R is below |S⁴|·15⁵/(5R⁵).
    for (v, half) in vals.iter().zip([50.0f64, 100.0]) {
        let tail = S4 * 15f64.powi(5) / (5.0 * half.powi(5));
        assert!(*v < exact && exact - v < tail, "{v} vs {exact}");
    }
    assert!((vals[1] - vals[0]).abs() / exact < 2e-5);
}

#[test]
fn stretched_pairing_identity() {
    let ell: f64 = 0.6;
    let a = (1.0 - ell * ell).sqrt();
    // The unstretched grid is the image of the stretched one under x₁ ↦ x₁/a.
    let g = CylGrid::new(-60.0, 60.0, 60.0, 1201, 601).unwrap();
    let gu = CylGrid::new(-60.0 / a, 60.0 / a, 60.0, 1201, 601).unwrap();
    let wl = CylField::from_fn(&g, |x, r| eval_w(x / a, r));
    let lwl = CylField::from_fn(&g, |x, r| lambda_w(x / a, r));
    let w = CylField::from_fn(&gu, eval_w);
    let lw = CylField::from_fn(&gu, lambda_w);
    let lhs = pair_h1_ell(&wl, &lwl, ell);
    let lhs2 = pair_h1_ell(&lwl, &lwl, ell);
    let rhs2 = a * pair_h1(&lw, &lw);
    assert!((lhs2 / rhs2 - 1.0).abs() < 1e-5, "{lhs2} vs {rhs2}");
    // (ΛW, W)_{Ḣ¹} vanishes on ℝ⁵. On a truncated domain containing the ball of radius R₀ and
    // contained in the ball of radius R₁, what remains is minus the tail of ∇ΛW·∇W ≈ −A|x|^{-8}.
    let tail = |r: f64| 13.5 * 15f64.powi(3) * S4 / (3.0 * r.powi(3));
    let inner = pair_h1(&lw, &w);
    assert!(inner > 0.95 * tail(60f64.hypot(60.0 / a)) && inner < 1.05 * tail(60.0), "{inner}");
    assert!((lhs / a - inner).abs() < 1e-5 * inner, "{lhs} {inner}");
}

#[test]
fn energy_norm_of_soliton_matches_independent_quadrature() {
    let g = grid(40.0, 0.1);
    let s = eval_state(&g, &SolitonConfig::default(), 0.0).unwrap();
    let grad2 = |x: f64, r: f64| {
        let s = (x * x + r * r) / 15.0;
        let dw = -(1.0 / 5.0) * (1.0 + s).powf(-2.5);
        dw * dw * (x * x + r * r)
    };
    let oracle = gauss_cylinder(grad2, -40.0, 40.0, 40.0, 16);
    let ne = norm_e(&s);
    assert!((ne * ne / oracle - 1.0).abs() < 1e-6, "{} vs {oracle}", ne * ne);
    assert_eq!(norm_e(&State::zeros(&g)), 0.0);
}

#[test]
fn weighted_norm_of_soliton_under_domain_doubling() {
    // |∇W|²⟨x⟩ ~ |x|^{-7} is integrable; W²⟨x⟩ ~ 15³|x|^{-5} adds |S⁴|·15³·ln 2 per doubling.
    let mut y0 = Vec::new();
    let mut grad_part = Vec::new();
    for half in [40.0, 80.0] {
        let g = grid(half, 0.4);
        let w = CylField::from_fn(&g, eval_w);
        y0.push(norm_y0(&w).powi(2));
        let zero = CylField::zeros(&g);
        let (w1, wr) = (w.d1(), w.drho());
        let nr = g.n_rho;
        let gp = weighted_sum(&g, |i, j| {
            let k = i * nr + j;
            let (x, r) = (g.x1(i), g.rho(j));
            (w1.values[k].powi(2) + wr.values[k].powi(2)) * (1.0 + x * x + r * r).sqrt()
        });
        grad_part.push(gp);
        assert_eq!(norm_y0(&zero), 0.0);
    }
    assert!(y0.iter().all(|v| v.is_finite()));
    // |∇W|²⟨x⟩ ≈ A|x|^{-7} with A = 9·15³; a cylinder of half-width R lies between
    // the balls of radius R and √2R, so its complement carries between A|S⁴|/(4R²) and A|S⁴|/(2R²).
    let a = 9.0 * 15f64.powi(3) * S4;
    let change = grad_part[1] - grad_part[0];
    assert!(change > 0.9 * 0.75 * a / (4.0 * 1600.0) && change < 1.1 * 0.75 * a / (2.0 * 1600.0), "{change}");
    assert!(change / grad_part[1] < 0.1);
    let growth = S4 * 15f64.powi(3) * 2f64.ln();
    assert!(((y0[1] - y0[0]) / growth - 1.0).abs() < 0.05, "{} vs {growth}", y0[1] - y0[0]);
}

#[test]
fn hardy_sobolev_ratios() {
    let g = grid(40.0, 0.2);
    let w = CylField::from_fn(&g, eval_w);
    let (h, s) = hardy_sobolev_check(&w).unwrap();
    assert!(h.is_finite() && s.is_finite() && h < 10.0 && s < 10.0);
    let lam: f64 = 1.5;
    let wl = CylField::from_fn(&g, |x, r| lam.powf(-1.5) * eval_w(x / lam, r / lam));
    let (h2, s2) = hardy_sobolev_check(&wl).unwrap();
    assert!((h2 / h - 1.0).abs() < 2e-2 && (s2 / s - 1.0).abs() < 2e-2, "{h} {h2} {s} {s2}");
    let bump = CylField::from_fn(&g, |x, r| {
        let q = x * x + r * r;
        if q < 4.0 { (1.0 - q / 4.0).powi(4) } else { 0.0 }
    });
    let (hb, sb) = hardy_sobolev_check(&bump).unwrap();
    assert!(hb.is_finite() && sb.is_finite());
    assert!(hardy_sobolev_check(&CylField::zeros(&g)).is_err());
}

#[test]
fn energy_momentum_reference_values() {
    let g = grid(60.0, 0.2);
    let w = eval_state(&g, &SolitonConfig::default(), 0.0).unwrap();
    let ew = energy(&w);
    // E(W, 0) = (1/2 − 3/10)∫|∇W|² = (1/5)∫W^{10/3}.
    let gamma52 = 0.75 * PI.sqrt();
    let exact = S4 * 15f64.powf(2.5) * gamma52 * gamma52 / 48.0 / 5.0;
    assert!(ew > 0.0 && (ew / exact - 1.0).abs() < 1e-2, "{ew} vs {exact}");
    let z = State::zeros(&g);
    assert_eq!(energy(&z), 0.0);
    assert_eq!(momentum_x1(&z), 0.0);
}

#[test]
fn discrete_integration_by_parts() {
    let g = grid(30.0, 0.2);
    let f = CylField::from_fn(&g, |x, r| (-(x - 1.0).powi(2) / 4.0 - r * r / 6.0).exp() * (1.0 + 0.3 * x));
    let h = CylField::from_fn(&g, |x, r| (-(x + 0.5).powi(2) / 3.0 - r * r / 5.0).exp());
    let s = pair_l2(&f.d1(), &h) + pair_l2(&f, &h.d1());
    assert!(s.abs() < 1e-8, "{s:e}");
}

#[test]
fn axis_term_matches_limit() {
    for h in [0.2, 0.1] {
        let g = CylGrid::new(-5.0, 5.0, 5.0, (10.0 / h) as usize + 1, (5.0 / h) as usize + 1).unwrap();
        let f = CylField::from_fn(&g, |x, r| (-(x * x) - r * r).exp());
        let lap = f.laplacian();
        // Δ₅e^{−|x|²} = (4|x|² − 10)e^{−|x|²}; on the axis at x₁ = 0.5.
        let i = g.nearest_row(0.5);
        let x = g.x1(i);
        let exact = (4.0 * x * x - 10.0) * (-(x * x)).exp();
        assert!((lap.at(i, 0) - exact).abs() < 50.0 * h * h * h * h + 1e-6, "h {h}: {} vs {exact}", lap.at(i, 0));
    }
}

#[test]
fn second_order_convergence_of_quadrature() {
    let mut errs = Vec::new();
    let exact = PI.powf(2.5) * 0.5f64.powf(2.5);
    for h in [0.4, 0.2, 0.1] {
        let g = grid(12.0, h);
        let f = CylField::from_fn(&g, |x, r| (-2.0 * (x * x + r * r)).exp() * (1.0 + 0.0 * x));
        errs.push((integrate(&f) - exact).abs() + 1e-300);
    }
    assert!(errs[2] <= errs[1] && errs[1] <= errs[0]);
    assert!(errs[2] < 1e-6 * exact);
}

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let g = CylGrid::new(-3.0, 4.0, 2.5, 29, 11).unwrap();
    let c = SolitonConfig::new(-1.0, 0.7, 0.3, 0.45).unwrap();
    let s = eval_state(&g, &c, 0.9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.bin");
    save_state(&p, 0.9, &s).unwrap();
    let (t, back) = load_state(&p).unwrap();
    assert_eq!(t, 0.9);
    assert_eq!(back.u.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), s.u.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(back.ut, s.ut);
    assert_eq!(*back.u.grid, *g);
}
