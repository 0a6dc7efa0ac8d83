use wavelab::grid::{pair_h1, CylGrid, CylField};
use wavelab::profiles::*;

fn w_exact(x1: f64, rho: f64) -> f64 {
    (1.0 + (x1 * x1 + rho * rho) / 15.0).powf(-1.5)
}

#[test]
fn soliton_values_at_reference_points() {
    assert_eq!(eval_w(0.0, 0.0), 1.0);
    assert!((eval_w(15f64.sqrt(), 0.0) - 0.353_553_390_6).abs() < 1e-10);
    assert!((eval_w(15f64.sqrt(), 0.0) - 2f64.powf(-1.5)).abs() < 1e-15);
}

#[test]
fn soliton_equation_residual_by_finite_differences() {
    // Δ₅ in cylindrical form: ∂₁² + ∂ρ² + (3/ρ)∂ρ, fourth-order differences.
    let h = 1e-2;
    let (x, r) = (1.0, 1.0);
    let d2 = |f: &dyn Fn(f64) -> f64, a: f64| (-f(a + 2.0 * h) + 16.0 * f(a + h) - 30.0 * f(a) + 16.0 * f(a - h) - f(a - 2.0 * h)) / (12.0 * h * h);
    let d1 = |f: &dyn Fn(f64) -> f64, a: f64| (-f(a + 2.0 * h) + 8.0 * f(a + h) - 8.0 * f(a - h) + f(a - 2.0 * h)) / (12.0 * h);
    let lap = d2(&|s| w_exact(s, r), x) + d2(&|s| w_exact(x, s), r) + 3.0 / r * d1(&|s| w_exact(x, s), r);
    let res = lap + w_exact(x, r).powf(7.0 / 3.0);
    assert!(res.abs() < 1e-8, "residual {res:e}");
    assert!(soliton_residual_fd([1.0, 1.0, 0.0, 0.0, 0.0], h) < 1e-8);
}

#[test]
fn boosted_soliton_reference_values() {
    let c = SolitonConfig::new(1.0, 1.0, 0.0, 0.0).unwrap();
    for t in [-3.0, 0.0, 7.5] {
        assert_eq!(eval_boosted(&c, t, 0.0, 0.0), 1.0);
    }
    let c = SolitonConfig::new(1.0, 1.0, 0.0, 0.6).unwrap();
    assert!((eval_boosted(&c, 0.0, 0.8, 0.0) - (1.0 + 1.0 / 15.0f64).powf(-1.5)).abs() < 1e-15);
    let c = SolitonConfig::new(-1.0, 2.0, 1.0, 0.0).unwrap();
    assert!((eval_boosted(&c, 0.0, 1.0, 0.0) + 2f64.powf(-1.5)).abs() < 1e-15);
}

#[test]
fn invalid_soliton_parameters_are_rejected() {
    let e = SolitonConfig::new(1.0, 1.0, 0.0, 1.0).unwrap_err().to_string();
    assert!(e.contains("speed must lie in (−1,1)"), "{e}");
    assert!(SolitonConfig::new(1.0, 0.0, 0.0, 0.0).is_err());
    assert!(SolitonConfig::new(0.5, 1.0, 0.0, 0.0).is_err());
}

#[test]
fn soliton_tail_asymptotics_and_bounds() {
    for r in [101.0, 300.0, 1e4] {
        let w = eval_w(r * 0.6, r * 0.8);
        assert!(w > 0.0 && w <= 1.0);
        let ratio = w * r * r * r / 15f64.powf(1.5);
        assert!(ratio > 0.99 && ratio < 1.01, "ratio {ratio} at {r}");
    }
}

#[test]
fn static_state_has_zero_velocity_and_is_reflection_symmetric() {
    let g = CylGrid::new(-10.0, 10.0, 8.0, 101, 41).unwrap();
    let s = eval_state(&g, &SolitonConfig::default(), 3.0).unwrap();
    assert_eq!(s.ut.max_abs(), 0.0);
    for i in 0..g.n_x1 {
        for j in 0..g.n_rho {
            assert_eq!(s.u.at(i, j), s.u.at(g.n_x1 - 1 - i, j));
            assert_eq!(s.u.at(i, j), eval_w(g.x1(i), g.rho(j)));
        }
    }
}

#[test]
fn state_velocity_matches_time_difference() {
    let g = CylGrid::new(-10.0, 10.0, 8.0, 101, 41).unwrap();
    let c = SolitonConfig::new(1.0, 1.2, 0.5, 0.4).unwrap();
    let (t, dt) = (1.3, 1e-3);
    let s = eval_state(&g, &c, t).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..g.n_x1 {
        for j in 0..g.n_rho {
            let (x, r) = (g.x1(i), g.rho(j));
            let fd = (eval_boosted(&c, t + dt, x, r) - eval_boosted(&c, t - dt, x, r)) / (2.0 * dt);
            worst = worst.max((fd - s.ut.at(i, j)).abs());
        }
    }
    assert!(worst < 1e-6, "max difference {worst:e}");
}

#[test]
fn chi_reference_values_and_monotonicity() {
    let one = ChiProfile::new(vec![0.3], 0.05).unwrap();
    for (t, x) in [(1.0, -50.0), (10.0, 0.0), (3.0, 7.0)] {
        assert_eq!(eval_chi(&one, t, x).unwrap(), 0.3);
    }
    let chi = ChiProfile::new(vec![-0.5, 0.5], 0.05).unwrap();
    assert!(eval_chi(&chi, 10.0, 0.0).unwrap().abs() < 1e-14);
    let xb = chi.ell_plus(0) * 10.0;
    assert!((xb + 4.5).abs() < 1e-12);
    assert!((eval_chi(&chi, 10.0, xb).unwrap() + 0.5).abs() < 1e-14);
    assert!((chi.transition_value(0, 10.0, xb) + 0.5).abs() < 1e-14);
    for t in [1.0, 10.0, 40.0] {
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=400 {
            let x = -2.0 * t + t * k as f64 / 100.0;
            let v = eval_chi(&chi, t, x).unwrap();
            assert!(v >= prev - 1e-15 && v.abs() <= 0.5 + 1e-15);
            prev = v;
        }
    }
    assert!(eval_chi(&chi, 0.0, 1.0).is_err());
}

#[test]
fn chi_invariants_are_enforced() {
    assert!(ChiProfile::new(vec![-0.5, 0.5], 0.1).is_err());
    assert!(ChiProfile::new(vec![0.5, -0.5], 0.01).is_err());
    assert!(ChiProfile::new(vec![-0.5, 1.0], 0.01).is_err());
    assert!(ChiProfile::new(vec![0.0], 0.0).is_err());
}

#[test]
fn localizer_laplacian_bound() {
    for alpha in [0.05, 0.1, 0.5] {
        let phi = Localizer::new(alpha, 0.0, 1.0).unwrap();
        let h = 1e-2;
        for k in 0..200 {
            let x = -20.0 + 0.2 * k as f64;
            let r = 0.1 + 0.13 * k as f64 % 17.0;
            // Δ₅ by fourth-order differences in cylindrical form.
            let f = |a: f64, b: f64| phi.eval(a, b);
            let d2x = (-f(x + 2.0 * h, r) + 16.0 * f(x + h, r) - 30.0 * f(x, r) + 16.0 * f(x - h, r) - f(x - 2.0 * h, r)) / (12.0 * h * h);
            let d2r = (-f(x, r + 2.0 * h) + 16.0 * f(x, r + h) - 30.0 * f(x, r) + 16.0 * f(x, r - h) - f(x, r - 2.0 * h)) / (12.0 * h * h);
            let d1r = (-f(x, r + 2.0 * h) + 8.0 * f(x, r + h) - 8.0 * f(x, r - h) + f(x, r - 2.0 * h)) / (12.0 * h);
            let lap = d2x + d2r + 3.0 / r * d1r;
            assert!((lap - phi.laplacian(x, r)).abs() < 1e-6);
            let bracket = 1.0 + x * x + r * r;
            assert!(lap.abs() <= 10.0 * alpha * phi.eval(x, r) / bracket + 1e-6);
        }
    }
    assert!(Localizer::new(0.6, 0.0, 1.0).is_err());
    assert!(Localizer::new(0.0, 0.0, 1.0).is_err());
}

#[test]
fn scaling_operators() {
    let g = CylGrid::new(-20.0, 20.0, 20.0, 401, 201).unwrap();
    // Homogeneous of degree −3/2 away from the origin.
    let f = CylField::from_fn(&g, |x, r| (x * x + r * r).max(1e-6).powf(-0.75));
    let lf = eval_scaling_ops(&f, ScalingOp::Lambda);
    let mut worst: f64 = 0.0;
    for i in 0..g.n_x1 {
        for j in 0..g.n_rho {
            let (x, r) = (g.x1(i), g.rho(j));
            let d = (x * x + r * r).sqrt();
            if d > 8.0 && d < 15.0 && j > 2 && j + 3 < g.n_rho && i > 2 && i + 3 < g.n_x1 {
                worst = worst.max(lf.at(i, j).abs() / f.at(i, j));
            }
        }
    }
    assert!(worst < 1e-6, "relative Λg {worst:e}");
    let w = CylField::from_fn(&g, eval_w);
    let lw = eval_scaling_ops(&w, ScalingOp::Lambda);
    let n = pair_h1(&lw, &lw);
    assert!(n > 0.0);
    // Scale invariance leaves only the truncated tail of ∇ΛW·∇W ≈ −13.5·15³|x|^{-8}.
    let s4 = 8.0 * std::f64::consts::PI.powi(2) / 3.0;
    let tail = |r: f64| 13.5 * 15f64.powi(3) * s4 / (3.0 * r.powi(3));
    let p = pair_h1(&lw, &w);
    assert!(p > 0.9 * tail(20.0 * 2f64.sqrt()) && p < 1.1 * tail(20.0), "{p}");
    let exact = CylField::from_fn(&g, |x, r| {
        let s = (x * x + r * r) / 15.0;
        1.5 * (1.0 + s).powf(-1.5) - 3.0 * s * (1.0 + s).powf(-2.5)
    });
    let mut worst: f64 = 0.0;
    for i in 4..g.n_x1 - 4 {
        for j in 0..g.n_rho - 4 {
            worst = worst.max((lw.at(i, j) - exact.at(i, j)).abs());
        }
    }
    assert!(worst < 1e-5, "ΛW defect {worst:e}");
    // Λ̃∂₁ = ∂₁Λ on W.
    let a = eval_scaling_ops(&w.d1(), ScalingOp::LambdaTilde);
    let b = lw.d1();
    let mut worst: f64 = 0.0;
    for i in 4..g.n_x1 - 4 {
        for j in 0..g.n_rho / 2 {
            worst = worst.max((a.at(i, j) - b.at(i, j)).abs());
        }
    }
    assert!(worst < 1e-4, "commutation defect {worst:e}");
}

#[test]
fn sum_state_is_linear_in_solitons() {
    let g = CylGrid::new(-30.0, 30.0, 10.0, 121, 21).unwrap();
    let a = SolitonConfig::new(1.0, 1.0, -5.0, -0.3).unwrap();
    let b = SolitonConfig::new(-1.0, 0.8, 5.0, 0.2).unwrap();
    let s = eval_sum_state(&g, &[a, b], 2.0).unwrap();
    let sa = eval_state(&g, &a, 2.0).unwrap();
    let sb = eval_state(&g, &b, 2.0).unwrap();
    let mut d = s.minus(&sa);
    d.axpy(-1.0, &sb);
    assert!(d.u.max_abs() < 1e-15 && d.ut.max_abs() < 1e-15);
}
