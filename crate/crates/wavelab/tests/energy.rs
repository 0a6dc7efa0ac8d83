use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavelab::energy::*;
use wavelab::grid::*;
use wavelab::modulation::{decompose, DecomposeOptions};
use wavelab::profiles::*;
use wavelab::spectral::{measure_coercivity, solve_ground_state, CoercivityForm, GroundState};

fn gs() -> Arc<GroundState> {
    static GS: OnceLock<Arc<GroundState>> = OnceLock::new();
    GS.get_or_init(|| Arc::new(solve_ground_state(1e-10).unwrap())).clone()
}

fn smoke() -> Arc<CylGrid> {
    CylGrid::new(-60.0, 60.0, 40.0, 600, 200).unwrap()
}

fn two() -> [SolitonConfig; 2] {
    [SolitonConfig::new(1.0, 1.0, 0.0, -0.5).unwrap(), SolitonConfig::new(1.0, 1.0, 0.0, 0.5).unwrap()]
}

/// Sum of a few Gaussian bumps with random centres, widths and amplitudes.
fn random_state(g: &Arc<CylGrid>, rng: &mut ChaCha8Rng, amp: f64) -> State {
    let mut bump = || {
        let (c, w, a) = (rng.gen_range(-25.0..25.0), rng.gen_range(1.0..6.0), rng.gen_range(-1.0..1.0));
        CylField::from_fn(g, move |x, r| a * (-((x - c).powi(2) + r * r) / (w * w)).exp())
    };
    let mut u = CylField::zeros(g);
    let mut ut = CylField::zeros(g);
    for _ in 0..4 {
        u.axpy(1.0, &bump());
        ut.axpy(1.0, &bump());
    }
    let s = State { u, ut };
    s.scaled(amp / norm_e(&s))
}

/// Quadratic part assembled from the grid pairings.
fn quadratic_oracle(cfgs: &[SolitonConfig], e: &State, chi: &ChiProfile, t: f64) -> f64 {
    let g = e.grid().clone();
    let mut w = CylField::zeros(&g);
    for c in cfgs {
        w.axpy(1.0, &eval_state(&g, c, t).unwrap().u);
    }
    let chi_f = CylField::from_fn(&g, |x, _| chi.eval(t, x));
    let cross = chi_f.zip(&e.u.d1(), |a, b| a * b).zip(&e.ut, |a, b| a * b);
    let pot = w.map(f_prime).zip(&e.u, |a, b| a * b * b);
    pair_h1(&e.u, &e.u) + pair_l2(&e.ut, &e.ut) + 2.0 * integrate(&cross) - integrate(&pot)
}

#[test]
fn zero_perturbation_gives_zero() {
    let g = smoke();
    let chi = ChiProfile::new(vec![-0.5, 0.5], 0.05).unwrap();
    let r = compute_hk_state(&two(), &State::zeros(&g), &chi, 20.0).unwrap();
    assert_eq!((r.hk, r.n_omega, r.n_omega_c, r.eps_e2, r.bound_ratio), (0.0, 0.0, 0.0, 0.0, 0.0));
    let s = eval_state(&g, &SolitonConfig::default(), 1.0).unwrap();
    let d = decompose(&s, 1.0, &[SolitonConfig::default()], &gs(), &DecomposeOptions::default()).unwrap();
    assert_eq!(compute_hk(&d, &ChiProfile::new(vec![0.0], 0.01).unwrap(), 1.0).unwrap().hk, 0.0);
    assert!(compute_hk_state(&two(), &State::zeros(&g), &chi, 0.0).is_err());
}

#[test]
fn region_split_and_bound() {
    let g = smoke();
    let chi = ChiProfile::new(vec![-0.5, 0.5], 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for _ in 0..6 {
        let e = random_state(&g, &mut rng, 1e-3);
        let r = compute_hk_state(&two(), &e, &chi, 20.0).unwrap();
        let q = quadratic_oracle(&two(), &e, &chi, 20.0);
        assert!((r.quadratic - q).abs() < 1e-10 * r.eps_e2.max(1e-30) + 1e-10 * q.abs(), "{} vs {q}", r.quadratic);
        assert!((r.n_omega + r.n_omega_c + r.cross_omega_c - r.potential - r.quadratic).abs() < 1e-10 * r.eps_e2);
        assert!((r.eps_e2 / norm_e(&e).powi(2) - 1.0).abs() < 1e-12);
        assert!(r.completed_square_margin >= -1e-12 * r.eps_e2, "{}", r.completed_square_margin);
        assert!(r.n_omega >= 0.0);
        assert!(r.bound_ratio.is_finite());
        worst = worst.max(r.bound_ratio);
    }
    assert!(worst < 10.0, "bound constant {worst}");
}

#[test]
fn kernel_direction_has_small_quadratic_part() {
    let g = smoke();
    let c = SolitonConfig::default();
    let lw = sample_soliton(&g, &c, 1.0, &[SolitonQuantity::LambdaW]).pop().unwrap();
    let chi = ChiProfile::new(vec![0.0], 0.01).unwrap();
    let mut prev: Option<f64> = None;
    for a in [1e-3, 1e-4] {
        let e = State { u: lw.scaled(a), ut: CylField::zeros(&g) };
        let r = compute_hk_state(&[c], &e, &chi, 1.0).unwrap();
        let ratio = r.quadratic / r.eps_e2;
        assert!(ratio.abs() < 1e-2, "quadratic / energy = {ratio}");
        // Energy of ΛW concentrates near the soliton.
        let (d1, dr) = (e.u.d1(), e.u.drho());
        let far = CylField::from_fn(&g, |x, rr| if x.hypot(rr) > 30.0 { 1.0 } else { 0.0 });
        let dens = d1.zip(&dr, |p, q| p * p + q * q).zip(&far, |v, m| v * m);
        assert!(integrate(&dens) < 0.05 * r.eps_e2, "far fraction {}", integrate(&dens) / r.eps_e2);
        if let Some(p) = prev {
            assert!((ratio - p).abs() < 1e-3);
        }
        prev = Some(ratio);
    }
}

#[test]
fn single_soliton_probe_matches_linear_coercivity() {
    let g = smoke();
    let c = SolitonConfig::default();
    let s = eval_state(&g, &c, 1.0).unwrap();
    let d = decompose(&s, 1.0, &[c], &gs(), &DecomposeOptions::default()).unwrap();
    let chi = ChiProfile::new(vec![0.0], 0.01).unwrap();
    let p = coercivity_probe(&d, &chi, 1.0, 5, &gs(), &ProbeOptions::default()).unwrap();
    let m = measure_coercivity(CoercivityForm::HEll, 0.0, 0.05, gs()).unwrap();
    assert!(p.positive && p.mu_lower == p.mu_lanczos.min(p.mu_samples));
    assert!((p.mu_lanczos / m.mu - 1.0).abs() < 0.2, "probe {} vs spectral {}", p.mu_lanczos, m.mu);
    // A perturbation along the unstable direction violates the constraints and the ratio turns negative.
    let y = CylField::from_fn(&g, |x, r| gs().y.value(x.hypot(r)));
    let r = compute_hk_state(&[c], &State { u: y.scaled(1e-3), ut: CylField::zeros(&g) }, &chi, 1.0).unwrap();
    assert!(r.hk < 0.0, "{}", r.hk);
}

#[test]
fn two_soliton_coercivity() {
    let g = CylGrid::default_grid();
    let cf = two();
    let s = eval_sum_state(&g, &cf, 40.0).unwrap();
    let d = decompose(&s, 40.0, &cf, &gs(), &DecomposeOptions::default()).unwrap();
    let chi = ChiProfile::new(vec![-0.5, 0.5], 0.05).unwrap();
    let p = coercivity_probe(&d, &chi, 40.0, 5, &gs(), &ProbeOptions::default()).unwrap();
    assert!(p.positive && p.mu_lower > 0.0, "{p:?}");
}

#[test]
fn translation_covariance() {
    let g = smoke();
    let chi = ChiProfile::new(vec![0.3], 0.01).unwrap();
    let c = SolitonConfig::new(1.0, 1.1, 0.0, 0.3).unwrap();
    let shift = 2.0;
    let pert = |dx: f64| State {
        u: CylField::from_fn(&g, move |x, r| 1e-3 * (-((x - dx - 1.0).powi(2) + r * r) / 6.0).exp()),
        ut: CylField::from_fn(&g, move |x, r| 5e-4 * (x - dx) * (-((x - dx).powi(2) + r * r) / 8.0).exp()),
    };
    let r0 = compute_hk_state(&[c], &pert(0.0), &chi, 2.0).unwrap();
    let r1 = compute_hk_state(&[SolitonConfig { y1: c.y1 + shift, ..c }], &pert(shift), &chi, 2.0).unwrap();
    assert!((r1.hk - r0.hk).abs() < 1e-8 * r0.eps_e2, "{} vs {}", r0.hk, r1.hk);
    assert!((r1.eps_e2 / r0.eps_e2 - 1.0).abs() < 1e-8);
}

#[test]
fn cubic_remainder_scaling() {
    let g = smoke();
    let c = SolitonConfig::default();
    let chi = ChiProfile::new(vec![0.0], 0.01).unwrap();
    let y = CylField::from_fn(&g, |x, r| gs().y.value(x.hypot(r)));
    let rem: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&a| {
            let r = compute_hk_state(&[c], &State { u: y.scaled(a), ut: y.scaled(0.5 * a) }, &chi, 1.0).unwrap();
            (a, (r.hk - r.quadratic) / r.eps_e2)
        })
        .collect();
    for w in rem.windows(2) {
        let ratio = w[0].1 / w[1].1;
        assert!(ratio > 5.0 && ratio < 20.0, "remainder ratio {ratio} between a = {} and {}", w[0].0, w[1].0);
    }
    assert!(rem[2].1.abs() < 1e-3);
}

#[test]
fn remainder_matches_the_direct_difference() {
    for &(w, e) in &[(1.0, 1e-3), (0.3, -0.1), (2.0, 1.5), (-0.7, 0.2), (0.0, 0.4)] {
        let direct = f_potential(w + e) - f_potential(w) - f_nl(w) * e;
        assert!((f_remainder(w, e) - direct).abs() < 1e-14 + 1e-12 * direct.abs(), "{w} {e}");
    }
    // Leading order ½f'(w)e² for small e.
    let (w, e) = (0.8, 1e-6);
    assert!((f_remainder(w, e) / (0.5 * f_prime(w) * e * e) - 1.0).abs() < 1e-5);
}

#[test]
fn variation_monitor() {
    let g = smoke();
    let chi = ChiProfile::new(vec![0.0], 0.01).unwrap();
    let zero: Vec<HKReport> = (1..=6)
        .map(|k| compute_hk_state(&[SolitonConfig::default()], &State::zeros(&g), &chi, k as f64).unwrap())
        .collect();
    let v = monitor_variation(&zero);
    assert!(v.rows.iter().all(|r| r.hk == 0.0 && r.defect == 0.0));
    // Synthetic series with t²H = c + t⁻²: the defect is 2t⁻³.
    let reports: Vec<HKReport> = (0..41)
        .rev()
        .map(|k| {
            let t = 20.0 + k as f64;
            HKReport { t, hk: (0.7 + t.powi(-2)) / (t * t), ..zero[0] }
        })
        .collect();
    let v = monitor_variation(&reports);
    assert!(v.rows.windows(2).all(|w| w[1].t > w[0].t));
    let fit = v.fit_defect(20.0, 60.0).unwrap();
    assert!((fit.slope + 3.0).abs() < 0.02, "{}", fit.slope);
    let env = v.fit_defect_envelope(20.0, 60.0).unwrap();
    assert!((env.slope + 3.0).abs() < 0.02);
    let mut buf = Vec::new();
    v.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,hk,n_omega,n_omega_c,eps_E2,d_dt_t2hk");
    assert_eq!(text.lines().count(), 42);
}
