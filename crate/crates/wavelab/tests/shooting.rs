use std::sync::{Arc, OnceLock};

use wavelab::evolve::{evolve_interval, Control, EvolveConfig};
use wavelab::grid::*;
use wavelab::modulation::{decompose, z_pairing};
use wavelab::profiles::*;
use wavelab::shooting::*;
use wavelab::spectral::{solve_ground_state, GroundState};

fn gs() -> Arc<GroundState> {
    static GS: OnceLock<Arc<GroundState>> = OnceLock::new();
    GS.get_or_init(|| Arc::new(solve_ground_state(1e-10).unwrap())).clone()
}

fn smoke() -> Arc<CylGrid> {
    CylGrid::new(-60.0, 60.0, 40.0, 600, 200).unwrap()
}

fn single(s: f64, t0: f64) -> ShotSpec {
    let mut spec = ShotSpec::new(s, t0, vec![SolitonConfig::default()]);
    spec.monitor_interval = 1.0;
    spec
}

/// Relative E-norm distance.
fn rel_e(a: &State, b: &State) -> f64 {
    norm_e(&a.minus(b)) / norm_e(b)
}

#[test]
fn data_is_affine_in_the_mode_coefficients() {
    let g = smoke();
    let gsv = gs();
    let cf = vec![SolitonConfig::new(1.0, 1.0, 0.0, -0.5).unwrap(), SolitonConfig::new(1.0, 1.0, 0.0, 0.5).unwrap()];
    let mut spec = ShotSpec::new(20.0, 10.0, cf.clone());
    let base = build_data(&spec, &g, &gsv).unwrap();
    assert_eq!(rel_e(&base, &eval_sum_state(&g, &cf, 20.0).unwrap()), 0.0);
    spec.zeta_plus = vec![1e-4, -2e-4];
    spec.zeta_minus = vec![3e-4, 5e-5];
    let data = build_data(&spec, &g, &gsv).unwrap();
    let mut expect = base.clone();
    for (k, c) in cf.iter().enumerate() {
        expect.axpy(spec.zeta_plus[k], &mode_state(&g, c, 20.0, &gsv, 1.0).unwrap());
        expect.axpy(spec.zeta_minus[k], &mode_state(&g, c, 20.0, &gsv, -1.0).unwrap());
    }
    assert!(data.minus(&expect).u.max_abs() < 1e-17 && data.minus(&expect).ut.max_abs() < 1e-17);
}

#[test]
fn unstable_coordinates_of_the_data() {
    let g = smoke();
    let gsv = gs();
    let c = SolitonConfig::default();
    let s = 40.0;
    // All ζ = 0 for two solitons: z is at the interaction level.
    let cf = vec![SolitonConfig::new(1.0, 1.0, 0.0, -0.5).unwrap(), SolitonConfig::new(1.0, 1.0, 0.0, 0.5).unwrap()];
    let two = ShotSpec::new(20.0, 10.0, cf.clone());
    let d = decompose(&build_data(&two, &g, &gsv).unwrap(), 20.0, &cf, &gsv, &two.decompose).unwrap();
    for z in d.z_plus.iter().chain(&d.z_minus) {
        assert!(z.abs() < 20f64.powi(-3), "{z}");
    }
    // A single Z⁺ mode: the coordinates follow the Gram matrix of the modes.
    let a = 1e-5;
    let mut spec = single(s, 10.0);
    let d0 = decompose(&build_data(&spec, &g, &gsv).unwrap(), s, &[c], &gsv, &spec.decompose).unwrap();
    spec.zeta_plus = vec![a];
    let d1 = decompose(&build_data(&spec, &g, &gsv).unwrap(), s, &[c], &gsv, &spec.decompose).unwrap();
    let zp = mode_state(&g, &c, s, &gsv, 1.0).unwrap();
    let gram_pp = z_pairing(&zp, &c, s, &gsv, 1.0).unwrap();
    let gram_pm = z_pairing(&zp, &c, s, &gsv, -1.0).unwrap();
    assert!(((d1.z_plus[0] - d0.z_plus[0]) / (a * gram_pp) - 1.0).abs() < 1e-3);
    assert!(((d1.z_minus[0] - d0.z_minus[0]) - a * gram_pm).abs() < 1e-3 * a * gram_pp.abs());
}

#[test]
fn calibration() {
    let g = smoke();
    let gsv = gs();
    let s = 40.0;
    let spec = single(s, 10.0);
    let mut cal = Calibrator::new(&spec, g.clone(), gsv.clone()).unwrap();
    let c0 = cal.calibrate(&[0.0]).unwrap();
    assert!(c0.residual < CALIBRATION_TOL);
    let mut sp = spec.clone();
    sp.zeta_plus = c0.zeta_plus.clone();
    sp.zeta_minus = c0.zeta_minus.clone();
    let d = decompose(&build_data(&sp, &g, &gsv).unwrap(), s, &sp.solitons, &gsv, &sp.decompose).unwrap();
    assert!(d.z_plus[0].abs() < 1e-10 && d.z_minus[0].abs() < 1e-10);
    // Local linearity around the ξ = 0 offset.
    let xi = 0.5 * s.powf(-2.5);
    let c1 = cal.calibrate(&[xi]).unwrap();
    let c2 = cal.calibrate(&[2.0 * xi]).unwrap();
    for (a, b, o) in [(c1.zeta_minus[0], c2.zeta_minus[0], c0.zeta_minus[0]), (c1.zeta_plus[0], c2.zeta_plus[0], c0.zeta_plus[0])] {
        assert!(((b - o) / (2.0 * (a - o)) - 1.0).abs() < 0.01, "{a} {b} {o}");
    }
    for c in [&c0, &c1, &c2] {
        assert!(c.zeta_scale < 100.0, "{}", c.zeta_scale);
    }
    assert!(cal.calibrate(&[0.0, 1.0]).is_err());
}

#[test]
fn spec_validation() {
    let g = smoke();
    let mut s = single(10.0, 20.0);
    assert!(s.validate().is_err());
    s = single(40.0, 10.0);
    s.zeta_minus = vec![1.0];
    assert!(s.validate().is_err());
    s.zeta_minus = vec![0.0, 0.0];
    assert!(s.validate().is_err());
    s.zeta_minus = vec![];
    s.monitor_interval = 0.0;
    assert!(s.validate().is_err());
    // Core too close to the absorbing layer at time S.
    let fast = ShotSpec::new(60.0, 10.0, vec![SolitonConfig::new(1.0, 1.0, 0.0, 0.9).unwrap()]);
    assert!(matches!(build_data(&fast, &g, &gs()), Err(wavelab::error::LabError::Domain(_))));
    let opts = SearchOptions { budget: 0, ..Default::default() };
    assert!(search(&single(40.0, 10.0), g, gs(), &opts).is_err());
}

#[test]
fn miscalibrated_shot_exits_at_once() {
    let g = smoke();
    let s = 40.0;
    let mut spec = single(s, 10.0);
    let (mut sp, _) = Calibrator::new(&spec, g.clone(), gs()).unwrap().calibrated_spec(&[10.0 * s.powf(-2.5)]).unwrap();
    let r = run_shot(&sp, g.clone(), gs()).unwrap();
    assert_eq!(r.exit_reason, ExitReason::ZMinusExit);
    assert!(r.exit_time > s - 1.0, "{}", r.exit_time);
    // With the z bound relaxed, z⁻ grows backward at the linear rate until the next bound.
    sp.bootstrap.z = Some(1e6);
    sp.monitor_interval = 0.5;
    let r = run_shot(&sp, g.clone(), gs()).unwrap();
    assert!(!r.reached());
    let pts: Vec<(f64, f64)> = r.series.rows.iter().filter(|w| w.t > s - 4.0).map(|w| (w.t, w.z_minus[0].abs().ln())).collect();
    let n = pts.len();
    assert!(n >= 4);
    let rate = -(pts[n - 1].1 - pts[0].1) / (pts[n - 1].0 - pts[0].0);
    assert!((rate / gs().kappa() - 1.0).abs() < 0.05, "rate {rate}");
    assert!(r.transversality().unwrap() < 0.0);
    spec.zeta_minus = vec![1.0];
    assert!(run_shot(&spec, g, gs()).is_err());
}

#[test]
fn monitors_agree_with_direct_recomputation() {
    let g = smoke();
    let sp = single(25.0, 20.0);
    let mut seen = Vec::new();
    let r = run_shot_observed(&sp, g, gs(), |d| {
        seen.push(d.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(seen.len(), r.monitors.len());
    for (d, m) in seen.iter().zip(&r.monitors) {
        let drift: f64 = d.solitons.iter().zip(&sp.solitons).map(|(a, b)| (a.lambda - b.lambda).abs() + (a.y1 - b.y1).abs()).sum();
        assert!((m.param_drift - drift).abs() <= 1e-12 * drift.max(1e-300));
        assert!((m.eps_e - norm_e(&d.eps_state())).abs() <= 1e-12 * m.eps_e);
        assert!((m.eps_y1y0 - norm_y1y0(&d.eps_state())).abs() <= 1e-12 * m.eps_y1y0);
        let zm: f64 = d.z_minus.iter().map(|z| z * z).sum();
        assert_eq!(m.z_minus_sq, zm);
        assert_eq!(m.thresholds, sp.bootstrap.thresholds(d.t));
        assert_eq!(*m, Monitor::from_decomposition(d, &sp.solitons, &sp.bootstrap));
    }
}

#[test]
fn single_soliton_shooting() {
    let g = smoke();
    let (s, t0) = (25.0, 12.0);
    let spec = single(s, t0);
    let res = search(&spec, g.clone(), gs(), &SearchOptions::default()).unwrap();
    assert!(res.converged && res.best.reached(), "best exit {}", res.best.exit_time);
    assert_eq!(res.method, SearchMethod::Bisection);
    assert!(res.shots.len() <= 40);
    let xi = res.xi_star[0];
    let mut sp = spec.clone();
    sp.zeta_minus = res.calibration.zeta_minus.clone();
    sp.zeta_plus = res.calibration.zeta_plus.clone();

    // Determinism.
    let a = run_shot(&sp, g.clone(), gs()).unwrap();
    let b = run_shot(&sp, g.clone(), gs()).unwrap();
    assert!(a.reached());
    assert_eq!(a.monitors, b.monitors);
    assert_eq!(a.exit_time.to_bits(), b.exit_time.to_bits());

    // Forward re-integration from T0 recovers the data (absorbing layer off).
    let data = build_data(&sp, &g, &gs()).unwrap();
    let cfg = EvolveConfig { sponge: None, reference: Some(sp.solitons.clone()), ..Default::default() };
    let back = evolve_interval(data.clone(), s, t0, &cfg, |_, _| Ok(Control::Continue)).unwrap();
    let fwd = evolve_interval(back.final_state, t0, s, &cfg, |_, _| Ok(Control::Continue)).unwrap();
    assert!(rel_e(&fwd.final_state, &data) < 1e-6, "{}", rel_e(&fwd.final_state, &data));

    // Landscape: the backward lifetime S − exit_time is largest at ξ* and weakly decreases away from it.
    let unit = s.powf(-2.5);
    let xis: Vec<f64> = (-8..=8).map(|k| xi + 0.02 * unit * k as f64 * (k as f64).abs()).collect();
    let recs = scan(&spec, g, gs(), &[0.0], &xis).unwrap();
    assert_eq!(recs.len(), 17);
    let life: Vec<f64> = recs.iter().map(|r| s - r.exit_time).collect();
    let peak = life.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(life[8], peak, "{life:?}");
    let mut violations = 0;
    for k in 0..8 {
        if life[k] > life[k + 1] {
            violations += 1;
        }
        if life[16 - k] > life[15 - k] {
            violations += 1;
        }
    }
    assert!(violations <= 1, "{life:?}");
    let mut buf = Vec::new();
    write_scan_csv(&recs, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "xi,exit_time,exit_reason");
    assert_eq!(text.lines().count(), 18);
}
