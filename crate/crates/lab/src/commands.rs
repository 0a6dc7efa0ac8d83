//! Subcommand pipelines.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wavelab::energy::{coercivity_probe, compute_hk, monitor_variation, HKReport, ProbeOptions};
use wavelab::evolve::{boost_param_map, evolve_interval, verify_boost_identity, BoostSoliton, Control};
use wavelab::grid::{energy, momentum_x1, norm_e, write_snapshot};
use wavelab::interactions::{fit_power_law, log_times, pair_series, predicted_exponent, source_norms, PowerFit};
use wavelab::modulation::{DecomposeOptions, Decomposition, Tracker};
use wavelab::profiles::{eval_sum_state, soliton_residual_fd, SolitonConfig};
use wavelab::shooting::{scan, search, write_scan_csv};
use wavelab::spectral::coercivity::{measure_coercivity_with, CoercivityOptions, Constraint};
use wavelab::spectral::ground::matrix_oracle_lambda0;
use wavelab::spectral::{solve_ground_state, verify_identities, CoercivityForm, GroundState};

use crate::config::Config;
use crate::run::Run;

/// Result of one subcommand.
pub struct Outcome {
    pub hash: String,
    pub passed: bool,
}

/// Run the named subcommand and write its manifest.
pub fn dispatch(name: &str, with_scan: bool, cfg: &Config) -> Result<Outcome> {
    let mut run = Run::new(&PathBuf::from(&cfg.output.dir))?;
    let passed = match name {
        "spectral" => spectral(&mut run, cfg)?,
        "evolve" => evolve(&mut run, cfg)?,
        "decompose" => decompose(&mut run, cfg)?,
        "interactions" => interactions(&mut run, cfg)?,
        "energy" => energy_cmd(&mut run, cfg)?,
        "shoot" => shoot(&mut run, cfg, with_scan)?,
        "verify" => verify(&mut run, cfg)?,
        other => bail!("unknown subcommand {other}"),
    };
    let input = serde_json::to_vec(cfg)?;
    let hash = run.finish(name, &input, cfg)?;
    Ok(Outcome { hash, passed })
}

fn ground(run: &mut Run, cfg: &Config) -> Result<Arc<GroundState>> {
    run.stage("ground_state", || Ok(Arc::new(solve_ground_state(cfg.spectral.tol)?)))
}

fn csv_rows<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(&r)?;
    }
    wr.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.15e}")
}

fn fit_or_none(pts: &[(f64, f64)]) -> Option<PowerFit> {
    fit_power_law(pts).ok()
}

#[derive(Serialize)]
struct CoercivityRow {
    form: CoercivityForm,
    ell: f64,
    alpha: f64,
    constraints: Vec<Constraint>,
    mu: f64,
    iterations: usize,
}

fn coercivity(form: CoercivityForm, ell: f64, alpha: f64, gs: &Arc<GroundState>, cons: &[Constraint], opts: &CoercivityOptions) -> Result<CoercivityRow> {
    let r = measure_coercivity_with(form, ell, alpha, gs.clone(), cons, opts)?;
    Ok(CoercivityRow {
        form,
        ell,
        alpha,
        constraints: cons.to_vec(),
        mu: r.mu,
        iterations: r.iterations,
    })
}

fn spectral(run: &mut Run, cfg: &Config) -> Result<bool> {
    let gs = ground(run, cfg)?;
    let oracle = run.stage("matrix_oracle", || Ok(matrix_oracle_lambda0(0.05, 40.0)))?;
    run.write("ground_state.csv", |w| {
        csv_rows(w, &["r", "Y"], (0..=400).map(|k| {
            let r = 0.1 * k as f64;
            vec![num(r), num(gs.y.value(r))]
        }))
    })?;
    let reports = run.stage("identities", || {
        cfg.spectral.ells.iter().map(|&l| Ok(verify_identities(l, gs.clone())?)).collect::<Result<Vec<_>>>()
    })?;
    run.write("identities.csv", |w| {
        csv_rows(w, &["ell", "identity", "relative_residual"], reports.iter().flat_map(|r| {
            r.residuals.iter().map(move |(k, v)| vec![num(r.ell), k.clone(), num(*v)])
        }))
    })?;
    let alpha = cfg.localizer.alpha;
    let coer = run.stage("coercivity", || {
        let opts = CoercivityOptions::coarse()?;
        let mut out = Vec::new();
        for &ell in &cfg.spectral.coercivity_ells {
            for form in CoercivityForm::ALL {
                out.push(coercivity(form, ell, alpha, &gs, &form.default_constraints(), &opts)?);
            }
        }
        Ok(out)
    })?;
    let tol = cfg.spectral.identity_tol;
    let identity_ok = reports.iter().all(|r| r.failures(tol).is_empty());
    let residuals: serde_json::Map<String, serde_json::Value> =
        reports.iter().map(|r| (format!("ell={}", r.ell), json!(r.residuals))).collect();
    let mu: serde_json::Map<String, serde_json::Value> = coer
        .iter()
        .map(|c| (format!("{}@ell={}", serde_json::to_value(c.form).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(), c.ell), json!(c.mu)))
        .collect();
    let summary = json!({
        "lambda0": gs.lambda0,
        "residuals": residuals,
        "mu": mu,
        "kappa": gs.kappa(),
        "residual": gs.residual,
        "decay_rate": gs.decay_rate,
        "matrix_oracle_lambda0": oracle,
        "identities": reports.iter().map(|r| json!({
            "ell": r.ell,
            "max_residual": r.max_residual(),
            "failures": r.failures(tol),
        })).collect::<Vec<_>>(),
        "coercivity": coer,
    });
    run.json("summary.json", &summary)?;
    Ok(identity_ok)
}

fn evolve(run: &mut Run, cfg: &Config) -> Result<bool> {
    let grid = cfg.grid_checked()?;
    let sol = cfg.soliton_configs()?;
    let (t0, t1) = (cfg.time.t_start, cfg.time.t_end);
    let s0 = eval_sum_state(&grid, &sol, t0)?;
    let ecfg = cfg.evolve_config(cfg.output.stride, None)?;
    let mut rows: Vec<[f64; 4]> = Vec::new();
    let traj = run.stage("evolve", || {
        Ok(evolve_interval(s0, t0, t1, &ecfg, |t, st| {
            let ex = eval_sum_state(&grid, &sol, t)?;
            rows.push([t, energy(st), momentum_x1(st), norm_e(&st.minus(&ex))]);
            Ok(Control::Continue)
        })?)
    })?;
    run.write("series.csv", |w| {
        csv_rows(w, &["t", "energy", "momentum_x1", "deviation_E"], rows.iter().map(|r| r.iter().map(|v| num(*v)).collect()))
    })?;
    run.write("final_state.bin", |w| {
        Ok(write_snapshot(w, traj.t_final, &[("u", &traj.final_state.u), ("ut", &traj.final_state.ut)])?)
    })?;
    let dev_max = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    run.json(
        "summary.json",
        &json!({
            "steps": traj.steps,
            "dt": traj.dt,
            "t_final": traj.t_final,
            "energy_drift": traj.energy_drift(),
            "momentum_drift": traj.momentum_drift(),
            "max_deviation_E": dev_max,
            "final_deviation_E": rows.last().map(|r| r[3]),
        }),
    )?;
    Ok(true)
}

/// Evolve the configured soliton sum while decomposing every `output.stride` steps.
fn tracked_evolution(run: &mut Run, cfg: &Config, gs: &Arc<GroundState>, keep: bool) -> Result<(Tracker, Vec<Decomposition>)> {
    let grid = cfg.grid_checked()?;
    let sol = cfg.soliton_configs()?;
    let (t0, t1) = (cfg.time.t_start, cfg.time.t_end);
    let s0 = eval_sum_state(&grid, &sol, t0)?;
    let ecfg = cfg.evolve_config(cfg.output.stride, None)?;
    let mut tracker = Tracker::new(sol, gs.clone(), DecomposeOptions::default());
    let mut kept = Vec::new();
    run.stage("evolve_and_decompose", || {
        evolve_interval(s0, t0, t1, &ecfg, |t, st| match tracker.push(t, st) {
            Ok(d) => {
                if keep {
                    kept.push(d.clone());
                }
                Ok(Control::Continue)
            }
            Err(_) => Ok(Control::Stop),
        })?;
        Ok(())
    })?;
    Ok((tracker, kept))
}

fn decompose(run: &mut Run, cfg: &Config) -> Result<bool> {
    let gs = ground(run, cfg)?;
    let (tracker, _) = tracked_evolution(run, cfg, &gs, false)?;
    let series = &tracker.series;
    run.write("parameters.csv", |w| Ok(series.write_csv(w)?))?;
    run.json("rates.json", &series.rates(gs.lambda0))?;
    run.json(
        "summary.json",
        &json!({
            "samples": series.rows.len(),
            "exit_time": series.exit_time,
            "exit_reason": series.exit_reason,
            "last": series.rows.last(),
        }),
    )?;
    Ok(series.exit_time.is_none())
}

fn interactions(run: &mut Run, cfg: &Config) -> Result<bool> {
    let sol = cfg.soliton_configs()?;
    if sol.len() < 2 {
        bail!("solitons: interactions need at least two solitons, got {}", sol.len());
    }
    let it = &cfg.interactions;
    let times = log_times(it.t_min, it.t_max, it.samples);
    let pairs = [(8.0 / 3.0, 1.0), (4.0 / 3.0, 4.0 / 3.0), (2.0, 2.0)];
    let series = run.stage("pair_integrals", || {
        pairs.iter().map(|&(r1, r2)| Ok(pair_series(&sol[0], &sol[1], r1, r2, &times)?)).collect::<Result<Vec<_>>>()
    })?;
    let norms = run.stage("source_norms", || times.iter().map(|&t| Ok(source_norms(&sol, t)?)).collect::<Result<Vec<_>>>())?;
    run.write("pairs.csv", |w| {
        csv_rows(w, &["r1", "r2", "t", "value"], pairs.iter().zip(&series).flat_map(|(&(r1, r2), s)| {
            s.iter().map(move |&(t, v)| vec![num(r1), num(r2), num(t), num(v)])
        }))
    })?;
    run.write("source.csv", |w| {
        csv_rows(w, &["t", "rw_l2", "rw_y0"], times.iter().zip(&norms).map(|(t, n)| vec![num(*t), num(n.rw_l2), num(n.rw_y0)]))
    })?;
    let fits: Vec<_> = pairs
        .iter()
        .zip(&series)
        .map(|(&(r1, r2), s)| {
            let (pred, regime) = predicted_exponent(r1, r2);
            json!({ "r1": r1, "r2": r2, "fit": fit_or_none(s), "predicted": pred, "regime": regime })
        })
        .collect();
    let rw: Vec<(f64, f64)> = times.iter().zip(&norms).map(|(t, n)| (*t, n.rw_l2)).collect();
    run.json("summary.json", &json!({ "pairs": fits, "rw_l2_fit": fit_or_none(&rw) }))?;
    Ok(true)
}

fn energy_cmd(run: &mut Run, cfg: &Config) -> Result<bool> {
    if !(cfg.time.t_start > 0.0 && cfg.time.t_end > 0.0) {
        bail!("time: the energy functional needs t_start > 0 and t_end > 0");
    }
    let gs = ground(run, cfg)?;
    let chi = cfg.chi_profile()?;
    let (tracker, decs) = tracked_evolution(run, cfg, &gs, true)?;
    let reports: Vec<HKReport> = run.stage("energy_functional", || decs.iter().map(|d| Ok(compute_hk(d, &chi, d.t)?)).collect::<Result<_>>())?;
    let variation = monitor_variation(&reports);
    run.write("variation.csv", |w| Ok(variation.write_csv(w)?))?;
    let n = decs.len();
    let m = cfg.energy.probe_times.min(n);
    let idx: Vec<usize> = (0..m).map(|k| if m == 1 { n - 1 } else { k * (n - 1) / (m - 1) }).collect();
    let opts = ProbeOptions { seed: cfg.seed, ..ProbeOptions::default() };
    let probes = run.stage("coercivity_probe", || {
        idx.iter().map(|&k| Ok(coercivity_probe(&decs[k], &chi, decs[k].t, cfg.energy.probe_samples, &gs, &opts)?)).collect::<Result<Vec<_>>>()
    })?;
    let (lo, hi) = (cfg.time.t_start.min(cfg.time.t_end), cfg.time.t_start.max(cfg.time.t_end));
    run.json(
        "summary.json",
        &json!({
            "samples": reports.len(),
            "exit_time": tracker.series.exit_time,
            "reports": reports,
            "probes": probes,
            "defect_envelope_fit": variation.fit_defect_envelope(lo, hi).ok(),
        }),
    )?;
    Ok(probes.iter().all(|p| p.positive))
}

fn shoot(run: &mut Run, cfg: &Config, with_scan: bool) -> Result<bool> {
    let grid = cfg.grid_checked()?;
    let gs = ground(run, cfg)?;
    let spec = cfg.shot_spec()?;
    let res = run.stage("search", || Ok(search(&spec, grid.clone(), gs.clone(), &cfg.shoot.search)?))?;
    let k = spec.solitons.len();
    let mut header: Vec<String> = (1..=k).map(|i| format!("xi_{i}")).collect();
    header.extend(["exit_time".to_string(), "exit_reason".to_string()]);
    header.extend((1..=k).map(|i| format!("z_minus_{i}_at_exit")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    run.write("shots.csv", |w| {
        csv_rows(w, &hdr, res.shots.iter().map(|s| {
            let mut r: Vec<String> = s.xi.iter().map(|v| num(*v)).collect();
            r.push(num(s.exit_time));
            r.push(s.exit_reason.as_str().to_string());
            r.extend(s.z_minus_at_exit.iter().map(|v| num(*v)));
            r
        }))
    })?;
    run.write("best_series.csv", |w| Ok(res.best.write_csv(w)?))?;
    run.write("best_monitors.csv", |w| {
        csv_rows(
            w,
            &["t", "param_drift", "z_minus_sq", "z_plus_sq", "eps_E", "eps_Y1Y0", "bound_param", "bound_z", "bound_eps_E", "bound_eps_Y"],
            res.best.monitors.iter().map(|m| {
                let th = &m.thresholds;
                [m.t, m.param_drift, m.z_minus_sq, m.z_plus_sq, m.eps_e, m.eps_y1y0, th.param, th.z, th.eps_e, th.eps_y]
                    .iter()
                    .map(|v| num(*v))
                    .collect()
            }),
        )
    })?;
    let (lo, hi) = (spec.t0, spec.s);
    let y_fits: Vec<Option<PowerFit>> = spec.solitons.iter().enumerate().map(|(i, c)| res.best.y_slope(i, c.y1, lo, hi).ok()).collect();
    let mut landscape = None;
    if with_scan {
        let unit = spec.s.powf(-2.5);
        let p = cfg.shoot.scan.points;
        let w = cfg.shoot.scan.half_width * unit;
        let xis: Vec<f64> = (0..p).map(|i| res.xi_star[0] - w + 2.0 * w * i as f64 / (p - 1) as f64).collect();
        let recs = run.stage("scan", || Ok(scan(&spec, grid.clone(), gs.clone(), &res.xi_star, &xis)?))?;
        run.write("landscape.csv", |w| Ok(write_scan_csv(&recs, w)?))?;
        let peak = recs.iter().max_by(|a, b| a.exit_time.total_cmp(&b.exit_time).reverse()).map(|r| r.xi[0]);
        landscape = Some(json!({ "points": recs.len(), "longest_survival_xi": peak }));
    }
    run.json(
        "summary.json",
        &json!({
            "xi_star": res.xi_star,
            "exit_time": res.best.exit_time,
            "exit_reason": res.best.exit_reason,
            "converged": res.converged,
            "radius": res.radius,
            "method": res.method,
            "shots": res.shots.len(),
            "calibration": res.calibration,
            "transversality": res.best.transversality(),
            "slopes": { "eps_E": res.best.eps_slope(lo, hi).ok(), "y": y_fits },
            "landscape": landscape,
        }),
    )?;
    Ok(res.converged)
}

#[derive(Serialize)]
struct Check {
    name: String,
    value: f64,
    criterion: String,
    passed: bool,
}

fn check(out: &mut Vec<Check>, name: impl Into<String>, value: f64, criterion: impl Into<String>, passed: bool) {
    out.push(Check {
        name: name.into(),
        value,
        criterion: criterion.into(),
        passed,
    });
}

fn verify(run: &mut Run, cfg: &Config) -> Result<bool> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pts: Vec<[f64; 5]> = (0..10_000).map(|_| [0; 5].map(|_| rng.gen_range(-6.0..6.0))).collect();
    let res = pts.iter().map(|x| soliton_residual_fd(*x, 0.01)).fold(0.0, f64::max);
    check(&mut checks, "soliton equation residual, 10^4 points", res, "< 1e-8", res < 1e-8);

    let gs = ground(run, cfg)?;
    check(&mut checks, "ground state lambda0", gs.lambda0, "> 0", gs.lambda0 > 0.0);
    check(&mut checks, "ground state residual", gs.residual, "< 1e-7", gs.residual < 1e-7);
    let oracle = run.stage("matrix_oracle", || Ok(matrix_oracle_lambda0(0.05, 40.0)))?;
    let rel = ((oracle - gs.lambda0) / gs.lambda0).abs();
    check(&mut checks, "matrix eigensolve agreement (relative)", rel, "< 5e-4", rel < 5e-4);

    let tol = cfg.spectral.identity_tol;
    run.stage("identities", || {
        for &ell in &cfg.spectral.ells {
            let r = verify_identities(ell, gs.clone())?;
            for (name, v) in &r.residuals {
                check(&mut checks, format!("identity at ell={ell}: {name}"), *v, format!("< {tol:e}"), *v < tol);
            }
        }
        Ok(())
    })?;

    run.stage("coercivity", || {
        use Constraint::*;
        let opts = CoercivityOptions::coarse()?;
        let alpha = cfg.localizer.alpha;
        for &ell in &cfg.spectral.coercivity_ells {
            for (form, reduced) in [(CoercivityForm::LWithYOrth, vec![Lambda, Grad]), (CoercivityForm::HEll, vec![Lambda, Grad])] {
                let full = coercivity(form, ell, alpha, &gs, &form.default_constraints(), &opts)?;
                check(&mut checks, format!("coercivity {form:?} at ell={ell}"), full.mu, "> 0", full.mu > 0.0);
                let red = coercivity(form, ell, alpha, &gs, &reduced, &opts)?;
                check(&mut checks, format!("coercivity {form:?} at ell={ell}, unstable constraint removed"), red.mu, "< 0", red.mu < 0.0);
            }
        }
        Ok(())
    })?;

    run.stage("scaling", || {
        let c1 = SolitonConfig::new(1.0, 1.0, 0.0, -0.5)?;
        let c2 = SolitonConfig::new(1.0, 1.0, 0.0, 0.5)?;
        let times = log_times(20.0, 80.0, 9);
        for (r1, r2, tol) in [(8.0 / 3.0, 1.0, 0.15), (4.0 / 3.0, 4.0 / 3.0, 0.15), (2.0, 2.0, 0.3)] {
            let f = fit_power_law(&pair_series(&c1, &c2, r1, r2, &times)?)?;
            let (p, _) = predicted_exponent(r1, r2);
            let target = if r1 > 5.0 / 3.0 { p } else { -3.0 };
            check(
                &mut checks,
                format!("pair integral slope ({r1:.4}, {r2:.4}), t in [20, 80]"),
                f.slope,
                format!("{target} ± {tol}"),
                (f.slope - target).abs() <= tol,
            );
        }
        let rw: Vec<(f64, f64)> = times.iter().map(|&t| Ok((t, source_norms(&[c1, c2], t)?.rw_l2))).collect::<Result<_>>()?;
        let f = fit_power_law(&rw)?;
        check(&mut checks, "source L2 norm slope, t in [20, 80]", f.slope, "-3 ± 0.2", (f.slope + 3.0).abs() <= 0.2);
        Ok(())
    })?;

    let bpts: Vec<(f64, [f64; 5])> = (0..100).map(|_| (rng.gen_range(-5.0..5.0), [0; 5].map(|_| rng.gen_range(-5.0..5.0)))).collect();
    let sol = [BoostSoliton { iota: 1.0, lambda: 1.0, y_inf: [1.0, 2.0, 0.0, 0.0, 0.0], ell: 0.3 }];
    let rep = verify_boost_identity(&sol, 0.4, &bpts)?;
    check(&mut checks, "boost identity, 100 points", rep.max_discrepancy, "< 1e-12", rep.max_discrepancy < 1e-12);
    let m = boost_param_map([1.0, 2.0, 0.0, 0.0, 0.0], 0.3, 0.4);
    let exact = [1.0 + (0.4 * 0.3 / (1.0 - 0.16)) * 2.0, 2.0 / 0.84f64.sqrt(), 0.0, 0.0, 0.0];
    let dev = m.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(&mut checks, "boost parameter map", dev, "== 0", dev == 0.0);

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<72} {:>14}  {:<10} {}", "check", "value", "criterion", "status")?;
    for c in &checks {
        writeln!(stdout, "{:<72} {:>14.6e}  {:<10} {}", c.name, c.value, c.criterion, if c.passed { "PASS" } else { "FAIL" })?;
    }
    run.write("verify.csv", |w| {
        csv_rows(w, &["check", "value", "criterion", "passed"], checks.iter().map(|c| vec![c.name.clone(), num(c.value), c.criterion.clone(), c.passed.to_string()]))
    })?;
    let passed = checks.iter().all(|c| c.passed);
    run.json("summary.json", &json!({ "checks": checks.len(), "failed": checks.iter().filter(|c| !c.passed).count(), "passed": passed }))?;
    Ok(passed)
}
