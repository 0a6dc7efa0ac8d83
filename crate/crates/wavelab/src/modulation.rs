//! Modulated decomposition of a state near a sum of boosted solitons.
//!
//! Given `(u, uₜ)` at time `t`, find scales `λ_k` and axial offsets `y_k` such that
//! `ε = u − Σθ_kW_{ℓ_k}` is `Ḣ¹_{ℓ_k}`-orthogonal to `θ_k(ΛW_{ℓ_k})` and
//! `θ_k(∂₁W_{ℓ_k})` for every `k`, then read off the unstable coordinates
//! `z_k^± = ((ε, η), θ̃_k Z^±_{ℓ_k})_{L²}`.
//!
//! The transverse orthogonality conditions hold automatically for axially
//! symmetric data, so only `(λ_k, y_k)` are modulated.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolve::Trajectory;
use crate::grid::{norm_e, norm_y1y0, pair_l2, CylField, CylGrid, State};
use crate::profiles::{sample_soliton, SolitonConfig, SolitonQuantity as Q};
use crate::spectral::modes::z_pm_point_raw;
use crate::spectral::GroundState;

/// Options of the Newton iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeOptions {
    /// Relative orthogonality tolerance.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Tube radius: decompositions with `‖ε‖_E > δ₀` are flagged as outside.
    pub delta0: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            newton_tol: 1e-10,
            max_iter: 25,
            delta0: 0.1,
        }
    }
}

/// Result of [`decompose`].
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub t: f64,
    /// Modulated solitons (fixed `ι_k`, `ℓ_k`; fitted `λ_k`, `y_k`).
    pub solitons: Vec<SolitonConfig>,
    pub eps: CylField,
    pub eta: CylField,
    pub z_plus: Vec<f64>,
    pub z_minus: Vec<f64>,
    /// `|(ε, θ_kΛW)|/‖θ_kΛW‖` and `|(ε, θ_k∂₁W)|/‖θ_k∂₁W‖` (Ḣ¹_ℓ), two per soliton.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub eps_e: f64,
    pub eps_y1y0: f64,
    /// Whether `‖ε‖_E ≤ δ₀`.
    pub in_tube: bool,
}

impl Decomposition {
    /// `(ε, η)` as a state.
    pub fn eps_state(&self) -> State {
        State {
            u: self.eps.clone(),
            ut: self.eta.clone(),
        }
    }
}

/// Fields of one soliton needed by the Newton step.
struct Sampled {
    w: CylField,
    d1w: CylField,
    lw: CylField,
    test_l: CylField,
    test_d: CylField,
}

fn sample(grid: &Arc<CylGrid>, c: &SolitonConfig, t: f64) -> Sampled {
    let mut f = sample_soliton(grid, c, t, &[Q::W, Q::D1W, Q::LambdaW, Q::PairLambdaW, Q::PairD1W]).into_iter();
    let mut next = || f.next().expect("five sampled fields");
    Sampled {
        w: next(),
        d1w: next(),
        lw: next(),
        test_l: next(),
        test_d: next(),
    }
}

fn test_fields(grid: &Arc<CylGrid>, c: &SolitonConfig, t: f64) -> (CylField, CylField) {
    let mut f = sample_soliton(grid, c, t, &[Q::PairLambdaW, Q::PairD1W]).into_iter();
    let a = f.next().expect("two fields");
    let b = f.next().expect("two fields");
    (a, b)
}

fn residual_u(u: &CylField, parts: &[Sampled]) -> CylField {
    let mut eps = u.clone();
    for p in parts {
        eps.axpy(-1.0, &p.w);
    }
    eps
}

fn check_configs(grid: &CylGrid, cfgs: &[SolitonConfig], t: f64) -> Result<()> {
    if cfgs.is_empty() {
        return Err(LabError::InvalidParameter("decomposition needs at least one soliton".into()));
    }
    for c in cfgs {
        c.validate()?;
        let x = c.center(t);
        if !grid.contains_x1(x, 0.0) {
            return Err(LabError::Domain(format!(
                "soliton centre {x} lies outside [{}, {}]",
                grid.x1_min, grid.x1_max
            )));
        }
    }
    Ok(())
}

/// Newton iteration on `(λ_k, y_k) ↦` orthogonality pairings, then `z_k^±`.
pub fn decompose(
    s: &State,
    t: f64,
    guess: &[SolitonConfig],
    gs: &GroundState,
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    let grid = s.grid().clone();
    check_configs(&grid, guess, t)?;
    let k = guess.len();
    let mut cfgs = guess.to_vec();
    let mut iterations = 0;
    loop {
        let parts: Vec<Sampled> = cfgs.iter().map(|c| sample(&grid, c, t)).collect();
        let eps = residual_u(&s.u, &parts);
        let mut f = DVector::zeros(2 * k);
        let mut scale = vec![0.0; 2 * k];
        for (m, p) in parts.iter().enumerate() {
            f[2 * m] = pair_l2(&eps, &p.test_l);
            f[2 * m + 1] = pair_l2(&eps, &p.test_d);
            scale[2 * m] = pair_l2(&p.lw, &p.test_l).abs().sqrt();
            scale[2 * m + 1] = pair_l2(&p.d1w, &p.test_d).abs().sqrt();
        }
        let e_norm = norm_e(&State {
            u: eps.clone(),
            ut: CylField::zeros(&grid),
        });
        let residuals: Vec<f64> = (0..2 * k).map(|i| f[i].abs() / scale[i]).collect();
        let res = residuals.iter().cloned().fold(0.0, f64::max);
        // Below ‖ε‖ ~ 1e-6 the relative test would ask for sub-roundoff pairings.
        if res <= opts.newton_tol * e_norm.max(1e-6) {
            return finish(s, t, cfgs, eps, residuals, iterations, gs, opts);
        }
        if iterations >= opts.max_iter {
            return Err(LabError::Decomposition {
                iterations,
                residual: res,
            });
        }
        // Jacobian: variation of ε (all solitons) plus variation of the test fields (own soliton).
        let mut jac = DMatrix::zeros(2 * k, 2 * k);
        for (m, pm) in parts.iter().enumerate() {
            let dl = pm.lw.scaled(1.0 / cfgs[m].lambda);
            let dy = pm.d1w.scaled(1.0 / cfgs[m].lambda);
            for (r, pr) in parts.iter().enumerate() {
                jac[(2 * r, 2 * m)] = pair_l2(&dl, &pr.test_l);
                jac[(2 * r, 2 * m + 1)] = pair_l2(&dy, &pr.test_l);
                jac[(2 * r + 1, 2 * m)] = pair_l2(&dl, &pr.test_d);
                jac[(2 * r + 1, 2 * m + 1)] = pair_l2(&dy, &pr.test_d);
            }
            let c = cfgs[m];
            let hl = 1e-4 * c.lambda;
            let hy = 1e-4 * c.lambda;
            let vary = |dl: f64, dy: f64| {
                let mut cc = c;
                cc.lambda += dl;
                cc.y1 += dy;
                test_fields(&grid, &cc, t)
            };
            let (lp, dp) = vary(hl, 0.0);
            let (lm, dm) = vary(-hl, 0.0);
            jac[(2 * m, 2 * m)] += (pair_l2(&eps, &lp) - pair_l2(&eps, &lm)) / (2.0 * hl);
            jac[(2 * m + 1, 2 * m)] += (pair_l2(&eps, &dp) - pair_l2(&eps, &dm)) / (2.0 * hl);
            let (lp, dp) = vary(0.0, hy);
            let (lm, dm) = vary(0.0, -hy);
            jac[(2 * m, 2 * m + 1)] += (pair_l2(&eps, &lp) - pair_l2(&eps, &lm)) / (2.0 * hy);
            jac[(2 * m + 1, 2 * m + 1)] += (pair_l2(&eps, &dp) - pair_l2(&eps, &dm)) / (2.0 * hy);
        }
        let step = jac
            .clone()
            .lu()
            .solve(&(-&f))
            .filter(|v| v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| LabError::Singular(format!("modulation Jacobian is singular: {jac}")))?;
        for (m, c) in cfgs.iter_mut().enumerate() {
            c.lambda += step[2 * m];
            c.y1 += step[2 * m + 1];
            if !(c.lambda > 0.0) || !c.y1.is_finite() {
                return Err(LabError::Decomposition {
                    iterations: iterations + 1,
                    residual: res,
                });
            }
        }
        check_configs(&grid, &cfgs, t).map_err(|_| LabError::Decomposition {
            iterations: iterations + 1,
            residual: res,
        })?;
        let step_norm = step.iter().map(|v| v.abs()).fold(0.0, f64::max);
        iterations += 1;
        if step_norm < 1e-15 {
            let parts: Vec<Sampled> = cfgs.iter().map(|c| sample(&grid, c, t)).collect();
            let eps = residual_u(&s.u, &parts);
            let residuals: Vec<f64> = parts
                .iter()
                .flat_map(|p| {
                    [
                        pair_l2(&eps, &p.test_l).abs() / pair_l2(&p.lw, &p.test_l).abs().sqrt(),
                        pair_l2(&eps, &p.test_d).abs() / pair_l2(&p.d1w, &p.test_d).abs().sqrt(),
                    ]
                })
                .collect();
            return finish(s, t, cfgs, eps, residuals, iterations, gs, opts);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    s: &State,
    t: f64,
    cfgs: Vec<SolitonConfig>,
    eps: CylField,
    residuals: Vec<f64>,
    iterations: usize,
    gs: &GroundState,
    opts: &DecomposeOptions,
) -> Result<Decomposition> {
    let grid = s.grid().clone();
    let mut eta = s.ut.clone();
    for c in &cfgs {
        let d1w = sample_soliton(&grid, c, t, &[Q::D1W]).pop().expect("one field");
        eta.axpy(c.ell / c.lambda, &d1w);
    }
    let e = State { u: eps, ut: eta };
    let mut z_plus = Vec::with_capacity(cfgs.len());
    let mut z_minus = Vec::with_capacity(cfgs.len());
    for c in &cfgs {
        z_plus.push(z_pairing(&e, c, t, gs, 1.0)?);
        z_minus.push(z_pairing(&e, c, t, gs, -1.0)?);
    }
    let eps_e = norm_e(&e);
    let eps_y1y0 = norm_y1y0(&e);
    Ok(Decomposition {
        t,
        solitons: cfgs,
        eps: e.u,
        eta: e.ut,
        z_plus,
        z_minus,
        residuals,
        iterations,
        eps_e,
        eps_y1y0,
        in_tube: eps_e <= opts.delta0,
    })
}

/// `((ε, η), θ̃ Z^±_ℓ)_{L²}` for one soliton, `θ̃(G, H) = (θG/λ, θH)`.
pub fn z_pairing(e: &State, c: &SolitonConfig, t: f64, gs: &GroundState, sign: f64) -> Result<f64> {
    let grid = e.grid().clone();
    let nr = grid.n_rho;
    let amp = c.iota * c.lambda.powf(-1.5);
    let center = c.center(t);
    let rows: Result<Vec<f64>> = (0..grid.n_x1)
        .into_par_iter()
        .map(|i| {
            let x = (grid.x1(i) - center) / c.lambda;
            let wx = grid.x1_weights()[i];
            let mut acc = 0.0;
            for j in 0..nr {
                let (z1, z2) = z_pm_point_raw(gs, c.ell, sign, x, grid.rho(j) / c.lambda)?;
                let k = grid.idx(i, j);
                acc += grid.rho_weights()[j] * (e.u.values[k] * z1 / c.lambda + e.ut.values[k] * z2);
            }
            Ok(acc * wx)
        })
        .collect();
    Ok(crate::grid::SPHERE3 * amp * rows?.iter().sum::<f64>())
}

/// `(Mod_ε, Mod_η)` for modulation rates `λ̇_k` and `ẏ_k`.
pub fn mod_vector(d: &Decomposition, lambdadot: &[f64], ydot: &[f64]) -> Result<State> {
    let k = d.solitons.len();
    if lambdadot.len() != k || ydot.len() != k {
        return Err(LabError::InvalidParameter(format!(
            "expected {k} rates, got {} and {}",
            lambdadot.len(),
            ydot.len()
        )));
    }
    let grid = d.eps.grid.clone();
    let mut out = State::zeros(&grid);
    for (m, c) in d.solitons.iter().enumerate() {
        let f = sample_soliton(&grid, c, d.t, &[Q::LambdaW, Q::D1W, Q::D1LambdaW, Q::D11W]);
        let l = c.lambda;
        out.u.axpy(lambdadot[m] / l, &f[0]);
        out.u.axpy(ydot[m] / l, &f[1]);
        out.ut.axpy(-lambdadot[m] / (l * l) * c.ell, &f[2]);
        out.ut.axpy(-ydot[m] / (l * l) * c.ell, &f[3]);
    }
    Ok(out)
}

/// One sample of the parameter time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamRow {
    pub t: f64,
    pub lambda: Vec<f64>,
    pub y: Vec<f64>,
    pub z_plus: Vec<f64>,
    pub z_minus: Vec<f64>,
    pub eps_e: f64,
    pub eps_y1y0: f64,
}

impl ParamRow {
    fn from(d: &Decomposition) -> Self {
        ParamRow {
            t: d.t,
            lambda: d.solitons.iter().map(|c| c.lambda).collect(),
            y: d.solitons.iter().map(|c| c.y1).collect(),
            z_plus: d.z_plus.clone(),
            z_minus: d.z_minus.clone(),
            eps_e: d.eps_e,
            eps_y1y0: d.eps_y1y0,
        }
    }
}

/// Finite-difference rates and the modulation-law diagnostics at an interior sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub t: f64,
    pub lambda_dot: Vec<f64>,
    pub y_dot: Vec<f64>,
    pub z_plus_dot: Vec<f64>,
    pub z_minus_dot: Vec<f64>,
    /// `Σ(|λ̇_k| + |ẏ_k|) / ‖ε‖_E`.
    pub param_ratio: f64,
    /// `|ż_k^± ∓ (√λ₀/λ_k)√(1−ℓ_k²) z_k^±| / (‖ε‖² + ‖ε‖/t + 1/t³)`, per soliton.
    pub z_plus_ratio: Vec<f64>,
    pub z_minus_ratio: Vec<f64>,
}

/// Modulation parameters along a trajectory.
#[derive(Clone, Debug, Default)]
pub struct ParameterSeries {
    pub speeds: Vec<f64>,
    pub rows: Vec<ParamRow>,
    /// First time at which the decomposition failed, if any.
    pub exit_time: Option<f64>,
    pub exit_reason: Option<String>,
}

impl ParameterSeries {
    /// Central-difference rates at interior samples.
    pub fn rates(&self, lambda0: f64) -> Vec<RateRow> {
        let kappa = lambda0.sqrt();
        let mut out = Vec::new();
        for w in self.rows.windows(3) {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let h = c.t - a.t;
            if h == 0.0 {
                continue;
            }
            let diff = |f: &dyn Fn(&ParamRow) -> &Vec<f64>| -> Vec<f64> {
                f(c).iter().zip(f(a)).map(|(x, y)| (x - y) / h).collect()
            };
            let lambda_dot = diff(&|r| &r.lambda);
            let y_dot = diff(&|r| &r.y);
            let z_plus_dot = diff(&|r| &r.z_plus);
            let z_minus_dot = diff(&|r| &r.z_minus);
            let e = b.eps_e;
            let tt = b.t.abs();
            let bound = e * e + e / tt + tt.powi(-3);
            let ratio = |dots: &[f64], z: &[f64], sign: f64| -> Vec<f64> {
                dots.iter()
                    .zip(z)
                    .enumerate()
                    .map(|(k, (d, z))| {
                        let a = (1.0 - self.speeds[k] * self.speeds[k]).sqrt();
                        (d - sign * kappa / b.lambda[k] * a * z).abs() / bound
                    })
                    .collect()
            };
            let param_ratio = lambda_dot.iter().chain(&y_dot).map(|v| v.abs()).sum::<f64>() / e;
            out.push(RateRow {
                t: b.t,
                z_plus_ratio: ratio(&z_plus_dot, &b.z_plus, 1.0),
                z_minus_ratio: ratio(&z_minus_dot, &b.z_minus, -1.0),
                lambda_dot,
                y_dot,
                z_plus_dot,
                z_minus_dot,
                param_ratio,
            });
        }
        out
    }

    /// CSV with columns `t`, per-soliton `lambda_k, y_k, zplus_k, zminus_k`, then `eps_E, eps_Y1Y0`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let k = self.speeds.len();
        let mut header = vec!["t".to_string()];
        for m in 1..=k {
            header.extend([
                format!("lambda_{m}"),
                format!("y_{m}"),
                format!("zplus_{m}"),
                format!("zminus_{m}"),
            ]);
        }
        header.extend(["eps_E".to_string(), "eps_Y1Y0".to_string()]);
        wr.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.t];
            for m in 0..k {
                rec.extend([r.lambda[m], r.y[m], r.z_plus[m], r.z_minus[m]]);
            }
            rec.extend([r.eps_e, r.eps_y1y0]);
            wr.write_record(rec.iter().map(|v| format!("{v:.15e}"))).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> LabError {
    LabError::Io(e.to_string())
}

/// Streaming decomposition that reuses the previous parameters as the next guess.
#[derive(Clone, Debug)]
pub struct Tracker {
    gs: Arc<GroundState>,
    opts: DecomposeOptions,
    current: Vec<SolitonConfig>,
    pub series: ParameterSeries,
    pub last: Option<Decomposition>,
}

impl Tracker {
    pub fn new(guess: Vec<SolitonConfig>, gs: Arc<GroundState>, opts: DecomposeOptions) -> Self {
        Tracker {
            gs,
            opts,
            series: ParameterSeries {
                speeds: guess.iter().map(|c| c.ell).collect(),
                ..Default::default()
            },
            current: guess,
            last: None,
        }
    }

    /// Decompose `s` at time `t` and append the row. Failures set the exit time.
    pub fn push(&mut self, t: f64, s: &State) -> Result<&Decomposition> {
        match decompose(s, t, &self.current, &self.gs, &self.opts) {
            Ok(d) => {
                self.current = d.solitons.clone();
                self.series.rows.push(ParamRow::from(&d));
                self.last = Some(d);
                Ok(self.last.as_ref().expect("just stored"))
            }
            Err(e) => {
                if self.series.exit_time.is_none() {
                    self.series.exit_time = Some(t);
                    self.series.exit_reason = Some(e.to_string());
                }
                Err(e)
            }
        }
    }
}

/// Decompose every `stride`-th stored snapshot of a trajectory.
///
/// A failed decomposition truncates the series and records the exit time.
pub fn track_parameters(
    traj: &Trajectory,
    stride: usize,
    guess: &[SolitonConfig],
    gs: Arc<GroundState>,
    opts: &DecomposeOptions,
) -> ParameterSeries {
    let mut tr = Tracker::new(guess.to_vec(), gs, *opts);
    for (t, s) in traj.snapshots.iter().step_by(stride.max(1)) {
        if tr.push(*t, s).is_err() {
            break;
        }
    }
    tr.series
}
