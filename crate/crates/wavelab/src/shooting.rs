//! Backward shooting towards a multi-soliton.
//!
//! Data at the late time `S` is a sum of boosted solitons corrected along the
//! unstable modes. The solution is integrated backwards to `T₀` while the
//! modulated decomposition is monitored against the bootstrap bounds. The
//! coefficients `ξ_k = z_k^−(S)` are searched so that the trajectory survives.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolve::{evolve_interval, Control, EvolveConfig, SpongeConfig, DEFAULT_CFL};
use crate::grid::{CylGrid, State};
use crate::interactions::{fit_power_law, PowerFit};
use crate::modulation::{decompose, DecomposeOptions, Decomposition, ParameterSeries, Tracker};
use crate::profiles::{eval_sum_state, SolitonConfig};
use crate::spectral::modes::z_pm_point_raw;
use crate::spectral::GroundState;

/// Coefficients of the four bootstrap bounds.
///
/// At time `t` the bounds are
/// `Σ|λ_k − λ_k^∞| + |y_k − y_k^∞| ≤ param/t`,
/// `Σ(z_k^±)² ≤ z/t⁵` (separately for each sign),
/// `‖ε‖_E ≤ eps_e/t²` and `‖ε‖_{Y¹×Y⁰} ≤ eps_y/t^(1/2)`.
/// Unset coefficients default to `C*²`, `1`, `C*` and `C*²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bootstrap {
    pub c_star: f64,
    pub param: Option<f64>,
    pub z: Option<f64>,
    pub eps_e: Option<f64>,
    pub eps_y: Option<f64>,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Bootstrap {
            c_star: 10.0,
            param: None,
            z: None,
            eps_e: None,
            eps_y: None,
        }
    }
}

/// Resolved bounds at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub param: f64,
    pub z: f64,
    pub eps_e: f64,
    pub eps_y: f64,
}

impl Bootstrap {
    fn validate(&self) -> Result<()> {
        let all = [
            Some(self.c_star),
            self.param,
            self.z,
            self.eps_e,
            self.eps_y,
        ];
        if all.iter().flatten().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(LabError::InvalidParameter(
                "bootstrap coefficients must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// Bounds at time `t`.
    pub fn thresholds(&self, t: f64) -> Thresholds {
        let c = self.c_star;
        Thresholds {
            param: self.param.unwrap_or(c * c) / t,
            z: self.z.unwrap_or(1.0) / t.powi(5),
            eps_e: self.eps_e.unwrap_or(c) / (t * t),
            eps_y: self.eps_y.unwrap_or(c * c) / t.sqrt(),
        }
    }
}

/// One shot: data time, target time, solitons at infinity and mode coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotSpec {
    /// Data time `S`.
    #[serde(rename = "S")]
    pub s: f64,
    /// Target time `T₀ < S`.
    #[serde(rename = "T0")]
    pub t0: f64,
    /// `(ι_k, λ_k^∞, y_k^∞, ℓ_k)`.
    pub solitons: Vec<SolitonConfig>,
    /// `ζ_k^+`, one per soliton (zeros when empty).
    #[serde(default)]
    pub zeta_plus: Vec<f64>,
    /// `ζ_k^−`, one per soliton (zeros when empty).
    #[serde(default)]
    pub zeta_minus: Vec<f64>,
    #[serde(default)]
    pub bootstrap: Bootstrap,
    /// Time between decompositions along the shot.
    #[serde(default = "default_monitor_interval")]
    pub monitor_interval: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_sponge")]
    pub sponge: Option<SpongeConfig>,
    /// Allowed size of `|ζ|` in units of `S^(−5/2)`.
    #[serde(default = "default_zeta_clamp")]
    pub zeta_clamp: f64,
    #[serde(default)]
    pub decompose: DecomposeOptions,
}

fn default_monitor_interval() -> f64 {
    0.5
}
fn default_cfl() -> f64 {
    DEFAULT_CFL
}
fn default_sponge() -> Option<SpongeConfig> {
    Some(SpongeConfig::default())
}
fn default_zeta_clamp() -> f64 {
    100.0
}

impl ShotSpec {
    /// Shot with zero mode coefficients and default settings.
    pub fn new(s: f64, t0: f64, solitons: Vec<SolitonConfig>) -> Self {
        let k = solitons.len();
        ShotSpec {
            s,
            t0,
            solitons,
            zeta_plus: vec![0.0; k],
            zeta_minus: vec![0.0; k],
            bootstrap: Bootstrap::default(),
            monitor_interval: default_monitor_interval(),
            cfl: default_cfl(),
            sponge: default_sponge(),
            zeta_clamp: default_zeta_clamp(),
            decompose: DecomposeOptions::default(),
        }
    }

    /// Check times, solitons, coefficient lengths and the ζ clamp.
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.s > self.t0 && self.s.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "need 0 < T0 < S, got T0 = {}, S = {}",
                self.t0, self.s
            )));
        }
        if self.solitons.is_empty() {
            return Err(LabError::InvalidParameter("a shot needs at least one soliton".into()));
        }
        for c in &self.solitons {
            c.validate()?;
        }
        let k = self.solitons.len();
        for (name, v) in [("zeta_plus", &self.zeta_plus), ("zeta_minus", &self.zeta_minus)] {
            if !v.is_empty() && v.len() != k {
                return Err(LabError::InvalidParameter(format!(
                    "{name} has {} entries for {k} solitons",
                    v.len()
                )));
            }
        }
        if !(self.monitor_interval > 0.0) {
            return Err(LabError::InvalidParameter("monitor_interval must be positive".into()));
        }
        if !(self.zeta_clamp > 0.0) {
            return Err(LabError::InvalidParameter("zeta_clamp must be positive".into()));
        }
        let bound = self.zeta_bound();
        if let Some(z) = self.zeta_plus.iter().chain(&self.zeta_minus).find(|z| !(z.abs() <= bound)) {
            return Err(LabError::InvalidParameter(format!(
                "mode coefficient {z} exceeds the clamp {bound} = {}·S^(-5/2)",
                self.zeta_clamp
            )));
        }
        self.bootstrap.validate()
    }

    /// `zeta_clamp · S^(−5/2)`.
    pub fn zeta_bound(&self) -> f64 {
        self.zeta_clamp * self.s.powf(-2.5)
    }

    fn coeff(v: &[f64], k: usize) -> f64 {
        v.get(k).copied().unwrap_or(0.0)
    }
}

/// `θ_k 𝐙^±_{ℓ_k}` at time `t` on the grid, applied componentwise.
pub fn mode_state(grid: &Arc<CylGrid>, c: &SolitonConfig, t: f64, gs: &GroundState, sign: f64) -> Result<State> {
    let mut s = State::zeros(grid);
    let nr = grid.n_rho;
    let amp = c.iota * c.lambda.powf(-1.5);
    let center = c.center(t);
    let rows: Result<Vec<()>> = s
        .u
        .values
        .par_chunks_mut(nr)
        .zip(s.ut.values.par_chunks_mut(nr))
        .enumerate()
        .map(|(i, (a, b))| {
            let x = (grid.x1(i) - center) / c.lambda;
            for j in 0..nr {
                let (z1, z2) = z_pm_point_raw(gs, c.ell, sign, x, grid.rho(j) / c.lambda).map_err(|e| match e {
                    LabError::TiltClamp(m) => LabError::Domain(m),
                    other => other,
                })?;
                a[j] = amp * z1;
                b[j] = amp * z2;
            }
            Ok(())
        })
        .collect();
    rows?;
    Ok(s)
}

/// Margin (in units of `λ_k`) that every core must keep from the sponge at time `S`.
const CORE_MARGIN: f64 = 10.0;

/// `Σ_k[θ_kW_{ℓ_k} + ζ_k^+θ_k𝐙^+ + ζ_k^−θ_k𝐙^−](S)` on the grid.
pub fn build_data(spec: &ShotSpec, grid: &Arc<CylGrid>, gs: &GroundState) -> Result<State> {
    spec.validate()?;
    let width = spec.sponge.map_or(0.0, |s| s.width_frac * (grid.x1_max - grid.x1_min));
    for c in &spec.solitons {
        let x = c.center(spec.s);
        if !grid.contains_x1(x, width + CORE_MARGIN * c.lambda) {
            return Err(LabError::Domain(format!(
                "soliton core at x1 = {x} (time S = {}) is too close to the boundary of [{}, {}]",
                spec.s, grid.x1_min, grid.x1_max
            )));
        }
    }
    let mut s = eval_sum_state(grid, &spec.solitons, spec.s)?;
    for (k, c) in spec.solitons.iter().enumerate() {
        for (sign, coeffs) in [(1.0, &spec.zeta_plus), (-1.0, &spec.zeta_minus)] {
            let z = ShotSpec::coeff(coeffs, k);
            if z != 0.0 {
                s.axpy(z, &mode_state(grid, c, spec.s, gs, sign)?);
            }
        }
    }
    Ok(s)
}

/// Result of [`calibrate_zeta`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub zeta_plus: Vec<f64>,
    pub zeta_minus: Vec<f64>,
    /// `max_k |z_k^−(S) − ξ_k|, |z_k^+(S)|` after the last iteration.
    pub residual: f64,
    pub iterations: usize,
    /// Largest `|ζ|` in units of `S^(−5/2)`.
    pub zeta_scale: f64,
}

/// Absolute target residual of the calibration.
pub const CALIBRATION_TOL: f64 = 1e-10;
/// Residual below which the chord iteration stops early.
const CALIBRATION_FLOOR: f64 = 1e-15;

/// Reusable Newton solver for `ζ ↦ (z^−(S) − ξ, z^+(S))`.
///
/// The Jacobian is computed once at `ζ = 0` by finite differences and then
/// reused (chord iteration); it is recomputed only if the chord stalls.
#[derive(Clone, Debug)]
pub struct Calibrator {
    spec: ShotSpec,
    grid: Arc<CylGrid>,
    gs: Arc<GroundState>,
    jac: Option<DMatrix<f64>>,
    /// `(z^−(S), z^+(S))` at `ζ = 0`.
    base: Option<DVector<f64>>,
    /// Number of decompositions performed so far.
    pub evaluations: usize,
}

impl Calibrator {
    pub fn new(spec: &ShotSpec, grid: Arc<CylGrid>, gs: Arc<GroundState>) -> Result<Self> {
        spec.validate()?;
        Ok(Calibrator {
            spec: spec.clone(),
            grid,
            gs,
            jac: None,
            base: None,
            evaluations: 0,
        })
    }

    /// `(z^−(S), z^+(S))` stacked, for coefficients `v = (ζ^−, ζ^+)`.
    fn eval(&mut self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let k = self.spec.solitons.len();
        let mut spec = self.spec.clone();
        spec.zeta_minus = (0..k).map(|m| v[m]).collect();
        spec.zeta_plus = (0..k).map(|m| v[k + m]).collect();
        // Coefficients are bounded after the solve; intermediate iterates may exceed the clamp.
        spec.zeta_clamp = f64::INFINITY;
        let data = build_data(&spec, &self.grid, &self.gs)?;
        let d = decompose(&data, spec.s, &spec.solitons, &self.gs, &spec.decompose)?;
        self.evaluations += 1;
        Ok(DVector::from_iterator(
            2 * k,
            d.z_minus.iter().chain(&d.z_plus).copied(),
        ))
    }

    fn jacobian(&mut self, at: &DVector<f64>, base: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = at.len();
        let h = 1e-3 * self.spec.s.powf(-2.5);
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut p = at.clone();
            p[c] += h;
            let fp = self.eval(&p)?;
            jac.set_column(c, &((fp - base) / h));
        }
        Ok(jac)
    }

    /// Coefficients with `z^−(S) = ξ` and `z^+(S) = 0`.
    pub fn calibrate(&mut self, xi: &[f64]) -> Result<Calibration> {
        let k = self.spec.solitons.len();
        if xi.len() != k {
            return Err(LabError::InvalidParameter(format!(
                "expected {k} targets, got {}",
                xi.len()
            )));
        }
        let target = DVector::from_iterator(2 * k, xi.iter().copied().chain(std::iter::repeat(0.0).take(k)));
        if self.jac.is_none() {
            let zero = DVector::zeros(2 * k);
            let base = self.eval(&zero)?;
            self.jac = Some(self.jacobian(&zero, &base)?);
            self.base = Some(base);
        }
        let solve = |jac: &DMatrix<f64>, rhs: &DVector<f64>| {
            jac.clone()
                .lu()
                .solve(rhs)
                .ok_or_else(|| LabError::Singular("zeta calibration Jacobian is singular".into()))
        };
        // Affine prediction from ζ = 0, then chord corrections.
        let base = self.base.clone().expect("base computed with the Jacobian");
        let mut v = solve(self.jac.as_ref().expect("jacobian computed"), &(&target - base))?;
        let mut f = self.eval(&v)? - &target;
        let mut iterations = 1;
        let mut refreshed = false;
        let max_iter = 12;
        loop {
            let res = f.amax();
            if res < CALIBRATION_FLOOR {
                break;
            }
            if iterations >= max_iter {
                if res < CALIBRATION_TOL {
                    break;
                }
                return Err(LabError::NonConvergence {
                    message: format!("zeta calibration residual {res:e} after {iterations} iterations"),
                    trace: vec![res],
                });
            }
            let step = solve(self.jac.as_ref().expect("jacobian computed"), &(-&f))?;
            let nv = &v + step;
            let nf = self.eval(&nv)? - &target;
            iterations += 1;
            if nf.amax() > 0.5 * res {
                if res < CALIBRATION_TOL {
                    // Stagnation at the roundoff level of the pairings.
                    break;
                }
                if !refreshed {
                    // The chord stalled: refresh the Jacobian at the current point.
                    let here = &f + &target;
                    self.jac = Some(self.jacobian(&v, &here)?);
                    refreshed = true;
                    continue;
                }
            }
            v = nv;
            f = nf;
        }
        let zeta_minus: Vec<f64> = (0..k).map(|m| v[m]).collect();
        let zeta_plus: Vec<f64> = (0..k).map(|m| v[k + m]).collect();
        let zeta_scale = v.amax() / self.spec.s.powf(-2.5);
        Ok(Calibration {
            zeta_plus,
            zeta_minus,
            residual: f.amax(),
            iterations,
            zeta_scale,
        })
    }

    /// A copy of the shot with calibrated coefficients for targets `ξ`.
    pub fn calibrated_spec(&mut self, xi: &[f64]) -> Result<(ShotSpec, Calibration)> {
        let cal = self.calibrate(xi)?;
        let mut spec = self.spec.clone();
        spec.zeta_minus = cal.zeta_minus.clone();
        spec.zeta_plus = cal.zeta_plus.clone();
        Ok((spec, cal))
    }
}

/// Newton solve for `ζ` such that `z_k^−(S) = ξ_k` and `z_k^+(S) = 0`.
pub fn calibrate_zeta(spec: &ShotSpec, grid: Arc<CylGrid>, gs: Arc<GroundState>, xi: &[f64]) -> Result<Calibration> {
    Calibrator::new(spec, grid, gs)?.calibrate(xi)
}

/// Why a shot ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    ReachedT0,
    ZMinusExit,
    ZPlusExit,
    EpsExit,
    ParamExit,
    DecompositionFailed,
    BlowUp,
}

impl ExitReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExitReason::ReachedT0 => "reached_T0",
            ExitReason::ZMinusExit => "z_minus_exit",
            ExitReason::ZPlusExit => "z_plus_exit",
            ExitReason::EpsExit => "eps_exit",
            ExitReason::ParamExit => "param_exit",
            ExitReason::DecompositionFailed => "decomposition_failed",
            ExitReason::BlowUp => "blow_up",
        }
    }
}

/// Bootstrap quantities at one monitored time, as ratios to their bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Monitor {
    pub t: f64,
    /// `Σ|λ_k − λ_k^∞| + |y_k − y_k^∞|`.
    pub param_drift: f64,
    pub z_minus_sq: f64,
    pub z_plus_sq: f64,
    pub eps_e: f64,
    pub eps_y1y0: f64,
    pub thresholds: Thresholds,
}

impl Monitor {
    /// Evaluate every bound from one decomposition.
    pub fn from_decomposition(d: &Decomposition, solitons: &[SolitonConfig], bs: &Bootstrap) -> Self {
        let param_drift = d
            .solitons
            .iter()
            .zip(solitons)
            .map(|(a, b)| (a.lambda - b.lambda).abs() + (a.y1 - b.y1).abs())
            .sum();
        Monitor {
            t: d.t,
            param_drift,
            z_minus_sq: d.z_minus.iter().map(|z| z * z).sum(),
            z_plus_sq: d.z_plus.iter().map(|z| z * z).sum(),
            eps_e: d.eps_e,
            eps_y1y0: d.eps_y1y0,
            thresholds: bs.thresholds(d.t),
        }
    }

    /// `ln(value/bound)` for each bound, labelled by the exit it would cause.
    pub fn log_ratios(&self) -> [(ExitReason, f64); 5] {
        let th = &self.thresholds;
        let lr = |v: f64, b: f64| if v > 0.0 { (v / b).ln() } else { f64::NEG_INFINITY };
        [
            (ExitReason::ZMinusExit, lr(self.z_minus_sq, th.z)),
            (ExitReason::ZPlusExit, lr(self.z_plus_sq, th.z)),
            (ExitReason::EpsExit, lr(self.eps_e, th.eps_e)),
            (ExitReason::EpsExit, lr(self.eps_y1y0, th.eps_y)),
            (ExitReason::ParamExit, lr(self.param_drift, th.param)),
        ]
    }

    /// Largest log-ratio and the exit it names.
    pub fn worst(&self) -> (ExitReason, f64) {
        self.log_ratios()
            .into_iter()
            .fold((ExitReason::ReachedT0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }
}

/// Outcome of [`run_shot`].
#[derive(Clone, Debug)]
pub struct ShotResult {
    /// Time at which the first bound is crossed, interpolated in log-ratio
    /// between the last passing and the first failing monitor; `T₀` on success.
    pub exit_time: f64,
    pub exit_reason: ExitReason,
    /// Time of the first failing monitor.
    pub check_time: f64,
    pub series: ParameterSeries,
    pub monitors: Vec<Monitor>,
    /// `z_k^−` at the last successful decomposition.
    pub z_minus_at_exit: Vec<f64>,
    pub steps: usize,
}

impl ShotResult {
    pub fn reached(&self) -> bool {
        self.exit_reason == ExitReason::ReachedT0
    }

    /// `d/dt (t⁵ Σ(z_k^−)²)` at the last monitored time, by a one-sided difference.
    pub fn transversality(&self) -> Option<f64> {
        let n = self.monitors.len();
        if n < 2 {
            return None;
        }
        let (a, b) = (&self.monitors[n - 2], &self.monitors[n - 1]);
        let g = |m: &Monitor| m.t.powi(5) * m.z_minus_sq;
        Some((g(b) - g(a)) / (b.t - a.t))
    }

    /// Power-law fit of `‖ε(t)‖_E` over monitored times in `[t_lo, t_hi]`.
    pub fn eps_slope(&self, t_lo: f64, t_hi: f64) -> Result<PowerFit> {
        let pts: Vec<(f64, f64)> = self
            .series
            .rows
            .iter()
            .filter(|r| r.t >= t_lo && r.t <= t_hi)
            .map(|r| (r.t, r.eps_e))
            .collect();
        fit_power_law(&pts)
    }

    /// Power-law fit of `|y_k(t) − y_k^∞|` over monitored times in `[t_lo, t_hi]`.
    pub fn y_slope(&self, k: usize, y_inf: f64, t_lo: f64, t_hi: f64) -> Result<PowerFit> {
        let pts: Vec<(f64, f64)> = self
            .series
            .rows
            .iter()
            .filter(|r| r.t >= t_lo && r.t <= t_hi)
            .map(|r| (r.t, (r.y[k] - y_inf).abs()))
            .collect();
        fit_power_law(&pts)
    }

    /// Parameter series of the shot as CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.series.write_csv(w)
    }
}

/// Integrate the data of `spec` backwards from `S` to `T₀`, monitoring the bootstrap.
pub fn run_shot(spec: &ShotSpec, grid: Arc<CylGrid>, gs: Arc<GroundState>) -> Result<ShotResult> {
    run_shot_observed(spec, grid, gs, |_| Ok(()))
}

/// [`run_shot`] that also hands every successful decomposition to `observe`.
pub fn run_shot_observed<F>(spec: &ShotSpec, grid: Arc<CylGrid>, gs: Arc<GroundState>, mut observe: F) -> Result<ShotResult>
where
    F: FnMut(&Decomposition) -> Result<()>,
{
    let data = build_data(spec, &grid, &gs)?;
    let dt = grid.dt_bound(spec.cfl);
    let stride = (spec.monitor_interval / dt).round().max(1.0) as usize;
    let cfg = EvolveConfig {
        cfl: spec.cfl,
        nonlinear: true,
        sponge: spec.sponge,
        stride,
        snapshot_stride: None,
        reference: Some(spec.solitons.clone()),
    };
    let mut tracker = Tracker::new(spec.solitons.clone(), gs, spec.decompose);
    let mut monitors: Vec<Monitor> = Vec::new();
    let mut exit: Option<(ExitReason, f64)> = None;
    let outcome = evolve_interval(data, spec.s, spec.t0, &cfg, |t, st| {
        let d = match tracker.push(t, st) {
            Ok(d) => d,
            Err(_) => {
                exit = Some((ExitReason::DecompositionFailed, t));
                return Ok(Control::Stop);
            }
        };
        observe(d)?;
        let m = Monitor::from_decomposition(d, &spec.solitons, &spec.bootstrap);
        let (reason, worst) = m.worst();
        monitors.push(m);
        if worst > 0.0 {
            exit = Some((reason, t));
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    });
    let steps = match outcome {
        Ok(traj) => traj.steps,
        Err(LabError::BlowUp { t }) => {
            exit = Some((ExitReason::BlowUp, t));
            0
        }
        Err(e) => return Err(e),
    };
    let z_minus_at_exit = tracker.last.as_ref().map(|d| d.z_minus.clone()).unwrap_or_default();
    let (exit_reason, check_time, exit_time) = match exit {
        None => (ExitReason::ReachedT0, spec.t0, spec.t0),
        Some((r, t)) => (r, t, interpolate_exit(&monitors, r, t)),
    };
    Ok(ShotResult {
        exit_time: exit_time.clamp(spec.t0, spec.s),
        exit_reason,
        check_time,
        series: tracker.series,
        monitors,
        z_minus_at_exit,
        steps,
    })
}

/// Zero crossing of the worst log-ratio between the last two monitors.
fn interpolate_exit(monitors: &[Monitor], reason: ExitReason, t: f64) -> f64 {
    let n = monitors.len();
    if !matches!(
        reason,
        ExitReason::ZMinusExit | ExitReason::ZPlusExit | ExitReason::EpsExit | ExitReason::ParamExit
    ) || n < 2
    {
        return t;
    }
    let (a, b) = (&monitors[n - 2], &monitors[n - 1]);
    let (ga, gb) = (a.worst().1, b.worst().1);
    if !(ga.is_finite() && gb > ga) {
        return t;
    }
    a.t + (b.t - a.t) * (-ga) / (gb - ga)
}

/// Search strategy over the targets `ξ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    /// Bisection on each `ξ_k` using the sign of `z_k^−` at exit.
    Bisection,
    /// Compass search maximizing the exit time with a shrinking radius.
    Pattern,
}

/// Options of [`search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchOptions {
    /// `None` selects bisection for one soliton and pattern search otherwise.
    pub method: Option<SearchMethod>,
    /// Maximum number of shots.
    pub budget: usize,
    /// Half-width of the initial box in units of `S^(−5/2)`.
    pub radius: f64,
    /// Centre of the initial box (the origin when empty).
    pub centre: Vec<f64>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            method: None,
            budget: 40,
            radius: 1.0,
            centre: Vec::new(),
        }
    }
}

/// One evaluated shot of a search or scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShotRecord {
    pub xi: Vec<f64>,
    pub exit_time: f64,
    pub exit_reason: ExitReason,
    pub z_minus_at_exit: Vec<f64>,
}

/// Outcome of [`search`].
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub xi_star: Vec<f64>,
    pub best: ShotResult,
    pub calibration: Calibration,
    pub shots: Vec<ShotRecord>,
    /// Whether the best shot reached `T₀`.
    pub converged: bool,
    /// Half-width of the search region at termination.
    pub radius: f64,
    pub method: SearchMethod,
}

/// Shared state of a search: calibration and the shot log.
struct Shooter {
    cal: Calibrator,
    grid: Arc<CylGrid>,
    gs: Arc<GroundState>,
    shots: Vec<ShotRecord>,
    best: Option<(Vec<f64>, ShotResult, Calibration)>,
    budget: usize,
}

impl Shooter {
    fn shoot(&mut self, xi: &[f64]) -> Result<ShotResult> {
        let (spec, cal) = self.cal.calibrated_spec(xi)?;
        spec.validate()?;
        let r = run_shot(&spec, self.grid.clone(), self.gs.clone())?;
        self.shots.push(ShotRecord {
            xi: xi.to_vec(),
            exit_time: r.exit_time,
            exit_reason: r.exit_reason,
            z_minus_at_exit: r.z_minus_at_exit.clone(),
        });
        let better = match &self.best {
            None => true,
            Some((_, b, _)) => r.exit_time < b.exit_time,
        };
        if better {
            self.best = Some((xi.to_vec(), r.clone(), cal));
        }
        Ok(r)
    }

    fn exhausted(&self) -> bool {
        self.shots.len() >= self.budget
    }

    fn done(&self) -> bool {
        self.best.as_ref().map_or(false, |b| b.1.reached()) || self.exhausted()
    }
}

/// Search `ξ` so that the backward shot reaches `T₀`.
pub fn search(spec: &ShotSpec, grid: Arc<CylGrid>, gs: Arc<GroundState>, opts: &SearchOptions) -> Result<SearchResult> {
    spec.validate()?;
    let k = spec.solitons.len();
    if opts.budget == 0 || !(opts.radius > 0.0) {
        return Err(LabError::InvalidParameter("search needs a positive budget and radius".into()));
    }
    let method = opts.method.unwrap_or(if k == 1 {
        SearchMethod::Bisection
    } else {
        SearchMethod::Pattern
    });
    let mut sh = Shooter {
        cal: Calibrator::new(spec, grid.clone(), gs.clone())?,
        grid,
        gs,
        shots: Vec::new(),
        best: None,
        budget: opts.budget,
    };
    let unit = spec.s.powf(-2.5);
    let centre = if opts.centre.is_empty() {
        vec![0.0; k]
    } else if opts.centre.len() == k {
        opts.centre.clone()
    } else {
        return Err(LabError::InvalidParameter(format!(
            "search centre has {} entries for {k} solitons",
            opts.centre.len()
        )));
    };
    let mut radius = opts.radius * unit;
    if !sh.done() {
        match method {
            SearchMethod::Bisection => bisection(&mut sh, &centre, &mut radius)?,
            SearchMethod::Pattern => pattern(&mut sh, &centre, &mut radius)?,
        }
    }
    let (xi_star, best, calibration) = sh.best.take().expect("at least one shot");
    Ok(SearchResult {
        converged: best.reached(),
        xi_star,
        best,
        calibration,
        shots: sh.shots,
        radius,
        method,
    })
}

/// Coordinatewise bisection on the sign of `z_k^−` at exit.
fn bisection(sh: &mut Shooter, centre: &[f64], radius: &mut f64) -> Result<()> {
    let k = centre.len();
    let mut lo: Vec<f64> = centre.iter().map(|c| c - *radius).collect();
    let mut hi: Vec<f64> = centre.iter().map(|c| c + *radius).collect();
    while !sh.done() {
        let mid: Vec<f64> = (0..k).map(|m| 0.5 * (lo[m] + hi[m])).collect();
        let r = sh.shoot(&mid)?;
        if r.reached() {
            break;
        }
        if r.z_minus_at_exit.len() != k {
            return Err(LabError::Decomposition {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        for m in 0..k {
            // In backward time z^− ≈ (ξ − ξ*)e^{κ(S−t)} grows with the sign of ξ − ξ*.
            if r.z_minus_at_exit[m] > 0.0 {
                hi[m] = mid[m];
            } else {
                lo[m] = mid[m];
            }
        }
        *radius = (0..k).map(|m| 0.5 * (hi[m] - lo[m])).fold(0.0, f64::max);
    }
    Ok(())
}

/// Compass search over the axes and diagonals, maximizing the backward lifetime `S − exit_time`.
fn pattern(sh: &mut Shooter, centre: &[f64], radius: &mut f64) -> Result<()> {
    let k = centre.len();
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for m in 0..k {
        for s in [1.0, -1.0] {
            let mut d = vec![0.0; k];
            d[m] = s;
            dirs.push(d);
        }
    }
    if k == 2 {
        for (a, b) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            dirs.push(vec![a, b]);
        }
    }
    let mut x = centre.to_vec();
    let mut fx = sh.shoot(&x)?.exit_time;
    while !sh.done() {
        let mut improved = false;
        for d in &dirs {
            if sh.done() {
                break;
            }
            let p: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + *radius * b).collect();
            let fp = sh.shoot(&p)?.exit_time;
            if fp < fx {
                x = p;
                fx = fp;
                improved = true;
                break;
            }
        }
        if !improved {
            *radius *= 0.5;
        }
    }
    Ok(())
}

/// Exit times over a line of targets `ξ_1` (other targets fixed at `base`).
pub fn scan(
    spec: &ShotSpec,
    grid: Arc<CylGrid>,
    gs: Arc<GroundState>,
    base: &[f64],
    xis: &[f64],
) -> Result<Vec<ShotRecord>> {
    let mut sh = Shooter {
        cal: Calibrator::new(spec, grid.clone(), gs.clone())?,
        grid,
        gs,
        shots: Vec::new(),
        best: None,
        budget: usize::MAX,
    };
    for &x in xis {
        let mut xi = base.to_vec();
        xi[0] = x;
        sh.shoot(&xi)?;
    }
    Ok(sh.shots)
}

/// Landscape CSV with columns `xi, exit_time, exit_reason`.
pub fn write_scan_csv<W: Write>(records: &[ShotRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["xi", "exit_time", "exit_reason"])
        .map_err(|e| LabError::Io(e.to_string()))?;
    for r in records {
        wr.write_record([
            format!("{:.15e}", r.xi[0]),
            format!("{:.15e}", r.exit_time),
            r.exit_reason.as_str().to_string(),
        ])
        .map_err(|e| LabError::Io(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}
