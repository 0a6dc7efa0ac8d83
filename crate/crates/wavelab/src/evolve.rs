//! Time-reversible evolution of `∂ₜ²u = Δu + |u|^{4/3}u` on the cylindrical grid,
//! and the axial Lorentz boost of stored trajectories.
//!
//! The scheme is velocity Verlet with the fourth-order Laplacian of
//! [`laplacian_active`]. The outer two layers of nodes are frozen at their
//! initial values, or driven by a reference sum of boosted solitons when one is
//! configured. An optional sponge damps `uₜ` (or its deviation from the
//! reference) near the outer boundaries.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{energy, laplacian_active, momentum_x1, CylGrid, State};
use crate::profiles::{f_nl, SolitonConfig};

/// Default CFL number.
pub const DEFAULT_CFL: f64 = 0.45;
/// Largest CFL number accepted by [`step`].
pub const MAX_CFL: f64 = 0.5;

/// Absorbing layer along the outer boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpongeConfig {
    /// Strip width as a fraction of the axial length (x₁ ends) and of `ρ_max` (outer ρ end).
    pub width_frac: f64,
    /// Peak damping rate `σ_max`; the rate grows quadratically into the strip.
    pub strength: f64,
}

impl Default for SpongeConfig {
    fn default() -> Self {
        SpongeConfig {
            width_frac: 0.1,
            strength: 1.0,
        }
    }
}

impl SpongeConfig {
    /// Damping rate at every node.
    pub fn profile(&self, grid: &CylGrid) -> Vec<f64> {
        let wx = self.width_frac * (grid.x1_max - grid.x1_min);
        let wr = self.width_frac * grid.rho_max;
        let mut out = vec![0.0; grid.len()];
        for i in 0..grid.n_x1 {
            let x = grid.x1(i);
            let dx = ((grid.x1_min + wx - x).max(x - (grid.x1_max - wx)).max(0.0) / wx).min(1.0);
            for j in 0..grid.n_rho {
                let dr = ((grid.rho(j) - (grid.rho_max - wr)).max(0.0) / wr).min(1.0);
                let d = dx.max(dr);
                out[grid.idx(i, j)] = self.strength * d * d;
            }
        }
        out
    }
}

/// Options of the evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub cfl: f64,
    pub nonlinear: bool,
    pub sponge: Option<SpongeConfig>,
    /// Steps between diagnostics and callback invocations.
    pub stride: usize,
    /// Steps between stored snapshots (none stored when `None`).
    pub snapshot_stride: Option<usize>,
    /// Solitons whose exact sum drives the frozen layers and the sponge target.
    #[serde(default)]
    pub reference: Option<Vec<SolitonConfig>>,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            cfl: DEFAULT_CFL,
            nonlinear: true,
            sponge: Some(SpongeConfig::default()),
            stride: 10,
            snapshot_stride: None,
            reference: None,
        }
    }
}

/// `a(u) = Δu + f(u)` on active nodes, zero on frozen nodes.
fn acceleration(u: &[f64], grid: &CylGrid, nonlinear: bool, out: &mut [f64]) {
    laplacian_active(u, grid, out);
    if nonlinear {
        let nr = grid.n_rho;
        let n = grid.n_x1;
        out.par_chunks_mut(nr)
            .zip(u.par_chunks(nr))
            .enumerate()
            .for_each(|(i, (o, row))| {
                if i < 2 || i + 2 >= n {
                    return;
                }
                for j in 0..nr - 2 {
                    o[j] += f_nl(row[j]);
                }
            });
    }
}

/// `(u, uₜ)` of a sum of boosted solitons at one point.
fn reference_point(cfgs: &[SolitonConfig], t: f64, x1: f64, rho: f64) -> (f64, f64) {
    let mut u = 0.0;
    let mut ut = 0.0;
    for c in cfgs {
        let (xi, r) = c.local_coords(t, x1, rho);
        let b = 1.0 / (1.0 + (xi * xi + r * r) / 15.0);
        let w = b * b.sqrt();
        let amp = c.iota * c.lambda.powf(-1.5);
        // dW/ds = −b^(5/2)/10 with s = ξ² + r²
        let d1w = amp / c.contraction() * 2.0 * xi * (-0.1 * w * b);
        u += amp * w;
        ut -= c.ell / c.lambda * d1w;
    }
    (u, ut)
}

/// Nodes driven by the reference solution.
#[derive(Clone, Debug)]
struct Reference {
    solitons: Vec<SolitonConfig>,
    /// Frozen nodes.
    frozen: Vec<usize>,
    /// Active nodes inside the sponge.
    damped: Vec<usize>,
    /// Reference `uₜ` on `damped`, at the time of the last update.
    damped_ut: Vec<f64>,
}

impl Reference {
    fn new(grid: &CylGrid, solitons: Vec<SolitonConfig>, sponge: Option<&[f64]>) -> Self {
        let mut frozen = Vec::new();
        let mut damped = Vec::new();
        for i in 0..grid.n_x1 {
            for j in 0..grid.n_rho {
                let k = grid.idx(i, j);
                if !grid.is_active(i, j) {
                    frozen.push(k);
                } else if sponge.map_or(false, |s| s[k] > 0.0) {
                    damped.push(k);
                }
            }
        }
        let n = damped.len();
        Reference {
            solitons,
            frozen,
            damped,
            damped_ut: vec![0.0; n],
        }
    }

    fn eval(&self, grid: &CylGrid, nodes: &[usize], t: f64) -> Vec<(f64, f64)> {
        nodes
            .par_iter()
            .map(|&k| {
                let (i, j) = (k / grid.n_rho, k % grid.n_rho);
                reference_point(&self.solitons, t, grid.x1(i), grid.rho(j))
            })
            .collect()
    }

    /// Set the frozen layers to the reference at time `t` and cache the sponge target.
    fn update(&mut self, grid: &CylGrid, s: &mut State, t: f64) {
        for (&k, (u, ut)) in self.frozen.iter().zip(self.eval(grid, &self.frozen, t)) {
            s.u.values[k] = u;
            s.ut.values[k] = ut;
        }
        if !self.damped.is_empty() {
            self.damped_ut = self.eval(grid, &self.damped, t).into_iter().map(|p| p.1).collect();
        }
    }
}

/// Velocity-Verlet stepper with the acceleration cached between steps.
#[derive(Clone, Debug)]
pub struct Stepper {
    grid: Arc<CylGrid>,
    nonlinear: bool,
    sponge: Option<Vec<f64>>,
    reference: Option<Reference>,
    acc: Vec<f64>,
    acc_valid: bool,
}

impl Stepper {
    /// Build a stepper on a grid.
    pub fn new(grid: Arc<CylGrid>, nonlinear: bool, sponge: Option<SpongeConfig>) -> Self {
        let sponge = sponge.map(|s| s.profile(&grid));
        let n = grid.len();
        Stepper {
            grid,
            nonlinear,
            sponge,
            reference: None,
            acc: vec![0.0; n],
            acc_valid: false,
        }
    }

    /// Drive the frozen layers by the exact soliton sum and damp `uₜ` towards
    /// its reference value inside the sponge.
    pub fn with_reference(mut self, solitons: Vec<SolitonConfig>) -> Result<Self> {
        for c in &solitons {
            c.validate()?;
        }
        self.reference = Some(Reference::new(&self.grid, solitons, self.sponge.as_deref()));
        Ok(self)
    }

    /// Advance `s` by `dt` (either sign) at time `t`.
    pub fn step(&mut self, s: &mut State, dt: f64, t: f64) -> Result<()> {
        let g = self.grid.clone();
        let bound = g.dt_bound(MAX_CFL);
        if !(dt.abs() <= bound) {
            return Err(LabError::Cfl { dt: dt.abs(), bound });
        }
        if !self.acc_valid {
            acceleration(&s.u.values, &g, self.nonlinear, &mut self.acc);
        }
        let nr = g.n_rho;
        let n = g.n_x1;
        let half = 0.5 * dt;
        let acc = &self.acc;
        s.ut.values
            .par_chunks_mut(nr)
            .zip(s.u.values.par_chunks_mut(nr))
            .enumerate()
            .for_each(|(i, (vt, v))| {
                if i < 2 || i + 2 >= n {
                    return;
                }
                let a = &acc[i * nr..(i + 1) * nr];
                for j in 0..nr - 2 {
                    vt[j] += half * a[j];
                    v[j] += dt * vt[j];
                }
            });
        if let Some(r) = self.reference.as_mut() {
            r.update(&g, s, t + dt);
        }
        acceleration(&s.u.values, &g, self.nonlinear, &mut self.acc);
        let acc = &self.acc;
        let sponge = self.sponge.as_deref();
        let damp = dt.abs();
        let driven = self.reference.is_some();
        s.ut.values.par_chunks_mut(nr).enumerate().for_each(|(i, vt)| {
            if i < 2 || i + 2 >= n {
                return;
            }
            let a = &acc[i * nr..(i + 1) * nr];
            for j in 0..nr - 2 {
                vt[j] += half * a[j];
            }
            if let (Some(sp), false) = (sponge, driven) {
                let sr = &sp[i * nr..(i + 1) * nr];
                for j in 0..nr - 2 {
                    if sr[j] > 0.0 {
                        vt[j] *= (-sr[j] * damp).exp();
                    }
                }
            }
        });
        if let (Some(sp), Some(r)) = (sponge, self.reference.as_ref()) {
            let ut = &mut s.ut.values;
            for (&k, &target) in r.damped.iter().zip(&r.damped_ut) {
                ut[k] = target + (ut[k] - target) * (-sp[k] * damp).exp();
            }
        }
        self.acc_valid = true;
        if !s.u.values.iter().all(|v| v.is_finite()) || !s.ut.values.iter().all(|v| v.is_finite()) {
            return Err(LabError::BlowUp { t: t + dt });
        }
        Ok(())
    }

    /// Forget the cached acceleration (after the state is modified externally).
    pub fn invalidate(&mut self) {
        self.acc_valid = false;
    }
}

/// One velocity-Verlet step without sponge.
pub fn step(s: &State, dt: f64, nonlinear: bool) -> Result<State> {
    let mut out = s.clone();
    let mut st = Stepper::new(s.grid().clone(), nonlinear, None);
    st.step(&mut out, dt, 0.0)?;
    Ok(out)
}

/// Decision returned by evolution callbacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Result of [`evolve_interval`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Diagnostic times (every `stride` steps, including both ends).
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub momentum: Vec<f64>,
    /// States stored every `snapshot_stride` steps, in time order of integration.
    pub snapshots: Vec<(f64, State)>,
    pub final_state: State,
    pub t_final: f64,
    /// Whether a callback stopped the integration before `t1`.
    pub stopped_early: bool,
    pub steps: usize,
    pub dt: f64,
}

impl Trajectory {
    /// Largest relative energy deviation from the first record.
    pub fn energy_drift(&self) -> f64 {
        relative_drift(&self.energy)
    }

    /// Largest relative momentum deviation from the first record.
    pub fn momentum_drift(&self) -> f64 {
        relative_drift(&self.momentum)
    }
}

fn relative_drift(v: &[f64]) -> f64 {
    match v.first() {
        None => 0.0,
        Some(&e0) => v.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs(),
    }
}

/// Integrate from `t0` to `t1` (either direction).
///
/// The step is the largest one not exceeding the CFL bound that divides the
/// interval evenly. `callback(t, state)` runs at `t0` and every `stride` steps;
/// returning [`Control::Stop`] ends the integration with a partial trajectory.
pub fn evolve_interval<F>(s: State, t0: f64, t1: f64, cfg: &EvolveConfig, mut callback: F) -> Result<Trajectory>
where
    F: FnMut(f64, &State) -> Result<Control>,
{
    if !(t1 != t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(LabError::InvalidParameter("evolution interval must have t1 ≠ t0".into()));
    }
    if !(cfg.cfl > 0.0 && cfg.cfl <= MAX_CFL) {
        return Err(LabError::InvalidParameter(format!(
            "CFL number must lie in (0, {MAX_CFL}], got {}",
            cfg.cfl
        )));
    }
    let grid = s.grid().clone();
    let span = t1 - t0;
    let nsteps = (span.abs() / grid.dt_bound(cfg.cfl)).ceil().max(1.0) as usize;
    let dt = span / nsteps as f64;
    let stride = cfg.stride.max(1);
    let mut stepper = Stepper::new(grid, cfg.nonlinear, cfg.sponge);
    if let Some(r) = &cfg.reference {
        stepper = stepper.with_reference(r.clone())?;
    }
    let mut state = s;
    let mut traj = Trajectory {
        times: Vec::new(),
        energy: Vec::new(),
        momentum: Vec::new(),
        snapshots: Vec::new(),
        final_state: state.clone(),
        t_final: t0,
        stopped_early: false,
        steps: 0,
        dt,
    };
    let record = |traj: &mut Trajectory, t: f64, st: &State, k: usize| {
        if k % stride == 0 || k == nsteps {
            traj.times.push(t);
            traj.energy.push(energy(st));
            traj.momentum.push(momentum_x1(st));
        }
        if let Some(ss) = cfg.snapshot_stride {
            if k % ss.max(1) == 0 {
                traj.snapshots.push((t, st.clone()));
            }
        }
    };
    record(&mut traj, t0, &state, 0);
    if callback(t0, &state)? == Control::Stop {
        traj.stopped_early = true;
        traj.final_state = state;
        return Ok(traj);
    }
    for k in 1..=nsteps {
        let t_prev = t0 + (k - 1) as f64 * dt;
        stepper.step(&mut state, dt, t_prev)?;
        let t = if k == nsteps { t1 } else { t0 + k as f64 * dt };
        traj.steps = k;
        traj.t_final = t;
        record(&mut traj, t, &state, k);
        if k % stride == 0 || k == nsteps {
            if callback(t, &state)? == Control::Stop {
                traj.stopped_early = k < nsteps;
                break;
            }
        }
    }
    traj.final_state = state;
    Ok(traj)
}

/// Four-point Lagrange weights at fractional offset `s ∈ [0, 1]` between nodes 1 and 2
/// of the stencil `{−1, 0, 1, 2}`, with their derivatives.
fn lagrange4(s: f64) -> ([f64; 4], [f64; 4]) {
    let x = [-1.0, 0.0, 1.0, 2.0];
    let mut w = [0.0; 4];
    let mut d = [0.0; 4];
    for k in 0..4 {
        let mut num = 1.0;
        let mut den = 1.0;
        for m in 0..4 {
            if m != k {
                num *= s - x[m];
                den *= x[k] - x[m];
            }
        }
        w[k] = num / den;
        let mut ds = 0.0;
        for m in 0..4 {
            if m == k {
                continue;
            }
            let mut p = 1.0;
            for q in 0..4 {
                if q != k && q != m {
                    p *= s - x[q];
                }
            }
            ds += p;
        }
        d[k] = ds / den;
    }
    (w, d)
}

/// Stencil start and weights for a uniform sequence `x₀ + k h`, `k = 0..n`.
fn stencil(pos: f64, n: usize) -> Option<(usize, f64)> {
    if n < 4 || !(pos >= 0.0) || pos > (n - 1) as f64 {
        return None;
    }
    let base = (pos.floor() as usize).clamp(1, n - 3);
    Some((base - 1, pos - base as f64))
}

/// Slice of the axial Lorentz boost `u(s, y) = ũ((s−βy₁)/γ, (y₁−βs)/γ, ρ)`, `γ = √(1−β²)`.
///
/// The output grid must share the radial nodes of the trajectory grid. Values are
/// interpolated with cubic Lagrange polynomials in time and in `x₁`.
pub fn boost_axial(traj: &Trajectory, beta: f64, s: f64, out_grid: &Arc<CylGrid>) -> Result<State> {
    if !(beta.abs() < 1.0) {
        return Err(LabError::InvalidParameter(format!("boost speed must lie in (−1,1), got {beta}")));
    }
    let snaps = &traj.snapshots;
    if snaps.len() < 4 {
        return Err(LabError::Coverage {
            t_min: f64::NAN,
            t_max: f64::NAN,
        });
    }
    let g = snaps[0].1.grid().clone();
    if out_grid.n_rho != g.n_rho || (out_grid.rho_max - g.rho_max).abs() > 1e-12 {
        return Err(LabError::InvalidParameter(
            "boost output grid must share the radial nodes of the trajectory".into(),
        ));
    }
    // Snapshots in increasing time with uniform spacing.
    let mut order: Vec<usize> = (0..snaps.len()).collect();
    order.sort_by(|a, b| snaps[*a].0.total_cmp(&snaps[*b].0));
    let ta = snaps[order[0]].0;
    let tb = snaps[order[order.len() - 1]].0;
    let ht = (tb - ta) / (order.len() - 1) as f64;
    let gam = (1.0 - beta * beta).sqrt();
    // Required time range.
    let (mut need_lo, mut need_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..out_grid.n_x1 {
        let tp = (s - beta * out_grid.x1(i)) / gam;
        need_lo = need_lo.min(tp);
        need_hi = need_hi.max(tp);
    }
    if need_lo < ta - 1e-12 || need_hi > tb + 1e-12 {
        let (lo, hi) = if need_lo < ta { (need_lo, ta) } else { (tb, need_hi) };
        return Err(LabError::Coverage { t_min: lo, t_max: hi });
    }
    let mut out = State::zeros(out_grid);
    let nr = g.n_rho;
    for i in 0..out_grid.n_x1 {
        let y1 = out_grid.x1(i);
        let tp = (s - beta * y1) / gam;
        let xp = (y1 - beta * s) / gam;
        let (t0, ft) = stencil((tp - ta) / ht, order.len()).ok_or(LabError::Coverage {
            t_min: tp,
            t_max: tp,
        })?;
        let (x0, fx) = stencil((xp - g.x1_min) / g.dx1, g.n_x1).ok_or_else(|| {
            LabError::Domain(format!("boosted point x₁ = {xp} lies outside the trajectory grid"))
        })?;
        let (wt, dwt) = lagrange4(ft);
        let (wx, dwx) = lagrange4(fx);
        for j in 0..nr {
            let (mut u, mut ut, mut ux) = (0.0, 0.0, 0.0);
            for a in 0..4 {
                let st = &snaps[order[t0 + a]].1;
                for b in 0..4 {
                    let k = (x0 + b) * nr + j;
                    let uv = st.u.values[k];
                    u += wt[a] * wx[b] * uv;
                    ux += wt[a] * dwx[b] * uv;
                    ut += dwt[a] * wx[b] * uv;
                }
            }
            let ut = ut / ht;
            let ux = ux / g.dx1;
            let k = out_grid.idx(i, j);
            out.u.values[k] = u;
            out.ut.values[k] = (ut - beta * ux) / gam;
        }
    }
    Ok(out)
}

/// Parameters of one soliton in the general (non-axial) boost identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostSoliton {
    pub iota: f64,
    pub lambda: f64,
    /// Asymptotic centre `y^∞ ∈ ℝ⁵`.
    pub y_inf: [f64; 5],
    /// Axial speed `ℓ_k` of the target soliton.
    pub ell: f64,
}

/// `ℓ̃ = ℓ/√(1−β²)`; fails when the result leaves the light cone.
pub fn lorentz_speed(ell: f64, beta: f64) -> Result<f64> {
    if !(beta.abs() < 1.0) {
        return Err(LabError::Domain(format!("boost speed must lie in (−1,1), got {beta}")));
    }
    let lt = ell / (1.0 - beta * beta).sqrt();
    if !(lt.abs() < 1.0) {
        return Err(LabError::Domain(format!(
            "speed ℓ/√(1−β²) = {lt} lies outside (−1,1) for ℓ = {ell}, β = {beta}"
        )));
    }
    Ok(lt)
}

/// Parameter map `y^∞ ↦ ỹ^∞` for the soliton of axial speed `ℓ` and transverse boost `β`.
pub fn boost_param_map(y_inf: [f64; 5], ell: f64, beta: f64) -> [f64; 5] {
    let g2 = 1.0 - beta * beta;
    let mut out = y_inf;
    out[0] = y_inf[0] + beta * ell / g2 * y_inf[1];
    out[1] = y_inf[1] / g2.sqrt();
    out
}

/// The soliton boosted with a velocity vector `𝓵 ∈ ℝ⁵`, `|𝓵| < 1`.
pub fn w_vec(l: [f64; 5], x: [f64; 5]) -> f64 {
    let l2: f64 = l.iter().map(|v| v * v).sum();
    let mut y = x;
    if l2 > 0.0 {
        let c = (1.0 / (1.0 - l2).sqrt() - 1.0) * l.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / l2;
        for k in 0..5 {
            y[k] += c * l[k];
        }
    }
    let r2: f64 = y.iter().map(|v| v * v).sum();
    (1.0 + r2 / 15.0).powf(-1.5)
}

/// Discrepancy report of the boost identity.
#[derive(Clone, Debug, Serialize)]
pub struct BoostReport {
    pub beta: f64,
    pub points: usize,
    pub max_discrepancy: f64,
}

/// Compare the `βe₂`-Lorentz transform of each axial soliton of speed `ℓ̃_k` with the
/// soliton of velocity `ℓ_k e₁ + β e₂` at space-time points `(s, y)`.
pub fn verify_boost_identity(solitons: &[BoostSoliton], beta: f64, points: &[(f64, [f64; 5])]) -> Result<BoostReport> {
    let gam = (1.0 - beta * beta).sqrt();
    let mut worst: f64 = 0.0;
    for p in solitons {
        let lt = lorentz_speed(p.ell, beta)?;
        let yt = boost_param_map(p.y_inf, p.ell, beta);
        let amp = p.iota * p.lambda.powf(-1.5);
        let vel = [p.ell, beta, 0.0, 0.0, 0.0];
        for (s, y) in points {
            // Left side: the axial soliton of speed ℓ̃ evaluated at the transformed point.
            let t = (s - beta * y[1]) / gam;
            let x = [y[0], (y[1] - beta * s) / gam, y[2], y[3], y[4]];
            let mut arg = [0.0; 5];
            for k in 0..5 {
                let shift = if k == 0 { lt * t } else { 0.0 };
                arg[k] = (x[k] - shift - yt[k]) / p.lambda;
            }
            let lhs = amp * w_vec([lt, 0.0, 0.0, 0.0, 0.0], arg);
            // Right side: the obliquely moving soliton.
            let mut arg = [0.0; 5];
            for k in 0..5 {
                arg[k] = (y[k] - vel[k] * s - p.y_inf[k]) / p.lambda;
            }
            let rhs = amp * w_vec(vel, arg);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(BoostReport {
        beta,
        points: points.len(),
        max_discrepancy: worst,
    })
}
