//! The glued functional
//! `𝓗_K = ∫(|∇ε|² + η² − 2(F(𝒲_K+ε) − F(𝒲_K) − f(𝒲_K)ε)) + 2∫χ_K ∂₁ε η`,
//! its split over the transition region Ω(t), coercivity probes and the
//! time-variation defect of `t²𝓗_K`.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{pair_l2, weighted_sum, CylField, CylGrid, State};
use crate::interactions::{fit_power_law, PowerFit};
use crate::linalg::{lanczos_max, LanczosOptions};
use crate::modulation::Decomposition;
use crate::profiles::{f_nl, f_potential, f_prime, sample_soliton, ChiProfile, SolitonConfig, SolitonQuantity as Q};
use crate::quadrature::gauss_legendre;
use crate::spectral::coercivity::{DiscreteForm, FormParts};
use crate::spectral::modes::z_pm_point_raw;
use crate::spectral::GroundState;

/// `F(w+e) − F(w) − f(w)e`, evaluated without cancellation when `|e| ≪ |w|`.
///
/// For `|e| < |w|/2` the integral form `e²∫₀¹(1−s)f'(w+se)ds` is used; the
/// integrand is then smooth and a 10-point Gauss rule is exact to roundoff.
pub fn f_remainder(w: f64, e: f64) -> f64 {
    if e.abs() < 0.5 * w.abs() {
        thread_local! {
            static RULE: (Vec<f64>, Vec<f64>) = {
                let (x, wt) = gauss_legendre(10);
                (x.iter().map(|v| 0.5 * (v + 1.0)).collect(), wt.iter().map(|v| 0.5 * v).collect())
            };
        }
        RULE.with(|(s, ws)| {
            let mut acc = 0.0;
            for (si, wi) in s.iter().zip(ws) {
                acc += wi * (1.0 - si) * f_prime(w + si * e);
            }
            e * e * acc
        })
    } else {
        f_potential(w + e) - f_potential(w) - f_nl(w) * e
    }
}

/// Value of `𝓗_K` and its pieces at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HKReport {
    pub t: f64,
    pub hk: f64,
    /// `𝓝_Ω = ∫_Ω(|∇ε|² + η² + 2χ∂₁εη)`.
    pub n_omega: f64,
    /// `𝓝_{Ω^C} = ∫_{Ω^C}(|∇ε|² + η²)`.
    pub n_omega_c: f64,
    /// `2∫_{Ω^C}χ∂₁εη`.
    pub cross_omega_c: f64,
    /// `∫f'(𝒲_K)ε²`.
    pub potential: f64,
    /// Quadratic part `𝓝_Ω + 𝓝_{Ω^C} + 2∫_{Ω^C}χ∂₁εη − ∫f'(𝒲_K)ε²`.
    pub quadratic: f64,
    /// `‖(ε, η)‖_E²`.
    pub eps_e2: f64,
    /// `|𝓗_K| / ‖(ε, η)‖_E²`.
    pub bound_ratio: f64,
    /// `𝓝_Ω − (1−ℓ̄)∫_Ω(|∇ε|²+η²)` with `ℓ̄ = (1 + max|ℓ_k|)/2` (non-negative by completing the square).
    pub completed_square_margin: f64,
}

fn background(grid: &Arc<CylGrid>, solitons: &[SolitonConfig], t: f64) -> CylField {
    let mut w = CylField::zeros(grid);
    for c in solitons {
        let f = sample_soliton(grid, c, t, &[Q::W]).pop().expect("one field");
        w.axpy(1.0, &f);
    }
    w
}

/// `𝓗_K` for the perturbation `e = (ε, η)` of the soliton sum `𝒲_K` at time `t > 0`.
pub fn compute_hk_state(solitons: &[SolitonConfig], e: &State, chi: &ChiProfile, t: f64) -> Result<HKReport> {
    chi.validate()?;
    if !(t > 0.0) {
        return Err(LabError::InvalidParameter(format!("H_K requires t > 0, got {t}")));
    }
    let grid = e.grid().clone();
    let w = background(&grid, solitons, t);
    let (e1, er) = (e.u.d1(), e.u.drho());
    let nr = grid.n_rho;
    let chi_row: Vec<f64> = (0..grid.n_x1).map(|i| chi.eval(t, grid.x1(i))).collect();
    let omega_row: Vec<bool> = (0..grid.n_x1).map(|i| chi.in_omega(t, grid.x1(i))).collect();
    let ell_bar = 0.5 * (1.0 + chi.speeds.iter().fold(0.0f64, |m, l| m.max(l.abs())));
    let sum = |g: &(dyn Fn(usize, usize, usize) -> f64 + Sync)| weighted_sum(&grid, |i, j| g(i, j, i * nr + j));
    let grad2 = |k: usize| e1.values[k] * e1.values[k] + er.values[k] * er.values[k];
    let eta2 = |k: usize| e.ut.values[k] * e.ut.values[k];
    let cross = |i: usize, k: usize| 2.0 * chi_row[i] * e1.values[k] * e.ut.values[k];
    let n_omega = sum(&|i, _, k| if omega_row[i] { grad2(k) + eta2(k) + cross(i, k) } else { 0.0 });
    let omega_free = sum(&|i, _, k| if omega_row[i] { grad2(k) + eta2(k) } else { 0.0 });
    let n_omega_c = sum(&|i, _, k| if omega_row[i] { 0.0 } else { grad2(k) + eta2(k) });
    let cross_omega_c = sum(&|i, _, k| if omega_row[i] { 0.0 } else { cross(i, k) });
    let potential = sum(&|_, _, k| f_prime(w.values[k]) * e.u.values[k] * e.u.values[k]);
    let rem = sum(&|_, _, k| f_remainder(w.values[k], e.u.values[k]));
    let eps_e2 = sum(&|_, _, k| grad2(k) + eta2(k));
    let hk = n_omega + n_omega_c + cross_omega_c - 2.0 * rem;
    Ok(HKReport {
        t,
        hk,
        n_omega,
        n_omega_c,
        cross_omega_c,
        potential,
        quadratic: n_omega + n_omega_c + cross_omega_c - potential,
        eps_e2,
        bound_ratio: if eps_e2 > 0.0 { hk.abs() / eps_e2 } else { 0.0 },
        completed_square_margin: n_omega - (1.0 - ell_bar) * omega_free,
    })
}

/// `𝓗_K` for a decomposition (the χ profile is evaluated at time `t`).
pub fn compute_hk(d: &Decomposition, chi: &ChiProfile, t: f64) -> Result<HKReport> {
    compute_hk_state(&d.solitons, &d.eps_state(), chi, t)
}

/// Outcome of [`coercivity_probe`].
#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub t: f64,
    /// Smallest constrained Rayleigh quotient of the quadratic part of `𝓗_K` (Lanczos on the probe grid).
    pub mu_lanczos: f64,
    /// Smallest `𝓗_K/‖e‖_E²` over the random admissible samples on the decomposition grid.
    pub mu_samples: f64,
    pub mu_lower: f64,
    pub samples: usize,
    pub positive: bool,
}

/// Options of [`coercivity_probe`].
#[derive(Clone, Debug)]
pub struct ProbeOptions {
    /// Grid spacing of the Lanczos probe grid.
    pub spacing: f64,
    /// Margin around the outermost soliton centres and radial extent.
    pub margin: f64,
    pub lanczos: LanczosOptions,
    /// E-norm of the random samples.
    pub sample_amplitude: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            spacing: 0.4,
            margin: 30.0,
            lanczos: LanczosOptions {
                max_iter: 400,
                tol: 1e-9,
                seed: 7,
            },
            sample_amplitude: 1e-3,
            seed: 11,
        }
    }
}

/// Constraint fields of one soliton: Ḣ¹_ℓ test weights of `θΛW_ℓ`, `θ∂₁W_ℓ`, and `θ̃Z^±_ℓ`.
struct SolitonConstraints {
    test_l: Vec<f64>,
    test_d: Vec<f64>,
    lw: Vec<f64>,
    d1w: Vec<f64>,
    z: [(Vec<f64>, Vec<f64>); 2],
}

fn soliton_constraints<F>(gs: &GroundState, c: &SolitonConfig, t: f64, coords: F, n: usize) -> Result<SolitonConstraints>
where
    F: Fn(usize) -> (f64, f64),
{
    let mut out = SolitonConstraints {
        test_l: Vec::with_capacity(n),
        test_d: Vec::with_capacity(n),
        lw: Vec::with_capacity(n),
        d1w: Vec::with_capacity(n),
        z: [(Vec::with_capacity(n), Vec::with_capacity(n)), (Vec::with_capacity(n), Vec::with_capacity(n))],
    };
    let amp = c.iota * c.lambda.powf(-1.5);
    for k in 0..n {
        let (x1, rho) = coords(k);
        let p = crate::profiles::soliton_point(c, t, x1, rho);
        out.test_l.push(p.ph_lw);
        out.test_d.push(p.ph_d1w);
        out.lw.push(p.lw);
        out.d1w.push(p.d1w);
        let xl = (x1 - c.center(t)) / c.lambda;
        for (s, sign) in [1.0, -1.0].iter().enumerate() {
            let (z1, z2) = z_pm_point_raw(gs, c.ell, *sign, xl, rho / c.lambda)?;
            out.z[s].0.push(amp * z1 / c.lambda);
            out.z[s].1.push(amp * z2);
        }
    }
    Ok(out)
}

/// Smallest value of `𝓗_K/‖e‖_E²` over perturbations satisfying the modulation
/// orthogonality conditions with `z_k^± = 0`.
///
/// The quadratic part is minimised by constrained Lanczos on a probe grid around the
/// solitons; the full nonlinear functional is evaluated on `samples` random admissible
/// perturbations on the decomposition grid.
pub fn coercivity_probe(
    d: &Decomposition,
    chi: &ChiProfile,
    t: f64,
    samples: usize,
    gs: &GroundState,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    chi.validate()?;
    if !(t > 0.0) {
        return Err(LabError::InvalidParameter(format!("probe requires t > 0, got {t}")));
    }
    let centers: Vec<f64> = d.solitons.iter().map(|c| c.center(t)).collect();
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - opts.margin;
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + opts.margin;
    let n_x1 = ((hi - lo) / opts.spacing).round() as usize + 1;
    let n_rho = (opts.margin / opts.spacing).round() as usize + 1;
    let pgrid = CylGrid::new(lo, hi, opts.margin, n_x1, n_rho)?;
    let mu_lanczos = probe_lanczos(&d.solitons, chi, t, gs, &pgrid, opts.lanczos)?;
    let mu_samples = probe_samples(d, chi, t, samples, gs, opts)?;
    let mu_lower = mu_lanczos.min(mu_samples);
    Ok(ProbeReport {
        t,
        mu_lanczos,
        mu_samples,
        mu_lower,
        samples,
        positive: mu_lower > 0.0,
    })
}

/// Constrained minimum of the quadratic part of `𝓗_K` on a grid.
pub fn probe_lanczos(
    solitons: &[SolitonConfig],
    chi: &ChiProfile,
    t: f64,
    gs: &GroundState,
    grid: &Arc<CylGrid>,
    lanczos: LanczosOptions,
) -> Result<f64> {
    let space = crate::spectral::coercivity::ActiveSpace::new(grid.clone())?;
    let potential = space.sample(|x1, rho| {
        let w: f64 = solitons.iter().map(|c| crate::profiles::eval_boosted(c, t, x1, rho)).sum();
        f_prime(w)
    });
    let cross = space.sample(|x1, _| chi.eval(t, x1));
    let parts = FormParts {
        aniso: 1.0,
        potential,
        cross: Some(cross),
        localizer: None,
        pair: true,
    };
    let df = DiscreteForm::new(grid.clone(), parts)?;
    let n = df.nodes();
    let mut cons = Vec::new();
    for c in solitons {
        let sc = soliton_constraints(gs, c, t, |k| space.coords(k), n)?;
        for test in [&sc.test_l, &sc.test_d] {
            let mut v = df.l2_functional(test);
            v.resize(2 * n, 0.0);
            cons.push(v);
        }
        for (z1, z2) in &sc.z {
            let mut v = df.l2_functional(z1);
            v.extend(df.l2_functional(z2));
            cons.push(v);
        }
    }
    let r = lanczos_max(&df, &cons, lanczos)?;
    Ok(1.0 - r.value)
}

/// Random smooth perturbation: a sum of Gaussian bumps centred near the solitons.
fn random_field(grid: &Arc<CylGrid>, centers: &[f64], rng: &mut ChaCha8Rng) -> CylField {
    let bumps: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let c = centers[rng.gen_range(0..centers.len())];
            (
                c + rng.gen_range(-4.0..4.0),
                rng.gen_range(0.0..4.0),
                rng.gen_range(0.7..3.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    CylField::from_fn(grid, |x, r| {
        bumps
            .iter()
            .map(|(bx, br, s, a)| {
                // Axially symmetric ring bump.
                a * (-((x - bx).powi(2) + (r - br).powi(2)) / (s * s)).exp()
            })
            .sum()
    })
}

fn probe_samples(
    d: &Decomposition,
    chi: &ChiProfile,
    t: f64,
    samples: usize,
    gs: &GroundState,
    opts: &ProbeOptions,
) -> Result<f64> {
    if samples == 0 {
        return Ok(f64::INFINITY);
    }
    let grid = d.eps.grid.clone();
    let centers: Vec<f64> = d.solitons.iter().map(|c| c.center(t)).collect();
    let n = grid.len();
    let nr = grid.n_rho;
    let coords = |k: usize| (grid.x1(k / nr), grid.rho(k % nr));
    // Constraint functionals (as (ε-weight, η-weight)) and the directions used to enforce them.
    let mut funcs: Vec<(CylField, CylField)> = Vec::new();
    let mut dirs: Vec<State> = Vec::new();
    let field = |v: Vec<f64>| CylField { grid: grid.clone(), values: v };
    for c in &d.solitons {
        let sc = soliton_constraints(gs, c, t, coords, n)?;
        funcs.push((field(sc.test_l), CylField::zeros(&grid)));
        dirs.push(State { u: field(sc.lw), ut: CylField::zeros(&grid) });
        funcs.push((field(sc.test_d), CylField::zeros(&grid)));
        dirs.push(State { u: field(sc.d1w), ut: CylField::zeros(&grid) });
        for (z1, z2) in sc.z {
            let (a, b) = (field(z1), field(z2));
            dirs.push(State { u: a.clone(), ut: b.clone() });
            funcs.push((a, b));
        }
    }
    let apply = |f: &(CylField, CylField), s: &State| pair_l2(&f.0, &s.u) + pair_l2(&f.1, &s.ut);
    let m = funcs.len();
    let gram = nalgebra::DMatrix::from_fn(m, m, |i, j| apply(&funcs[i], &dirs[j]));
    let lu = gram.lu();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let mut e = State {
            u: random_field(&grid, &centers, &mut rng),
            ut: random_field(&grid, &centers, &mut rng),
        };
        let rhs = nalgebra::DVector::from_fn(m, |i, _| apply(&funcs[i], &e));
        let coef = lu
            .solve(&rhs)
            .ok_or_else(|| LabError::Singular("constraint Gram matrix of the probe is singular".into()))?;
        for (k, dir) in dirs.iter().enumerate() {
            e.axpy(-coef[k], dir);
        }
        // Zero the frozen layers so the sample lives in the evolved space.
        for i in 0..grid.n_x1 {
            for j in 0..nr {
                if !grid.is_active(i, j) {
                    let k = grid.idx(i, j);
                    e.u.values[k] = 0.0;
                    e.ut.values[k] = 0.0;
                }
            }
        }
        let norm = crate::grid::norm_e(&e);
        if !(norm > 0.0) {
            return Err(LabError::Singular("probe sample vanished after projection".into()));
        }
        let e = e.scaled(opts.sample_amplitude / norm);
        let r = compute_hk_state(&d.solitons, &e, chi, t)?;
        worst = worst.min(r.hk / r.eps_e2);
    }
    Ok(worst)
}

/// One row of the variation monitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariationRow {
    pub t: f64,
    pub hk: f64,
    pub n_omega: f64,
    pub n_omega_c: f64,
    pub eps_e2: f64,
    /// `d/dt(t²𝓗_K)` by finite differences (NaN where undefined).
    pub d_dt_t2hk: f64,
    /// `D(t) = max(0, −d/dt(t²𝓗_K))`.
    pub defect: f64,
}

/// Time series of `𝓗_K` and the defect of `t²𝓗_K`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct VariationSeries {
    pub rows: Vec<VariationRow>,
}

/// Finite-difference variation of `t²𝓗_K` from a list of reports (any time order).
pub fn monitor_variation(reports: &[HKReport]) -> VariationSeries {
    let mut r: Vec<HKReport> = reports.to_vec();
    r.sort_by(|a, b| a.t.total_cmp(&b.t));
    let g: Vec<f64> = r.iter().map(|x| x.t * x.t * x.hk).collect();
    let n = r.len();
    let rows = (0..n)
        .map(|k| {
            let d = if n < 2 {
                f64::NAN
            } else if k == 0 {
                (g[1] - g[0]) / (r[1].t - r[0].t)
            } else if k == n - 1 {
                (g[n - 1] - g[n - 2]) / (r[n - 1].t - r[n - 2].t)
            } else {
                (g[k + 1] - g[k - 1]) / (r[k + 1].t - r[k - 1].t)
            };
            VariationRow {
                t: r[k].t,
                hk: r[k].hk,
                n_omega: r[k].n_omega,
                n_omega_c: r[k].n_omega_c,
                eps_e2: r[k].eps_e2,
                d_dt_t2hk: d,
                defect: if d.is_finite() { (-d).max(0.0) } else { f64::NAN },
            }
        })
        .collect();
    VariationSeries { rows }
}

impl VariationSeries {
    /// Power-law fit of the positive defect values with `t ∈ [t0, t1]`.
    pub fn fit_defect(&self, t0: f64, t1: f64) -> Result<PowerFit> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.t >= t0 && r.t <= t1 && r.defect > 0.0)
            .map(|r| (r.t, r.defect))
            .collect();
        fit_power_law(&pts)
    }

    /// Power-law fit of the envelope `max(D(s) : s ≥ t)` on `[t0, t1]`.
    ///
    /// The defect vanishes wherever `t²𝓗_K` increases; the envelope keeps the decay
    /// information of the remaining samples.
    pub fn fit_defect_envelope(&self, t0: f64, t1: f64) -> Result<PowerFit> {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        let mut run = 0.0f64;
        for r in self.rows.iter().rev() {
            if r.defect.is_finite() {
                run = run.max(r.defect);
            }
            if r.t >= t0 && r.t <= t1 && run > 0.0 {
                pts.push((r.t, run));
            }
        }
        pts.reverse();
        fit_power_law(&pts)
    }

    /// CSV with columns `t, hk, n_omega, n_omega_c, eps_E2, d_dt_t2hk`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| LabError::Io(e.to_string());
        wr.write_record(["t", "hk", "n_omega", "n_omega_c", "eps_E2", "d_dt_t2hk"]).map_err(err)?;
        for r in &self.rows {
            wr.write_record(
                [r.t, r.hk, r.n_omega, r.n_omega_c, r.eps_e2, r.d_dt_t2hk]
                    .iter()
                    .map(|v| format!("{v:.15e}")),
            )
            .map_err(err)?;
        }
        wr.flush()?;
        Ok(())
    }
}
