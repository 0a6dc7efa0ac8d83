//! Cylindrically symmetric grids on ℝ⁵, fields, quadrature, finite differences
//! and the pairings, norms and conserved quantities built on them.
//!
//! A point of ℝ⁵ is written `(x₁, x̄)` with `ρ = |x̄|`. Nodes are uniform in
//! `x₁` and in `ρ`, with `ρ = 0` on the symmetry axis. The volume element is
//! `2π² ρ³ dρ dx₁`.
//!
//! Differences are fourth order: centred in the interior, one-sided at the
//! `x₁` ends and at `ρ_max`, and even-reflected across the axis.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Area of the unit three-sphere, the angular factor of the transverse ℝ⁴.
pub const SPHERE3: f64 = 2.0 * PI * PI;

const D1_END0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_END1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
const D2_END0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
const D2_END1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];

/// Uniform `(x₁, ρ)` grid descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylGrid {
    pub x1_min: f64,
    pub x1_max: f64,
    pub rho_max: f64,
    pub n_x1: usize,
    pub n_rho: usize,
    pub dx1: f64,
    pub drho: f64,
    #[serde(skip)]
    wx: Vec<f64>,
    #[serde(skip)]
    wr: Vec<f64>,
}

impl CylGrid {
    /// Build a grid; at least seven nodes per direction are required.
    pub fn new(x1_min: f64, x1_max: f64, rho_max: f64, n_x1: usize, n_rho: usize) -> Result<Arc<Self>> {
        if !(x1_max > x1_min) || !x1_min.is_finite() || !x1_max.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "grid needs x1_min < x1_max, got [{x1_min}, {x1_max}]"
            )));
        }
        if !(rho_max > 0.0) || !rho_max.is_finite() {
            return Err(LabError::InvalidParameter(format!(
                "grid needs rho_max > 0, got {rho_max}"
            )));
        }
        if n_x1 < 7 || n_rho < 7 {
            return Err(LabError::InvalidParameter(format!(
                "grid needs at least 7 nodes per direction, got {n_x1}×{n_rho}"
            )));
        }
        let dx1 = (x1_max - x1_min) / (n_x1 - 1) as f64;
        let drho = rho_max / (n_rho - 1) as f64;
        let mut wx = vec![dx1; n_x1];
        wx[0] *= 0.5;
        wx[n_x1 - 1] *= 0.5;
        let mut wr: Vec<f64> = (0..n_rho)
            .map(|j| {
                let r = j as f64 * drho;
                r * r * r * drho
            })
            .collect();
        // Euler–Maclaurin: the ρ³-trapezoid rule misses −h⁴f(0)/120 at the axis end.
        wr[1] *= 1.0 - 1.0 / 120.0;
        wr[n_rho - 1] *= 0.5;
        Ok(Arc::new(CylGrid {
            x1_min,
            x1_max,
            rho_max,
            n_x1,
            n_rho,
            dx1,
            drho,
            wx,
            wr,
        }))
    }

    /// The default grid `[−120, 120] × [0, 80]` with `1200 × 400` nodes.
    pub fn default_grid() -> Arc<Self> {
        CylGrid::new(-120.0, 120.0, 80.0, 1200, 400).expect("default grid is valid")
    }

    /// Rebuild the cached weights after deserialization.
    pub fn rebuild(&self) -> Result<Arc<Self>> {
        CylGrid::new(self.x1_min, self.x1_max, self.rho_max, self.n_x1, self.n_rho)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n_x1 * self.n_rho
    }

    /// Whether the grid has no nodes (never true for a valid grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(i, j)`; rows run along ρ.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_rho + j
    }

    /// Axial coordinate of row `i`. Symmetric domains give exactly antisymmetric nodes.
    #[inline]
    pub fn x1(&self, i: usize) -> f64 {
        let c = 0.5 * (self.x1_min + self.x1_max);
        let half = 0.5 * (self.x1_max - self.x1_min);
        c + (2.0 * i as f64 - (self.n_x1 - 1) as f64) * (half / (self.n_x1 - 1) as f64)
    }

    /// Radial coordinate of column `j`.
    #[inline]
    pub fn rho(&self, j: usize) -> f64 {
        j as f64 * self.drho
    }

    /// Quadrature weight of node `(i, j)`, including `2π²`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        SPHERE3 * self.wx[i] * self.wr[j]
    }

    /// Axial trapezoid weights.
    pub fn x1_weights(&self) -> &[f64] {
        &self.wx
    }

    /// Radial `ρ³` weights (without `2π²`).
    pub fn rho_weights(&self) -> &[f64] {
        &self.wr
    }

    /// Largest admissible `|dt|` for a CFL number.
    pub fn dt_bound(&self, cfl: f64) -> f64 {
        cfl * self.dx1.min(self.drho)
    }

    /// Whether node `(i, j)` is updated by the evolution (outer two layers are frozen).
    #[inline]
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i >= 2 && i + 2 < self.n_x1 && j + 2 < self.n_rho
    }

    /// Whether `x₁ = c` lies at least `margin` inside the axial extent.
    pub fn contains_x1(&self, c: f64, margin: f64) -> bool {
        c - margin >= self.x1_min && c + margin <= self.x1_max
    }

    /// Row index nearest to `x₁`.
    pub fn nearest_row(&self, x1: f64) -> usize {
        let k = ((x1 - self.x1_min) / self.dx1).round();
        k.clamp(0.0, (self.n_x1 - 1) as f64) as usize
    }
}

/// A real function of `(x₁, ρ)` sampled on a grid.
#[derive(Clone, Debug)]
pub struct CylField {
    pub grid: Arc<CylGrid>,
    pub values: Vec<f64>,
}

impl PartialEq for CylField {
    fn eq(&self, o: &Self) -> bool {
        *self.grid == *o.grid && self.values == o.values
    }
}

impl CylField {
    /// The zero field.
    pub fn zeros(grid: &Arc<CylGrid>) -> Self {
        CylField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    /// Sample a function of `(x₁, ρ)`.
    pub fn from_fn<F: Fn(f64, f64) -> f64 + Sync>(grid: &Arc<CylGrid>, f: F) -> Self {
        let mut out = CylField::zeros(grid);
        let g = grid.clone();
        out.values
            .par_chunks_mut(g.n_rho)
            .enumerate()
            .for_each(|(i, row)| {
                let x1 = g.x1(i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f(x1, g.rho(j));
                }
            });
        out
    }

    /// Value at node `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_rho + j]
    }

    /// Apply a pointwise map.
    pub fn map<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Self {
        let mut out = self.clone();
        out.values.par_iter_mut().for_each(|v| *v = f(*v));
        out
    }

    /// Combine two fields pointwise.
    pub fn zip<F: Fn(f64, f64) -> f64 + Sync>(&self, o: &CylField, f: F) -> Self {
        let mut out = self.clone();
        out.values
            .par_iter_mut()
            .zip(o.values.par_iter())
            .for_each(|(a, b)| *a = f(*a, *b));
        out
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: f64, x: &CylField) {
        self.values
            .par_iter_mut()
            .zip(x.values.par_iter())
            .for_each(|(s, v)| *s += a * v);
    }

    /// Multiply in place by a scalar.
    pub fn scale_mut(&mut self, a: f64) {
        self.values.par_iter_mut().for_each(|v| *v *= a);
    }

    /// Scaled copy.
    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// Largest absolute value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Whether every value is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `∂₁` with fourth-order differences.
    pub fn d1(&self) -> CylField {
        let g = &self.grid;
        let n = g.n_x1;
        let nr = g.n_rho;
        let h = g.dx1;
        let src = &self.values;
        let mut out = CylField::zeros(g);
        out.values.par_chunks_mut(nr).enumerate().for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                *o = line_d1(|k| src[k * nr + j], n, i, h, false);
            }
        });
        out
    }

    /// `∂ρ` with fourth-order differences (zero on the axis).
    pub fn drho(&self) -> CylField {
        let g = &self.grid;
        let nr = g.n_rho;
        let h = g.drho;
        let mut out = CylField::zeros(g);
        out.values
            .par_chunks_mut(nr)
            .zip(self.values.par_chunks(nr))
            .for_each(|(o, row)| {
                for (j, v) in o.iter_mut().enumerate() {
                    *v = line_d1(|k| row[k], nr, j, h, true);
                }
            });
        out
    }

    /// `∂₁²` with fourth-order differences.
    pub fn d11(&self) -> CylField {
        let g = &self.grid;
        let n = g.n_x1;
        let nr = g.n_rho;
        let h = g.dx1;
        let src = &self.values;
        let mut out = CylField::zeros(g);
        out.values.par_chunks_mut(nr).enumerate().for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                *o = line_d2(|k| src[k * nr + j], n, i, h, false);
            }
        });
        out
    }

    /// `∂ρ²` with fourth-order differences.
    pub fn drhorho(&self) -> CylField {
        let g = &self.grid;
        let nr = g.n_rho;
        let h = g.drho;
        let mut out = CylField::zeros(g);
        out.values
            .par_chunks_mut(nr)
            .zip(self.values.par_chunks(nr))
            .for_each(|(o, row)| {
                for (j, v) in o.iter_mut().enumerate() {
                    *v = line_d2(|k| row[k], nr, j, h, true);
                }
            });
        out
    }

    /// Transverse Laplacian `Δ̄ = ∂ρ² + (3/ρ)∂ρ`, equal to `4∂ρ²` on the axis.
    pub fn laplacian_bar(&self) -> CylField {
        let g = &self.grid;
        let nr = g.n_rho;
        let h = g.drho;
        let mut out = CylField::zeros(g);
        out.values
            .par_chunks_mut(nr)
            .zip(self.values.par_chunks(nr))
            .for_each(|(o, row)| {
                for (j, v) in o.iter_mut().enumerate() {
                    *v = transverse_lap(row, j, h);
                }
            });
        out
    }

    /// Full Laplacian `∂₁² + Δ̄` on ℝ⁵.
    pub fn laplacian(&self) -> CylField {
        let mut out = self.d11();
        out.axpy(1.0, &self.laplacian_bar());
        out
    }
}

/// Fourth-order first derivative at index `k` of a line of `n` values.
///
/// With `even_start`, the line is even-reflected about index 0 (axis).
#[inline]
pub fn line_d1<F: Fn(usize) -> f64>(f: F, n: usize, k: usize, h: f64, even_start: bool) -> f64 {
    let c = 1.0 / (12.0 * h);
    if k >= 2 && k + 2 < n {
        return c * (f(k - 2) - 8.0 * f(k - 1) + 8.0 * f(k + 1) - f(k + 2));
    }
    if even_start && k == 0 {
        return 0.0;
    }
    if even_start && k == 1 {
        return c * (f(1) - 8.0 * f(0) + 8.0 * f(2) - f(3));
    }
    if k == 0 {
        return c * (0..5).map(|m| D1_END0[m] * f(m)).sum::<f64>();
    }
    if k == 1 {
        return c * (0..5).map(|m| D1_END1[m] * f(m)).sum::<f64>();
    }
    if k == n - 1 {
        return -c * (0..5).map(|m| D1_END0[m] * f(n - 1 - m)).sum::<f64>();
    }
    -c * (0..5).map(|m| D1_END1[m] * f(n - 1 - m)).sum::<f64>()
}

/// Fourth-order second derivative at index `k` of a line of `n` values.
#[inline]
pub fn line_d2<F: Fn(usize) -> f64>(f: F, n: usize, k: usize, h: f64, even_start: bool) -> f64 {
    let c = 1.0 / (12.0 * h * h);
    if k >= 2 && k + 2 < n {
        return c * (-f(k - 2) + 16.0 * f(k - 1) - 30.0 * f(k) + 16.0 * f(k + 1) - f(k + 2));
    }
    if even_start && k == 0 {
        return c * (-2.0 * f(2) + 32.0 * f(1) - 30.0 * f(0));
    }
    if even_start && k == 1 {
        return c * (16.0 * f(0) - 31.0 * f(1) + 16.0 * f(2) - f(3));
    }
    if k == 0 {
        return c * (0..6).map(|m| D2_END0[m] * f(m)).sum::<f64>();
    }
    if k == 1 {
        return c * (0..6).map(|m| D2_END1[m] * f(m)).sum::<f64>();
    }
    if k == n - 1 {
        return c * (0..6).map(|m| D2_END0[m] * f(n - 1 - m)).sum::<f64>();
    }
    c * (0..6).map(|m| D2_END1[m] * f(n - 1 - m)).sum::<f64>()
}

/// `Δ̄` at column `j` of a radial row.
#[inline]
fn transverse_lap(row: &[f64], j: usize, h: f64) -> f64 {
    let n = row.len();
    let d2 = line_d2(|k| row[k], n, j, h, true);
    if j == 0 {
        4.0 * d2
    } else {
        d2 + 3.0 / (j as f64 * h) * line_d1(|k| row[k], n, j, h, true)
    }
}

/// Laplacian restricted to the evolved nodes, written into `out`.
///
/// Frozen nodes (outer two layers) receive zero. This is the hot loop of the
/// time stepper; it uses only centred and axis-reflected stencils.
pub fn laplacian_active(u: &[f64], grid: &CylGrid, out: &mut [f64]) {
    let nr = grid.n_rho;
    let n = grid.n_x1;
    let cx = 1.0 / (12.0 * grid.dx1 * grid.dx1);
    let cr2 = 1.0 / (12.0 * grid.drho * grid.drho);
    let cr1 = 1.0 / (12.0 * grid.drho);
    let h = grid.drho;
    out.par_chunks_mut(nr).enumerate().for_each(|(i, o)| {
        if i < 2 || i + 2 >= n {
            o.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let r = |k: usize| &u[k * nr..(k + 1) * nr];
        let (a, b, c, d, e) = (r(i - 2), r(i - 1), r(i), r(i + 1), r(i + 2));
        for j in 0..nr {
            if j + 2 >= nr {
                o[j] = 0.0;
                continue;
            }
            let lx = cx * (-a[j] + 16.0 * b[j] - 30.0 * c[j] + 16.0 * d[j] - e[j]);
            let lr = if j >= 2 {
                cr2 * (-c[j - 2] + 16.0 * c[j - 1] - 30.0 * c[j] + 16.0 * c[j + 1] - c[j + 2])
                    + 3.0 / (j as f64 * h)
                        * cr1
                        * (c[j - 2] - 8.0 * c[j - 1] + 8.0 * c[j + 1] - c[j + 2])
            } else if j == 1 {
                cr2 * (16.0 * c[0] - 31.0 * c[1] + 16.0 * c[2] - c[3])
                    + 3.0 / h * cr1 * (c[1] - 8.0 * c[0] + 8.0 * c[2] - c[3])
            } else {
                4.0 * cr2 * (-2.0 * c[2] + 32.0 * c[1] - 30.0 * c[0])
            };
            o[j] = lx + lr;
        }
    });
}

/// Position-velocity pair in the energy space.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: CylField,
    pub ut: CylField,
}

impl State {
    /// The zero state.
    pub fn zeros(grid: &Arc<CylGrid>) -> Self {
        State {
            u: CylField::zeros(grid),
            ut: CylField::zeros(grid),
        }
    }

    /// Shared grid.
    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.u.grid
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: f64, x: &State) {
        self.u.axpy(a, &x.u);
        self.ut.axpy(a, &x.ut);
    }

    /// Scaled copy.
    pub fn scaled(&self, a: f64) -> State {
        State {
            u: self.u.scaled(a),
            ut: self.ut.scaled(a),
        }
    }

    /// Difference `self − o`.
    pub fn minus(&self, o: &State) -> State {
        let mut s = self.clone();
        s.axpy(-1.0, o);
        s
    }
}

/// Deterministic weighted sum `Σ w_ij g(i, j)` with per-row partial sums.
pub fn weighted_sum<F: Fn(usize, usize) -> f64 + Sync>(grid: &CylGrid, g: F) -> f64 {
    let rows: Vec<f64> = (0..grid.n_x1)
        .into_par_iter()
        .map(|i| {
            let wr = grid.rho_weights();
            let mut s = 0.0;
            for (j, w) in wr.iter().enumerate() {
                s += w * g(i, j);
            }
            s * grid.x1_weights()[i]
        })
        .collect();
    SPHERE3 * rows.iter().sum::<f64>()
}

/// `∫ f dx` over ℝ⁵ (restricted to the grid).
pub fn integrate(f: &CylField) -> f64 {
    let nr = f.grid.n_rho;
    weighted_sum(&f.grid, |i, j| f.values[i * nr + j])
}

/// `∫ f g`.
pub fn pair_l2(f: &CylField, g: &CylField) -> f64 {
    let nr = f.grid.n_rho;
    weighted_sum(&f.grid, |i, j| f.values[i * nr + j] * g.values[i * nr + j])
}

/// `∫ ∇f·∇g`.
pub fn pair_h1(f: &CylField, g: &CylField) -> f64 {
    pair_h1_ell(f, g, 0.0)
}

/// `(1−ℓ²)∫∂₁f ∂₁g + ∫∇̄f·∇̄g`.
pub fn pair_h1_ell(f: &CylField, g: &CylField, ell: f64) -> f64 {
    let (f1, fr) = (f.d1(), f.drho());
    let (g1, gr) = (g.d1(), g.drho());
    let a = 1.0 - ell * ell;
    let nr = f.grid.n_rho;
    weighted_sum(&f.grid, |i, j| {
        let k = i * nr + j;
        a * f1.values[k] * g1.values[k] + fr.values[k] * gr.values[k]
    })
}

/// Energy norm `(‖∇u‖² + ‖uₜ‖²)^(1/2)`.
pub fn norm_e(s: &State) -> f64 {
    (pair_h1(&s.u, &s.u) + pair_l2(&s.ut, &s.ut)).max(0.0).sqrt()
}

fn bracket_x(grid: &CylGrid, i: usize, j: usize) -> f64 {
    let x = grid.x1(i);
    let r = grid.rho(j);
    (1.0 + x * x + r * r).sqrt()
}

/// `‖v‖_{Y⁰}² = ∫(v² + |∇v|²)⟨x⟩`.
pub fn norm_y0(f: &CylField) -> f64 {
    let (f1, fr) = (f.d1(), f.drho());
    let nr = f.grid.n_rho;
    let g = f.grid.clone();
    weighted_sum(&g, |i, j| {
        let k = i * nr + j;
        let v = f.values[k];
        (v * v + f1.values[k] * f1.values[k] + fr.values[k] * fr.values[k]) * bracket_x(&g, i, j)
    })
    .max(0.0)
    .sqrt()
}

/// `‖v‖_{Y¹}² = ∫(|∇v|² + |∇²v|²)⟨x⟩`, with
/// `|∇²v|² = v₁₁² + 2v₁ρ² + vρρ² + 3(vρ/ρ)²`.
pub fn norm_y1(f: &CylField) -> f64 {
    let (f1, fr) = (f.d1(), f.drho());
    let f11 = f.d11();
    let frr = f.drhorho();
    let f1r = f1.drho();
    let nr = f.grid.n_rho;
    let g = f.grid.clone();
    weighted_sum(&g, |i, j| {
        let k = i * nr + j;
        let grad = f1.values[k] * f1.values[k] + fr.values[k] * fr.values[k];
        let over = if j == 0 {
            frr.values[k]
        } else {
            fr.values[k] / g.rho(j)
        };
        let hess = f11.values[k] * f11.values[k]
            + 2.0 * f1r.values[k] * f1r.values[k]
            + frr.values[k] * frr.values[k]
            + 3.0 * over * over;
        (grad + hess) * bracket_x(&g, i, j)
    })
    .max(0.0)
    .sqrt()
}

/// `‖(u, uₜ)‖_{Y¹×Y⁰}`.
pub fn norm_y1y0(s: &State) -> f64 {
    norm_y1(&s.u).hypot(norm_y0(&s.ut))
}

/// Hardy ratio `∫f²/|x|² ÷ ∫|∇f|²` and Sobolev ratio `‖f‖_{L^{10/3}} ÷ ‖∇f‖_{L²}`.
pub fn hardy_sobolev_check(f: &CylField) -> Result<(f64, f64)> {
    let grad = pair_h1(f, f);
    if !(grad > 0.0) || f.max_abs() == 0.0 {
        return Err(LabError::Domain(
            "Hardy/Sobolev ratios are undefined for a field with zero gradient".into(),
        ));
    }
    let nr = f.grid.n_rho;
    let g = f.grid.clone();
    let hardy = weighted_sum(&g, |i, j| {
        let x = g.x1(i);
        let r = g.rho(j);
        let r2 = x * x + r * r;
        if r2 == 0.0 {
            0.0
        } else {
            let v = f.values[i * nr + j];
            v * v / r2
        }
    });
    let l103 = weighted_sum(&g, |i, j| f.values[i * nr + j].abs().powf(10.0 / 3.0));
    Ok((hardy / grad, l103.powf(0.3) / grad.sqrt()))
}

/// `E = ½∫uₜ² + ½∫|∇u|² − (3/10)∫|u|^{10/3}`.
pub fn energy(s: &State) -> f64 {
    let pot = integrate(&s.u.map(crate::profiles::f_potential));
    0.5 * pair_l2(&s.ut, &s.ut) + 0.5 * pair_h1(&s.u, &s.u) - pot
}

/// Axial momentum `∫ uₜ ∂₁u`.
pub fn momentum_x1(s: &State) -> f64 {
    pair_l2(&s.ut, &s.u.d1())
}

/// JSON header of a snapshot file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub grid: CylGrid,
    pub t: f64,
    pub components: Vec<String>,
    pub layout: String,
}

const SNAPSHOT_FORMAT: &str = "wavelab-snapshot-v1";

/// Write named fields as one JSON header line followed by little-endian `f64` values.
pub fn write_snapshot<W: Write>(mut w: W, t: f64, fields: &[(&str, &CylField)]) -> Result<()> {
    let grid = fields
        .first()
        .ok_or_else(|| LabError::InvalidParameter("snapshot needs at least one field".into()))?
        .1
        .grid
        .as_ref()
        .clone();
    let header = SnapshotHeader {
        format: SNAPSHOT_FORMAT.into(),
        grid,
        t,
        components: fields.iter().map(|(n, _)| n.to_string()).collect(),
        layout: "row-major (x1 outer, rho inner), f64 little-endian".into(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (_, f) in fields {
        let mut buf = Vec::with_capacity(8 * f.values.len());
        for v in &f.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Read a snapshot written by [`write_snapshot`].
pub fn read_snapshot<R: Read>(r: R) -> Result<(SnapshotHeader, Vec<CylField>)> {
    let mut br = BufReader::new(r);
    let mut line = String::new();
    br.read_line(&mut line)?;
    let header: SnapshotHeader = serde_json::from_str(line.trim_end())?;
    if header.format != SNAPSHOT_FORMAT {
        return Err(LabError::Io(format!("unknown snapshot format {}", header.format)));
    }
    let grid = header.grid.rebuild()?;
    let mut out = Vec::new();
    for _ in &header.components {
        let mut buf = vec![0u8; 8 * grid.len()];
        br.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push(CylField {
            grid: grid.clone(),
            values,
        });
    }
    Ok((header, out))
}

/// Write a state snapshot to a file.
pub fn save_state(path: &Path, t: f64, s: &State) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_snapshot(std::io::BufWriter::new(f), t, &[("u", &s.u), ("ut", &s.ut)])
}

/// Load a state snapshot from a file.
pub fn load_state(path: &Path) -> Result<(f64, State)> {
    let f = std::fs::File::open(path)?;
    let (h, mut fields) = read_snapshot(f)?;
    if fields.len() != 2 {
        return Err(LabError::Io("state snapshot must hold two components".into()));
    }
    let ut = fields.pop().expect("two");
    let u = fields.pop().expect("two");
    Ok((h.t, State { u, ut }))
}
