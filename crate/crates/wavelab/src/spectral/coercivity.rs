//! Constrained Rayleigh quotients of the linearised quadratic forms.
//!
//! A form `Q` with reference norm `N` is written `Q = N − C`. The smallest
//! constrained quotient `Q/N` equals `1 − ν` where `ν` is the largest eigenvalue
//! of the pencil `C v = ν N v` on the constrained subspace, computed by Lanczos.
//!
//! Unknowns live on the active nodes of a cylindrical grid; the two outer layers
//! carry homogeneous Dirichlet data. The stiffness matrix is the mass-weighted
//! finite-difference Laplacian, symmetrised along `ρ` where the one-sided axis
//! stencils break symmetry.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{line_d1, line_d2, CylGrid, SPHERE3};
use crate::jet::Jet;
use crate::linalg::{dot, lanczos_max, pcg, LanczosOptions, Pencil};
use crate::profiles::{f_prime, Localizer};
use crate::spectral::ground::GroundState;
use crate::spectral::modes::ModeFamily;

/// Quadratic forms available to [`measure_coercivity`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoercivityForm {
    /// `⟨L_ℓ g, g⟩` against `‖g‖²_{Ḣ¹_ℓ}`, orthogonal to `ΛW_ℓ, ∂₁W_ℓ, W_ℓ` in `Ḣ¹_ℓ`.
    LWithWOrth,
    /// `⟨L_ℓ g, g⟩` against `‖g‖²_{Ḣ¹_ℓ}`, orthogonal to `ΛW_ℓ, ∂₁W_ℓ` in `Ḣ¹_ℓ` and to `Y_ℓ` in `L²`.
    LWithYOrth,
    /// `∫|∇_ℓ g|²φ² − f'(W_ℓ)g²` against `∫|∇_ℓ g|²φ²`, constraints of `LWithYOrth`.
    LLocalized,
    /// `⟨H_ℓ 𝐠, 𝐠⟩` against `‖𝐠‖²_E`, orthogonal to `ΛW_ℓ, ∂₁W_ℓ` in `Ḣ¹_ℓ` and to `Z_ℓ^±` in `L²`.
    HEll,
    /// Localized `H_ℓ` form against `∫(|∇g|² + h²)φ²`, orthogonal to `ΛW_ℓ, ∂₁W_ℓ` in `Ḣ¹` and to `Z_ℓ^±`.
    HEllLocalized,
}

impl CoercivityForm {
    /// All forms.
    pub const ALL: [CoercivityForm; 5] = [
        CoercivityForm::LWithWOrth,
        CoercivityForm::LWithYOrth,
        CoercivityForm::LLocalized,
        CoercivityForm::HEll,
        CoercivityForm::HEllLocalized,
    ];

    /// Whether the form acts on pairs `(g, h)`.
    pub fn is_pair(&self) -> bool {
        matches!(self, CoercivityForm::HEll | CoercivityForm::HEllLocalized)
    }

    /// Whether the form carries the localizer `φ`.
    pub fn is_localized(&self) -> bool {
        matches!(self, CoercivityForm::LLocalized | CoercivityForm::HEllLocalized)
    }

    /// The orthogonality conditions stated for the form.
    pub fn default_constraints(&self) -> Vec<Constraint> {
        use Constraint::*;
        match self {
            CoercivityForm::LWithWOrth => vec![Lambda, Grad, W],
            CoercivityForm::LWithYOrth | CoercivityForm::LLocalized => vec![Lambda, Grad, Y],
            CoercivityForm::HEll | CoercivityForm::HEllLocalized => vec![Lambda, Grad, ZPlus, ZMinus],
        }
    }
}

/// One orthogonality condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Gradient pairing with `ΛW_ℓ`.
    Lambda,
    /// Gradient pairing with `∂₁W_ℓ`.
    Grad,
    /// Gradient pairing with `W_ℓ`.
    W,
    /// `L²` pairing with `Y_ℓ` (first component).
    Y,
    /// `L²` pairing of the pair with `Z_ℓ^+`.
    ZPlus,
    /// `L²` pairing of the pair with `Z_ℓ^−`.
    ZMinus,
}

/// Index set of unknowns: nodes `2 ≤ i ≤ n_x1−3`, `0 ≤ j ≤ n_rho−3`.
#[derive(Clone, Debug)]
pub struct ActiveSpace {
    pub grid: Arc<CylGrid>,
    pub ni: usize,
    pub nj: usize,
}

impl ActiveSpace {
    /// Active nodes of a grid.
    pub fn new(grid: Arc<CylGrid>) -> Result<Self> {
        if grid.n_x1 < 8 || grid.n_rho < 6 {
            return Err(LabError::InvalidParameter("grid too small for a quadratic form".into()));
        }
        Ok(ActiveSpace {
            ni: grid.n_x1 - 4,
            nj: grid.n_rho - 2,
            grid,
        })
    }

    /// Number of active nodes.
    pub fn len(&self) -> usize {
        self.ni * self.nj
    }

    /// Whether there are no active nodes.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of active node `k`.
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (a, b) = (k / self.nj, k % self.nj);
        (self.grid.x1(a + 2), self.grid.rho(b))
    }

    /// Sample a function on the active nodes.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let (x, r) = self.coords(k);
                f(x, r)
            })
            .collect()
    }

    /// Operator mass `2π² dx₁ m_j` with `m_0 = h⁴/64` and `m_j = ρ_j³h`.
    pub fn mass(&self) -> Vec<f64> {
        let h = self.grid.drho;
        let row: Vec<f64> = (0..self.nj)
            .map(|j| if j == 0 { h.powi(4) / 64.0 } else { self.grid.rho(j).powi(3) * h })
            .collect();
        (0..self.len())
            .map(|k| SPHERE3 * self.grid.dx1 * row[k % self.nj])
            .collect()
    }
}

/// Mass-weighted stiffness `K = a_x Sx ⊗ M_ρ + M_x ⊗ S_ρ` on the active nodes.
#[derive(Clone, Debug)]
pub struct Stiffness {
    pub space: ActiveSpace,
    /// Weight of the axial part (`1 − ℓ²` for the ℓ-pairing).
    pub aniso: f64,
    mass: Vec<f64>,
    /// Five diagonals of the symmetrised radial matrix, offsets −2..=2.
    srho: Vec<[f64; 5]>,
}

impl Stiffness {
    /// Build the stiffness on a space.
    pub fn new(space: ActiveSpace, aniso: f64) -> Self {
        let nj = space.nj;
        let nr = space.grid.n_rho;
        let h = space.grid.drho;
        let mrho: Vec<f64> = (0..nj)
            .map(|j| if j == 0 { h.powi(4) / 64.0 } else { space.grid.rho(j).powi(3) * h })
            .collect();
        // Strong-form radial operator on the active columns (outer two columns are zero).
        let mut a = vec![vec![0.0; nj]; nj];
        for m in 0..nj {
            let unit = |k: usize| if k == m { 1.0 } else { 0.0 };
            for (j, row) in a.iter_mut().enumerate() {
                let d2 = line_d2(unit, nr, j, h, true);
                row[m] = if j == 0 {
                    4.0 * d2
                } else {
                    d2 + 3.0 / (j as f64 * h) * line_d1(unit, nr, j, h, true)
                };
            }
        }
        let dx = space.grid.dx1;
        let mut srho = vec![[0.0; 5]; nj];
        for j in 0..nj {
            for off in 0..5 {
                let m = j as isize + off as isize - 2;
                if m < 0 || m >= nj as isize {
                    continue;
                }
                let m = m as usize;
                srho[j][off] = -0.5 * SPHERE3 * dx * (mrho[j] * a[j][m] + mrho[m] * a[m][j]);
            }
        }
        let mass = space.mass();
        Stiffness { space, aniso, mass, srho }
    }

    /// `out = K v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let (ni, nj) = (self.space.ni, self.space.nj);
        let dx = self.space.grid.dx1;
        let cx = self.aniso / (12.0 * dx * dx);
        for i in 0..ni {
            for j in 0..nj {
                let k = i * nj + j;
                let g = |ii: isize| -> f64 {
                    if ii < 0 || ii >= ni as isize {
                        0.0
                    } else {
                        v[ii as usize * nj + j]
                    }
                };
                let ii = i as isize;
                let dxx = -g(ii - 2) + 16.0 * g(ii - 1) - 30.0 * v[k] + 16.0 * g(ii + 1) - g(ii + 2);
                let mut s = -cx * self.mass[k] * dxx;
                let row = &self.srho[j];
                for (off, c) in row.iter().enumerate() {
                    let m = j as isize + off as isize - 2;
                    if m >= 0 && (m as usize) < nj {
                        s += c * v[i * nj + m as usize];
                    }
                }
                out[k] = s;
            }
        }
    }

    /// Diagonal of `K`.
    pub fn diagonal(&self) -> Vec<f64> {
        let dx = self.space.grid.dx1;
        let cx = self.aniso / (12.0 * dx * dx);
        (0..self.space.len())
            .map(|k| 30.0 * cx * self.mass[k] + self.srho[k % self.space.nj][2])
            .collect()
    }

    /// Operator mass on the active nodes.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// Fourth-order centred `∂₁` on the active nodes with zero padding (antisymmetric).
fn d1_active(space: &ActiveSpace, v: &[f64], out: &mut [f64]) {
    let (ni, nj) = (space.ni, space.nj);
    let c = 1.0 / (12.0 * space.grid.dx1);
    for i in 0..ni {
        for j in 0..nj {
            let g = |ii: isize| -> f64 {
                if ii < 0 || ii >= ni as isize {
                    0.0
                } else {
                    v[ii as usize * nj + j]
                }
            };
            let ii = i as isize;
            out[i * nj + j] = c * (g(ii - 2) - 8.0 * g(ii - 1) + 8.0 * g(ii + 1) - g(ii + 2));
        }
    }
}

/// Ingredients of a discrete quadratic form.
#[derive(Clone, Debug)]
pub struct FormParts {
    /// Axial stiffness weight.
    pub aniso: f64,
    /// `f'(background)` at the active nodes.
    pub potential: Vec<f64>,
    /// Weight `c` of the cross term `2∫c ∂₁g h φ²` (pair forms only).
    pub cross: Option<Vec<f64>>,
    /// `(φ, φΔ_aφ)` at the active nodes for localized forms.
    pub localizer: Option<(Vec<f64>, Vec<f64>)>,
    /// Whether the unknown is a pair `(g, h)`.
    pub pair: bool,
}

/// Discrete pencil `(C, N)` of a form `Q = N − C`.
#[derive(Clone, Debug)]
pub struct DiscreteForm {
    pub stiff: Stiffness,
    pub parts: FormParts,
    /// Diagonal of the `g` block of `N`.
    ndiag: Vec<f64>,
    /// `M f'` at the nodes.
    pmass: Vec<f64>,
    /// `M c φ²` at the nodes.
    xmass: Vec<f64>,
    /// `M φ²` (or `M`) for the `h` block.
    hmass: Vec<f64>,
    /// `M φΔφ` for the localized `g` block.
    lmass: Vec<f64>,
    pub cg_tol: f64,
}

impl DiscreteForm {
    /// Assemble a form on a grid.
    pub fn new(grid: Arc<CylGrid>, parts: FormParts) -> Result<Self> {
        let space = ActiveSpace::new(grid)?;
        let n = space.len();
        for (name, len) in [
            ("potential", Some(parts.potential.len())),
            ("cross", parts.cross.as_ref().map(|c| c.len())),
            ("localizer", parts.localizer.as_ref().map(|l| l.0.len().min(l.1.len()))),
        ] {
            if let Some(l) = len {
                if l != n {
                    return Err(LabError::InvalidParameter(format!(
                        "{name} has {l} entries, expected {n}"
                    )));
                }
            }
        }
        let stiff = Stiffness::new(space, parts.aniso);
        let mass = stiff.mass().to_vec();
        let kd = stiff.diagonal();
        let (phi2, lmass): (Vec<f64>, Vec<f64>) = match &parts.localizer {
            Some((phi, pl)) => (
                phi.iter().map(|p| p * p).collect(),
                pl.iter().zip(&mass).map(|(a, m)| a * m).collect(),
            ),
            None => (vec![1.0; n], vec![0.0; n]),
        };
        let ndiag: Vec<f64> = (0..n).map(|k| phi2[k] * kd[k] + lmass[k]).collect();
        if ndiag.iter().any(|d| !(*d > 0.0)) {
            return Err(LabError::InvalidParameter(
                "reference norm is not positive on the grid (localizer exponent too large)".into(),
            ));
        }
        let pmass = parts.potential.iter().zip(&mass).map(|(p, m)| p * m).collect();
        let xmass = match &parts.cross {
            Some(c) => (0..n).map(|k| c[k] * phi2[k] * mass[k]).collect(),
            None => vec![0.0; n],
        };
        let hmass = (0..n).map(|k| phi2[k] * mass[k]).collect();
        Ok(DiscreteForm {
            stiff,
            parts,
            ndiag,
            pmass,
            xmass,
            hmass,
            lmass,
            cg_tol: 1e-11,
        })
    }

    /// Active index set.
    pub fn space(&self) -> &ActiveSpace {
        &self.stiff.space
    }

    /// Number of active nodes per component.
    pub fn nodes(&self) -> usize {
        self.stiff.space.len()
    }

    /// `g`-block of the reference norm.
    fn apply_ng(&self, v: &[f64], out: &mut [f64]) {
        match &self.parts.localizer {
            None => self.stiff.apply(v, out),
            Some((phi, _)) => {
                let pv: Vec<f64> = v.iter().zip(phi).map(|(a, b)| a * b).collect();
                self.stiff.apply(&pv, out);
                for k in 0..v.len() {
                    out[k] = phi[k] * out[k] + self.lmass[k] * v[k];
                }
            }
        }
    }

    /// `L²` constraint vector `M ψ` for a sampled `ψ`.
    pub fn l2_functional(&self, psi: &[f64]) -> Vec<f64> {
        psi.iter().zip(self.stiff.mass()).map(|(a, m)| a * m).collect()
    }

    /// Evaluate `1 − vᵀCv / vᵀNv` for a vector.
    pub fn rayleigh(&self, v: &[f64]) -> f64 {
        let mut cv = vec![0.0; v.len()];
        let mut nv = vec![0.0; v.len()];
        self.apply_c(v, &mut cv);
        self.apply_b(v, &mut nv);
        1.0 - dot(v, &cv) / dot(v, &nv)
    }

    /// Value of the form `vᵀ(N − C)v`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        let mut cv = vec![0.0; v.len()];
        let mut nv = vec![0.0; v.len()];
        self.apply_c(v, &mut cv);
        self.apply_b(v, &mut nv);
        dot(v, &nv) - dot(v, &cv)
    }

    /// Reference norm squared `vᵀNv`.
    pub fn reference(&self, v: &[f64]) -> f64 {
        let mut nv = vec![0.0; v.len()];
        self.apply_b(v, &mut nv);
        dot(v, &nv)
    }
}

impl Pencil for DiscreteForm {
    fn dim(&self) -> usize {
        if self.parts.pair {
            2 * self.nodes()
        } else {
            self.nodes()
        }
    }

    fn apply_c(&self, v: &[f64], out: &mut [f64]) {
        let n = self.nodes();
        for k in 0..n {
            out[k] = self.pmass[k] * v[k];
        }
        if self.parts.pair {
            let (g, h) = v.split_at(n);
            let (og, oh) = out.split_at_mut(n);
            if self.parts.cross.is_some() {
                // C = [[P, −Xᵀ], [−X, 0]] with X g = M c φ² ∂₁g and Xᵀ = −∂₁(M c φ² ·).
                let mut d = vec![0.0; n];
                d1_active(self.space(), g, &mut d);
                for k in 0..n {
                    oh[k] = -self.xmass[k] * d[k];
                }
                let xh: Vec<f64> = (0..n).map(|k| self.xmass[k] * h[k]).collect();
                d1_active(self.space(), &xh, &mut d);
                for k in 0..n {
                    og[k] += d[k];
                }
            } else {
                oh.iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    fn apply_b(&self, v: &[f64], out: &mut [f64]) {
        let n = self.nodes();
        self.apply_ng(&v[..n], &mut out[..n]);
        if self.parts.pair {
            for k in 0..n {
                out[n + k] = self.hmass[k] * v[n + k];
            }
        }
    }

    fn solve_b(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.nodes();
        pcg(
            |v, o| self.apply_ng(v, o),
            &self.ndiag,
            &r[..n],
            &mut out[..n],
            self.cg_tol,
            20 * n,
        )?;
        if self.parts.pair {
            for k in 0..n {
                out[n + k] = r[n + k] / self.hmass[k];
            }
        }
        Ok(())
    }
}

/// Options of [`measure_coercivity_with`].
#[derive(Clone, Debug)]
pub struct CoercivityOptions {
    /// Grid carrying the discrete form.
    pub grid: Arc<CylGrid>,
    pub lanczos: LanczosOptions,
    /// Relative tolerance of the inner conjugate-gradient solves.
    pub cg_tol: f64,
}

impl CoercivityOptions {
    /// Coarse default: `[−30, 30] × [0, 30]` with spacing 0.4.
    pub fn coarse() -> Result<Self> {
        Ok(CoercivityOptions {
            grid: CylGrid::new(-30.0, 30.0, 30.0, 151, 76)?,
            lanczos: LanczosOptions {
                max_iter: 400,
                tol: 1e-9,
                seed: 7,
            },
            cg_tol: 1e-11,
        })
    }
}

/// Outcome of a coercivity measurement.
#[derive(Clone, Debug, Serialize)]
pub struct CoercivityResult {
    pub form: CoercivityForm,
    pub ell: f64,
    pub alpha: f64,
    pub constraints: Vec<Constraint>,
    /// Smallest constrained Rayleigh quotient.
    pub mu: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Assemble the discrete form and constraint functionals of a coercivity problem.
pub fn assemble_form(
    form: CoercivityForm,
    ell: f64,
    alpha: f64,
    gs: Arc<GroundState>,
    constraints: &[Constraint],
    grid: Arc<CylGrid>,
) -> Result<(DiscreteForm, Vec<Vec<f64>>)> {
    if form.is_localized() && !(alpha > 0.0 && alpha <= 0.1) {
        return Err(LabError::InvalidParameter(format!(
            "localizer exponent must lie in (0, 0.1] for localized forms, got {alpha}"
        )));
    }
    let fam = ModeFamily::new(ell, gs.clone())?;
    let a = fam.a;
    let space = ActiveSpace::new(grid.clone())?;
    // L forms use the ℓ-stretched metric; H forms the plain gradient.
    let aniso = if form.is_pair() { 1.0 } else { a * a };
    // Gradient pairings: ℓ-pairing for the non-localized H form and the L forms.
    let pair_aniso = match form {
        CoercivityForm::HEllLocalized => 1.0,
        _ => a * a,
    };
    let potential = space.sample(|x1, rho| f_prime(crate::profiles::eval_w(x1 / a, rho)));
    let localizer = if form.is_localized() {
        let loc = Localizer::new(alpha, 0.0, 1.0)?;
        let phi = space.sample(|x1, rho| loc.eval(x1, rho));
        let pl = space.sample(|x1, rho| {
            let j = loc.jet(x1, rho * rho);
            let lap = aniso * j.dx().dx().value() + j.laplacian_bar(&Jet::var_q(rho * rho)).value();
            j.value() * lap
        });
        Some((phi, pl))
    } else {
        None
    };
    let parts = FormParts {
        aniso,
        potential,
        cross: if form.is_pair() { Some(vec![ell; space.len()]) } else { None },
        localizer,
        pair: form.is_pair(),
    };
    let df = DiscreteForm::new(grid, parts)?;
    let n = df.nodes();
    let grad_pairing = |psi: &dyn Fn(f64, f64) -> Jet| -> Vec<f64> {
        let vals = df.space().sample(|x1, rho| {
            let q0 = rho * rho;
            let j = psi(x1, q0);
            -(pair_aniso * j.dx().dx().value() + j.laplacian_bar(&Jet::var_q(q0)).value())
        });
        df.l2_functional(&vals)
    };
    let extend = |v: Vec<f64>| -> Vec<f64> {
        if form.is_pair() {
            let mut out = v;
            out.resize(2 * n, 0.0);
            out
        } else {
            v
        }
    };
    let mut cons = Vec::new();
    for c in constraints {
        let v = match c {
            Constraint::Lambda => extend(grad_pairing(&|x1, q0| ModeFamily::lambda_op(&fam.w_jet(x1, q0), x1, q0))),
            Constraint::Grad => extend(grad_pairing(&|x1, q0| fam.w_jet(x1, q0).dx())),
            Constraint::W => extend(grad_pairing(&|x1, q0| fam.w_jet(x1, q0))),
            Constraint::Y => {
                let y = df.space().sample(|x1, rho| gs.y.value((x1 * x1 / (a * a) + rho * rho).sqrt()));
                extend(df.l2_functional(&y))
            }
            Constraint::ZPlus | Constraint::ZMinus => {
                if !form.is_pair() {
                    return Err(LabError::InvalidParameter(
                        "Z^± constraints apply to pair forms only".into(),
                    ));
                }
                let sign = if *c == Constraint::ZPlus { 1.0 } else { -1.0 };
                let mut z1 = Vec::with_capacity(n);
                let mut z2 = Vec::with_capacity(n);
                for k in 0..n {
                    let (x1, rho) = df.space().coords(k);
                    let (p, q) = fam.z_pm_point(sign, x1, rho)?;
                    z1.push(p);
                    z2.push(q);
                }
                let mut v = df.l2_functional(&z1);
                v.extend(df.l2_functional(&z2));
                v
            }
        };
        cons.push(v);
    }
    Ok((df, cons))
}

/// Smallest constrained Rayleigh quotient with the default constraints and coarse grid.
pub fn measure_coercivity(form: CoercivityForm, ell: f64, alpha: f64, gs: Arc<GroundState>) -> Result<CoercivityResult> {
    measure_coercivity_with(form, ell, alpha, gs, &form.default_constraints(), &CoercivityOptions::coarse()?)
}

/// Smallest constrained Rayleigh quotient with explicit constraints and options.
pub fn measure_coercivity_with(
    form: CoercivityForm,
    ell: f64,
    alpha: f64,
    gs: Arc<GroundState>,
    constraints: &[Constraint],
    opts: &CoercivityOptions,
) -> Result<CoercivityResult> {
    let (mut df, cons) = assemble_form(form, ell, alpha, gs, constraints, opts.grid.clone())?;
    df.cg_tol = opts.cg_tol;
    let r = lanczos_max(&df, &cons, opts.lanczos)?;
    Ok(CoercivityResult {
        form,
        ell,
        alpha,
        constraints: constraints.to_vec(),
        mu: 1.0 - r.value,
        iterations: r.iterations,
        trace: r.trace,
    })
}
