//! Small iterative linear-algebra kernels: preconditioned conjugate gradients
//! and a Lanczos eigensolver for symmetric pencils `C v = ν B v`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};

/// Euclidean dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y ← y + α x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solve `A x = b` for symmetric positive definite `A` with a Jacobi preconditioner.
///
/// Starts from `x = 0` and stops when `‖r‖ ≤ tol‖b‖`. Returns the iteration count.
pub fn pcg<A: Fn(&[f64], &mut [f64])>(
    apply: A,
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(0);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut trace = Vec::new();
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LabError::NonConvergence {
                message: format!("conjugate gradients met a non-positive curvature {pap:e}"),
                trace,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        let rn = dot(&r, &r).sqrt() / bnorm;
        if it % 50 == 0 {
            trace.push(rn);
        }
        if rn <= tol {
            return Ok(it + 1);
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(diag) {
            *zi = ri / di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(LabError::NonConvergence {
        message: format!("conjugate gradients did not reach {tol:e} in {max_iter} iterations"),
        trace,
    })
}

/// A symmetric pencil `(C, B)` with `B` positive definite.
pub trait Pencil {
    /// Dimension.
    fn dim(&self) -> usize;
    /// `out = C v`.
    fn apply_c(&self, v: &[f64], out: &mut [f64]);
    /// `out = B v`.
    fn apply_b(&self, v: &[f64], out: &mut [f64]);
    /// `out = B⁻¹ r`.
    fn solve_b(&self, r: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Options of the Lanczos iteration.
#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub max_iter: usize,
    /// Stop when the Ritz residual `β_m|s_m|` falls below this value.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            max_iter: 300,
            tol: 1e-10,
            seed: 7,
        }
    }
}

/// Result of a Lanczos run.
#[derive(Clone, Debug)]
pub struct LanczosResult {
    /// Largest eigenvalue `ν` of `C v = ν B v` on the constrained subspace.
    pub value: f64,
    /// Ritz vector, normalised in the `B` inner product.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// Ritz value after each iteration.
    pub trace: Vec<f64>,
}

/// Largest eigenvalue of `C v = ν B v` restricted to `{v : cᵢ·v = 0 for all i}`.
///
/// The iteration runs in the `B` inner product with full reorthogonalisation.
/// Constraints enter through their `B`-representers `B⁻¹cᵢ`.
pub fn lanczos_max<P: Pencil>(p: &P, constraints: &[Vec<f64>], opts: LanczosOptions) -> Result<LanczosResult> {
    let n = p.dim();
    // B-orthonormal basis of the constraint representers.
    let mut q_con: Vec<Vec<f64>> = Vec::new();
    let mut bq_con: Vec<Vec<f64>> = Vec::new();
    let mut tmp = vec![0.0; n];
    for c in constraints {
        let mut r = vec![0.0; n];
        p.solve_b(c, &mut r)?;
        p.apply_b(&r, &mut tmp);
        let norm0 = dot(&r, &tmp).sqrt();
        for _ in 0..2 {
            for (q, bq) in q_con.iter().zip(&bq_con) {
                let s = dot(bq, &r);
                axpy(-s, q, &mut r);
            }
        }
        p.apply_b(&r, &mut tmp);
        let norm = dot(&r, &tmp).sqrt();
        if norm > 1e-10 * norm0 {
            r.iter_mut().for_each(|v| *v /= norm);
            tmp.iter_mut().for_each(|v| *v /= norm);
            q_con.push(r);
            bq_con.push(tmp.clone());
        }
    }
    let project = |v: &mut [f64]| {
        for _ in 0..2 {
            for (q, bq) in q_con.iter().zip(&bq_con) {
                let s = dot(bq, v);
                axpy(-s, q, v);
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    project(&mut v);
    let mut bv = vec![0.0; n];
    p.apply_b(&v, &mut bv);
    let nv = dot(&v, &bv).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);
    bv.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut bbasis: Vec<Vec<f64>> = vec![bv];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut cv = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut bw = vec![0.0; n];
    for m in 0..opts.max_iter {
        let vm = &basis[m];
        p.apply_c(vm, &mut cv);
        alphas.push(dot(vm, &cv));
        p.solve_b(&cv, &mut w)?;
        project(&mut w);
        for _ in 0..2 {
            for (q, bq) in basis.iter().zip(&bbasis) {
                let s = dot(bq, &w);
                axpy(-s, q, &mut w);
            }
        }
        p.apply_b(&w, &mut bw);
        let beta = dot(&w, &bw).max(0.0).sqrt();
        let k = alphas.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imax, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        trace.push(theta);
        let resid = beta * eig.eigenvectors[(k - 1, imax)].abs();
        if resid < opts.tol || beta < 1e-14 || m + 1 == opts.max_iter {
            if !(resid < opts.tol || beta < 1e-14) {
                return Err(LabError::NonConvergence {
                    message: format!(
                        "Lanczos residual {resid:e} above {:e} after {} iterations",
                        opts.tol, opts.max_iter
                    ),
                    trace,
                });
            }
            let mut vec = vec![0.0; n];
            for (i, q) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, imax)], q, &mut vec);
            }
            return Ok(LanczosResult {
                value: theta,
                vector: vec,
                iterations: m + 1,
                trace,
            });
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        bw.iter_mut().for_each(|x| *x /= beta);
        basis.push(w.clone());
        bbasis.push(bw.clone());
    }
    unreachable!("loop returns on its last iteration")
}

/// Dense reference: largest eigenvalue of `C v = ν B v` on the constrained subspace.
///
/// `b` and `c` are full symmetric matrices; intended for small validation problems.
pub fn dense_pencil_max(c: &DMatrix<f64>, b: &DMatrix<f64>, constraints: &[Vec<f64>]) -> Result<f64> {
    let n = b.nrows();
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| LabError::Singular("reference matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| LabError::Singular("Cholesky factor is singular".into()))?;
    // In y = Lᵀv coordinates: C̃ = L⁻¹CL⁻ᵀ and constraints c·v = (L⁻¹c)·y.
    let ct = &linv * c * linv.transpose();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    for cv in constraints {
        let mut y = &linv * nalgebra::DVector::from_column_slice(cv);
        for _ in 0..2 {
            for q in &basis {
                let s = q.dot(&y);
                y -= q * s;
            }
        }
        let nrm = y.norm();
        if nrm > 1e-12 {
            basis.push(y / nrm);
        }
    }
    let mut proj = DMatrix::<f64>::identity(n, n);
    for q in &basis {
        proj -= q * q.transpose();
    }
    // Orthonormal basis of the constrained subspace: eigenvectors of the projector with eigenvalue 1.
    let pe = SymmetricEigen::new(proj);
    let cols: Vec<usize> = (0..n).filter(|&k| pe.eigenvalues[k] > 0.5).collect();
    if cols.is_empty() {
        return Err(LabError::Singular("constraints remove the whole space".into()));
    }
    let nb = DMatrix::from_fn(n, cols.len(), |i, j| pe.eigenvectors[(i, cols[j])]);
    let m = nb.transpose() * ct * &nb;
    let eig = SymmetricEigen::new(m);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}
