//! Truncated bivariate Taylor polynomials ("jets") in the cylindrical variables.
//!
//! A cylindrically symmetric function on ℝ⁵ is written `g(x₁, q)` with `q = ρ²`.
//! Smooth even functions of ρ are smooth functions of `q`, so every differential
//! operator used by the library becomes polynomial in `(x₁, q)`:
//!
//! * `∂ρ g = 2ρ ∂_q g`
//! * `Δ̄ g = ∂ρ²g + (3/ρ)∂ρ g = 8 ∂_q g + 4q ∂_q² g`
//! * `|∇g|² = (∂₁g)² + 4q (∂_q g)²`
//!
//! No division by ρ occurs, so jets evaluate exactly on the symmetry axis.

use std::ops::{Add, Mul, Neg, Sub};

/// Maximal total degree carried by a jet.
pub const ORDER: usize = 5;
const LEN: usize = (ORDER + 1) * (ORDER + 2) / 2;

#[inline]
const fn idx(p: usize, r: usize) -> usize {
    // Graded ordering: all monomials of total degree d are stored contiguously.
    let d = p + r;
    d * (d + 1) / 2 + r
}

/// Taylor coefficients `c[p, r]` of `Σ c[p,r] dx^p dq^r`, truncated at total degree `ord`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    c: [f64; LEN],
    ord: usize,
}

impl Jet {
    /// Constant jet.
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = v;
        Jet { c, ord: ORDER }
    }

    /// The coordinate `x₁` expanded at `x0`.
    pub fn var_x(x0: f64) -> Self {
        let mut j = Jet::constant(x0);
        j.c[idx(1, 0)] = 1.0;
        j
    }

    /// The coordinate `q = ρ²` expanded at `q0`.
    pub fn var_q(q0: f64) -> Self {
        let mut j = Jet::constant(q0);
        j.c[idx(0, 1)] = 1.0;
        j
    }

    /// Coefficient of `dx^p dq^r`.
    pub fn coeff(&self, p: usize, r: usize) -> f64 {
        if p + r > self.ord {
            f64::NAN
        } else {
            self.c[idx(p, r)]
        }
    }

    /// Value at the expansion point.
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Number of valid orders carried.
    pub fn order(&self) -> usize {
        self.ord
    }

    /// Multiply by a scalar.
    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for v in out.c.iter_mut() {
            *v *= s;
        }
        out
    }

    /// Add a scalar.
    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = *self;
        out.c[0] += s;
        out
    }

    /// Partial derivative with respect to `x₁` (order drops by one).
    pub fn dx(&self) -> Self {
        assert!(self.ord >= 1, "jet order exhausted");
        let ord = self.ord - 1;
        let mut c = [0.0; LEN];
        for d in 0..=ord {
            for r in 0..=d {
                let p = d - r;
                c[idx(p, r)] = (p + 1) as f64 * self.c[idx(p + 1, r)];
            }
        }
        Jet { c, ord }
    }

    /// Partial derivative with respect to `q` (order drops by one).
    pub fn dq(&self) -> Self {
        assert!(self.ord >= 1, "jet order exhausted");
        let ord = self.ord - 1;
        let mut c = [0.0; LEN];
        for d in 0..=ord {
            for r in 0..=d {
                let p = d - r;
                c[idx(p, r)] = (r + 1) as f64 * self.c[idx(p, r + 1)];
            }
        }
        Jet { c, ord }
    }

    /// Compose a univariate function with this jet.
    ///
    /// `derivs[k]` holds the k-th derivative of the outer function at `self.value()`.
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let n = self.ord.min(derivs.len().saturating_sub(1));
        let mut delta = *self;
        delta.c[0] = 0.0;
        let mut out = Jet::constant(derivs[0]);
        out.ord = n;
        let mut power = Jet::constant(1.0);
        let mut fact = 1.0;
        for (k, dk) in derivs.iter().enumerate().take(n + 1).skip(1) {
            power = power * delta;
            fact *= k as f64;
            let s = dk / fact;
            for d in 0..=n {
                for r in 0..=d {
                    out.c[idx(d - r, r)] += s * power.c[idx(d - r, r)];
                }
            }
        }
        out.ord = n.min(self.ord);
        out
    }

    /// Exponential of the jet.
    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&[e; ORDER + 1])
    }

    /// Cylindrical Laplacian on ℝ⁵: `∂₁² + 8∂_q + 4q∂_q²` (order drops by two).
    pub fn laplacian(&self, q: &Jet) -> Self {
        let gq = self.dq();
        self.dx().dx() + gq.dq().scale(4.0) * *q + gq.scale(8.0).truncate(self.ord - 2)
    }

    /// Transverse Laplacian `Δ̄ = 8∂_q + 4q∂_q²` (order drops by two).
    pub fn laplacian_bar(&self, q: &Jet) -> Self {
        let gq = self.dq();
        gq.dq().scale(4.0) * *q + gq.scale(8.0).truncate(self.ord - 2)
    }

    /// `x·∇ = x₁∂₁ + 2q∂_q` (order drops by one).
    pub fn euler(&self, x: &Jet, q: &Jet) -> Self {
        self.dx() * *x + self.dq() * q.scale(2.0)
    }

    /// Restrict the jet to a lower order.
    pub fn truncate(&self, ord: usize) -> Self {
        let ord = ord.min(self.ord);
        let mut out = *self;
        for d in (ord + 1)..=ORDER {
            for r in 0..=d {
                out.c[idx(d - r, r)] = 0.0;
            }
        }
        out.ord = ord;
        out
    }
}

/// Value of `|∇g|²` for a jet expanded at `q0 = ρ²`.
pub fn grad_sq(g: &Jet, q0: f64) -> f64 {
    let gx = g.coeff(1, 0);
    let gq = g.coeff(0, 1);
    gx * gx + 4.0 * q0 * gq * gq
}

/// Value of `∇g·∇h` for jets expanded at `q0 = ρ²`.
pub fn grad_dot(g: &Jet, h: &Jet, q0: f64) -> f64 {
    g.coeff(1, 0) * h.coeff(1, 0) + 4.0 * q0 * g.coeff(0, 1) * h.coeff(0, 1)
}

/// Value of `∇̄g·∇̄h` (transverse gradients) for jets expanded at `q0 = ρ²`.
pub fn grad_bar_dot(g: &Jet, h: &Jet, q0: f64) -> f64 {
    4.0 * q0 * g.coeff(0, 1) * h.coeff(0, 1)
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let mut c = [0.0; LEN];
        for (i, v) in c.iter_mut().enumerate() {
            *v = self.c[i] + o.c[i];
        }
        Jet { c, ord }.truncate(ord)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let ord = self.ord.min(o.ord);
        let mut c = [0.0; LEN];
        for d1 in 0..=ord {
            for r1 in 0..=d1 {
                let a = self.c[idx(d1 - r1, r1)];
                if a == 0.0 {
                    continue;
                }
                for d2 in 0..=(ord - d1) {
                    for r2 in 0..=d2 {
                        c[idx(d1 - r1 + d2 - r2, r1 + r2)] += a * o.c[idx(d2 - r2, r2)];
                    }
                }
            }
        }
        Jet { c, ord }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}
