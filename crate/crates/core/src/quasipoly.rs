//! Quasi-polynomials `sum_j p_j(x) e^{nu_j x}` with `C^n`-valued polynomial coefficients.
//!
//! Values are kept in canonical form: frequencies closer than [`FREQ_TOL`] are merged,
//! coefficients below [`TRIM_REL`] times the largest coefficient of their term are zeroed,
//! and polynomials are trimmed to a nonzero leading coefficient. Terms are ordered by
//! `(Im nu, Re nu)`.

use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::numeric::binomial;
use crate::{Cx, Error, Result};

pub const FREQ_TOL: f64 = 1e-9;
pub const TRIM_REL: f64 = 1e-13;

const ZERO: Cx = Cx { re: 0.0, im: 0.0 };

/// Polynomial with `C^n` coefficients, constant term first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n: usize,
    coeffs: Vec<Vec<Cx>>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial { n, coeffs: Vec::new() }
    }

    pub fn new(n: usize, coeffs: Vec<Vec<Cx>>) -> Result<Self> {
        if coeffs.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension(format!("polynomial coefficient length differs from n = {n}")));
        }
        let mut p = Polynomial { n, coeffs };
        p.trim();
        Ok(p)
    }

    pub fn monomial(degree: usize, v: Vec<Cx>) -> Self {
        let n = v.len();
        let mut coeffs = vec![vec![ZERO; n]; degree];
        coeffs.push(v);
        let mut p = Polynomial { n, coeffs };
        p.trim();
        p
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[Vec<Cx>] {
        &self.coeffs
    }

    pub fn coeff(&self, d: usize) -> Option<&[Cx]> {
        self.coeffs.get(d).map(|c| c.as_slice())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    fn trim(&mut self) {
        let m = self.max_abs();
        if m == 0.0 || !m.is_finite() {
            if m == 0.0 {
                self.coeffs.clear();
            }
            return;
        }
        let floor = TRIM_REL * m;
        for c in self.coeffs.iter_mut().flatten() {
            if c.norm() < floor {
                *c = ZERO;
            }
        }
        while self
            .coeffs
            .last()
            .map_or(false, |c| c.iter().all(|v| *v == ZERO))
        {
            self.coeffs.pop();
        }
    }

    pub fn eval(&self, x: Cx) -> Vec<Cx> {
        let mut acc = vec![ZERO; self.n];
        for c in self.coeffs.iter().rev() {
            for (a, ci) in acc.iter_mut().zip(c) {
                *a = *a * x + ci;
            }
        }
        acc
    }

    fn add_assign(&mut self, other: &Polynomial) {
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), vec![ZERO; self.n]);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            for (ai, bi) in a.iter_mut().zip(b) {
                *ai += bi;
            }
        }
    }

    pub fn scale(&self, s: Cx) -> Polynomial {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.iter().map(|v| v * s).collect())
            .collect();
        let mut p = Polynomial { n: self.n, coeffs };
        p.trim();
        p
    }

    pub fn derivative(&self) -> Polynomial {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(d, c)| c.iter().map(|v| v * d as f64).collect())
            .collect();
        Polynomial { n: self.n, coeffs }
    }

    /// Coefficients of `x -> p(x + xi)`.
    pub fn recenter(&self, xi: Cx) -> Polynomial {
        let len = self.coeffs.len();
        let mut coeffs = vec![vec![ZERO; self.n]; len];
        for (d, c) in self.coeffs.iter().enumerate() {
            let mut xp = Cx::new(1.0, 0.0);
            // x^d -> sum_j C(d, j) xi^{d-j} x^j, walked from j = d downwards.
            for j in (0..=d).rev() {
                let w = xp * binomial(d, j);
                for (o, ci) in coeffs[j].iter_mut().zip(c) {
                    *o += ci * w;
                }
                xp *= xi;
            }
        }
        Polynomial { n: self.n, coeffs }
    }

    /// Cauchy product where `self` is scalar (n = 1).
    fn mul_scalar(&self, other: &Polynomial) -> Polynomial {
        debug_assert_eq!(self.n, 1);
        if self.is_zero() || other.is_zero() {
            return Polynomial::zero(other.n);
        }
        let len = self.coeffs.len() + other.coeffs.len() - 1;
        let mut coeffs = vec![vec![ZERO; other.n]; len];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                for (o, bk) in coeffs[i + j].iter_mut().zip(b) {
                    *o += a[0] * bk;
                }
            }
        }
        Polynomial { n: other.n, coeffs }
    }

    fn conj(&self) -> Polynomial {
        Polynomial {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|v| v.conj()).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub nu: Cx,
    pub poly: Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QpRepr", into = "QpRepr")]
pub struct QuasiPolynomial {
    n: usize,
    terms: Vec<Term>,
}

impl QuasiPolynomial {
    pub fn zero(n: usize) -> Self {
        QuasiPolynomial { n, terms: Vec::new() }
    }

    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Cx, Polynomial)>) -> Result<Self> {
        let mut raw = Vec::new();
        for (nu, poly) in terms {
            if poly.n != n {
                return Err(Error::Dimension(format!("term of dimension {} in a {n}-vector quasi-polynomial", poly.n)));
            }
            raw.push(Term { nu, poly });
        }
        Ok(Self::canonical(n, raw))
    }

    /// `x^degree e^{nu x} v`.
    pub fn monomial(nu: Cx, degree: usize, v: Vec<Cx>) -> Self {
        let n = v.len();
        Self::canonical(n, vec![Term { nu, poly: Polynomial::monomial(degree, v) }])
    }

    /// Scalar `x^degree e^{nu x}`.
    pub fn scalar(nu: Cx, degree: usize) -> Self {
        Self::monomial(nu, degree, vec![Cx::new(1.0, 0.0)])
    }

    pub fn constant(v: Vec<Cx>) -> Self {
        Self::monomial(ZERO, 0, v)
    }

    fn canonical(n: usize, raw: Vec<Term>) -> Self {
        let mut merged: Vec<Term> = Vec::with_capacity(raw.len());
        for t in raw {
            match merged.iter_mut().find(|m| (m.nu - t.nu).norm() < FREQ_TOL) {
                Some(m) => m.poly.add_assign(&t.poly),
                None => merged.push(t),
            }
        }
        for t in merged.iter_mut() {
            t.poly.trim();
        }
        merged.retain(|t| !t.poly.is_zero());
        merged.sort_by(|a, b| {
            a.nu.im
                .partial_cmp(&b.nu.im)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.nu.re.partial_cmp(&b.nu.re).unwrap_or(std::cmp::Ordering::Equal))
        });
        QuasiPolynomial { n, terms: merged }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = Cx> + '_ {
        self.terms.iter().map(|t| t.nu)
    }

    /// Polynomial part at frequency `nu` (within the merge tolerance).
    pub fn at_frequency(&self, nu: Cx) -> Option<&Polynomial> {
        self.terms
            .iter()
            .find(|t| (t.nu - nu).norm() < FREQ_TOL)
            .map(|t| &t.poly)
    }

    /// Largest coefficient magnitude.
    pub fn coeff_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.poly.max_abs()).fold(0.0, f64::max)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Dimension(format!("adding {}-vector and {}-vector quasi-polynomials", self.n, other.n)));
        }
        let raw = self.terms.iter().chain(&other.terms).cloned().collect();
        Ok(Self::canonical(self.n, raw))
    }

    pub fn scale(&self, s: Cx) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| Term { nu: t.nu, poly: t.poly.scale(s) })
            .collect();
        Self::canonical(self.n, raw)
    }

    /// Product; at least one factor must be scalar.
    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let (s, v) = match (self.n, other.n) {
            (1, _) => (self, other),
            (_, 1) => (other, self),
            (a, b) => {
                return Err(Error::Dimension(format!("product of {a}-vector and {b}-vector quasi-polynomials")))
            }
        };
        let mut raw = Vec::with_capacity(s.terms.len() * v.terms.len());
        for a in &s.terms {
            for b in &v.terms {
                raw.push(Term { nu: a.nu + b.nu, poly: a.poly.mul_scalar(&b.poly) });
            }
        }
        Ok(Self::canonical(v.n, raw))
    }

    /// `d/dx`: term-wise `(p' + nu p) e^{nu x}`.
    pub fn diff(&self) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| {
                let mut p = t.poly.derivative();
                p.add_assign(&t.poly.scale(t.nu));
                Term { nu: t.nu, poly: p }
            })
            .collect();
        Self::canonical(self.n, raw)
    }

    /// `x -> a(x + xi)`.
    pub fn shift(&self, xi: f64) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| {
                let p = t.poly.recenter(Cx::from(xi)).scale((t.nu * xi).exp());
                Term { nu: t.nu, poly: p }
            })
            .collect();
        Self::canonical(self.n, raw)
    }

    /// `x -> a(-x)`.
    pub fn reflect(&self) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| {
                let coeffs = t
                    .poly
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(d, c)| {
                        let s = if d % 2 == 0 { 1.0 } else { -1.0 };
                        c.iter().map(|v| v * s).collect()
                    })
                    .collect();
                Term { nu: -t.nu, poly: Polynomial { n: self.n, coeffs } }
            })
            .collect();
        Self::canonical(self.n, raw)
    }

    pub fn eval(&self, x: f64) -> Vec<Cx> {
        let mut acc = vec![ZERO; self.n];
        for t in &self.terms {
            let e = (t.nu * x).exp();
            for (a, v) in acc.iter_mut().zip(t.poly.eval(Cx::from(x))) {
                *a += v * e;
            }
        }
        acc
    }

    /// `m`-th derivative at the origin, from `d^m/dx^m (x^q e^{nu x})|_0 = m!/(m-q)! nu^{m-q}`.
    pub fn derivative_at_zero(&self, m: usize) -> Vec<Cx> {
        let mut acc = vec![ZERO; self.n];
        for t in &self.terms {
            for (q, c) in t.poly.coeffs.iter().enumerate().take(m + 1) {
                let w = falling(m, q) * t.nu.powu((m - q) as u32);
                for (a, ci) in acc.iter_mut().zip(c) {
                    *a += ci * w;
                }
            }
        }
        acc
    }

    /// Complex-conjugate function.
    pub fn conj(&self) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| Term { nu: t.nu.conj(), poly: t.poly.conj() })
            .collect();
        Self::canonical(self.n, raw)
    }

    /// Scalar component `i`.
    pub fn component(&self, i: usize) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| Term {
                nu: t.nu,
                poly: Polynomial { n: 1, coeffs: t.poly.coeffs.iter().map(|c| vec![c[i]]).collect() },
            })
            .collect();
        Self::canonical(1, raw)
    }

    /// Scalar times a fixed vector.
    pub fn times_vector(&self, v: &[Cx]) -> Result<Self> {
        if self.n != 1 {
            return Err(Error::Dimension("times_vector needs a scalar quasi-polynomial".into()));
        }
        let raw = self
            .terms
            .iter()
            .map(|t| Term {
                nu: t.nu,
                poly: Polynomial {
                    n: v.len(),
                    coeffs: t.poly.coeffs.iter().map(|c| v.iter().map(|vi| c[0] * vi).collect()).collect(),
                },
            })
            .collect();
        Ok(Self::canonical(v.len(), raw))
    }

    /// Drop coefficients below an absolute threshold.
    pub fn prune(&self, abs_tol: f64) -> Self {
        let raw = self
            .terms
            .iter()
            .map(|t| {
                let coeffs = t
                    .poly
                    .coeffs
                    .iter()
                    .map(|c| c.iter().map(|v| if v.norm() < abs_tol { ZERO } else { *v }).collect())
                    .collect();
                Term { nu: t.nu, poly: Polynomial { n: self.n, coeffs } }
            })
            .collect();
        Self::canonical(self.n, raw)
    }
}

fn falling(m: usize, q: usize) -> f64 {
    ((m - q + 1)..=m).fold(1.0, |acc, k| acc * k as f64)
}

impl Add for &QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn add(self, rhs: &QuasiPolynomial) -> QuasiPolynomial {
        self.try_add(rhs).expect("quasi-polynomial dimensions differ")
    }
}

impl Sub for &QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn sub(self, rhs: &QuasiPolynomial) -> QuasiPolynomial {
        self + &(-rhs)
    }
}

impl Neg for &QuasiPolynomial {
    type Output = QuasiPolynomial;
    fn neg(self) -> QuasiPolynomial {
        self.scale(Cx::new(-1.0, 0.0))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRepr {
    nu: [f64; 2],
    poly: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QpRepr {
    n: usize,
    terms: Vec<TermRepr>,
}

impl From<QuasiPolynomial> for QpRepr {
    fn from(q: QuasiPolynomial) -> Self {
        QpRepr {
            n: q.n,
            terms: q
                .terms
                .into_iter()
                .map(|t| TermRepr {
                    nu: [t.nu.re, t.nu.im],
                    poly: t
                        .poly
                        .coeffs
                        .iter()
                        .map(|c| c.iter().map(|v| [v.re, v.im]).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<QpRepr> for QuasiPolynomial {
    type Error = Error;
    fn try_from(r: QpRepr) -> Result<Self> {
        if r.n == 0 {
            return Err(Error::Dimension("quasi-polynomial dimension must be positive".into()));
        }
        let mut raw = Vec::with_capacity(r.terms.len());
        for t in r.terms {
            let coeffs = t
                .poly
                .into_iter()
                .map(|c| c.into_iter().map(|[re, im]| Cx::new(re, im)).collect())
                .collect();
            raw.push((Cx::new(t.nu[0], t.nu[1]), Polynomial::new(r.n, coeffs)?));
        }
        QuasiPolynomial::from_terms(r.n, raw)
    }
}
