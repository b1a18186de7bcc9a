//! Matrix convolution kernels seen through their two-sided Laplace transform
//! `K^(nu) = int K(x) e^{-nu x} dx`, its nu-derivatives and generalized moments.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::numeric::{binomial, cauchy_derivatives, eigenvalues, factorial, horner, identity, norm2, poly_roots, CMat};
use crate::quasipoly::{Polynomial, QuasiPolynomial};
use crate::{Cx, Error, Result};

const ZERO: Cx = Cx { re: 0.0, im: 0.0 };

/// `c (x-b)^p e^{-a (x-b)^2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussTerm {
    pub c: f64,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub p: u32,
}

/// `c e^{-a |x-b|}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpTerm {
    pub c: f64,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

/// `weight * delta(x - at)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracAtom {
    pub weight: CMat,
    pub at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Row-major `n x n` entries, each a sum of Gaussian terms.
    Gaussian(Vec<Vec<GaussTerm>>),
    Exponential(Vec<Vec<ExpTerm>>),
    Dirac(Vec<DiracAtom>),
    /// `M / (M - p(nu))` times the identity.
    Rational { m: f64, p: Vec<Cx> },
    /// `(speed nu I - D)^{-1} K0^(nu)`.
    Resolvent { speed: f64, d: CMat, inner: Box<KernelModel> },
    /// `left nu^power K0^(nu)`; in x-space `left K0^{(power)}(x)`.
    Weighted { left: CMat, nu_power: u32, inner: Box<KernelModel> },
    Sum(Vec<KernelModel>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelModel {
    n: usize,
    family: Family,
    eta0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H1Report {
    pub requested_eta0: f64,
    pub certified_width: f64,
    /// Smallest |Re| of a transform singularity, `None` when the transform is entire.
    pub singular_abscissa: Option<f64>,
    pub decays: bool,
    pub failures: Vec<String>,
}

impl KernelModel {
    pub fn new(n: usize, family: Family, eta0: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("kernel dimension must be positive".into()));
        }
        if !(eta0 > 0.0) {
            return Err(Error::Input(format!("eta0 must be positive, got {eta0}")));
        }
        match &family {
            Family::Gaussian(entries) => {
                check_entries(n, entries.len())?;
                if entries.iter().flatten().any(|t| !(t.a > 0.0)) {
                    return Err(Error::Input("Gaussian widths must be positive".into()));
                }
            }
            Family::Exponential(entries) => {
                check_entries(n, entries.len())?;
                if entries.iter().flatten().any(|t| !(t.a > 0.0)) {
                    return Err(Error::Input("exponential rates must be positive".into()));
                }
            }
            Family::Dirac(atoms) => {
                if atoms.iter().any(|a| a.weight.nrows() != n || a.weight.ncols() != n) {
                    return Err(Error::Dimension("Dirac weight shape".into()));
                }
            }
            Family::Rational { p, .. } => {
                if p.is_empty() {
                    return Err(Error::Input("symbol polynomial is empty".into()));
                }
            }
            Family::Resolvent { d, inner, .. } => {
                if d.nrows() != n || d.ncols() != n || inner.n != n {
                    return Err(Error::Dimension("resolvent blocks".into()));
                }
            }
            Family::Weighted { left, inner, .. } => {
                if left.nrows() != n || left.ncols() != n || inner.n != n {
                    return Err(Error::Dimension("weighted kernel blocks".into()));
                }
            }
            Family::Sum(parts) => {
                if parts.iter().any(|k| k.n != n) {
                    return Err(Error::Dimension("sum of kernels of different size".into()));
                }
            }
        }
        Ok(KernelModel { n, family, eta0 })
    }

    pub fn scalar_gaussian(terms: Vec<GaussTerm>, eta0: f64) -> Result<Self> {
        Self::new(1, Family::Gaussian(vec![terms]), eta0)
    }

    /// `factor * self`.
    pub fn scaled(&self, factor: Cx) -> Self {
        KernelModel {
            n: self.n,
            family: Family::Weighted {
                left: identity(self.n) * factor,
                nu_power: 0,
                inner: Box::new(self.clone()),
            },
            eta0: self.eta0,
        }
    }

    pub fn sum(parts: Vec<KernelModel>) -> Result<Self> {
        let n = parts.first().map(|k| k.n).ok_or_else(|| Error::Input("empty kernel sum".into()))?;
        let eta0 = parts.iter().map(|k| k.eta0).fold(f64::INFINITY, f64::min);
        Self::new(n, Family::Sum(parts), eta0)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Coefficient of `c^s` in the expansion of a resolvent symbol around speed zero:
    /// `-nu^s D^{-(s+1)} K0^(nu)`.
    pub fn speed_expansion(&self, s: u32) -> Result<KernelModel> {
        match &self.family {
            Family::Resolvent { d, inner, .. } => {
                let dinv = d
                    .clone()
                    .try_inverse()
                    .ok_or_else(|| Error::Input("resolvent matrix D is singular".into()))?;
                let mut left = -dinv.clone();
                for _ in 0..s {
                    left = &left * &dinv;
                }
                KernelModel::new(
                    self.n,
                    Family::Weighted { left, nu_power: s, inner: inner.clone() },
                    inner.eta0,
                )
            }
            _ => Err(Error::Input("speed expansion needs a resolvent kernel".into())),
        }
    }

    /// True when `K^(conj nu) = conj K^(nu)`, i.e. the kernel is real in x-space.
    pub fn is_real(&self) -> bool {
        let real_mat = |m: &CMat| m.iter().all(|v| v.im == 0.0);
        match &self.family {
            Family::Gaussian(_) | Family::Exponential(_) => true,
            Family::Dirac(atoms) => atoms.iter().all(|a| real_mat(&a.weight)),
            Family::Rational { p, .. } => p.iter().all(|c| c.im == 0.0),
            Family::Resolvent { d, inner, .. } => real_mat(d) && inner.is_real(),
            Family::Weighted { left, inner, .. } => real_mat(left) && inner.is_real(),
            Family::Sum(parts) => parts.iter().all(|k| k.is_real()),
        }
    }

    fn check_strip(&self, nu: Cx) -> Result<()> {
        if nu.re.abs() >= self.eta0 || !nu.re.is_finite() || !nu.im.is_finite() {
            return Err(Error::OutsideStrip { re: nu.re, im: nu.im, eta: self.eta0 });
        }
        Ok(())
    }

    /// `d^order/dnu^order K^(nu)`.
    pub fn transform(&self, nu: Cx, order: usize) -> Result<CMat> {
        self.check_strip(nu)?;
        Ok(self.derivs(nu, order).pop().expect("at least one derivative"))
    }

    /// All derivatives `0..=max_order` at `nu`.
    pub fn transform_derivs(&self, nu: Cx, max_order: usize) -> Result<Vec<CMat>> {
        self.check_strip(nu)?;
        Ok(self.derivs(nu, max_order))
    }

    /// Generalized moment `int x^m K(x) e^{-nu x} dx = (-1)^m K^{(m)}(nu)`.
    pub fn moment(&self, m: usize, nu: Cx) -> Result<CMat> {
        let t = self.transform(nu, m)?;
        Ok(if m % 2 == 0 { t } else { -t })
    }

    fn derivs(&self, nu: Cx, max_order: usize) -> Vec<CMat> {
        let n = self.n;
        match &self.family {
            Family::Gaussian(entries) => (0..=max_order)
                .map(|m| {
                    CMat::from_fn(n, n, |i, j| {
                        entries[i * n + j].iter().map(|t| gauss_deriv(t, nu, m)).sum()
                    })
                })
                .collect(),
            Family::Exponential(entries) => (0..=max_order)
                .map(|m| {
                    CMat::from_fn(n, n, |i, j| entries[i * n + j].iter().map(|t| exp_deriv(t, nu, m)).sum())
                })
                .collect(),
            Family::Dirac(atoms) => (0..=max_order)
                .map(|m| {
                    let mut acc = CMat::zeros(n, n);
                    for a in atoms {
                        let w = Cx::from(-a.at).powu(m as u32) * (-nu * a.at).exp();
                        acc += &a.weight * w;
                    }
                    acc
                })
                .collect(),
            Family::Rational { .. } | Family::Resolvent { .. } => {
                let v0 = self.symbol_value(nu);
                if max_order == 0 {
                    return vec![v0];
                }
                let r = (0.5 * self.analytic_radius(nu)).min(0.5);
                let mut d = cauchy_derivatives(|z| self.symbol_value(z), nu, max_order, r);
                d[0] = v0;
                d
            }
            Family::Weighted { left, nu_power, inner } => {
                let inner_d = inner.derivs(nu, max_order);
                let p = *nu_power as usize;
                (0..=max_order)
                    .map(|m| {
                        let mut acc = CMat::zeros(n, n);
                        // Leibniz on nu^p * K0(nu).
                        for j in 0..=m.min(p) {
                            let dpow = Cx::from(factorial(p) / factorial(p - j)) * nu.powu((p - j) as u32);
                            acc += &inner_d[m - j] * (dpow * binomial(m, j));
                        }
                        left * acc
                    })
                    .collect()
            }
            Family::Sum(parts) => {
                let mut acc = vec![CMat::zeros(n, n); max_order + 1];
                for k in parts {
                    for (a, d) in acc.iter_mut().zip(k.derivs(nu, max_order)) {
                        *a += d;
                    }
                }
                acc
            }
        }
    }

    fn symbol_value(&self, nu: Cx) -> CMat {
        match &self.family {
            Family::Rational { m, p } => {
                let v = Cx::from(*m) / (Cx::from(*m) - horner(p, nu));
                identity(self.n) * v
            }
            Family::Resolvent { speed, d, inner } => {
                let a = identity(self.n) * (nu * *speed) - d;
                let k0 = inner.derivs(nu, 0).pop().expect("order 0");
                match a.clone().lu().solve(&k0) {
                    Some(v) => v,
                    None => CMat::from_element(self.n, self.n, Cx::new(f64::NAN, f64::NAN)),
                }
            }
            _ => self.derivs(nu, 0).pop().expect("order 0"),
        }
    }

    /// Poles of the transform (symbol families only).
    pub fn poles(&self) -> Vec<Cx> {
        match &self.family {
            Family::Rational { m, p } => {
                let mut q: Vec<Cx> = p.iter().map(|c| -c).collect();
                q[0] += *m;
                poly_roots(&q)
            }
            Family::Resolvent { speed, d, inner } => {
                let mut out = inner.poles();
                if *speed != 0.0 {
                    out.extend(eigenvalues(d).into_iter().map(|e| e / *speed));
                }
                out
            }
            Family::Weighted { inner, .. } => inner.poles(),
            Family::Sum(parts) => parts.iter().flat_map(|k| k.poles()).collect(),
            _ => Vec::new(),
        }
    }

    /// Distance from `nu` to the nearest transform singularity.
    pub fn analytic_radius(&self, nu: Cx) -> f64 {
        let mut r = f64::INFINITY;
        for p in self.poles() {
            r = r.min((p - nu).norm());
        }
        r.min(self.abscissa_radius(nu))
    }

    fn abscissa_radius(&self, nu: Cx) -> f64 {
        match &self.family {
            Family::Exponential(entries) => entries
                .iter()
                .flatten()
                .map(|t| t.a - nu.re.abs())
                .fold(f64::INFINITY, f64::min),
            Family::Resolvent { inner, .. } | Family::Weighted { inner, .. } => inner.abscissa_radius(nu),
            Family::Sum(parts) => parts.iter().map(|k| k.abscissa_radius(nu)).fold(f64::INFINITY, f64::min),
            _ => f64::INFINITY,
        }
    }

    /// Smallest `|Re|` of a transform singularity.
    pub fn singular_abscissa(&self) -> Option<f64> {
        let poles = self.poles().into_iter().map(|p| p.re.abs());
        let lines = self.line_abscissae().into_iter();
        poles.chain(lines).fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
    }

    fn line_abscissae(&self) -> Vec<f64> {
        match &self.family {
            Family::Exponential(entries) => entries.iter().flatten().map(|t| t.a).collect(),
            Family::Resolvent { inner, .. } | Family::Weighted { inner, .. } => inner.line_abscissae(),
            Family::Sum(parts) => parts.iter().flat_map(|k| k.line_abscissae()).collect(),
            _ => Vec::new(),
        }
    }

    fn has_dirac(&self) -> bool {
        match &self.family {
            Family::Dirac(_) => true,
            Family::Resolvent { inner, .. } | Family::Weighted { inner, .. } => inner.has_dirac(),
            Family::Sum(parts) => parts.iter().any(|k| k.has_dirac()),
            _ => false,
        }
    }

    /// Certify the analyticity strip and decay along horizontal lines by sampling.
    pub fn validate_h1(&self) -> H1Report {
        let abscissa = self.singular_abscissa();
        let mut width = self.eta0;
        if let Some(a) = abscissa {
            width = width.min(a - (0.02 * a).max(1e-3));
        }
        let mut failures = Vec::new();
        if width <= 0.0 {
            failures.push("no strip free of transform singularities".to_string());
        }
        let eta = 0.9 * width.max(0.0);
        for k in 0..=200 {
            let im = -50.0 + 0.5 * k as f64;
            for re in [-eta, eta] {
                let v = self.derivs(Cx::new(re, im), 0).pop().expect("order 0");
                if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    failures.push(format!("transform not finite at {re}{im:+}i"));
                }
            }
        }
        let mut decays = true;
        if self.has_dirac() {
            decays = false;
            failures.push("Dirac masses: transform does not decay".into());
        } else {
            for re in [0.0, 0.5 * eta, -0.5 * eta] {
                let near = norm2(&self.derivs(Cx::new(re, 0.0), 0)[0]).max(1.0);
                let far = [200.0, -200.0, 400.0, -400.0]
                    .iter()
                    .map(|im| norm2(&self.derivs(Cx::new(re, *im), 0)[0]))
                    .fold(0.0, f64::max);
                if !(far < 1e-2 * near) {
                    decays = false;
                    failures.push(format!("no decay along Re nu = {re}"));
                }
            }
        }
        H1Report {
            requested_eta0: self.eta0,
            certified_width: width.max(0.0),
            singular_abscissa: abscissa,
            decays,
            failures,
        }
    }

    /// `K * u` on quasi-polynomials:
    /// `K * (x^q e^{nu x}) = e^{nu x} sum_r C(q,r) (-1)^r moment(r, nu) x^{q-r}`.
    pub fn convolve_qp(&self, u: &QuasiPolynomial) -> Result<QuasiPolynomial> {
        if u.dim() != self.n {
            return Err(Error::Dimension(format!("kernel of size {} applied to {}-vector", self.n, u.dim())));
        }
        let mut out = Vec::with_capacity(u.terms().len());
        for t in u.terms() {
            let q = match t.poly.degree() {
                Some(q) => q,
                None => continue,
            };
            let d = self.transform_derivs(t.nu, q)?;
            // moment(r) = (-1)^r K^{(r)}, and the convolution carries another (-1)^r.
            let coeffs: Vec<Vec<Cx>> = (0..=q)
                .map(|j| {
                    let mut acc = vec![ZERO; self.n];
                    for deg in j..=q {
                        let r = deg - j;
                        let w = binomial(deg, r);
                        let c = t.poly.coeff(deg).expect("degree in range");
                        for (row, a) in acc.iter_mut().enumerate() {
                            for (col, cv) in c.iter().enumerate() {
                                *a += d[r][(row, col)] * cv * w;
                            }
                        }
                    }
                    acc
                })
                .collect();
            out.push((t.nu, Polynomial::new(self.n, coeffs)?));
        }
        QuasiPolynomial::from_terms(self.n, out)
    }

    /// Closed-form x-space value, when one exists.
    pub fn eval_x(&self, x: f64) -> Result<CMat> {
        let n = self.n;
        match &self.family {
            Family::Gaussian(entries) => Ok(CMat::from_fn(n, n, |i, j| {
                entries[i * n + j]
                    .iter()
                    .map(|t| {
                        let y = x - t.b;
                        Cx::from(t.c * y.powi(t.p as i32) * (-t.a * y * y).exp())
                    })
                    .sum()
            })),
            Family::Exponential(entries) => Ok(CMat::from_fn(n, n, |i, j| {
                entries[i * n + j]
                    .iter()
                    .map(|t| Cx::from(t.c * (-t.a * (x - t.b).abs()).exp()))
                    .sum()
            })),
            Family::Weighted { left, nu_power: 0, inner } => Ok(left * inner.eval_x(x)?),
            Family::Sum(parts) => {
                let mut acc = CMat::zeros(n, n);
                for k in parts {
                    acc += k.eval_x(x)?;
                }
                Ok(acc)
            }
            Family::Dirac(_) => Err(Error::Input("Dirac kernels have no x-space values".into())),
            _ => Err(Error::Symbol("no closed x-space form".into())),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        match &self.family {
            Family::Gaussian(_) | Family::Exponential(_) => true,
            Family::Weighted { nu_power: 0, inner, .. } => inner.has_closed_form(),
            Family::Sum(parts) => parts.iter().all(|k| k.has_closed_form()),
            _ => false,
        }
    }

    /// Half-width beyond which the kernel mass is below `rel` of the total.
    pub fn tail_width(&self, rel: f64) -> f64 {
        let l = (1.0 / rel).ln() + 5.0;
        match &self.family {
            Family::Gaussian(entries) => entries
                .iter()
                .flatten()
                .map(|t| t.b.abs() + ((l + 3.0 * t.p as f64) / t.a).sqrt())
                .fold(0.0, f64::max),
            Family::Exponential(entries) => entries.iter().flatten().map(|t| t.b.abs() + l / t.a).fold(0.0, f64::max),
            Family::Weighted { inner, .. } => inner.tail_width(rel),
            Family::Sum(parts) => parts.iter().map(|k| k.tail_width(rel)).fold(0.0, f64::max),
            Family::Dirac(atoms) => atoms.iter().map(|a| a.at.abs()).fold(0.0, f64::max),
            Family::Rational { .. } => l / self.singular_abscissa().unwrap_or(1.0).max(0.05),
            // A convolution of the inner kernel with the resolvent's exponential decay.
            Family::Resolvent { inner, .. } => {
                inner.tail_width(rel) + l / self.singular_abscissa().unwrap_or(1.0).max(0.05)
            }
        }
    }

    /// `K(j h)` for `j = -m..=m`, closed form when available, otherwise by inverse FFT
    /// of `K^(i l)`.
    pub fn tabulate(&self, h: f64, m: usize) -> Result<Vec<CMat>> {
        if self.has_closed_form() {
            return (0..=2 * m).map(|j| self.eval_x((j as f64 - m as f64) * h)).collect();
        }
        self.tabulate_fft(h, m)
    }

    pub fn tabulate_fft(&self, h: f64, m: usize) -> Result<Vec<CMat>> {
        if self.has_dirac() {
            return Err(Error::Input("Dirac kernels cannot be tabulated".into()));
        }
        let n = self.n;
        let size = (8 * m + 8).max(4096).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_inverse(size);
        let mut out = vec![CMat::zeros(n, n); 2 * m + 1];
        let dl = 2.0 * PI / (size as f64 * h);
        let samples: Vec<CMat> = (0..size)
            .map(|k| {
                let kk = if k < size / 2 { k as f64 } else { k as f64 - size as f64 };
                self.derivs(Cx::new(0.0, kk * dl), 0).pop().expect("order 0")
            })
            .collect();
        for r in 0..n {
            for c in 0..n {
                let mut buf: Vec<Cx> = samples.iter().map(|s| s[(r, c)]).collect();
                fft.process(&mut buf);
                for (j, o) in out.iter_mut().enumerate() {
                    let idx = (j as isize - m as isize).rem_euclid(size as isize) as usize;
                    o[(r, c)] = buf[idx] / (size as f64 * h);
                }
            }
        }
        Ok(out)
    }
}

fn check_entries(n: usize, len: usize) -> Result<()> {
    if len != n * n {
        return Err(Error::Dimension(format!("expected {} kernel entries, got {len}", n * n)));
    }
    Ok(())
}

/// `d^m/dnu^m` of the transform of `c (x-b)^p e^{-a(x-b)^2}`, carried as
/// `P(nu) exp(nu^2/(4a) - b nu)` with `P` a polynomial.
fn gauss_deriv(t: &GaussTerm, nu: Cx, m: usize) -> Cx {
    let s = 1.0 / (4.0 * t.a);
    let mut p = vec![Cx::from(t.c * (PI / t.a).sqrt())];
    // (x-b)^p factor: -(d/dnu) applied to the centered Gaussian transform.
    for _ in 0..t.p {
        p = step(&p, 2.0 * s, 0.0).into_iter().map(|c| -c).collect();
    }
    for _ in 0..m {
        p = step(&p, 2.0 * s, -t.b);
    }
    horner(&p, nu) * (nu * nu * s - nu * t.b).exp()
}

/// `P -> P' + (k nu + c0) P`.
fn step(p: &[Cx], k: f64, c0: f64) -> Vec<Cx> {
    let mut out = vec![ZERO; p.len() + 1];
    for (i, c) in p.iter().enumerate() {
        if i > 0 {
            out[i - 1] += c * i as f64;
        }
        out[i] += c * c0;
        out[i + 1] += c * k;
    }
    out
}

/// `d^m/dnu^m [c e^{-nu b} (1/(a+nu) + 1/(a-nu))]`.
fn exp_deriv(t: &ExpTerm, nu: Cx, m: usize) -> Cx {
    let e = (-nu * t.b).exp();
    let mut acc = ZERO;
    for j in 0..=m {
        let fj = factorial(j);
        let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
        let rat = (t.a + nu).powi(-(j as i32 + 1)) * (sgn * fj) + (t.a - nu).powi(-(j as i32 + 1)) * fj;
        acc += rat * Cx::from(-t.b).powu((m - j) as u32) * binomial(m, j);
    }
    acc * e * t.c
}
