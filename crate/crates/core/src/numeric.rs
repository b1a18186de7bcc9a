//! Small numerical helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::Cx;

pub type CMat = DMatrix<Cx>;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Number of trapezoid nodes on the Cauchy circle.
pub const CAUCHY_NODES: usize = 48;

/// All derivatives `0..=max_order` of an analytic matrix function at `z`, from the
/// Cauchy integral on a circle of radius `r` discretized by the trapezoid rule.
pub fn cauchy_derivatives<F>(f: F, z: Cx, max_order: usize, r: f64) -> Vec<CMat>
where
    F: Fn(Cx) -> CMat,
{
    let n = CAUCHY_NODES;
    let samples: Vec<(Cx, CMat)> = (0..n)
        .map(|k| {
            let w = Cx::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64);
            (w, f(z + w * r))
        })
        .collect();
    let dim = samples[0].1.nrows();
    (0..=max_order)
        .map(|m| {
            let mut acc = CMat::zeros(dim, dim);
            for (w, val) in &samples {
                acc += val * w.powi(-(m as i32));
            }
            acc * Cx::from(factorial(m) / (n as f64 * r.powi(m as i32)))
        })
        .collect()
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Spectral norm.
pub fn norm2(m: &CMat) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn scalar_mat(v: Cx) -> CMat {
    CMat::from_element(1, 1, v)
}

/// Evaluate a polynomial with complex coefficients (constant term first).
pub fn horner(coeffs: &[Cx], z: Cx) -> Cx {
    coeffs.iter().rev().fold(Cx::new(0.0, 0.0), |acc, c| acc * z + c)
}

pub fn poly_derivative(coeffs: &[Cx]) -> Vec<Cx> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| c * k as f64)
        .collect()
}

/// Roots of a polynomial (constant term first) from companion-matrix eigenvalues.
pub fn poly_roots(coeffs: &[Cx]) -> Vec<Cx> {
    let mut c: Vec<Cx> = coeffs.to_vec();
    while c.len() > 1 && c.last().map_or(false, |x| x.norm() == 0.0) {
        c.pop();
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut comp = CMat::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = Cx::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    eigenvalues(&comp)
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &CMat) -> Vec<Cx> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    schur_eigenvalues(m)
}

fn schur_eigenvalues(m: &CMat) -> Vec<Cx> {
    let schur = nalgebra::linalg::Schur::new(m.clone());
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub type CVec = DVector<Cx>;

/// Singular value decomposition `A = U diag(s) V^H` of a square matrix.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let d = a.clone().svd(true, true);
    let u = d.u.expect("requested U");
    let v = d.v_t.expect("requested V^H").adjoint();
    Svd { u, s: d.singular_values.iter().copied().collect(), v }
}

impl Svd {
    /// Right and left singular vectors whose singular value is below `thr`.
    pub fn null_vectors(&self, thr: f64) -> (Vec<CVec>, Vec<CVec>) {
        let mut right = Vec::new();
        let mut left = Vec::new();
        for (i, s) in self.s.iter().enumerate() {
            if *s < thr {
                right.push(self.v.column(i).into_owned());
                left.push(self.u.column(i).into_owned());
            }
        }
        (right, left)
    }

    /// Minimum-norm least-squares solution, singular values below `thr` dropped.
    pub fn solve(&self, b: &CVec, thr: f64) -> CVec {
        let mut x = CVec::zeros(self.v.nrows());
        for (i, s) in self.s.iter().enumerate() {
            if *s >= thr {
                let c = self.u.column(i).dotc(b) / *s;
                x += self.v.column(i) * c;
            }
        }
        x
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
