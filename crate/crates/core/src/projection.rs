//! Projection onto the kernel of `T` and the coordinate map for its basis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::numeric::{cauchy_derivatives, scalar_mat, svd, CMat, CVec};
use crate::quasipoly::QuasiPolynomial;
use crate::spectrum::Spectrum;
use crate::{Cx, Error, Result};

const ZERO: Cx = Cx { re: 0.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasisLabel {
    pub root: usize,
    pub chain: usize,
    pub p: usize,
}

/// Kernel basis `phi_{j,k,p}` in the public coordinate order: roots by `|Im nu|`,
/// a conjugate pair interleaved per `(k, p)` with the `Im > 0` member first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelBasis {
    pub n: usize,
    pub elements: Vec<QuasiPolynomial>,
    pub labels: Vec<BasisLabel>,
    /// Chain heads `e^0`, then left null vectors, in root order.
    pub heads: Vec<Vec<Cx>>,
    pub adjoint: Vec<Vec<Cx>>,
}

impl KernelBasis {
    pub fn from_spectrum(spec: &Spectrum) -> Result<Self> {
        let roots = &spec.roots;
        let n = roots
            .first()
            .map(|r| r.chains[0][0].len())
            .ok_or_else(|| Error::Input("no characteristic roots: nothing to reduce".into()))?;
        let mut elements = Vec::new();
        let mut labels = Vec::new();
        let push_root = |j: usize, out_e: &mut Vec<QuasiPolynomial>, out_l: &mut Vec<BasisLabel>| {
            let phis = roots[j].basis();
            let mut it = phis.into_iter();
            for (k, chain) in roots[j].chains.iter().enumerate() {
                for p in 0..chain.len() {
                    out_e.push(it.next().expect("one element per chain vector"));
                    out_l.push(BasisLabel { root: j, chain: k, p });
                }
            }
        };
        let mut j = 0;
        while j < roots.len() {
            let r = &roots[j];
            let pair = roots.get(j + 1).filter(|s| {
                r.nu.im > 0.0
                    && (s.nu - r.nu.conj()).norm() < 1e-9
                    && s.chains.iter().map(Vec::len).eq(r.chains.iter().map(Vec::len))
            });
            match pair {
                Some(_) => {
                    let (mut e1, mut l1, mut e2, mut l2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                    push_root(j, &mut e1, &mut l1);
                    push_root(j + 1, &mut e2, &mut l2);
                    for (a, b) in e1.into_iter().zip(e2) {
                        elements.push(a);
                        elements.push(b);
                    }
                    for (a, b) in l1.into_iter().zip(l2) {
                        labels.push(a);
                        labels.push(b);
                    }
                    j += 2;
                }
                None => {
                    push_root(j, &mut elements, &mut labels);
                    j += 1;
                }
            }
        }
        let heads = roots.iter().flat_map(|r| r.chains.iter().map(|c| c[0].clone())).collect();
        let adjoint = roots.iter().flat_map(|r| r.adjoint.iter().cloned()).collect();
        Ok(KernelBasis { n, elements, labels, heads, adjoint })
    }

    /// Basis from explicit elements; the standard basis serves as chain heads.
    pub fn from_elements(elements: Vec<QuasiPolynomial>) -> Result<Self> {
        let n = elements.first().map(|e| e.dim()).ok_or_else(|| Error::Input("empty basis".into()))?;
        let labels = (0..elements.len()).map(|i| BasisLabel { root: i, chain: 0, p: 0 }).collect();
        let heads = (0..n)
            .map(|i| (0..n).map(|j| if i == j { Cx::new(1.0, 0.0) } else { ZERO }).collect())
            .collect();
        Ok(KernelBasis { n, elements, labels, heads, adjoint: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `sum_l c_l phi_l`.
    pub fn combine(&self, coords: &[Cx]) -> QuasiPolynomial {
        let mut acc = QuasiPolynomial::zero(self.n);
        for (c, phi) in coords.iter().zip(&self.elements) {
            if *c != ZERO {
                acc = &acc + &phi.scale(*c);
            }
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weight {
    Gaussian,
    Sech,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    #[default]
    Pointwise,
    Gram,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Functional {
    /// `u -> <u^{(order)}(0), direction>`.
    DerivativeAt0 { order: usize, direction: Vec<Cx> },
    /// `u -> int <u(y), pairing(y)> w(y) dy`.
    WeightedInner { weight: Weight, pairing: QuasiPolynomial },
}

impl Functional {
    pub fn apply(&self, u: &QuasiPolynomial) -> Result<Cx> {
        match self {
            Functional::DerivativeAt0 { order, direction } => {
                let d = u.derivative_at_zero(*order);
                if d.len() != direction.len() {
                    return Err(Error::Dimension("functional direction".into()));
                }
                Ok(d.iter().zip(direction).map(|(a, b)| a * b.conj()).sum())
            }
            Functional::WeightedInner { weight, pairing } => weighted_pairing(*weight, u, pairing),
        }
    }
}

/// `int x^q e^{nu x} w(x) dx` for `q = 0..=max_q`.
pub fn weight_moments(weight: Weight, nu: Cx, max_q: usize) -> Result<Vec<Cx>> {
    match weight {
        Weight::Gaussian => {
            // d^q/dnu^q [sqrt(pi) e^{nu^2/4}] = P_q(nu) e^{nu^2/4}, P_{q+1} = P_q' + (nu/2) P_q.
            let e = (nu * nu * 0.25).exp();
            let mut p = vec![Cx::from(PI.sqrt())];
            let mut out = Vec::with_capacity(max_q + 1);
            for _ in 0..=max_q {
                out.push(crate::numeric::horner(&p, nu) * e);
                let mut next = vec![ZERO; p.len() + 1];
                for (i, c) in p.iter().enumerate() {
                    if i > 0 {
                        next[i - 1] += c * i as f64;
                    }
                    next[i + 1] += c * 0.5;
                }
                p = next;
            }
            Ok(out)
        }
        Weight::Sech => {
            // int e^{nu x} sech x dx = pi sec(pi nu / 2) for |Re nu| < 1.
            if nu.re.abs() >= 1.0 {
                return Err(Error::OutsideStrip { re: nu.re, im: nu.im, eta: 1.0 });
            }
            let f = |z: Cx| scalar_mat(Cx::from(PI) / (z * (PI / 2.0)).cos());
            let r = (0.5 * (1.0 - nu.re.abs())).min(0.5);
            let mut d: Vec<Cx> = cauchy_derivatives(f, nu, max_q, r).into_iter().map(|m| m[(0, 0)]).collect();
            d[0] = f(nu)[(0, 0)];
            Ok(d)
        }
    }
}

fn weighted_pairing(weight: Weight, u: &QuasiPolynomial, pairing: &QuasiPolynomial) -> Result<Cx> {
    if u.dim() != pairing.dim() {
        return Err(Error::Dimension("pairing element".into()));
    }
    let mut acc = ZERO;
    for tu in u.terms() {
        for tp in pairing.terms() {
            let (Some(du), Some(dp)) = (tu.poly.degree(), tp.poly.degree()) else { continue };
            let moments = weight_moments(weight, tu.nu + tp.nu.conj(), du + dp)?;
            for (a, ca) in tu.poly.coeffs().iter().enumerate() {
                for (b, cb) in tp.poly.coeffs().iter().enumerate() {
                    let dot: Cx = ca.iter().zip(cb).map(|(x, y)| x * y.conj()).sum();
                    acc += dot * moments[a + b];
                }
            }
        }
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub flavor: Flavor,
    pub basis: KernelBasis,
    pub functionals: Vec<Functional>,
    /// `A_{kl} = f_k(phi_l)`.
    pub matrix: CMat,
    pub inverse: CMat,
    pub condition: f64,
    /// True when a functional on a chain-head direction had to be skipped for rank,
    /// or a direction beyond the chain heads was needed.
    pub extended: bool,
}

fn functional_matrix(basis: &KernelBasis, fs: &[Functional]) -> Result<CMat> {
    let mut a = CMat::zeros(fs.len(), basis.len());
    for (k, f) in fs.iter().enumerate() {
        for (l, phi) in basis.elements.iter().enumerate() {
            a[(k, l)] = f.apply(phi)?;
        }
    }
    Ok(a)
}

fn rank(a: &CMat) -> usize {
    let d = svd(a);
    let top = d.s.iter().copied().fold(0.0, f64::max);
    d.s.iter().filter(|s| **s > 1e-9 * top.max(1e-300)).count()
}

/// Orthonormal directions spanned greedily by `cands`, in order.
fn span_directions(cands: impl IntoIterator<Item = Vec<Cx>>) -> Vec<CVec> {
    let mut out: Vec<CVec> = Vec::new();
    for c in cands {
        let mut v = CVec::from_vec(c);
        for q in &out {
            let proj = q.dotc(&v);
            v -= q * proj;
        }
        let nv = v.norm();
        if nv > 1e-8 {
            out.push(v / Cx::from(nv));
        }
    }
    out
}

impl Projection {
    pub fn build_pointwise(basis: KernelBasis) -> Result<Self> {
        let m = basis.len();
        let n = basis.n;
        let std = (0..n).map(|i| {
            let mut e = vec![ZERO; n];
            e[i] = Cx::new(1.0, 0.0);
            e
        });
        // Heads keep their own normalization; the rest are orthogonalized against them.
        let mut dirs: Vec<Vec<Cx>> = Vec::new();
        let mut seen = Vec::new();
        for h in &basis.heads {
            if span_directions(seen.iter().cloned().chain([h.clone()])).len() > seen.len() {
                seen.push(h.clone());
                dirs.push(h.clone());
            }
        }
        let n_primary = dirs.len();
        for extra in span_directions(seen.iter().cloned().chain(basis.adjoint.iter().cloned()).chain(std))
            .into_iter()
            .skip(seen.len())
        {
            dirs.push(extra.iter().copied().collect());
        }
        let mut fs: Vec<Functional> = Vec::new();
        let mut extended = false;
        let max_order = 2 * m + 4;
        'outer: for order in 0..=max_order {
            for (di, d) in dirs.iter().enumerate() {
                if fs.len() == m {
                    break 'outer;
                }
                let cand = Functional::DerivativeAt0 { order, direction: d.clone() };
                let mut trial = fs.clone();
                trial.push(cand.clone());
                if rank(&functional_matrix(&basis, &trial)?) == trial.len() {
                    if di >= n_primary {
                        extended = true;
                    }
                    fs = trial;
                } else if di < n_primary {
                    extended = true;
                }
            }
        }
        if fs.len() < m {
            return Err(Error::SingularProjection(format!("only {} independent functionals for {m} basis elements", fs.len())));
        }
        Self::finish(Flavor::Pointwise, basis, fs, extended)
    }

    pub fn build_gram(basis: KernelBasis, weight: Weight) -> Result<Self> {
        let fs = basis
            .elements
            .iter()
            .map(|phi| Functional::WeightedInner { weight, pairing: phi.clone() })
            .collect();
        Self::finish(Flavor::Gram, basis, fs, false)
    }

    fn finish(flavor: Flavor, basis: KernelBasis, functionals: Vec<Functional>, extended: bool) -> Result<Self> {
        let matrix = functional_matrix(&basis, &functionals)?;
        let d = svd(&matrix);
        let smax = d.s.iter().copied().fold(0.0, f64::max);
        let smin = d.s.iter().copied().fold(f64::INFINITY, f64::min);
        let condition = smax / smin;
        if !(condition < 1e12) {
            return Err(Error::SingularProjection(format!("condition number {condition:e}")));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularProjection("functional matrix not invertible".into()))?;
        Ok(Projection { flavor, basis, functionals, matrix, inverse, condition, extended })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Kernel coordinates `A^{-1} f(u)`.
    pub fn coords(&self, u: &QuasiPolynomial) -> Result<Vec<Cx>> {
        if u.dim() != self.basis.n {
            return Err(Error::Dimension(format!("projecting a {}-vector onto a {}-vector basis", u.dim(), self.basis.n)));
        }
        let f: Vec<Cx> = self.functionals.iter().map(|f| f.apply(u)).collect::<Result<_>>()?;
        Ok((&self.inverse * CVec::from_vec(f)).iter().copied().collect())
    }

    pub fn project(&self, u: &QuasiPolynomial) -> Result<(Vec<Cx>, QuasiPolynomial)> {
        let c = self.coords(u)?;
        let e = self.basis.combine(&c);
        Ok((c, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Cx {
        Cx::new(re, im)
    }

    /// {zeta0, conj zeta0, zeta1, conj zeta1} at frequency i l.
    fn turing_basis(l: f64) -> KernelBasis {
        let z = c(0.0, l);
        KernelBasis::from_elements(vec![
            QuasiPolynomial::scalar(z, 0),
            QuasiPolynomial::scalar(z.conj(), 0),
            QuasiPolynomial::scalar(z, 1),
            QuasiPolynomial::scalar(z.conj(), 1),
        ])
        .unwrap()
    }

    fn approx(a: &[Cx], b: &[Cx], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() < tol)
    }

    #[test]
    fn turing_functional_matrix() {
        for l in [1.0, 0.7, 1.9] {
            let p = Projection::build_pointwise(turing_basis(l)).unwrap();
            assert!(!p.extended);
            let det = p.matrix.determinant();
            assert!((det - c(-16.0 * l.powi(4), 0.0)).norm() < 1e-12 * (1.0 + l.powi(4)), "{det}");
        }
    }

    #[test]
    fn turing_projection_values() {
        let l: f64 = 1.3;
        let z = c(0.0, l);
        let p = Projection::build_pointwise(turing_basis(l)).unwrap();
        let x2z = QuasiPolynomial::scalar(z, 2);
        let want = [c(1.5 / (l * l), 0.0), c(-1.5 / (l * l), 0.0), c(0.0, -2.0 / l), c(0.0, -1.0 / l)];
        assert!(approx(&p.coords(&x2z).unwrap(), &want, 1e-12));
        let e3 = QuasiPolynomial::scalar(z * 3.0, 0);
        let want = [c(-4.0, 0.0), c(5.0, 0.0), c(0.0, 8.0 * l), c(0.0, 4.0 * l)];
        assert!(approx(&p.coords(&e3).unwrap(), &want, 1e-11));
    }

    #[test]
    fn constant_basis() {
        let p = Projection::build_pointwise(KernelBasis::from_elements(vec![QuasiPolynomial::constant(vec![c(1.0, 0.0)])]).unwrap())
            .unwrap();
        let u = &QuasiPolynomial::scalar(c(0.0, 2.0), 3) + &QuasiPolynomial::constant(vec![c(0.4, 0.0)]);
        let (coords, _) = p.project(&u).unwrap();
        assert!((coords[0] - u.eval(0.0)[0]).norm() < 1e-15);
    }

    #[test]
    fn gaussian_weight_pairing() {
        let l: f64 = 0.8;
        let m = weight_moments(Weight::Gaussian, c(0.0, l), 0).unwrap();
        assert!((m[0] - c(PI.sqrt() * (-l * l / 4.0).exp(), 0.0)).norm() < 1e-15);
    }

    /// Trapezoid oracle for the weight moments on [-80, 80].
    fn quad_moment(w: Weight, nu: Cx, q: usize) -> Cx {
        let (a, b, steps) = (-80.0f64, 80.0f64, 160_000);
        let h = (b - a) / steps as f64;
        let mut acc = c(0.0, 0.0);
        for i in 0..=steps {
            let x = a + i as f64 * h;
            let wx = match w {
                Weight::Gaussian => (-x * x).exp(),
                Weight::Sech => 1.0 / x.cosh(),
            };
            let f = (nu * x).exp() * x.powi(q as i32) * wx;
            acc += if i == 0 || i == steps { f * 0.5 } else { f };
        }
        acc * h
    }

    #[test]
    fn weight_moments_match_quadrature() {
        for w in [Weight::Gaussian, Weight::Sech] {
            for nu in [c(0.0, 0.0), c(0.0, 1.3), c(0.2, -2.1)] {
                let m = weight_moments(w, nu, 4).unwrap();
                for (q, mq) in m.iter().enumerate() {
                    let quad = quad_moment(w, nu, q);
                    assert!((mq - quad).norm() < 1e-9 * (1.0 + quad.norm()), "{w:?} {nu} q={q}: {mq} vs {quad}");
                }
            }
        }
    }

    #[test]
    fn gram_and_pointwise_are_both_idempotent() {
        let l = 1.0;
        let u = QuasiPolynomial::scalar(c(0.0, l), 2);
        for p in [
            Projection::build_pointwise(turing_basis(l)).unwrap(),
            Projection::build_gram(turing_basis(l), Weight::Gaussian).unwrap(),
            Projection::build_gram(turing_basis(l), Weight::Sech).unwrap(),
        ] {
            let (c1, e1) = p.project(&u).unwrap();
            let (c2, _) = p.project(&e1).unwrap();
            assert!(approx(&c1, &c2, 1e-12));
        }
        let a = Projection::build_pointwise(turing_basis(l)).unwrap().coords(&u).unwrap();
        let b = Projection::build_gram(turing_basis(l), Weight::Gaussian).unwrap().coords(&u).unwrap();
        assert!(!approx(&a, &b, 1e-3));
    }

    #[test]
    fn vector_heads_first() {
        // E0 = {e0, x e0}, e0 = (1, 1)/sqrt(2): functionals are <u(0), e0>, <u'(0), e0>.
        let s = 1.0 / 2f64.sqrt();
        let e0 = vec![c(s, 0.0), c(s, 0.0)];
        let mut basis = KernelBasis::from_elements(vec![
            QuasiPolynomial::monomial(c(0.0, 0.0), 0, e0.clone()),
            QuasiPolynomial::monomial(c(0.0, 0.0), 1, e0.clone()),
        ])
        .unwrap();
        basis.heads = vec![e0.clone()];
        let p = Projection::build_pointwise(basis).unwrap();
        assert!(!p.extended);
        assert_eq!(p.functionals[0], Functional::DerivativeAt0 { order: 0, direction: e0.clone() });
        assert_eq!(p.functionals[1], Functional::DerivativeAt0 { order: 1, direction: e0 });
    }

    proptest! {
        #[test]
        fn projection_properties(
            re in proptest::collection::vec(-1.0f64..1.0, 3),
            im in proptest::collection::vec(-1.0f64..1.0, 3),
            deg in 0usize..4,
            gram in proptest::bool::ANY,
        ) {
            let l = 1.0;
            let p = if gram {
                Projection::build_gram(turing_basis(l), Weight::Gaussian).unwrap()
            } else {
                Projection::build_pointwise(turing_basis(l)).unwrap()
            };
            // Kernel elements map to unit vectors.
            for (k, phi) in p.basis.elements.iter().enumerate() {
                let cs = p.coords(phi).unwrap();
                for (j, v) in cs.iter().enumerate() {
                    let want = if j == k { 1.0 } else { 0.0 };
                    prop_assert!((v - c(want, 0.0)).norm() < 1e-12);
                }
            }
            // Idempotence and reality on a random real quasi-polynomial.
            let coef = c(re[0], im[0]);
            let w = QuasiPolynomial::monomial(c(0.0, 2.0 * im[1]), deg, vec![coef]);
            let v = QuasiPolynomial::monomial(c(0.0, l), deg, vec![c(re[2], im[2])]);
            let u = &(&w + &w.conj()) + &(&v + &v.conj());
            let (c1, e1) = p.project(&u).unwrap();
            let (c2, _) = p.project(&e1).unwrap();
            prop_assert!(approx(&c1, &c2, 1e-10 * (1.0 + c1.iter().map(|z| z.norm()).sum::<f64>())));
            prop_assert!((c1[0] - c1[1].conj()).norm() < 1e-10 * (1.0 + c1[0].norm()));
            prop_assert!((c1[2] - c1[3].conj()).norm() < 1e-10 * (1.0 + c1[2].norm()));
        }
    }
}
