//! Bordered solve of `u + K*u + g = 0` with prescribed kernel coordinates, within the
//! quasi-polynomial class.

use crate::kernel::KernelModel;
use crate::numeric::{binomial, svd, CMat, CVec};
use crate::projection::Projection;
use crate::quasipoly::{Polynomial, QuasiPolynomial};
use crate::spectrum::{t_derivs, Spectrum};
use crate::{Cx, Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
/// Frequencies within this distance of a root are treated as characteristic.
const ROOT_MATCH: f64 = 1e-8;

pub struct Solver<'a> {
    pub kernel: &'a KernelModel,
    pub spectrum: &'a Spectrum,
    pub projection: &'a Projection,
    pub tol: f64,
}

impl<'a> Solver<'a> {
    pub fn new(kernel: &'a KernelModel, spectrum: &'a Spectrum, projection: &'a Projection) -> Self {
        Solver { kernel, spectrum, projection, tol: DEFAULT_TOL }
    }

    /// Solve `u + K*u + g = 0` with `Q(u)` coordinates equal to `target` (zero when `None`).
    pub fn solve(&self, g: &QuasiPolynomial, target: Option<&[Cx]>) -> Result<QuasiPolynomial> {
        let n = self.kernel.dim();
        if g.dim() != n {
            return Err(Error::Dimension(format!("right-hand side of size {} for a {n}-vector problem", g.dim())));
        }
        let mut terms = Vec::new();
        for t in g.terms() {
            let Some(q) = t.poly.degree() else { continue };
            if t.nu.re.abs() >= self.spectrum.strip_width {
                return Err(Error::OutsideStrip { re: t.nu.re, im: t.nu.im, eta: self.spectrum.strip_width });
            }
            let alpha = self.spectrum.root_at(t.nu, ROOT_MATCH).map_or(0, |r| r.alg_mult);
            // Characteristic frequencies are solved at the exact root.
            let nu = self.spectrum.root_at(t.nu, ROOT_MATCH).map_or(t.nu, |r| r.nu);
            let coeffs = if alpha == 0 {
                self.solve_regular(nu, &t.poly, q)?
            } else {
                self.solve_resonant(nu, &t.poly, q, alpha)?
            };
            terms.push((nu, Polynomial::new(n, coeffs)?));
        }
        let mut u = QuasiPolynomial::from_terms(n, terms)?;
        let m = self.projection.dim();
        let zeros = vec![Cx::new(0.0, 0.0); m];
        let target = target.unwrap_or(&zeros);
        if target.len() != m {
            return Err(Error::Dimension(format!("{} target coordinates for {m} basis elements", target.len())));
        }
        let coords = self.projection.coords(&u)?;
        let fix: Vec<Cx> = target.iter().zip(&coords).map(|(t, c)| t - c).collect();
        u = &u + &self.projection.basis.combine(&fix);
        let residual = (&(&u + &self.kernel.convolve_qp(&u)?) + g).coeff_norm();
        let tol = self.tol * (1.0 + g.coeff_norm());
        if residual > tol {
            return Err(Error::Residual { residual, tol });
        }
        Ok(u)
    }

    /// Top-down back substitution with `T0 = T^(nu)`:
    /// `T0 a_j = -g_j - sum_{d > j} C(d, d-j) T^{(d-j)} a_d`.
    fn solve_regular(&self, nu: Cx, g: &Polynomial, q: usize) -> Result<Vec<Vec<Cx>>> {
        let t = t_derivs(self.kernel, nu, q)?;
        let lu = t[0].clone().lu();
        let mut a: Vec<CVec> = vec![CVec::zeros(self.kernel.dim()); q + 1];
        for j in (0..=q).rev() {
            let mut rhs = -CVec::from_column_slice(g.coeff(j).expect("degree in range"));
            for d in j + 1..=q {
                rhs -= &t[d - j] * &a[d] * Cx::from(binomial(d, d - j));
            }
            a[j] = lu.solve(&rhs).ok_or_else(|| Error::Numerical(format!("T({nu}) is singular off the spectrum")))?;
        }
        Ok(a.into_iter().map(|v| v.iter().copied().collect()).collect())
    }

    /// Degree raised by `alpha`; the block system has nullity `alpha` (the kernel elements
    /// at `nu`) and is solved in the minimum-norm sense.
    fn solve_resonant(&self, nu: Cx, g: &Polynomial, q: usize, alpha: usize) -> Result<Vec<Vec<Cx>>> {
        let n = self.kernel.dim();
        let deg = q + alpha;
        let t = t_derivs(self.kernel, nu, deg)?;
        let size = (deg + 1) * n;
        let mut big = CMat::zeros(size, size);
        let mut rhs = CVec::zeros(size);
        for j in 0..=deg {
            for d in j..=deg {
                let w = Cx::from(binomial(d, d - j));
                let blk = &t[d - j] * w;
                big.view_mut((j * n, d * n), (n, n)).copy_from(&blk);
            }
            if let Some(c) = g.coeff(j) {
                for (i, v) in c.iter().enumerate() {
                    rhs[j * n + i] = -v;
                }
            }
        }
        let dec = svd(&big);
        let smax = dec.s.iter().copied().fold(0.0, f64::max);
        let thr = 1e-8 * (1.0 + smax);
        let nullity = dec.s.iter().filter(|s| **s < thr).count();
        if nullity != alpha {
            return Err(Error::SingularCompatibility(format!("{nu}: nullity {nullity}, expected {alpha}")));
        }
        let x = dec.solve(&rhs, thr);
        let resid = (&big * &x - &rhs).norm();
        if resid > 1e-7 * (1.0 + smax) * (1.0 + rhs.norm()) {
            return Err(Error::Inconsistent(format!("{nu}: residual {resid:e}")));
        }
        Ok((0..=deg).map(|j| x.rows(j * n, n).iter().copied().collect()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::GaussTerm;
    use crate::projection::{KernelBasis, Weight};
    use crate::spectrum::locate_roots;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Cx {
        Cx::new(re, im)
    }

    struct Setup {
        k: KernelModel,
        spec: Spectrum,
        proj: Projection,
    }

    impl Setup {
        fn new(k: KernelModel, gram: bool) -> Self {
            let spec = locate_roots(&k).unwrap();
            let basis = KernelBasis::from_spectrum(&spec).unwrap();
            let proj = if gram {
                Projection::build_gram(basis, Weight::Gaussian).unwrap()
            } else {
                Projection::build_pointwise(basis).unwrap()
            };
            Setup { k, spec, proj }
        }

        fn solver(&self) -> Solver<'_> {
            Solver::new(&self.k, &self.spec, &self.proj)
        }
    }

    /// `(-1/sqrt(pi) + x) e^{-x^2}`: int K = -1, int x K = sqrt(pi)/2, int x^2 K = -1/2.
    fn scalar_zero() -> KernelModel {
        KernelModel::scalar_gaussian(
            vec![GaussTerm { c: -1.0 / PI.sqrt(), a: 1.0, b: 0.0, p: 0 }, GaussTerm { c: 1.0, a: 1.0, b: 0.0, p: 1 }],
            10.0,
        )
        .unwrap()
    }

    /// Returns `(K, mu_c)` with `K^(il) = -e^{-l^2/4} + w2 e^{-2.5 l^2}`, double roots of
    /// `1 - mu_c K^` at `+-i`.
    fn turing_pair() -> (KernelModel, f64) {
        let w2 = 0.1 * (-0.25f64).exp() / (-2.5f64).exp();
        let k = KernelModel::scalar_gaussian(
            vec![
                GaussTerm { c: -1.0 / PI.sqrt(), a: 1.0, b: 0.0, p: 0 },
                GaussTerm { c: w2 * (0.1 / PI).sqrt(), a: 0.1, b: 0.0, p: 0 },
            ],
            10.0,
        )
        .unwrap();
        let kc = k.transform(c(0.0, 1.0), 0).unwrap()[(0, 0)].re;
        (k, 1.0 / kc)
    }

    #[test]
    fn linear_growth_at_simple_zero() {
        let s = Setup::new(scalar_zero(), false);
        let alpha = -2.0 / PI.sqrt();
        let g = QuasiPolynomial::constant(vec![c(-1.0, 0.0)]);
        let u = s.solver().solve(&g, None).unwrap();
        let want = QuasiPolynomial::monomial(c(0.0, 0.0), 1, vec![c(alpha, 0.0)]);
        assert!((&u - &want).coeff_norm() < 1e-12, "{u:?}");
        // T u = 2 alpha x: u = alpha^2 x^2 - kappa2 alpha^3 x with kappa2 = -1/2.
        let g2 = QuasiPolynomial::monomial(c(0.0, 0.0), 1, vec![c(-2.0 * alpha, 0.0)]);
        let u2 = s.solver().solve(&g2, None).unwrap();
        let want2 = QuasiPolynomial::from_terms(
            1,
            [(c(0.0, 0.0), Polynomial::new(1, vec![vec![c(0.0, 0.0)], vec![c(0.5 * alpha.powi(3), 0.0)], vec![c(alpha * alpha, 0.0)]]).unwrap())],
        )
        .unwrap();
        assert!((&u2 - &want2).coeff_norm() < 1e-12);
    }

    #[test]
    fn turing_linear_order_coefficient() {
        let (k, mu_c) = turing_pair();
        let s = Setup::new(k.scaled(c(-mu_c, 0.0)), false);
        let z0 = c(0.0, 1.0);
        let zeta0 = QuasiPolynomial::scalar(z0, 0);
        let g = k.convolve_qp(&zeta0).unwrap().scale(c(-1.0, 0.0));
        let psi = s.solver().solve(&g, None).unwrap();
        let kappa = |m: usize, j: f64| k.moment(m, c(0.0, j)).unwrap()[(0, 0)];
        let a0 = -kappa(0, 1.0) * kappa(0, 1.0) / kappa(2, 1.0);
        let l = 1.0;
        let want = QuasiPolynomial::from_terms(
            1,
            [
                (z0, Polynomial::new(1, vec![vec![c(-1.5 / (l * l), 0.0)], vec![c(0.0, 2.0 / l)], vec![c(1.0, 0.0)]]).unwrap()),
                (z0.conj(), Polynomial::new(1, vec![vec![c(1.5 / (l * l), 0.0)], vec![c(0.0, 1.0 / l)]]).unwrap()),
            ],
        )
        .unwrap()
        .scale(a0);
        assert!((&psi - &want).coeff_norm() < 1e-9 * (1.0 + a0.norm()), "{:?}", psi);
    }

    #[test]
    fn non_resonant_division() {
        // T u = c e^{3ix}: u = -g / (1 - mu_c kappa_{0,3}) with the engine sign.
        let (k, mu_c) = turing_pair();
        let s = Setup::new(k.scaled(c(-mu_c, 0.0)), false);
        let g = QuasiPolynomial::scalar(c(0.0, 3.0), 0).scale(c(0.3, -0.2));
        let u = s.solver().solve(&g, None).unwrap();
        let k03 = k.moment(0, c(0.0, 3.0)).unwrap()[(0, 0)];
        let p = u.at_frequency(c(0.0, 3.0)).unwrap();
        let want = -c(0.3, -0.2) / (1.0 - mu_c * k03);
        assert!((p.coeff(0).unwrap()[0] - want).norm() < 1e-13);
    }

    #[test]
    fn wrong_multiplicity_is_detected() {
        let (k, mu_c) = turing_pair();
        let s = Setup::new(k.scaled(c(-mu_c, 0.0)), false);
        let mut spec = s.spec.clone();
        for r in &mut spec.roots {
            r.alg_mult = 1;
        }
        let solver = Solver::new(&s.k, &spec, &s.proj);
        let g = QuasiPolynomial::scalar(c(0.0, 1.0), 0);
        assert!(matches!(
            solver.solve(&g, None),
            Err(Error::SingularCompatibility(_)) | Err(Error::Inconsistent(_)) | Err(Error::Residual { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solve_invariants(
            gr in proptest::collection::vec(-1.0f64..1.0, 6),
            freq in 0usize..4,
            deg in 0usize..3,
            gram in proptest::bool::ANY,
            t0 in -1.0f64..1.0,
        ) {
            let (k, mu_c) = turing_pair();
            let s = Setup::new(k.scaled(c(-mu_c, 0.0)), gram);
            let nus = [c(0.0, 1.0), c(0.0, -1.0), c(0.0, 3.0), c(0.0, 0.0)];
            let g = &QuasiPolynomial::monomial(nus[freq], deg, vec![c(gr[0], gr[1])])
                + &QuasiPolynomial::monomial(c(0.0, 2.0), 1, vec![c(gr[2], gr[3])]);
            let target = [c(t0, 0.0), c(0.0, t0), c(gr[4], 0.0), c(0.0, gr[5])];
            let solver = s.solver();
            let u = solver.solve(&g, Some(&target)).unwrap();
            // Grid residual, independent of the coefficient-space check.
            let tu = &u + &s.k.convolve_qp(&u).unwrap();
            let gmax = (0..50).map(|i| g.eval(-5.0 + 10.0 * i as f64 / 49.0)[0].norm()).fold(0.0, f64::max);
            for i in 0..50 {
                let x = -5.0 + 10.0 * i as f64 / 49.0;
                prop_assert!((tu.eval(x)[0] + g.eval(x)[0]).norm() < 1e-7 * (1.0 + gmax));
            }
            let coords = s.proj.coords(&u).unwrap();
            for (a, b) in coords.iter().zip(&target) {
                prop_assert!((a - b).norm() < 1e-10);
            }
            // Linearity in (g, target).
            let u2 = solver.solve(&g.scale(c(2.0, 0.0)), Some(&target.map(|t| t * 2.0))).unwrap();
            prop_assert!((&u2 - &u.scale(c(2.0, 0.0))).coeff_norm() < 1e-10 * (1.0 + u.coeff_norm()));
            // Order of terms does not matter.
            let parts: Vec<QuasiPolynomial> = g.terms().iter().rev()
                .map(|t| QuasiPolynomial::from_terms(1, [(t.nu, t.poly.clone())]).unwrap()).collect();
            let mut u3 = solver.solve(&parts[0], Some(&target)).unwrap();
            for p in &parts[1..] {
                u3 = &u3 + &solver.solve(p, None).unwrap();
            }
            prop_assert!((&u3 - &u).coeff_norm() < 1e-10 * (1.0 + u.coeff_norm()));
        }
    }
}
