//! The nonlinearity as a finite Taylor series of separable multilinear convolution
//! terms `coeff mu^r Kout * [ prod_i (K_i * u)_{c_i} ] e_out`.

use serde::{Deserialize, Serialize};

use crate::json::CxIn;
use crate::kernel::KernelModel;
use crate::numeric::{norm2, CMat};
use crate::quasipoly::QuasiPolynomial;
use crate::{Cx, Error, Result};

/// `mu_power` as written in JSON: one integer (first parameter) or one per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuPower {
    Single(u32),
    PerParameter(Vec<u32>),
}

impl Default for MuPower {
    fn default() -> Self {
        MuPower::Single(0)
    }
}

impl MuPower {
    pub fn to_vec(&self, n_params: usize) -> Result<Vec<u32>> {
        let v = match self {
            MuPower::Single(0) => vec![0; n_params],
            MuPower::Single(p) => {
                if n_params == 0 {
                    return Err(Error::Input("mu_power given but no parameters declared".into()));
                }
                let mut v = vec![0; n_params];
                v[0] = *p;
                v
            }
            MuPower::PerParameter(v) => v.clone(),
        };
        if v.len() != n_params {
            return Err(Error::Input(format!("mu_power has {} entries for {n_params} parameters", v.len())));
        }
        Ok(v)
    }
}

/// JSON form of one Taylor term; kernels are referenced by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorTermSpec {
    pub coeff: CxIn,
    #[serde(default)]
    pub mu_power: MuPower,
    #[serde(default)]
    pub outer: Option<String>,
    pub factors: Vec<(Option<String>, usize)>,
    /// Output component for vector problems.
    #[serde(default)]
    pub out: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: Cx,
    pub mu: Vec<u32>,
    pub outer: Option<KernelModel>,
    pub factors: Vec<(Option<KernelModel>, usize)>,
    pub out: usize,
}

impl Term {
    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    fn kernels(&self) -> impl Iterator<Item = &KernelModel> {
        self.outer.iter().chain(self.factors.iter().filter_map(|(k, _)| k.as_ref()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedSymmetry {
    /// `u(x) -> u(-x)`.
    #[serde(alias = "S1")]
    #[serde(rename = "reflection")]
    Reflection,
    /// `u -> -u`.
    #[serde(alias = "S2")]
    #[serde(rename = "sign")]
    Sign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symmetry {
    Named(NamedSymmetry),
    /// Orthogonal action `u -> R u`.
    Matrix { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Nonlinearity {
    pub n: usize,
    pub n_params: usize,
    pub terms: Vec<Term>,
    pub symmetries: Vec<Symmetry>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub declared: Vec<Symmetry>,
    pub violations: Vec<String>,
}

impl SymmetryReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Nonlinearity {
    pub fn new(n: usize, n_params: usize, terms: Vec<Term>, symmetries: Vec<Symmetry>) -> Result<Self> {
        for (i, t) in terms.iter().enumerate() {
            if t.degree() == 0 {
                return Err(Error::Input(format!("term {i} has no u factor")));
            }
            if t.mu.len() != n_params {
                return Err(Error::Input(format!("term {i}: parameter powers do not match the parameter list")));
            }
            if t.degree() == 1 && t.mu.iter().all(|p| *p == 0) {
                return Err(Error::Input(format!("term {i} is linear in u without a parameter; move it into the linear kernel")));
            }
            if t.out >= n || t.factors.iter().any(|(_, c)| *c >= n) {
                return Err(Error::Dimension(format!("term {i}: component index out of range")));
            }
            if t.kernels().any(|k| k.dim() != n) {
                return Err(Error::Dimension(format!("term {i}: kernel size differs from n = {n}")));
            }
        }
        Ok(Nonlinearity { n, n_params, terms, symmetries })
    }

    pub fn max_degree(&self) -> usize {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    /// `sum_terms mu^r t(u, ..., u)`, exact in the algebra.
    pub fn eval(&self, u: &QuasiPolynomial, mu: &[f64]) -> Result<QuasiPolynomial> {
        let mut acc = QuasiPolynomial::zero(self.n);
        for t in &self.terms {
            let w: f64 = t.mu.iter().zip(mu).map(|(p, m)| m.powi(*p as i32)).product();
            if w == 0.0 {
                continue;
            }
            let args: Vec<&QuasiPolynomial> = vec![u; t.degree()];
            acc = &acc + &apply_term(t, &args)?.scale(Cx::from(w));
        }
        Ok(acc)
    }

    pub fn check_symmetries(&self) -> SymmetryReport {
        let mut violations = Vec::new();
        for s in &self.symmetries {
            match s {
                Symmetry::Named(NamedSymmetry::Sign) => {
                    for (i, t) in self.terms.iter().enumerate() {
                        if t.degree() % 2 == 0 {
                            violations.push(format!("sign: term {i} has even degree {}", t.degree()));
                        }
                    }
                }
                Symmetry::Named(NamedSymmetry::Reflection) => {
                    for (i, t) in self.terms.iter().enumerate() {
                        if t.kernels().any(|k| !is_even(k)) {
                            violations.push(format!("reflection: term {i} uses a kernel that is not even"));
                        }
                    }
                }
                Symmetry::Matrix { matrix } => match matrix_violation(self, matrix) {
                    Some(v) => violations.push(v),
                    None => {}
                },
            }
        }
        SymmetryReport { declared: self.symmetries.clone(), violations }
    }
}

/// Moment parity `K^{(m)}(-nu) = (-1)^m K^{(m)}(nu)` at sample points, `m <= 3`.
pub fn is_even(k: &KernelModel) -> bool {
    for nu in [Cx::new(0.0, 0.0), Cx::new(0.0, 0.37), Cx::new(0.0, 1.3)] {
        let Ok(a) = k.transform_derivs(nu, 3) else { return false };
        let Ok(b) = k.transform_derivs(-nu, 3) else { return false };
        for (m, (am, bm)) in a.iter().zip(&b).enumerate() {
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            if norm2(&(am - bm * Cx::from(s))) > 1e-10 * (1.0 + norm2(am)) {
                return false;
            }
        }
    }
    true
}

fn matrix_violation(f: &Nonlinearity, matrix: &[Vec<f64>]) -> Option<String> {
    let n = f.n;
    if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
        return Some(format!("matrix action must be {n} x {n}"));
    }
    let r = CMat::from_fn(n, n, |i, j| Cx::new(matrix[i][j], 0.0));
    if norm2(&(r.adjoint() * &r - CMat::identity(n, n))) > 1e-10 {
        return Some("matrix action is not orthogonal".into());
    }
    for (i, t) in f.terms.iter().enumerate() {
        for k in t.kernels() {
            for nu in [Cx::new(0.0, 0.0), Cx::new(0.0, 0.7)] {
                let Ok(kv) = k.transform(nu, 0) else { return Some(format!("term {i}: kernel outside strip")) };
                if norm2(&(&kv * &r - &r * &kv)) > 1e-10 * (1.0 + norm2(&kv)) {
                    return Some(format!("matrix action: term {i} kernel does not commute"));
                }
            }
        }
    }
    // Equivariance of the summed pointwise part on deterministic test vectors.
    let samples = [[0.3, -0.7, 0.11, 0.5], [-0.2, 0.4, 0.9, -0.6]];
    for s in samples {
        let v: Vec<Cx> = (0..n).map(|i| Cx::new(s[i % 4] * (1.0 + i as f64 * 0.1), 0.0)).collect();
        let rv: Vec<Cx> = (0..n).map(|i| (0..n).map(|j| r[(i, j)] * v[j]).sum()).collect();
        let u = QuasiPolynomial::constant(v);
        let ru = QuasiPolynomial::constant(rv);
        let mu = vec![0.37; f.n_params];
        let (Ok(fu), Ok(fru)) = (f.eval(&u, &mu), f.eval(&ru, &mu)) else {
            return Some("matrix action: evaluation failed".into());
        };
        let fu0 = fu.eval(0.0);
        let rfu: Vec<Cx> = (0..n).map(|i| (0..n).map(|j| r[(i, j)] * fu0[j]).sum()).collect();
        let fr0 = fru.eval(0.0);
        let err: f64 = rfu.iter().zip(&fr0).map(|(a, b)| (a - b).norm()).sum();
        if err > 1e-10 * (1.0 + fr0.iter().map(|z| z.norm()).sum::<f64>()) {
            return Some(format!("matrix action: F(R u) != R F(u) (defect {err:.2e})"));
        }
    }
    None
}

/// Multilinear evaluation of one term (the parameter power is not applied).
pub fn apply_term(t: &Term, args: &[&QuasiPolynomial]) -> Result<QuasiPolynomial> {
    if args.len() != t.degree() {
        return Err(Error::Dimension(format!("{} arguments for a degree-{} term", args.len(), t.degree())));
    }
    let n = args[0].dim();
    let mut prod: Option<QuasiPolynomial> = None;
    for ((k, comp), a) in t.factors.iter().zip(args) {
        if a.dim() != n {
            return Err(Error::Dimension("term arguments of different sizes".into()));
        }
        let v = match k {
            Some(k) => k.convolve_qp(a)?,
            None => (*a).clone(),
        };
        let s = v.component(*comp);
        prod = Some(match prod {
            None => s,
            Some(p) => p.try_mul(&s)?,
        });
    }
    let scalar = prod.expect("degree >= 1");
    let mut e = vec![Cx::new(0.0, 0.0); n];
    e[t.out] = Cx::new(1.0, 0.0);
    let mut out = scalar.times_vector(&e)?;
    if let Some(k) = &t.outer {
        out = k.convolve_qp(&out)?;
    }
    Ok(out.scale(t.coeff))
}
