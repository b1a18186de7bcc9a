//! Sparse polynomial vector fields `dc/dx = f(c, mu)` on kernel coordinates.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numeric::{binomial, CMat};
use crate::{Cx, Error, Result};

const ZERO: Cx = Cx { re: 0.0, im: 0.0 };

/// Monomial `c^powers mu^params`, ordered by total degree, then exponents descending.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Index {
    pub powers: Vec<u32>,
    pub params: Vec<u32>,
}

impl Index {
    pub fn new(powers: Vec<u32>, params: Vec<u32>) -> Self {
        Index { powers, params }
    }

    pub fn unit(m: usize, p: usize, i: usize) -> Self {
        let mut powers = vec![0; m];
        powers[i] = 1;
        Index { powers, params: vec![0; p] }
    }

    pub fn degree(&self) -> u32 {
        self.powers.iter().sum()
    }

    pub fn order(&self) -> u32 {
        self.degree() + self.params.iter().sum::<u32>()
    }

    pub fn add(&self, o: &Index) -> Index {
        Index {
            powers: self.powers.iter().zip(&o.powers).map(|(a, b)| a + b).collect(),
            params: self.params.iter().zip(&o.params).map(|(a, b)| a + b).collect(),
        }
    }

    /// `self - o` when non-negative.
    pub fn checked_sub(&self, o: &Index) -> Option<Index> {
        let sub = |a: &[u32], b: &[u32]| -> Option<Vec<u32>> { a.iter().zip(b).map(|(x, y)| x.checked_sub(*y)).collect() };
        Some(Index { powers: sub(&self.powers, &o.powers)?, params: sub(&self.params, &o.params)? })
    }

    pub fn is_zero(&self) -> bool {
        self.order() == 0
    }

    /// `c^powers mu^params`.
    pub fn monomial(&self, c: &[Cx], mu: &[Cx]) -> Cx {
        let mut v = Cx::new(1.0, 0.0);
        for (x, p) in c.iter().zip(&self.powers) {
            v *= x.powu(*p);
        }
        for (x, p) in mu.iter().zip(&self.params) {
            v *= x.powu(*p);
        }
        v
    }

    /// All indices of the given total order with `degree >= 1`, in the canonical order.
    pub fn of_order(m: usize, p: usize, order: u32) -> Vec<Index> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; m + p];
        fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if pos + 1 == cur.len() {
                cur[pos] = left;
                out.push(cur.clone());
                return;
            }
            for v in (0..=left).rev() {
                cur[pos] = v;
                rec(pos + 1, left - v, cur, out);
            }
        }
        if m + p == 0 {
            return out;
        }
        let mut raw = Vec::new();
        rec(0, order, &mut cur, &mut raw);
        for r in raw {
            let idx = Index { powers: r[..m].to_vec(), params: r[m..].to_vec() };
            if idx.degree() >= 1 {
                out.push(idx);
            }
        }
        out.sort();
        out
    }
}

impl Ord for Index {
    fn cmp(&self, o: &Self) -> Ordering {
        self.order()
            .cmp(&o.order())
            .then_with(|| o.powers.cmp(&self.powers))
            .then_with(|| o.params.cmp(&self.params))
    }
}

impl PartialOrd for Index {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub dim: usize,
    pub n_params: usize,
    pub coeffs: BTreeMap<Index, Vec<Cx>>,
}

#[derive(Serialize)]
struct FieldEntry<'a> {
    powers: &'a [u32],
    params: &'a [u32],
    coeff: &'a [Cx],
}

impl Serialize for Field {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<FieldEntry> = self
            .coeffs
            .iter()
            .map(|(k, v)| FieldEntry { powers: &k.powers, params: &k.params, coeff: v })
            .collect();
        entries.serialize(s)
    }
}

impl Field {
    pub fn zero(dim: usize, n_params: usize) -> Self {
        Field { dim, n_params, coeffs: BTreeMap::new() }
    }

    pub fn add_term(&mut self, idx: Index, v: &[Cx]) {
        let e = self.coeffs.entry(idx).or_insert_with(|| vec![ZERO; v.len()]);
        for (a, b) in e.iter_mut().zip(v) {
            *a += b;
        }
    }

    pub fn coeff(&self, idx: &Index) -> Vec<Cx> {
        self.coeffs.get(idx).cloned().unwrap_or_else(|| vec![ZERO; self.dim])
    }

    /// Coefficient of `c^powers mu^params` in component `i`.
    pub fn get(&self, i: usize, powers: &[u32], params: &[u32]) -> Cx {
        self.coeffs.get(&Index::new(powers.to_vec(), params.to_vec())).map_or(ZERO, |v| v[i])
    }

    pub fn eval(&self, c: &[Cx], mu: &[Cx]) -> Vec<Cx> {
        let mut out = vec![ZERO; self.dim];
        for (k, v) in &self.coeffs {
            let w = k.monomial(c, mu);
            for (o, x) in out.iter_mut().zip(v) {
                *o += x * w;
            }
        }
        out
    }

    /// Drop coefficients below `tol` (absolute).
    pub fn prune(&self, tol: f64) -> Field {
        let mut out = Field::zero(self.dim, self.n_params);
        for (k, v) in &self.coeffs {
            if v.iter().any(|z| z.norm() > tol) {
                out.coeffs.insert(k.clone(), v.iter().map(|z| if z.norm() > tol { *z } else { ZERO }).collect());
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, o: &Field) -> Field {
        let mut out = self.clone();
        for (k, v) in &o.coeffs {
            let neg: Vec<Cx> = v.iter().map(|z| -z).collect();
            out.add_term(k.clone(), &neg);
        }
        out
    }

    /// `L f` for a constant matrix `L`.
    pub fn left_mul(&self, l: &CMat) -> Field {
        let mut out = Field::zero(l.nrows(), self.n_params);
        for (k, v) in &self.coeffs {
            let w: Vec<Cx> = (0..l.nrows()).map(|i| (0..v.len()).map(|j| l[(i, j)] * v[j]).sum()).collect();
            out.coeffs.insert(k.clone(), w);
        }
        out
    }

    /// `g(c') = f(S c')` as a polynomial in `c'`, expanded exactly.
    pub fn compose_linear(&self, s: &CMat) -> Field {
        let m = s.ncols();
        let mut out = Field::zero(self.dim, self.n_params);
        for (k, v) in &self.coeffs {
            // Product over i of (sum_j S_ij c'_j)^{p_i}.
            let mut poly: BTreeMap<Vec<u32>, Cx> = BTreeMap::new();
            poly.insert(vec![0; m], Cx::new(1.0, 0.0));
            for (i, p) in k.powers.iter().enumerate() {
                for _ in 0..*p {
                    let mut next: BTreeMap<Vec<u32>, Cx> = BTreeMap::new();
                    for (e, c) in &poly {
                        for j in 0..m {
                            let sij = s[(i, j)];
                            if sij == ZERO {
                                continue;
                            }
                            let mut e2 = e.clone();
                            e2[j] += 1;
                            *next.entry(e2).or_insert(ZERO) += c * sij;
                        }
                    }
                    poly = next;
                }
            }
            for (e, c) in poly {
                let w: Vec<Cx> = v.iter().map(|x| x * c).collect();
                out.add_term(Index::new(e, k.params.clone()), &w);
            }
        }
        out
    }

    /// Real form in `(x, y)` with `c_k = x + i y`, `c_{k+1} = x - i y` for each listed pair,
    /// other coordinates kept.
    pub fn real_form(&self, pairs: &[(usize, usize)]) -> Field {
        let m = self.dim;
        let mut s = CMat::identity(m, m);
        for &(a, b) in pairs {
            s[(a, a)] = Cx::new(1.0, 0.0);
            s[(a, b)] = Cx::new(0.0, 1.0);
            s[(b, a)] = Cx::new(1.0, 0.0);
            s[(b, b)] = Cx::new(0.0, -1.0);
        }
        let sinv = s.clone().try_inverse().expect("pair transform is invertible");
        self.compose_linear(&s).left_mul(&sinv)
    }

    pub fn scale(&self, spec: &ScaleSpec) -> Result<Scaled> {
        if spec.coord_exps.len() != self.dim || spec.param_exps.len() != self.n_params {
            return Err(Error::Input("scaling exponents do not match the field".into()));
        }
        if let Some(w) = &spec.frame {
            if w.len() != self.dim {
                return Err(Error::Input("frame frequencies do not match the field".into()));
            }
        }
        let mut leading = Field::zero(self.dim, self.n_params);
        let mut dropped = Vec::new();
        for (k, v) in &self.coeffs {
            for (i, c) in v.iter().enumerate() {
                let mut c = *c;
                if let Some(w) = &spec.frame {
                    let phase: f64 = k.powers.iter().zip(w).map(|(p, wj)| *p as f64 * wj).sum::<f64>() - w[i];
                    if phase.abs() > 1e-9 {
                        continue;
                    }
                    if k.params.iter().all(|p| *p == 0) && k.degree() == 1 && k.powers[i] == 1 {
                        c -= Cx::new(0.0, w[i]);
                    }
                }
                if c.norm() < spec.zero_tol {
                    continue;
                }
                let exp: f64 = k.powers.iter().zip(&spec.coord_exps).map(|(p, b)| *p as f64 * b).sum::<f64>()
                    + k.params.iter().zip(&spec.param_exps).map(|(p, e)| *p as f64 * e).sum::<f64>()
                    - spec.x_exp
                    - spec.coord_exps[i];
                if exp < -1e-12 {
                    return Err(Error::LeadingBalance(format!(
                        "component {i}, monomial {:?}/{:?} scales as eps^{exp}",
                        k.powers, k.params
                    )));
                }
                if exp.abs() <= 1e-12 {
                    let mut unit = vec![ZERO; self.dim];
                    unit[i] = c;
                    leading.add_term(k.clone(), &unit);
                } else {
                    dropped.push(DroppedTerm { component: i, index: k.clone(), coeff: c, eps_order: exp });
                }
            }
        }
        Ok(Scaled { leading, dropped })
    }
}

/// `x^ = eps^x_exp x`, `c_i = eps^{coord_exps_i} n_i`, `mu_k = eps^{param_exps_k} mu^_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub x_exp: f64,
    pub coord_exps: Vec<f64>,
    pub param_exps: Vec<f64>,
    /// Rotating-frame frequencies: non-resonant monomials are averaged out and `i w_i`
    /// is removed from the diagonal.
    #[serde(default)]
    pub frame: Option<Vec<f64>>,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
}

fn default_zero_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DroppedTerm {
    pub component: usize,
    pub index: Index,
    pub coeff: Cx,
    pub eps_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scaled {
    pub leading: Field,
    pub dropped: Vec<DroppedTerm>,
}

/// Number of ordered ways to split a multiset; used by callers enumerating products.
pub fn multinomial(parts: &[u32]) -> f64 {
    let mut total = 0usize;
    let mut acc = 1.0;
    for p in parts {
        total += *p as usize;
        acc *= binomial(total, *p as usize);
    }
    acc
}
