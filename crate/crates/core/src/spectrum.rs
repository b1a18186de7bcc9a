//! Characteristic roots of `d(nu) = det(I + K^(nu))` on the imaginary axis, their
//! multiplicities from winding numbers, and Jordan chains of root vectors.

use serde::Serialize;

use crate::kernel::KernelModel;
use crate::numeric::{binomial, identity, norm2, svd, CMat, CVec};
use crate::quasipoly::{Polynomial, QuasiPolynomial};
use crate::{Cx, Error, Result};

/// Roots closer than this to the axis are snapped onto it.
pub const SNAP_TOL: f64 = 1e-6;
/// A cluster whose contour spread is below this is one multiple root; bisection
/// intervals are not shrunk further.
pub const CLUSTER_WIDTH: f64 = 1e-4;
const SIMPLE_WIDTH: f64 = 0.05;
const MIN_ABS_D: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Self {
        Rect { re0, re1, im0, im1 }
    }

    fn contains(&self, z: Cx) -> bool {
        z.re >= self.re0 && z.re <= self.re1 && z.im >= self.im0 && z.im <= self.im1
    }

    fn corners(&self) -> [Cx; 4] {
        [
            Cx::new(self.re0, self.im0),
            Cx::new(self.re1, self.im0),
            Cx::new(self.re1, self.im1),
            Cx::new(self.re0, self.im1),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CharacteristicRoot {
    pub nu: Cx,
    pub alg_mult: usize,
    /// `chains[k][p]` is the root vector `e_k^p`.
    pub chains: Vec<Vec<Vec<Cx>>>,
    /// Left null vectors of `T^(nu)`.
    pub adjoint: Vec<Vec<Cx>>,
    /// Distance moved when snapping onto the axis.
    pub snap: f64,
}

impl CharacteristicRoot {
    pub fn geometric_mult(&self) -> usize {
        self.chains.len()
    }

    /// `phi_{k,p}(x) = (sum_q C(p,q) x^q e_k^{p-q}) e^{nu x}`, ordered by `(k, p)`.
    pub fn basis(&self) -> Vec<QuasiPolynomial> {
        let n = self.chains[0][0].len();
        let mut out = Vec::new();
        for chain in &self.chains {
            for p in 0..chain.len() {
                let coeffs: Vec<Vec<Cx>> =
                    (0..=p).map(|q| chain[p - q].iter().map(|v| v * binomial(p, q)).collect()).collect();
                let poly = Polynomial::new(n, coeffs).expect("chain vectors have length n");
                out.push(QuasiPolynomial::from_terms(n, [(self.nu, poly)]).expect("single term"));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// Rectangle `|Re| <= strip_width`, `|Im| <= L` and its winding count.
    pub full: Rect,
    pub full_count: i64,
    /// Thin rectangle around the axis used for bisection and its winding count.
    pub thin: Rect,
    pub thin_count: i64,
    pub search_half_length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub roots: Vec<CharacteristicRoot>,
    pub strip_width: f64,
    pub total_mult: usize,
    pub certificate: Certificate,
}

impl Spectrum {
    pub fn root_at(&self, nu: Cx, tol: f64) -> Option<&CharacteristicRoot> {
        self.roots.iter().find(|r| (r.nu - nu).norm() <= tol)
    }
}

/// `T^(nu) = I + K^(nu)` and its derivatives up to `max_order`.
pub fn t_derivs(k: &KernelModel, nu: Cx, max_order: usize) -> Result<Vec<CMat>> {
    let mut d = k.transform_derivs(nu, max_order)?;
    d[0] += identity(k.dim());
    Ok(d)
}

/// `(d(nu), d'(nu)/d(nu))`.
fn det_log_deriv(k: &KernelModel, nu: Cx) -> Result<(Cx, Cx)> {
    let t = t_derivs(k, nu, 1)?;
    let lu = t[0].clone().lu();
    let det = lu.determinant();
    let ld = match lu.solve(&t[1]) {
        Some(m) => m.trace(),
        None => Cx::new(f64::INFINITY, 0.0),
    };
    Ok((det, ld))
}

// Gauss-Kronrod 7/15 nodes on [-1, 1].
const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Contour<'a> {
    k: &'a KernelModel,
    power: u32,
    min_abs_d: f64,
}

impl Contour<'_> {
    fn integrand(&mut self, z: Cx) -> Result<Cx> {
        let (d, ld) = det_log_deriv(self.k, z)?;
        self.min_abs_d = self.min_abs_d.min(d.norm());
        if d.norm() < MIN_ABS_D || !ld.re.is_finite() || !ld.im.is_finite() {
            return Err(Error::RootOnBoundary(d.norm()));
        }
        Ok(ld * z.powu(self.power))
    }

    /// Kronrod estimate, error estimate and integral of `|f|` on the segment.
    fn gk(&mut self, a: Cx, b: Cx) -> Result<(Cx, f64, f64)> {
        let c = (a + b) * 0.5;
        let h = (b - a) * 0.5;
        let fc = self.integrand(c)?;
        let mut kr = fc * WK[7];
        let mut gs = fc * WG[3];
        let mut mag = fc.norm() * WK[7];
        for j in 0..7 {
            let f1 = self.integrand(c - h * XK[j])?;
            let f2 = self.integrand(c + h * XK[j])?;
            kr += (f1 + f2) * WK[j];
            mag += (f1.norm() + f2.norm()) * WK[j];
            if j % 2 == 1 {
                gs += (f1 + f2) * WG[j / 2];
            }
        }
        Ok((kr * h, ((kr - gs) * h).norm(), mag * h.norm()))
    }

    /// `tol` is an absolute tolerance per unit length.
    fn adaptive(&mut self, a: Cx, b: Cx, tol: f64, depth: u32) -> Result<Cx> {
        let (v, err, mag) = self.gk(a, b)?;
        // The floor reflects cancellation in det(T) near roots.
        let allowed = (tol * (b - a).norm()).max(1e-10 * mag);
        if err <= allowed {
            return Ok(v);
        }
        if depth == 0 {
            return Err(Error::Quadrature(format!("winding integral on [{a}, {b}]")));
        }
        let m = (a + b) * 0.5;
        Ok(self.adaptive(a, m, tol, depth - 1)? + self.adaptive(m, b, tol, depth - 1)?)
    }

    /// `(1/2 pi i) oint nu^power d'/d` over the rectangle boundary.
    fn integrate(&mut self, rect: &Rect) -> Result<Cx> {
        let c = rect.corners();
        let mut acc = Cx::new(0.0, 0.0);
        for i in 0..4 {
            acc += self.adaptive(c[i], c[(i + 1) % 4], 1e-10, 50)?;
        }
        Ok(acc / Cx::new(0.0, 2.0 * std::f64::consts::PI))
    }
}

/// Winding number of `d` around `rect`.
pub fn count_roots(k: &KernelModel, rect: &Rect) -> Result<i64> {
    let mut c = Contour { k, power: 0, min_abs_d: f64::INFINITY };
    let w = c.integrate(rect)?;
    let n = w.re.round();
    let residual = (w - Cx::from(n)).norm();
    if residual >= 0.1 {
        return Err(Error::NonIntegralWinding(residual));
    }
    Ok(n as i64)
}

fn power_sum(k: &KernelModel, rect: &Rect, power: u32) -> Result<Cx> {
    Contour { k, power, min_abs_d: f64::INFINITY }.integrate(rect)
}

/// Half-length of the imaginary search segment: the last `l` in `[0, 1000]` where
/// `||K^(+-il)|| >= 1/2`, doubled.
pub fn search_half_length(k: &KernelModel) -> Result<f64> {
    let mut last = 0.0f64;
    let mut l = 0.0f64;
    while l <= 1000.0 {
        for s in [1.0, -1.0] {
            if norm2(&k.transform(Cx::new(0.0, s * l), 0)?) >= 0.5 {
                last = l;
            }
        }
        l += 0.01 * (1.0 + l);
    }
    if last > 900.0 {
        return Err(Error::NoDecay);
    }
    Ok(2.0 * last.max(1.0))
}

/// Count with small perturbations of the rectangle when a root sits on the boundary.
fn count_perturbed(k: &KernelModel, rect: Rect) -> Result<(i64, Rect)> {
    let mut r = rect;
    for attempt in 0..8 {
        match count_roots(k, &r) {
            Ok(c) => return Ok((c, r)),
            Err(Error::RootOnBoundary(_)) | Err(Error::NonIntegralWinding(_)) if attempt < 7 => {
                let f = 1.0 + 0.0137 * (attempt + 1) as f64;
                r = Rect::new(rect.re0 / f, rect.re1 / f, rect.im0 * f, rect.im1 * f);
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last attempt")
}

struct Found {
    nu: Cx,
    mult: usize,
}

fn newton(k: &KernelModel, start: Cx, rect: &Rect, mult: usize) -> Result<Option<Cx>> {
    let mut z = start;
    for _ in 0..60 {
        let (d, ld) = det_log_deriv(k, z)?;
        if d.norm() == 0.0 {
            return Ok(Some(z));
        }
        let step = Cx::from(mult as f64) / ld;
        z -= step;
        if !rect.contains(z) {
            return Ok(None);
        }
        if step.norm() < 1e-15 * (1.0 + z.norm()) {
            return Ok(Some(z));
        }
    }
    Ok(Some(z))
}

fn bisect(k: &KernelModel, delta: f64, lo: f64, hi: f64, count: i64, out: &mut Vec<Found>) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let width = hi - lo;
    let rect = Rect::new(-delta, delta, lo, hi);
    if count == 1 && width <= SIMPLE_WIDTH {
        if let Some(z) = newton(k, Cx::new(0.0, 0.5 * (lo + hi)), &rect, 1)? {
            out.push(Found { nu: z, mult: 1 });
            return Ok(());
        }
    }
    if count > 1 && width <= SIMPLE_WIDTH {
        // Power sums over the contour give the mean and spread of the enclosed roots.
        let m = count as f64;
        let s1 = power_sum(k, &rect, 1)?;
        let s2 = power_sum(k, &rect, 2)?;
        let mean = s1 / m;
        let spread = (s2 / m - mean * mean).norm().sqrt();
        if spread <= CLUSTER_WIDTH {
            let z = newton(k, mean, &rect, count as usize)?.unwrap_or(mean);
            let z = if (z - mean).norm() < CLUSTER_WIDTH { z } else { mean };
            out.push(Found { nu: z, mult: count as usize });
            return Ok(());
        }
        if width <= CLUSTER_WIDTH {
            return Err(Error::Cluster(format!("{count} roots near {mean} with spread {spread:.2e}")));
        }
    }
    if width < 1e-12 {
        return Err(Error::Cluster(format!("interval [{lo}, {hi}] collapsed with {count} roots")));
    }
    for frac in [0.5137, 0.4731, 0.5419, 0.4423] {
        let mid = lo + frac * width;
        let left = count_roots(k, &Rect::new(-delta, delta, lo, mid));
        let right = count_roots(k, &Rect::new(-delta, delta, mid, hi));
        match (left, right) {
            (Ok(a), Ok(b)) => {
                if a + b != count {
                    return Err(Error::Cluster(format!("winding counts {a} + {b} != {count} on [{lo}, {hi}]")));
                }
                bisect(k, delta, lo, mid, a, out)?;
                return bisect(k, delta, mid, hi, b, out);
            }
            (Err(Error::RootOnBoundary(_) | Error::Quadrature(_)), _)
            | (_, Err(Error::RootOnBoundary(_) | Error::Quadrature(_))) => continue,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Err(Error::Cluster(format!("no admissible split of [{lo}, {hi}]")))
}

/// Locate all roots in the strip, certify the strip width and build Jordan chains.
pub fn locate_roots(k: &KernelModel) -> Result<Spectrum> {
    locate_roots_with(k, SNAP_TOL)
}

/// As [`locate_roots`], with roots within `snap_tol` of the axis snapped onto it.
pub fn locate_roots_with(k: &KernelModel, snap_tol: f64) -> Result<Spectrum> {
    let report = k.validate_h1();
    if report.certified_width <= 0.0 {
        return Err(Error::Input(report.failures.join("; ")));
    }
    let big_l = search_half_length(k)?;
    let mut eta = 0.9 * report.certified_width;
    loop {
        if eta < 1e-3 {
            return Err(Error::Cluster("no root-free strip around the axis".into()));
        }
        let delta = (0.05f64).min(eta / 4.0);
        let (full_count, full) = count_perturbed(k, Rect::new(-eta, eta, -big_l, big_l))?;
        let (thin_count, thin) = count_perturbed(k, Rect::new(-delta, delta, -big_l, big_l))?;
        if full_count != thin_count {
            eta *= 0.5;
            continue;
        }
        let mut found = Vec::new();
        bisect(k, delta, thin.im0, thin.im1, thin_count, &mut found)?;
        if let Some(off) = found.iter().find(|f| f.nu.re.abs() > snap_tol) {
            eta = 0.5 * off.nu.re.abs();
            continue;
        }
        let strip = full.re1;
        let mut roots = Vec::new();
        found.sort_by(|a, b| a.nu.im.abs().total_cmp(&b.nu.im.abs()).then(b.nu.im.total_cmp(&a.nu.im)));
        for f in &found {
            let nu = Cx::new(0.0, f.nu.im);
            let partner = roots
                .iter()
                .find(|r: &&CharacteristicRoot| (r.nu.conj() - nu).norm() < 1e-9 && r.nu.im > 0.0);
            let mut root = match (k.is_real(), partner) {
                (true, Some(p)) => CharacteristicRoot {
                    nu: p.nu.conj(),
                    alg_mult: p.alg_mult,
                    chains: p.chains.iter().map(|c| c.iter().map(|v| conj_vec(v)).collect()).collect(),
                    adjoint: p.adjoint.iter().map(|v| conj_vec(v)).collect(),
                    snap: 0.0,
                },
                _ => jordan_chains(k, nu, f.mult)?,
            };
            root.snap = f.nu.re.abs();
            roots.push(root);
        }
        let total_mult = roots.iter().map(|r| r.alg_mult).sum();
        return Ok(Spectrum {
            roots,
            strip_width: strip,
            total_mult,
            certificate: Certificate { full, full_count, thin, thin_count, search_half_length: big_l },
        });
    }
}

fn conj_vec(v: &[Cx]) -> Vec<Cx> {
    v.iter().map(|z| z.conj()).collect()
}

fn normalize(v: &CVec) -> CVec {
    let v = v / Cx::from(v.norm());
    let lead = v.iter().copied().find(|z| z.norm() > 1e-8).unwrap_or(Cx::new(1.0, 0.0));
    v * (lead.conj() / lead.norm())
}

/// Jordan chains at a root of given algebraic multiplicity.
pub fn jordan_chains(k: &KernelModel, nu: Cx, alg_mult: usize) -> Result<CharacteristicRoot> {
    let t = t_derivs(k, nu, alg_mult)?;
    let scale = 1.0 + norm2(&k.transform(nu, 0)?);
    let thr = 1e-8 * scale;
    let dec = svd(&t[0]);
    let (right, left) = dec.null_vectors(thr);
    if right.is_empty() {
        return Err(Error::ChainMismatch { found: 0, expected: alg_mult });
    }
    let cons_tol = 1e-7 * (1.0 + t.iter().map(norm2).sum::<f64>());
    let mut chains: Vec<Vec<CVec>> = right.iter().map(|v| vec![normalize(v)]).collect();
    let mut total = chains.len();
    let mut open = vec![true; chains.len()];
    while total < alg_mult && open.iter().any(|o| *o) {
        for (ci, chain) in chains.iter_mut().enumerate() {
            if !open[ci] || total >= alg_mult {
                continue;
            }
            let p = chain.len();
            let mut rhs = CVec::zeros(k.dim());
            for q in 1..=p {
                rhs -= &t[q] * &chain[p - q] * Cx::from(binomial(p, q));
            }
            let scale_rhs = 1.0 + chain.iter().map(|v| v.norm()).sum::<f64>();
            if left.iter().any(|w| w.dotc(&rhs).norm() > cons_tol * scale_rhs) {
                open[ci] = false;
                continue;
            }
            chain.push(dec.solve(&rhs, thr));
            total += 1;
        }
    }
    if total != alg_mult {
        return Err(Error::ChainMismatch { found: total, expected: alg_mult });
    }
    Ok(CharacteristicRoot {
        nu,
        alg_mult,
        chains: chains.into_iter().map(|c| c.into_iter().map(|v| v.iter().copied().collect()).collect()).collect(),
        adjoint: left.iter().map(|w| normalize(w).iter().copied().collect()).collect(),
        snap: 0.0,
    })
}

/// Largest residual of the chain relations `sum_q C(p,q) T^{(q)} e^{p-q} = 0`.
pub fn chain_residual(k: &KernelModel, root: &CharacteristicRoot) -> Result<f64> {
    let t = t_derivs(k, root.nu, root.alg_mult)?;
    let mut worst = 0.0f64;
    for chain in &root.chains {
        for p in 0..chain.len() {
            let mut acc = CVec::zeros(k.dim());
            for q in 0..=p {
                acc += &t[q] * CVec::from_vec(chain[p - q].clone()) * Cx::from(binomial(p, q));
            }
            worst = worst.max(acc.norm());
        }
    }
    Ok(worst)
}
