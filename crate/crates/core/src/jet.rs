//! Order-by-order reduction map `Psi` and the reduced vector field.
//!
//! With `u = sum_i c_i phi_i + sum_m c^m mu^r Psi_m`, each `Psi_m` solves
//! `Psi_m + K*Psi_m + RHS_m = 0` with zero projection coordinates, where `RHS_m` collects
//! every ordered product of lower-order pieces whose indices add up to `m`. The field at
//! index `m` is the projection of `Psi_m'`.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::field::{Field, Index};
use crate::kernel::KernelModel;
use crate::nonlin::{apply_term, NamedSymmetry, Nonlinearity, Symmetry, SymmetryReport, Term};
use crate::numeric::{fit_slope, CMat};
use crate::projection::Projection;
use crate::quasipoly::QuasiPolynomial;
use crate::spectrum::Spectrum;
use crate::tsolve::{Solver, DEFAULT_TOL};
use crate::{Cx, Error, Result};

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;
const RESIDUAL_SCALES: [f64; 3] = [1e-1, 1e-2, 1e-3];
const RESIDUAL_GRID: (f64, usize) = (3.0, 61);
/// Field coefficients below this fraction of the largest one are dropped as roundoff.
const FIELD_PRUNE: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct JetOptions {
    pub order: usize,
    pub tol_solve: f64,
    pub seed: u64,
}

impl Default for JetOptions {
    fn default() -> Self {
        JetOptions { order: 3, tol_solve: DEFAULT_TOL, seed: 7 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiEntry {
    pub index: Index,
    pub psi: QuasiPolynomial,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualScan {
    pub scales: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: Option<f64>,
    pub required: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    /// Largest solve residual per order, starting at order 2.
    pub solve_residuals: Vec<f64>,
    pub ker_q_max: f64,
    pub flow_defect_max: f64,
    pub manifold: ResidualScan,
    pub reversibility_defect: Option<f64>,
    pub parity_defect: Option<f64>,
    pub real_form_imag: Option<f64>,
    pub symmetry: SymmetryReport,
}

impl Diagnostics {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.ker_q_max > 1e-10 {
            out.push(format!("psi entries have projection coordinates up to {:.2e}", self.ker_q_max));
        }
        if self.flow_defect_max > FD_TOL {
            out.push(format!("flow finite-difference defect {:.2e}", self.flow_defect_max));
        }
        if let Some(s) = self.manifold.slope {
            if s < self.manifold.required {
                out.push(format!("manifold residual slope {s:.3} below {}", self.manifold.required));
            }
        }
        if let Some(d) = self.reversibility_defect {
            if d > 1e-8 {
                out.push(format!("reversibility defect {d:.2e}"));
            }
        }
        if let Some(d) = self.parity_defect {
            if d != 0.0 {
                out.push(format!("even-degree field coefficients up to {d:.2e}"));
            }
        }
        out.extend(self.symmetry.violations.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JetResult {
    pub order: usize,
    pub dim: usize,
    pub n_params: usize,
    pub psi: Vec<PsiEntry>,
    pub field: Field,
    /// Conjugate coordinate pairs used for the real form.
    pub pairs: Vec<(usize, usize)>,
    pub real_field: Option<Field>,
    pub diagnostics: Diagnostics,
}

impl JetResult {
    pub fn psi_at(&self, index: &Index) -> Option<&QuasiPolynomial> {
        self.psi.iter().find(|e| &e.index == index).map(|e| &e.psi)
    }

    /// `u0(c) + Psi(c, mu)` as a quasi-polynomial in `x`.
    pub fn graph(&self, projection: &Projection, c: &[Cx], mu: &[Cx]) -> QuasiPolynomial {
        let mut u = projection.basis.combine(c);
        for e in &self.psi {
            u = &u + &e.psi.scale(e.index.monomial(c, mu));
        }
        u
    }
}

/// One summand of the expansion: a basis element or a stored `Psi_m`, with its index.
struct Piece {
    index: Index,
    qp: QuasiPolynomial,
}

pub fn compute_jet(
    kernel: &KernelModel,
    spectrum: &Spectrum,
    projection: &Projection,
    nonlin: &Nonlinearity,
    opts: &JetOptions,
) -> Result<JetResult> {
    if opts.order < 2 {
        return Err(Error::MinimumOrder);
    }
    if nonlin.n != kernel.dim() {
        return Err(Error::Dimension(format!(
            "nonlinearity acts on {}-vectors, kernel on {}-vectors",
            nonlin.n,
            kernel.dim()
        )));
    }
    let m = projection.dim();
    let p = nonlin.n_params;
    let mut solver = Solver::new(kernel, spectrum, projection);
    solver.tol = opts.tol_solve;

    let mut pieces: Vec<Piece> = projection
        .basis
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| Piece { index: Index::unit(m, p, i), qp: e.clone() })
        .collect();
    let mut solve_residuals = Vec::new();
    let mut ker_q_max = 0.0f64;
    for order in 2..=opts.order as u32 {
        let available = pieces.len();
        let mut worst = 0.0f64;
        let mut new = Vec::new();
        for idx in Index::of_order(m, p, order) {
            let rhs = collect_rhs(&idx, &nonlin.terms, &pieces[..available], kernel.dim())?;
            if rhs.coeff_norm() == 0.0 {
                continue;
            }
            let psi = solver.solve(&rhs, None)?;
            let res = (&(&psi + &kernel.convolve_qp(&psi)?) + &rhs).coeff_norm();
            worst = worst.max(res);
            let q = projection.coords(&psi)?;
            ker_q_max = ker_q_max.max(q.iter().map(|z| z.norm()).fold(0.0, f64::max));
            new.push(Piece { index: idx, qp: psi });
        }
        solve_residuals.push(worst);
        pieces.extend(new);
    }

    let mut field = Field::zero(m, p);
    let mut flow_defect_max = 0.0f64;
    for piece in &pieces {
        let (coords, _) = projection.project(&piece.qp.diff())?;
        flow_defect_max = flow_defect_max.max(flow_defect(projection, &piece.qp, &coords)?);
        field.add_term(piece.index.clone(), &coords);
    }
    field = field.prune(FIELD_PRUNE * (1.0 + field.max_abs()));

    let psi: Vec<PsiEntry> =
        pieces.into_iter().skip(m).map(|pc| PsiEntry { index: pc.index, psi: pc.qp }).collect();

    let pairs = conjugate_pairs(projection);
    let real_field = pairs.as_ref().map(|pr| field.real_form(pr));
    let real_form_imag = if kernel.is_real() && nonlin_is_real(nonlin) {
        real_field.as_ref().map(|f| f.coeffs.values().flatten().map(|z| z.im.abs()).fold(0.0, f64::max))
    } else {
        None
    };

    let declared = |s: NamedSymmetry| nonlin.symmetries.iter().any(|x| *x == Symmetry::Named(s));
    let reversibility_defect = if declared(NamedSymmetry::Reflection) {
        Some(reversibility(projection, &field)?)
    } else {
        None
    };
    let parity_defect = if declared(NamedSymmetry::Sign) {
        Some(
            field
                .coeffs
                .iter()
                .filter(|(k, _)| k.degree() % 2 == 0)
                .flat_map(|(_, v)| v.iter().map(|z| z.norm()))
                .fold(0.0, f64::max),
        )
    } else {
        None
    };

    let mut result = JetResult {
        order: opts.order,
        dim: m,
        n_params: p,
        psi,
        field,
        pairs: pairs.unwrap_or_default(),
        real_field,
        diagnostics: Diagnostics {
            solve_residuals,
            ker_q_max,
            flow_defect_max,
            manifold: ResidualScan { scales: vec![], values: vec![], slope: None, required: opts.order as f64 + 0.5 },
            reversibility_defect,
            parity_defect,
            real_form_imag,
            symmetry: nonlin.check_symmetries(),
        },
    };
    result.diagnostics.manifold = manifold_residual(kernel, projection, nonlin, &result, opts.seed)?;
    Ok(result)
}

/// Sum over terms and ordered piece tuples with indices adding up to `idx`.
fn collect_rhs(idx: &Index, terms: &[Term], pieces: &[Piece], n: usize) -> Result<QuasiPolynomial> {
    let mut rhs = QuasiPolynomial::zero(n);
    for t in terms {
        let mu = Index::new(vec![0; idx.powers.len()], t.mu.clone());
        let Some(rest) = idx.checked_sub(&mu) else { continue };
        let d = t.degree();
        if (rest.degree() as usize) < d {
            continue;
        }
        let mut chosen: Vec<usize> = Vec::with_capacity(d);
        let mut tuples = Vec::new();
        enumerate(&rest, d, pieces, &mut chosen, &mut tuples);
        for tup in tuples {
            let args: Vec<&QuasiPolynomial> = tup.iter().map(|&i| &pieces[i].qp).collect();
            rhs = &rhs + &apply_term(t, &args)?;
        }
    }
    Ok(rhs)
}

fn enumerate(rest: &Index, slots: usize, pieces: &[Piece], chosen: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if slots == 0 {
        if rest.is_zero() {
            out.push(chosen.clone());
        }
        return;
    }
    for (i, pc) in pieces.iter().enumerate() {
        let Some(r) = rest.checked_sub(&pc.index) else { continue };
        if (r.degree() as usize) < slots - 1 {
            continue;
        }
        chosen.push(i);
        enumerate(&r, slots - 1, pieces, chosen, out);
        chosen.pop();
    }
}

fn flow_defect(projection: &Projection, u: &QuasiPolynomial, coords: &[Cx]) -> Result<f64> {
    let plus = projection.coords(&u.shift(FD_STEP))?;
    let minus = projection.coords(&u.shift(-FD_STEP))?;
    let mut worst = 0.0f64;
    for ((a, b), c) in plus.iter().zip(&minus).zip(coords) {
        let fd = (a - b) / (2.0 * FD_STEP);
        worst = worst.max((fd - c).norm() / (1.0 + c.norm()));
    }
    Ok(worst)
}

/// Pairs `(l, l+1)` with `phi_{l+1} = conj(phi_l)`; every other element must be real.
fn conjugate_pairs(projection: &Projection) -> Option<Vec<(usize, usize)>> {
    let el = &projection.basis.elements;
    let close = |a: &QuasiPolynomial, b: &QuasiPolynomial| (a - b).coeff_norm() <= 1e-10 * (1.0 + a.coeff_norm());
    let mut pairs = Vec::new();
    let mut l = 0;
    while l < el.len() {
        let c = el[l].conj();
        if close(&c, &el[l]) {
            l += 1;
        } else if l + 1 < el.len() && close(&c, &el[l + 1]) {
            pairs.push((l, l + 1));
            l += 2;
        } else {
            return None;
        }
    }
    Some(pairs)
}

fn nonlin_is_real(f: &Nonlinearity) -> bool {
    f.terms.iter().all(|t| {
        t.coeff.im == 0.0
            && t.outer.as_ref().is_none_or(KernelModel::is_real)
            && t.factors.iter().all(|(k, _)| k.as_ref().is_none_or(KernelModel::is_real))
    })
}

/// `max |f(R c) + R f(c)|` over coefficients, with `R` the coordinate action of `x -> -x`.
fn reversibility(projection: &Projection, field: &Field) -> Result<f64> {
    let m = projection.dim();
    let mut r = CMat::zeros(m, m);
    for (l, e) in projection.basis.elements.iter().enumerate() {
        let c = projection.coords(&e.reflect())?;
        for (i, z) in c.into_iter().enumerate() {
            r[(i, l)] = z;
        }
    }
    let lhs = field.compose_linear(&r);
    let rhs = field.left_mul(&r);
    let mut sum = lhs.clone();
    for (k, v) in &rhs.coeffs {
        sum.add_term(k.clone(), v);
    }
    Ok(sum.max_abs() / (1.0 + field.max_abs()))
}

fn manifold_residual(
    kernel: &KernelModel,
    projection: &Projection,
    nonlin: &Nonlinearity,
    jet: &JetResult,
    seed: u64,
) -> Result<ResidualScan> {
    let mut rng = StdRng::seed_from_u64(seed);
    let m = projection.dim();
    let mut dir: Vec<Cx> = (0..m).map(|_| Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let norm = dir.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    dir.iter_mut().for_each(|z| *z /= norm);
    let rho: Vec<f64> = (0..nonlin.n_params).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (half, pts) = RESIDUAL_GRID;
    let mut values = Vec::new();
    for &s in &RESIDUAL_SCALES {
        let c: Vec<Cx> = dir.iter().map(|z| z * s).collect();
        let mu: Vec<f64> = rho.iter().map(|r| r * s).collect();
        let mu_c: Vec<Cx> = mu.iter().map(|&x| Cx::from(x)).collect();
        let u = jet.graph(projection, &c, &mu_c);
        let res = &(&u + &kernel.convolve_qp(&u)?) + &nonlin.eval(&u, &mu)?;
        let mut worst = 0.0f64;
        for j in 0..pts {
            let x = -half + 2.0 * half * j as f64 / (pts - 1) as f64;
            worst = worst.max(res.eval(x).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        values.push(worst);
    }
    let scales = RESIDUAL_SCALES.to_vec();
    // Residuals that vanish identically carry no slope information.
    let slope = if values.iter().all(|v| *v > 1e-300) {
        let lx: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        Some(fit_slope(&lx, &ly))
    } else {
        None
    };
    Ok(ResidualScan { scales, values, slope, required: jet.order as f64 + 0.5 })
}
