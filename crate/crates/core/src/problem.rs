//! Problem files and the spectrum -> projection -> jet -> verification pipeline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::{Index, ScaleSpec};
use crate::jet::{compute_jet, JetOptions, JetResult};
use crate::json::CxIn;
use crate::kernel::{DiracAtom, ExpTerm, Family, GaussTerm, H1Report, KernelModel};
use crate::nonlin::{Nonlinearity, Symmetry, TaylorTermSpec, Term};
use crate::numeric::{fit_slope, CMat};
use crate::projection::{BasisLabel, Flavor, KernelBasis, Projection, Weight};
use crate::spectrum::{locate_roots_with, Spectrum, SNAP_TOL};
use crate::tsolve::DEFAULT_TOL;
use crate::verify::{
    homoclinic_profile, reconstruct, residual, shoot_front, shoot_homoclinic, unscale, GridModel, GridProfile,
    GridTerm, Planar, WaveKind, WaveReport, WaveRun,
};
use crate::{Cx, Error, Result};

pub const SCHEMA: u32 = 1;
const MAX_NESTING: usize = 32;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(CxIn),
    Rows(Vec<Vec<CxIn>>),
}

impl MatrixSpec {
    fn to_cmat(&self, n: usize) -> Result<CMat> {
        match self {
            MatrixSpec::Scalar(c) => Ok(CMat::identity(n, n) * c.0),
            MatrixSpec::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("expected a {n} x {n} matrix")));
                }
                Ok(CMat::from_fn(n, n, |i, j| rows[i][j].0))
            }
        }
    }

    fn size(&self) -> Option<usize> {
        match self {
            MatrixSpec::Scalar(_) => None,
            MatrixSpec::Rows(r) => Some(r.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    Name(String),
    Inline(Box<KernelSpec>),
}

/// Resolvent speed: a number or the name of a formal parameter.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SpeedSpec {
    Value(f64),
    Param(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: MatrixSpec,
    pub at: f64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `terms` for scalar kernels, or row-major `entries` for matrices.
    GaussianMixture {
        #[serde(default = "one")]
        n: usize,
        #[serde(default)]
        terms: Option<Vec<GaussTerm>>,
        #[serde(default)]
        entries: Option<Vec<Vec<GaussTerm>>>,
        eta0: f64,
    },
    ExponentialMixture {
        #[serde(default = "one")]
        n: usize,
        #[serde(default)]
        terms: Option<Vec<ExpTerm>>,
        #[serde(default)]
        entries: Option<Vec<Vec<ExpTerm>>>,
        eta0: f64,
    },
    DiracMixture {
        #[serde(default = "one")]
        n: usize,
        atoms: Vec<AtomSpec>,
        eta0: f64,
    },
    /// `M / (M - p(nu))` with `p` in ascending powers.
    Symbol {
        #[serde(default = "one")]
        n: usize,
        #[serde(rename = "M")]
        m: f64,
        p: Vec<CxIn>,
        /// Checked against the computed poles.
        #[serde(default)]
        poles_hint: Option<Vec<CxIn>>,
        eta0: f64,
    },
    /// `(speed nu - D)^{-1} inner`.
    Resolvent {
        speed: SpeedSpec,
        #[serde(rename = "D")]
        d: MatrixSpec,
        inner: KernelRef,
        #[serde(default)]
        eta0: Option<f64>,
    },
    Scaled {
        factor: CxIn,
        inner: KernelRef,
    },
    Sum {
        parts: Vec<KernelRef>,
    },
}

/// A kernel that is either fixed or depends on one parameter through a resolvent speed.
#[derive(Clone, Debug)]
enum Resolved {
    Fixed(KernelModel),
    Speed { param: usize, base: KernelModel },
}

impl Resolved {
    fn at(&self, values: &[f64]) -> Result<KernelModel> {
        match self {
            Resolved::Fixed(k) => Ok(k.clone()),
            Resolved::Speed { param, base } => match base.family() {
                Family::Resolvent { d, inner, .. } => KernelModel::new(
                    base.dim(),
                    Family::Resolvent { speed: values[*param], d: d.clone(), inner: inner.clone() },
                    base.eta0(),
                ),
                _ => unreachable!("speed kernels are resolvents"),
            },
        }
    }

    /// `G^(s)`, the coefficient of `speed^s`.
    fn expansion(&self, s: u32) -> Result<KernelModel> {
        match self {
            Resolved::Fixed(k) if s == 0 => Ok(k.clone()),
            Resolved::Fixed(_) => Err(Error::Input("fixed kernels have no speed expansion".into())),
            Resolved::Speed { base, .. } => base.speed_expansion(s),
        }
    }

    fn fixed(self, what: &str) -> Result<KernelModel> {
        match self {
            Resolved::Fixed(k) => Ok(k),
            Resolved::Speed { .. } => Err(Error::Input(format!(
                "{what}: parametric kernels are accepted only as the linear kernel or an outer kernel"
            ))),
        }
    }
}

struct Registry<'a> {
    specs: &'a BTreeMap<String, KernelSpec>,
    params: &'a [String],
}

impl Registry<'_> {
    fn by_name(&self, name: &str, depth: usize) -> Result<Resolved> {
        let spec = self.specs.get(name).ok_or_else(|| Error::UnknownKernel(name.to_string()))?;
        self.build(spec, depth + 1)
    }

    fn by_ref(&self, r: &KernelRef, depth: usize) -> Result<Resolved> {
        match r {
            KernelRef::Name(n) => self.by_name(n, depth),
            KernelRef::Inline(s) => self.build(s, depth + 1),
        }
    }

    fn build(&self, spec: &KernelSpec, depth: usize) -> Result<Resolved> {
        if depth > MAX_NESTING {
            return Err(Error::Input("kernel references nest too deeply (cycle?)".into()));
        }
        let fixed = |k: KernelModel| Ok(Resolved::Fixed(k));
        match spec {
            KernelSpec::GaussianMixture { n, terms, entries, eta0 } => {
                fixed(KernelModel::new(*n, Family::Gaussian(pick_entries(*n, terms, entries)?), *eta0)?)
            }
            KernelSpec::ExponentialMixture { n, terms, entries, eta0 } => {
                fixed(KernelModel::new(*n, Family::Exponential(pick_entries(*n, terms, entries)?), *eta0)?)
            }
            KernelSpec::DiracMixture { n, atoms, eta0 } => {
                let atoms = atoms
                    .iter()
                    .map(|a| Ok(DiracAtom { weight: a.weight.to_cmat(*n)?, at: a.at }))
                    .collect::<Result<Vec<_>>>()?;
                fixed(KernelModel::new(*n, Family::Dirac(atoms), *eta0)?)
            }
            KernelSpec::Symbol { n, m, p, poles_hint, eta0 } => {
                let k = KernelModel::new(*n, Family::Rational { m: *m, p: p.iter().map(|c| c.0).collect() }, *eta0)?;
                if let Some(hints) = poles_hint {
                    let poles = k.poles();
                    for h in hints {
                        if !poles.iter().any(|q| (q - h.0).norm() < 1e-6 * (1.0 + h.0.norm())) {
                            return Err(Error::Input(format!("poles_hint {} is not a pole of the symbol", h.0)));
                        }
                    }
                }
                fixed(k)
            }
            KernelSpec::Resolvent { speed, d, inner, eta0 } => {
                let inner = self.by_ref(inner, depth)?.fixed("resolvent inner kernel")?;
                let n = inner.dim();
                if d.size().is_some_and(|s| s != n) {
                    return Err(Error::Dimension("resolvent D and inner kernel sizes differ".into()));
                }
                let eta = eta0.unwrap_or(inner.eta0());
                let dm = d.to_cmat(n)?;
                match speed {
                    SpeedSpec::Value(c) => fixed(KernelModel::new(
                        n,
                        Family::Resolvent { speed: *c, d: dm, inner: Box::new(inner) },
                        eta,
                    )?),
                    SpeedSpec::Param(name) => {
                        let param = self
                            .params
                            .iter()
                            .position(|p| p == name)
                            .ok_or_else(|| Error::Input(format!("speed parameter `{name}` is not declared")))?;
                        let base =
                            KernelModel::new(n, Family::Resolvent { speed: 0.0, d: dm, inner: Box::new(inner) }, eta)?;
                        Ok(Resolved::Speed { param, base })
                    }
                }
            }
            KernelSpec::Scaled { factor, inner } => {
                fixed(self.by_ref(inner, depth)?.fixed("scaled kernel")?.scaled(factor.0))
            }
            KernelSpec::Sum { parts } => {
                let parts = parts
                    .iter()
                    .map(|p| self.by_ref(p, depth)?.fixed("kernel sum"))
                    .collect::<Result<Vec<_>>>()?;
                fixed(KernelModel::sum(parts)?)
            }
        }
    }
}

fn pick_entries<T: Clone>(n: usize, terms: &Option<Vec<T>>, entries: &Option<Vec<Vec<T>>>) -> Result<Vec<Vec<T>>> {
    match (terms, entries) {
        (Some(t), None) if n == 1 => Ok(vec![t.clone()]),
        (Some(_), None) => Err(Error::Input("`terms` is for scalar kernels; use `entries` when n > 1".into())),
        (None, Some(e)) => Ok(e.clone()),
        _ => Err(Error::Input("give exactly one of `terms` and `entries`".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub terms: Vec<TaylorTermSpec>,
    #[serde(default)]
    pub symmetries: Vec<Symmetry>,
}

#[derive(Clone, Debug, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionSpec {
    #[serde(default)]
    pub flavor: Flavor,
    #[serde(default)]
    pub weight: Option<Weight>,
}

/// Real planar slice used for shooting: which coordinates carry `a` and `b`.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarSpec {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub a_out: usize,
    pub b_out: usize,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum VerifyPlan {
    /// Reversible pulses of the scaled field, swept over one parameter.
    Homoclinic {
        parameter: String,
        values: Vec<f64>,
        scaling: ScaleSpec,
        /// Values of the scaled parameters in the leading-order field.
        scaled_params: Vec<f64>,
        planar: PlanarSpec,
        grid_step: f64,
        /// Expected limit of amplitude / eps.
        #[serde(default)]
        expected_amplitude: Option<f64>,
    },
    /// Fronts of `kappa A'' + c A' + A (alpha - beta A^2) = 0` read off the scaled field.
    Front {
        mu: String,
        speed: String,
        eps: Vec<f64>,
        scaling: ScaleSpec,
        planar: PlanarSpec,
        /// Speeds as multiples of `2 sqrt(kappa alpha)`.
        c_star_factors: Vec<f64>,
        grid_step: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub schema: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub parameters: Vec<String>,
    #[serde(default)]
    pub kernels: BTreeMap<String, KernelSpec>,
    pub linear: KernelRef,
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub projection: ProjectionSpec,
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub verify: Option<VerifyPlan>,
}

struct ResolvedTerm {
    coeff: Cx,
    mu: Vec<u32>,
    outer: Option<Resolved>,
    factors: Vec<(Option<KernelModel>, usize)>,
    out: usize,
}

pub struct Problem {
    pub name: Option<String>,
    pub params: Vec<String>,
    pub n: usize,
    pub order: usize,
    pub projection: ProjectionSpec,
    pub verify: Option<VerifyPlan>,
    linear: Resolved,
    terms: Vec<ResolvedTerm>,
    symmetries: Vec<Symmetry>,
}

impl Problem {
    pub fn from_json(text: &str) -> Result<Problem> {
        let spec: ProblemSpec = serde_json::from_str(text)?;
        Problem::from_spec(spec)
    }

    pub fn load(path: &Path) -> Result<Problem> {
        Problem::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_spec(spec: ProblemSpec) -> Result<Problem> {
        if spec.schema != SCHEMA {
            return Err(Error::Input(format!("unsupported schema {} (expected {SCHEMA})", spec.schema)));
        }
        let reg = Registry { specs: &spec.kernels, params: &spec.parameters };
        let linear = reg.by_ref(&spec.linear, 0)?;
        let n = match &linear {
            Resolved::Fixed(k) => k.dim(),
            Resolved::Speed { base, .. } => base.dim(),
        };
        let np = spec.parameters.len();
        let mut terms = Vec::new();
        for (i, t) in spec.nonlinearity.terms.iter().enumerate() {
            let outer = t.outer.as_ref().map(|o| reg.by_name(o, 0)).transpose()?;
            let factors = t
                .factors
                .iter()
                .map(|(k, c)| {
                    let k = k.as_ref().map(|name| reg.by_name(name, 0)?.fixed(&format!("term {i} factor"))).transpose()?;
                    Ok((k, *c))
                })
                .collect::<Result<Vec<_>>>()?;
            terms.push(ResolvedTerm { coeff: t.coeff.0, mu: t.mu_power.to_vec(np)?, outer, factors, out: t.out });
        }
        let problem = Problem {
            name: spec.name,
            params: spec.parameters,
            n,
            order: spec.order.unwrap_or(3),
            projection: spec.projection,
            verify: spec.verify,
            linear,
            terms,
            symmetries: spec.nonlinearity.symmetries,
        };
        // Validates indices and dimensions of the expanded terms.
        problem.nonlinearity(problem.order.max(2))?;
        Ok(problem)
    }

    /// The linear kernel with every parameter at zero.
    pub fn linear_kernel(&self) -> Result<KernelModel> {
        self.linear.expansion(0)
    }

    /// Taylor terms with parametric kernels expanded in their speed up to total `order`.
    pub fn nonlinearity(&self, order: usize) -> Result<Nonlinearity> {
        let np = self.params.len();
        let mut out = Vec::new();
        if let Resolved::Speed { param, .. } = &self.linear {
            for s in 1..order as u32 {
                let g = self.linear.expansion(s)?;
                for j in 0..self.n {
                    let mut mu = vec![0; np];
                    mu[*param] = s;
                    out.push(Term { coeff: Cx::new(1.0, 0.0), mu, outer: Some(g.clone()), factors: vec![(None, j)], out: j });
                }
            }
        }
        for t in &self.terms {
            let base_order = t.factors.len() + t.mu.iter().sum::<u32>() as usize;
            match &t.outer {
                Some(Resolved::Speed { param, .. }) => {
                    for s in 0..=(order.saturating_sub(base_order)) as u32 {
                        let mut mu = t.mu.clone();
                        mu[*param] += s;
                        out.push(Term {
                            coeff: t.coeff,
                            mu,
                            outer: Some(t.outer.as_ref().expect("matched").expansion(s)?),
                            factors: t.factors.clone(),
                            out: t.out,
                        });
                    }
                }
                other => out.push(Term {
                    coeff: t.coeff,
                    mu: t.mu.clone(),
                    outer: other.as_ref().map(|o| o.expansion(0)).transpose()?,
                    factors: t.factors.clone(),
                    out: t.out,
                }),
            }
        }
        Nonlinearity::new(self.n, np, out, self.symmetries.clone())
    }

    /// The equation at fixed parameter values, unexpanded, for grid residuals.
    pub fn grid_model(&self, values: &[f64]) -> Result<GridModel> {
        if values.len() != self.params.len() {
            return Err(Error::Dimension(format!("{} values for {} parameters", values.len(), self.params.len())));
        }
        let mut terms = Vec::new();
        for t in &self.terms {
            let w: f64 = t.mu.iter().zip(values).map(|(p, v)| v.powi(*p as i32)).product();
            terms.push(GridTerm {
                coeff: t.coeff * w,
                outer: t.outer.as_ref().map(|o| o.at(values)).transpose()?,
                factors: t.factors.clone(),
                out: t.out,
            });
        }
        Ok(GridModel { n: self.n, linear: self.linear.at(values)?, terms })
    }

    fn param_index(&self, name: &str) -> Result<usize> {
        self.params.iter().position(|p| p == name).ok_or_else(|| Error::Input(format!("unknown parameter `{name}`")))
    }
}

#[derive(Clone, Debug)]
pub struct Tolerances {
    pub root: f64,
    pub solve: f64,
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { root: SNAP_TOL, solve: DEFAULT_TOL, seed: 7 }
    }
}

/// Linear stage shared by every command.
pub struct Linear {
    pub kernel: KernelModel,
    pub h1: H1Report,
    pub spectrum: Spectrum,
    pub projection: Projection,
}

pub fn linear_stage(problem: &Problem, tol: &Tolerances) -> Result<Linear> {
    let kernel = problem.linear_kernel()?;
    let h1 = kernel.validate_h1();
    let spectrum = locate_roots_with(&kernel, tol.root)?;
    let basis = KernelBasis::from_spectrum(&spectrum)?;
    let projection = match problem.projection.flavor {
        Flavor::Pointwise => Projection::build_pointwise(basis)?,
        Flavor::Gram => Projection::build_gram(basis, problem.projection.weight.unwrap_or(Weight::Gaussian))?,
    };
    Ok(Linear { kernel, h1, spectrum, projection })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub schema: u32,
    pub name: Option<String>,
    pub h1: H1Report,
    pub spectrum: Spectrum,
    pub kernel_dim: usize,
}

pub fn spectrum_report(problem: &Problem, tol: &Tolerances) -> Result<SpectrumReport> {
    let kernel = problem.linear_kernel()?;
    let h1 = kernel.validate_h1();
    let spectrum = locate_roots_with(&kernel, tol.root)?;
    Ok(SpectrumReport { schema: SCHEMA, name: problem.name.clone(), kernel_dim: spectrum.total_mult, h1, spectrum })
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionSummary {
    pub flavor: Flavor,
    pub condition: f64,
    pub extended: bool,
    pub labels: Vec<BasisLabel>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReduceReport {
    pub schema: u32,
    pub name: Option<String>,
    pub parameters: Vec<String>,
    pub projection: ProjectionSummary,
    pub jet: JetResult,
}

pub fn reduce(problem: &Problem, order: usize, tol: &Tolerances) -> Result<(Linear, ReduceReport)> {
    if order < 2 {
        return Err(Error::MinimumOrder);
    }
    let lin = linear_stage(problem, tol)?;
    let nonlin = problem.nonlinearity(order)?;
    let opts = JetOptions { order, tol_solve: tol.solve, seed: tol.seed };
    let jet = compute_jet(&lin.kernel, &lin.spectrum, &lin.projection, &nonlin, &opts)?;
    let report = ReduceReport {
        schema: SCHEMA,
        name: problem.name.clone(),
        parameters: problem.params.clone(),
        projection: ProjectionSummary {
            flavor: lin.projection.flavor,
            condition: lin.projection.condition,
            extended: lin.projection.extended,
            labels: lin.projection.basis.labels.clone(),
        },
        jet,
    };
    Ok((lin, report))
}

pub fn verify(problem: &Problem, order: usize, tol: &Tolerances) -> Result<WaveReport> {
    let plan = problem.verify.clone().ok_or_else(|| Error::Input("problem has no `verify` plan".into()))?;
    let (lin, red) = reduce(problem, order, tol)?;
    match plan {
        VerifyPlan::Homoclinic { parameter, values, scaling, scaled_params, planar, grid_step, expected_amplitude } => {
            let p = problem.param_index(&parameter)?;
            pulses(
                problem,
                &lin,
                &red.jet,
                PulsePlan { p, values, scaling, scaled_params, planar, grid_step, expected_amplitude },
            )
        }
        VerifyPlan::Front { mu, speed, eps, scaling, planar, c_star_factors, grid_step } => {
            let plan = FrontPlan {
                mu: problem.param_index(&mu)?,
                speed: problem.param_index(&speed)?,
                eps,
                scaling,
                planar,
                c_star_factors,
                grid_step,
            };
            fronts(problem, &lin, &red.jet, plan)
        }
    }
}

struct PulsePlan {
    p: usize,
    values: Vec<f64>,
    scaling: ScaleSpec,
    scaled_params: Vec<f64>,
    planar: PlanarSpec,
    grid_step: f64,
    expected_amplitude: Option<f64>,
}

fn planar<'a>(field: &'a crate::field::Field, spec: &PlanarSpec, mu: Vec<Cx>) -> Planar<'a> {
    Planar {
        field,
        mu,
        a_coords: spec.a.clone(),
        b_coords: spec.b.clone(),
        a_out: spec.a_out,
        b_out: spec.b_out,
    }
}

fn scaled_coords(m: usize, spec: &PlanarSpec, a: f64, b: f64) -> Vec<Cx> {
    let mut n = vec![Cx::new(0.0, 0.0); m];
    for &i in &spec.a {
        n[i] = Cx::from(a);
    }
    for &i in &spec.b {
        n[i] = Cx::from(b);
    }
    n
}

fn pulses(problem: &Problem, lin: &Linear, jet: &JetResult, plan: PulsePlan) -> Result<WaveReport> {
    let scaled = jet.field.scale(&plan.scaling)?;
    let leading = scaled.leading;
    let mu_hat: Vec<Cx> = plan.scaled_params.iter().map(|&v| Cx::from(v)).collect();
    if mu_hat.len() != problem.params.len() {
        return Err(Error::Input("scaled_params must list every parameter".into()));
    }
    let sys = planar(&leading, &plan.planar, mu_hat);
    let hom = shoot_homoclinic(&sys, 1e-6, 1e-3, 1e3)?;
    let half_hat = 16.0 / hom.rate;
    let m = jet.dim;
    let sp = &plan.scaling;
    let mut runs = Vec::new();
    for &lambda in &plan.values {
        let eps = (lambda / plan.scaled_params[plan.p]).powf(1.0 / sp.param_exps[plan.p]);
        let values: Vec<f64> = (0..problem.params.len())
            .map(|k| eps.powf(sp.param_exps[k]) * plan.scaled_params[k])
            .collect();
        let mu: Vec<Cx> = values.iter().map(|&v| Cx::from(v)).collect();
        let xs_scale = eps.powf(sp.x_exp);
        let profile_at = |h: f64| -> Result<GridProfile> {
            let samples = homoclinic_profile(&sys, &hom, xs_scale * h, half_hat);
            let xs: Vec<f64> = samples.iter().map(|s| s.0 / xs_scale).collect();
            let coords: Vec<Vec<Cx>> = samples
                .iter()
                .zip(&xs)
                .map(|(s, x)| unscale(sp, eps, *x, &scaled_coords(m, &plan.planar, s.1, s.2)))
                .collect();
            Ok(reconstruct(jet, &lin.projection, &xs, &coords, &mu))
        };
        let model = problem.grid_model(&values)?;
        let res = residual(&model, &profile_at, plan.grid_step)?;
        let profile = profile_at(plan.grid_step)?;
        runs.push(WaveRun {
            parameter: lambda,
            c_star: None,
            amplitude: profile.max_abs(),
            residual: res,
            return_distance: Some(hom.return_distance),
            found: hom.return_distance < 1e-4,
            monotone: None,
            profile,
        });
    }
    let slope = if runs.len() >= 2 {
        let lx: Vec<f64> = runs.iter().map(|r| r.amplitude.ln()).collect();
        let ly: Vec<f64> = runs.iter().map(|r| r.residual.max.max(1e-300).ln()).collect();
        Some(fit_slope(&lx, &ly))
    } else {
        None
    };
    let mut checks = vec![
        ("homoclinic returns within 1e-4 of the origin".to_string(), hom.return_distance < 1e-4),
        ("residual quadrature converged".to_string(), runs.iter().all(|r| r.residual.converged)),
    ];
    if let Some(s) = slope {
        checks.push((format!("residual-vs-amplitude slope {s:.3} >= 1.5"), s >= 1.5));
    }
    let mut coefficients = BTreeMap::new();
    coefficients.insert("turning".to_string(), hom.turning);
    coefficients.insert("rate".to_string(), hom.rate);
    if let (Some(want), Some(last)) = (plan.expected_amplitude, runs.last()) {
        let eps = (last.parameter / plan.scaled_params[plan.p]).powf(1.0 / sp.param_exps[plan.p]);
        let ratio = last.amplitude / eps;
        coefficients.insert("amplitude_ratio".to_string(), ratio);
        checks.push((
            format!("amplitude/eps {ratio:.4} within 10% of {want}"),
            ((ratio - want) / want).abs() <= 0.1,
        ));
    }
    Ok(WaveReport { kind: WaveKind::Homoclinic, runs, slope, coefficients, checks })
}

struct FrontPlan {
    mu: usize,
    speed: usize,
    eps: Vec<f64>,
    scaling: ScaleSpec,
    planar: PlanarSpec,
    c_star_factors: Vec<f64>,
    grid_step: f64,
}

/// `(kappa, alpha, beta)` of `kappa A'' + c A' + A (alpha - beta A^2) = 0` from the scaled
/// field `B' = k_c c B + k_mu mu A + k_3 A^3`.
pub fn front_coefficients(
    leading: &crate::field::Field,
    spec: &PlanarSpec,
    mu: usize,
    speed: usize,
) -> Result<(f64, f64, f64)> {
    if spec.a.len() != 1 || spec.b.len() != 1 {
        return Err(Error::Input("front verification needs one real coordinate for each of a and b".into()));
    }
    let m = leading.dim;
    let np = leading.n_params;
    let mono = |a: u32, b: u32, pm: u32, ps: u32| {
        let mut powers = vec![0; m];
        powers[spec.a[0]] = a;
        powers[spec.b[0]] += b;
        let mut params = vec![0; np];
        params[mu] = pm;
        params[speed] += ps;
        leading.coeff(&Index::new(powers, params))[spec.b_out].re
    };
    let k_c = mono(0, 1, 0, 1);
    if k_c == 0.0 {
        return Err(Error::Numerical("scaled field has no speed term".into()));
    }
    let kappa = -1.0 / k_c;
    Ok((kappa, -kappa * mono(1, 0, 1, 0), kappa * mono(3, 0, 0, 0)))
}

fn fronts(problem: &Problem, lin: &Linear, jet: &JetResult, plan: FrontPlan) -> Result<WaveReport> {
    let leading = jet.field.scale(&plan.scaling)?.leading;
    let (kappa, alpha, beta) = front_coefficients(&leading, &plan.planar, plan.mu, plan.speed)?;
    if !(kappa > 0.0 && alpha > 0.0 && beta > 0.0) {
        return Err(Error::Numerical(format!(
            "front coefficients need kappa, alpha, beta > 0 (got {kappa:.4e}, {alpha:.4e}, {beta:.4e})"
        )));
    }
    let c_min = 2.0 * (kappa * alpha).sqrt();
    let guess = [(alpha / beta).sqrt(), 0.0];
    let np = problem.params.len();
    let mu_hat = |c_star: f64| {
        let mut v = vec![Cx::new(0.0, 0.0); np];
        v[plan.mu] = Cx::from(1.0);
        v[plan.speed] = Cx::from(c_star);
        v
    };
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    let sp = &plan.scaling;
    let m = jet.dim;
    for &f in &plan.c_star_factors {
        let c_star = f * c_min;
        let sys = planar(&leading, &plan.planar, mu_hat(c_star));
        let fr = shoot_front(&sys, guess, 1e-6, 1e-3, 400.0, 1e-4)?;
        if f >= 1.0 {
            checks.push((format!("monotone front at c* = {f} x 2 sqrt(kappa alpha)"), fr.found && fr.monotone));
        }
        for &eps in &plan.eps {
            let mut values = vec![0.0; np];
            values[plan.mu] = eps.powf(sp.param_exps[plan.mu]);
            values[plan.speed] = eps.powf(sp.param_exps[plan.speed]) * c_star;
            let mu: Vec<Cx> = values.iter().map(|&v| Cx::from(v)).collect();
            let xs_scale = eps.powf(sp.x_exp);
            let profile_at = |h: f64| -> Result<GridProfile> {
                let fr = shoot_front(&sys, guess, 1e-6, xs_scale * h, 400.0, 1e-4)?;
                let xs: Vec<f64> = fr.samples.iter().map(|s| s.0 / xs_scale).collect();
                let coords: Vec<Vec<Cx>> = fr
                    .samples
                    .iter()
                    .zip(&xs)
                    .map(|(s, x)| unscale(sp, eps, *x, &scaled_coords(m, &plan.planar, s.1, s.2)))
                    .collect();
                Ok(reconstruct(jet, &lin.projection, &xs, &coords, &mu))
            };
            let model = problem.grid_model(&values)?;
            let res = residual(&model, &profile_at, plan.grid_step)?;
            let profile = profile_at(plan.grid_step)?;
            runs.push(WaveRun {
                parameter: eps,
                c_star: Some(c_star),
                amplitude: profile.max_abs(),
                residual: res,
                return_distance: None,
                found: fr.found,
                monotone: Some(fr.monotone),
                profile,
            });
        }
    }
    let mut coefficients = BTreeMap::new();
    coefficients.insert("kappa".to_string(), kappa);
    coefficients.insert("alpha".to_string(), alpha);
    coefficients.insert("beta".to_string(), beta);
    coefficients.insert("c_min".to_string(), c_min);
    Ok(WaveReport { kind: WaveKind::Front, runs, slope: None, coefficients, checks })
}
