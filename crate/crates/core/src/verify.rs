//! Numerical checks against the original equation: reduced-ODE integration, shooting for
//! pulses and fronts, reconstruction on a grid, and trapezoidal convolution residuals.

use std::path::Path;

use serde::Serialize;

use crate::field::{Field, ScaleSpec};
use crate::jet::JetResult;
use crate::kernel::KernelModel;
use crate::numeric::CMat;
use crate::projection::Projection;
use crate::{Cx, Error, Result};

pub const BLOW_UP: f64 = 1e6;
/// Kernel tails beyond this fraction of the mass are dropped from grid convolutions.
const TAIL_REL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub xs: Vec<f64>,
    pub states: Vec<Vec<Cx>>,
}

fn rk4_step<F: Fn(&[Cx]) -> Vec<Cx>>(f: &F, y: &[Cx], h: f64) -> Vec<Cx> {
    let axpy = |a: &[Cx], k: &[Cx], s: f64| -> Vec<Cx> { a.iter().zip(k).map(|(x, d)| x + d * s).collect() };
    let k1 = f(y);
    let k2 = f(&axpy(y, &k1, h / 2.0));
    let k3 = f(&axpy(y, &k2, h / 2.0));
    let k4 = f(&axpy(y, &k3, h));
    (0..y.len()).map(|i| y[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0)).collect()
}

/// Classical RK4 with a fixed step that divides the span exactly.
pub fn integrate_reduced(field: &Field, mu: &[Cx], initial: &[Cx], span: (f64, f64), step: f64) -> Result<Trajectory> {
    if initial.len() != field.dim {
        return Err(Error::Dimension(format!("{} initial values for a {}-dimensional field", initial.len(), field.dim)));
    }
    if !(step > 0.0) {
        return Err(Error::Input("integration step must be positive".into()));
    }
    let steps = ((span.1 - span.0).abs() / step).ceil().max(1.0) as usize;
    let h = (span.1 - span.0) / steps as f64;
    let f = |y: &[Cx]| field.eval(y, mu);
    let mut xs = vec![span.0];
    let mut states = vec![initial.to_vec()];
    for k in 0..steps {
        let y = rk4_step(&f, states.last().expect("non-empty"), h);
        let x = span.0 + (k + 1) as f64 * h;
        if y.iter().any(|z| !z.is_finite() || z.norm() > BLOW_UP) {
            return Err(Error::BlowUp(x));
        }
        xs.push(x);
        states.push(y);
    }
    Ok(Trajectory { xs, states })
}

/// Real planar slice of a reduced field: `a` fills `a_coords`, `b` fills `b_coords`, and the
/// derivatives are read from components `a_out`, `b_out`.
#[derive(Clone, Debug)]
pub struct Planar<'a> {
    pub field: &'a Field,
    pub mu: Vec<Cx>,
    pub a_coords: Vec<usize>,
    pub b_coords: Vec<usize>,
    pub a_out: usize,
    pub b_out: usize,
}

impl Planar<'_> {
    pub fn rhs(&self, y: [f64; 2]) -> [f64; 2] {
        let mut c = vec![Cx::new(0.0, 0.0); self.field.dim];
        for &i in &self.a_coords {
            c[i] = Cx::from(y[0]);
        }
        for &i in &self.b_coords {
            c[i] = Cx::from(y[1]);
        }
        let f = self.field.eval(&c, &self.mu);
        [f[self.a_out].re, f[self.b_out].re]
    }

    fn step(&self, y: [f64; 2], h: f64) -> [f64; 2] {
        let add = |a: [f64; 2], k: [f64; 2], s: f64| [a[0] + s * k[0], a[1] + s * k[1]];
        let k1 = self.rhs(y);
        let k2 = self.rhs(add(y, k1, h / 2.0));
        let k3 = self.rhs(add(y, k2, h / 2.0));
        let k4 = self.rhs(add(y, k3, h));
        [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    fn jacobian(&self, y: [f64; 2]) -> [[f64; 2]; 2] {
        let e = 1e-6;
        let mut j = [[0.0; 2]; 2];
        for col in 0..2 {
            let mut p = y;
            let mut m = y;
            p[col] += e;
            m[col] -= e;
            let (fp, fm) = (self.rhs(p), self.rhs(m));
            for row in 0..2 {
                j[row][col] = (fp[row] - fm[row]) / (2.0 * e);
            }
        }
        j
    }

    /// Unstable eigenvalue and unit eigenvector at a saddle.
    fn unstable_direction(&self, y: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let j = self.jacobian(y);
        let tr = j[0][0] + j[1][1];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let disc = tr * tr - 4.0 * det;
        if det >= 0.0 || disc < 0.0 {
            return Err(Error::Numerical(format!("equilibrium ({:.3e}, {:.3e}) is not a saddle", y[0], y[1])));
        }
        let lam = 0.5 * (tr + disc.sqrt());
        let v = if j[0][1].abs() > (lam - j[1][1]).abs() * 1e-12 && j[0][1] != 0.0 {
            [j[0][1], lam - j[0][0]]
        } else {
            [lam - j[1][1], j[1][0]]
        };
        let n = v[0].hypot(v[1]);
        Ok((lam, [v[0] / n, v[1] / n]))
    }

    /// Newton iteration for an equilibrium near `guess`.
    pub fn equilibrium(&self, guess: [f64; 2]) -> Result<[f64; 2]> {
        let mut y = guess;
        for _ in 0..50 {
            let f = self.rhs(y);
            if f[0].hypot(f[1]) < 1e-14 {
                return Ok(y);
            }
            let j = self.jacobian(y);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-300 {
                break;
            }
            y[0] -= (j[1][1] * f[0] - j[0][1] * f[1]) / det;
            y[1] -= (-j[1][0] * f[0] + j[0][0] * f[1]) / det;
        }
        let f = self.rhs(y);
        if f[0].hypot(f[1]) < 1e-10 {
            Ok(y)
        } else {
            Err(Error::Numerical("equilibrium Newton iteration did not converge".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Homoclinic {
    /// Amplitude where the orbit crosses the symmetric section `b = 0`.
    pub turning: f64,
    /// Time from the start on the unstable manifold to the section.
    pub half_time: f64,
    /// Closest approach to the origin after the turning point, over the mirrored time span.
    pub return_distance: f64,
    pub start: [f64; 2],
    /// Unstable eigenvalue at the origin.
    pub rate: f64,
}

/// Reversible homoclinic to the origin: shoot from `delta` along the unstable direction
/// until `b` changes sign; the crossing is a point of the symmetric section.
pub fn shoot_homoclinic(sys: &Planar, delta: f64, step: f64, max_time: f64) -> Result<Homoclinic> {
    let (rate, mut v) = sys.unstable_direction([0.0, 0.0])?;
    if v[0] < 0.0 {
        v = [-v[0], -v[1]];
    }
    let start = [delta * v[0], delta * v[1]];
    let mut y = start;
    let mut t = 0.0;
    let (turn, t_turn) = loop {
        let next = sys.step(y, step);
        if next[1] <= 0.0 && y[1] > 0.0 {
            // Bisect the sub-step for the section crossing.
            let (mut lo, mut hi) = (0.0, step);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sys.step(y, mid)[1] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            break (sys.step(y, 0.5 * (lo + hi)), t + 0.5 * (lo + hi));
        }
        y = next;
        t += step;
        if !y[0].is_finite() || y[0].hypot(y[1]) > BLOW_UP {
            return Err(Error::BlowUp(t));
        }
        if t > max_time {
            return Err(Error::Numerical("orbit did not reach the symmetric section".into()));
        }
    };
    let mut z = turn;
    let mut best = f64::INFINITY;
    let mut s = 0.0;
    while s < 1.1 * t_turn {
        z = sys.step(z, step);
        s += step;
        let r = z[0].hypot(z[1]);
        best = best.min(r);
        if r > 10.0 * turn[0].abs().max(1.0) {
            break;
        }
    }
    Ok(Homoclinic { turning: turn[0], half_time: t_turn, return_distance: best, start, rate })
}

/// Symmetric samples `(x, a, b)` at `x = k step`, `|x| <= half_width`, centred on the
/// turning point. The negative half is the forward shot from the unstable manifold, with the
/// first step shortened so the grid lands on the turning point; before the shot starts the
/// linearization is used. The positive half is the mirror image.
pub fn homoclinic_profile(sys: &Planar, hom: &Homoclinic, step: f64, half_width: f64) -> Vec<(f64, f64, f64)> {
    let n = (half_width / step).round() as usize;
    let full = (hom.half_time / step).floor() as usize;
    let first = hom.half_time - full as f64 * step;
    let mut path = vec![hom.start];
    let mut y = sys.step(hom.start, first);
    path.push(y);
    for _ in 0..full {
        y = sys.step(y, step);
        path.push(y);
    }
    // path[last - k] sits at x = -k step.
    let last = path.len() - 1;
    let mut left = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k < last {
            left.push(path[last - k]);
        } else {
            let g = (hom.rate * (hom.half_time - k as f64 * step)).exp();
            left.push([hom.start[0] * g, hom.start[1] * g]);
        }
    }
    left[0][1] = 0.0;
    let mut out = Vec::with_capacity(2 * n + 1);
    for k in (1..=n).rev() {
        out.push((-(k as f64) * step, left[k][0], left[k][1]));
    }
    for (k, p) in left.iter().enumerate() {
        out.push((k as f64 * step, p[0], -p[1]));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Front {
    pub saddle: [f64; 2],
    pub found: bool,
    pub monotone: bool,
    pub min_a: f64,
    pub closest: f64,
    /// `(x, a, b)` along the unstable manifold of the saddle.
    #[serde(skip)]
    pub samples: Vec<(f64, f64, f64)>,
}

/// Front from the saddle near `guess` down to the origin, shot along the branch of the
/// unstable manifold with decreasing `a`.
pub fn shoot_front(sys: &Planar, guess: [f64; 2], delta: f64, step: f64, max_time: f64, tol: f64) -> Result<Front> {
    let saddle = sys.equilibrium(guess)?;
    let (_, mut v) = sys.unstable_direction(saddle)?;
    if v[0] > 0.0 {
        v = [-v[0], -v[1]];
    }
    let mut y = [saddle[0] + delta * v[0], saddle[1] + delta * v[1]];
    let mut t = 0.0;
    let mut samples = vec![(t, y[0], y[1])];
    let mut monotone = true;
    let mut min_a = y[0];
    let mut closest = y[0].hypot(y[1]);
    while t < max_time {
        let next = sys.step(y, step);
        t += step;
        if !next[0].is_finite() || next[0].hypot(next[1]) > BLOW_UP {
            return Err(Error::BlowUp(t));
        }
        if next[0] > y[0] + 1e-12 {
            monotone = false;
        }
        y = next;
        samples.push((t, y[0], y[1]));
        min_a = min_a.min(y[0]);
        closest = closest.min(y[0].hypot(y[1]));
        if closest < 1e-3 * tol || y[0] < -1.0 {
            break;
        }
    }
    let found = closest < tol && min_a > -tol;
    Ok(Front { saddle, found, monotone: monotone && found, min_a, closest, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridProfile {
    pub x: Vec<f64>,
    pub values: Vec<Vec<Cx>>,
}

impl GridProfile {
    pub fn step(&self) -> f64 {
        if self.x.len() < 2 {
            0.0
        } else {
            self.x[1] - self.x[0]
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `u(x) = (u0(c(x)) + Psi(c(x), mu))(0)` along a coordinate path.
pub fn reconstruct(jet: &JetResult, projection: &Projection, xs: &[f64], coords: &[Vec<Cx>], mu: &[Cx]) -> GridProfile {
    let phi0: Vec<Vec<Cx>> = projection.basis.elements.iter().map(|e| e.eval(0.0)).collect();
    let psi0: Vec<Vec<Cx>> = jet.psi.iter().map(|e| e.psi.eval(0.0)).collect();
    let n = projection.basis.n;
    let values = coords
        .iter()
        .map(|c| {
            let mut u = vec![Cx::new(0.0, 0.0); n];
            for (ci, p) in c.iter().zip(&phi0) {
                for (o, v) in u.iter_mut().zip(p) {
                    *o += ci * v;
                }
            }
            for (e, p) in jet.psi.iter().zip(&psi0) {
                let w = e.index.monomial(c, mu);
                for (o, v) in u.iter_mut().zip(p) {
                    *o += w * v;
                }
            }
            u
        })
        .collect();
    GridProfile { x: xs.to_vec(), values }
}

/// Coordinates `c_i(x) = e^{i w_i x} eps^{b_i} n_i(eps^a x)` from a scaled path.
pub fn unscale(spec: &ScaleSpec, eps: f64, x: f64, scaled: &[Cx]) -> Vec<Cx> {
    scaled
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let rot = spec.frame.as_ref().map_or(Cx::new(1.0, 0.0), |w| Cx::new(0.0, w[i] * x).exp());
            rot * eps.powf(spec.coord_exps[i]) * n
        })
        .collect()
}

/// One pointwise product term on the grid, with its parameter weight folded into `coeff`.
#[derive(Clone, Debug)]
pub struct GridTerm {
    pub coeff: Cx,
    pub outer: Option<KernelModel>,
    pub factors: Vec<(Option<KernelModel>, usize)>,
    pub out: usize,
}

/// `u + K*u + F(u)` at fixed parameter values.
#[derive(Clone, Debug)]
pub struct GridModel {
    pub n: usize,
    pub linear: KernelModel,
    pub terms: Vec<GridTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max: f64,
    pub l2: f64,
    /// `max |R_h - R_{h/2}|` on the shared points.
    pub quadrature_estimate: f64,
    pub converged: bool,
    #[serde(skip)]
    pub pointwise: Vec<f64>,
}

/// Trapezoidal `h sum_k K(kh) u(x - kh)` with constant extension past the ends.
fn convolve_grid(k: &KernelModel, h: f64, u: &[Vec<Cx>]) -> Result<Vec<Vec<Cx>>> {
    let m = (k.tail_width(TAIL_REL) / h).ceil() as usize;
    let tab: Vec<CMat> = k.tabulate(h, m)?;
    let n = k.dim();
    let len = u.len() as isize;
    let mut out = vec![vec![Cx::new(0.0, 0.0); n]; u.len()];
    for (j, o) in out.iter_mut().enumerate() {
        for (idx, kk) in tab.iter().enumerate() {
            let shift = idx as isize - m as isize;
            let src = (j as isize - shift).clamp(0, len - 1) as usize;
            let v = &u[src];
            for r in 0..n {
                for c in 0..n {
                    o[r] += kk[(r, c)] * v[c] * h;
                }
            }
        }
    }
    Ok(out)
}

fn pointwise_residual(model: &GridModel, p: &GridProfile) -> Result<Vec<f64>> {
    let h = p.step();
    let n = model.n;
    let ku = convolve_grid(&model.linear, h, &p.values)?;
    let mut r: Vec<Vec<Cx>> = p.values.iter().zip(&ku).map(|(u, k)| u.iter().zip(k).map(|(a, b)| a + b).collect()).collect();
    for t in &model.terms {
        let mut prod = vec![Cx::new(1.0, 0.0); p.values.len()];
        for (k, comp) in &t.factors {
            let v = match k {
                Some(k) => convolve_grid(k, h, &p.values)?,
                None => p.values.clone(),
            };
            for (a, row) in prod.iter_mut().zip(&v) {
                *a *= row[*comp];
            }
        }
        let mut vecs: Vec<Vec<Cx>> = prod
            .iter()
            .map(|s| {
                let mut e = vec![Cx::new(0.0, 0.0); n];
                e[t.out] = *s * t.coeff;
                e
            })
            .collect();
        if let Some(k) = &t.outer {
            vecs = convolve_grid(k, h, &vecs)?;
        }
        for (a, b) in r.iter_mut().zip(&vecs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    Ok(r.iter().map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect())
}

/// Residual on the grid `h` with a Richardson-style comparison against `h/2`.
pub fn residual<F>(model: &GridModel, profile_at: F, h: f64) -> Result<ResidualReport>
where
    F: Fn(f64) -> Result<GridProfile>,
{
    let coarse = profile_at(h)?;
    let fine = profile_at(h / 2.0)?;
    if coarse.values.iter().any(|v| v.len() != model.n) {
        return Err(Error::Dimension("profile and model sizes differ".into()));
    }
    let rc = pointwise_residual(model, &coarse)?;
    let rf = pointwise_residual(model, &fine)?;
    // The grids need not be nested: compare against the fine residual interpolated linearly.
    let mut est = 0.0f64;
    let mut compared = 0usize;
    for (x, r) in coarse.x.iter().zip(&rc) {
        let k = fine.x.partition_point(|f| f <= x);
        if k == 0 || k == fine.x.len() {
            continue;
        }
        let t = (x - fine.x[k - 1]) / (fine.x[k] - fine.x[k - 1]);
        est = est.max((r - ((1.0 - t) * rf[k - 1] + t * rf[k])).abs());
        compared += 1;
    }
    if compared == 0 {
        return Err(Error::Quadrature("coarse and fine grids do not overlap".into()));
    }
    let max = rf.iter().cloned().fold(0.0, f64::max);
    let hf = fine.step();
    let l2 = (rf.iter().map(|r| r * r).sum::<f64>() * hf).sqrt();
    let converged = est <= (0.25 * max).max(1e-9);
    Ok(ResidualReport { max, l2, quadrature_estimate: est, converged, pointwise: rf })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveKind {
    Homoclinic,
    Front,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveRun {
    /// `lambda` for pulses, `eps` for fronts.
    pub parameter: f64,
    pub c_star: Option<f64>,
    pub amplitude: f64,
    pub residual: ResidualReport,
    pub return_distance: Option<f64>,
    pub found: bool,
    pub monotone: Option<bool>,
    #[serde(skip)]
    pub profile: GridProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveReport {
    #[serde(rename = "type")]
    pub kind: WaveKind,
    pub runs: Vec<WaveRun>,
    /// Log-log slope of residual against amplitude across the runs.
    pub slope: Option<f64>,
    pub coefficients: std::collections::BTreeMap<String, f64>,
    pub checks: Vec<(String, bool)>,
}

impl WaveReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

/// CSV with columns `x, re_u{i}, im_u{i}, residual`.
pub fn write_csv(path: &Path, run: &WaveRun) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    let n = run.profile.values.first().map_or(0, Vec::len);
    let mut header = vec!["x".to_string()];
    for i in 0..n {
        header.push(format!("re_u{i}"));
        header.push(format!("im_u{i}"));
    }
    header.push("residual".into());
    w.write_record(&header)?;
    // The residual lives on the refined grid; every other point matches the profile grid.
    let ratio = if run.residual.pointwise.len() >= 2 * run.profile.x.len() - 1 { 2 } else { 1 };
    for (j, (x, v)) in run.profile.x.iter().zip(&run.profile.values).enumerate() {
        let mut rec = vec![format!("{x:.16e}")];
        for z in v {
            rec.push(format!("{:.16e}", z.re));
            rec.push(format!("{:.16e}", z.im));
        }
        let r = run.residual.pointwise.get(ratio * j).copied().unwrap_or(f64::NAN);
        rec.push(format!("{r:.16e}"));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
