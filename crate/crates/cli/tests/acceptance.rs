//! Acceptance criteria. Prints one PASS/FAIL line per criterion, with indented item lines,
//! and exits nonzero when any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use cm_core::field::Index;
use cm_core::jet::JetResult;
use cm_core::kernel::KernelModel;
use cm_core::numeric::fit_slope;
use cm_core::problem::{self, Linear, Problem, Tolerances};
use cm_core::projection::{KernelBasis, Projection, Weight};
use cm_core::quasipoly::{Polynomial, QuasiPolynomial};
use cm_core::spectrum::count_roots;
use cm_core::tsolve::Solver;
use cm_core::Cx;
use rand::{Rng, SeedableRng};

fn c(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

fn problem_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

struct Item {
    name: String,
    ok: bool,
    detail: String,
}

#[derive(Default)]
struct Criterion {
    items: Vec<Item>,
}

impl Criterion {
    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.items.push(Item { name: name.into(), ok, detail: detail.into() });
    }

    /// `|got - want| <= tol * |want|`.
    fn rel(&mut self, name: &str, got: Cx, want: Cx, tol: f64) {
        let err = (got - want).norm() / want.norm().max(1e-300);
        self.check(name, err <= tol, format!("got {got:.10e}, want {want:.10e}, rel err {err:.2e}"));
    }

    fn fail(&mut self, name: &str, e: impl std::fmt::Display) {
        self.check(name, false, format!("error: {e}"));
    }
}

fn qp(terms: &[(Cx, &[Cx])]) -> QuasiPolynomial {
    QuasiPolynomial::from_terms(
        1,
        terms.iter().map(|(nu, cs)| (*nu, Polynomial::new(1, cs.iter().map(|v| vec![*v]).collect()).unwrap())),
    )
    .unwrap()
}

fn coef(u: &QuasiPolynomial, nu: Cx, q: usize) -> Cx {
    u.at_frequency(nu).and_then(|p| p.coeff(q)).map_or(c(0.0, 0.0), |v| v[0])
}

fn idx(powers: &[u32], params: &[u32]) -> Index {
    Index::new(powers.to_vec(), params.to_vec())
}

struct Turing {
    /// Unscaled kernel `K` of `-u + mu_c K*u`.
    k: KernelModel,
    lin: Linear,
    jet: JetResult,
    nu: Cx,
}

impl Turing {
    fn load() -> cm_core::Result<Turing> {
        let p = Problem::load(&problem_path("turing.json"))?;
        let (lin, report) = problem::reduce(&p, 3, &Tolerances::default())?;
        let nu = lin.spectrum.roots.iter().find(|r| r.nu.im > 0.0).map(|r| r.nu).expect("root with Im > 0");
        // The same file with `K` itself as the linear kernel.
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(problem_path("turing.json"))?)?;
        v["linear"] = "K".into();
        let k = Problem::from_json(&v.to_string())?.linear_kernel()?;
        Ok(Turing { k, lin, jet: report.jet, nu })
    }

    fn kappa(&self, m: usize, j: i32) -> Cx {
        self.k.moment(m, self.nu * j as f64).unwrap()[(0, 0)]
    }

    fn psi(&self, powers: &[u32], params: &[u32]) -> QuasiPolynomial {
        self.jet.psi_at(&idx(powers, params)).cloned().unwrap_or_else(|| QuasiPolynomial::zero(1))
    }
}

fn qp_rel(u: &QuasiPolynomial, want: &QuasiPolynomial) -> f64 {
    (u - want).coeff_norm() / want.coeff_norm()
}

fn criterion_1() -> Criterion {
    let mut cr = Criterion::default();
    let path = problem_path("growth.json");
    let out = Command::new(env!("CARGO_BIN_EXE_cm")).args(["reduce", path.to_str().unwrap(), "--order", "3"]).output();
    let out = match out {
        Ok(o) if o.status.success() => o,
        Ok(o) => {
            cr.fail("cm reduce", String::from_utf8_lossy(&o.stderr));
            return cr;
        }
        Err(e) => {
            cr.fail("cm reduce", e);
            return cr;
        }
    };
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let k = Problem::load(&path).unwrap().linear_kernel().unwrap();
    let m1 = k.moment(1, c(0.0, 0.0)).unwrap()[(0, 0)];
    let kappa2 = k.moment(2, c(0.0, 0.0)).unwrap()[(0, 0)];
    let alpha = -1.0 / m1;
    let entry = |deg: u64| -> Cx {
        v["jet"]["field"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["powers"][0].as_u64() == Some(deg))
            .map_or(c(0.0, 0.0), |e| c(e["coeff"][0][0].as_f64().unwrap(), e["coeff"][0][1].as_f64().unwrap()))
    };
    cr.rel("A^2 coefficient = -1/int x K", entry(2), alpha, 1e-8);
    cr.rel("A^3 coefficient = -kappa2 alpha^3", entry(3), -kappa2 * alpha.powu(3), 1e-8);
    cr
}

fn criterion_2() -> Criterion {
    let mut cr = Criterion::default();
    let z = c(0.0, 1.0);
    let i = c(0.0, 1.0);
    let basis = KernelBasis::from_elements(vec![
        QuasiPolynomial::scalar(z, 0),
        QuasiPolynomial::scalar(z.conj(), 0),
        QuasiPolynomial::scalar(z, 1),
        QuasiPolynomial::scalar(z.conj(), 1),
    ])
    .unwrap();
    let proj = Projection::build_pointwise(basis).unwrap();
    let r = |v: f64| c(v, 0.0);
    let im = |v: f64| c(0.0, v);
    let table: Vec<(Cx, usize, [Cx; 4])> = vec![
        (z, 2, [im(1.5), im(-1.5), r(4.0), r(1.0)]),
        (z, 3, [r(6.0), r(-6.0), im(-7.5), im(-4.5)]),
        (z, 4, [im(-6.0), im(6.0), r(-6.0), r(-6.0)]),
        (z, 5, [r(0.0); 4]),
        (-z, 2, [im(1.5), im(-1.5), r(1.0), r(4.0)]),
        (-z, 3, [r(-6.0), r(6.0), im(4.5), im(7.5)]),
        (-z, 4, [im(-6.0), im(6.0), r(-6.0), r(-6.0)]),
        (-z, 5, [r(0.0); 4]),
        (3.0 * z, 0, [im(-12.0), im(15.0), r(-24.0), r(-12.0)]),
        (3.0 * z, 1, [r(-22.0), r(23.0), im(32.0), im(19.0)]),
        (3.0 * z, 2, [im(25.5), im(-25.5), r(31.0), r(22.0)]),
        (3.0 * z, 3, [r(18.0), r(-18.0), im(-19.5), im(16.5)]),
        (-3.0 * z, 0, [im(-15.0), im(12.0), r(-12.0), r(-24.0)]),
        (-3.0 * z, 1, [r(23.0), r(-22.0), im(-19.0), im(-32.0)]),
        (-3.0 * z, 2, [im(25.5), im(-25.5), r(22.0), r(31.0)]),
        (-3.0 * z, 3, [r(-18.0), r(18.0), im(16.5), im(19.5)]),
    ];
    for (nu, q, want) in table {
        let u = QuasiPolynomial::scalar(nu, q);
        let got = proj.coords(&u.diff()).unwrap();
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let freq = format!("{}i", (nu / i).re);
        cr.check(
            format!("x^{q} e^({freq} x)"),
            err <= 1e-10,
            format!("got {:?}, abs err {err:.2e}", got.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()),
        );
    }
    cr
}

fn criterion_3(t: &cm_core::Result<Turing>) -> Criterion {
    let mut cr = Criterion::default();
    let t = match t {
        Ok(t) => t,
        Err(e) => {
            cr.fail("reduction", e);
            return cr;
        }
    };
    let nu = t.nu;
    let l = nu.im;
    let i = c(0.0, 1.0);
    let (k01, k21, k31) = (t.kappa(0, 1), t.kappa(2, 1), t.kappa(3, 1));
    let alpha0 = -k01 * k01 / k21;
    let shape = qp(&[
        (nu, &[c(-1.5 / (l * l), 0.0), i * 2.0 / l, c(1.0, 0.0)]),
        (nu.conj(), &[c(1.5 / (l * l), 0.0), i / l]),
    ]);
    let want = shape.scale(alpha0);
    let e = qp_rel(&t.psi(&[1, 0, 0, 0], &[1]), &want);
    cr.check("Psi_10001 with alpha0 = -kappa01^2/kappa21", e <= 1e-8, format!("rel err {e:.2e}, alpha0 = {alpha0:.10e}"));

    let alpha2 = k01 * k01 / (2.0 * k21);
    let alpha1 = k31 * k01 * k01 / (2.0 * k21 * k21);
    let l3 = l * l * l;
    let want = qp(&[
        (
            nu,
            &[(i * 3.0 * alpha2 - 3.0 * l * alpha1) / (2.0 * l3), (i * 4.0 * l * alpha1 + 3.0 * alpha2) / (2.0 * l * l), alpha1, alpha2],
        ),
        (nu.conj(), &[-(i * 3.0 * alpha2 - 3.0 * l * alpha1) / (2.0 * l3), (i * 2.0 * l * alpha1 + 3.0 * alpha2) / (2.0 * l * l)]),
    ]);
    let psi00101 = t.psi(&[0, 0, 1, 0], &[1]);
    let e = qp_rel(&psi00101, &want);
    cr.check(
        "Psi_00101 with alpha2 = kappa01^2/(2 kappa21), alpha1 = kappa31 kappa01^2/(2 kappa21^2)",
        e <= 1e-8,
        format!(
            "rel err {e:.2e}; jet has alpha2 = {:.10e}, alpha1 = {:.10e}; reference alpha2 = {alpha2:.10e}, alpha1 = {alpha1:.10e}",
            coef(&psi00101, nu, 3),
            coef(&psi00101, nu, 2)
        ),
    );

    let e = qp_rel(&t.psi(&[2, 1, 0, 0], &[0]), &shape.scale(-alpha0));
    cr.check("Psi_21000 = -Psi_10001", e <= 1e-8, format!("rel err {e:.2e}"));
    cr
}

fn criterion_4(t: &cm_core::Result<Turing>) -> Criterion {
    let mut cr = Criterion::default();
    let t = match t {
        Ok(t) => t,
        Err(e) => {
            cr.fail("reduction", e);
            return cr;
        }
    };
    let nu = t.nu;
    let k = |m, j| t.kappa(m, j);
    let (k01, k21, k31, k41, k51) = (k(0, 1), k(2, 1), k(3, 1), k(4, 1), k(5, 1));
    let (k03, k13, k23, k33) = (k(0, 3), k(1, 3), k(2, 3), k(3, 3));
    let d = -1.0 + k03 / k01;
    let tol = 1e-7;

    let p = t.psi(&[0, 0, 3, 0], &[0]);
    let beta = [
        k33 / (3.0 * d * d) + 4.0 / 3.0 * (k13.powu(3) / (k01 * k01)) / d.powu(4),
        2.0 / 3.0 * k23 / (d * d) + 4.0 / 3.0 * (k13 * k13 / k01) / d.powu(3),
        2.0 / 3.0 * k13 / (d * d),
        k03 / (3.0 * d),
    ];
    for j in (0..4).rev() {
        cr.rel(&format!("beta{j} (Psi_00300)"), coef(&p, 3.0 * nu, j), beta[j], tol);
    }

    let p = t.psi(&[0, 0, 2, 1], &[0]);
    let delta = [
        k51 * k01 * k01 / (10.0 * k21 * k21) - (k31 * k01 * k21.powu(3) + 8.0 * k31.powu(3) * k21 * k21) / (6.0 * k21.powu(4)),
        (4.0 * k01 * k21.powu(3) - 8.0 * k31 * k31 * k01 * k01 + k41 * k01 * k01 * k21) / (6.0 * k21.powu(3)),
        k31 * k01 * k01 / (6.0 * k21 * k21),
        k01 * k01 / (10.0 * k21),
    ];
    for j in (0..4).rev() {
        cr.rel(&format!("delta{j} (Psi_00210)"), coef(&p, nu, j + 2), delta[j], tol);
    }

    let p = t.psi(&[2, 0, 1, 0], &[0]);
    cr.rel("gamma1 (Psi_20100)", coef(&p, 3.0 * nu, 1), k03 / d, tol);
    cr.rel("gamma0 (Psi_20100)", coef(&p, 3.0 * nu, 0), k13 / (d * d), tol);

    let p = t.psi(&[1, 0, 1, 1], &[0]);
    let omega = [
        2.0 * k01 - 4.0 / 9.0 * k01 * k01 * k31 * k31 / k21.powu(3) - k41 * k01 * k01 / (3.0 * k21 * k21),
        -4.0 / 9.0 * k01 * k01 * k31 / (k21 * k21),
        k01 * k01 / (3.0 * k21),
    ];
    for j in (0..3).rev() {
        cr.rel(&format!("omega{j} (Psi_10110)"), coef(&p, nu, j + 2), omega[j], tol);
    }

    let p = t.psi(&[1, 0, 2, 0], &[0]);
    let rho = [-k23 / (d * d) + 2.0 * (k13 * k13 / k01) / d.powu(3), 2.0 * k13 / (d * d), k03 / d];
    for j in (0..3).rev() {
        cr.rel(&format!("rho{j} (Psi_10200)"), coef(&p, 3.0 * nu, j), rho[j], tol);
    }
    cr
}

fn criterion_5(t: &cm_core::Result<Turing>) -> Criterion {
    let mut cr = Criterion::default();
    let t = match t {
        Ok(t) => t,
        Err(e) => {
            cr.fail("reduction", e);
            return cr;
        }
    };
    let nu = t.nu;
    let l = nu.im;
    let i = c(0.0, 1.0);
    let (k01, k21, k31) = (t.kappa(0, 1), t.kappa(2, 1), t.kappa(3, 1));
    let alpha0 = -k01 * k01 / k21;
    let psi00101 = t.psi(&[0, 0, 1, 0], &[1]);
    let a0_jet = (3.0 * coef(&psi00101, nu, 3) + i * l * coef(&psi00101, nu, 2)) / (l * l);
    let a0_ref = (3.0 * (k01 * k01 / (2.0 * k21)) + i * l * (k31 * k01 * k01 / (2.0 * k21 * k21))) / (l * l);
    let f = &t.jet.field;
    let ablin = |a0: Cx| -> f64 {
        // (powers, component, expected)
        let want = [
            ([1, 0, 0, 0], 0, 2.0 * i * alpha0 / l),
            ([0, 1, 0, 0], 0, 2.0 * i * alpha0 / l),
            ([0, 0, 1, 0], 0, 2.0 * a0 / l),
            ([0, 0, 0, 1], 0, -2.0 * a0 / l),
            ([1, 0, 0, 0], 2, 2.0 * alpha0),
            ([0, 1, 0, 0], 2, 2.0 * alpha0),
            ([0, 0, 1, 0], 2, -2.0 * i * a0),
            ([0, 0, 0, 1], 2, 2.0 * i * a0),
        ];
        let scale = want.iter().map(|w| w.2.norm()).fold(0.0, f64::max);
        want.iter().map(|(p, comp, w)| (f.get(*comp, p, &[1]) - w).norm()).fold(0.0, f64::max) / scale
    };
    let e = ablin(a0_jet);
    cr.check(
        "lambda-linear field with a0 = (3 alpha2 + i l alpha1)/l^2 from the jet's alpha1, alpha2",
        e <= 1e-8,
        format!("rel err {e:.2e}, alpha0 = {:.10e}, a0 = {:.10e}", alpha0.re, a0_jet.re),
    );
    let e = ablin(a0_ref);
    cr.check(
        "lambda-linear field with a0 from the reference alpha1, alpha2",
        e <= 1e-8,
        format!("rel err {e:.2e}, reference a0 = {:.10e}", a0_ref.re),
    );
    let diag = (f.get(0, &[1, 0, 0, 0], &[0]) - i * l).norm() + (f.get(0, &[0, 0, 1, 0], &[0]) - 1.0).norm();
    cr.check("unperturbed part dA/dx = i l A + B", diag <= 1e-8, format!("abs err {diag:.2e}"));

    let (a0, al0) = (a0_jet, alpha0);
    let root = |lam: f64| (-4.0 * l * a0 * lam + l * l + 8.0 * al0 * lam).sqrt();
    let ell = |lam: f64| i / 2.0 * (2.0 * l * l - 4.0 * l * a0 * lam + 2.0 * l * root(lam)).sqrt();
    let alpha = |lam: f64| l * a0 * lam - l * l / 2.0 + l / 2.0 * root(lam);
    let lams = [1e-3, 1e-4];
    let slope = |r: &dyn Fn(f64) -> f64| {
        let ys: Vec<f64> = lams.iter().map(|&x| r(x).max(1e-300).ln()).collect();
        let xs: Vec<f64> = lams.iter().map(|x| x.ln()).collect();
        fit_slope(&xs, &ys)
    };
    let r_ell = |lam: f64| (ell(lam) - l - (al0 - a0) * lam).norm();
    let r_alpha = |lam: f64| (alpha(lam) - 2.0 * al0 * lam).norm();
    let s = slope(&r_ell);
    cr.check(
        "l(lambda) - l_c - (alpha0 - a0) lambda = o(lambda)",
        s >= 1.5,
        format!("slope {s:.3}, remainders {:.3e}, {:.3e}", r_ell(lams[0]), r_ell(lams[1])),
    );
    let s = slope(&r_alpha);
    cr.check(
        "alpha(lambda) - 2 alpha0 lambda = o(lambda)",
        s >= 1.5,
        format!("slope {s:.3}, remainders {:.3e}, {:.3e}", r_alpha(lams[0]), r_alpha(lams[1])),
    );
    cr
}

fn criterion_6() -> Criterion {
    let mut cr = Criterion::default();
    let start = Instant::now();
    let p = match Problem::load(&problem_path("turing.json")) {
        Ok(p) => p,
        Err(e) => {
            cr.fail("load", e);
            return cr;
        }
    };
    match problem::verify(&p, 3, &Tolerances::default()) {
        Ok(report) => {
            for run in &report.runs {
                cr.check(
                    format!("lambda = {:e}", run.parameter),
                    run.residual.converged,
                    format!(
                        "amplitude {:.6e}, residual {:.3e}, quadrature estimate {:.2e}",
                        run.amplitude, run.residual.max, run.residual.quadrature_estimate
                    ),
                );
            }
            for (name, ok) in report.checks {
                cr.check(name, ok, "");
            }
        }
        Err(e) => cr.fail("verify", e),
    }
    let secs = start.elapsed().as_secs_f64();
    cr.check("runtime < 60 s", secs < 60.0, format!("{secs:.2} s"));
    cr
}

fn criterion_7() -> Criterion {
    let mut cr = Criterion::default();
    let p = match Problem::load(&problem_path("front.json")) {
        Ok(p) => p,
        Err(e) => {
            cr.fail("load", e);
            return cr;
        }
    };
    let tol = Tolerances::default();
    let (lin, report) = match problem::reduce(&p, 3, &tol) {
        Ok(r) => r,
        Err(e) => {
            cr.fail("reduce", e);
            return cr;
        }
    };
    // D = 1, e0 = e0* = 1, F = (1 + mu) u - u^3.
    let zero = c(0.0, 0.0);
    let inner = lin.kernel.scaled(c(-1.0, 0.0));
    let k0 = inner.moment(0, zero).unwrap()[(0, 0)];
    let kappa2 = inner.moment(2, zero).unwrap()[(0, 0)];
    let (du_f, du_mu_f, du3_f) = (1.0, 1.0, -6.0);
    let alpha = k0 * du_mu_f;
    let beta = -k0 * du3_f / 6.0;
    let jet = &report.jet;
    let x2 = |powers: &[u32], params: &[u32]| {
        jet.psi_at(&idx(powers, params)).map_or(zero, |u| coef(u, zero, 2))
    };
    // Per unit c*: c = eps c* enters as a formal parameter.
    cr.rel("gamma0 = -c*/kappa2 (Psi at B c)", x2(&[0, 1], &[0, 1]), -1.0 / (kappa2 * du_f), 1e-7);
    cr.rel("alpha0 = -alpha/kappa2 (Psi at A mu)", x2(&[1, 0], &[1, 0]), -alpha / kappa2, 1e-7);
    cr.rel("beta0 = beta/kappa2 (Psi at A^3)", x2(&[3, 0], &[0, 0]), beta / kappa2, 1e-7);
    match problem::verify(&p, 3, &tol) {
        Ok(r) => {
            let kappa = r.coefficients["kappa"];
            cr.rel("kappa of the front equation = kappa2/2", c(kappa, 0.0), kappa2 / 2.0, 1e-7);
            for (name, ok) in r.checks {
                cr.check(name, ok, "shooting tolerance 1e-4");
            }
            for run in &r.runs {
                cr.check(
                    format!("grid residual at eps = {:e}, c* = {:.4}", run.parameter, run.c_star.unwrap_or(0.0)),
                    run.residual.converged,
                    format!("residual {:.3e}, estimate {:.2e}", run.residual.max, run.residual.quadrature_estimate),
                );
            }
        }
        Err(e) => cr.fail("verify", e),
    }
    cr
}

fn random_qp(rng: &mut impl Rng, freqs: &[Cx]) -> QuasiPolynomial {
    let terms: Vec<(Cx, Polynomial)> = freqs
        .iter()
        .map(|nu| {
            let deg = rng.gen_range(0..4);
            let cs = (0..=deg).map(|_| vec![c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))]).collect();
            (*nu, Polynomial::new(1, cs).unwrap())
        })
        .collect();
    QuasiPolynomial::from_terms(1, terms).unwrap()
}

fn criterion_8(t: &cm_core::Result<Turing>) -> Criterion {
    let mut cr = Criterion::default();
    let start = Instant::now();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let t = match t {
        Ok(t) => t,
        Err(e) => {
            cr.fail("reduction", e);
            return cr;
        }
    };
    let nu = t.nu;
    let freqs = [nu, nu.conj(), 3.0 * nu, c(0.0, 0.0), c(0.0, 2.0)];

    // Projection idempotence, both flavors.
    let gram = Projection::build_gram(t.lin.projection.basis.clone(), Weight::Gaussian).unwrap();
    for (name, proj) in [("pointwise", &t.lin.projection), ("gram", &gram)] {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let u = random_qp(&mut rng, &freqs);
            let (a, pu) = proj.project(&u).unwrap();
            let b = proj.coords(&pu).unwrap();
            let scale = a.iter().map(|v| v.norm()).fold(1.0, f64::max);
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale);
        }
        cr.check(format!("{name} projection idempotent"), worst <= 1e-12, format!("max defect {worst:.2e}"));
    }

    // Winding count of the certified rectangle against the kernel dimension.
    for name in ["growth.json", "turing.json", "front.json"] {
        let p = Problem::load(&problem_path(name)).unwrap();
        let lin = problem::linear_stage(&p, &Tolerances::default()).unwrap();
        let cert = &lin.spectrum.certificate;
        let w = count_roots(&lin.kernel, &cert.full).unwrap();
        cr.check(
            format!("{name}: winding count = kernel dimension"),
            w == lin.spectrum.total_mult as i64 && w == lin.projection.dim() as i64,
            format!("winding {w}, multiplicity {}, basis {}", lin.spectrum.total_mult, lin.projection.dim()),
        );
    }

    // Moments against finite differences of the transform.
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let z = c(rng.gen_range(-0.5..0.5), rng.gen_range(-4.0..4.0));
        let h = 1e-4;
        let d = (t.k.transform(z + h, 0).unwrap()[(0, 0)] - t.k.transform(z - h, 0).unwrap()[(0, 0)]) / (2.0 * h);
        let m1 = t.k.moment(1, z).unwrap()[(0, 0)];
        worst = worst.max((d + m1).norm() / (1.0 + m1.norm()));
    }
    cr.check("moment = -d/dnu transform", worst <= 1e-6, format!("max defect {worst:.2e}"));

    // Linear solves checked pointwise on a grid.
    let solver = Solver::new(&t.lin.kernel, &t.lin.spectrum, &t.lin.projection);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let g = random_qp(&mut rng, &freqs);
        match solver.solve(&g, None) {
            Ok(u) => {
                let tu = &u + &t.lin.kernel.convolve_qp(&u).unwrap();
                for j in 0..=60 {
                    let x = -3.0 + 0.1 * j as f64;
                    let r = (tu.eval(x)[0] + g.eval(x)[0]).norm() / (1.0 + g.coeff_norm());
                    worst = worst.max(r);
                }
            }
            Err(e) => {
                cr.fail("linear solve", e);
                worst = f64::INFINITY;
            }
        }
    }
    cr.check("u + K*u + g = 0 on a grid", worst <= 1e-7, format!("max residual {worst:.2e}"));

    // Shift group and flow by finite differences.
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = random_qp(&mut rng, &freqs);
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let d = (&u.shift(a).shift(b) - &u.shift(a + b)).coeff_norm() / u.coeff_norm();
        worst = worst.max(d);
    }
    cr.check("shift(a) shift(b) = shift(a + b)", worst <= 1e-12, format!("max defect {worst:.2e}"));
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = random_qp(&mut rng, &freqs);
        let h = 1e-5;
        let p = &t.lin.projection;
        let fd: Vec<Cx> = p
            .coords(&u.shift(h))
            .unwrap()
            .iter()
            .zip(p.coords(&u.shift(-h)).unwrap())
            .map(|(x, y)| (x - y) / (2.0 * h))
            .collect();
        let exact = p.coords(&u.diff()).unwrap();
        let scale = exact.iter().map(|v| v.norm()).fold(1.0, f64::max);
        worst = worst.max(fd.iter().zip(&exact).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale);
    }
    cr.check("flow coordinates against finite differences", worst <= 1e-6, format!("max defect {worst:.2e}"));

    // Jet diagnostics, including symmetry vanishing patterns.
    for name in ["growth.json", "turing.json", "front.json"] {
        let p = Problem::load(&problem_path(name)).unwrap();
        match problem::reduce(&p, 3, &Tolerances::default()) {
            Ok((_, r)) => {
                let d = &r.jet.diagnostics;
                let fails = d.failures();
                cr.check(format!("{name}: jet diagnostics"), fails.is_empty(), fails.join("; "));
                cr.check(
                    format!("{name}: flow finite-difference defect"),
                    d.flow_defect_max <= 1e-6,
                    format!("{:.2e}", d.flow_defect_max),
                );
                if !d.symmetry.declared.is_empty() {
                    cr.check(
                        format!("{name}: declared symmetries hold, parity entries exactly zero"),
                        d.symmetry.violations.is_empty() && d.parity_defect.is_none_or(|v| v == 0.0),
                        format!("declared {:?}, parity defect {:?}", d.symmetry.declared, d.parity_defect),
                    );
                }
            }
            Err(e) => cr.fail(&format!("{name}: reduce"), e),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    cr.check("runtime < 5 min", secs < 300.0, format!("{secs:.2} s"));
    cr
}

fn main() {
    let titles = [
        "simple-zero reduction through the CLI",
        "flow of projection coordinates",
        "linear-in-parameter and A|A|^2 manifold terms at a double pair",
        "cubic manifold coefficients at a double pair",
        "linear reduced field and its parameter expansions",
        "pulse scaling: residual slope and amplitude",
        "front coefficients and front shooting",
        "invariant suites",
    ];
    let budgets = [1.0, 10.0, 10.0, 10.0, 10.0, 60.0, 60.0, 300.0];
    let t0 = Instant::now();
    let turing = Turing::load();
    let setup = t0.elapsed().as_secs_f64();
    let runs: Vec<Box<dyn Fn() -> Criterion + '_>> = vec![
        Box::new(criterion_1),
        Box::new(criterion_2),
        Box::new(|| criterion_3(&turing)),
        Box::new(|| criterion_4(&turing)),
        Box::new(|| criterion_5(&turing)),
        Box::new(criterion_6),
        Box::new(criterion_7),
        Box::new(|| criterion_8(&turing)),
    ];
    let mut failed = 0;
    for (n, run) in runs.iter().enumerate() {
        let start = Instant::now();
        let mut cr = run();
        let mut secs = start.elapsed().as_secs_f64();
        if (2..5).contains(&n) {
            secs += setup;
        }
        if n < 5 {
            cr.check(format!("runtime < {} s", budgets[n]), secs < budgets[n], format!("{secs:.2} s"));
        }
        let ok = cr.items.iter().all(|i| i.ok);
        let passed = cr.items.iter().filter(|i| i.ok).count();
        println!(
            "{} {} {}: {passed}/{} items ({secs:.2} s)",
            if ok { "PASS" } else { "FAIL" },
            n + 1,
            titles[n],
            cr.items.len()
        );
        for i in &cr.items {
            let sep = if i.detail.is_empty() { "" } else { ": " };
            println!("    {} {}{sep}{}", if i.ok { "ok  " } else { "FAIL" }, i.name, i.detail);
        }
        if !ok {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", runs.len() - failed, runs.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
