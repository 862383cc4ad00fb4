use std::f64::consts::PI;
use std::sync::Arc;

use statrs::function::erf::erf;

use crate::constraints::{eigen2, pucci_operator};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::ritz::ScalarFn;
use crate::splitting::{ExactFn, Operator, ProblemSpec};
use crate::tensor_ad::{Jet2, Vec2};

/// Per-case defaults, overridable from the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseDefaults {
    pub n_c: usize,
    pub n_b: usize,
    pub n_iters: usize,
    pub n_repeats: usize,
    pub adaptive: bool,
}

#[derive(Clone, Debug)]
pub struct BenchmarkCase {
    pub name: &'static str,
    pub spec: ProblemSpec,
    pub defaults: CaseDefaults,
    /// Upper bound of the source density, for rejection sampling of `μ₀`.
    pub source_bound: Option<f64>,
}

const DIRICHLET: CaseDefaults = CaseDefaults {
    n_c: 3000,
    n_b: 300,
    n_iters: 10,
    n_repeats: 5,
    adaptive: true,
};

fn exact_fn(u: impl Fn(Jet2, Jet2) -> Jet2 + Send + Sync + 'static) -> ExactFn {
    Arc::new(move |x: Vec2| {
        let (a, b) = Jet2::coordinates(x);
        u(a, b)
    })
}

fn value_of(u: &ExactFn) -> ScalarFn {
    let u = u.clone();
    Arc::new(move |x| u(x).value)
}

/// `det D²u` of the exact solution, by jet differentiation.
fn det_of(u: &ExactFn) -> ScalarFn {
    let u = u.clone();
    Arc::new(move |x| u(x).hess.det())
}

fn monge_ampere(u: ExactFn, domain: Domain) -> ProblemSpec {
    ProblemSpec {
        operator: Operator::MongeAmpere { f: det_of(&u) },
        domain,
        phi: Some(value_of(&u)),
        lambda: 100.0,
        exact: Some(u),
    }
}

fn exp_case(name: &'static str, alpha: f64) -> BenchmarkCase {
    let u = exact_fn(move |a, b| ((a * a + b * b) * (0.5 * alpha)).exp());
    BenchmarkCase {
        name,
        spec: monge_ampere(u, Domain::unit_square()),
        defaults: DIRICHLET,
        source_bound: None,
    }
}

fn sqrt_case(name: &'static str, r: f64) -> BenchmarkCase {
    let u = exact_fn(move |a, b| -(r * r - (a * a + b * b)).sqrt());
    BenchmarkCase {
        name,
        spec: monge_ampere(u, Domain::unit_square()),
        defaults: DIRICHLET,
        source_bound: None,
    }
}

fn pucci_case(name: &'static str, alpha: f64) -> BenchmarkCase {
    let u = exact_fn(move |a, b| {
        -((a + 1.0) * (a + 1.0) + (b + 1.0) * (b + 1.0)).powf(0.5 * (1.0 - alpha))
    });
    let uf = u.clone();
    let f: ScalarFn = Arc::new(move |x| {
        let e = eigen2(uf(x).hess);
        pucci_operator(e.lambda1, e.lambda2, alpha)
    });
    BenchmarkCase {
        name,
        spec: ProblemSpec {
            operator: Operator::Pucci { f, alpha },
            domain: Domain::unit_square(),
            phi: Some(value_of(&u)),
            lambda: 1000.0,
            exact: Some(u),
        },
        defaults: DIRICHLET,
        source_bound: None,
    }
}

fn minkowski() -> BenchmarkCase {
    let b = Vec2::new(0.5, 0.5);
    let u = exact_fn(move |x1, x2| {
        let (p, q) = (x1 - b.x1, x2 - b.x2);
        p * p + q * q
    });
    let k: ScalarFn = Arc::new(move |x: Vec2| 4.0 / (1.0 + 4.0 * x.dist_sq(b)).powi(2));
    BenchmarkCase {
        name: "minkowski",
        spec: ProblemSpec {
            operator: Operator::Minkowski { k, center: b },
            domain: Domain::unit_square(),
            phi: Some(value_of(&u)),
            lambda: 100.0,
            exact: Some(u),
        },
        defaults: DIRICHLET,
        source_bound: None,
    }
}

/// `∫₀¹ exp(−(t − m)² / (2v)) dt`.
fn gauss_mass(m: f64, v: f64) -> f64 {
    let s = (2.0 * v).sqrt();
    0.5 * (PI * s * s).sqrt() * (erf((1.0 - m) / s) - erf(-m / s))
}

fn gauss(t: f64, m: f64, v: f64) -> f64 {
    (-(t - m) * (t - m) / (2.0 * v)).exp()
}

const TWO_GAUSS_VX: f64 = 0.25;
const TWO_GAUSS_VY: f64 = 0.015625;

/// Two anisotropic Gaussians on the unit square, normalised to unit mass.
fn two_gauss_density() -> ScalarFn {
    let c0 = 1.0
        / (gauss_mass(0.5, TWO_GAUSS_VX)
            * (gauss_mass(0.2, TWO_GAUSS_VY) + gauss_mass(0.8, TWO_GAUSS_VY)));
    Arc::new(move |x: Vec2| {
        c0 * gauss(x.x1, 0.5, TWO_GAUSS_VX)
            * (gauss(x.x2, 0.2, TWO_GAUSS_VY) + gauss(x.x2, 0.8, TWO_GAUSS_VY))
    })
}

/// Isotropic Gaussian restricted to the unit square, normalised there; the
/// formula is used unchanged outside the square.
fn single_gauss_density(center: Vec2, var: f64) -> (ScalarFn, f64) {
    let c0 = 1.0 / (gauss_mass(center.x1, var) * gauss_mass(center.x2, var));
    (
        Arc::new(move |x: Vec2| c0 * gauss(x.x1, center.x1, var) * gauss(x.x2, center.x2, var)),
        c0,
    )
}

const OT: CaseDefaults = CaseDefaults {
    n_c: 1000,
    n_b: 1000,
    n_iters: 30,
    n_repeats: 1,
    adaptive: false,
};

const OT_GAUSS: CaseDefaults = CaseDefaults {
    n_iters: 20,
    adaptive: true,
    ..OT
};

fn transport(name: &'static str, mu0: ScalarFn, bound: f64, mu1: ScalarFn) -> BenchmarkCase {
    BenchmarkCase {
        name,
        spec: ProblemSpec {
            operator: Operator::Transport {
                mu0,
                mu1,
                target: Domain::unit_square(),
            },
            domain: Domain::unit_square(),
            phi: None,
            lambda: 100.0,
            exact: None,
        },
        defaults: OT_GAUSS,
        source_bound: Some(bound),
    }
}

fn ot_disk_ellipse() -> BenchmarkCase {
    let u = exact_fn(|a, b| a * a + b * b * 0.25 + a * 3.5);
    let density: ScalarFn = Arc::new(|_| 1.0 / PI);
    BenchmarkCase {
        name: "ot_disk_ellipse",
        spec: ProblemSpec {
            operator: Operator::Transport {
                mu0: density.clone(),
                mu1: density,
                target: Domain::Ellipse {
                    center: Vec2::new(3.5, 0.0),
                    semi_axes: Vec2::new(2.0, 0.5),
                },
            },
            domain: Domain::unit_disk(),
            phi: None,
            lambda: 100.0,
            exact: Some(u),
        },
        defaults: OT,
        source_bound: Some(1.0 / PI),
    }
}

/// All benchmark cases.
pub fn catalog() -> Vec<BenchmarkCase> {
    let uniform: ScalarFn = Arc::new(|_| 1.0);
    let (gauss_source, gauss_peak) = single_gauss_density(Vec2::new(0.25, 0.75), 0.25);
    let two_gauss = two_gauss_density();
    let two_gauss_peak = two_gauss(Vec2::new(0.5, 0.2)).max(two_gauss(Vec2::new(0.5, 0.8))) * 1.01;
    let (gauss_target, _) = single_gauss_density(Vec2::new(0.5, 0.5), 0.04);
    vec![
        exp_case("exp_alpha1", 1.0),
        exp_case("exp_alpha4", 4.0),
        sqrt_case("sqrt_R2", 2.0),
        sqrt_case("sqrt_Rcrit", 2f64.sqrt() + 0.01),
        BenchmarkCase {
            name: "disk_degenerate",
            spec: monge_ampere(
                exact_fn(|a, b| (a * a + b * b - 1.0) * 0.5),
                Domain::unit_disk(),
            ),
            defaults: DIRICHLET,
            source_bound: None,
        },
        pucci_case("pucci_alpha2", 2.0),
        pucci_case("pucci_alpha3", 3.0),
        pucci_case("pucci_alpha5", 5.0),
        minkowski(),
        ot_disk_ellipse(),
        transport(
            "ot_gauss_uniform",
            gauss_source,
            gauss_peak,
            uniform.clone(),
        ),
        transport(
            "ot_twogauss_uniform",
            two_gauss.clone(),
            two_gauss_peak,
            uniform,
        ),
        transport("ot_twogauss_gauss", two_gauss, two_gauss_peak, gauss_target),
    ]
}

pub fn case(name: &str) -> Result<BenchmarkCase> {
    catalog()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = catalog().iter().map(|c| c.name).collect();
            Error::Config(format!(
                "unknown case {name:?}; available: {}",
                names.join(", ")
            ))
        })
}
