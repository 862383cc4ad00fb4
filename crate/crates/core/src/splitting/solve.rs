use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{error_report, ErrorReport, EVAL_GRID};
use super::problem::{Operator, ProblemSpec};
use crate::constraints::effective_rhs_minkowski;
use crate::error::{Error, Result};
use crate::geometry::CollocationSet;
use crate::network::{Architecture, NetworkParams};
use crate::optim::{AdamConfig, LbfgsConfig};
use crate::ritz::{
    train, LossReport, LossSpec, ScalarFn, TrainContext, TrainOutput, TrainSchedule,
};
use crate::tensor_ad::{eval_jets, SymMat2, Vec2};

/// Projected Hessians at a set of points, with the gradients they were built from.
#[derive(Clone, Debug, Default)]
pub struct ProjectionField {
    pub points: Vec<Vec2>,
    pub p: Vec<SymMat2>,
    pub grads: Vec<Vec2>,
}

/// Project `D²u(xᵢ)` onto the pointwise constraint, with gradient-dependent
/// data evaluated at the current `∇u(xᵢ)`.
pub fn project_step(
    net: &NetworkParams,
    points: &[Vec2],
    spec: &ProblemSpec,
) -> Result<ProjectionField> {
    let jets = eval_jets(net, points);
    let p = points
        .par_iter()
        .zip(&jets)
        .enumerate()
        .map(|(index, (&x, jet))| {
            if !jet.is_finite() {
                return Err(Error::NonFinite {
                    index,
                    what: format!("network jet at {x:?}"),
                });
            }
            spec.constraint_at(x, jet.grad)
                .project(jet.hess)
                .map_err(|e| match e {
                    Error::InvalidInput(msg) => Error::InvalidData {
                        index,
                        what: format!("projection at {x:?}: {msg}"),
                    },
                    other => other,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectionField {
        points: points.to_vec(),
        p,
        grads: jets.iter().map(|j| j.grad).collect(),
    })
}

/// L-BFGS epochs of outer iteration `n` (0-based): 70 decaying geometrically to 4.
pub fn lbfgs_epochs(n: usize) -> usize {
    ((70.0 * 0.7f64.powi(n as i32)).round() as usize).max(4)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    DeepRitz,
    /// Direct collocation of `det D²u = f` with the same epoch budget.
    PinnBaseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::DeepRitz => "deep_ritz",
            Mode::PinnBaseline => "pinn_baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deep_ritz" => Ok(Mode::DeepRitz),
            "pinn_baseline" => Ok(Mode::PinnBaseline),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected deep_ritz or pinn_baseline)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub n_c: usize,
    pub n_b: usize,
    pub n_iters: usize,
    pub mode: Mode,
    pub adaptive: bool,
    pub seed_fraction: f64,
    pub resample_every: usize,
    pub first_adam_epochs: usize,
    pub later_adam_epochs: usize,
    /// Per-iteration L-BFGS epochs; the decay rule applies past its end.
    pub lbfgs_table: Option<Vec<usize>>,
    pub lbfgs_iters_per_epoch: usize,
    pub init_adam_epochs: usize,
    pub init_lbfgs_epochs: usize,
    #[serde(skip)]
    pub adam: AdamConfig,
    #[serde(skip)]
    pub lbfgs: LbfgsConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            n_c: 3000,
            n_b: 300,
            n_iters: 10,
            mode: Mode::DeepRitz,
            adaptive: false,
            seed_fraction: 0.01,
            resample_every: 10,
            first_adam_epochs: 200,
            later_adam_epochs: 50,
            lbfgs_table: None,
            lbfgs_iters_per_epoch: 20,
            init_adam_epochs: 200,
            init_lbfgs_epochs: 70,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 {
            return Err(Error::Config(
                "at least one outer iteration is required".into(),
            ));
        }
        if self.n_c == 0 || self.n_b == 0 {
            return Err(Error::Config(
                "collocation and boundary point counts must be positive".into(),
            ));
        }
        self.schedule_for(0).validate()?;
        self.init_schedule().validate()
    }

    /// Inner schedule of outer iteration `n` (0-based).
    pub fn schedule_for(&self, n: usize) -> TrainSchedule {
        let lbfgs = self
            .lbfgs_table
            .as_ref()
            .and_then(|t| t.get(n).copied())
            .unwrap_or_else(|| lbfgs_epochs(n));
        TrainSchedule {
            adam_epochs: if n == 0 {
                self.first_adam_epochs
            } else {
                self.later_adam_epochs
            },
            lbfgs_epochs: lbfgs,
            lbfgs_iters_per_epoch: self.lbfgs_iters_per_epoch,
            resample_every: self.resample_every,
            seed_fraction: self.seed_fraction,
            adaptive: self.adaptive,
            pool_factor: 10,
            adam: self.adam,
            lbfgs: self.lbfgs,
        }
    }

    pub fn init_schedule(&self) -> TrainSchedule {
        TrainSchedule {
            adam_epochs: self.init_adam_epochs,
            lbfgs_epochs: self.init_lbfgs_epochs,
            adaptive: false,
            ..self.schedule_for(0)
        }
    }
}

/// Snapshot handed to the observer after initialization (`outer = 0`) and
/// after every outer iteration.
pub struct IterationRecord<'a> {
    pub outer: usize,
    pub net: &'a NetworkParams,
    pub reports: &'a [LossReport],
    pub errors: Option<&'a ErrorReport>,
    pub collocation: &'a CollocationSet,
}

#[derive(Clone, Debug)]
pub struct SolveOutput {
    pub net: NetworkParams,
    /// `(outer iteration, report)`; iteration 0 is the initialization.
    pub history: Vec<(usize, LossReport)>,
    pub errors: Vec<(usize, ErrorReport)>,
    pub aborted: Option<String>,
}

fn check_nonnegative(values: &[f64], points: &[Vec2], what: &str) -> Result<()> {
    match values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        Some(index) => Err(Error::InvalidData {
            index,
            what: format!("{what} = {} at {:?}", values[index], points[index]),
        }),
        None => Ok(()),
    }
}

/// Train the initial guess: a Poisson solve `Δu⁰ = g` for Dirichlet problems,
/// a fit of `½|x|²` for transport problems.
pub fn initialize<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    arch: Architecture,
    config: &SolveConfig,
    rng: &mut R,
) -> Result<TrainOutput> {
    spec.validate()?;
    let net = NetworkParams::init(arch, rng)?;
    let colloc = CollocationSet::uniform(&spec.domain, config.n_c, config.n_b, rng);
    let phi = spec.phi.clone();
    let g: Option<ScalarFn> = match &spec.operator {
        Operator::MongeAmpere { f } | Operator::Sigma2 { f } => {
            let values: Vec<f64> = colloc.points.iter().map(|&x| f(x)).collect();
            check_nonnegative(&values, &colloc.points, "right-hand side f")?;
            let f = f.clone();
            Some(Arc::new(move |x| 2.0 * f(x).max(0.0).sqrt()))
        }
        // α = 1 turns the operator into the Laplacian
        Operator::Pucci { f, .. } => Some(f.clone()),
        Operator::Minkowski { k, center } => {
            let values: Vec<f64> = colloc.points.iter().map(|&x| k(x)).collect();
            check_nonnegative(&values, &colloc.points, "curvature K")?;
            let (k, c) = (k.clone(), *center);
            Some(Arc::new(move |x: Vec2| {
                2.0 * effective_rhs_minkowski(k(x).max(0.0), x - c).sqrt()
            }))
        }
        Operator::Transport { .. } => None,
    };
    let loss = match (g, phi) {
        (Some(g), Some(phi)) => LossSpec::PoissonInit { g, phi },
        (None, _) => LossSpec::QuadraticFit,
        (Some(_), None) => unreachable!("validated Dirichlet data"),
    };
    let ctx = TrainContext {
        loss: &loss,
        lambda: spec.lambda,
        domain: &spec.domain,
        targets: None,
    };
    train(net, colloc, &ctx, &config.init_schedule(), rng)
}

/// Initialization followed by `n_iters` outer iterations, each on fresh
/// uniform collocation points and warm-started from the previous network.
///
/// `observer` sees every iteration as soon as it finishes; an error it
/// returns stops the solve. Numerical failures end the solve early with
/// `aborted` set rather than as an error.
pub fn outer_solve<R: Rng + ?Sized>(
    spec: &ProblemSpec,
    arch: Architecture,
    config: &SolveConfig,
    rng: &mut R,
    observer: &mut dyn FnMut(&IterationRecord<'_>) -> Result<()>,
) -> Result<SolveOutput> {
    config.validate()?;
    spec.validate()?;
    let pinn_data = match (config.mode, &spec.operator) {
        (Mode::DeepRitz, _) => None,
        (Mode::PinnBaseline, Operator::MongeAmpere { f }) => Some(f.clone()),
        (Mode::PinnBaseline, op) => {
            return Err(Error::Unsupported(format!(
                "the collocation baseline covers Monge-Ampère only, not {}",
                op.name()
            )))
        }
    };

    let mut history = Vec::new();
    let mut errors = Vec::new();
    let mut record =
        |outer: usize, out: &TrainOutput, errors: &mut Vec<(usize, ErrorReport)>| -> Result<()> {
            history.extend(out.reports.iter().map(|r| (outer, *r)));
            let report = match &spec.exact {
                Some(_) => Some(error_report(&out.net, spec, EVAL_GRID)?),
                None => None,
            };
            observer(&IterationRecord {
                outer,
                net: &out.net,
                reports: &out.reports,
                errors: report.as_ref(),
                collocation: &out.collocation,
            })?;
            if let Some(r) = report {
                errors.push((outer, r));
            }
            Ok(())
        };

    let init = initialize(spec, arch, config, rng)?;
    record(0, &init, &mut errors)?;
    let mut net = init.net;
    let mut aborted = init.aborted.map(|r| format!("initialization, {r}"));

    for n in 0..config.n_iters {
        if aborted.is_some() {
            break;
        }
        let colloc = CollocationSet::uniform(&spec.domain, config.n_c, config.n_b, rng);
        let frozen = net.clone();
        let targets = |pts: &[Vec2]| project_step(&frozen, pts, spec).map(|field| field.p);
        let loss = match (&pinn_data, &spec.operator) {
            (Some(f), _) => LossSpec::Pinn {
                f: f.clone(),
                phi: spec.phi.clone().expect("validated Dirichlet data"),
            },
            (None, Operator::Transport { target, .. }) => LossSpec::Transport {
                target_boundary: target.sample_boundary(config.n_b, rng),
            },
            (None, _) => LossSpec::Dirichlet {
                phi: spec.phi.clone().expect("validated Dirichlet data"),
            },
        };
        let ctx = TrainContext {
            loss: &loss,
            lambda: spec.lambda,
            domain: &spec.domain,
            targets: loss.needs_targets().then_some(&targets as _),
        };
        let out = match train(net.clone(), colloc, &ctx, &config.schedule_for(n), rng) {
            Ok(out) => out,
            Err(e) if e.is_numerical() => {
                aborted = Some(format!("outer iteration {}: {e}", n + 1));
                break;
            }
            Err(e) => return Err(e),
        };
        record(n + 1, &out, &mut errors)?;
        aborted = out
            .aborted
            .map(|r| format!("outer iteration {}, {r}", n + 1));
        net = out.net;
    }
    Ok(SolveOutput {
        net,
        history,
        errors,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::project_pucci;
    use crate::geometry::Domain;
    use crate::network::ArchKind;
    use crate::tensor_ad::{eval_jet, Jet2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ma_spec(f: ScalarFn) -> ProblemSpec {
        ProblemSpec {
            operator: Operator::MongeAmpere { f },
            domain: Domain::unit_square(),
            phi: Some(Arc::new(|_| 0.0)),
            lambda: 100.0,
            exact: None,
        }
    }

    fn points(n: usize, seed: u64) -> Vec<Vec2> {
        Domain::unit_square().sample_interior(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn epoch_decay() {
        let e: Vec<usize> = (0..12).map(lbfgs_epochs).collect();
        assert_eq!(e, vec![70, 49, 34, 24, 17, 12, 8, 6, 4, 4, 4, 4]);
    }

    #[test]
    fn zero_net_projects_to_identity() {
        let net = NetworkParams::zeros(Architecture::standard(ArchKind::Icnn)).unwrap();
        let spec = ma_spec(Arc::new(|_| 1.0));
        let field = project_step(&net, &points(50, 1), &spec).unwrap();
        for q in &field.p {
            assert!((*q - SymMat2::IDENTITY).frobenius() < 1e-9, "{q:?}");
        }
        assert!(field.grads.iter().all(|g| *g == Vec2::ZERO));
    }

    #[test]
    fn feasible_hessian_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = NetworkParams::init(Architecture::standard(ArchKind::Icnn), &mut rng).unwrap();
        let n2 = net.clone();
        let spec = ma_spec(Arc::new(move |x| eval_jet(&n2, x).hess.det()));
        let pts = points(100, 3);
        let field = project_step(&net, &pts, &spec).unwrap();
        for (x, q) in pts.iter().zip(&field.p) {
            let h = eval_jet(&net, *x).hess;
            assert!((*q - h).frobenius() < 1e-8 * h.frobenius().max(1.0));
        }
    }

    #[test]
    fn pucci_dispatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = NetworkParams::init(Architecture::standard(ArchKind::Mlp), &mut rng).unwrap();
        let spec = ProblemSpec {
            operator: Operator::Pucci {
                f: Arc::new(|_| 0.5),
                alpha: 3.0,
            },
            ..ma_spec(Arc::new(|_| 1.0))
        };
        let pts = points(20, 5);
        let field = project_step(&net, &pts, &spec).unwrap();
        for (x, q) in pts.iter().zip(&field.p) {
            let expected = project_pucci(eval_jet(&net, *x).hess, 0.5, 3.0).unwrap();
            assert_eq!(*q, expected);
        }
    }

    #[test]
    fn negative_data_names_the_point() {
        let net = NetworkParams::zeros(Architecture::standard(ArchKind::Icnn)).unwrap();
        let spec = ma_spec(Arc::new(|x: Vec2| if x.x1 > 0.5 { -1.0 } else { 1.0 }));
        let pts = vec![Vec2::new(0.1, 0.1), Vec2::new(0.9, 0.1)];
        assert!(matches!(
            project_step(&net, &pts, &spec),
            Err(Error::InvalidData { index: 1, .. })
        ));
        let cfg = SolveConfig {
            n_c: 100,
            n_b: 20,
            ..SolveConfig::default()
        };
        let err = initialize(
            &spec,
            Architecture::standard(ArchKind::Icnn),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(6),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidData { .. }));
    }

    #[test]
    fn zero_iterations_rejected() {
        let spec = ma_spec(Arc::new(|_| 1.0));
        let cfg = SolveConfig {
            n_iters: 0,
            ..SolveConfig::default()
        };
        let r = outer_solve(
            &spec,
            spec.default_architecture(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(7),
            &mut |_| Ok(()),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn pinn_mode_rejects_other_operators() {
        let spec = ProblemSpec {
            operator: Operator::Pucci {
                f: Arc::new(|_| 0.0),
                alpha: 2.0,
            },
            ..ma_spec(Arc::new(|_| 1.0))
        };
        let cfg = SolveConfig {
            mode: Mode::PinnBaseline,
            ..SolveConfig::default()
        };
        let r = outer_solve(
            &spec,
            spec.default_architecture(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(8),
            &mut |_| Ok(()),
        );
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }

    #[test]
    fn harmonic_initialization_with_zero_data() {
        let spec = ProblemSpec {
            domain: Domain::unit_disk(),
            ..ma_spec(Arc::new(|_| 0.0))
        };
        let cfg = SolveConfig {
            n_c: 400,
            n_b: 100,
            init_adam_epochs: 50,
            init_lbfgs_epochs: 40,
            lbfgs_iters_per_epoch: 20,
            ..SolveConfig::default()
        };
        let out = initialize(
            &spec,
            spec.default_architecture(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let last = out.reports.last().unwrap();
        // energy 1e-4 corresponds to |∇u| of order 1e-2
        assert!(last.total.abs() < 1e-4, "{last:?}");
        let v = out.net.forward(Vec2::new(0.2, -0.3));
        assert!(v.abs() < 1e-2, "{v}");
    }

    #[test]
    fn transport_initialization_fits_identity_map() {
        let target = Domain::Ellipse {
            center: Vec2::new(3.5, 0.0),
            semi_axes: Vec2::new(2.0, 0.5),
        };
        let spec = ProblemSpec {
            operator: Operator::Transport {
                mu0: Arc::new(|_| 1.0),
                mu1: Arc::new(|_| 1.0),
                target,
            },
            domain: Domain::unit_disk(),
            phi: None,
            lambda: 100.0,
            exact: None,
        };
        let cfg = SolveConfig {
            n_c: 500,
            n_b: 100,
            init_adam_epochs: 100,
            init_lbfgs_epochs: 60,
            lbfgs_iters_per_epoch: 20,
            ..SolveConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let out = initialize(&spec, spec.default_architecture(), &cfg, &mut rng).unwrap();
        let test = Domain::unit_disk().sample_interior(1000, &mut rng);
        let mae = test
            .iter()
            .map(|&x| {
                let j: Jet2 = eval_jet(&out.net, x);
                (j.grad - x).norm()
            })
            .sum::<f64>()
            / 1000.0;
        assert!(mae < 1e-2, "{mae}");
    }

    #[test]
    fn mode_round_trips() {
        for m in [Mode::DeepRitz, Mode::PinnBaseline] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("pinn".parse::<Mode>().is_err());
    }
}
