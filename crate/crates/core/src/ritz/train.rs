use std::cell::RefCell;
use std::io::Write;
use std::time::Instant;

use rand::Rng;

use super::loss::{error_indicator, evaluate, Evaluated, LossReport, LossSpec, Stage};
use crate::error::{Error, Result};
use crate::geometry::{adaptive_resample, CollocationSet, Domain};
use crate::network::NetworkParams;
use crate::optim::{AdamConfig, AdamState, LbfgsConfig, LbfgsState};
use crate::tensor_ad::{SymMat2, Vec2};

/// Projected matrices at arbitrary points, computed from the frozen previous iterate.
pub type TargetFn<'a> = dyn Fn(&[Vec2]) -> Result<Vec<SymMat2>> + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSchedule {
    pub adam_epochs: usize,
    pub lbfgs_epochs: usize,
    /// L-BFGS iterations per epoch.
    pub lbfgs_iters_per_epoch: usize,
    pub resample_every: usize,
    /// Seeds per collocation point.
    pub seed_fraction: f64,
    pub adaptive: bool,
    /// Pool size as a multiple of the number of collocation points.
    pub pool_factor: usize,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            adam_epochs: 200,
            lbfgs_epochs: 70,
            lbfgs_iters_per_epoch: 1,
            resample_every: 10,
            seed_fraction: 0.01,
            adaptive: false,
            pool_factor: 10,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.adam_epochs + self.lbfgs_epochs == 0 {
            return Err(Error::Config("schedule has no epochs".into()));
        }
        if self.lbfgs_epochs > 0 && self.lbfgs_iters_per_epoch == 0 {
            return Err(Error::Config(
                "lbfgs_iters_per_epoch must be positive".into(),
            ));
        }
        if self.adaptive {
            if self.resample_every == 0 || self.pool_factor == 0 {
                return Err(Error::Config(
                    "resample_every and pool_factor must be positive".into(),
                ));
            }
            if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
                return Err(Error::Config(format!(
                    "seed_fraction {} outside (0, 1]",
                    self.seed_fraction
                )));
            }
        }
        Ok(())
    }
}

pub struct TrainContext<'a> {
    pub loss: &'a LossSpec,
    pub lambda: f64,
    pub domain: &'a Domain,
    /// Required by the splitting losses.
    pub targets: Option<&'a TargetFn<'a>>,
}

impl TrainContext<'_> {
    fn targets_at(&self, points: &[Vec2]) -> Result<Option<Vec<SymMat2>>> {
        if !self.loss.needs_targets() {
            return Ok(None);
        }
        let f = self.targets.ok_or_else(|| {
            Error::InvalidInput(format!("{:?} loss needs a projection target", self.loss))
        })?;
        let p = f(points)?;
        if p.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} points",
                p.len(),
                points.len()
            )));
        }
        Ok(Some(p))
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub net: NetworkParams,
    pub reports: Vec<LossReport>,
    /// Collocation set in use when training stopped.
    pub collocation: CollocationSet,
    /// Set when a non-finite loss stopped training early.
    pub aborted: Option<String>,
}

struct Sampling {
    colloc: CollocationSet,
    p: Option<Vec<SymMat2>>,
}

impl Sampling {
    fn resample<R: Rng + ?Sized>(
        &mut self,
        ctx: &TrainContext<'_>,
        sched: &TrainSchedule,
        net: &NetworkParams,
        rng: &mut R,
    ) -> Result<()> {
        let n_c = self.colloc.points.len();
        let n_seeds = ((sched.seed_fraction * n_c as f64).round() as usize).max(1);
        let pool = ctx.domain.sample_interior(sched.pool_factor * n_c, rng);
        let indicator = |seeds: &[Vec2]| {
            let p = ctx.targets_at(seeds)?;
            error_indicator(ctx.loss, net, seeds, p.as_deref())
        };
        let r = adaptive_resample(ctx.domain, pool, indicator, n_seeds, n_c, rng)?;
        self.p = ctx.targets_at(&r.points)?;
        self.colloc.points = r.points;
        self.colloc.weights = r.weights;
        Ok(())
    }

    fn evaluate(
        &self,
        ctx: &TrainContext<'_>,
        net: &NetworkParams,
        want_grad: bool,
    ) -> Result<Evaluated> {
        evaluate(
            ctx.loss,
            ctx.lambda,
            net,
            &self.colloc,
            self.p.as_deref(),
            want_grad,
        )
    }
}

fn abort_reason(epoch: usize, e: &Error) -> String {
    format!("epoch {epoch}: {e}")
}

/// Adam pre-training followed by L-BFGS refinement, one report per epoch.
///
/// Each Adam epoch is one full-batch step and reports the loss before it;
/// each L-BFGS epoch runs `lbfgs_iters_per_epoch` iterations and reports the
/// loss at the end. With `adaptive`, the collocation points are redrawn every
/// `resample_every` epochs from the current error indicator. A numerical
/// failure stops training and returns the last finite iterate.
pub fn train<R: Rng + ?Sized>(
    net: NetworkParams,
    colloc: CollocationSet,
    ctx: &TrainContext<'_>,
    schedule: &TrainSchedule,
    rng: &mut R,
) -> Result<TrainOutput> {
    schedule.validate()?;
    colloc.validate()?;
    if !ctx.lambda.is_finite() || ctx.lambda < 0.0 {
        return Err(Error::Config(format!(
            "penalty {} must be finite and nonnegative",
            ctx.lambda
        )));
    }
    let start = Instant::now();
    let p = ctx.targets_at(&colloc.points)?;
    let mut sampling = Sampling { colloc, p };
    let mut net = net;
    let mut reports = Vec::with_capacity(schedule.adam_epochs + schedule.lbfgs_epochs);
    let total_epochs = schedule.adam_epochs + schedule.lbfgs_epochs;
    let constrained: Vec<bool> = (0..net.len()).map(|i| net.is_constrained(i)).collect();
    let mask = constrained
        .iter()
        .any(|&c| c)
        .then_some(constrained.as_slice());

    let mut adam = AdamState::new(net.len(), schedule.adam);
    let mut lbfgs = LbfgsState::new(schedule.lbfgs);

    // last parameters whose loss evaluated finite
    let mut last_good = net.clone();
    let finish = |net, reports, sampling: Sampling, aborted| TrainOutput {
        net,
        reports,
        collocation: sampling.colloc,
        aborted,
    };

    for epoch in 0..total_epochs {
        let stage = if epoch < schedule.adam_epochs {
            Stage::Adam
        } else {
            Stage::Lbfgs
        };
        let resampled = schedule.adaptive && epoch > 0 && epoch % schedule.resample_every == 0;
        if resampled {
            match sampling.resample(ctx, schedule, &net, rng) {
                Ok(()) => lbfgs.objective_changed(),
                Err(e) if e.is_numerical() => {
                    return Ok(finish(
                        last_good,
                        reports,
                        sampling,
                        Some(abort_reason(epoch, &e)),
                    ))
                }
                Err(e) => return Err(e),
            }
        }

        let step = match stage {
            Stage::Adam => {
                let before = net.clone();
                let r = adam_epoch(&mut net, &mut adam, &sampling, ctx);
                if r.is_ok() {
                    last_good = before;
                }
                r
            }
            Stage::Lbfgs => {
                let r = lbfgs_epoch(
                    &mut net,
                    &mut lbfgs,
                    &sampling,
                    ctx,
                    schedule.lbfgs_iters_per_epoch,
                    mask,
                );
                if r.is_ok() {
                    last_good = net.clone();
                }
                r
            }
        };
        let mut report = match step {
            Ok(r) => r,
            Err(e) if e.is_numerical() => {
                return Ok(finish(
                    last_good,
                    reports,
                    sampling,
                    Some(abort_reason(epoch, &e)),
                ))
            }
            Err(e) => return Err(e),
        };
        report.epoch = epoch;
        report.stage = stage;
        report.resampled = resampled;
        report.wall_time = start.elapsed().as_secs_f64();
        reports.push(report);
    }
    Ok(finish(net, reports, sampling, None))
}

/// Loss and gradient at the current parameters, then one Adam step and the
/// nonnegativity clamp. The report is the pre-step loss.
fn adam_epoch(
    net: &mut NetworkParams,
    adam: &mut AdamState,
    sampling: &Sampling,
    ctx: &TrainContext<'_>,
) -> Result<LossReport> {
    let e = sampling.evaluate(ctx, net, true)?;
    adam.step(net.theta_mut(), &e.grad.expect("gradient requested"))?;
    net.enforce_nonneg();
    Ok(e.report)
}

fn lbfgs_epoch(
    net: &mut NetworkParams,
    lbfgs: &mut LbfgsState,
    sampling: &Sampling,
    ctx: &TrainContext<'_>,
    iters: usize,
    mask: Option<&[bool]>,
) -> Result<LossReport> {
    // remember the split of the most recent evaluations so the final
    // iterate usually needs no extra pass
    let seen: RefCell<Vec<(Vec<f64>, LossReport)>> = RefCell::new(Vec::new());
    let mut theta = net.theta().to_vec();
    let mut probe = net.clone();
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        probe.set_theta(x)?;
        let e = sampling.evaluate(ctx, &probe, true)?;
        let mut s = seen.borrow_mut();
        if s.len() >= 8 {
            s.remove(0);
        }
        s.push((x.to_vec(), e.report));
        Ok((e.report.total, e.grad.expect("gradient requested")))
    };
    let outcome = lbfgs.minimize(&mut theta, objective, iters, mask)?;
    if !outcome.loss.is_finite() {
        return Err(Error::TrainingAborted {
            epoch: 0,
            reason: "non-finite loss in L-BFGS".into(),
        });
    }
    net.set_theta(&theta)?;
    let cached = seen
        .borrow()
        .iter()
        .rev()
        .find(|(x, _)| *x == theta)
        .map(|(_, r)| *r);
    match cached {
        Some(r) => Ok(r),
        None => Ok(sampling.evaluate(ctx, net, false)?.report),
    }
}

/// Loss history as CSV: `outer,epoch,total,pde_term,bc_term,stage,resample_flag`.
pub fn write_history_csv<W: Write>(out: W, rows: &[(usize, LossReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "outer",
        "epoch",
        "total",
        "pde_term",
        "bc_term",
        "stage",
        "resample_flag",
    ])?;
    for (outer, r) in rows {
        w.write_record([
            outer.to_string(),
            r.epoch.to_string(),
            format!("{:e}", r.total),
            format!("{:e}", r.pde_term),
            format!("{:e}", r.bc_term),
            r.stage.to_string(),
            u8::from(r.resampled).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
