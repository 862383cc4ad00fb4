use std::collections::VecDeque;

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub history: usize,
    /// Iteration cap of a single [`LbfgsState::minimize`] call.
    pub max_iter: usize,
    pub tolerance_grad: f64,
    pub tolerance_change: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_ls: usize,
    /// Pairs with `sᵀy` at or below this are discarded.
    pub curvature_eps: f64,
    /// Forget the curvature memory whenever the nonnegativity clamp moves an entry.
    pub clear_on_clamp: bool,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 25,
            max_iter: 20,
            tolerance_grad: 1e-7,
            tolerance_change: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_ls: 25,
            curvature_eps: 1e-12,
            clear_on_clamp: false,
        }
    }
}

/// A step accepted by the line search with both Wolfe conditions satisfied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WolfeStep {
    pub t: f64,
    pub f0: f64,
    pub gtd0: f64,
    pub f: f64,
    pub gtd: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LbfgsOutcome {
    /// Objective at the returned iterate (the best seen).
    pub loss: f64,
    pub iterations: usize,
    /// Objective evaluations made by this call.
    pub evaluations: usize,
    /// Projected gradient below tolerance.
    pub converged: bool,
    /// Some line search ended without a strong Wolfe point.
    pub degraded: bool,
    /// Entries moved by the nonnegativity clamp.
    pub clamped: usize,
}

type Eval = (f64, Vec<f64>);

/// L-BFGS memory and the last evaluated point, carried across calls so that
/// successive calls continue one run.
#[derive(Clone, Debug)]
pub struct LbfgsState {
    pub config: LbfgsConfig,
    s_hist: VecDeque<Vec<f64>>,
    y_hist: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    h_diag: f64,
    d: Vec<f64>,
    t: f64,
    prev_grad: Option<Vec<f64>>,
    prev_x: Vec<f64>,
    n_iter: usize,
    current: Option<(Vec<f64>, f64, Vec<f64>)>,
    record_trace: bool,
    trace: Vec<WolfeStep>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn cubic_interpolate(
    x1: f64,
    f1: f64,
    g1: f64,
    x2: f64,
    f2: f64,
    g2: f64,
    bounds: Option<(f64, f64)>,
) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_finite() {
            return min_pos.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

struct LineSearch {
    f: f64,
    g: Vec<f64>,
    t: f64,
    evals: usize,
    wolfe: bool,
    gtd: f64,
}

impl LbfgsState {
    pub fn new(config: LbfgsConfig) -> Self {
        Self {
            config,
            s_hist: VecDeque::new(),
            y_hist: VecDeque::new(),
            rho: VecDeque::new(),
            h_diag: 1.0,
            d: Vec::new(),
            t: 0.0,
            prev_grad: None,
            prev_x: Vec::new(),
            n_iter: 0,
            current: None,
            record_trace: false,
            trace: Vec::new(),
        }
    }

    /// Keep every Wolfe-accepted step for inspection.
    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn trace(&self) -> &[WolfeStep] {
        &self.trace
    }

    pub fn history_len(&self) -> usize {
        self.s_hist.len()
    }

    /// Stored `sᵀy` values.
    pub fn curvatures(&self) -> Vec<f64> {
        self.rho.iter().map(|r| 1.0 / r).collect()
    }

    /// Forget curvature pairs and restart from steepest descent.
    pub fn clear_history(&mut self) {
        self.s_hist.clear();
        self.y_hist.clear();
        self.rho.clear();
        self.h_diag = 1.0;
        self.prev_grad = None;
        self.n_iter = 0;
    }

    /// The objective changed (new collocation points): the cached evaluation is
    /// stale and the next curvature pair would straddle two objectives.
    pub fn objective_changed(&mut self) {
        self.current = None;
        self.prev_grad = None;
    }

    fn evaluate<F>(objective: &mut F, x: &[f64]) -> Result<Eval>
    where
        F: FnMut(&[f64]) -> Result<Eval>,
    {
        match objective(x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Ok((f, g)),
            Ok((_, g)) => Ok((f64::INFINITY, vec![0.0; g.len()])),
            Err(e) if e.is_numerical() => Ok((f64::INFINITY, vec![0.0; x.len()])),
            Err(e) => Err(e),
        }
    }

    /// Run up to `max_iters` iterations (capped by the configured per-call
    /// maximum) from `x`, leaving the best iterate seen in `x`.
    ///
    /// When `constrained` is given, flagged entries are kept nonnegative: the
    /// search direction is frozen on entries held at zero and the line search
    /// follows the projected path. The curvature pair of a clamped step uses
    /// the actual displacement; `clear_on_clamp` drops the memory instead.
    pub fn minimize<F>(
        &mut self,
        x: &mut [f64],
        mut objective: F,
        max_iters: usize,
        constrained: Option<&[bool]>,
    ) -> Result<LbfgsOutcome>
    where
        F: FnMut(&[f64]) -> Result<Eval>,
    {
        let cfg = self.config;
        let mut out = LbfgsOutcome::default();
        let (mut loss, mut grad) = match self.current.take() {
            Some((cx, f, g)) if cx.as_slice() == &*x => (f, g),
            _ => {
                self.prev_grad = None;
                let (f, g) = objective(x)?;
                out.evaluations += 1;
                (f, g)
            }
        };
        if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite {
                index: 0,
                what: "objective at the starting point".into(),
            });
        }
        let mut best = (loss, x.to_vec(), grad.clone());

        let at_bound = |x: &[f64], i: usize| constrained.is_some_and(|c| c[i] && x[i] <= 0.0);
        let projected_grad_norm = |x: &[f64], g: &[f64]| {
            (0..g.len())
                .map(|i| {
                    if at_bound(x, i) && g[i] > 0.0 {
                        0.0
                    } else {
                        g[i].abs()
                    }
                })
                .fold(0.0, f64::max)
        };

        out.converged = projected_grad_norm(x, &grad) <= cfg.tolerance_grad;
        let iters = max_iters.min(cfg.max_iter);
        while !out.converged && out.iterations < iters {
            out.iterations += 1;
            self.n_iter += 1;

            if self.n_iter == 1 {
                self.d = grad.iter().map(|g| -g).collect();
                self.s_hist.clear();
                self.y_hist.clear();
                self.rho.clear();
                self.h_diag = 1.0;
            } else {
                if let Some(prev) = &self.prev_grad {
                    let y: Vec<f64> = grad.iter().zip(prev).map(|(a, b)| a - b).collect();
                    let s: Vec<f64> = x.iter().zip(&self.prev_x).map(|(a, b)| a - b).collect();
                    let ys = dot(&y, &s);
                    if ys > cfg.curvature_eps {
                        if self.s_hist.len() == cfg.history {
                            self.s_hist.pop_front();
                            self.y_hist.pop_front();
                            self.rho.pop_front();
                        }
                        self.h_diag = ys / dot(&y, &y);
                        self.s_hist.push_back(s);
                        self.y_hist.push_back(y);
                        self.rho.push_back(1.0 / ys);
                    }
                }
                self.d = match constrained {
                    Some(_) => {
                        // curvature model restricted to the free entries
                        let free_grad: Vec<f64> = (0..x.len())
                            .map(|i| {
                                if at_bound(x, i) && grad[i] > 0.0 {
                                    0.0
                                } else {
                                    grad[i]
                                }
                            })
                            .collect();
                        let mut d = self.two_loop(&free_grad);
                        for i in 0..x.len() {
                            if at_bound(x, i) && grad[i] > 0.0 {
                                d[i] = 0.0;
                            }
                        }
                        d
                    }
                    None => self.two_loop(&grad),
                };
            }

            if constrained.is_some() {
                for i in 0..x.len() {
                    if at_bound(x, i) && self.d[i] < 0.0 {
                        self.d[i] = 0.0;
                    }
                }
                if dot(&grad, &self.d) > -cfg.tolerance_change {
                    // quasi-Newton direction lost descent after masking
                    self.d = (0..x.len())
                        .map(|i| {
                            if at_bound(x, i) && grad[i] > 0.0 {
                                0.0
                            } else {
                                -grad[i]
                            }
                        })
                        .collect();
                }
            }
            self.prev_grad = Some(grad.clone());
            self.prev_x.clear();
            self.prev_x.extend_from_slice(x);
            let prev_loss = loss;

            self.t = if self.n_iter == 1 {
                (1.0 / grad.iter().map(|g| g.abs()).sum::<f64>()).min(1.0)
            } else {
                1.0
            };
            let gtd = dot(&grad, &self.d);
            if gtd > -cfg.tolerance_change {
                break;
            }

            let ls = self.strong_wolfe(&mut objective, x, loss, &grad, gtd, constrained)?;
            out.evaluations += ls.evals;
            out.degraded |= !ls.wolfe;
            if !ls.wolfe && ls.f >= loss {
                // the model is not helping; restart from steepest descent
                self.clear_history();
            }
            if ls.wolfe && self.record_trace {
                self.trace.push(WolfeStep {
                    t: ls.t,
                    f0: loss,
                    gtd0: gtd,
                    f: ls.f,
                    gtd: ls.gtd,
                });
            }
            self.t = ls.t;
            for (xi, di) in x.iter_mut().zip(&self.d) {
                *xi += ls.t * di;
            }
            loss = ls.f;
            grad = ls.g;

            if let Some(mask) = constrained {
                // land on the projected point the line search evaluated
                let mut changed = 0;
                for (xi, &c) in x.iter_mut().zip(mask) {
                    if c && *xi < 0.0 {
                        *xi = 0.0;
                        changed += 1;
                    }
                }
                if changed > 0 {
                    out.clamped += changed;
                    if cfg.clear_on_clamp {
                        self.clear_history();
                    }
                }
            }

            if loss < best.0 {
                best = (loss, x.to_vec(), grad.clone());
            }
            out.converged = projected_grad_norm(x, &grad) <= cfg.tolerance_grad;
            if out.converged
                || inf_norm(&self.d) * self.t.abs() <= cfg.tolerance_change
                || (loss - prev_loss).abs() < cfg.tolerance_change
                || !loss.is_finite()
            {
                break;
            }
        }

        if best.0 < loss || !loss.is_finite() {
            x.copy_from_slice(&best.1);
            loss = best.0;
            grad = best.2;
            self.prev_grad = None;
        }
        out.loss = loss;
        self.current = Some((x.to_vec(), loss, grad));
        Ok(out)
    }

    #[allow(clippy::needless_range_loop)]
    fn two_loop(&self, grad: &[f64]) -> Vec<f64> {
        let k = self.s_hist.len();
        let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = dot(&self.s_hist[i], &q) * self.rho[i];
            for (qj, yj) in q.iter_mut().zip(&self.y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        for v in q.iter_mut() {
            *v *= self.h_diag;
        }
        for i in 0..k {
            let beta = dot(&self.y_hist[i], &q) * self.rho[i];
            for (qj, sj) in q.iter_mut().zip(&self.s_hist[i]) {
                *qj += sj * (alpha[i] - beta);
            }
        }
        q
    }

    /// Strong Wolfe line search along `self.d` starting from step `self.t`,
    /// with bracketing by cubic interpolation followed by zoom.
    ///
    /// With `constrained`, the search runs along the projected path
    /// `max(x + t d, 0)` on flagged entries, and the slope is taken over the
    /// entries still free at `t`.
    fn strong_wolfe<F>(
        &self,
        objective: &mut F,
        x: &[f64],
        f: f64,
        g: &[f64],
        gtd: f64,
        constrained: Option<&[bool]>,
    ) -> Result<LineSearch>
    where
        F: FnMut(&[f64]) -> Result<Eval>,
    {
        let cfg = self.config;
        let d = &self.d;
        let d_norm = inf_norm(d);
        let mut trial = vec![0.0; x.len()];
        let mut free = vec![true; x.len()];
        let mut eval_at = |t: f64, objective: &mut F| -> Result<(f64, Vec<f64>, f64)> {
            for (i, ((p, xi), di)) in trial.iter_mut().zip(x).zip(d).enumerate() {
                *p = xi + t * di;
                free[i] = !(constrained.is_some_and(|c| c[i]) && *p < 0.0);
                if !free[i] {
                    *p = 0.0;
                }
            }
            let (fv, gv) = Self::evaluate(objective, &trial)?;
            let gtd = gv
                .iter()
                .zip(d)
                .zip(&free)
                .filter(|(_, &fr)| fr)
                .map(|((a, b), _)| a * b)
                .sum();
            Ok((fv, gv, gtd))
        };

        let mut t = self.t;
        let (mut f_new, mut g_new, mut gtd_new) = eval_at(t, objective)?;
        let mut evals = 1;
        let (mut t_prev, mut f_prev, mut g_prev, mut gtd_prev) = (0.0, f, g.to_vec(), gtd);
        let mut done = false;
        let mut ls_iter = 0;

        let mut bracket: Vec<f64> = Vec::new();
        let mut bracket_f: Vec<f64> = Vec::new();
        let mut bracket_g: Vec<Vec<f64>> = Vec::new();
        let mut bracket_gtd: Vec<f64> = Vec::new();

        while ls_iter < cfg.max_ls {
            let armijo_fails = f_new > f + cfg.c1 * t * gtd || (ls_iter > 1 && f_new >= f_prev);
            if !armijo_fails && gtd_new.abs() <= -cfg.c2 * gtd {
                bracket = vec![t];
                bracket_f = vec![f_new];
                bracket_g = vec![g_new.clone()];
                bracket_gtd = vec![gtd_new];
                done = true;
                break;
            }
            if armijo_fails || gtd_new >= 0.0 {
                bracket = vec![t_prev, t];
                bracket_f = vec![f_prev, f_new];
                bracket_g = vec![g_prev.clone(), g_new.clone()];
                bracket_gtd = vec![gtd_prev, gtd_new];
                break;
            }
            let min_step = t + 0.01 * (t - t_prev);
            let max_step = t * 10.0;
            let tmp = t;
            t = cubic_interpolate(
                t_prev,
                f_prev,
                gtd_prev,
                t,
                f_new,
                gtd_new,
                Some((min_step, max_step)),
            );
            t_prev = tmp;
            f_prev = f_new;
            g_prev = g_new.clone();
            gtd_prev = gtd_new;
            (f_new, g_new, gtd_new) = eval_at(t, objective)?;
            evals += 1;
            ls_iter += 1;
        }
        if ls_iter == cfg.max_ls {
            bracket = vec![0.0, t];
            bracket_f = vec![f, f_new];
            bracket_g = vec![g.to_vec(), g_new.clone()];
            bracket_gtd = vec![gtd, gtd_new];
        }

        let mut insuf_progress = false;
        let (mut low, mut high) = if bracket_f[0] <= *bracket_f.last().unwrap() {
            (0, 1)
        } else {
            (1, 0)
        };
        while !done && ls_iter < cfg.max_ls {
            if (bracket[1] - bracket[0]).abs() * d_norm < cfg.tolerance_change {
                break;
            }
            t = cubic_interpolate(
                bracket[0],
                bracket_f[0],
                bracket_gtd[0],
                bracket[1],
                bracket_f[1],
                bracket_gtd[1],
                None,
            );
            let (bmin, bmax) = (bracket[0].min(bracket[1]), bracket[0].max(bracket[1]));
            let eps = 0.1 * (bmax - bmin);
            if (bmax - t).min(t - bmin) < eps {
                if insuf_progress || t >= bmax || t <= bmin {
                    t = if (t - bmax).abs() < (t - bmin).abs() {
                        bmax - eps
                    } else {
                        bmin + eps
                    };
                    insuf_progress = false;
                } else {
                    insuf_progress = true;
                }
            } else {
                insuf_progress = false;
            }
            (f_new, g_new, gtd_new) = eval_at(t, objective)?;
            evals += 1;
            ls_iter += 1;

            if f_new > f + cfg.c1 * t * gtd || f_new >= bracket_f[low] {
                bracket[high] = t;
                bracket_f[high] = f_new;
                bracket_g[high] = g_new.clone();
                bracket_gtd[high] = gtd_new;
                (low, high) = if bracket_f[0] <= bracket_f[1] {
                    (0, 1)
                } else {
                    (1, 0)
                };
            } else {
                if gtd_new.abs() <= -cfg.c2 * gtd {
                    done = true;
                } else if gtd_new * (bracket[high] - bracket[low]) >= 0.0 {
                    bracket[high] = bracket[low];
                    bracket_f[high] = bracket_f[low];
                    bracket_g[high] = bracket_g[low].clone();
                    bracket_gtd[high] = bracket_gtd[low];
                }
                bracket[low] = t;
                bracket_f[low] = f_new;
                bracket_g[low] = g_new.clone();
                bracket_gtd[low] = gtd_new;
            }
        }
        if bracket.len() == 1 {
            low = 0;
        }
        Ok(LineSearch {
            f: bracket_f[low],
            g: bracket_g[low].clone(),
            t: bracket[low],
            evals,
            wolfe: done,
            gtd: bracket_gtd[low],
        })
    }
}
