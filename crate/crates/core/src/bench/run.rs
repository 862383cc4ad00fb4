use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::catalog::{case, BenchmarkCase};
use super::heatmap::write_heatmap;
use super::histogram::{pushforward_histogram, sample_source, write_histogram_csv, HIST_BINS};
use crate::error::{Error, Result};
use crate::ritz::{write_history_csv, LossReport};
use crate::splitting::{
    outer_solve, write_pointwise_csv, ErrorReport, Mode, Operator, SolveConfig,
};

/// One benchmark invocation. `None` fields fall back to the case defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: String,
    pub points: Option<usize>,
    pub boundary_points: Option<usize>,
    pub seeds: Option<f64>,
    pub adaptive: Option<bool>,
    pub iters: Option<usize>,
    pub repeats: Option<usize>,
    pub seed: u64,
    pub mode: Mode,
    pub lambda: Option<f64>,
    pub lbfgs_iters: Option<usize>,
    pub out: PathBuf,
    /// Repeats solved concurrently; 1 runs them in sequence.
    pub parallel_repeats: usize,
    /// Source samples pushed forward per histogram (transport cases).
    pub hist_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: String::new(),
            points: None,
            boundary_points: None,
            seeds: None,
            adaptive: None,
            iters: None,
            repeats: None,
            seed: 0,
            mode: Mode::DeepRitz,
            lambda: None,
            lbfgs_iters: None,
            out: PathBuf::from("runs"),
            parallel_repeats: 1,
            hist_samples: 1_000_000,
        }
    }
}

/// Final state of one repeat.
#[derive(Clone, Debug, PartialEq)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub errors: Vec<(usize, ErrorReport)>,
    /// `(outer iteration, fraction of pushed samples inside the target)`.
    pub inside: Vec<(usize, f64)>,
    pub aborted: Option<String>,
}

impl RepeatSummary {
    pub fn final_error(&self) -> Option<&ErrorReport> {
        self.errors.last().map(|(_, e)| e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub case: String,
    pub dir: PathBuf,
    pub repeats: Vec<RepeatSummary>,
}

impl RunSummary {
    pub fn aborted(&self) -> bool {
        self.repeats.iter().any(|r| r.aborted.is_some())
    }

    /// Median over repeats of the final relative `L²` error.
    pub fn median_final_l2(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .repeats
            .iter()
            .filter_map(|r| r.final_error().map(|e| e.rel_l2))
            .collect();
        (!v.is_empty()).then(|| quantile(&v, 0.5))
    }
}

/// Sample quantile with linear interpolation between order statistics.
/// NaN for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    match v.get(i + 1) {
        Some(&next) if frac > 0.0 => v[i] + frac * (next - v[i]),
        _ => v[i],
    }
}

struct Resolved {
    case: BenchmarkCase,
    solve: SolveConfig,
    repeats: usize,
}

fn resolve(config: &RunConfig) -> Result<Resolved> {
    let mut case = case(&config.case)?;
    let d = case.defaults;
    let positive = |name: &str, v: Option<usize>| match v {
        Some(0) => Err(Error::Config(format!("{name} must be positive"))),
        _ => Ok(()),
    };
    positive("points", config.points)?;
    positive("boundary-points", config.boundary_points)?;
    positive("iters", config.iters)?;
    positive("repeats", config.repeats)?;
    positive("lbfgs-iters", config.lbfgs_iters)?;
    positive("parallel-repeats", Some(config.parallel_repeats))?;
    if let Some(s) = config.seeds {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::Config(format!(
                "seed fraction must lie in (0, 1], got {s}"
            )));
        }
    }
    if let Some(l) = config.lambda {
        case.spec.lambda = l;
    }
    case.spec.validate()?;
    if config.mode == Mode::PinnBaseline
        && !matches!(case.spec.operator, Operator::MongeAmpere { .. })
    {
        return Err(Error::Config(format!(
            "{} is not a Monge-Ampère case; the collocation baseline does not apply",
            case.name
        )));
    }
    if case.spec.target_domain().is_some() && config.hist_samples == 0 {
        return Err(Error::Config(
            "transport cases need at least one histogram sample".into(),
        ));
    }
    let defaults = SolveConfig::default();
    let solve = SolveConfig {
        n_c: config.points.unwrap_or(d.n_c),
        n_b: config.boundary_points.unwrap_or(d.n_b),
        n_iters: config.iters.unwrap_or(d.n_iters),
        mode: config.mode,
        adaptive: config.adaptive.unwrap_or(d.adaptive),
        seed_fraction: config.seeds.unwrap_or(defaults.seed_fraction),
        lbfgs_iters_per_epoch: config.lbfgs_iters.unwrap_or(defaults.lbfgs_iters_per_epoch),
        ..defaults
    };
    solve.validate()?;
    Ok(Resolved {
        repeats: config.repeats.unwrap_or(d.n_repeats),
        case,
        solve,
    })
}

fn write_errors_csv(
    path: &Path,
    errors: &[(usize, ErrorReport)],
    inside: &[(usize, f64)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "outer",
        "rel_l2",
        "rel_h2",
        "grad_mae",
        "shift",
        "inside_fraction",
    ])?;
    let outers: std::collections::BTreeSet<usize> = errors
        .iter()
        .map(|e| e.0)
        .chain(inside.iter().map(|i| i.0))
        .collect();
    for k in outers {
        let e = errors.iter().find(|e| e.0 == k).map(|e| &e.1);
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        w.write_record([
            k.to_string(),
            fmt(e.map(|e| e.rel_l2)),
            fmt(e.map(|e| e.rel_h2)),
            fmt(e.map(|e| e.grad_mae)),
            fmt(e.map(|e| e.shift)),
            fmt(inside.iter().find(|i| i.0 == k).map(|i| i.1)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn pointwise_grid(report: &ErrorReport) -> Vec<Vec<f64>> {
    let n = report.grid_n;
    let mut grid = vec![vec![f64::NAN; n]; n];
    for (g, e) in &report.pointwise {
        grid[g.row][g.col] = *e;
    }
    grid
}

fn run_repeat(
    res: &Resolved,
    config: &RunConfig,
    repeat: usize,
    dir: &Path,
) -> Result<(RepeatSummary, Vec<(usize, LossReport)>)> {
    fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(repeat as u64));
    let spec = &res.case.spec;
    let samples = match &spec.operator {
        Operator::Transport { mu0, .. } => sample_source(
            &spec.domain,
            mu0,
            res.case.source_bound,
            config.hist_samples,
            &mut rng,
        )?,
        _ => Vec::new(),
    };
    let mut inside = Vec::new();
    let mut observer = |rec: &crate::splitting::IterationRecord<'_>| -> Result<()> {
        let k = rec.outer;
        if let Some(e) = rec.errors {
            write_pointwise_csv(&dir.join(format!("pointwise_iter{k}.csv")), e)?;
            write_heatmap(
                &dir.join(format!("pointwise_iter{k}.pgm")),
                &pointwise_grid(e),
            )?;
        }
        if let Some(target) = spec.target_domain() {
            let h = pushforward_histogram(rec.net, &samples, target, HIST_BINS)?;
            write_histogram_csv(&dir.join(format!("hist_iter{k}.csv")), &h)?;
            inside.push((k, h.inside_fraction()));
        }
        rec.net.save_checkpoint(
            &dir.join(format!("checkpoint_iter{k}.json")),
            &dir.join(format!("checkpoint_iter{k}.bin")),
        )
    };
    let out = outer_solve(
        spec,
        spec.default_architecture(),
        &res.solve,
        &mut rng,
        &mut observer,
    )?;
    write_history_csv(
        BufWriter::new(fs::File::create(dir.join("history.csv"))?),
        &out.history,
    )?;
    write_errors_csv(&dir.join("errors.csv"), &out.errors, &inside)?;
    let summary = RepeatSummary {
        repeat,
        initial_loss: out.history.first().map_or(f64::NAN, |h| h.1.total),
        final_loss: out.history.last().map_or(f64::NAN, |h| h.1.total),
        errors: out.errors,
        inside,
        aborted: out.aborted,
    };
    Ok((summary, out.history))
}

fn write_quantiles(
    path: &Path,
    histories: &[Vec<(usize, LossReport)>],
    repeats: &[RepeatSummary],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["metric", "outer", "epoch", "count", "q05", "q50", "q95"])?;
    let mut row = |metric: &str, outer: usize, epoch: String, v: &[f64]| -> Result<()> {
        let q = |p| format!("{:e}", quantile(v, p));
        w.write_record([
            metric.to_string(),
            outer.to_string(),
            epoch,
            v.len().to_string(),
            q(0.05),
            q(0.5),
            q(0.95),
        ])?;
        Ok(())
    };
    let longest = histories.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..longest {
        let vals: Vec<f64> = histories
            .iter()
            .filter_map(|h| h.get(i))
            .map(|h| h.1.total)
            .collect();
        let (outer, rep) = histories.iter().find_map(|h| h.get(i)).expect("row exists");
        row("loss", *outer, rep.epoch.to_string(), &vals)?;
    }
    let outers: std::collections::BTreeSet<usize> = repeats
        .iter()
        .flat_map(|r| r.errors.iter().map(|e| e.0))
        .collect();
    type Getter = fn(&ErrorReport) -> f64;
    let metrics: [(&str, Getter); 3] = [
        ("rel_l2", |e| e.rel_l2),
        ("rel_h2", |e| e.rel_h2),
        ("grad_mae", |e| e.grad_mae),
    ];
    for (name, get) in metrics {
        for &k in &outers {
            let vals: Vec<f64> = repeats
                .iter()
                .filter_map(|r| r.errors.iter().find(|e| e.0 == k).map(|e| get(&e.1)))
                .collect();
            row(name, k, String::new(), &vals)?;
        }
    }
    let outers: std::collections::BTreeSet<usize> = repeats
        .iter()
        .flat_map(|r| r.inside.iter().map(|e| e.0))
        .collect();
    for k in outers {
        let vals: Vec<f64> = repeats
            .iter()
            .filter_map(|r| r.inside.iter().find(|e| e.0 == k).map(|e| e.1))
            .collect();
        row("inside_fraction", k, String::new(), &vals)?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, repeats: &[RepeatSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "repeat",
        "initial_loss",
        "final_loss",
        "rel_l2",
        "rel_h2",
        "grad_mae",
        "inside_fraction",
        "aborted",
    ])?;
    for r in repeats {
        let e = r.final_error();
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        w.write_record([
            r.repeat.to_string(),
            format!("{:e}", r.initial_loss),
            format!("{:e}", r.final_loss),
            fmt(e.map(|e| e.rel_l2)),
            fmt(e.map(|e| e.rel_h2)),
            fmt(e.map(|e| e.grad_mae)),
            fmt(r.inside.last().map(|i| i.1)),
            r.aborted.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run every repeat of a benchmark and write the artifacts under
/// `out/<case>/`: one `repeat_<k>/` directory per repeat plus the
/// aggregate `quantiles.csv`, `summary.csv` and the resolved `config.json`.
///
/// Numerical failure in a repeat is recorded in the summary, not returned
/// as an error; the repeat's artifacts up to that point are kept.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let res = resolve(config)?;
    let dir = config.out.join(res.case.name);
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&(config, &res.solve))?,
    )?;

    let one = |k: usize| run_repeat(&res, config, k, &dir.join(format!("repeat_{k}")));
    let results: Vec<Result<_>> = if config.parallel_repeats > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallel_repeats)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..res.repeats).into_par_iter().map(one).collect())
    } else {
        (0..res.repeats).map(one).collect()
    };
    let (repeats, histories): (Vec<_>, Vec<_>) = results
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    write_quantiles(&dir.join("quantiles.csv"), &histories, &repeats)?;
    write_summary(&dir.join("summary.csv"), &repeats)?;
    Ok(RunSummary {
        case: res.case.name.to_string(),
        dir,
        repeats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_hand_values() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        // position 0.05·4 = 0.2 between 1 and 2
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-15);
        assert!(quantile(&[], 0.5).is_nan());
        assert_eq!(quantile(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        let base = RunConfig {
            case: "exp_alpha1".into(),
            ..RunConfig::default()
        };
        let bad = [
            RunConfig {
                case: "nope".into(),
                ..base.clone()
            },
            RunConfig {
                points: Some(0),
                ..base.clone()
            },
            RunConfig {
                seeds: Some(1.5),
                ..base.clone()
            },
            RunConfig {
                lambda: Some(-1.0),
                ..base.clone()
            },
            RunConfig {
                case: "pucci_alpha2".into(),
                mode: Mode::PinnBaseline,
                ..base.clone()
            },
        ];
        for c in bad {
            assert!(matches!(resolve(&c), Err(Error::Config(_))), "{c:?}");
        }
        let r = resolve(&base).unwrap();
        assert_eq!(
            (r.solve.n_c, r.solve.n_b, r.solve.n_iters, r.repeats),
            (3000, 300, 10, 5)
        );
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let ok: RunConfig =
            serde_json::from_str(r#"{"case":"minkowski","iters":3,"mode":"pinn_baseline"}"#)
                .unwrap();
        assert_eq!(ok.iters, Some(3));
        assert_eq!(ok.mode, Mode::PinnBaseline);
        assert!(serde_json::from_str::<RunConfig>(r#"{"case":"minkowski","itres":3}"#).is_err());
    }

    #[test]
    fn tiny_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            case: "exp_alpha1".into(),
            points: Some(60),
            boundary_points: Some(20),
            iters: Some(1),
            repeats: Some(2),
            out: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        let mut res = resolve(&config).unwrap();
        res.solve.init_adam_epochs = 2;
        res.solve.init_lbfgs_epochs = 1;
        res.solve.first_adam_epochs = 2;
        res.solve.lbfgs_table = Some(vec![1]);
        let (summary, history) = run_repeat(&res, &config, 0, &dir.path().join("r")).unwrap();
        assert_eq!(summary.errors.len(), 2);
        assert_eq!(history.len(), 3 + 3);
        for f in [
            "history.csv",
            "errors.csv",
            "pointwise_iter1.csv",
            "pointwise_iter1.pgm",
            "checkpoint_iter1.json",
        ] {
            assert!(dir.path().join("r").join(f).exists(), "{f}");
        }
        write_quantiles(
            &dir.path().join("q.csv"),
            &[history.clone(), history],
            &[summary.clone(), summary],
        )
        .unwrap();
        let q = fs::read_to_string(dir.path().join("q.csv")).unwrap();
        assert!(q.starts_with("metric,outer,epoch,count,q05,q50,q95\nloss,0,0,2,"));
    }
}
