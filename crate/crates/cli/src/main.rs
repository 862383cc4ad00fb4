use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nonlinear_ritz::bench::{self, RunConfig};
use nonlinear_ritz::error::Error;
use nonlinear_ritz::splitting::Mode;

#[derive(Parser)]
#[command(
    name = "nritz",
    version,
    about = "Splitting solver benchmarks for fully nonlinear elliptic PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark case and write its artifacts.
    Run(RunArgs),
    /// List the benchmark cases and their defaults.
    List,
    /// Render a long-format CSV grid (row,col,...,value) as a PGM heatmap.
    Heatmap {
        csv: PathBuf,
        #[arg(long, default_value = "abs_error")]
        column: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Case name; may instead come from --config.
    #[arg(long)]
    case: Option<String>,
    /// JSON file with the same keys as the flags (underscored); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    boundary_points: Option<usize>,
    /// Fraction of collocation points used as sampling seeds.
    #[arg(long)]
    seeds: Option<f64>,
    /// Enable adaptive sampling.
    #[arg(long, conflicts_with = "uniform")]
    adaptive: bool,
    /// Disable adaptive sampling.
    #[arg(long)]
    uniform: bool,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// deep_ritz or pinn_baseline.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Iterations per L-BFGS epoch.
    #[arg(long)]
    lbfgs_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel_repeats: Option<usize>,
    /// Source samples per pushforward histogram.
    #[arg(long)]
    hist_samples: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.case {
            c.case = v;
        }
        if c.case.is_empty() {
            return Err(Error::Config(
                "no case given (use --case or a config file)".into(),
            ));
        }
        c.points = self.points.or(c.points);
        c.boundary_points = self.boundary_points.or(c.boundary_points);
        c.seeds = self.seeds.or(c.seeds);
        if self.adaptive {
            c.adaptive = Some(true);
        }
        if self.uniform {
            c.adaptive = Some(false);
        }
        c.iters = self.iters.or(c.iters);
        c.repeats = self.repeats.or(c.repeats);
        c.lambda = self.lambda.or(c.lambda);
        c.lbfgs_iters = self.lbfgs_iters.or(c.lbfgs_iters);
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.out {
            c.out = v;
        }
        if let Some(v) = self.parallel_repeats {
            c.parallel_repeats = v;
        }
        if let Some(v) = self.hist_samples {
            c.hist_samples = v;
        }
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Unsupported(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let config = args.into_config()?;
    let summary = bench::run(&config)?;
    for r in &summary.repeats {
        let mut line = format!(
            "repeat {}: loss {:.3e} -> {:.3e}",
            r.repeat, r.initial_loss, r.final_loss
        );
        if let Some(e) = r.final_error() {
            line += &format!(
                ", rel L2 {:.3e}, rel H2 {:.3e}, grad MAE {:.3e}",
                e.rel_l2, e.rel_h2, e.grad_mae
            );
        }
        if let Some((_, f)) = r.inside.last() {
            line += &format!(", inside target {:.2}%", 100.0 * f);
        }
        if let Some(reason) = &r.aborted {
            line += &format!(" [aborted: {reason}]");
        }
        println!("{line}");
    }
    if let Some(m) = summary.median_final_l2() {
        println!("median final rel L2: {m:.3e}");
    }
    println!("artifacts in {}", summary.dir.display());
    Ok(if summary.aborted() {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::List => {
            for c in bench::catalog() {
                let d = c.defaults;
                println!(
                    "{:<22} {:<13} n_c={:<5} n_b={:<5} iters={:<3} repeats={} adaptive={} lambda={}",
                    c.name,
                    c.spec.operator.name(),
                    d.n_c,
                    d.n_b,
                    d.n_iters,
                    d.n_repeats,
                    d.adaptive,
                    c.spec.lambda
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Heatmap { csv, column, out } => bench::grid_from_long_csv(&csv, &column)
            .and_then(|g| bench::write_heatmap(&out, &g))
            .map(|m| {
                println!("{}: min {:e}, max {:e}", out.display(), m.min, m.max);
                ExitCode::SUCCESS
            }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
