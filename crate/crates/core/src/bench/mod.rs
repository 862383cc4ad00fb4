//! Benchmark catalog, the experiment runner and its artifacts.

mod catalog;
mod heatmap;
mod histogram;
mod run;

pub use catalog::{case, catalog, BenchmarkCase, CaseDefaults};
pub use heatmap::{grid_from_long_csv, render_heatmap, write_heatmap, Heatmap};
pub use histogram::{
    pushforward_histogram, sample_source, write_histogram_csv, Histogram, HIST_BINS,
};
pub use run::{quantile, run, RepeatSummary, RunConfig, RunSummary};
