use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;

use super::Domain;
use crate::error::{Error, Result};
use crate::tensor_ad::Vec2;

/// Share of probability mass spread uniformly over the pool.
pub const DEFENSIVE_MIX: f64 = 0.1;

/// Piecewise-constant sampling density carried by a set of seeds.
#[derive(Clone, Debug, Default)]
pub struct SeedDensity {
    pub seeds: Vec<Vec2>,
    pub seed_values: Vec<f64>,
    pub pool: Vec<Vec2>,
    /// Nearest seed of each pool point.
    pub assignment: Vec<usize>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Resampled {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    /// Pool index of each resampled point.
    pub pool_index: Vec<usize>,
    pub density: SeedDensity,
}

fn nearest_seed(x: Vec2, seeds: &[Vec2]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, s) in seeds.iter().enumerate() {
        let d = x.dist_sq(*s);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Draw `n_c` points from `pool` with probability proportional to the error
/// indicator at each point's nearest seed, mixed with a uniform share.
///
/// `indicator` maps the seeds to nonnegative values. Weights `1/(M p)` make the
/// weighted sample mean an unbiased estimate of the uniform pool mean.
pub fn adaptive_resample<R, F>(
    domain: &Domain,
    pool: Vec<Vec2>,
    indicator: F,
    n_seeds: usize,
    n_c: usize,
    rng: &mut R,
) -> Result<Resampled>
where
    R: Rng + ?Sized,
    F: FnOnce(&[Vec2]) -> Result<Vec<f64>>,
{
    if n_seeds == 0 || n_c == 0 || pool.is_empty() {
        return Err(Error::InvalidInput(format!(
            "resampling needs seeds, points and a pool (S={n_seeds}, n_c={n_c}, M={})",
            pool.len()
        )));
    }
    let m = pool.len();
    let seeds = domain.sample_interior(n_seeds, rng);
    let seed_values = indicator(&seeds)?;
    if seed_values.len() != n_seeds {
        return Err(Error::Shape(format!(
            "{} indicator values for {n_seeds} seeds",
            seed_values.len()
        )));
    }
    if let Some(index) = seed_values
        .iter()
        .position(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::InvalidData {
            index,
            what: format!("error indicator {} at seed", seed_values[index]),
        });
    }
    let assignment: Vec<usize> = pool.par_iter().map(|&x| nearest_seed(x, &seeds)).collect();

    let constant = seed_values.iter().all(|&v| v == seed_values[0]);
    let (probabilities, pool_index, weights) = if constant {
        // includes the all-zero and single-seed cases
        let idx: Vec<usize> = (0..n_c).map(|_| rng.random_range(0..m)).collect();
        (vec![1.0 / m as f64; m], idx, vec![1.0; n_c])
    } else {
        let total: f64 = assignment.iter().map(|&s| seed_values[s]).sum();
        let p: Vec<f64> = assignment
            .iter()
            .map(|&s| (1.0 - DEFENSIVE_MIX) * seed_values[s] / total + DEFENSIVE_MIX / m as f64)
            .collect();
        let dist = WeightedIndex::new(&p)
            .map_err(|e| Error::InvalidInput(format!("sampling weights: {e}")))?;
        let idx: Vec<usize> = (0..n_c).map(|_| dist.sample(rng)).collect();
        let w = idx.iter().map(|&j| 1.0 / (m as f64 * p[j])).collect();
        (p, idx, w)
    };

    Ok(Resampled {
        points: pool_index.iter().map(|&j| pool[j]).collect(),
        weights,
        pool_index,
        density: SeedDensity {
            seeds,
            seed_values,
            pool,
            assignment,
            probabilities,
        },
    })
}

/// One row per seed and per pool point: `kind,index,x1,x2,seed,value,probability`.
pub fn write_resample_csv(path: &Path, density: &SeedDensity) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "index", "x1", "x2", "seed", "value", "probability"])?;
    for (i, (s, v)) in density.seeds.iter().zip(&density.seed_values).enumerate() {
        w.write_record([
            "seed",
            &i.to_string(),
            &s.x1.to_string(),
            &s.x2.to_string(),
            &i.to_string(),
            &v.to_string(),
            "",
        ])?;
    }
    for (j, x) in density.pool.iter().enumerate() {
        let s = density.assignment[j];
        w.write_record([
            "pool",
            &j.to_string(),
            &x.x1.to_string(),
            &x.x2.to_string(),
            &s.to_string(),
            &density.seed_values[s].to_string(),
            &density.probabilities[j].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
