use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::network::NetworkParams;
use crate::ritz::ScalarFn;
use crate::tensor_ad::{eval_jets, Vec2};

/// Bins per side.
pub const HIST_BINS: usize = 100;

/// Counts of pushed-forward samples on a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: Vec2,
    pub hi: Vec2,
    pub bins: usize,
    /// `counts[row * bins + col]`, row along `x₂`.
    pub counts: Vec<u64>,
    /// Samples whose image lies in the target domain.
    pub inside: u64,
    pub total: u64,
}

impl Histogram {
    pub fn inside_fraction(&self) -> f64 {
        self.inside as f64 / self.total.max(1) as f64
    }

    pub fn center(&self, row: usize, col: usize) -> Vec2 {
        let w = (self.hi.x1 - self.lo.x1) / self.bins as f64;
        let h = (self.hi.x2 - self.lo.x2) / self.bins as f64;
        Vec2::new(
            self.lo.x1 + (col as f64 + 0.5) * w,
            self.lo.x2 + (row as f64 + 0.5) * h,
        )
    }
}

/// `n` draws from `density` on `domain`. With a `bound` on the density this
/// is rejection sampling from the uniform law; without one the density is
/// taken to be constant.
pub fn sample_source<R: Rng + ?Sized>(
    domain: &Domain,
    density: &ScalarFn,
    bound: Option<f64>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec2>> {
    let Some(bound) = bound else {
        return Ok(domain.sample_interior(n, rng));
    };
    if !(bound.is_finite() && bound > 0.0) {
        return Err(Error::InvalidInput(format!(
            "density bound must be positive, got {bound}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        for x in domain.sample_interior((n - out.len()).max(1024), rng) {
            let d = density(x);
            if d > bound * (1.0 + 1e-12) {
                return Err(Error::InvalidData {
                    index: out.len(),
                    what: format!("density {d} at {x:?} exceeds the bound {bound}"),
                });
            }
            if rng.random::<f64>() * bound < d {
                out.push(x);
                if out.len() == n {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Push `samples` through `∇u` and bin the images over the target bounding
/// box widened by a quarter on each side. Images outside the window land
/// in the nearest edge bin so the counts always sum to the sample count.
pub fn pushforward_histogram(
    net: &NetworkParams,
    samples: &[Vec2],
    target: &Domain,
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidInput(
            "histogram needs at least one bin".into(),
        ));
    }
    let (blo, bhi) = target.bbox();
    let pad = Vec2::new(0.25 * (bhi.x1 - blo.x1), 0.25 * (bhi.x2 - blo.x2));
    let (lo, hi) = (blo - pad, bhi + pad);
    let mut hist = Histogram {
        lo,
        hi,
        bins,
        counts: vec![0; bins * bins],
        inside: 0,
        total: samples.len() as u64,
    };
    let bin = |t: f64, a: f64, b: f64| {
        let k = ((t - a) / (b - a) * bins as f64).floor();
        if k.is_nan() {
            0
        } else {
            k.clamp(0.0, (bins - 1) as f64) as usize
        }
    };
    for chunk in samples.chunks(1 << 16) {
        for (i, jet) in eval_jets(net, chunk).iter().enumerate() {
            let y = jet.grad;
            if !y.is_finite() {
                return Err(Error::NonFinite {
                    index: i,
                    what: "pushforward of a source sample".into(),
                });
            }
            hist.counts[bin(y.x2, lo.x2, hi.x2) * bins + bin(y.x1, lo.x1, hi.x1)] += 1;
            hist.inside += target.contains(y) as u64;
        }
    }
    Ok(hist)
}

/// `row,col,x1,x2,count` with bin centres.
pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "col", "x1", "x2", "count"])?;
    for row in 0..hist.bins {
        for col in 0..hist.bins {
            let c = hist.center(row, col);
            w.write_record([
                row.to_string(),
                col.to_string(),
                c.x1.to_string(),
                c.x2.to_string(),
                hist.counts[row * hist.bins + col].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
