//! Domains, uniform interior and boundary sampling, and the seed-based
//! adaptive resampler.

mod adaptive;

pub use adaptive::{adaptive_resample, write_resample_csv, Resampled, SeedDensity, DEFENSIVE_MIX};

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor_ad::Vec2;

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Square { origin: Vec2, side: f64 },
    Disk { center: Vec2, radius: f64 },
    Ellipse { center: Vec2, semi_axes: Vec2 },
}

/// Nodes and weights of 8-point Gauss-Legendre quadrature on `[-1, 1]`.
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

const ARC_PANELS: usize = 1024;

impl Domain {
    pub fn unit_square() -> Self {
        Domain::Square {
            origin: Vec2::ZERO,
            side: 1.0,
        }
    }

    pub fn unit_disk() -> Self {
        Domain::Disk {
            center: Vec2::ZERO,
            radius: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Domain::Square { origin, side } => origin.is_finite() && *side > 0.0,
            Domain::Disk { center, radius } => center.is_finite() && *radius > 0.0,
            Domain::Ellipse { center, semi_axes } => {
                center.is_finite() && semi_axes.x1 > 0.0 && semi_axes.x2 > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("degenerate domain {self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Domain::Square { side, .. } => side * side,
            Domain::Disk { radius, .. } => PI * radius * radius,
            Domain::Ellipse { semi_axes, .. } => PI * semi_axes.x1 * semi_axes.x2,
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, x: Vec2) -> bool {
        match self {
            Domain::Square { origin, side } => {
                let d = x - *origin;
                (0.0..=*side).contains(&d.x1) && (0.0..=*side).contains(&d.x2)
            }
            Domain::Disk { center, radius } => x.dist_sq(*center) <= radius * radius,
            Domain::Ellipse { center, semi_axes } => {
                let d = x - *center;
                (d.x1 / semi_axes.x1).powi(2) + (d.x2 / semi_axes.x2).powi(2) <= 1.0
            }
        }
    }

    /// Lower-left and upper-right corners of the bounding box.
    pub fn bbox(&self) -> (Vec2, Vec2) {
        match self {
            Domain::Square { origin, side } => (*origin, *origin + Vec2::new(*side, *side)),
            Domain::Disk { center, radius } => {
                let r = Vec2::new(*radius, *radius);
                (*center - r, *center + r)
            }
            Domain::Ellipse { center, semi_axes } => (*center - *semi_axes, *center + *semi_axes),
        }
    }

    /// Uniform points in the domain, by rejection from the bounding box for curved shapes.
    pub fn sample_interior<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec2> {
        let (lo, hi) = self.bbox();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = Vec2::new(
                rng.random_range(lo.x1..hi.x1),
                rng.random_range(lo.x2..hi.x2),
            );
            if self.contains(x) {
                out.push(x);
            }
        }
        out
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Domain::Square { side, .. } => 4.0 * side,
            Domain::Disk { radius, .. } => 2.0 * PI * radius,
            Domain::Ellipse { semi_axes, .. } => {
                *ArcTable::new(*semi_axes).cumulative.last().unwrap()
            }
        }
    }

    /// Points uniform with respect to arclength on the boundary.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec2> {
        match self {
            Domain::Square { origin, side } => (0..n)
                .map(|_| {
                    let s = rng.random_range(0.0..4.0);
                    let edge = (s as usize).min(3);
                    let u = (s - edge as f64) * side;
                    let offset = match edge {
                        0 => Vec2::new(u, 0.0),
                        1 => Vec2::new(*side, u),
                        2 => Vec2::new(side - u, *side),
                        _ => Vec2::new(0.0, side - u),
                    };
                    *origin + offset
                })
                .collect(),
            Domain::Disk { center, radius } => (0..n)
                .map(|_| {
                    let t = rng.random_range(0.0..2.0 * PI);
                    *center + Vec2::new(radius * t.cos(), radius * t.sin())
                })
                .collect(),
            Domain::Ellipse { center, semi_axes } => {
                let table = ArcTable::new(*semi_axes);
                (0..n)
                    .map(|_| {
                        let s = rng.random_range(0.0..table.total());
                        let t = table.angle_at(s);
                        *center + Vec2::new(semi_axes.x1 * t.cos(), semi_axes.x2 * t.sin())
                    })
                    .collect()
            }
        }
    }

    /// Cell centres of an `n × n` grid over the bounding box, keeping those inside.
    pub fn grid_points(&self, n: usize) -> Vec<GridPoint> {
        let (lo, hi) = self.bbox();
        let h = Vec2::new((hi.x1 - lo.x1) / n as f64, (hi.x2 - lo.x2) / n as f64);
        let mut out = Vec::with_capacity(n * n);
        for row in 0..n {
            for col in 0..n {
                let x = Vec2::new(
                    lo.x1 + (col as f64 + 0.5) * h.x1,
                    lo.x2 + (row as f64 + 0.5) * h.x2,
                );
                if self.contains(x) {
                    out.push(GridPoint { row, col, x });
                }
            }
        }
        out
    }

    /// Area of one cell of the grid used by [`Domain::grid_points`].
    pub fn grid_cell_area(&self, n: usize) -> f64 {
        let (lo, hi) = self.bbox();
        (hi.x1 - lo.x1) * (hi.x2 - lo.x2) / (n * n) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub x: Vec2,
}

/// Cumulative arclength of `t ↦ (a cos t, b sin t)` on a uniform panel grid.
struct ArcTable {
    axes: Vec2,
    cumulative: Vec<f64>,
    panel: f64,
}

impl ArcTable {
    fn new(axes: Vec2) -> Self {
        let panel = 2.0 * PI / ARC_PANELS as f64;
        let mut cumulative = Vec::with_capacity(ARC_PANELS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..ARC_PANELS {
            let t0 = k as f64 * panel;
            acc += gauss_legendre(|t| speed(axes, t), t0, t0 + panel);
            cumulative.push(acc);
        }
        Self {
            axes,
            cumulative,
            panel,
        }
    }

    fn total(&self) -> f64 {
        self.cumulative[ARC_PANELS]
    }

    fn angle_at(&self, s: f64) -> f64 {
        let k = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, ARC_PANELS)
            - 1;
        let t0 = k as f64 * self.panel;
        let base = self.cumulative[k];
        let len = self.cumulative[k + 1] - base;
        let mut t = t0 + self.panel * (s - base) / len;
        for _ in 0..4 {
            let r = base + gauss_legendre(|u| speed(self.axes, u), t0, t) - s;
            t = (t - r / speed(self.axes, t)).clamp(t0, t0 + self.panel);
        }
        t
    }
}

fn speed(axes: Vec2, t: f64) -> f64 {
    (axes.x1 * t.sin()).hypot(axes.x2 * t.cos())
}

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * GL8.iter().map(|&(x, w)| w * f(m + h * x)).sum::<f64>()
}

/// Interior collocation points with importance weights, plus boundary points.
#[derive(Clone, Debug, Default)]
pub struct CollocationSet {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub boundary_points: Vec<Vec2>,
}

impl CollocationSet {
    /// Uniform interior and boundary samples with unit weights.
    pub fn uniform<R: Rng + ?Sized>(domain: &Domain, n_c: usize, n_b: usize, rng: &mut R) -> Self {
        let points = domain.sample_interior(n_c, rng);
        let boundary_points = domain.sample_boundary(n_b, rng);
        Self {
            weights: vec![1.0; points.len()],
            points,
            boundary_points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "{} collocation points but {} weights",
                self.points.len(),
                self.weights.len()
            )));
        }
        Ok(())
    }
}
