//! A small Wengert tape for scalar objectives built from network jets.
//!
//! Losses used in training supply their jet adjoints directly; the tape is
//! for arbitrary objectives written against [`JetVar`] handles, and serves as
//! an independent route for checking the hand-written adjoints.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::jet::Jet2;
use super::network_ad::{backprop_points, eval_jets};
use super::types::{SymMat2, Vec2};
use crate::error::{Error, Result};
use crate::network::NetworkParams;

#[derive(Clone, Copy, Debug)]
struct Node {
    parents: [usize; 2],
    partials: [f64; 2],
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, parents: [usize; 2], partials: [f64; 2]) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { parents, partials });
        nodes.len() - 1
    }

    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push([0, 0], [0.0, 0.0]);
        Var {
            tape: self,
            index,
            value,
        }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of `out` with respect to every node, indexed by [`Var::index`].
    pub fn gradient(&self, out: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[out.index] = 1.0;
        for i in (0..=out.index).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            for k in 0..2 {
                if n.partials[k] != 0.0 {
                    adj[n.parents[k]] += a * n.partials[k];
                }
            }
        }
        adj
    }
}

impl<'t> Var<'t> {
    #[inline]
    pub fn value(self) -> f64 {
        self.value
    }

    #[inline]
    pub fn index(self) -> usize {
        self.index
    }

    fn unary(self, value: f64, d: f64) -> Var<'t> {
        let index = self.tape.push([self.index, 0], [d, 0.0]);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    fn binary(self, other: Var<'t>, value: f64, da: f64, db: f64) -> Var<'t> {
        let index = self.tape.push([self.index, other.index], [da, db]);
        Var {
            tape: self.tape,
            index,
            value,
        }
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.value.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(self) -> Var<'t> {
        let s = self.value.sqrt();
        self.unary(s, 0.5 / s)
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.value * self.value, 2.0 * self.value)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }

    pub fn sin(self) -> Var<'t> {
        let (s, c) = self.value.sin_cos();
        self.unary(s, c)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.value + o.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.value - o.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, o: Var<'t>) -> Var<'t> {
        self.binary(o, self.value * o.value, o.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, o: Var<'t>) -> Var<'t> {
        let q = self.value / o.value;
        self.binary(o, q, 1.0 / o.value, -q / o.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.value + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.value - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.value * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.value / c, 1.0 / c)
    }
}

/// Tape handles for the six stored components of one network jet.
#[derive(Clone, Copy, Debug)]
pub struct JetVar<'t> {
    pub value: Var<'t>,
    pub grad: [Var<'t>; 2],
    /// `[h11, h12, h22]`
    pub hess: [Var<'t>; 3],
}

impl<'t> JetVar<'t> {
    fn record(tape: &'t Tape, j: &Jet2) -> Self {
        Self {
            value: tape.var(j.value),
            grad: [tape.var(j.grad.x1), tape.var(j.grad.x2)],
            hess: [
                tape.var(j.hess.a11),
                tape.var(j.hess.a12),
                tape.var(j.hess.a22),
            ],
        }
    }

    pub fn det(&self) -> Var<'t> {
        self.hess[0] * self.hess[2] - self.hess[1].square()
    }

    pub fn laplacian(&self) -> Var<'t> {
        self.hess[0] + self.hess[2]
    }

    /// `|D²v − P|²` in the Frobenius norm.
    pub fn hess_dist_sq(&self, p: SymMat2) -> Var<'t> {
        (self.hess[0] - p.a11).square()
            + (self.hess[1] - p.a12).square() * 2.0
            + (self.hess[2] - p.a22).square()
    }

    fn adjoint(&self, adj: &[f64]) -> Jet2 {
        Jet2::new(
            adj[self.value.index],
            Vec2::new(adj[self.grad[0].index], adj[self.grad[1].index]),
            SymMat2::new(
                adj[self.hess[0].index],
                adj[self.hess[1].index],
                adj[self.hess[2].index],
            ),
        )
    }
}

#[derive(Clone, Debug)]
pub struct ParamGradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Value and parameter gradient of `objective`, a scalar built on the tape
/// from the network jets at `points`.
pub fn param_gradient<F>(
    net: &NetworkParams,
    points: &[Vec2],
    objective: F,
) -> Result<ParamGradient>
where
    F: for<'t> Fn(&'t Tape, &[JetVar<'t>]) -> Var<'t>,
{
    let jets = eval_jets(net, points);
    if let Some(index) = jets.iter().position(|j| !j.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "network jet".into(),
        });
    }
    let tape = Tape::new();
    let vars: Vec<JetVar<'_>> = jets.iter().map(|j| JetVar::record(&tape, j)).collect();
    let out = objective(&tape, &vars);
    if !out.value().is_finite() {
        return Err(Error::NonFinite {
            index: 0,
            what: "objective value".into(),
        });
    }
    let adj = tape.gradient(out);
    let adjoints: Vec<Jet2> = vars.iter().map(|v| v.adjoint(&adj)).collect();
    if let Some(index) = adjoints.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            index,
            what: "objective adjoint".into(),
        });
    }
    Ok(ParamGradient {
        value: out.value(),
        grad: backprop_points(net, points, &adjoints)?,
    })
}
