//! Jet evaluation of networks and the reverse sweep back to parameters.
//!
//! The forward pass pushes the seeded coordinate jets through every layer,
//! so each neuron carries its value, input gradient and input Hessian. The
//! reverse pass takes an adjoint for the output jet (one number per stored
//! jet component) and accumulates `∂objective/∂θ`.

use rayon::prelude::*;

use super::jet::Jet2;
use super::softplus;
use super::types::{SymMat2, Vec2};
use crate::error::{Error, Result};
use crate::network::NetworkParams;

/// Points per work unit in parallel reductions. Fixed so that summation
/// order, and therefore every bit of the result, does not depend on scheduling.
pub const REDUCTION_CHUNK: usize = 64;

/// Per-point intermediate values kept for the reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct JetCache {
    input: [Jet2; 2],
    x: Vec2,
    /// Pre-activation jets, all layers concatenated.
    pre: Vec<Jet2>,
    /// Post-activation jets (equal to `pre` on the output layer).
    post: Vec<Jet2>,
    /// `σ'`, `σ''`, `σ'''` at each pre-activation value.
    derivs: Vec<[f64; 3]>,
    offsets: Vec<usize>,
}

impl JetCache {
    pub fn for_network(net: &NetworkParams) -> Self {
        let mut offsets = Vec::with_capacity(net.layers().len());
        let mut total = 0;
        for l in net.layers() {
            offsets.push(total);
            total += l.outputs;
        }
        Self {
            input: [Jet2::ZERO; 2],
            x: Vec2::ZERO,
            pre: vec![Jet2::ZERO; total],
            post: vec![Jet2::ZERO; total],
            derivs: vec![[0.0; 3]; total],
            offsets,
        }
    }

    fn fits(&self, net: &NetworkParams) -> bool {
        self.offsets.len() == net.layers().len()
            && self.pre.len() == net.layers().iter().map(|l| l.outputs).sum::<usize>()
    }
}

/// Value, gradient and Hessian of the network at `x`.
pub fn eval_jet(net: &NetworkParams, x: Vec2) -> Jet2 {
    let mut cache = JetCache::for_network(net);
    eval_jet_cached(net, x, &mut cache)
}

/// As [`eval_jet`], keeping intermediates in `cache` for [`backprop_jet`].
pub fn eval_jet_cached(net: &NetworkParams, x: Vec2, cache: &mut JetCache) -> Jet2 {
    if !cache.fits(net) {
        *cache = JetCache::for_network(net);
    }
    let (j1, j2) = Jet2::coordinates(x);
    cache.input = [j1, j2];
    cache.x = x;
    let theta = net.theta();
    let layers = net.layers();
    for (l, layer) in layers.iter().enumerate() {
        let off = cache.offsets[l];
        let (done, rest) = cache.post.split_at_mut(off);
        let prev: &[Jet2] = if l == 0 {
            &cache.input
        } else {
            &done[cache.offsets[l - 1]..]
        };
        let w = &theta[layer.weight..layer.weight + layer.weight_len()];
        let s = &theta[layer.skip..layer.skip + layer.skip_len()];
        let b = &theta[layer.bias..layer.bias + layer.outputs];
        for i in 0..layer.outputs {
            let mut z = Jet2::constant(b[i]);
            let row = &w[i * layer.inputs..(i + 1) * layer.inputs];
            for (wij, a) in row.iter().zip(prev) {
                z.value += wij * a.value;
                z.grad.x1 += wij * a.grad.x1;
                z.grad.x2 += wij * a.grad.x2;
                z.hess.a11 += wij * a.hess.a11;
                z.hess.a12 += wij * a.hess.a12;
                z.hess.a22 += wij * a.hess.a22;
            }
            if layer.skip_cols > 0 {
                let (s1, s2) = (s[2 * i], s[2 * i + 1]);
                z.value += s1 * x.x1 + s2 * x.x2;
                z.grad.x1 += s1;
                z.grad.x2 += s2;
            }
            cache.pre[off + i] = z;
            rest[i] = if layer.activated {
                let d = softplus::derivs(z.value);
                cache.derivs[off + i] = [d.d1, d.d2, d.d3];
                z.chain(d.value, d.d1, d.d2)
            } else {
                z
            };
        }
    }
    cache.post[cache.post.len() - 1]
}

/// Accumulate into `grad` the parameter gradient of a scalar whose derivative
/// with respect to the output jet components is `adjoint`. `cache` must come
/// from [`eval_jet_cached`] on the same network.
#[allow(clippy::needless_range_loop)]
pub fn backprop_jet(net: &NetworkParams, cache: &JetCache, adjoint: Jet2, grad: &mut [f64]) {
    let theta = net.theta();
    let layers = net.layers();
    let last = layers.len() - 1;
    // adjoint of the current layer's outputs
    let mut adj_out: Vec<Jet2> = vec![adjoint];
    let mut adj_prev: Vec<Jet2> = Vec::new();
    for l in (0..=last).rev() {
        let layer = &layers[l];
        let off = cache.offsets[l];
        // through the activation
        if layer.activated {
            for i in 0..layer.outputs {
                let a = adj_out[i];
                let z = &cache.pre[off + i];
                let [d1, d2, d3] = cache.derivs[off + i];
                let (g1, g2) = (z.grad.x1, z.grad.x2);
                let hv =
                    a.hess.a11 * z.hess.a11 + a.hess.a12 * z.hess.a12 + a.hess.a22 * z.hess.a22;
                let gg = a.hess.a11 * g1 * g1 + a.hess.a12 * g1 * g2 + a.hess.a22 * g2 * g2;
                adj_out[i] = Jet2::new(
                    a.value * d1 + (a.grad.x1 * g1 + a.grad.x2 * g2) * d2 + hv * d2 + gg * d3,
                    Vec2::new(
                        a.grad.x1 * d1 + d2 * (2.0 * a.hess.a11 * g1 + a.hess.a12 * g2),
                        a.grad.x2 * d1 + d2 * (2.0 * a.hess.a22 * g2 + a.hess.a12 * g1),
                    ),
                    a.hess * d1,
                );
            }
        }
        let prev: &[Jet2] = if l == 0 {
            &cache.input
        } else {
            let po = cache.offsets[l - 1];
            &cache.post[po..po + layers[l - 1].outputs]
        };
        let need_prev = l > 0;
        if need_prev {
            adj_prev.clear();
            adj_prev.resize(layer.inputs, Jet2::ZERO);
        }
        let w = &theta[layer.weight..layer.weight + layer.weight_len()];
        for i in 0..layer.outputs {
            let zb = adj_out[i];
            grad[layer.bias + i] += zb.value;
            if layer.skip_cols > 0 {
                grad[layer.skip + 2 * i] += zb.value * cache.x.x1 + zb.grad.x1;
                grad[layer.skip + 2 * i + 1] += zb.value * cache.x.x2 + zb.grad.x2;
            }
            let base = layer.weight + i * layer.inputs;
            for j in 0..layer.inputs {
                let a = &prev[j];
                grad[base + j] += zb.value * a.value
                    + zb.grad.x1 * a.grad.x1
                    + zb.grad.x2 * a.grad.x2
                    + zb.hess.a11 * a.hess.a11
                    + zb.hess.a12 * a.hess.a12
                    + zb.hess.a22 * a.hess.a22;
                if need_prev {
                    let wij = w[i * layer.inputs + j];
                    let ap = &mut adj_prev[j];
                    ap.value += wij * zb.value;
                    ap.grad.x1 += wij * zb.grad.x1;
                    ap.grad.x2 += wij * zb.grad.x2;
                    ap.hess.a11 += wij * zb.hess.a11;
                    ap.hess.a12 += wij * zb.hess.a12;
                    ap.hess.a22 += wij * zb.hess.a22;
                }
            }
        }
        if need_prev {
            std::mem::swap(&mut adj_out, &mut adj_prev);
        }
    }
}

/// Jets at every point, in order.
pub fn eval_jets(net: &NetworkParams, points: &[Vec2]) -> Vec<Jet2> {
    points
        .par_chunks(REDUCTION_CHUNK)
        .flat_map_iter(|chunk| {
            let mut cache = JetCache::for_network(net);
            chunk
                .iter()
                .map(|&x| eval_jet_cached(net, x, &mut cache))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Sum over points of `per_point(i, jet_i)`, where `per_point` returns the
/// contribution and its adjoint with respect to the jet. Also returns the
/// parameter gradient of the sum when `want_grad` is set.
///
/// The reduction is chunked with a fixed chunk size and combined in index
/// order, so results are bit-identical across runs and thread counts.
pub fn reduce_points<F>(
    net: &NetworkParams,
    points: &[Vec2],
    want_grad: bool,
    per_point: F,
) -> Result<(f64, Option<Vec<f64>>)>
where
    F: Fn(usize, &Jet2) -> (f64, Jet2) + Sync,
{
    let n_params = net.len();
    let partials: Vec<Result<(f64, Vec<f64>)>> = points
        .par_chunks(REDUCTION_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut cache = JetCache::for_network(net);
            let mut grad = if want_grad {
                vec![0.0; n_params]
            } else {
                Vec::new()
            };
            let mut sum = 0.0;
            for (k, &x) in chunk.iter().enumerate() {
                let index = c * REDUCTION_CHUNK + k;
                let jet = eval_jet_cached(net, x, &mut cache);
                if !jet.is_finite() {
                    return Err(Error::NonFinite {
                        index,
                        what: "network jet".into(),
                    });
                }
                let (value, adjoint) = per_point(index, &jet);
                if !value.is_finite() || !adjoint.is_finite() {
                    return Err(Error::NonFinite {
                        index,
                        what: "loss contribution".into(),
                    });
                }
                sum += value;
                if want_grad {
                    backprop_jet(net, &cache, adjoint, &mut grad);
                }
            }
            Ok((sum, grad))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; n_params]);
    for part in partials {
        let (s, g) = part?;
        total += s;
        if let Some(acc) = grad.as_mut() {
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
    }
    Ok((total, grad))
}

/// Parameter gradient of `Σᵢ ⟨adjointᵢ, jet(xᵢ)⟩`.
pub fn backprop_points(
    net: &NetworkParams,
    points: &[Vec2],
    adjoints: &[Jet2],
) -> Result<Vec<f64>> {
    if points.len() != adjoints.len() {
        return Err(Error::Shape(format!(
            "{} points but {} adjoints",
            points.len(),
            adjoints.len()
        )));
    }
    let (_, grad) = reduce_points(net, points, true, |i, _| (0.0, adjoints[i]))?;
    Ok(grad.expect("gradient requested"))
}

/// Hessian of the network at `x` by central differences of [`NetworkParams::forward`].
/// Test oracle; not used by the solver.
pub fn fd_hessian(net: &NetworkParams, x: Vec2, h: f64) -> SymMat2 {
    let f = |p: Vec2| net.forward(p);
    let e1 = Vec2::new(h, 0.0);
    let e2 = Vec2::new(0.0, h);
    let f0 = f(x);
    SymMat2::new(
        (f(x + e1) - 2.0 * f0 + f(x - e1)) / (h * h),
        (f(x + e1 + e2) - f(x + e1 - e2) - f(x - e1 + e2) + f(x - e1 - e2)) / (4.0 * h * h),
        (f(x + e2) - 2.0 * f0 + f(x - e2)) / (h * h),
    )
}
