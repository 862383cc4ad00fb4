//! Feedforward and input-convex network architectures.
//!
//! Parameters live in one flat `Vec<f64>`. Each affine map `l` owns three
//! contiguous blocks: the hidden-to-hidden weight `W`, the skip matrix `L`
//! from the raw input, and the bias `b`. Depending on the architecture some
//! blocks are empty:
//!
//! | kind | layer 0                    | layers 1..=L        |
//! |------|----------------------------|---------------------|
//! | MLP  | `W` is `N₁×2` on the input | `W`, `b`            |
//! | ICNN | `L` is `N₁×2`, `b`         | `W ≥ 0`, `L`, `b`   |
//!
//! Every ICNN `W` entry is sign-constrained; nothing else is.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_ad::softplus::softplus;
use crate::tensor_ad::Vec2;

pub const INPUT_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Mlp,
    Icnn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softplus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: ArchKind,
    /// `[2, N₁, …, N_L, 1]`
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl Architecture {
    pub fn new(kind: ArchKind, widths: Vec<usize>) -> Result<Self> {
        let arch = Self {
            kind,
            widths,
            activation: Activation::Softplus,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// `hidden` layers of `width` neurons each.
    pub fn uniform(kind: ArchKind, hidden: usize, width: usize) -> Result<Self> {
        let mut widths = vec![INPUT_DIM];
        widths.extend(std::iter::repeat_n(width, hidden));
        widths.push(1);
        Self::new(kind, widths)
    }

    /// Four hidden layers of ten neurons.
    pub fn standard(kind: ArchKind) -> Self {
        Self::uniform(kind, 4, 10).expect("static architecture is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.widths.len();
        if n < 3 {
            return Err(Error::Shape(format!(
                "need at least one hidden layer, got widths {:?}",
                self.widths
            )));
        }
        if self.widths[0] != INPUT_DIM || self.widths[n - 1] != 1 {
            return Err(Error::Shape(format!(
                "widths must start with 2 and end with 1, got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        Ok(())
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }
}

/// Offsets of one affine map inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    /// Number of columns of `W` (0 for the first ICNN layer).
    pub inputs: usize,
    pub outputs: usize,
    pub weight: usize,
    /// Columns of the skip matrix `L` (0 or 2).
    pub skip_cols: usize,
    pub skip: usize,
    pub bias: usize,
    /// Apply the activation after this map (false only for the output map).
    pub activated: bool,
    /// `W` entries must stay nonnegative.
    pub constrained: bool,
}

impl LayerLayout {
    #[inline]
    pub fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    #[inline]
    pub fn skip_len(&self) -> usize {
        self.skip_cols * self.outputs
    }

    #[inline]
    pub fn end(&self) -> usize {
        self.bias + self.outputs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Weight,
    Skip,
    Bias,
}

/// Where a flat parameter index lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub block: Block,
    pub row: usize,
    pub col: usize,
}

fn build_layout(arch: &Architecture) -> (Vec<LayerLayout>, usize) {
    let widths = &arch.widths;
    let n_maps = widths.len() - 1;
    let mut layers = Vec::with_capacity(n_maps);
    let mut offset = 0;
    for l in 0..n_maps {
        let outputs = widths[l + 1];
        let (inputs, skip_cols) = match (arch.kind, l) {
            (ArchKind::Mlp, _) => (widths[l], 0),
            (ArchKind::Icnn, 0) => (0, INPUT_DIM),
            (ArchKind::Icnn, _) => (widths[l], INPUT_DIM),
        };
        let weight = offset;
        let skip = weight + inputs * outputs;
        let bias = skip + skip_cols * outputs;
        offset = bias + outputs;
        layers.push(LayerLayout {
            inputs,
            outputs,
            weight,
            skip_cols,
            skip,
            bias,
            activated: l + 1 < n_maps,
            constrained: arch.kind == ArchKind::Icnn,
        });
    }
    (layers, offset)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    layers: Vec<LayerLayout>,
    theta: Vec<f64>,
}

impl NetworkParams {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let (layers, n) = build_layout(&arch);
        Ok(Self {
            arch,
            layers,
            theta: vec![0.0; n],
        })
    }

    pub fn from_flat(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        if theta.len() != net.theta.len() {
            return Err(Error::Shape(format!(
                "architecture needs {} parameters, got {}",
                net.theta.len(),
                theta.len()
            )));
        }
        net.theta = theta;
        Ok(net)
    }

    /// Random initialisation: weights `N(0, 1/fan_in)`, biases zero, and the
    /// sign-constrained ICNN weights squared element-wise after drawing.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        for layer in net.layers.clone() {
            if layer.inputs > 0 {
                let scale = 1.0 / (layer.inputs as f64).sqrt();
                for w in &mut net.theta[layer.weight..layer.weight + layer.weight_len()] {
                    let draw: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
                    *w = if layer.constrained { draw * draw } else { draw };
                }
            }
            if layer.skip_cols > 0 {
                let scale = 1.0 / (layer.skip_cols as f64).sqrt();
                for w in &mut net.theta[layer.skip..layer.skip + layer.skip_len()] {
                    *w = rng.sample::<f64, _>(StandardNormal) * scale;
                }
            }
        }
        Ok(net)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerLayout] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.theta.len(),
                theta.len()
            )));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    /// Maps a flat index back to its block coordinates.
    pub fn slot(&self, index: usize) -> Option<ParamSlot> {
        for (l, layer) in self.layers.iter().enumerate() {
            if index >= layer.end() {
                continue;
            }
            let (block, local, cols) = if index < layer.skip {
                (Block::Weight, index - layer.weight, layer.inputs)
            } else if index < layer.bias {
                (Block::Skip, index - layer.skip, layer.skip_cols)
            } else {
                (Block::Bias, index - layer.bias, 1)
            };
            return Some(ParamSlot {
                layer: l,
                block,
                row: local / cols,
                col: local % cols,
            });
        }
        None
    }

    pub fn index_of(&self, slot: ParamSlot) -> Option<usize> {
        let layer = self.layers.get(slot.layer)?;
        let (start, rows, cols) = match slot.block {
            Block::Weight => (layer.weight, layer.outputs, layer.inputs),
            Block::Skip => (layer.skip, layer.outputs, layer.skip_cols),
            Block::Bias => (layer.bias, layer.outputs, 1),
        };
        (slot.row < rows && slot.col < cols).then_some(start + slot.row * cols + slot.col)
    }

    /// True when the flat index is a sign-constrained ICNN weight.
    pub fn is_constrained(&self, index: usize) -> bool {
        self.layers
            .iter()
            .any(|l| l.constrained && index >= l.weight && index < l.weight + l.weight_len())
    }

    /// Clamp negative constrained weights to zero. Returns how many entries
    /// changed; always 0 for an MLP.
    pub fn enforce_nonneg(&mut self) -> usize {
        clamp_constrained(&self.layers, &mut self.theta)
    }

    /// Every constrained entry is nonnegative.
    pub fn satisfies_constraints(&self) -> bool {
        self.layers.iter().filter(|l| l.constrained).all(|l| {
            self.theta[l.weight..l.weight + l.weight_len()]
                .iter()
                .all(|&w| w >= 0.0)
        })
    }

    /// Zero every skip connection (used to check that they are wired).
    pub fn without_skips(&self) -> Self {
        let mut out = self.clone();
        for l in &self.layers {
            out.theta[l.skip..l.skip + l.skip_len()].fill(0.0);
        }
        out
    }

    /// Plain scalar forward pass.
    pub fn forward(&self, x: Vec2) -> f64 {
        let input = [x.x1, x.x2];
        let mut prev: Vec<f64> = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            let w = &self.theta[layer.weight..layer.weight + layer.weight_len()];
            let s = &self.theta[layer.skip..layer.skip + layer.skip_len()];
            let b = &self.theta[layer.bias..layer.bias + layer.outputs];
            for i in 0..layer.outputs {
                let mut z = b[i];
                for j in 0..layer.inputs {
                    z += w[i * layer.inputs + j] * prev[j];
                }
                for k in 0..layer.skip_cols {
                    z += s[i * layer.skip_cols + k] * input[k];
                }
                next.push(if layer.activated { softplus(z) } else { z });
            }
            std::mem::swap(&mut prev, &mut next);
        }
        prev[0]
    }

    /// Writes `<stem>.json` (architecture header) and `<stem>.bin`
    /// (little-endian f64 parameters).
    pub fn save_checkpoint(&self, json_path: &Path, bin_path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            kind: self.arch.kind,
            hidden_layers: self.arch.hidden_layers(),
            widths: self.arch.widths.clone(),
            activation: self.arch.activation,
            n_params: self.theta.len(),
        };
        let mut jf = BufWriter::new(File::create(json_path)?);
        serde_json::to_writer_pretty(&mut jf, &header)?;
        jf.write_all(b"\n")?;
        let mut bf = BufWriter::new(File::create(bin_path)?);
        for v in &self.theta {
            bf.write_all(&v.to_le_bytes())?;
        }
        bf.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(json_path: &Path, bin_path: &Path) -> Result<Self> {
        let header: CheckpointHeader =
            serde_json::from_reader(BufReader::new(File::open(json_path)?))?;
        if header.hidden_layers + 2 != header.widths.len() {
            return Err(Error::Shape(
                "checkpoint header: hidden layer count disagrees with widths".into(),
            ));
        }
        let arch = Architecture {
            kind: header.kind,
            widths: header.widths,
            activation: header.activation,
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(bin_path)?).read_to_end(&mut bytes)?;
        if bytes.len() != 8 * header.n_params {
            return Err(Error::Shape(format!(
                "checkpoint body has {} bytes, header promises {} parameters",
                bytes.len(),
                header.n_params
            )));
        }
        let theta = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_flat(arch, theta)
    }
}

/// Clamp the constrained entries of a flat vector laid out by `layers`.
pub fn clamp_constrained(layers: &[LayerLayout], theta: &mut [f64]) -> usize {
    let mut changed = 0;
    for l in layers.iter().filter(|l| l.constrained) {
        for w in &mut theta[l.weight..l.weight + l.weight_len()] {
            if *w < 0.0 {
                *w = 0.0;
                changed += 1;
            }
        }
    }
    changed
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    kind: ArchKind,
    hidden_layers: usize,
    widths: Vec<usize>,
    activation: Activation,
    n_params: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn icnn() -> NetworkParams {
        NetworkParams::init(
            Architecture::standard(ArchKind::Icnn),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap()
    }

    #[test]
    fn parameter_counts() {
        let mlp = NetworkParams::zeros(Architecture::standard(ArchKind::Mlp)).unwrap();
        assert_eq!(mlp.len(), 30 + 3 * 110 + 11);
        assert_eq!(icnn().len(), 30 + 3 * 130 + 13);
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(Architecture::new(ArchKind::Mlp, vec![2, 1]).is_err());
        assert!(Architecture::new(ArchKind::Mlp, vec![3, 4, 1]).is_err());
        assert!(Architecture::new(ArchKind::Icnn, vec![2, 4, 2]).is_err());
        assert!(
            NetworkParams::from_flat(Architecture::standard(ArchKind::Mlp), vec![0.0; 3]).is_err()
        );
    }

    #[test]
    fn layout_is_a_bijection() {
        for net in [
            icnn(),
            NetworkParams::zeros(Architecture::uniform(ArchKind::Mlp, 2, 3).unwrap()).unwrap(),
        ] {
            for i in 0..net.len() {
                let slot = net.slot(i).unwrap();
                assert_eq!(net.index_of(slot), Some(i));
            }
            assert!(net.slot(net.len()).is_none());
        }
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let net = NetworkParams::zeros(Architecture::standard(ArchKind::Mlp)).unwrap();
        assert_eq!(net.forward(Vec2::new(0.3, -4.0)), 0.0);
    }

    #[test]
    fn single_unit_icnn_is_softplus_of_x1() {
        let arch = Architecture::new(ArchKind::Icnn, vec![2, 1, 1]).unwrap();
        let mut net = NetworkParams::zeros(arch).unwrap();
        let l0 = net.layers()[0];
        let l1 = net.layers()[1];
        net.theta_mut()[l0.skip] = 1.0;
        net.theta_mut()[l1.weight] = 1.0;
        for x in [-2.0, 0.0, 1.5] {
            assert!((net.forward(Vec2::new(x, 7.0)) - softplus(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn icnn_init_is_nonnegative() {
        let net = icnn();
        assert!(net.satisfies_constraints());
        let n_constrained = (0..net.len()).filter(|&i| net.is_constrained(i)).count();
        assert_eq!(n_constrained, 3 * 100 + 10);
    }

    #[test]
    fn init_is_reproducible() {
        let arch = Architecture::standard(ArchKind::Mlp);
        let a = NetworkParams::init(arch.clone(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = NetworkParams::init(arch, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_variance_follows_fan_in() {
        let arch = Architecture::new(ArchKind::Mlp, vec![2, 100, 100, 1]).unwrap();
        let net = NetworkParams::init(arch, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let l = net.layers()[1];
        let w = &net.theta()[l.weight..l.weight + l.weight_len()];
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        assert!((var * 100.0 - 1.0).abs() < 0.2, "variance {var}");
        assert!(net.theta()[l.bias..l.bias + l.outputs]
            .iter()
            .all(|&b| b == 0.0));
    }

    #[test]
    fn clamp_touches_only_constrained_negatives() {
        let mut net = icnn();
        let l1 = net.layers()[1];
        let l0 = net.layers()[0];
        net.theta_mut()[l1.weight] = -0.3;
        net.theta_mut()[l1.weight + 1] = 0.7;
        net.theta_mut()[l0.skip] = -0.5;
        net.theta_mut()[l1.bias] = -0.25;
        assert_eq!(net.enforce_nonneg(), 1);
        assert_eq!(net.theta()[l1.weight], 0.0);
        assert_eq!(net.theta()[l1.weight + 1], 0.7);
        assert_eq!(net.theta()[l0.skip], -0.5);
        assert_eq!(net.theta()[l1.bias], -0.25);
        assert!(net.satisfies_constraints());
    }

    #[test]
    fn clamp_restores_invariant_on_random_net() {
        let mut net = icnn();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for v in net.theta_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        assert!(!net.satisfies_constraints());
        net.enforce_nonneg();
        assert!(net.satisfies_constraints());
    }

    #[test]
    fn clamp_is_noop_on_mlp() {
        let mut net = NetworkParams::init(
            Architecture::standard(ArchKind::Mlp),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let before = net.clone();
        assert_eq!(net.enforce_nonneg(), 0);
        assert_eq!(net, before);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let net = icnn();
        let (j, b) = (dir.path().join("c.json"), dir.path().join("c.bin"));
        net.save_checkpoint(&j, &b).unwrap();
        assert_eq!(std::fs::metadata(&b).unwrap().len(), 8 * net.len() as u64);
        let back = NetworkParams::load_checkpoint(&j, &b).unwrap();
        assert_eq!(back, net);
    }
}
