//! Layered networks, binary masks and masked forward evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hadamard, BoolMatrix, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    pub fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Identity => {}
            Activation::Softmax => softmax_in_place(v),
        }
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let peak = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - peak).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// A depth-L stack of dense weight matrices; `W^l` maps layer `l-1` to layer `l`
/// and has shape `d_{l-1} x d_l`. There are no bias terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredNetwork {
    dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    activations: Vec<Activation>,
}

impl LayeredNetwork {
    pub fn new(weights: Vec<DenseMatrix>, activations: Vec<Activation>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("network needs at least one layer".into()));
        }
        if weights.len() != activations.len() {
            return Err(Error::Length {
                expected: weights.len(),
                got: activations.len(),
                context: "one activation per layer",
            });
        }
        let mut dims = vec![weights[0].rows()];
        for (l, w) in weights.iter().enumerate() {
            if w.rows() != dims[l] {
                return Err(Error::Shape {
                    left: weights[l.saturating_sub(1)].shape(),
                    right: w.shape(),
                    context: "consecutive layer weights",
                });
            }
            if w.rows() == 0 || w.cols() == 0 {
                return Err(Error::Domain(format!("layer {} has an empty dimension", l + 1)));
            }
            dims.push(w.cols());
        }
        Ok(Self {
            dims,
            weights,
            activations,
        })
    }

    /// Hidden layers get `hidden`, the last layer gets `output`.
    pub fn with_activations(
        weights: Vec<DenseMatrix>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self> {
        let l = weights.len();
        let acts = (0..l)
            .map(|i| if i + 1 == l { output } else { hidden })
            .collect();
        Self::new(weights, acts)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Weights of layer `l`, 1-based as in the layer equations.
    pub fn layer(&self, l: usize) -> &DenseMatrix {
        &self.weights[l - 1]
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn total_connections(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.propagate(input, |l, i, j| self.weights[l].get(i, j))
    }

    /// Forward pass through `M^l ⊙ W^l`. The arithmetic is the same as
    /// [`forward`](Self::forward) on the zeroed copy, term for term.
    pub fn masked_forward(&self, mask: &MaskTensor, input: &[f64]) -> Result<Vec<f64>> {
        mask.check_matches(self)?;
        self.propagate(input, |l, i, j| {
            if mask.masks[l].get(i, j) {
                self.weights[l].get(i, j)
            } else {
                0.0
            }
        })
    }

    fn propagate(&self, input: &[f64], weight: impl Fn(usize, usize, usize) -> f64) -> Result<Vec<f64>> {
        if input.len() != self.dims[0] {
            return Err(Error::Length {
                expected: self.dims[0],
                got: input.len(),
                context: "network input",
            });
        }
        let mut phi = input.to_vec();
        for (l, act) in self.activations.iter().enumerate() {
            let width = self.dims[l + 1];
            let mut next = vec![0.0; width];
            for (i, &x) in phi.iter().enumerate() {
                for (j, out) in next.iter_mut().enumerate() {
                    *out += weight(l, i, j) * x;
                }
            }
            act.apply(&mut next);
            phi = next;
        }
        Ok(phi)
    }

    pub fn apply_mask(&self, mask: &MaskTensor) -> Result<LayeredNetwork> {
        mask.check_matches(self)?;
        let weights = self
            .weights
            .iter()
            .zip(&mask.masks)
            .map(|(w, m)| hadamard(w, m))
            .collect::<Result<Vec<_>>>()?;
        Ok(LayeredNetwork {
            dims: self.dims.clone(),
            weights,
            activations: self.activations.clone(),
        })
    }

    pub fn budget(&self, rate: f64) -> Result<PruningBudget> {
        PruningBudget::new(self.total_connections(), rate)
    }
}

/// Binary masks `M^1..M^L`, one per weight matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskTensor {
    masks: Vec<BoolMatrix>,
}

impl MaskTensor {
    /// Consecutive masks must chain (`cols` of one equal `rows` of the next).
    pub fn new(masks: Vec<BoolMatrix>) -> Result<Self> {
        for pair in masks.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::Shape {
                    left: pair[0].shape(),
                    right: pair[1].shape(),
                    context: "consecutive mask layers",
                });
            }
        }
        Ok(Self { masks })
    }

    pub fn ones_like(net: &LayeredNetwork) -> Self {
        Self {
            masks: net
                .weights
                .iter()
                .map(|w| BoolMatrix::ones(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn zeros_like(net: &LayeredNetwork) -> Self {
        Self::zeros_for_dims(net.dims())
    }

    pub fn zeros_for_dims(dims: &[usize]) -> Self {
        Self {
            masks: dims.windows(2).map(|w| BoolMatrix::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.masks.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.masks.first().map(|m| vec![m.rows()]).unwrap_or_default();
        dims.extend(self.masks.iter().map(BoolMatrix::cols));
        dims
    }

    /// Mask of layer `l`, 1-based.
    pub fn layer(&self, l: usize) -> &BoolMatrix {
        &self.masks[l - 1]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut BoolMatrix {
        &mut self.masks[l - 1]
    }

    pub fn masks(&self) -> &[BoolMatrix] {
        &self.masks
    }

    pub fn kept_count(&self) -> usize {
        self.masks.iter().map(BoolMatrix::count_ones).sum()
    }

    pub fn is_subset_of(&self, other: &MaskTensor) -> bool {
        self.masks.len() == other.masks.len()
            && self.masks.iter().zip(&other.masks).all(|(a, b)| a.is_subset_of(b))
    }

    pub fn check_matches(&self, net: &LayeredNetwork) -> Result<()> {
        if self.masks.len() != net.weights.len() {
            return Err(Error::Length {
                expected: net.weights.len(),
                got: self.masks.len(),
                context: "mask layers",
            });
        }
        for (m, w) in self.masks.iter().zip(&net.weights) {
            if m.shape() != w.shape() {
                return Err(Error::Shape {
                    left: w.shape(),
                    right: m.shape(),
                    context: "mask vs weights",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruningBudget {
    pub total_connections: usize,
    pub rate: f64,
    pub max_kept: usize,
}

impl PruningBudget {
    /// `max_kept = floor((1 - rate) * total)`.
    pub fn new(total_connections: usize, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Domain(format!("pruning rate {rate} outside [0, 1)")));
        }
        // absorbs representation error in (1 - rate), e.g. 1 - 0.9
        let exact = (1.0 - rate) * total_connections as f64;
        let max_kept = ((exact + 1e-7).floor() as usize).min(total_connections);
        Ok(Self {
            total_connections,
            rate,
            max_kept,
        })
    }
}
