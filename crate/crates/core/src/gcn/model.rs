//! Multi-head GCN: `H = relu(sum_k A^k U^T W^k)`, flattened row-major and
//! fed to a dense softmax head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::skeleton::ChunkedGraphSignal;
use crate::linalg::{matmul, row_normalize, BoolMatrix, DenseMatrix};
use crate::network::{softmax_in_place, Activation, LayeredNetwork, MaskTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnHyper {
    /// K
    pub heads: usize,
    /// C
    pub filters: usize,
    /// n
    pub nodes: usize,
    /// s = 3M
    pub signal: usize,
    pub classes: usize,
}

impl GcnHyper {
    pub fn desk_default() -> Self {
        Self {
            heads: 4,
            filters: 16,
            nodes: 15,
            signal: 24,
            classes: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            heads,
            filters,
            nodes,
            signal,
            classes,
        } = *self;
        if heads == 0 || filters == 0 || nodes == 0 || signal == 0 || classes == 0 {
            return Err(Error::Domain(format!("GCN sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn attention_params(&self) -> usize {
        self.heads * self.nodes * self.nodes
    }

    pub fn filter_params(&self) -> usize {
        self.heads * self.signal * self.filters
    }

    pub fn head_params(&self) -> usize {
        self.nodes * self.filters * self.classes
    }

    pub fn param_count(&self) -> usize {
        self.attention_params() + self.filter_params() + self.head_params()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    hyper: GcnHyper,
    attention: Vec<DenseMatrix>,
    filters: Vec<DenseMatrix>,
    head: DenseMatrix,
}

/// Per-sample intermediates kept for the backward pass.
struct Trace {
    aggregated: Vec<DenseMatrix>,
    pre: DenseMatrix,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

impl GcnModel {
    pub fn new(
        hyper: GcnHyper,
        attention: Vec<DenseMatrix>,
        filters: Vec<DenseMatrix>,
        head: DenseMatrix,
    ) -> Result<Self> {
        hyper.validate()?;
        let check = |m: &DenseMatrix, shape: (usize, usize), context: &'static str| {
            if m.shape() == shape {
                Ok(())
            } else {
                Err(Error::Shape {
                    left: m.shape(),
                    right: shape,
                    context,
                })
            }
        };
        if attention.len() != hyper.heads || filters.len() != hyper.heads {
            return Err(Error::Length {
                expected: hyper.heads,
                got: attention.len().min(filters.len()),
                context: "one attention and one filter matrix per head",
            });
        }
        for a in &attention {
            check(a, (hyper.nodes, hyper.nodes), "attention matrix")?;
        }
        for w in &filters {
            check(w, (hyper.signal, hyper.filters), "filter matrix")?;
        }
        check(&head, (hyper.nodes * hyper.filters, hyper.classes), "head matrix")?;
        Ok(Self {
            hyper,
            attention,
            filters,
            head,
        })
    }

    pub fn zeros(hyper: GcnHyper) -> Result<Self> {
        Self::new(
            hyper,
            vec![DenseMatrix::zeros(hyper.nodes, hyper.nodes); hyper.heads],
            vec![DenseMatrix::zeros(hyper.signal, hyper.filters); hyper.heads],
            DenseMatrix::zeros(hyper.nodes * hyper.filters, hyper.classes),
        )
    }

    /// Random initialization. Attention heads start near the row-normalized
    /// adjacency when one is given; filters and head use Glorot-uniform.
    pub fn init(hyper: GcnHyper, adjacency: Option<&BoolMatrix>, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = hyper.nodes;
        let base = match adjacency {
            Some(adj) => {
                if adj.shape() != (n, n) {
                    return Err(Error::Shape {
                        left: adj.shape(),
                        right: (n, n),
                        context: "adjacency vs GCN nodes",
                    });
                }
                let with_loops = DenseMatrix::from_fn(n, n, |i, j| f64::from(u8::from(adj.get(i, j) || i == j)));
                row_normalize(&with_loops)?
            }
            None => DenseMatrix::identity(n),
        };
        let jitter = Normal::new(0.0, 0.1).expect("valid normal");
        let attention = (0..hyper.heads)
            .map(|_| {
                let values = base.values().iter().map(|v| v + jitter.sample(&mut rng)).collect();
                DenseMatrix::new(n, n, values)
            })
            .collect::<Result<Vec<_>>>()?;
        let glorot = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let values = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
            DenseMatrix::new(rows, cols, values).expect("finite values")
        };
        let filters = (0..hyper.heads)
            .map(|_| glorot(&mut rng, hyper.signal, hyper.filters))
            .collect();
        let head = glorot(&mut rng, n * hyper.filters, hyper.classes);
        Self::new(hyper, attention, filters, head)
    }

    pub fn hyper(&self) -> &GcnHyper {
        &self.hyper
    }

    pub fn attention(&self) -> &[DenseMatrix] {
        &self.attention
    }

    pub fn filters(&self) -> &[DenseMatrix] {
        &self.filters
    }

    pub fn head(&self) -> &DenseMatrix {
        &self.head
    }

    /// Parameter blocks in flat order: attention heads, filter heads, dense head.
    pub fn blocks(&self) -> Vec<&DenseMatrix> {
        self.attention
            .iter()
            .chain(&self.filters)
            .chain(std::iter::once(&self.head))
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.attention
            .iter_mut()
            .chain(self.filters.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.values().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.hyper.param_count() {
            return Err(Error::Length {
                expected: self.hyper.param_count(),
                got: values.len(),
                context: "flat GCN parameters",
            });
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let len = block.values().len();
            block.values_mut().copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Zeroes every parameter the mask drops.
    pub fn apply_mask(&mut self, mask: &GcnMask) -> Result<()> {
        mask.check_hyper(&self.hyper)?;
        for (block, bits) in self.blocks_mut().into_iter().zip(mask.blocks()) {
            for (v, &keep) in block.values_mut().iter_mut().zip(bits.bits()) {
                if !keep {
                    *v = 0.0;
                }
            }
        }
        Ok(())
    }

    fn check_signal(&self, u: &ChunkedGraphSignal) -> Result<()> {
        let want = (self.hyper.signal, self.hyper.nodes);
        if u.u.shape() != want {
            return Err(Error::Shape {
                left: u.u.shape(),
                right: want,
                context: "graph signal vs GCN",
            });
        }
        Ok(())
    }

    fn trace(&self, u: &ChunkedGraphSignal) -> Result<Trace> {
        self.check_signal(u)?;
        let ut = u.u.transpose();
        let mut pre = DenseMatrix::zeros(self.hyper.nodes, self.hyper.filters);
        let mut aggregated = Vec::with_capacity(self.hyper.heads);
        for (a, w) in self.attention.iter().zip(&self.filters) {
            let p = matmul(a, &ut)?;
            let q = matmul(&p, w)?;
            for (z, v) in pre.values_mut().iter_mut().zip(q.values()) {
                *z += v;
            }
            aggregated.push(p);
        }
        let hidden: Vec<f64> = pre.values().iter().map(|&z| z.max(0.0)).collect();
        let mut probs = vec![0.0; self.hyper.classes];
        for (r, &h) in hidden.iter().enumerate() {
            if h != 0.0 {
                for (c, p) in probs.iter_mut().enumerate() {
                    *p += h * self.head.get(r, c);
                }
            }
        }
        softmax_in_place(&mut probs);
        Ok(Trace {
            aggregated,
            pre,
            hidden,
            probs,
        })
    }

    /// Class probabilities for one graph signal.
    pub fn forward(&self, u: &ChunkedGraphSignal) -> Result<Vec<f64>> {
        Ok(self.trace(u)?.probs)
    }

    /// Cross-entropy loss for `label` and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, u: &ChunkedGraphSignal, label: usize) -> Result<(f64, GcnModel)> {
        if label >= self.hyper.classes {
            return Err(Error::Index(format!("label {label} outside {} classes", self.hyper.classes)));
        }
        let t = self.trace(u)?;
        let loss = cross_entropy(&t.probs, label);
        let mut dlogits = t.probs.clone();
        dlogits[label] -= 1.0;

        let rows = self.head.rows();
        let classes = self.hyper.classes;
        let dhead = DenseMatrix::from_fn(rows, classes, |r, c| t.hidden[r] * dlogits[c]);
        let dpre = DenseMatrix::from_fn(self.hyper.nodes, self.hyper.filters, |u, f| {
            if t.pre.get(u, f) <= 0.0 {
                return 0.0;
            }
            let r = u * self.hyper.filters + f;
            (0..classes).map(|c| self.head.get(r, c) * dlogits[c]).sum()
        });
        let mut dattention = Vec::with_capacity(self.hyper.heads);
        let mut dfilters = Vec::with_capacity(self.hyper.heads);
        for (p, w) in t.aggregated.iter().zip(&self.filters) {
            dfilters.push(matmul(&p.transpose(), &dpre)?);
            // dZ (U^T W)^T = dZ W^T U
            let wt_u = matmul(&w.transpose(), &u.u)?;
            dattention.push(matmul(&dpre, &wt_u)?);
        }
        let grad = GcnModel {
            hyper: self.hyper,
            attention: dattention,
            filters: dfilters,
            head: dhead,
        };
        Ok((loss, grad))
    }

    pub fn predict(&self, u: &ChunkedGraphSignal) -> Result<usize> {
        let probs = self.forward(u)?;
        Ok(argmax(&probs))
    }

    /// Exact layered view; see [`GcnIndexMap`] for the neuron layout.
    pub fn as_layered(&self) -> (LayeredNetwork, GcnIndexMap) {
        let map = GcnIndexMap { hyper: self.hyper };
        let GcnHyper {
            heads,
            filters,
            nodes,
            signal,
            ..
        } = self.hyper;
        let mut agg = DenseMatrix::zeros(signal * nodes, heads * nodes * signal);
        for k in 0..heads {
            for u in 0..nodes {
                for i in 0..nodes {
                    let a = self.attention[k].get(u, i);
                    for c in 0..signal {
                        agg.set(map.input(c, i), map.aggregate(k, u, c), a);
                    }
                }
            }
        }
        let mut conv = DenseMatrix::zeros(heads * nodes * signal, nodes * filters);
        for k in 0..heads {
            for u in 0..nodes {
                for c in 0..signal {
                    for f in 0..filters {
                        conv.set(map.aggregate(k, u, c), map.hidden(u, f), self.filters[k].get(c, f));
                    }
                }
            }
        }
        let net = LayeredNetwork::new(
            vec![agg, conv, self.head.clone()],
            vec![Activation::Identity, Activation::Relu, Activation::Softmax],
        )
        .expect("unrolled shapes chain");
        (net, map)
    }
}

pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Identifies one GCN parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamId {
    /// `A^head(row, col)`
    Attention { head: usize, row: usize, col: usize },
    /// `W^head(row, col)`
    Filter { head: usize, row: usize, col: usize },
    /// dense head entry
    Dense { row: usize, col: usize },
}

/// Ties layered connections of [`GcnModel::as_layered`] to GCN parameters.
///
/// Neuron layout: input `c * n + i` holds `U(c, i)`; aggregation neuron
/// `(k * n + u) * s + c` holds `(A^k U^T)(u, c)`; hidden neuron `u * C + f`
/// holds `H(u, f)`. Connections outside this tying are structural zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcnIndexMap {
    hyper: GcnHyper,
}

impl GcnIndexMap {
    pub fn new(hyper: GcnHyper) -> Self {
        Self { hyper }
    }

    pub fn hyper(&self) -> &GcnHyper {
        &self.hyper
    }

    pub fn input(&self, c: usize, i: usize) -> usize {
        c * self.hyper.nodes + i
    }

    pub fn aggregate(&self, k: usize, u: usize, c: usize) -> usize {
        (k * self.hyper.nodes + u) * self.hyper.signal + c
    }

    pub fn hidden(&self, u: usize, f: usize) -> usize {
        u * self.hyper.filters + f
    }

    /// `(k, u, c)` of an aggregation neuron.
    pub fn split_aggregate(&self, j: usize) -> (usize, usize, usize) {
        let s = self.hyper.signal;
        let n = self.hyper.nodes;
        (j / (n * s), (j / s) % n, j % s)
    }

    /// Input reshaping that [`GcnModel::as_layered`] expects: `U` row-major.
    pub fn layered_input(&self, u: &ChunkedGraphSignal) -> Vec<f64> {
        u.u.values().to_vec()
    }

    pub fn param_count(&self) -> usize {
        self.hyper.param_count()
    }

    /// Parameter behind layered connection `(l, i, j)`; `None` for structural zeros.
    pub fn param_of(&self, l: usize, i: usize, j: usize) -> Option<ParamId> {
        let h = &self.hyper;
        match l {
            1 => {
                let (c, col) = (i / h.nodes, i % h.nodes);
                let (k, row, c2) = self.split_aggregate(j);
                (c == c2 && c < h.signal && k < h.heads).then_some(ParamId::Attention { head: k, row, col })
            }
            2 => {
                let (k, u, c) = self.split_aggregate(i);
                let (u2, f) = (j / h.filters, j % h.filters);
                (u == u2 && k < h.heads && u2 < h.nodes).then_some(ParamId::Filter { head: k, row: c, col: f })
            }
            3 => (i < h.nodes * h.filters && j < h.classes).then_some(ParamId::Dense { row: i, col: j }),
            _ => None,
        }
    }

    /// Every layered connection tied to `p`.
    pub fn connections_of(&self, p: ParamId) -> Vec<(usize, usize, usize)> {
        let h = &self.hyper;
        match p {
            ParamId::Attention { head, row, col } => (0..h.signal)
                .map(|c| (1, self.input(c, col), self.aggregate(head, row, c)))
                .collect(),
            ParamId::Filter { head, row, col } => (0..h.nodes)
                .map(|u| (2, self.aggregate(head, u, row), self.hidden(u, col)))
                .collect(),
            ParamId::Dense { row, col } => vec![(3, row, col)],
        }
    }

    pub fn flat_index(&self, p: ParamId) -> usize {
        let h = &self.hyper;
        match p {
            ParamId::Attention { head, row, col } => (head * h.nodes + row) * h.nodes + col,
            ParamId::Filter { head, row, col } => h.attention_params() + (head * h.signal + row) * h.filters + col,
            ParamId::Dense { row, col } => h.attention_params() + h.filter_params() + row * h.classes + col,
        }
    }

    pub fn param_at(&self, idx: usize) -> ParamId {
        let h = &self.hyper;
        let (na, nf) = (h.attention_params(), h.filter_params());
        if idx < na {
            let (head, rest) = (idx / (h.nodes * h.nodes), idx % (h.nodes * h.nodes));
            ParamId::Attention {
                head,
                row: rest / h.nodes,
                col: rest % h.nodes,
            }
        } else if idx < na + nf {
            let idx = idx - na;
            let (head, rest) = (idx / (h.signal * h.filters), idx % (h.signal * h.filters));
            ParamId::Filter {
                head,
                row: rest / h.filters,
                col: rest % h.filters,
            }
        } else {
            let idx = idx - na - nf;
            ParamId::Dense {
                row: idx / h.classes,
                col: idx % h.classes,
            }
        }
    }

    /// Layered mask keeping every connection tied to a kept parameter.
    pub fn to_layered(&self, mask: &GcnMask) -> MaskTensor {
        let h = &self.hyper;
        let dims = [h.signal * h.nodes, h.heads * h.nodes * h.signal, h.nodes * h.filters, h.classes];
        let mut out = MaskTensor::zeros_for_dims(&dims);
        for idx in 0..self.param_count() {
            if mask.get_flat(idx) {
                for (l, i, j) in self.connections_of(self.param_at(idx)) {
                    out.layer_mut(l).set(i, j, true);
                }
            }
        }
        out
    }

    /// A parameter is kept when any connection tied to it is kept; structural
    /// zeros are ignored.
    pub fn from_layered(&self, mask: &MaskTensor) -> Result<GcnMask> {
        let h = &self.hyper;
        let dims = vec![h.signal * h.nodes, h.heads * h.nodes * h.signal, h.nodes * h.filters, h.classes];
        if mask.dims() != dims {
            return Err(Error::Shape {
                left: (mask.depth(), mask.dims()[0]),
                right: (3, dims[0]),
                context: "layered mask vs GCN layout",
            });
        }
        let mut out = GcnMask::zeros(*h);
        for idx in 0..self.param_count() {
            let kept = self
                .connections_of(self.param_at(idx))
                .into_iter()
                .any(|(l, i, j)| mask.layer(l).get(i, j));
            out.set_flat(idx, kept);
        }
        Ok(out)
    }
}

/// Keep/drop bit per GCN parameter, laid out like [`GcnModel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcnMask {
    hyper: GcnHyper,
    attention: Vec<BoolMatrix>,
    filters: Vec<BoolMatrix>,
    head: BoolMatrix,
}

impl GcnMask {
    fn filled(hyper: GcnHyper, fill: fn(usize, usize) -> BoolMatrix) -> Self {
        Self {
            hyper,
            attention: (0..hyper.heads).map(|_| fill(hyper.nodes, hyper.nodes)).collect(),
            filters: (0..hyper.heads).map(|_| fill(hyper.signal, hyper.filters)).collect(),
            head: fill(hyper.nodes * hyper.filters, hyper.classes),
        }
    }

    pub fn ones(hyper: GcnHyper) -> Self {
        Self::filled(hyper, BoolMatrix::ones)
    }

    pub fn zeros(hyper: GcnHyper) -> Self {
        Self::filled(hyper, BoolMatrix::zeros)
    }

    pub fn from_flat(hyper: GcnHyper, bits: &[bool]) -> Result<Self> {
        if bits.len() != hyper.param_count() {
            return Err(Error::Length {
                expected: hyper.param_count(),
                got: bits.len(),
                context: "flat GCN mask",
            });
        }
        let mut mask = Self::zeros(hyper);
        for (idx, &b) in bits.iter().enumerate() {
            mask.set_flat(idx, b);
        }
        Ok(mask)
    }

    pub fn hyper(&self) -> &GcnHyper {
        &self.hyper
    }

    pub fn attention(&self) -> &[BoolMatrix] {
        &self.attention
    }

    pub fn filters(&self) -> &[BoolMatrix] {
        &self.filters
    }

    pub fn head(&self) -> &BoolMatrix {
        &self.head
    }

    pub fn blocks(&self) -> Vec<&BoolMatrix> {
        self.attention
            .iter()
            .chain(&self.filters)
            .chain(std::iter::once(&self.head))
            .collect()
    }

    pub fn to_flat(&self) -> Vec<bool> {
        self.blocks().iter().flat_map(|b| b.bits().iter().copied()).collect()
    }

    fn locate(&self, idx: usize) -> (usize, usize, usize) {
        let h = &self.hyper;
        let (na, nf) = (h.attention_params(), h.filter_params());
        let block_a = h.nodes * h.nodes;
        let block_f = h.signal * h.filters;
        if idx < na {
            let rest = idx % block_a;
            (idx / block_a, rest / h.nodes, rest % h.nodes)
        } else if idx < na + nf {
            let idx = idx - na;
            let rest = idx % block_f;
            (h.heads + idx / block_f, rest / h.filters, rest % h.filters)
        } else {
            let idx = idx - na - nf;
            (2 * h.heads, idx / h.classes, idx % h.classes)
        }
    }

    fn block_mut(&mut self, b: usize) -> &mut BoolMatrix {
        let k = self.hyper.heads;
        if b < k {
            &mut self.attention[b]
        } else if b < 2 * k {
            &mut self.filters[b - k]
        } else {
            &mut self.head
        }
    }

    pub fn get_flat(&self, idx: usize) -> bool {
        let (b, r, c) = self.locate(idx);
        self.blocks()[b].get(r, c)
    }

    pub fn set_flat(&mut self, idx: usize, keep: bool) {
        let (b, r, c) = self.locate(idx);
        self.block_mut(b).set(r, c, keep);
    }

    pub fn get(&self, p: ParamId) -> bool {
        match p {
            ParamId::Attention { head, row, col } => self.attention[head].get(row, col),
            ParamId::Filter { head, row, col } => self.filters[head].get(row, col),
            ParamId::Dense { row, col } => self.head.get(row, col),
        }
    }

    /// Sets the bit and reports whether it was newly set.
    pub fn set(&mut self, p: ParamId, keep: bool) -> bool {
        let slot = match p {
            ParamId::Attention { head, row, col } => (&mut self.attention[head], row, col),
            ParamId::Filter { head, row, col } => (&mut self.filters[head], row, col),
            ParamId::Dense { row, col } => (&mut self.head, row, col),
        };
        let was = slot.0.get(slot.1, slot.2);
        slot.0.set(slot.1, slot.2, keep);
        keep && !was
    }

    pub fn kept_count(&self) -> usize {
        self.blocks().iter().map(|b| b.count_ones()).sum()
    }

    pub fn is_subset_of(&self, other: &GcnMask) -> bool {
        self.hyper == other.hyper && self.blocks().iter().zip(other.blocks()).all(|(a, b)| a.is_subset_of(b))
    }

    pub fn check_hyper(&self, hyper: &GcnHyper) -> Result<()> {
        if &self.hyper != hyper {
            return Err(Error::Domain(format!(
                "mask built for {:?}, model is {:?}",
                self.hyper, hyper
            )));
        }
        Ok(())
    }

    /// Mask text format with `2K + 1` blocks: attention heads, filter heads, dense head.
    pub fn to_text(&self) -> String {
        let blocks: Vec<BoolMatrix> = self.blocks().into_iter().cloned().collect();
        crate::textfmt::write_bool_blocks(&blocks)
    }

    pub fn from_text(hyper: GcnHyper, text: &str) -> Result<Self> {
        let blocks = crate::textfmt::read_bool_blocks(text)?;
        if blocks.len() != 2 * hyper.heads + 1 {
            return Err(Error::Length {
                expected: 2 * hyper.heads + 1,
                got: blocks.len(),
                context: "GCN mask blocks",
            });
        }
        let mut mask = Self::zeros(hyper);
        for (b, block) in blocks.into_iter().enumerate() {
            let slot = mask.block_mut(b);
            if slot.shape() != block.shape() {
                return Err(Error::Shape {
                    left: block.shape(),
                    right: slot.shape(),
                    context: "GCN mask block",
                });
            }
            *slot = block;
        }
        Ok(mask)
    }
}
