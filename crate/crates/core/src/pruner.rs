//! Mask construction: standard magnitude pruning, its sampled variant, and
//! topologically consistent chain selection.
//!
//! Chain selection builds complete input-to-output chains one at a time. Each
//! chain starts at an input neuron and is extended layer by layer, picking the
//! next neuron by the best (or a magnitude-proportional random) score among
//! the forward neighbors. The kept-connection counter only grows when a chain
//! sets a bit that was still 0, and selection stops once the counter reaches
//! the budget, so the last chain can overshoot by at most `L - 1` connections.
//!
//! Deterministic steps prefer connections that are not selected yet; when a
//! neuron has none left, they prefer targets that still lead to unselected
//! connections further down. Sampled steps follow the plain magnitude-weighted
//! walk, and fall back to the same preference for one chain after a chain that
//! added nothing.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BoolMatrix;
use crate::network::{LayeredNetwork, MaskTensor, PruningBudget};
use crate::surrogate::{build_table, validate_alpha, SurrogateTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Scoring {
    Local,
    Global { alpha: f64 },
}

impl Scoring {
    pub fn name(&self) -> &'static str {
        match self {
            Scoring::Local => "local",
            Scoring::Global { .. } => "global",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Scoring::Local => None,
            Scoring::Global { alpha } => Some(alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub rate: f64,
    pub tc: bool,
    pub stochastic: bool,
    pub scoring: Scoring,
    pub seed: u64,
}

impl PruneSpec {
    pub fn standard(rate: f64) -> Self {
        Self {
            rate,
            tc: false,
            stochastic: false,
            scoring: Scoring::Local,
            seed: 0,
        }
    }

    pub fn tc(rate: f64, stochastic: bool, scoring: Scoring, seed: u64) -> Self {
        Self {
            rate,
            tc: true,
            stochastic,
            scoring,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Domain(format!("pruning rate {} outside [0, 1)", self.rate)));
        }
        if let Scoring::Global { alpha } = self.scoring {
            validate_alpha(alpha)?;
        }
        Ok(())
    }
}

/// One chain: `(layer, from_neuron, to_neuron)` for layers `1..=L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub steps: Vec<(usize, usize, usize)>,
    pub newly_added: usize,
}

impl ChainTrace {
    pub fn is_connected(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].2 == w[1].1 && w[1].0 == w[0].0 + 1)
            && self.steps.first().is_none_or(|s| s.0 == 1)
    }
}

/// Keeps the `k` largest magnitudes; equal magnitudes favor the lower index.
pub fn magnitude_top_k(magnitudes: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..magnitudes.len()).collect();
    order.sort_by(|&a, &b| {
        magnitudes[b]
            .partial_cmp(&magnitudes[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; magnitudes.len()];
    for &idx in order.iter().take(k) {
        keep[idx] = true;
    }
    keep
}

/// Draws `k` indices without replacement with probability proportional to
/// magnitude (exponential-key method). Zero magnitudes are only drawn once
/// every positive one is taken.
pub fn magnitude_sample(magnitudes: &[f64], k: usize, rng: &mut impl Rng) -> Result<Vec<bool>> {
    let n = magnitudes.len();
    if k >= n {
        return Ok(vec![true; n]);
    }
    if magnitudes.iter().all(|&m| m == 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    // (has positive weight, key) sorted descending
    let mut keys: Vec<(bool, f64, usize)> = magnitudes
        .iter()
        .enumerate()
        .map(|(idx, &w)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            if w > 0.0 {
                (true, u.ln() / w, idx)
            } else {
                (false, u, idx)
            }
        })
        .collect();
    keys.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
            .then(a.2.cmp(&b.2))
    });
    let mut keep = vec![false; n];
    for &(_, _, idx) in keys.iter().take(k) {
        keep[idx] = true;
    }
    Ok(keep)
}

fn flat_magnitudes(net: &LayeredNetwork) -> Vec<f64> {
    net.weights()
        .iter()
        .flat_map(|w| w.values().iter().map(|v| v.abs()))
        .collect()
}

fn unflatten(net: &LayeredNetwork, keep: &[bool]) -> MaskTensor {
    let mut offset = 0;
    let masks = net
        .weights()
        .iter()
        .map(|w| {
            let len = w.rows() * w.cols();
            let m = BoolMatrix::new(w.rows(), w.cols(), keep[offset..offset + len].to_vec())
                .expect("sizes agree");
            offset += len;
            m
        })
        .collect();
    MaskTensor::new(masks).expect("network shapes chain")
}

/// Keeps the globally largest `|w|`; ties go to the lowest `(layer, row, col)`.
pub fn standard_mp(net: &LayeredNetwork, rate: f64) -> Result<MaskTensor> {
    let budget = net.budget(rate)?;
    Ok(unflatten(net, &magnitude_top_k(&flat_magnitudes(net), budget.max_kept)))
}

/// Samples the budget without replacement, proportionally to `|w|`.
pub fn stochastic_mp(net: &LayeredNetwork, rate: f64, seed: u64) -> Result<MaskTensor> {
    let budget = net.budget(rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(unflatten(
        net,
        &magnitude_sample(&flat_magnitudes(net), budget.max_kept, &mut rng)?,
    ))
}

/// Dispatches on `spec.tc` / `spec.stochastic`.
pub fn prune(net: &LayeredNetwork, spec: &PruneSpec) -> Result<MaskTensor> {
    spec.validate()?;
    match (spec.tc, spec.stochastic) {
        (false, false) => standard_mp(net, spec.rate),
        (false, true) => stochastic_mp(net, spec.rate, spec.seed),
        (true, _) => tc_mp(net, spec),
    }
}

/// Start neurons for successive chains.
#[derive(Debug, Clone)]
pub struct StartSelector {
    inputs: usize,
    stochastic: bool,
}

impl StartSelector {
    pub fn new(inputs: usize, stochastic: bool) -> Self {
        Self { inputs, stochastic }
    }

    /// Round-robin when deterministic, uniform when stochastic.
    pub fn select(&self, sweep_index: usize, rng: &mut impl Rng) -> usize {
        if self.stochastic {
            rng.gen_range(0..self.inputs)
        } else {
            sweep_index % self.inputs
        }
    }
}

pub fn select_start(net: &LayeredNetwork, spec: &PruneSpec, sweep_index: usize, rng: &mut impl Rng) -> usize {
    StartSelector::new(net.dims()[0], spec.stochastic).select(sweep_index, rng)
}

/// A layered connection graph that chains can be grown on.
///
/// Layers are 1-based; `neighbors(l, i)` lists the neurons of layer `l`
/// reachable from neuron `i` of layer `l - 1`.
pub trait ChainGraph {
    fn depth(&self) -> usize;
    fn input_width(&self) -> usize;
    fn neighbors(&self, l: usize, i: usize) -> Vec<usize>;
    /// Nonnegative; only compared within one layer.
    fn score(&self, l: usize, i: usize, j: usize) -> f64;
    fn is_selected(&self, l: usize, i: usize, j: usize) -> bool;
    /// Marks the connection kept and returns how many budget units became newly kept.
    fn select(&mut self, l: usize, i: usize, j: usize) -> usize;
    /// Whether some unselected connection is reachable forward from neuron `j` of layer `l`.
    fn downstream_capacity(&mut self, l: usize, j: usize) -> bool;
    fn saturated(&self) -> bool;
}

fn argmax_lowest(candidates: &[usize], score: impl Fn(usize) -> f64) -> usize {
    let mut best = candidates[0];
    let mut best_score = score(best);
    for &j in &candidates[1..] {
        let s = score(j);
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    best
}

fn sample_proportional(candidates: &[usize], score: impl Fn(usize) -> f64, rng: &mut impl Rng) -> usize {
    let weights: Vec<f64> = candidates.iter().map(|&j| score(j)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return candidates[rng.gen_range(0..candidates.len())];
    }
    let mut target = rng.gen::<f64>() * total;
    for (&j, &w) in candidates.iter().zip(&weights) {
        if target < w {
            return j;
        }
        target -= w;
    }
    // rounding left us past the end: last positive weight
    *candidates
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, &w)| w > 0.0)
        .map(|(j, _)| j)
        .unwrap()
}

fn preferred_candidates<G: ChainGraph>(g: &mut G, l: usize, i: usize, all: &[usize]) -> Vec<usize> {
    let fresh: Vec<usize> = all.iter().copied().filter(|&j| !g.is_selected(l, i, j)).collect();
    if !fresh.is_empty() {
        return fresh;
    }
    if l < g.depth() {
        let open: Vec<usize> = all.iter().copied().filter(|&j| g.downstream_capacity(l, j)).collect();
        if !open.is_empty() {
            return open;
        }
    }
    all.to_vec()
}

/// Grows chains until `max_kept` units are kept.
pub fn grow_chains<G: ChainGraph>(
    g: &mut G,
    max_kept: usize,
    stochastic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ChainTrace>> {
    let depth = g.depth();
    if max_kept < depth {
        return Err(Error::BudgetTooSmall {
            max_kept,
            layers: depth,
        });
    }
    let starts = StartSelector::new(g.input_width(), stochastic);
    let stall_limit = 64 * g.input_width() + 1024;
    let mut traces = Vec::new();
    let mut nc = 0;
    let mut idle = 0;
    let mut sweep = 0;
    while nc < max_kept {
        if g.saturated() {
            break;
        }
        let prefer_fresh = !stochastic || idle > 0;
        let mut i = starts.select(sweep, rng);
        sweep += 1;
        let mut steps = Vec::with_capacity(depth);
        let mut added = 0;
        for l in 1..=depth {
            let all = g.neighbors(l, i);
            let candidates = if prefer_fresh {
                preferred_candidates(g, l, i, &all)
            } else {
                all
            };
            let j = if stochastic {
                sample_proportional(&candidates, |j| g.score(l, i, j), rng)
            } else {
                argmax_lowest(&candidates, |j| g.score(l, i, j))
            };
            added += g.select(l, i, j);
            steps.push((l, i, j));
            i = j;
        }
        nc += added;
        idle = if added == 0 { idle + 1 } else { 0 };
        traces.push(ChainTrace {
            steps,
            newly_added: added,
        });
        if idle > stall_limit {
            return Err(Error::Saturated {
                achieved: nc,
                target: max_kept,
            });
        }
    }
    Ok(traces)
}

enum Scorer {
    Local,
    Global(SurrogateTable),
}

struct DenseChains<'a> {
    net: &'a LayeredNetwork,
    scorer: Scorer,
    mask: MaskTensor,
    row_kept: Vec<Vec<usize>>,
    layer_kept: Vec<usize>,
}

impl<'a> DenseChains<'a> {
    fn new(net: &'a LayeredNetwork, scoring: Scoring) -> Result<Self> {
        let scorer = match scoring {
            Scoring::Local => Scorer::Local,
            Scoring::Global { alpha } => Scorer::Global(build_table(net, alpha)?),
        };
        let dims = net.dims();
        Ok(Self {
            net,
            scorer,
            mask: MaskTensor::zeros_like(net),
            row_kept: dims[..dims.len() - 1].iter().map(|&d| vec![0; d]).collect(),
            layer_kept: vec![0; net.depth()],
        })
    }

    fn layer_size(&self, l: usize) -> usize {
        self.net.dims()[l - 1] * self.net.dims()[l]
    }
}

impl ChainGraph for DenseChains<'_> {
    fn depth(&self) -> usize {
        self.net.depth()
    }

    fn input_width(&self) -> usize {
        self.net.dims()[0]
    }

    fn neighbors(&self, l: usize, _i: usize) -> Vec<usize> {
        (0..self.net.dims()[l]).collect()
    }

    fn score(&self, l: usize, i: usize, j: usize) -> f64 {
        match &self.scorer {
            Scorer::Local => self.net.layer(l).get(i, j).abs(),
            Scorer::Global(t) => t.relative_edge_score(self.net, l, i, j),
        }
    }

    fn is_selected(&self, l: usize, i: usize, j: usize) -> bool {
        self.mask.layer(l).get(i, j)
    }

    fn select(&mut self, l: usize, i: usize, j: usize) -> usize {
        if self.mask.layer(l).get(i, j) {
            return 0;
        }
        self.mask.layer_mut(l).set(i, j, true);
        self.row_kept[l - 1][i] += 1;
        self.layer_kept[l - 1] += 1;
        1
    }

    fn downstream_capacity(&mut self, l: usize, j: usize) -> bool {
        let depth = self.net.depth();
        if l >= depth {
            return false;
        }
        if self.row_kept[l][j] < self.net.dims()[l + 1] {
            return true;
        }
        (l + 2..=depth).any(|m| self.layer_kept[m - 1] < self.layer_size(m))
    }

    fn saturated(&self) -> bool {
        (1..=self.net.depth()).all(|l| self.layer_kept[l - 1] == self.layer_size(l))
    }
}

/// Topologically consistent magnitude pruning; see the module docs.
pub fn tc_mp(net: &LayeredNetwork, spec: &PruneSpec) -> Result<MaskTensor> {
    tc_mp_traced(net, spec).map(|(mask, _)| mask)
}

pub fn tc_mp_traced(net: &LayeredNetwork, spec: &PruneSpec) -> Result<(MaskTensor, Vec<ChainTrace>)> {
    spec.validate()?;
    let budget: PruningBudget = net.budget(spec.rate)?;
    let mut graph = DenseChains::new(net, spec.scoring)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let traces = grow_chains(&mut graph, budget.max_kept, spec.stochastic, &mut rng)?;
    Ok((graph.mask, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::network::Activation;
    use crate::topology::consistency_report;

    fn net_from(layers: &[Vec<Vec<f64>>]) -> LayeredNetwork {
        LayeredNetwork::with_activations(
            layers.iter().map(|l| DenseMatrix::from_rows(l).unwrap()).collect(),
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> LayeredNetwork {
        LayeredNetwork::with_activations(
            dims.windows(2)
                .map(|w| DenseMatrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-1.0..1.0)))
                .collect(),
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap()
    }

    fn kept_positions(mask: &MaskTensor) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for l in 1..=mask.depth() {
            let m = mask.layer(l);
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    if m.get(i, j) {
                        out.push((l, i, j));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn standard_mp_examples() {
        let net = net_from(&[
            vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
            vec![vec![7.0, 8.0], vec![9.0, 10.0], vec![11.0, 12.0]],
        ]);
        assert_eq!(standard_mp(&net, 0.0).unwrap(), MaskTensor::ones_like(&net));
        let m = standard_mp(&net, 0.75).unwrap();
        assert_eq!(kept_positions(&m), vec![(2, 1, 1), (2, 2, 0), (2, 2, 1)]);
    }

    #[test]
    fn standard_mp_ties_prefer_lower_index() {
        let net = net_from(&[vec![vec![1.0, -1.0]], vec![vec![1.0], vec![1.0]]]);
        let m = standard_mp(&net, 0.5).unwrap();
        assert_eq!(kept_positions(&m), vec![(1, 0, 0), (1, 0, 1)]);
    }

    #[test]
    fn standard_mp_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let net = random_net(&mut rng, &[4, 5, 3]);
            let rate = rng.gen_range(0.0..0.99);
            let m = standard_mp(&net, rate).unwrap();
            let k = net.budget(rate).unwrap().max_kept;
            let mut all: Vec<(f64, (usize, usize, usize))> = Vec::new();
            for l in 1..=2 {
                let w = net.layer(l);
                for i in 0..w.rows() {
                    for j in 0..w.cols() {
                        all.push((w.get(i, j).abs(), (l, i, j)));
                    }
                }
            }
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let mut want: Vec<_> = all[..k].iter().map(|x| x.1).collect();
            want.sort();
            assert_eq!(kept_positions(&m), want);
        }
    }

    #[test]
    fn stochastic_mp_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_net(&mut rng, &[4, 6, 3]);
        assert_eq!(stochastic_mp(&net, 0.0, 99).unwrap(), MaskTensor::ones_like(&net));
        let a = stochastic_mp(&net, 0.6, 7).unwrap();
        assert_eq!(a, stochastic_mp(&net, 0.6, 7).unwrap());
        assert_eq!(a.kept_count(), net.budget(0.6).unwrap().max_kept);
        let zero = net_from(&[vec![vec![0.0, 0.0]]]);
        assert!(matches!(stochastic_mp(&zero, 0.5, 1), Err(Error::DegenerateDistribution)));
    }

    #[test]
    fn stochastic_mp_equal_weights_frequency() {
        let net = net_from(&[vec![vec![0.5, -0.5]]]);
        let mut first = 0;
        for seed in 0..10_000 {
            if stochastic_mp(&net, 0.5, seed).unwrap().layer(1).get(0, 0) {
                first += 1;
            }
        }
        let freq = first as f64 / 10_000.0;
        assert!((freq - 0.5).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn magnitude_sample_prefers_positive_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let keep = magnitude_sample(&[0.0, 3.0, 0.0, 1.0], 3, &mut rng).unwrap();
        assert!(keep[1] && keep[3]);
        assert_eq!(keep.iter().filter(|&&b| b).count(), 3);
    }

    #[test]
    fn start_selection() {
        let net = net_from(&[vec![vec![1.0]; 3]]);
        let spec = PruneSpec::tc(0.5, false, Scoring::Local, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq: Vec<usize> = (0..6).map(|s| select_start(&net, &spec, s, &mut rng)).collect();
        assert_eq!(seq, vec![0, 1, 2, 0, 1, 2]);

        let net4 = net_from(&[vec![vec![1.0]; 4]]);
        let spec = PruneSpec::tc(0.5, true, Scoring::Local, 0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10_000).map(|s| select_start(&net4, &spec, s, &mut rng)).collect::<Vec<_>>()
        };
        let a = draw(42);
        assert_eq!(a, draw(42));
        for start in 0..4 {
            let f = a.iter().filter(|&&x| x == start).count() as f64 / 10_000.0;
            assert!((f - 0.25).abs() <= 0.02, "{start}: {f}");
        }
    }

    #[test]
    fn single_chain_network() {
        let net = net_from(&[vec![vec![2.0]], vec![vec![-1.0]]]);
        let spec = PruneSpec::tc(0.0, false, Scoring::Local, 0);
        let mask = tc_mp(&net, &spec).unwrap();
        assert_eq!(mask, MaskTensor::ones_like(&net));
    }

    #[test]
    fn hand_traced_local_choice() {
        let net = net_from(&[
            vec![vec![5.0, 1.0], vec![2.0, 1.0]],
            vec![vec![3.0, 1.0], vec![4.0, 1.0]],
        ]);
        // 8 connections, rate 0.75 keeps 2 = L
        let spec = PruneSpec::tc(0.75, false, Scoring::Local, 0);
        let (mask, traces) = tc_mp_traced(&net, &spec).unwrap();
        assert_eq!(traces.len(), 1);
        assert_eq!(traces[0].steps, vec![(1, 0, 0), (2, 0, 0)]);
        assert_eq!(kept_positions(&mask), vec![(1, 0, 0), (2, 0, 0)]);
    }

    #[test]
    fn hand_traced_global_choice() {
        let net = net_from(&[
            vec![vec![5.0, 1.0], vec![2.0, 1.0]],
            vec![vec![3.0, 1.0], vec![4.0, 1.0]],
        ]);
        let global = PruneSpec::tc(0.75, false, Scoring::Global { alpha: 1.0 }, 0);
        let (_, traces) = tc_mp_traced(&net, &global).unwrap();
        assert_eq!(traces[0].steps, vec![(1, 0, 0), (2, 0, 0)]);

        // 5 * 0.1 < 1 * 4 flips the first step
        let counter = net_from(&[
            vec![vec![5.0, 1.0], vec![2.0, 1.0]],
            vec![vec![0.1, 0.1], vec![4.0, 1.0]],
        ]);
        let (_, traces) = tc_mp_traced(&counter, &global).unwrap();
        assert_eq!(traces[0].steps, vec![(1, 0, 1), (2, 1, 0)]);
        let local = PruneSpec::tc(0.75, false, Scoring::Local, 0);
        let (_, traces) = tc_mp_traced(&counter, &local).unwrap();
        assert_eq!(traces[0].steps[0], (1, 0, 0));
    }

    #[test]
    fn budget_too_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = random_net(&mut rng, &[2, 2, 2, 2]);
        // 12 connections at 0.9 keeps 1 < 3 layers
        let spec = PruneSpec::tc(0.9, false, Scoring::Local, 0);
        assert!(matches!(
            tc_mp(&net, &spec),
            Err(Error::BudgetTooSmall { max_kept: 1, layers: 3 })
        ));
        let bad_alpha = PruneSpec::tc(0.5, false, Scoring::Global { alpha: 2.0 }, 0);
        assert!(tc_mp(&net, &bad_alpha).is_err());
    }

    #[test]
    fn tc_masks_are_consistent_and_within_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for round in 0..200 {
            let depth = rng.gen_range(2..=4);
            let dims: Vec<usize> = (0..=depth).map(|_| rng.gen_range(1..=7)).collect();
            let net = random_net(&mut rng, &dims);
            let rate = [0.0, 0.3, 0.5, 0.8, 0.9][round % 5];
            let scoring = if round % 2 == 0 {
                Scoring::Local
            } else {
                Scoring::Global { alpha: [1.0, 0.5, 0.1][round % 3] }
            };
            let spec = PruneSpec::tc(rate, round % 3 == 0, scoring, round as u64);
            let budget = net.budget(rate).unwrap();
            match tc_mp_traced(&net, &spec) {
                Ok((mask, traces)) => {
                    assert!(traces.iter().all(ChainTrace::is_connected));
                    let report = consistency_report(&mask);
                    assert_eq!(report.ac_percentage, Some(100.0));
                    let kept = mask.kept_count();
                    assert!(kept >= budget.max_kept && kept < budget.max_kept + depth, "{kept} vs {budget:?}");
                }
                Err(Error::BudgetTooSmall { .. }) => assert!(budget.max_kept < depth),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn rate_zero_fills_whole_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = random_net(&mut rng, &[3, 5, 4, 2]);
        for stochastic in [false, true] {
            let spec = PruneSpec::tc(0.0, stochastic, Scoring::Local, 3);
            assert_eq!(tc_mp(&net, &spec).unwrap(), MaskTensor::ones_like(&net));
        }
    }

    #[test]
    fn deterministic_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = random_net(&mut rng, &[6, 8, 8, 3]);
        for stochastic in [false, true] {
            let spec = PruneSpec::tc(0.8, stochastic, Scoring::Global { alpha: 0.2 }, 11);
            assert_eq!(tc_mp(&net, &spec).unwrap(), tc_mp(&net, &spec).unwrap());
        }
    }

    #[test]
    fn per_layer_scaling_leaves_mask_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let net = random_net(&mut rng, &[4, 6, 5, 3]);
            let spec = PruneSpec::tc(0.8, false, Scoring::Global { alpha: 1.0 }, 0);
            let base = tc_mp(&net, &spec).unwrap();
            for l in 0..3 {
                let mut scaled = net.clone();
                scaled.weights_mut()[l] = net.weights()[l].scale(3.25);
                assert_eq!(tc_mp(&scaled, &spec).unwrap(), base);
            }
        }
    }
}
