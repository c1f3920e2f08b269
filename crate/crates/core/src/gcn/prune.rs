//! Pruning at the level of GCN parameters.
//!
//! The layered view ties every attention entry to `s` connections and every
//! filter entry to `n`; a parameter counts once against the budget and is
//! kept or dropped as a whole. Chain growth runs on the layered view with
//! neighbors restricted to the tied (non-structural) connections.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gcn::model::{GcnIndexMap, GcnMask, GcnModel, ParamId};
use crate::network::{LayeredNetwork, PruningBudget};
use crate::pruner::{grow_chains, magnitude_sample, magnitude_top_k, ChainGraph, ChainTrace, PruneSpec, Scoring};
use crate::surrogate::{build_table, SurrogateTable};
use crate::topology::{ac_percentage, ConsistencySummary};

pub fn gcn_budget(model: &GcnModel, rate: f64) -> Result<PruningBudget> {
    PruningBudget::new(model.hyper().param_count(), rate)
}

struct TiedChains<'a> {
    net: &'a LayeredNetwork,
    map: GcnIndexMap,
    table: Option<SurrogateTable>,
    mask: GcnMask,
    kept: usize,
    /// `open[l][j]`: neuron `j` of layer `l` still reaches an unselected parameter.
    open: Vec<Vec<bool>>,
    dirty: bool,
}

impl<'a> TiedChains<'a> {
    fn param(&self, l: usize, i: usize, j: usize) -> ParamId {
        self.map.param_of(l, i, j).expect("neighbors only yield tied connections")
    }

    fn refresh(&mut self) {
        let h = *self.map.hyper();
        let hidden: Vec<bool> = (0..h.nodes * h.filters)
            .map(|r| (0..h.classes).any(|y| !self.mask.get(ParamId::Dense { row: r, col: y })))
            .collect();
        let aggregate: Vec<bool> = (0..h.heads * h.nodes * h.signal)
            .map(|j| {
                let (k, u, c) = self.map.split_aggregate(j);
                (0..h.filters).any(|f| {
                    !self.mask.get(ParamId::Filter { head: k, row: c, col: f }) || hidden[self.map.hidden(u, f)]
                })
            })
            .collect();
        self.open = vec![aggregate, hidden];
        self.dirty = false;
    }
}

impl ChainGraph for TiedChains<'_> {
    fn depth(&self) -> usize {
        3
    }

    fn input_width(&self) -> usize {
        self.net.dims()[0]
    }

    fn neighbors(&self, l: usize, i: usize) -> Vec<usize> {
        let h = self.map.hyper();
        match l {
            1 => {
                let (c, _) = (i / h.nodes, i % h.nodes);
                (0..h.heads)
                    .flat_map(|k| (0..h.nodes).map(move |u| (k, u)))
                    .map(|(k, u)| self.map.aggregate(k, u, c))
                    .collect()
            }
            2 => {
                let (_, u, _) = self.map.split_aggregate(i);
                (0..h.filters).map(|f| self.map.hidden(u, f)).collect()
            }
            _ => (0..h.classes).collect(),
        }
    }

    fn score(&self, l: usize, i: usize, j: usize) -> f64 {
        match &self.table {
            None => self.net.layer(l).get(i, j).abs(),
            Some(t) => t.relative_edge_score(self.net, l, i, j),
        }
    }

    fn is_selected(&self, l: usize, i: usize, j: usize) -> bool {
        self.mask.get(self.param(l, i, j))
    }

    fn select(&mut self, l: usize, i: usize, j: usize) -> usize {
        let p = self.param(l, i, j);
        if self.mask.set(p, true) {
            self.kept += 1;
            self.dirty = true;
            1
        } else {
            0
        }
    }

    fn downstream_capacity(&mut self, l: usize, j: usize) -> bool {
        if l >= 3 {
            return false;
        }
        if self.dirty {
            self.refresh();
        }
        self.open[l - 1][j]
    }

    fn saturated(&self) -> bool {
        self.kept == self.map.param_count()
    }
}

/// Mask over GCN parameters for any pruning variant, plus the chains grown
/// when `spec.tc` is set.
pub fn prune_gcn_traced(model: &GcnModel, spec: &PruneSpec) -> Result<(GcnMask, Vec<ChainTrace>)> {
    spec.validate()?;
    let hyper = *model.hyper();
    let budget = gcn_budget(model, spec.rate)?;
    if !spec.tc {
        let magnitudes: Vec<f64> = model.flat_params().iter().map(|v| v.abs()).collect();
        let keep = if spec.stochastic {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            magnitude_sample(&magnitudes, budget.max_kept, &mut rng)?
        } else {
            magnitude_top_k(&magnitudes, budget.max_kept)
        };
        return Ok((GcnMask::from_flat(hyper, &keep)?, Vec::new()));
    }
    let (net, map) = model.as_layered();
    let table = match spec.scoring {
        Scoring::Local => None,
        Scoring::Global { alpha } => Some(build_table(&net, alpha)?),
    };
    let mut graph = TiedChains {
        net: &net,
        map,
        table,
        mask: GcnMask::zeros(hyper),
        kept: 0,
        open: Vec::new(),
        dirty: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let traces = grow_chains(&mut graph, budget.max_kept, spec.stochastic, &mut rng)?;
    Ok((graph.mask, traces))
}

pub fn prune_gcn(model: &GcnModel, spec: &PruneSpec) -> Result<GcnMask> {
    prune_gcn_traced(model, spec).map(|(mask, _)| mask)
}

/// Per-parameter consistency: a parameter counts when some complete
/// input-to-output chain of kept parameters runs through one of its tied
/// connections.
pub fn parameter_consistency(mask: &GcnMask) -> GcnMask {
    let h = *mask.hyper();
    let mut out = GcnMask::zeros(h);
    // hidden neuron (u, f) reaches the output
    let live_hidden: Vec<bool> = (0..h.nodes * h.filters)
        .map(|r| (0..h.classes).any(|y| mask.head().get(r, y)))
        .collect();
    // aggregation neuron (k, u, *) is fed from the input
    let fed: Vec<Vec<bool>> = mask
        .attention()
        .iter()
        .map(|a| (0..h.nodes).map(|u| a.row_any(u)).collect())
        .collect();
    // hidden neuron (u, f) is fed through some head
    let reached = |u: usize, f: usize| {
        (0..h.heads).any(|k| fed[k][u] && (0..h.signal).any(|c| mask.filters()[k].get(c, f)))
    };
    for k in 0..h.heads {
        for u in 0..h.nodes {
            let forward_ok = (0..h.signal)
                .any(|c| (0..h.filters).any(|f| mask.filters()[k].get(c, f) && live_hidden[u * h.filters + f]));
            for i in 0..h.nodes {
                if mask.attention()[k].get(u, i) && forward_ok {
                    out.set(ParamId::Attention { head: k, row: u, col: i }, true);
                }
            }
        }
        for c in 0..h.signal {
            for f in 0..h.filters {
                let ok = (0..h.nodes).any(|u| fed[k][u] && live_hidden[u * h.filters + f]);
                if mask.filters()[k].get(c, f) && ok {
                    out.set(ParamId::Filter { head: k, row: c, col: f }, true);
                }
            }
        }
    }
    for u in 0..h.nodes {
        for f in 0..h.filters {
            let r = u * h.filters + f;
            if reached(u, f) {
                for y in 0..h.classes {
                    if mask.head().get(r, y) {
                        out.set(ParamId::Dense { row: r, col: y }, true);
                    }
                }
            }
        }
    }
    out
}

pub fn gcn_consistency(mask: &GcnMask) -> ConsistencySummary {
    let kept = mask.kept_count();
    let consistent = parameter_consistency(mask).kept_count();
    ConsistencySummary {
        kept,
        consistent,
        ac_percent: ac_percentage(kept, consistent),
    }
}

/// Drops inconsistent parameters until none remain.
pub fn trim_gcn(mask: &GcnMask) -> GcnMask {
    let mut current = mask.clone();
    loop {
        let next = parameter_consistency(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}
