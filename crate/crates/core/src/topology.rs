//! Accessibility and co-accessibility of mask connections.
//!
//! A kept connection of layer `l` from neuron `i` to neuron `j` is accessible
//! when some chain of kept connections reaches `i` from the input layer, and
//! co-accessible when such a chain leads from `j` to the output layer.
//! Reachability products are evaluated in the boolean semiring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{bool_matmul, BoolMatrix};
use crate::network::MaskTensor;

fn check_layer(mask: &MaskTensor, l: usize) -> Result<()> {
    if l == 0 || l > mask.depth() {
        return Err(Error::Index(format!(
            "layer {l} outside 1..={}",
            mask.depth()
        )));
    }
    Ok(())
}

/// Nonzero pattern of `M^1 ... M^{l-1}`; the `d_0 x d_0` identity for `l = 1`.
pub fn access_pattern(mask: &MaskTensor, l: usize) -> Result<BoolMatrix> {
    check_layer(mask, l)?;
    let d0 = mask.layer(1).rows();
    let mut acc = BoolMatrix::identity(d0);
    for k in 1..l {
        acc = bool_matmul(&acc, mask.layer(k))?;
    }
    Ok(acc)
}

/// Nonzero pattern of `M^{l+1} ... M^L`; the `d_L x d_L` identity for `l = L`.
pub fn coaccess_pattern(mask: &MaskTensor, l: usize) -> Result<BoolMatrix> {
    check_layer(mask, l)?;
    let depth = mask.depth();
    let dl = mask.layer(depth).cols();
    let mut acc = BoolMatrix::identity(dl);
    for k in (l + 1..=depth).rev() {
        acc = bool_matmul(mask.layer(k), &acc)?;
    }
    Ok(acc)
}

/// `(accessible, coaccessible)` for the connection `i -> j` of layer `l`.
/// The flags do not depend on whether that connection itself is kept.
pub fn connection_flags(mask: &MaskTensor, l: usize, i: usize, j: usize) -> Result<(bool, bool)> {
    check_layer(mask, l)?;
    let (rows, cols) = mask.layer(l).shape();
    if i >= rows || j >= cols {
        return Err(Error::Index(format!(
            "connection ({i}, {j}) outside layer {l} of shape {rows}x{cols}"
        )));
    }
    let sa = access_pattern(mask, l)?;
    let sc = coaccess_pattern(mask, l)?;
    Ok((sa.col_any(i), sc.row_any(j)))
}

/// Neurons reachable from the input: entry `l` covers layer `l` (0 = input, all true).
pub fn forward_reach(mask: &MaskTensor) -> Vec<Vec<bool>> {
    let dims = mask.dims();
    let mut reach = vec![vec![true; dims[0]]];
    for m in mask.masks() {
        let prev = reach.last().unwrap();
        let mut next = vec![false; m.cols()];
        for (i, _) in prev.iter().enumerate().filter(|(_, &r)| r) {
            for (n, &b) in next.iter_mut().zip(m.row(i)) {
                *n |= b;
            }
        }
        reach.push(next);
    }
    reach
}

/// Neurons that reach the output: entry `l` covers layer `l` (last = output, all true).
pub fn backward_reach(mask: &MaskTensor) -> Vec<Vec<bool>> {
    let dims = mask.dims();
    let depth = mask.depth();
    let mut reach = vec![Vec::new(); depth + 1];
    reach[depth] = vec![true; dims[depth]];
    for l in (1..=depth).rev() {
        let m = mask.layer(l);
        let next = &reach[l];
        let cur = (0..m.rows())
            .map(|i| m.row(i).iter().zip(next).any(|(&b, &r)| b && r))
            .collect();
        reach[l - 1] = cur;
    }
    reach
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    /// Kept connections that are accessible, per layer.
    pub per_layer_accessible: Vec<BoolMatrix>,
    /// Kept connections that are co-accessible, per layer.
    pub per_layer_coaccessible: Vec<BoolMatrix>,
    pub kept_count: usize,
    pub consistent_count: usize,
    /// `None` when nothing is kept.
    pub ac_percentage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub kept: usize,
    pub consistent: usize,
    pub ac_percent: Option<f64>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.consistent_count == self.kept_count
    }

    pub fn summary(&self) -> ConsistencySummary {
        ConsistencySummary {
            kept: self.kept_count,
            consistent: self.consistent_count,
            ac_percent: self.ac_percentage,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("summary serializes")
    }
}

pub fn ac_percentage(kept: usize, consistent: usize) -> Option<f64> {
    (kept > 0).then(|| 100.0 * consistent as f64 / kept as f64)
}

pub fn consistency_report(mask: &MaskTensor) -> ConsistencyReport {
    let fwd = forward_reach(mask);
    let bwd = backward_reach(mask);
    let mut accessible = Vec::with_capacity(mask.depth());
    let mut coaccessible = Vec::with_capacity(mask.depth());
    let mut consistent = 0;
    for (idx, m) in mask.masks().iter().enumerate() {
        let (src, dst) = (&fwd[idx], &bwd[idx + 1]);
        let acc = BoolMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) && src[i]);
        let co = BoolMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) && dst[j]);
        consistent += acc
            .bits()
            .iter()
            .zip(co.bits())
            .filter(|(&a, &c)| a && c)
            .count();
        accessible.push(acc);
        coaccessible.push(co);
    }
    let kept = mask.kept_count();
    ConsistencyReport {
        per_layer_accessible: accessible,
        per_layer_coaccessible: coaccessible,
        kept_count: kept,
        consistent_count: consistent,
        ac_percentage: ac_percentage(kept, consistent),
    }
}

/// Repeatedly drops kept connections that are not both accessible and
/// co-accessible until nothing changes.
pub fn trim_to_consistent(mask: &MaskTensor) -> MaskTensor {
    let mut current = mask.clone();
    loop {
        let report = consistency_report(&current);
        if report.is_consistent() {
            return current;
        }
        let trimmed = report
            .per_layer_accessible
            .iter()
            .zip(&report.per_layer_coaccessible)
            .map(|(a, c)| BoolMatrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) && c.get(i, j)))
            .collect();
        current = MaskTensor::new(trimmed).expect("trimming preserves shapes");
    }
}
