//! Downstream magnitude surrogates used to score candidate connections.
//!
//! For a layered network with absolute weights `|W^l|`, the table holds for
//! every layer `l` the matrix `Ŵ^{l+1}` (shape `d_l x d_L`) defined by the
//! back-to-front recursion
//!
//! ```text
//! Ŵ^{L+1} = I
//! Ŵ^{l+1} = [ |W^{l+1}|^p  (Ŵ^{l+2})^p ]^{1/p},   p = 1/alpha >= 1
//! ```
//!
//! with powers taken entrywise. `p = 1` is the plain product of absolute
//! weights (a sum over all downstream paths); large `p` approaches the largest
//! product along a single path.
//!
//! For `p > 1` each entry is evaluated as a scaled power mean
//! `max_m x_m * (sum_m (x_m / max_m x_m)^p)^{1/p}` with `x_m = |W(j,m)| Ŵ(m,k)`,
//! and every layer matrix is stored normalized to a unit maximum with its scale
//! kept as a logarithm. Neither step changes which connection wins an argmax
//! within a layer.

use crate::error::{Error, Result};
use crate::linalg::{matmul, DenseMatrix};
use crate::network::LayeredNetwork;

#[derive(Debug, Clone)]
struct ScaledLayer {
    /// Nonnegative entries; the true matrix is `normalized * exp(log_scale)`.
    normalized: DenseMatrix,
    log_scale: f64,
    row_max: Vec<f64>,
}

impl ScaledLayer {
    fn new(normalized: DenseMatrix, log_scale: f64) -> Self {
        let row_max = (0..normalized.rows())
            .map(|j| normalized.row(j).iter().copied().fold(0.0, f64::max))
            .collect();
        Self {
            normalized,
            log_scale,
            row_max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateTable {
    alpha: f64,
    /// Index `l - 1` holds `Ŵ^{l+1}`; the last entry is the identity base.
    layers: Vec<ScaledLayer>,
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must satisfy 1/alpha >= 1, got alpha = {alpha}"
        )));
    }
    Ok(())
}

fn power_mean_product(a: &DenseMatrix, b: &DenseMatrix, p: f64) -> DenseMatrix {
    let inner = a.cols();
    let mut terms = vec![0.0; inner];
    DenseMatrix::from_fn(a.rows(), b.cols(), |j, k| {
        let mut peak = 0.0f64;
        for (m, t) in terms.iter_mut().enumerate() {
            *t = a.get(j, m) * b.get(m, k);
            peak = peak.max(*t);
        }
        if peak == 0.0 {
            return 0.0;
        }
        let sum: f64 = terms.iter().map(|&t| (t / peak).powf(p)).sum();
        peak * sum.powf(1.0 / p)
    })
}

fn normalize(m: DenseMatrix) -> (DenseMatrix, f64) {
    let peak = m.max_entry();
    if peak > 0.0 && peak.is_finite() {
        (m.scale(1.0 / peak), peak.ln())
    } else {
        (m, 0.0)
    }
}

pub fn build_table(net: &LayeredNetwork, alpha: f64) -> Result<SurrogateTable> {
    validate_alpha(alpha)?;
    let p = 1.0 / alpha;
    let depth = net.depth();
    let dl = net.dims()[depth];
    let mut layers = vec![ScaledLayer::new(DenseMatrix::identity(dl), 0.0)];
    for l in (1..depth).rev() {
        // builds Ŵ^{l+1} from |W^{l+1}| and Ŵ^{l+2}
        let next = layers.last().unwrap();
        let abs_w = net.layer(l + 1).abs();
        let layer = if p == 1.0 {
            let plain = matmul(&abs_w, &next.normalized)?;
            if plain.values().iter().all(|v| v.is_finite()) {
                ScaledLayer::new(plain, next.log_scale)
            } else {
                let (w_norm, w_log) = normalize(abs_w);
                let (norm, log) = normalize(matmul(&w_norm, &next.normalized)?);
                ScaledLayer::new(norm, w_log + next.log_scale + log)
            }
        } else {
            let (w_norm, w_log) = normalize(abs_w);
            let (norm, log) = normalize(power_mean_product(&w_norm, &next.normalized, p));
            ScaledLayer::new(norm, w_log + next.log_scale + log)
        };
        layers.push(layer);
    }
    layers.reverse();
    Ok(SurrogateTable { alpha, layers })
}

impl SurrogateTable {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `Ŵ^{l+1}(j, k)` for `l` in `1..=L`.
    pub fn entry(&self, l: usize, j: usize, k: usize) -> f64 {
        let layer = &self.layers[l - 1];
        layer.normalized.get(j, k) * layer.log_scale.exp()
    }

    /// `Ŵ^{l+1}` materialized; may overflow for extreme tables, use
    /// [`entry`](Self::entry) ratios or relative scores instead.
    pub fn matrix(&self, l: usize) -> DenseMatrix {
        let layer = &self.layers[l - 1];
        layer.normalized.scale(layer.log_scale.exp())
    }

    /// `max_k Ŵ^{l+1}(j, k)` up to the layer-wide factor `exp(log_scale(l))`.
    pub fn relative_row_max(&self, l: usize, j: usize) -> f64 {
        self.layers[l - 1].row_max[j]
    }

    pub fn log_scale(&self, l: usize) -> f64 {
        self.layers[l - 1].log_scale
    }

    fn check(&self, net: &LayeredNetwork, l: usize, i: usize, j: usize) -> Result<()> {
        check_index(net, l, i, j)?;
        if self.layers.len() != net.depth() || self.layers[l - 1].normalized.rows() != net.dims()[l] {
            return Err(Error::Shape {
                left: self.layers[l - 1].normalized.shape(),
                right: net.layer(l).shape(),
                context: "surrogate table vs network",
            });
        }
        Ok(())
    }

    /// `|W^l(i,j)| * max_k Ŵ^{l+1}(j,k)`.
    pub fn edge_score(&self, net: &LayeredNetwork, l: usize, i: usize, j: usize) -> Result<f64> {
        self.check(net, l, i, j)?;
        Ok(self.relative_edge_score(net, l, i, j) * self.layers[l - 1].log_scale.exp())
    }

    /// [`edge_score`](Self::edge_score) without the layer-wide scale factor.
    /// Comparable across `i, j` within one layer only.
    pub fn relative_edge_score(&self, net: &LayeredNetwork, l: usize, i: usize, j: usize) -> f64 {
        net.layer(l).get(i, j).abs() * self.layers[l - 1].row_max[j]
    }
}

fn check_index(net: &LayeredNetwork, l: usize, i: usize, j: usize) -> Result<()> {
    if l == 0 || l > net.depth() {
        return Err(Error::Index(format!("layer {l} outside 1..={}", net.depth())));
    }
    let (r, c) = net.layer(l).shape();
    if i >= r || j >= c {
        return Err(Error::Index(format!(
            "connection ({i}, {j}) outside layer {l} of shape {r}x{c}"
        )));
    }
    Ok(())
}

pub fn local_score(net: &LayeredNetwork, l: usize, i: usize, j: usize) -> Result<f64> {
    check_index(net, l, i, j)?;
    Ok(net.layer(l).get(i, j).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{entrywise_pow, row_normalize};
    use crate::network::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> LayeredNetwork {
        let weights = dims
            .windows(2)
            .map(|w| DenseMatrix::from_fn(w[0], w[1], |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        LayeredNetwork::with_activations(weights, Activation::Relu, Activation::Identity).unwrap()
    }

    /// All paths from neuron `j` of layer `l` to output `k`, as lists of edge magnitudes.
    fn paths(net: &LayeredNetwork, l: usize, j: usize, k: usize) -> Vec<Vec<f64>> {
        if l == net.depth() {
            return if j == k { vec![vec![]] } else { vec![] };
        }
        let w = net.layer(l + 1);
        let mut out = Vec::new();
        for m in 0..w.cols() {
            for mut rest in paths(net, l + 1, m, k) {
                rest.insert(0, w.get(j, m).abs());
                out.push(rest);
            }
        }
        out
    }

    fn path_sum(net: &LayeredNetwork, l: usize, j: usize, k: usize) -> f64 {
        paths(net, l, j, k).iter().map(|p| p.iter().product::<f64>()).sum()
    }

    fn max_product(net: &LayeredNetwork, l: usize, j: usize, k: usize) -> f64 {
        paths(net, l, j, k)
            .iter()
            .map(|p| p.iter().product::<f64>())
            .fold(0.0, f64::max)
    }

    /// Literal recursion with explicit entrywise powers (overflow-prone for large p).
    fn naive_recursion(net: &LayeredNetwork, alpha: f64) -> Vec<DenseMatrix> {
        let p = 1.0 / alpha;
        let depth = net.depth();
        let mut hats = vec![DenseMatrix::identity(net.dims()[depth])];
        for l in (1..depth).rev() {
            let w = entrywise_pow(&net.layer(l + 1).abs(), p).unwrap();
            let h = entrywise_pow(hats.last().unwrap(), p).unwrap();
            hats.push(entrywise_pow(&matmul(&w, &h).unwrap(), alpha).unwrap());
        }
        hats.reverse();
        hats
    }

    #[test]
    fn alpha_one_matches_path_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = random_net(&mut rng, &[3, 4, 3]);
        let t = build_table(&net, 1.0).unwrap();
        for j in 0..4 {
            for k in 0..3 {
                let oracle = path_sum(&net, 1, j, k);
                assert!((t.entry(1, j, k) - oracle).abs() <= 1e-12 * oracle.max(1e-300));
            }
        }
        // plain product, exactly
        let plain = net.layer(2).abs();
        assert_eq!(t.matrix(1), plain);
    }

    #[test]
    fn identity_weights_give_identity_tables() {
        let net = LayeredNetwork::with_activations(
            vec![DenseMatrix::identity(3); 4],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap();
        for alpha in [1.0, 0.5, 0.1, 0.02] {
            let t = build_table(&net, alpha).unwrap();
            for l in 1..=4 {
                let m = t.matrix(l);
                for j in 0..3 {
                    for k in 0..3 {
                        let want = if j == k { 1.0 } else { 0.0 };
                        assert!((m.get(j, k) - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn small_alpha_approaches_max_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = random_net(&mut rng, &[3, 4, 4, 3]);
        let t = build_table(&net, 1e-3).unwrap();
        for l in 1..3 {
            for j in 0..4 {
                for k in 0..3 {
                    let oracle = max_product(&net, l, j, k);
                    let got = t.entry(l, j, k);
                    assert!((got - oracle).abs() <= 0.01 * oracle, "{got} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn stable_recursion_matches_naive_for_moderate_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = random_net(&mut rng, &[3, 4, 5, 3, 2]);
        for alpha in [1.0, 0.5, 0.4, 0.2, 0.1] {
            let t = build_table(&net, alpha).unwrap();
            let naive = naive_recursion(&net, alpha);
            for l in 1..=4 {
                let m = t.matrix(l);
                for (a, b) in m.values().iter().zip(naive[l - 1].values()) {
                    assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12), "alpha {alpha}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn large_powers_stay_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = random_net(&mut rng, &[4, 6, 6, 6, 3]);
        net.weights_mut()[2] = net.layer(3).scale(1e8);
        let t = build_table(&net, 1.0 / 50.0).unwrap();
        for l in 1..=4 {
            assert!(t.log_scale(l).is_finite());
            for j in 0..net.dims()[l] {
                assert!(t.relative_row_max(l, j).is_finite());
                assert!(t.edge_score(&net, l, 0, j).unwrap().is_finite());
            }
        }
        // the naive route overflows here
        assert!(entrywise_pow(&net.layer(3).abs(), 50.0).is_err());
    }

    #[test]
    fn edge_score_cases() {
        let single = LayeredNetwork::with_activations(
            vec![
                DenseMatrix::from_rows(&[vec![-2.0]]).unwrap(),
                DenseMatrix::from_rows(&[vec![3.0]]).unwrap(),
                DenseMatrix::from_rows(&[vec![-0.5]]).unwrap(),
            ],
            Activation::Relu,
            Activation::Identity,
        )
        .unwrap();
        let t = build_table(&single, 1.0).unwrap();
        assert_eq!(t.edge_score(&single, 1, 0, 0).unwrap(), 3.0);
        assert_eq!(t.edge_score(&single, 3, 0, 0).unwrap(), 0.5);
        assert!(t.edge_score(&single, 4, 0, 0).is_err());
        assert!(t.edge_score(&single, 1, 1, 0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = random_net(&mut rng, &[3, 4, 2]);
        let t = build_table(&net, 0.3).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert_eq!(t.edge_score(&net, 2, i, j).unwrap(), net.layer(2).get(i, j).abs());
            }
        }
    }

    #[test]
    fn edge_score_argmax_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let net = random_net(&mut rng, &[3, 3, 3, 2]);
            let t = build_table(&net, 1.0).unwrap();
            for i in 0..3 {
                let brute: Vec<f64> = (0..3)
                    .map(|j| {
                        (0..2)
                            .map(|k| net.layer(1).get(i, j).abs() * path_sum(&net, 1, j, k))
                            .fold(0.0, f64::max)
                    })
                    .collect();
                let scores: Vec<f64> = (0..3).map(|j| t.edge_score(&net, 1, i, j).unwrap()).collect();
                let argmax = |v: &[f64]| {
                    v.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |b, (k, &x)| if x > b.1 { (k, x) } else { b })
                        .0
                };
                assert_eq!(argmax(&brute), argmax(&scores));
            }
        }
    }

    #[test]
    fn local_score_is_magnitude() {
        let net = LayeredNetwork::with_activations(
            vec![DenseMatrix::from_rows(&[vec![-3.0, 0.0, 1.0]]).unwrap()],
            Activation::Identity,
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(local_score(&net, 1, 0, 0).unwrap(), 3.0);
        assert_eq!(local_score(&net, 1, 0, 1).unwrap(), 0.0);
        assert!(local_score(&net, 1, 0, 3).is_err());
    }

    #[test]
    fn rejects_alpha_outside_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = random_net(&mut rng, &[2, 2]);
        assert!(build_table(&net, 1.5).is_err());
        assert!(build_table(&net, 0.0).is_err());
        assert!(build_table(&net, -1.0).is_err());
    }

    #[test]
    fn markov_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let net = random_net(&mut rng, &[5, 4, 6, 3]);
        let stochastic: Vec<DenseMatrix> = net
            .weights()
            .iter()
            .map(|w| row_normalize(&w.abs()).unwrap())
            .collect();
        let net = LayeredNetwork::with_activations(stochastic, Activation::Relu, Activation::Identity).unwrap();
        let t = build_table(&net, 1.0).unwrap();
        for l in 1..=3 {
            let m = t.matrix(l);
            for j in 0..m.rows() {
                let s: f64 = m.row(j).iter().sum();
                assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn scale_covariance_at_alpha_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let net = random_net(&mut rng, &[3, 4, 4, 2]);
        let mut scaled = net.clone();
        scaled.weights_mut()[2] = net.layer(3).scale(7.5);
        let a = build_table(&net, 1.0).unwrap();
        let b = build_table(&scaled, 1.0).unwrap();
        for l in 1..=2 {
            for j in 0..4 {
                for k in 0..2 {
                    let want = 7.5 * a.entry(l, j, k);
                    assert!((b.entry(l, j, k) - want).abs() <= 1e-12 * want);
                }
            }
        }
    }
}
