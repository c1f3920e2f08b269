//! Momentum SGD with a loss-speed learning-rate schedule, masked fine-tuning
//! and balanced-accuracy evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::model::{argmax, GcnMask, GcnModel};
use crate::gcn::skeleton::{temporal_chunking, ChunkedGraphSignal, SkeletonDataset};

pub const MIN_LR: f64 = 1e-8;
pub const MAX_LR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 20,
            initial_lr: 0.01,
            momentum: 0.9,
            lr_decay: 0.99,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// A zero `initial_lr` is allowed and freezes training.
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.initial_lr == 0.0 || (MIN_LR..=MAX_LR).contains(&self.initial_lr)) {
            return Err(Error::Config(format!(
                "initial_lr {} outside [{MIN_LR}, {MAX_LR}]",
                self.initial_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::Config(format!("lr_decay {} outside (0, 1)", self.lr_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSignal {
    pub signal: ChunkedGraphSignal,
    pub label: usize,
}

pub fn featurize(dataset: &SkeletonDataset, chunks: usize) -> Result<Vec<LabeledSignal>> {
    dataset
        .sequences
        .iter()
        .map(|seq| {
            Ok(LabeledSignal {
                signal: temporal_chunking(seq, chunks)?,
                label: seq.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: GcnModel,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// Learning rate used in each epoch.
    pub learning_rates: Vec<f64>,
}

/// Next learning rate given the last three epoch losses.
pub fn next_learning_rate(lr: f64, losses: &[f64], decay: f64) -> f64 {
    if lr == 0.0 || losses.len() < 3 {
        return lr;
    }
    let t = losses.len() - 1;
    let speed = (losses[t - 1] - losses[t]).abs();
    let previous = (losses[t - 2] - losses[t - 1]).abs();
    let next = if speed > previous { lr * decay } else { lr / decay };
    next.clamp(MIN_LR, MAX_LR)
}

/// Trains a copy of `model`. With a mask, dropped parameters start at zero
/// and their gradients and velocities are zeroed every step.
pub fn train(model: &GcnModel, data: &[LabeledSignal], cfg: &TrainConfig, mask: Option<&GcnMask>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    let mut model = model.clone();
    let keep: Option<Vec<bool>> = match mask {
        Some(m) => {
            model.apply_mask(m)?;
            Some(m.to_flat())
        }
        None => None,
    };
    let mut params = model.flat_params();
    let mut velocity = vec![0.0; params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut lr = cfg.initial_lr;
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut learning_rates = Vec::with_capacity(cfg.epochs);
    let mut sample_loss = vec![0.0; data.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        learning_rates.push(lr);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; params.len()];
            for &idx in batch {
                let sample = &data[idx];
                let (loss, g) = model.loss_and_grad(&sample.signal, sample.label)?;
                sample_loss[idx] = loss;
                for (acc, v) in grad.iter_mut().zip(g.flat_params()) {
                    *acc += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for p in 0..params.len() {
                if keep.as_ref().is_some_and(|k| !k[p]) {
                    continue;
                }
                velocity[p] = cfg.momentum * velocity[p] - lr * scale * grad[p];
                params[p] += velocity[p];
            }
            model.set_flat_params(&params)?;
        }
        let mean = sample_loss.iter().sum::<f64>() / data.len() as f64;
        if !mean.is_finite() || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        losses.push(mean);
        lr = next_learning_rate(lr, &losses, cfg.lr_decay);
    }
    Ok(TrainOutcome {
        model,
        losses,
        learning_rates,
    })
}

/// Mean loss of `model` over `data`, summed in dataset order.
pub fn mean_loss(model: &GcnModel, data: &[LabeledSignal]) -> Result<f64> {
    let mut total = 0.0;
    for s in data {
        total += model.loss_and_grad(&s.signal, s.label)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Balanced accuracy: per-class accuracy averaged over the classes present.
pub fn evaluate(model: &GcnModel, data: &[LabeledSignal], mask: Option<&GcnMask>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("evaluation set is empty".into()));
    }
    let masked;
    let model = match mask {
        Some(m) => {
            let mut copy = model.clone();
            copy.apply_mask(m)?;
            masked = copy;
            &masked
        }
        None => model,
    };
    let classes = model.hyper().classes;
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for s in data {
        if s.label >= classes {
            return Err(Error::Index(format!("label {} outside {classes} classes", s.label)));
        }
        let probs = model.forward(&s.signal)?;
        totals[s.label] += 1;
        if argmax(&probs) == s.label {
            hits[s.label] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcn::model::GcnHyper;
    use crate::gcn::skeleton::{synth_dataset, SynthParams};
    use crate::linalg::DenseMatrix;
    use rand::Rng;

    fn tiny() -> GcnHyper {
        GcnHyper {
            heads: 2,
            filters: 2,
            nodes: 3,
            signal: 6,
            classes: 2,
        }
    }

    fn random_data(h: &GcnHyper, count: usize, seed: u64) -> Vec<LabeledSignal> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| LabeledSignal {
                signal: ChunkedGraphSignal {
                    u: DenseMatrix::from_fn(h.signal, h.nodes, |_, _| rng.gen_range(-1.0..1.0)),
                },
                label: i % h.classes,
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = tiny();
        let data = random_data(&h, 4, 1);
        for seed in 0..5 {
            let model = GcnModel::init(h, None, seed).unwrap();
            for s in &data {
                let (_, grad) = model.loss_and_grad(&s.signal, s.label).unwrap();
                let analytic = grad.flat_params();
                let base = model.flat_params();
                for p in 0..base.len() {
                    let probe = |delta: f64| {
                        let mut m = model.clone();
                        let mut v = base.clone();
                        v[p] += delta;
                        m.set_flat_params(&v).unwrap();
                        m.loss_and_grad(&s.signal, s.label).unwrap().0
                    };
                    let numeric = (probe(1e-5) - probe(-1e-5)) / 2e-5;
                    let a = analytic[p];
                    let denom = a.abs() + numeric.abs();
                    if denom > 1e-7 {
                        assert!((a - numeric).abs() / denom <= 1e-4, "param {p}: {a} vs {numeric}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let h = tiny();
        let data = random_data(&h, 10, 2);
        let model = GcnModel::init(h, None, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 3,
            initial_lr: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&model, &data, &cfg, None).unwrap();
        assert_eq!(out.model, model);
        assert!(out.losses.windows(2).all(|w| w[0] == w[1]));
        assert!(out.learning_rates.iter().all(|&lr| lr == 0.0));
    }

    #[test]
    fn masked_parameters_stay_zero() {
        let h = tiny();
        let data = random_data(&h, 20, 3);
        let model = GcnModel::init(h, None, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bits: Vec<bool> = (0..h.param_count()).map(|_| rng.gen_bool(0.5)).collect();
        let mask = GcnMask::from_flat(h, &bits).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            batch_size: 20,
            initial_lr: 0.05,
            ..TrainConfig::default()
        };
        let out = train(&model, &data, &cfg, Some(&mask)).unwrap();
        for (v, keep) in out.model.flat_params().iter().zip(&bits) {
            if !keep {
                assert_eq!(*v, 0.0);
            }
        }
        assert_ne!(out.model.flat_params(), model.flat_params());
    }

    #[test]
    fn schedule_follows_loss_speed() {
        // speeds 1.0 then 0.5: slowing down raises the rate
        assert!((next_learning_rate(0.1, &[3.0, 2.0, 1.5], 0.99) - 0.1 / 0.99).abs() < 1e-15);
        // speeds 0.5 then 1.0: speeding up lowers it
        assert!((next_learning_rate(0.1, &[3.0, 2.5, 1.5], 0.99) - 0.099).abs() < 1e-15);
        assert_eq!(next_learning_rate(0.1, &[3.0, 2.0], 0.99), 0.1);
        assert_eq!(next_learning_rate(1.0, &[3.0, 2.0, 1.5], 0.5), 1.0);
        assert_eq!(next_learning_rate(1e-8, &[3.0, 2.5, 1.5], 0.5), 1e-8);
    }

    #[test]
    fn divergence_is_reported() {
        let h = tiny();
        let mut data = random_data(&h, 4, 0);
        for s in &mut data {
            s.signal.u = s.signal.u.scale(1e150);
        }
        let model = GcnModel::init(h, None, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            initial_lr: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&model, &data, &cfg, None), Err(Error::Divergence { .. })));
    }

    #[test]
    fn balanced_accuracy_of_constant_predictor() {
        let h = tiny();
        let mut head = DenseMatrix::zeros(h.nodes * h.filters, 2);
        for r in 0..head.rows() {
            head.set(r, 0, 1.0);
        }
        let model = GcnModel::new(
            h,
            vec![DenseMatrix::identity(3); 2],
            vec![DenseMatrix::from_fn(6, 2, |_, _| 1.0); 2],
            head,
        )
        .unwrap();
        let mut data: Vec<LabeledSignal> = random_data(&h, 10, 5)
            .into_iter()
            .map(|mut s| {
                s.signal.u = s.signal.u.abs();
                s
            })
            .collect();
        data.extend(data.clone().into_iter().take(2).map(|mut s| {
            s.label = 0;
            s
        }));
        // 7 of class 0, 5 of class 1
        assert_eq!(evaluate(&model, &data, None).unwrap(), 0.5);
        let mut shuffled = data.clone();
        shuffled.reverse();
        assert_eq!(evaluate(&model, &shuffled, None).unwrap(), 0.5);
    }

    #[test]
    fn small_gcn_fits_synthetic_training_set() {
        let params = SynthParams {
            per_class: 50,
            ..SynthParams::default()
        };
        let data = featurize(&synth_dataset(&params).unwrap(), 8).unwrap();
        let hyper = GcnHyper::desk_default();
        let model = GcnModel::init(hyper, Some(&synth_dataset(&params).unwrap().adjacency), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        let out = train(&model, &data, &cfg, None).unwrap();
        let acc = evaluate(&out.model, &data, None).unwrap();
        assert!(acc >= 0.95, "train accuracy {acc}");
    }
}
