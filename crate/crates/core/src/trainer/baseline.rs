use rand::seq::index;
use rand::Rng as _;

use crate::dataio::LabeledDataset;
use crate::error::Result;
use crate::mlp::{loss_and_grad, MlpParams};
use crate::rng::{self, tag};

use super::{class_weights, drive, sample_grad, Algorithm, TrainConfig, TrainOutcome};

/// Memoryless comparison trainers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// One uniformly drawn sample per step, `sgd_multiplier` steps per iteration.
    Sgd,
    /// `batch_size` pooled samples without replacement.
    Batch,
    /// One sample per class, weighted by class share.
    StratifiedSt,
}

impl BaselineKind {
    pub fn algorithm(self) -> Algorithm {
        match self {
            BaselineKind::Sgd => Algorithm::Sgd,
            BaselineKind::Batch => Algorithm::Batch,
            BaselineKind::StratifiedSt => Algorithm::Gst,
        }
    }
}

pub fn baseline_train(
    params: MlpParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
    kind: BaselineKind,
) -> Result<TrainOutcome> {
    let algorithm = kind.algorithm();
    let mut rng = rng::stream(config.seed, &[tag::TRAINER, algorithm.stream()]);
    let weights = class_weights(train);
    let n = train.len();
    let (params, reports) = drive(params, train, test, config, algorithm, |p| {
        match kind {
            BaselineKind::Sgd => {
                for _ in 0..config.sgd_multiplier {
                    let i = rng.random_range(0..n);
                    let g = sample_grad(p, train, i, config.lambda)?;
                    p.axpy(-config.h, &g);
                }
            }
            BaselineKind::Batch => {
                // sorted rows: a batch of every row matches the full gradient exactly
                let mut rows = index::sample(&mut rng, n, config.batch_size.min(n)).into_vec();
                rows.sort_unstable();
                let (_, g) = loss_and_grad(p, &train.samples_at(&rows), config.lambda)?;
                p.axpy(-config.h, &g);
            }
            BaselineKind::StratifiedSt => {
                let mut d = MlpParams::zeros_like(p);
                for (j, members) in train.class_index().iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let i = members[rng.random_range(0..members.len())];
                    d.axpy(weights[j], &sample_grad(p, train, i, config.lambda)?);
                }
                p.axpy(-config.h, &d);
            }
        }
        Ok(())
    })?;
    Ok(TrainOutcome {
        params,
        reports,
        counts: Default::default(),
    })
}

/// Full-batch gradient descent with step `h`, reporting at checkpoints.
pub fn fullgrad_train(
    params: MlpParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let samples = train.samples();
    let (params, reports) = drive(params, train, test, config, Algorithm::FullGrad, |p| {
        let (_, g) = loss_and_grad(p, &samples, config.lambda)?;
        p.axpy(-config.h, &g);
        Ok(())
    })?;
    Ok(TrainOutcome {
        params,
        reports,
        counts: Default::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{full_gradient_train, init_params, Activation, MlpShape};

    fn data(n: usize) -> LabeledDataset {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + i / 3) % 3).collect();
        let features = (0..n * 4).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
        LabeledDataset::new(features, labels, 4, 3).unwrap()
    }

    #[test]
    fn full_batch_matches_full_gradient_bitwise() {
        let d = data(40);
        let shape = MlpShape::new(vec![4, 6, 3]).unwrap();
        let p = init_params(&shape, Activation::Sigmoid, 8);
        let config = TrainConfig {
            batch_size: 40,
            iterations: 5,
            h: 0.3,
            lambda: 0.001,
            ..Default::default()
        };
        let out = baseline_train(p.clone(), &d, &d, &config, BaselineKind::Batch).unwrap();
        let (reference, _) = full_gradient_train(p.clone(), &d.samples(), 5, 0.3, 0.001).unwrap();
        assert_eq!(out.params.as_slice(), reference.as_slice());
        let fg = fullgrad_train(p, &d, &d, &config).unwrap();
        assert_eq!(fg.params.as_slice(), reference.as_slice());
    }

    #[test]
    fn sgd_on_one_sample_is_gradient_descent() {
        let d = data(1);
        let shape = MlpShape::new(vec![4, 3]).unwrap();
        let p = init_params(&shape, Activation::Tanh, 2);
        let config = TrainConfig { iterations: 4, h: 0.2, lambda: 0.0, ..Default::default() };
        let out = baseline_train(p.clone(), &d, &d, &config, BaselineKind::Sgd).unwrap();
        let (reference, _) = full_gradient_train(p, &d.samples(), 4, 0.2, 0.0).unwrap();
        assert_eq!(out.params.as_slice(), reference.as_slice());
    }

    #[test]
    fn multiplier_scales_sgd_steps() {
        let d = data(1);
        let shape = MlpShape::new(vec![4, 3]).unwrap();
        let p = init_params(&shape, Activation::Sigmoid, 2);
        let config = TrainConfig { iterations: 2, h: 0.2, sgd_multiplier: 3, ..Default::default() };
        let out = baseline_train(p.clone(), &d, &d, &config, BaselineKind::Sgd).unwrap();
        let (reference, _) = full_gradient_train(p, &d.samples(), 6, 0.2, config.lambda).unwrap();
        assert_eq!(out.params.as_slice(), reference.as_slice());
        assert_eq!(out.reports.last().unwrap().iterations, 2);
    }
}
