use rand::seq::index;
use rand::Rng as _;

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimators::{optimal_coefficients, Coefficients, FallbackCounts};
use crate::mlp::MlpParams;
use crate::rng::{self, tag, Rng};

use super::{class_weights, drive, sample_grad, Algorithm, TrainConfig, TrainOutcome, UpdateScale};

/// Per-class memory `G_j` and the previous iteration's pilot statistics, one
/// scalar estimation problem per network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMemory {
    g: Vec<Vec<f64>>,
    prev_mean: Vec<Vec<f64>>,
    prev_var: Vec<Vec<f64>>,
    has_prev: bool,
    counts: FallbackCounts,
}

impl ClassMemory {
    /// `G_j = 0` for every class, no previous statistics.
    pub fn new(n_classes: usize, n_params: usize) -> Self {
        Self {
            g: vec![vec![0.0; n_params]; n_classes],
            prev_mean: vec![vec![0.0; n_params]; n_classes],
            prev_var: vec![vec![0.0; n_params]; n_classes],
            has_prev: false,
            counts: FallbackCounts::default(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.g.len()
    }

    pub fn memory(&self, class: usize) -> &[f64] {
        &self.g[class]
    }

    /// Pilot mean and variance from the last iteration, if any.
    pub fn prev_stats(&self, class: usize) -> Option<(&[f64], &[f64])> {
        self.has_prev
            .then(|| (self.prev_mean[class].as_slice(), self.prev_var[class].as_slice()))
    }

    pub fn counts(&self) -> FallbackCounts {
        self.counts
    }
}

/// Mean and `n - 1` variance of per-sample gradients over `rows`, per parameter.
fn pilot_stats(
    params: &MlpParams,
    data: &LabeledDataset,
    rows: &[usize],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_params = params.as_slice().len();
    let mut mean = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    for (n, &i) in rows.iter().enumerate() {
        let g = sample_grad(params, data, i, lambda)?;
        let inv = 1.0 / (n + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(g.as_slice()) {
            let d = x - *m;
            *m += d * inv;
            *s += d * (x - *m);
        }
    }
    let denom = rows.len().saturating_sub(1).max(1) as f64;
    for s in m2.iter_mut() {
        *s /= denom;
    }
    Ok((mean, m2))
}

/// One MSSG direction `Σ_j w_j (G_j + E_j)` at fixed parameters.
///
/// Per class: draws a pilot batch and computes per-parameter `E_j, V_j`; forms
/// `(p, q)` from the previous iteration's statistics (the memoryless pair on the
/// first call); draws one fresh sample `ξ` and sets `G_j ← p∘G_j + q∘(E_j − g_ξ)`.
/// The memory and statistics in `memory` advance by one iteration.
pub fn mssg_direction(
    params: &MlpParams,
    data: &LabeledDataset,
    memory: &mut ClassMemory,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n_params = params.as_slice().len();
    if memory.n_classes() != data.n_classes() || memory.g.first().map_or(0, Vec::len) != n_params {
        return Err(Error::Shape(format!(
            "memory for {} classes does not fit {} classes and {n_params} parameters",
            memory.n_classes(),
            data.n_classes()
        )));
    }
    if let Some(c) = data.class_index().iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("class {c} has no samples")));
    }
    let weights = class_weights(data);
    let mut direction = vec![0.0; n_params];
    for (j, members) in data.class_index().iter().enumerate() {
        let take = config.pilot_size.min(members.len());
        let rows: Vec<usize> = index::sample(rng, members.len(), take)
            .into_iter()
            .map(|i| members[i])
            .collect();
        let (mean, var) = pilot_stats(params, data, &rows, config.lambda)?;
        let xi = members[rng.random_range(0..members.len())];
        let fresh = sample_grad(params, data, xi, config.lambda)?;

        let g = &mut memory.g[j];
        for i in 0..n_params {
            let c = if memory.has_prev {
                let c = optimal_coefficients(
                    memory.prev_mean[j][i],
                    memory.prev_var[j][i],
                    mean[i],
                    var[i],
                )?
                .stabilized();
                memory.counts.record(c.degenerate);
                c
            } else {
                Coefficients::FRESH
            };
            g[i] = c.p * g[i] + c.q * (mean[i] - fresh.as_slice()[i]);
            direction[i] += weights[j] * (g[i] + mean[i]);
        }
        memory.prev_mean[j] = mean;
        memory.prev_var[j] = var;
    }
    memory.has_prev = true;
    Ok(direction)
}

/// Trains with MSSG and reports accuracy at every checkpoint.
pub fn mssg_train(
    params: MlpParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut memory = ClassMemory::new(train.n_classes(), params.as_slice().len());
    let mut rng = rng::stream(config.seed, &[tag::TRAINER, Algorithm::Mssg.stream()]);
    let scale = match config.update_scale {
        UpdateScale::AlgorithmVerbatim => config.h / train.n_classes() as f64,
        UpdateScale::Eq2Weights => config.h,
    };
    let (params, reports) = drive(params, train, test, config, Algorithm::Mssg, |p| {
        let d = mssg_direction(p, train, &mut memory, config, &mut rng)?;
        for (w, d) in p.as_mut_slice().iter_mut().zip(&d) {
            *w -= scale * d;
        }
        Ok(())
    })?;
    Ok(TrainOutcome {
        params,
        reports,
        counts: memory.counts(),
    })
}
