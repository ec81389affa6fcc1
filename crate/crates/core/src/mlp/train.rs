use crate::error::{Error, Result};

use super::backprop::{loss, loss_and_grad_tapped, Sample};
use super::{MlpParams, MlpShape};

/// A single weight: `layer`, output unit `out`, input unit `input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackedWeight {
    pub layer: usize,
    pub out: usize,
    pub input: usize,
}

impl TrackedWeight {
    /// Weight from the first unit of the last hidden layer to the first output unit.
    pub fn first_output(shape: &MlpShape) -> Self {
        Self {
            layer: shape.n_layers() - 1,
            out: 0,
            input: 0,
        }
    }
}

/// Full-batch gradient descent; returns the final parameters and the loss before
/// every step plus the loss after the last one (`steps + 1` values).
pub fn full_gradient_train(
    params: MlpParams,
    dataset: &[Sample],
    steps: usize,
    alpha: f64,
    lambda: f64,
) -> Result<(MlpParams, Vec<f64>)> {
    full_gradient_train_with(params, dataset, steps, alpha, lambda, None, |_, _, _| {})
}

/// [`full_gradient_train`] with a per-step observer.
///
/// `observe(step, params, tapped)` runs before each update with the parameters the
/// gradient was taken at; `tapped` holds per-sample derivatives for `tap`.
pub fn full_gradient_train_with(
    mut params: MlpParams,
    dataset: &[Sample],
    steps: usize,
    alpha: f64,
    lambda: f64,
    tap: Option<TrackedWeight>,
    mut observe: impl FnMut(usize, &MlpParams, &[f64]),
) -> Result<(MlpParams, Vec<f64>)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let mut losses = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let (l, grad, tapped) = loss_and_grad_tapped(&params, dataset, lambda, tap)?;
        observe(step, &params, &tapped);
        losses.push(l);
        params.axpy(-alpha, &grad);
        if !params.is_finite() {
            return Err(Error::NonFinite { iteration: step });
        }
    }
    losses.push(loss(&params, dataset, lambda)?);
    Ok((params, losses))
}

/// Per-sample derivative of each sample's loss with respect to one weight.
pub fn tracked_gradients(
    params: &MlpParams,
    dataset: &[Sample],
    lambda: f64,
    tracked: TrackedWeight,
) -> Result<Vec<f64>> {
    Ok(loss_and_grad_tapped(params, dataset, lambda, Some(tracked))?.2)
}

/// One entry of a gradient matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradRecord {
    pub sample_index: usize,
    pub iteration: usize,
    pub grad_value: f64,
}

/// Samples × iterations matrix of a tracked weight's per-sample gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMatrix {
    n_samples: usize,
    columns: Vec<Vec<f64>>,
}

impl GradMatrix {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            columns: Vec::new(),
        }
    }

    pub fn push_column(&mut self, column: Vec<f64>) -> Result<()> {
        if column.len() != self.n_samples {
            return Err(Error::Shape(format!(
                "column of {} values for {} samples",
                column.len(),
                self.n_samples
            )));
        }
        self.columns.push(column);
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_iterations(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, iteration: usize) -> &[f64] {
        &self.columns[iteration]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn get(&self, sample: usize, iteration: usize) -> f64 {
        self.columns[iteration][sample]
    }

    /// Mean of every column: the full-batch gradient of the tracked weight.
    pub fn column_means(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// Records in sample-major order.
    pub fn records(&self) -> impl Iterator<Item = GradRecord> + '_ {
        (0..self.n_samples).flat_map(move |i| {
            self.columns
                .iter()
                .enumerate()
                .map(move |(t, c)| GradRecord {
                    sample_index: i,
                    iteration: t,
                    grad_value: c[i],
                })
        })
    }
}

/// Gradient matrix over a sequence of parameter snapshots, one column per snapshot.
pub fn record_weight_gradient(
    params_sequence: &[MlpParams],
    dataset: &[Sample],
    lambda: f64,
    tracked: TrackedWeight,
) -> Result<GradMatrix> {
    let mut m = GradMatrix::new(dataset.len());
    for p in params_sequence {
        m.push_column(tracked_gradients(p, dataset, lambda, tracked)?)?;
    }
    Ok(m)
}
