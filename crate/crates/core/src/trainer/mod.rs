//! Training loops: the memory-type stratified gradient trainer (MSSG), its
//! baselines, accuracy checkpoints and a hyperparameter grid search.
//!
//! All trainers draw from one seeded stream and run single-threaded, so a
//! configuration and seed fully determine the trajectory.

mod baseline;
mod grid;
mod mssg;

use std::fmt;
use std::str::FromStr;

use crate::dataio::{Csv, LabeledDataset};
use crate::error::{Error, Result};
use crate::estimators::FallbackCounts;
use crate::mlp::{predict, MlpParams};

pub use baseline::{baseline_train, fullgrad_train, BaselineKind};
pub use grid::{grid_search, GridCell, GridResult};
pub use mssg::{mssg_direction, mssg_train, ClassMemory};

/// How the summed class directions are scaled in the MSSG update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateScale {
    /// `W -= (h / C) Σ w_j (G_j + E_j)`, as in the published pseudocode.
    #[default]
    AlgorithmVerbatim,
    /// `W -= h Σ w_j (G_j + E_j)`.
    Eq2Weights,
}

impl UpdateScale {
    pub fn name(self) -> &'static str {
        match self {
            UpdateScale::AlgorithmVerbatim => "algorithm-verbatim",
            UpdateScale::Eq2Weights => "eq2-weights",
        }
    }
}

impl FromStr for UpdateScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm-verbatim" => Ok(UpdateScale::AlgorithmVerbatim),
            "eq2-weights" => Ok(UpdateScale::Eq2Weights),
            _ => Err(Error::InvalidArgument(format!(
                "unknown update scale `{s}` (expected algorithm-verbatim or eq2-weights)"
            ))),
        }
    }
}

impl fmt::Display for UpdateScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Step size `h`.
    pub h: f64,
    /// Pooled batch size of the `Batch` baseline.
    pub batch_size: usize,
    /// Pilot samples per class for MSSG's per-iteration mean and variance.
    pub pilot_size: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub seed: u64,
    pub update_scale: UpdateScale,
    /// Accuracy is evaluated every this many iterations and after the last one.
    pub checkpoint_every: usize,
    /// SGD takes this many single-sample steps per counted iteration.
    pub sgd_multiplier: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            h: 0.1,
            batch_size: 10,
            pilot_size: 8,
            iterations: 1000,
            lambda: 0.001,
            seed: 0,
            update_scale: UpdateScale::AlgorithmVerbatim,
            checkpoint_every: 1000,
            sgd_multiplier: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.h));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.pilot_size < 2 {
            return bad(format!("pilot size must be at least 2, got {}", self.pilot_size));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint interval must be at least 1".into());
        }
        if self.sgd_multiplier == 0 {
            return bad("sgd multiplier must be at least 1".into());
        }
        Ok(())
    }
}

/// Trainer names accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mssg,
    Sgd,
    Batch,
    Gst,
    FullGrad,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Mssg,
        Algorithm::Sgd,
        Algorithm::Batch,
        Algorithm::Gst,
        Algorithm::FullGrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mssg => "mssg",
            Algorithm::Sgd => "sgd",
            Algorithm::Batch => "batch",
            Algorithm::Gst => "gst",
            Algorithm::FullGrad => "fullgrad",
        }
    }

    fn stream(self) -> u64 {
        self as u64
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown algorithm `{s}` (expected mssg, sgd, batch, gst or fullgrad)"
                ))
            })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// Counted iterations completed (SGD's multiplier not applied).
    pub iterations: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub algorithm: Algorithm,
    pub h: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub reports: Vec<AccuracyReport>,
    /// Coefficient branch tallies (MSSG only; zero for the baselines).
    pub counts: FallbackCounts,
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(params: &MlpParams, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty dataset".into()));
    }
    let predicted = predict(params, &data.inputs())?;
    let hits = predicted
        .iter()
        .zip(data.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Table with columns `iterations_k,algorithm,test_accu,train_accu,h,lambda,seed`.
pub fn reports_csv(reports: &[AccuracyReport], seed: u64) -> Csv {
    let mut csv = Csv::new([
        "iterations_k",
        "algorithm",
        "test_accu",
        "train_accu",
        "h",
        "lambda",
        "seed",
    ]);
    for r in reports {
        csv.push(vec![
            format!("{}", r.iterations as f64 / 1000.0),
            r.algorithm.name().to_string(),
            format!("{:.6}", r.test_accuracy),
            format!("{:.6}", r.train_accuracy),
            format!("{}", r.h),
            format!("{}", r.lambda),
            seed.to_string(),
        ]);
    }
    csv
}

fn check_data(params: &MlpParams, train: &LabeledDataset, test: &LabeledDataset) -> Result<()> {
    let shape = params.shape();
    for (name, d) in [("training", train), ("test", test)] {
        if d.is_empty() {
            return Err(Error::InvalidArgument(format!("{name} set is empty")));
        }
        if d.dim() != shape.input_dim() {
            return Err(Error::Shape(format!(
                "{name} rows have {} features, network expects {}",
                d.dim(),
                shape.input_dim()
            )));
        }
        if d.n_classes() > shape.n_classes() {
            return Err(Error::Shape(format!(
                "{name} set has {} classes, network outputs {}",
                d.n_classes(),
                shape.n_classes()
            )));
        }
    }
    Ok(())
}

/// Runs `step` for `config.iterations` counted iterations, checking finiteness
/// after every update and recording accuracy at checkpoints.
fn drive(
    mut params: MlpParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &TrainConfig,
    algorithm: Algorithm,
    mut step: impl FnMut(&mut MlpParams) -> Result<()>,
) -> Result<(MlpParams, Vec<AccuracyReport>)> {
    config.validate()?;
    check_data(&params, train, test)?;
    let mut reports = Vec::new();
    for k in 1..=config.iterations {
        step(&mut params)?;
        if !params.is_finite() {
            return Err(Error::NonFinite { iteration: k });
        }
        if k % config.checkpoint_every == 0 || k == config.iterations {
            reports.push(AccuracyReport {
                iterations: k,
                train_accuracy: accuracy(&params, train)?,
                test_accuracy: accuracy(&params, test)?,
                algorithm,
                h: config.h,
                lambda: config.lambda,
            });
        }
    }
    Ok((params, reports))
}

/// Stratum weights `N_j / N`.
fn class_weights(data: &LabeledDataset) -> Vec<f64> {
    let n = data.len() as f64;
    data.class_sizes().iter().map(|&s| s as f64 / n).collect()
}

/// Per-sample gradient, including the decay term.
fn sample_grad(params: &MlpParams, data: &LabeledDataset, i: usize, lambda: f64) -> Result<MlpParams> {
    Ok(crate::mlp::loss_and_grad(params, &[data.sample(i)], lambda)?.1)
}
