//! Side-by-side replay of the four estimators over a sequence of rounds.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::population::{population_mean, PopulationRound, StratifiedPopulation, StratumStats};
use crate::rng::{self, tag};

use super::estimate::{batch_estimate, gst_estimate, sgd_estimate, FallbackCounts, MemoryState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Gmst,
    Gst,
    Batch,
    Sgd,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Gmst,
        EstimatorKind::Gst,
        EstimatorKind::Batch,
        EstimatorKind::Sgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Gmst => "gmst",
            EstimatorKind::Gst => "gst",
            EstimatorKind::Batch => "batch",
            EstimatorKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// One estimate against the true mean of its round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateTrace {
    pub iteration: usize,
    pub estimate: f64,
    pub truth: f64,
    pub sq_dev: f64,
}

impl EstimateTrace {
    pub fn new(iteration: usize, estimate: f64, truth: f64) -> Self {
        let d = estimate - truth;
        Self {
            iteration,
            estimate,
            truth,
            sq_dev: d * d,
        }
    }
}

/// Traces of all four estimators for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub seed: u64,
    pub traces: Vec<(EstimatorKind, Vec<EstimateTrace>)>,
    pub counts: FallbackCounts,
}

impl TraceSet {
    pub fn get(&self, kind: EstimatorKind) -> &[EstimateTrace] {
        self.traces
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, t)| t.as_slice())
            .unwrap_or(&[])
    }
}

fn sample_values(values: &[f64], n: usize, rng: &mut rng::Rng) -> Vec<f64> {
    index::sample(rng, values.len(), n)
        .into_iter()
        .map(|i| values[i])
        .collect()
}

fn estimator_rng(seed: u64, kind: EstimatorKind, round: usize, stratum: usize) -> rng::Rng {
    rng::stream(
        seed,
        &[tag::TRACE, kind as u64, round as u64, stratum as u64],
    )
}

/// Statistics of the mean of `n` draws without replacement from a stratum of `size`.
fn sample_mean_stats(s: StratumStats, n: usize, size: usize) -> StratumStats {
    if n == 1 || size <= 1 {
        return s;
    }
    let fpc = (size - n) as f64 / (size - 1) as f64;
    StratumStats {
        mean: s.mean,
        variance: s.variance / n as f64 * fpc,
    }
}

/// Runs the memory-type, memoryless stratified, pooled batch and single-draw
/// estimators across `rounds`.
///
/// The stratified estimators take `per_stratum` draws from every stratum per round,
/// the batch estimator `batch_size` pooled draws and the single-draw estimator one.
/// Coefficients of the memory-type estimator use the exact statistics of each round.
/// Every estimator reports one trace per round; the memory-type estimator spends the
/// first round filling its memory, so its first estimate equals the stratified one.
pub fn trace_estimators(
    rounds: &PopulationRound,
    per_stratum: usize,
    batch_size: usize,
    seed: u64,
) -> Result<TraceSet> {
    let first = rounds
        .rounds()
        .first()
        .ok_or_else(|| Error::InvalidArgument("no rounds".into()))?;
    let min_stratum = first.strata().iter().map(|s| s.len()).min().unwrap_or(0);
    if per_stratum == 0 || per_stratum > min_stratum {
        return Err(Error::InvalidArgument(format!(
            "per-stratum draws must be in 1..={min_stratum}, got {per_stratum}"
        )));
    }
    if batch_size == 0 || batch_size > first.total_len() {
        return Err(Error::InvalidArgument(format!(
            "batch size must be in 1..={}, got {batch_size}",
            first.total_len()
        )));
    }

    let mut out: Vec<(EstimatorKind, Vec<EstimateTrace>)> = EstimatorKind::ALL
        .iter()
        .map(|&k| (k, Vec::with_capacity(rounds.len())))
        .collect();
    let mut memory: Option<MemoryState> = None;

    for (k, round) in rounds.rounds().iter().enumerate() {
        let truth = population_mean(round);
        let weights = round.weights();
        let draws = |kind| stratified_draws(round, per_stratum, seed, kind, k);

        // round 1 fills the memory from the stratified estimator's own draws
        let mst_samples = draws(if k == 0 { EstimatorKind::Gst } else { EstimatorKind::Gmst });
        let stats: Vec<StratumStats> = round
            .stats()
            .into_iter()
            .zip(round.strata())
            .map(|(s, st)| sample_mean_stats(s, per_stratum, st.len()))
            .collect();
        let mst = match memory.as_mut() {
            None => {
                let (state, est) = MemoryState::init(&mst_samples, &stats, weights)?;
                memory = Some(state);
                est
            }
            Some(state) => {
                let fresh: Vec<f64> = mst_samples
                    .iter()
                    .map(|s| s.iter().sum::<f64>() / s.len() as f64)
                    .collect();
                state.step(&fresh, &stats, weights)?
            }
        };

        let st = gst_estimate(&draws(EstimatorKind::Gst), weights)?;

        let pooled = round.pooled();
        let mut rng = estimator_rng(seed, EstimatorKind::Batch, k, usize::MAX);
        let batch = batch_estimate(&sample_values(&pooled, batch_size, &mut rng))?;

        let mut rng = estimator_rng(seed, EstimatorKind::Sgd, k, usize::MAX);
        let sgd = sgd_estimate(pooled[rng.random_range(0..pooled.len())]);

        for ((_, trace), est) in out.iter_mut().zip([mst, st, batch, sgd]) {
            trace.push(EstimateTrace::new(k, est, truth));
        }
    }
    Ok(TraceSet {
        seed,
        traces: out,
        counts: memory.map(|m| m.counts()).unwrap_or_default(),
    })
}

fn stratified_draws(
    round: &StratifiedPopulation,
    per_stratum: usize,
    seed: u64,
    kind: EstimatorKind,
    k: usize,
) -> Vec<Vec<f64>> {
    round
        .strata()
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = estimator_rng(seed, kind, k, j);
            sample_values(s.values(), per_stratum, &mut rng)
        })
        .collect()
}

/// Mean and standard deviation of squared deviations over many seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSummary {
    pub kind: EstimatorKind,
    pub mean_sq_dev: f64,
    pub std_sq_dev: f64,
    pub n_rounds: usize,
    pub n_seeds: usize,
}

/// Summaries in [`EstimatorKind::ALL`] order. The standard deviation uses `n - 1`.
pub fn summarize(sets: &[TraceSet]) -> Vec<TraceSummary> {
    EstimatorKind::ALL
        .iter()
        .map(|&kind| {
            let devs: Vec<f64> = sets
                .iter()
                .flat_map(|s| s.get(kind).iter().map(|t| t.sq_dev))
                .collect();
            let n = devs.len();
            let mean = if n == 0 { 0.0 } else { devs.iter().sum::<f64>() / n as f64 };
            let var = if n > 1 {
                devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            TraceSummary {
                kind,
                mean_sq_dev: mean,
                std_sq_dev: var.sqrt(),
                n_rounds: sets.first().map_or(0, |s| s.get(kind).len()),
                n_seeds: sets.len(),
            }
        })
        .collect()
}
