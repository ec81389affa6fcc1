//! The experiments behind each subcommand, as plain functions returning data.
//! File output lives in the command layer.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimators::{
    optimal_coefficients, summarize, trace_estimators, vsp_stratum_term, TraceSet, TraceSummary,
};
use crate::mlp::{full_gradient_train_with, init_params, Activation, GradMatrix, MlpShape, TrackedWeight};
use crate::population::{synthetic_family, PopulationRound, StratifiedPopulation, Stratum, StratumStats, Trend};
use crate::rng::{self, tag};

/// Samples per round for the pooled batch estimator in the synthetic experiments.
pub const SYNTHETIC_BATCH: usize = 4;
/// Pooled batch size and class count budget of the gradient-matrix replay.
pub const GRADMATRIX_BATCH: usize = 10;

/// Seed of replication `r` under a run seed.
pub fn replication_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub family: Trend,
    /// Population of the first seed.
    pub population: PopulationRound,
    pub sets: Vec<TraceSet>,
    pub summary: Vec<TraceSummary>,
}

/// Regenerates the family's population and traces all four estimators once per seed.
pub fn synthetic_experiment(family: Trend, seeds: usize, seed: u64) -> Result<SyntheticRun> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let mut population = None;
    let mut sets = Vec::with_capacity(seeds);
    for r in 0..seeds {
        let s = replication_seed(seed, r);
        let rounds = synthetic_family(family, s)?;
        sets.push(trace_estimators(&rounds, 1, SYNTHETIC_BATCH, s)?);
        population.get_or_insert(rounds);
    }
    let summary = summarize(&sets);
    Ok(SyntheticRun {
        family,
        population: population.expect("at least one seed"),
        sets,
        summary,
    })
}

/// One stratum of a variance-oracle case: previous and current statistics and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStratum {
    pub prev: StratumStats,
    pub curr: StratumStats,
    pub weight: f64,
}

impl std::str::FromStr for OracleStratum {
    type Err = Error;

    /// `E',V',E,V` or `E',V',E,V,w` (weight defaults to 1).
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("stratum `{s}`: {e}")))?;
        if v.len() != 4 && v.len() != 5 {
            return Err(Error::InvalidArgument(format!(
                "stratum `{s}` needs E',V',E,V[,w]"
            )));
        }
        Ok(OracleStratum {
            prev: StratumStats::new(v[0], v[1])?,
            curr: StratumStats::new(v[2], v[3])?,
            weight: v.get(4).copied().unwrap_or(1.0),
        })
    }
}

/// Predicted against Monte-Carlo variance for one stratum (`stratum = None` for the
/// weighted total).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub case: usize,
    pub stratum: Option<usize>,
    pub predicted: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub z: f64,
}

/// Random non-degenerate cases: 1 to 4 strata, means of either sign away from 0,
/// variances in `[0.1, 5]`, weights summing to 1.
pub fn random_oracle_cases(n: usize, seed: u64) -> Vec<Vec<OracleStratum>> {
    let mut rng = rng::stream(seed, &[tag::VARIANCE_ORACLE, u64::MAX]);
    (0..n)
        .map(|_| {
            let k = rng.random_range(1..=4);
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mean = |rng: &mut rng::Rng| {
                let m: f64 = rng.random_range(0.5..5.0);
                if rng.random_bool(0.5) { m } else { -m }
            };
            raw.iter()
                .map(|w| {
                    let prev = StratumStats { mean: mean(&mut rng), variance: rng.random_range(0.1..5.0) };
                    let curr = StratumStats { mean: mean(&mut rng), variance: rng.random_range(0.1..5.0) };
                    OracleStratum { prev, curr, weight: w / total }
                })
                .collect()
        })
        .collect()
}

struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    values: Vec<f64>,
}

impl Moments {
    fn new(cap: usize) -> Self {
        Self { n: 0.0, mean: 0.0, m2: 0.0, values: Vec::with_capacity(cap) }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
        self.values.push(x);
    }

    /// Sample variance and its standard error from the fourth central moment.
    fn variance_with_error(&self) -> (f64, f64) {
        let n = self.n;
        let var = self.m2 / (n - 1.0);
        let m4 = self.values.iter().map(|x| (x - self.mean).powi(4)).sum::<f64>() / n;
        let s4 = (self.m2 / n).powi(2);
        let se = ((m4 - (n - 3.0) / (n - 1.0) * s4).max(0.0) / n).sqrt();
        (var, se)
    }
}

fn z_score(empirical: f64, predicted: f64, se: f64) -> f64 {
    let diff = empirical - predicted;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * predicted.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Monte-Carlo check of the minimal-variance formula: per replication every stratum
/// draws an independent memory value `G' ~ N(E', V')` and fresh value `g ~ N(E, V)`
/// and forms `p G' + q g` with the optimal coefficients (no stabilization).
pub fn variance_oracle(
    cases: &[Vec<OracleStratum>],
    replications: usize,
    seed: u64,
) -> Result<Vec<OracleRow>> {
    if replications < 2 {
        return Err(Error::InvalidArgument("need at least 2 replications".into()));
    }
    let mut rows = Vec::new();
    for (c, strata) in cases.iter().enumerate() {
        if strata.is_empty() {
            return Err(Error::InvalidArgument(format!("case {c} has no strata")));
        }
        let mut predicted = Vec::with_capacity(strata.len());
        let mut coef = Vec::with_capacity(strata.len());
        let mut dists = Vec::with_capacity(strata.len());
        for (j, s) in strata.iter().enumerate() {
            predicted.push(vsp_stratum_term(s.prev, s.curr).ok_or_else(|| Error::Degenerate {
                stratum: j,
                reason: "previous mean and variance are zero while the current variance is not".into(),
            })?);
            coef.push(optimal_coefficients(s.prev.mean, s.prev.variance, s.curr.mean, s.curr.variance)?);
            let normal = |st: StratumStats| {
                Normal::new(st.mean, st.variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))
            };
            dists.push((normal(s.prev)?, normal(s.curr)?));
        }
        let mut per = (0..strata.len()).map(|_| Moments::new(replications)).collect::<Vec<_>>();
        let mut total = Moments::new(replications);
        let mut rng = rng::stream(seed, &[tag::VARIANCE_ORACLE, c as u64]);
        for _ in 0..replications {
            let mut t = 0.0;
            for (j, s) in strata.iter().enumerate() {
                let y = coef[j].p * dists[j].0.sample(&mut rng) + coef[j].q * dists[j].1.sample(&mut rng);
                per[j].push(y);
                t += s.weight * y;
            }
            total.push(t);
        }
        for (j, m) in per.iter().enumerate() {
            let (empirical, std_error) = m.variance_with_error();
            rows.push(OracleRow {
                case: c,
                stratum: Some(j),
                predicted: predicted[j],
                empirical,
                std_error,
                z: z_score(empirical, predicted[j], std_error),
            });
        }
        let pred: f64 = strata.iter().zip(&predicted).map(|(s, v)| s.weight * s.weight * v).sum();
        let (empirical, std_error) = total.variance_with_error();
        rows.push(OracleRow {
            case: c,
            stratum: None,
            predicted: pred,
            empirical,
            std_error,
            z: z_score(empirical, pred, std_error),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradmatrixConfig {
    pub shape: MlpShape,
    pub activation: Activation,
    /// Full-gradient iterations, one matrix column each.
    pub iterations: usize,
    pub replications: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl GradmatrixConfig {
    /// 2,000-sample, `[784,50,50,20,10]`, 10-iteration preset.
    pub fn desk(seed: u64) -> Self {
        Self {
            shape: MlpShape::new(MlpShape::DESK.to_vec()).expect("valid preset"),
            activation: Activation::Sigmoid,
            iterations: 10,
            replications: 10,
            alpha: 0.2,
            lambda: 0.001,
            seed,
        }
    }

    /// `[784,500,500,200,10]`, 60-iteration preset.
    pub fn full(seed: u64) -> Self {
        Self {
            shape: MlpShape::new(MlpShape::REFERENCE.to_vec()).expect("valid preset"),
            iterations: 60,
            ..Self::desk(seed)
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradmatrixRun {
    pub tracked: TrackedWeight,
    pub matrix: GradMatrix,
    /// Loss before each iteration plus after the last.
    pub losses: Vec<f64>,
    /// One round per column, classes as strata.
    pub rounds: PopulationRound,
    pub sets: Vec<TraceSet>,
    pub summary: Vec<TraceSummary>,
}

/// Matrix columns regrouped by class into one stratified population per iteration.
pub fn rounds_from_matrix(matrix: &GradMatrix, data: &LabeledDataset) -> Result<PopulationRound> {
    if matrix.n_samples() != data.len() {
        return Err(Error::Shape(format!(
            "matrix has {} rows for {} samples",
            matrix.n_samples(),
            data.len()
        )));
    }
    let rounds = matrix
        .columns()
        .iter()
        .map(|col| {
            let strata = data
                .class_index()
                .iter()
                .enumerate()
                .map(|(j, rows)| Stratum::new(j, rows.iter().map(|&i| col[i]).collect()))
                .collect::<Result<Vec<_>>>()?;
            StratifiedPopulation::new(strata)
        })
        .collect::<Result<Vec<_>>>()?;
    PopulationRound::new(rounds, None)
}

/// Trains full-gradient descent, records the tracked weight's per-sample gradient at
/// every iteration, then replays the four estimators over the columns with the
/// class statistics of each column: one draw per class for the stratified
/// estimators, `10` pooled draws for batch, one for SGD.
pub fn gradmatrix_experiment(train: &LabeledDataset, config: &GradmatrixConfig) -> Result<GradmatrixRun> {
    if config.replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let tracked = TrackedWeight::first_output(&config.shape);
    let params = init_params(&config.shape, config.activation, config.seed);
    let mut matrix = GradMatrix::new(train.len());
    let mut pushed = Ok(());
    let (_, losses) = full_gradient_train_with(
        params,
        &train.samples(),
        config.iterations,
        config.alpha,
        config.lambda,
        Some(tracked),
        |_, _, tapped| {
            if pushed.is_ok() {
                pushed = matrix.push_column(tapped.to_vec());
            }
        },
    )?;
    pushed?;
    let rounds = rounds_from_matrix(&matrix, train)?;
    let batch = GRADMATRIX_BATCH.min(train.len());
    let sets = (0..config.replications)
        .map(|r| trace_estimators(&rounds, 1, batch, replication_seed(config.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&sets);
    Ok(GradmatrixRun {
        tracked,
        matrix,
        losses,
        rounds,
        sets,
        summary,
    })
}
