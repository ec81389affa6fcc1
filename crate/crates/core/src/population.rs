//! Stratified scalar populations and the synthetic round generators.
//!
//! A [`StratifiedPopulation`] is a finite sampling universe split into strata; the
//! weight of a stratum is its share of the pooled size. A [`PopulationRound`] is a
//! sequence of such populations sharing one layout, one per estimation round.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// One sub-population.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    label: usize,
    values: Vec<f64>,
}

impl Stratum {
    pub fn new(label: usize, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape(format!("stratum {label} has no values")));
        }
        Ok(Self { label, values })
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Exact statistics of a finite stratum. `variance` divides by the count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumStats {
    pub mean: f64,
    pub variance: f64,
}

impl StratumStats {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "stratum stats need a finite mean and non-negative variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }
}

/// Population mean and variance (divide by n) of a stratum, single pass.
pub fn stratum_stats(s: &Stratum) -> StratumStats {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in s.values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    StratumStats {
        mean,
        variance: (m2 / s.values.len() as f64).max(0.0),
    }
}

/// A population split into strata with weights `N_j / N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedPopulation {
    strata: Vec<Stratum>,
    weights: Vec<f64>,
}

impl StratifiedPopulation {
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::Shape("population needs at least one stratum".into()));
        }
        let mut labels: Vec<usize> = strata.iter().map(Stratum::label).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate stratum label".into()));
        }
        let total: usize = strata.iter().map(Stratum::len).sum();
        let weights = strata
            .iter()
            .map(|s| s.len() as f64 / total as f64)
            .collect();
        Ok(Self { strata, weights })
    }

    /// Builds strata from contiguous equal blocks of `values`.
    pub fn from_blocks(values: &[f64], n_strata: usize) -> Result<Self> {
        if n_strata == 0 || values.is_empty() || !values.len().is_multiple_of(n_strata) {
            return Err(Error::Shape(format!(
                "{} values cannot be split into {n_strata} equal strata",
                values.len()
            )));
        }
        let size = values.len() / n_strata;
        let strata = values
            .chunks(size)
            .enumerate()
            .map(|(j, c)| Stratum::new(j, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(strata)
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_strata(&self) -> usize {
        self.strata.len()
    }

    pub fn total_len(&self) -> usize {
        self.strata.iter().map(Stratum::len).sum()
    }

    pub fn stats(&self) -> Vec<StratumStats> {
        self.strata.iter().map(stratum_stats).collect()
    }

    /// All values in stratum order.
    pub fn pooled(&self) -> Vec<f64> {
        self.strata
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .collect()
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.strata.len() == other.strata.len()
            && self
                .strata
                .iter()
                .zip(&other.strata)
                .all(|(a, b)| a.label == b.label && a.len() == b.len())
    }
}

/// `Σ_j w_j E_j`.
pub fn population_mean(p: &StratifiedPopulation) -> f64 {
    p.strata
        .iter()
        .zip(&p.weights)
        .map(|(s, w)| w * stratum_stats(s).mean)
        .sum()
}

/// Draws `per_stratum` values without replacement from every stratum.
///
/// Returns `(stratum position, value)` pairs grouped by stratum.
pub fn draw_stratified(
    p: &StratifiedPopulation,
    per_stratum: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(per_stratum * p.n_strata());
    for (j, s) in p.strata.iter().enumerate() {
        if per_stratum > s.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {per_stratum} from stratum {} of size {}",
                s.label,
                s.len()
            )));
        }
        let mut rng = rng::stream(seed, &[tag::DRAW_STRATIFIED, j as u64]);
        for i in index::sample(&mut rng, s.len(), per_stratum) {
            out.push((j, s.values[i]));
        }
    }
    Ok(out)
}

/// Synthetic data families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trend {
    UniformDec,
    UniformInc,
    NormalRandom,
    NormalMeanDec,
    NormalMeanInc,
    NormalVarDec,
    NormalVarInc,
}

impl Trend {
    pub const ALL: [Trend; 7] = [
        Trend::UniformDec,
        Trend::UniformInc,
        Trend::NormalRandom,
        Trend::NormalMeanDec,
        Trend::NormalMeanInc,
        Trend::NormalVarDec,
        Trend::NormalVarInc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trend::UniformDec => "uniform-dec",
            Trend::UniformInc => "uniform-inc",
            Trend::NormalRandom => "normal-random",
            Trend::NormalMeanDec => "normal-mean-dec",
            Trend::NormalMeanInc => "normal-mean-inc",
            Trend::NormalVarDec => "normal-var-dec",
            Trend::NormalVarInc => "normal-var-inc",
        }
    }

    pub fn is_uniform(self) -> bool {
        matches!(self, Trend::UniformDec | Trend::UniformInc)
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trend::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family `{s}`")))
    }
}

/// Rounds with decreasing means.
pub const UNIFORM_DEC_INTERVALS: [(f64, f64); 10] = [
    (8.0, 12.0),
    (8.0, 10.0),
    (6.0, 9.0),
    (5.0, 8.0),
    (4.0, 7.0),
    (3.0, 6.0),
    (3.0, 5.0),
    (2.0, 4.0),
    (2.0, 3.0),
    (0.0, 3.0),
];

/// Rounds with increasing means.
pub const UNIFORM_INC_INTERVALS: [(f64, f64); 10] = [
    (0.0, 3.0),
    (2.0, 3.0),
    (2.0, 4.0),
    (3.0, 5.0),
    (3.0, 6.0),
    (4.0, 7.0),
    (5.0, 8.0),
    (6.0, 9.0),
    (8.0, 10.0),
    (8.0, 12.0),
];

pub const DEFAULT_ROUNDS: usize = 10;
pub const DEFAULT_ROUND_SIZE: usize = 40;
pub const DEFAULT_STRATA: usize = 4;

/// Fixed sigma of the mean-trend schedules and fixed mean of the variance-trend ones.
pub const TREND_FIXED_SIGMA: f64 = 5.0;
pub const TREND_FIXED_MU: f64 = 10.0;
pub const TREND_HIGH: f64 = 20.0;
pub const TREND_LOW: f64 = 2.0;
/// `NormalRandom` draws mu and sigma from this interval, once per round.
pub const RANDOM_PARAM_RANGE: (f64, f64) = (1.0, 20.0);

/// Sequence of rounds sharing the same strata layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationRound {
    rounds: Vec<StratifiedPopulation>,
    trend: Option<Trend>,
    schedule: Vec<(f64, f64)>,
}

impl PopulationRound {
    pub fn new(rounds: Vec<StratifiedPopulation>, trend: Option<Trend>) -> Result<Self> {
        let first = rounds
            .first()
            .ok_or_else(|| Error::Shape("no rounds".into()))?;
        if let Some(bad) = rounds.iter().position(|r| !r.same_layout(first)) {
            return Err(Error::Shape(format!(
                "round {bad} does not share the strata layout of round 0"
            )));
        }
        Ok(Self {
            rounds,
            trend,
            schedule: Vec::new(),
        })
    }

    pub fn rounds(&self) -> &[StratifiedPopulation] {
        &self.rounds
    }

    pub fn trend(&self) -> Option<Trend> {
        self.trend
    }

    /// Per-round generator parameters: `(lo, hi)` for uniform rounds, `(mu, sigma)` for normal ones.
    pub fn schedule(&self) -> &[(f64, f64)] {
        &self.schedule
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// `(round, stratum label, value)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rounds.iter().enumerate().flat_map(|(k, r)| {
            r.strata()
                .iter()
                .flat_map(move |s| s.values().iter().map(move |&v| (k, s.label(), v)))
        })
    }

    /// `key=value` lines describing how the rounds were generated.
    pub fn manifest_entries(&self) -> Vec<(String, String)> {
        let mut out = vec![(
            "family".to_string(),
            self.trend.map_or("custom".to_string(), |t| t.name().to_string()),
        )];
        out.push(("rounds".into(), self.rounds.len().to_string()));
        out.push((
            "strata".into(),
            self.rounds.first().map_or(0, |r| r.n_strata()).to_string(),
        ));
        let kind = match self.trend {
            Some(t) if t.is_uniform() => "uniform(lo,hi)",
            Some(_) => "normal(mu,sigma)",
            None => "none",
        };
        let sched: Vec<String> = self
            .schedule
            .iter()
            .map(|(a, b)| format!("({a},{b})"))
            .collect();
        out.push((format!("schedule_{kind}"), sched.join(";")));
        out
    }
}

/// One round per interval; each round holds `n_per_round` uniform draws split into
/// `n_strata` contiguous strata.
pub fn gen_uniform_rounds(
    intervals: &[(f64, f64)],
    n_per_round: usize,
    n_strata: usize,
    seed: u64,
) -> Result<PopulationRound> {
    if intervals.is_empty() {
        return Err(Error::InvalidArgument("empty interval list".into()));
    }
    check_round_shape(n_per_round, n_strata)?;
    if let Some((lo, hi)) = intervals.iter().find(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidArgument(format!(
            "interval [{lo}, {hi}] is empty"
        )));
    }
    let size = n_per_round / n_strata;
    let rounds = intervals
        .iter()
        .enumerate()
        .map(|(k, &(lo, hi))| {
            let mut values = Vec::with_capacity(n_per_round);
            for j in 0..n_strata {
                let mut rng = rng::stream(seed, &[tag::UNIFORM_ROUNDS, k as u64, j as u64]);
                values.extend((0..size).map(|_| lo + (hi - lo) * rng.random::<f64>()));
            }
            StratifiedPopulation::from_blocks(&values, n_strata)
        })
        .collect::<Result<Vec<_>>>()?;
    let trend = if intervals == UNIFORM_DEC_INTERVALS {
        Some(Trend::UniformDec)
    } else if intervals == UNIFORM_INC_INTERVALS {
        Some(Trend::UniformInc)
    } else {
        None
    };
    let mut out = PopulationRound::new(rounds, trend)?;
    out.schedule = intervals.to_vec();
    Ok(out)
}

/// `(mu, sigma)` per round for a normal family.
///
/// The trend families use linear schedules between [`TREND_HIGH`] and [`TREND_LOW`];
/// `NormalRandom` draws both parameters uniformly from [`RANDOM_PARAM_RANGE`].
pub fn normal_schedule(family: Trend, n_rounds: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if n_rounds == 0 {
        return Err(Error::InvalidArgument("need at least one round".into()));
    }
    let lerp = |from: f64, to: f64, k: usize| {
        if n_rounds == 1 {
            from
        } else {
            from + (to - from) * k as f64 / (n_rounds - 1) as f64
        }
    };
    let sched = (0..n_rounds)
        .map(|k| match family {
            Trend::NormalRandom => {
                let mut rng = rng::stream(seed, &[tag::NORMAL_PARAMS, k as u64]);
                let (lo, hi) = RANDOM_PARAM_RANGE;
                let mu = lo + (hi - lo) * rng.random::<f64>();
                let sigma = lo + (hi - lo) * rng.random::<f64>();
                Ok((mu, sigma))
            }
            Trend::NormalMeanDec => Ok((lerp(TREND_HIGH, TREND_LOW, k), TREND_FIXED_SIGMA)),
            Trend::NormalMeanInc => Ok((lerp(TREND_LOW, TREND_HIGH, k), TREND_FIXED_SIGMA)),
            Trend::NormalVarDec => Ok((TREND_FIXED_MU, lerp(TREND_HIGH, TREND_LOW, k))),
            Trend::NormalVarInc => Ok((TREND_FIXED_MU, lerp(TREND_LOW, TREND_HIGH, k))),
            Trend::UniformDec | Trend::UniformInc => Err(Error::InvalidArgument(format!(
                "{family} is not a normal family"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sched)
}

/// One round per `(mu, sigma)` pair, drawn from `N(mu, sigma)`.
pub fn gen_normal_rounds(
    params: &[(f64, f64)],
    n_per_round: usize,
    n_strata: usize,
    seed: u64,
    family: Option<Trend>,
) -> Result<PopulationRound> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("empty parameter list".into()));
    }
    check_round_shape(n_per_round, n_strata)?;
    let size = n_per_round / n_strata;
    let rounds = params
        .iter()
        .enumerate()
        .map(|(k, &(mu, sigma))| {
            if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "round {k}: sigma must be positive, got {sigma}"
                )));
            }
            let dist = Normal::new(mu, sigma)
                .map_err(|e| Error::InvalidArgument(format!("round {k}: {e}")))?;
            let mut values = Vec::with_capacity(n_per_round);
            for j in 0..n_strata {
                let mut rng = rng::stream(seed, &[tag::NORMAL_ROUNDS, k as u64, j as u64]);
                values.extend((0..size).map(|_| dist.sample(&mut rng)));
            }
            StratifiedPopulation::from_blocks(&values, n_strata)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PopulationRound::new(rounds, family)?;
    out.schedule = params.to_vec();
    Ok(out)
}

/// The standard 10-round, 40-value, 4-stratum data set of a family.
pub fn synthetic_family(family: Trend, seed: u64) -> Result<PopulationRound> {
    match family {
        Trend::UniformDec => gen_uniform_rounds(
            &UNIFORM_DEC_INTERVALS,
            DEFAULT_ROUND_SIZE,
            DEFAULT_STRATA,
            seed,
        ),
        Trend::UniformInc => gen_uniform_rounds(
            &UNIFORM_INC_INTERVALS,
            DEFAULT_ROUND_SIZE,
            DEFAULT_STRATA,
            seed,
        ),
        _ => {
            let params = normal_schedule(family, DEFAULT_ROUNDS, seed)?;
            gen_normal_rounds(
                &params,
                DEFAULT_ROUND_SIZE,
                DEFAULT_STRATA,
                seed,
                Some(family),
            )
        }
    }
}

fn check_round_shape(n_per_round: usize, n_strata: usize) -> Result<()> {
    if n_strata == 0 || n_per_round == 0 || !n_per_round.is_multiple_of(n_strata) {
        return Err(Error::Shape(format!(
            "round size {n_per_round} is not a positive multiple of {n_strata} strata"
        )));
    }
    Ok(())
}
