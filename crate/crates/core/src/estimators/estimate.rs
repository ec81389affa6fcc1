use crate::error::{Error, Result};
use crate::population::StratumStats;

use super::coefficients::{coefficients_for, Coefficients, Degeneracy};

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_strata(n_samples: usize, weights: &[f64]) -> Result<()> {
    if n_samples != weights.len() {
        return Err(Error::Shape(format!(
            "{n_samples} sample sets for {} strata",
            weights.len()
        )));
    }
    Ok(())
}

/// Memoryless stratified estimate `Σ_j w_j mean(samples_j)`.
pub fn gst_estimate<S: AsRef<[f64]>>(samples: &[S], weights: &[f64]) -> Result<f64> {
    check_strata(samples.len(), weights)?;
    let mut acc = 0.0;
    for (j, (s, w)) in samples.iter().zip(weights).enumerate() {
        let s = s.as_ref();
        if s.is_empty() {
            return Err(Error::Shape(format!("no sample for stratum {j}")));
        }
        acc += w * mean(s);
    }
    Ok(acc)
}

pub fn sgd_estimate(sample: f64) -> f64 {
    sample
}

pub fn batch_estimate(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(mean(samples))
}

/// Per-kind tally of coefficient branches taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FallbackCounts {
    pub zero_over_zero: u64,
    pub guarded_denominator: u64,
    pub zero_previous_mean: u64,
    pub p_magnitude: u64,
}

impl FallbackCounts {
    pub fn record(&mut self, d: Degeneracy) {
        match d {
            Degeneracy::None => {}
            Degeneracy::ZeroOverZero => self.zero_over_zero += 1,
            Degeneracy::GuardedDenominator => self.guarded_denominator += 1,
            Degeneracy::ZeroPreviousMean => self.zero_previous_mean += 1,
            Degeneracy::PMagnitude => self.p_magnitude += 1,
        }
    }

    /// Events where the memory was discarded (`p = 0, q = 1`).
    pub fn fallbacks(&self) -> u64 {
        self.guarded_denominator + self.zero_previous_mean + self.p_magnitude
    }

    pub fn merge(&mut self, other: &FallbackCounts) {
        self.zero_over_zero += other.zero_over_zero;
        self.guarded_denominator += other.guarded_denominator;
        self.zero_previous_mean += other.zero_previous_mean;
        self.p_magnitude += other.p_magnitude;
    }
}

/// Memory vector of the memory-type stratified estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    g: Vec<f64>,
    prev_stats: Vec<StratumStats>,
    iteration: usize,
    last: Vec<Coefficients>,
    counts: FallbackCounts,
}

impl MemoryState {
    /// Fills the memory with the first per-stratum samples.
    ///
    /// The returned estimate equals [`gst_estimate`] of the same samples.
    pub fn init<S: AsRef<[f64]>>(
        first_samples: &[S],
        stats: &[StratumStats],
        weights: &[f64],
    ) -> Result<(Self, f64)> {
        check_strata(first_samples.len(), weights)?;
        check_strata(stats.len(), weights)?;
        let estimate = gst_estimate(first_samples, weights)?;
        let g = first_samples.iter().map(|s| mean(s.as_ref())).collect();
        let state = Self {
            g,
            prev_stats: stats.to_vec(),
            iteration: 1,
            last: Vec::new(),
            counts: FallbackCounts::default(),
        };
        Ok((state, estimate))
    }

    /// `G_j <- p_j G_j + q_j fresh_j` with coefficients from the stored and the
    /// given statistics; returns `Σ_j w_j G_j`.
    pub fn step(&mut self, fresh: &[f64], stats: &[StratumStats], weights: &[f64]) -> Result<f64> {
        check_strata(fresh.len(), weights)?;
        check_strata(stats.len(), weights)?;
        check_strata(self.g.len(), weights)?;
        let coeffs = self
            .prev_stats
            .iter()
            .zip(stats)
            .map(|(&prev, &curr)| coefficients_for(prev, curr).map(Coefficients::stabilized))
            .collect::<Result<Vec<_>>>()?;
        for (g, (c, &x)) in self.g.iter_mut().zip(coeffs.iter().zip(fresh)) {
            *g = c.p * *g + c.q * x;
            self.counts.record(c.degenerate);
        }
        self.prev_stats.copy_from_slice(stats);
        self.iteration += 1;
        self.last = coeffs;
        Ok(self.estimate(weights))
    }

    pub fn estimate(&self, weights: &[f64]) -> f64 {
        self.g.iter().zip(weights).map(|(g, w)| w * g).sum()
    }

    pub fn memory(&self) -> &[f64] {
        &self.g
    }

    pub fn prev_stats(&self) -> &[StratumStats] {
        &self.prev_stats
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Coefficients applied by the most recent step.
    pub fn last_coefficients(&self) -> &[Coefficients] {
        &self.last
    }

    pub fn counts(&self) -> FallbackCounts {
        self.counts
    }
}

/// Free-function form of [`MemoryState::init`].
pub fn gmst_init<S: AsRef<[f64]>>(
    first_samples: &[S],
    stats: &[StratumStats],
    weights: &[f64],
) -> Result<(MemoryState, f64)> {
    MemoryState::init(first_samples, stats, weights)
}

/// Free-function form of [`MemoryState::step`].
pub fn gmst_step(
    mut state: MemoryState,
    fresh: &[f64],
    stats: &[StratumStats],
    weights: &[f64],
) -> Result<(MemoryState, f64)> {
    let est = state.step(fresh, stats, weights)?;
    Ok((state, est))
}
