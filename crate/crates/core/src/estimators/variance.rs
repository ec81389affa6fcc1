//! Variance of the memory-type estimator under optimal coefficients, and the
//! geometric bound on how memory variance decays across rounds.

use crate::error::{Error, Result};
use crate::population::StratumStats;

/// Contribution of one stratum (before the `w_j²` factor) to the minimal variance:
/// `E² V' V / (E² V' + E'² V)`.
///
/// Both means zero uses the `0/0 = 1` limit `V' V / (V' + V)`. A zero denominator
/// with `V = 0` gives 0 (the fresh draw is exact). `None` is left for `E' = V' = 0`
/// with `V > 0`, where no unbiased mixing exists.
pub fn vsp_stratum_term(prev: StratumStats, curr: StratumStats) -> Option<f64> {
    let (e0, v0, e1, v1) = (prev.mean, prev.variance, curr.mean, curr.variance);
    if v1 == 0.0 {
        return Some(0.0);
    }
    if e0 == 0.0 && e1 == 0.0 {
        return Some(v0 * v1 / (v0 + v1));
    }
    let a = e1 * e1 * v0;
    let den = a + e0 * e0 * v1;
    (den > 0.0).then(|| a * v1 / den)
}

/// Predicted variance of the memory-type estimator, `Σ_j w_j² term_j`.
pub fn predicted_variance_vsp(
    stats_prev: &[StratumStats],
    stats_curr: &[StratumStats],
    weights: &[f64],
) -> Result<f64> {
    if stats_prev.len() != weights.len() || stats_curr.len() != weights.len() {
        return Err(Error::Shape("stats and weights disagree on the number of strata".into()));
    }
    let mut total = 0.0;
    for (j, ((&prev, &curr), w)) in stats_prev.iter().zip(stats_curr).zip(weights).enumerate() {
        let term = vsp_stratum_term(prev, curr).ok_or_else(|| Error::Degenerate {
            stratum: j,
            reason: "zero denominator with no limit form".into(),
        })?;
        total += w * w * term;
    }
    Ok(total)
}

/// Variance of the memoryless stratified estimate with one draw per stratum,
/// `Σ_j w_j² V_j`.
pub fn stratified_variance(stats: &[StratumStats], weights: &[f64]) -> f64 {
    stats
        .iter()
        .zip(weights)
        .map(|(s, w)| w * w * s.variance)
        .sum()
}

/// `p^{2t} v_mst + Σ_{i=1..t} p^{2(t-i)} q² v_st[i]`.
pub fn variance_bound(v_mst_k: f64, v_st_seq: &[f64], p: f64, q: f64, t: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bound needs 0 < p, q < 1, got p = {p}, q = {q}"
        )));
    }
    if v_st_seq.len() != t {
        return Err(Error::Shape(format!(
            "expected {t} stratified variances, got {}",
            v_st_seq.len()
        )));
    }
    let p2 = p * p;
    let mut bound = p2.powi(t as i32) * v_mst_k;
    for (i, v) in v_st_seq.iter().enumerate() {
        bound += p2.powi((t - 1 - i) as i32) * q * q * v;
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(mean: f64, variance: f64) -> StratumStats {
        StratumStats { mean, variance }
    }

    #[test]
    fn hand_value() {
        let v = predicted_variance_vsp(&[st(2.0, 1.0)], &[st(1.0, 1.0)], &[1.0]).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_previous_variance_gives_zero() {
        let prev = [st(1.0, 0.0), st(-2.0, 0.0)];
        let curr = [st(1.5, 2.0), st(-1.0, 3.0)];
        assert_eq!(predicted_variance_vsp(&prev, &curr, &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn zero_means_use_limit() {
        let v = predicted_variance_vsp(&[st(0.0, 3.0)], &[st(0.0, 1.0)], &[1.0]).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert_eq!(predicted_variance_vsp(&[st(0.0, 0.0)], &[st(0.0, 0.0)], &[1.0]).unwrap(), 0.0);
        assert_eq!(predicted_variance_vsp(&[st(3.0, 0.0)], &[st(2.0, 0.0)], &[1.0]).unwrap(), 0.0);
        assert!(predicted_variance_vsp(&[st(0.0, 0.0)], &[st(1.0, 2.0)], &[1.0]).is_err());
    }

    #[test]
    fn bound_single_step_and_memoryless_limit() {
        let b = variance_bound(2.0, &[3.0], 0.4, 0.3, 1).unwrap();
        assert!((b - (0.16 * 2.0 + 0.09 * 3.0)).abs() < 1e-15);
        let b = variance_bound(5.0, &[1.0, 2.0, 7.0], 1e-9, 0.5, 3).unwrap();
        assert!((b - 0.25 * 7.0).abs() < 1e-12);
        assert!(variance_bound(1.0, &[1.0], 1.0, 0.5, 1).is_err());
        assert!(variance_bound(1.0, &[1.0], 0.5, 0.0, 1).is_err());
        assert!(variance_bound(1.0, &[1.0, 1.0], 0.5, 0.5, 1).is_err());
    }
}
