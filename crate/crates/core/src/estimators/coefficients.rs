//! Mixing coefficients of the memory-type estimator.
//!
//! For one stratum with previous-round statistics `(E', V')` and current-round
//! statistics `(E, V)`, the variance-minimizing unbiased pair is
//!
//! ```text
//! p = E E' V / (E² V' + E'² V)
//! q = E² V'  / (E² V' + E'² V)
//! ```
//!
//! which satisfies `p / (1 - q) = E / E'`.

use crate::error::{Error, Result};
use crate::population::StratumStats;

/// Which branch produced a coefficient pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Degeneracy {
    /// Plain closed form.
    None,
    /// Both means are zero; the `0/0 = 1` limit `p = V/(V'+V)`, `q = V'/(V'+V)`.
    ZeroOverZero,
    /// Denominator vanished relative to its scale; `p = 0, q = 1`.
    GuardedDenominator,
    /// Previous mean is zero while the current one is not; `p = 0, q = 1`.
    ZeroPreviousMean,
    /// `|p| >= 1` from the closed form, replaced by `p = 0, q = 1`.
    PMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub p: f64,
    pub q: f64,
    /// `1 - q`, computed without cancellation when `q` is close to 1.
    pub q_complement: f64,
    pub degenerate: Degeneracy,
}

impl Coefficients {
    /// Memoryless pair: the fresh draw replaces the memory.
    pub const FRESH: Coefficients = Coefficients {
        p: 0.0,
        q: 1.0,
        q_complement: 0.0,
        degenerate: Degeneracy::GuardedDenominator,
    };

    fn fresh(degenerate: Degeneracy) -> Self {
        Coefficients {
            p: 0.0,
            q: 1.0,
            q_complement: 0.0,
            degenerate,
        }
    }

    /// Replaces pairs with `|p| >= 1` by the memoryless pair.
    ///
    /// Contraction of the memory term needs `|p| < 1`; the replacement keeps the
    /// estimator unbiased.
    pub fn stabilized(self) -> Self {
        if self.p.abs() >= 1.0 || !self.p.is_finite() || !self.q.is_finite() {
            Coefficients::fresh(Degeneracy::PMagnitude)
        } else {
            self
        }
    }

    pub fn is_fallback(&self) -> bool {
        !matches!(self.degenerate, Degeneracy::None | Degeneracy::ZeroOverZero)
    }
}

/// Relative size below which the denominator is treated as zero.
pub const DENOMINATOR_EPS: f64 = 1e-12;

/// Closed-form coefficients for one stratum.
///
/// The result is not stabilized; see [`Coefficients::stabilized`].
pub fn optimal_coefficients(
    e_prev: f64,
    v_prev: f64,
    e_curr: f64,
    v_curr: f64,
) -> Result<Coefficients> {
    if !(v_prev >= 0.0) || !(v_curr >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variances must be non-negative, got {v_prev} and {v_curr}"
        )));
    }
    if ![e_prev, v_prev, e_curr, v_curr].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite statistics".into()));
    }
    if e_prev == 0.0 && e_curr == 0.0 {
        if v_curr > 0.0 {
            let s = v_prev + v_curr;
            return Ok(Coefficients {
                p: v_curr / s,
                q: v_prev / s,
                q_complement: v_curr / s,
                degenerate: Degeneracy::ZeroOverZero,
            });
        }
        return Ok(Coefficients::fresh(Degeneracy::GuardedDenominator));
    }
    if e_prev == 0.0 {
        return Ok(Coefficients::fresh(Degeneracy::ZeroPreviousMean));
    }
    let a = e_curr * e_curr * v_prev;
    let b = e_prev * e_prev * v_curr;
    let den = a + b;
    let scale = (e_curr * e_curr).max(e_prev * e_prev) * v_prev.max(v_curr);
    if !(den > DENOMINATOR_EPS * scale) {
        return Ok(Coefficients::fresh(Degeneracy::GuardedDenominator));
    }
    Ok(Coefficients {
        p: e_curr * e_prev * v_curr / den,
        q: a / den,
        q_complement: b / den,
        degenerate: Degeneracy::None,
    })
}

/// [`optimal_coefficients`] on a pair of stratum statistics.
pub fn coefficients_for(prev: StratumStats, curr: StratumStats) -> Result<Coefficients> {
    optimal_coefficients(prev.mean, prev.variance, curr.mean, curr.variance)
}

/// Checks `p / (1 - q) = e_curr / e_prev` to relative tolerance `tol`.
///
/// Both means zero counts as satisfied. A zero previous mean with a non-zero
/// current mean, or `q == 1`, cannot satisfy the ratio form and returns `false`.
pub fn unbiased_condition_holds(c: &Coefficients, e_prev: f64, e_curr: f64, tol: f64) -> bool {
    if e_prev == 0.0 {
        return e_curr == 0.0;
    }
    if c.q_complement == 0.0 {
        return false;
    }
    let lhs = c.p / c.q_complement;
    let rhs = e_curr / e_prev;
    (lhs - rhs).abs() <= tol * rhs.abs()
}
