use crate::error::{Error, Result};

use super::AccuracyReport;

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub h: f64,
    pub lambda: f64,
    pub report: AccuracyReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Every cell, in `alphas`-major order.
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the highest test accuracy.
    pub best: usize,
}

impl GridResult {
    pub fn best_cell(&self) -> &GridCell {
        &self.cells[self.best]
    }
}

/// Evaluates `train_fn(h, lambda)` on every grid cell and picks the highest test
/// accuracy, breaking ties by smaller step size and then smaller lambda.
pub fn grid_search(
    alphas: &[f64],
    lambdas: &[f64],
    mut train_fn: impl FnMut(f64, f64) -> Result<AccuracyReport>,
) -> Result<GridResult> {
    if alphas.is_empty() || lambdas.is_empty() {
        return Err(Error::InvalidArgument("grid needs at least one alpha and one lambda".into()));
    }
    let mut cells = Vec::with_capacity(alphas.len() * lambdas.len());
    for &h in alphas {
        for &lambda in lambdas {
            cells.push(GridCell { h, lambda, report: train_fn(h, lambda)? });
        }
    }
    let better = |a: &GridCell, b: &GridCell| {
        let (ta, tb) = (a.report.test_accuracy, b.report.test_accuracy);
        ta > tb || (ta == tb && (a.h < b.h || (a.h == b.h && a.lambda < b.lambda)))
    };
    let mut best = 0;
    for i in 1..cells.len() {
        if better(&cells[i], &cells[best]) {
            best = i;
        }
    }
    Ok(GridResult { cells, best })
}
