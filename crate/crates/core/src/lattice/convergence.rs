use serde::{Deserialize, Serialize};

use super::solve::{solve_price, Bound};
use super::spec::{build_lattice, Monitoring};
use crate::error::{Error, Result};
use crate::model::{MeasureBand, Payoff};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub n_steps: usize,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub points: Vec<ConvergencePoint>,
    /// Fitted `p` in `|P(n_{k+1}) - P(n_k)| ∝ n_k^{-p}`; absent when fewer
    /// than two nonzero differences exist.
    pub order: Option<f64>,
}

pub fn convergence_sweep(
    band: &MeasureBand,
    payoff: &Payoff,
    steps: &[usize],
    monitoring: Monitoring,
) -> Result<ConvergenceReport> {
    if steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("steps must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(steps.len());
    for &n in steps {
        let spec = build_lattice(band, n)?.with_monitoring(monitoring);
        points.push(ConvergencePoint {
            n_steps: n,
            price: solve_price(&spec, payoff, Bound::Upper)?,
        });
    }
    let diffs: Vec<(f64, f64)> = points
        .windows(2)
        .filter_map(|w| {
            let d = (w[1].price - w[0].price).abs();
            let scale = w[0].price.abs().max(w[1].price.abs()).max(1e-300);
            (d > 1e-13 * scale).then(|| ((w[0].n_steps as f64).ln(), d.ln()))
        })
        .collect();
    let order = (diffs.len() >= 2).then(|| -slope(&diffs));
    Ok(ConvergenceReport { points, order })
}

/// Least-squares slope of `y` on `x`.
pub(crate) fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
