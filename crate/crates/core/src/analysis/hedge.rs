use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::lattice::HedgeStrategy;
use crate::model::{evaluate_payoff, PathView, Payoff};
use crate::simulate::{integrate_path, PathEnsemble};

/// Pathwise audit of `a + Σ h ΔB ≥ f` for one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAudit {
    pub scheme: String,
    pub n_paths: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub max_shortfall: f64,
    /// Largest `f - (a + I_T(h))`, signed.
    pub worst_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeReport {
    pub initial_capital: f64,
    pub epsilon: f64,
    pub n_paths: usize,
    pub violations: usize,
    /// Pooled over all ensembles.
    pub violation_rate: f64,
    pub max_shortfall: f64,
    pub per_ensemble: Vec<EnsembleAudit>,
    /// `a + I_T(h)` per path, ensembles concatenated in input order.
    #[serde(skip)]
    pub terminal_values: Vec<f64>,
    /// `max(f - (a + I_T(h)), 0)` per path, same order.
    #[serde(skip)]
    pub shortfalls: Vec<f64>,
    /// `f` per path, same order.
    #[serde(skip)]
    pub payoff_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Runs the hedge `(a, h)` along every path of every ensemble and compares
/// the terminal wealth with the payoff on the same path.
pub fn verify_superhedge(
    a: f64,
    strategy: &HedgeStrategy,
    ensembles: &[PathEnsemble],
    payoff: &Payoff,
    epsilon: f64,
) -> Result<HedgeReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::Validation(format!("epsilon must be >= 0 (got {epsilon})")));
    }
    let spec = strategy.layout().spec();
    let mut terminal_values = Vec::new();
    let mut payoff_values = Vec::new();
    let mut counts = Vec::with_capacity(ensembles.len());
    for e in ensembles {
        if !e.on_grid(spec) {
            return Err(Error::Shape(format!(
                "ensemble '{}' has {} steps, strategy grid has {}",
                e.scheme_name(),
                e.n_steps(),
                spec.n_steps()
            )));
        }
        let rows = e.map_paths(|_, path| -> Result<(f64, f64)> {
            let wealth = a + integrate_path(strategy, &path.values);
            let f = evaluate_payoff(payoff, PathView::new(e.times(), &path.values))?;
            Ok((wealth, f - wealth))
        });
        for row in rows {
            let (wealth, residual) = row?;
            terminal_values.push(wealth);
            payoff_values.push(residual + wealth);
        }
        counts.push((e.scheme_name().to_string(), e.n_paths()));
    }
    Ok(assemble(a, epsilon, &counts, terminal_values, payoff_values))
}

fn assemble(
    a: f64,
    epsilon: f64,
    counts: &[(String, usize)],
    terminal_values: Vec<f64>,
    payoff_values: Vec<f64>,
) -> HedgeReport {
    let mut per_ensemble = Vec::with_capacity(counts.len());
    let mut shortfalls = Vec::with_capacity(terminal_values.len());
    let mut offset = 0;
    for (scheme, n) in counts {
        let mut audit = EnsembleAudit {
            scheme: scheme.clone(),
            n_paths: *n,
            violations: 0,
            violation_rate: 0.0,
            max_shortfall: 0.0,
            worst_residual: f64::NEG_INFINITY,
        };
        for p in offset..offset + n {
            let residual = payoff_values[p] - terminal_values[p];
            if residual > epsilon {
                audit.violations += 1;
            }
            audit.worst_residual = audit.worst_residual.max(residual);
            let shortfall = residual.max(0.0);
            audit.max_shortfall = audit.max_shortfall.max(shortfall);
            shortfalls.push(shortfall);
        }
        if *n > 0 {
            audit.violation_rate = audit.violations as f64 / *n as f64;
        }
        offset += n;
        per_ensemble.push(audit);
    }
    let n_paths = shortfalls.len();
    let violations = per_ensemble.iter().map(|e| e.violations).sum();
    HedgeReport {
        initial_capital: a,
        epsilon,
        n_paths,
        violations,
        violation_rate: if n_paths > 0 {
            violations as f64 / n_paths as f64
        } else {
            0.0
        },
        max_shortfall: shortfalls.iter().copied().fold(0.0, f64::max),
        per_ensemble,
        terminal_values,
        shortfalls,
        payoff_values,
    }
}

impl HedgeReport {
    /// The same audit with initial capital `a` instead, on the same paths.
    pub fn at_capital(&self, a: f64) -> HedgeReport {
        let shift = a - self.initial_capital;
        let counts: Vec<(String, usize)> = self
            .per_ensemble
            .iter()
            .map(|e| (e.scheme.clone(), e.n_paths))
            .collect();
        let wealth = self.terminal_values.iter().map(|w| w + shift).collect();
        assemble(a, self.epsilon, &counts, wealth, self.payoff_values.clone())
    }

    /// Histogram of the shortfalls over `[0, max_shortfall]`. Paths with zero
    /// shortfall land in the first bin.
    pub fn shortfall_histogram(&self, bins: usize) -> Vec<HistogramBin> {
        let bins = bins.max(1);
        let top = if self.max_shortfall > 0.0 {
            self.max_shortfall
        } else {
            1.0
        };
        let width = top / bins as f64;
        let mut out: Vec<HistogramBin> = (0..bins)
            .map(|b| HistogramBin {
                lo: b as f64 * width,
                hi: if b + 1 == bins { top } else { (b + 1) as f64 * width },
                count: 0,
            })
            .collect();
        for &s in &self.shortfalls {
            let b = ((s / width) as usize).min(bins - 1);
            out[b].count += 1;
        }
        out
    }

    pub fn write_histogram_csv<W: Write>(&self, out: &mut W, bins: usize) -> io::Result<()> {
        writeln!(out, "lo,hi,count")?;
        for b in self.shortfall_histogram(bins) {
            writeln!(out, "{:?},{:?},{}", b.lo, b.hi, b.count)?;
        }
        Ok(())
    }
}
