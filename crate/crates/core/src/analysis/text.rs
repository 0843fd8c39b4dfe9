//! Aligned-column text rendering of the analysis reports.

use std::fmt::Write;

use super::capacity::{AxiomReport, CapacityEstimate, MarkovCheck};
use super::dual::DualityReport;
use super::hedge::HedgeReport;
use crate::simulate::SchemeEstimate;

pub trait TextReport {
    fn to_text(&self) -> String;
}

fn scheme_table(out: &mut String, value_header: &str, rows: &[SchemeEstimate]) {
    let width = rows.iter().map(|r| r.scheme.len()).max().unwrap_or(0).max(6);
    let _ = writeln!(out, "  {:<width$}  {:>14}  {:>12}", "scheme", value_header, "se");
    for r in rows {
        let _ = writeln!(
            out,
            "  {:<width$}  {:>14.8}  {:>12.3e}",
            r.scheme, r.estimate.mean, r.estimate.se
        );
    }
}

impl TextReport for HedgeReport {
    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "initial capital  {:.10}", self.initial_capital);
        let _ = writeln!(out, "epsilon          {:.3e}", self.epsilon);
        let _ = writeln!(out, "paths            {}", self.n_paths);
        let _ = writeln!(out, "violations       {} ({:.6})", self.violations, self.violation_rate);
        let _ = writeln!(out, "max shortfall    {:.3e}", self.max_shortfall);
        let width = self
            .per_ensemble
            .iter()
            .map(|e| e.scheme.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let _ = writeln!(
            out,
            "  {:<width$}  {:>8}  {:>10}  {:>12}  {:>12}",
            "scheme", "paths", "rate", "max short", "worst resid"
        );
        for e in &self.per_ensemble {
            let _ = writeln!(
                out,
                "  {:<width$}  {:>8}  {:>10.6}  {:>12.3e}  {:>12.3e}",
                e.scheme, e.n_paths, e.violation_rate, e.max_shortfall, e.worst_residual
            );
        }
        out
    }
}

impl TextReport for DualityReport {
    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "primal        {:.10}", self.primal);
        let _ = writeln!(
            out,
            "best dual     {:.10} +/- {:.3e} ({})",
            self.best_dual.estimate.mean, self.best_dual.estimate.se, self.best_dual.scheme
        );
        let _ = writeln!(
            out,
            "gap           {:.3e} (relative {:.4})",
            self.gap, self.gap_relative
        );
        let _ = writeln!(out, "allowance     {:.3e}", self.allowance);
        let _ = writeln!(out, "consistent    {}", self.consistent);
        scheme_table(&mut out, "E_P f", &self.per_scheme);
        out
    }
}

impl TextReport for CapacityEstimate {
    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "capacity      {:.10} +/- {:.3e} ({})",
            self.value, self.se, self.argmax
        );
        scheme_table(&mut out, "L2 norm", &self.per_scheme);
        out
    }
}

impl TextReport for MarkovCheck {
    fn to_text(&self) -> String {
        format!(
            "markov alpha={}  lhs {:.6} +/- {:.2e}  rhs {:.6} +/- {:.2e}  {}\n",
            self.alpha,
            self.lhs.mean,
            self.lhs.se,
            self.rhs.mean,
            self.rhs.se,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

impl TextReport for AxiomReport {
    fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<14} lhs {:.6} rhs {:.6}  {}  {}",
                c.axiom,
                c.lhs.mean,
                c.rhs.mean,
                if c.pass { "pass" } else { "FAIL" },
                c.events
            );
        }
        out
    }
}
