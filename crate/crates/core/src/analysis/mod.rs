//! Pathwise superhedge audits, primal/dual comparison and capacity estimates.

mod capacity;
mod dual;
mod hedge;
mod text;

pub use capacity::{
    capacity, capacity_axiom_check, capacity_on, markov_check, AxiomCase, AxiomCheck, AxiomReport, CapacityEstimate,
    MarkovCheck,
};
pub use dual::{dual_bound, dual_bound_on, duality_gap, payoff_samples, DualityReport, McParams};
pub use hedge::{verify_superhedge, EnsembleAudit, HedgeReport, HistogramBin};
pub use text::TextReport;
