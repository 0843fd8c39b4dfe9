//! Measure bands, payoff expressions and payoff classification.

mod band;
mod expr;
mod payoff;

pub use band::{make_vol_band, BandViolation, Knot, MeasureBand, Side};
pub use expr::{Expr, INDICATOR_SLOPE};
pub(crate) use payoff::date_matches;
pub use payoff::{classify_gamma, evaluate_payoff, GammaClass, PathView, Payoff, DATE_TOL};

/// Every violated band invariant; empty iff the band is valid.
pub fn validate_band(band: &MeasureBand) -> Vec<BandViolation> {
    band.validate()
}

/// `(Δμ̲, Δμ̄)` over `[s, t]`.
pub fn band_increment(band: &MeasureBand, s: f64, t: f64) -> crate::Result<(f64, f64)> {
    band.increment(s, t)
}
