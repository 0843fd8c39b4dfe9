//! Measure bands: a pair of nondecreasing distribution functions bounding the
//! quadratic variation of the canonical process, together with Hölder data
//! for the upper distribution.
//!
//! Both distributions are piecewise linear between their knots.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Relative slack used for floating-point comparisons of knot values.
const REL_TOL: f64 = 1e-12;

/// A `(time, cumulative variance)` knot.
pub type Knot = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureBand {
    horizon: f64,
    lower: Vec<Knot>,
    upper: Vec<Knot>,
    holder_c: f64,
    holder_alpha: f64,
}

/// One violated invariant, as reported by [`MeasureBand::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandViolation {
    NonPositiveHorizon { horizon: f64 },
    TooFewKnots { side: Side },
    NotStartingAtOrigin { side: Side },
    NotEndingAtHorizon { side: Side, last_time: f64 },
    TimesNotIncreasing { side: Side, index: usize },
    Monotonicity { side: Side, s: f64, t: f64 },
    IncrementDominance { s: f64, t: f64, lower: f64, upper: f64 },
    Holder { s: f64, t: f64, increment: f64, bound: f64 },
    HolderParameters { c: f64, alpha: f64 },
    ZeroMeasure,
    NonFinite { side: Side },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Lower => f.write_str("lower"),
            Side::Upper => f.write_str("upper"),
        }
    }
}

impl fmt::Display for BandViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use BandViolation::*;
        match self {
            NonPositiveHorizon { horizon } => write!(f, "horizon must be positive (got {horizon})"),
            TooFewKnots { side } => write!(f, "{side} distribution needs at least two knots"),
            NotStartingAtOrigin { side } => {
                write!(f, "{side} distribution must start at (0, 0)")
            }
            NotEndingAtHorizon { side, last_time } => write!(
                f,
                "{side} distribution must end at the horizon (last knot time {last_time})"
            ),
            TimesNotIncreasing { side, index } => {
                write!(f, "{side} knot times must be strictly increasing (knot {index})")
            }
            Monotonicity { side, s, t } => {
                write!(f, "monotonicity: {side} distribution decreases on [{s}, {t}]")
            }
            IncrementDominance { s, t, lower, upper } => write!(
                f,
                "increment dominance: lower increment {lower} exceeds upper increment {upper} on [{s}, {t}]"
            ),
            Holder { s, t, increment, bound } => write!(
                f,
                "holder: upper increment {increment} on [{s}, {t}] exceeds C|t-s|^alpha = {bound}"
            ),
            HolderParameters { c, alpha } => write!(
                f,
                "holder parameters: need C > 0 and alpha in (0, 1] (got C = {c}, alpha = {alpha})"
            ),
            ZeroMeasure => f.write_str("nonzero measure: upper distribution has zero mass at the horizon"),
            NonFinite { side } => write!(f, "{side} knots must be finite"),
        }
    }
}

fn interpolate(knots: &[Knot], t: f64) -> f64 {
    if t <= knots[0].0 {
        return knots[0].1;
    }
    let last = knots[knots.len() - 1];
    if t >= last.0 {
        return last.1;
    }
    let k = knots.partition_point(|&(kt, _)| kt <= t);
    let (t0, v0) = knots[k - 1];
    let (t1, v1) = knots[k];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

fn slack(a: f64, b: f64) -> f64 {
    REL_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Band with `μ̲_t = σ̲²t` and `μ̄_t = σ̄²t` (the uncertain volatility model).
pub fn make_vol_band(sigma_low: f64, sigma_high: f64, horizon: f64) -> Result<MeasureBand> {
    if !(sigma_low.is_finite() && sigma_high.is_finite() && horizon.is_finite()) {
        return Err(Error::Validation(
            "sigma_low, sigma_high and horizon must be finite".into(),
        ));
    }
    if sigma_low < 0.0 {
        return Err(Error::Validation(format!("sigma_low < 0 (got {sigma_low})")));
    }
    if sigma_low > sigma_high {
        return Err(Error::Validation(format!(
            "sigma_low > sigma_high ({sigma_low} > {sigma_high})"
        )));
    }
    if sigma_high <= 0.0 {
        return Err(Error::Validation(format!(
            "sigma_high must be positive (got {sigma_high})"
        )));
    }
    if horizon <= 0.0 {
        return Err(Error::Validation(format!("horizon must be positive (got {horizon})")));
    }
    let lo = sigma_low * sigma_low;
    let hi = sigma_high * sigma_high;
    MeasureBand::new(
        horizon,
        vec![(0.0, 0.0), (horizon, lo * horizon)],
        vec![(0.0, 0.0), (horizon, hi * horizon)],
        hi,
        1.0,
    )
}

impl MeasureBand {
    /// Builds a band and rejects it if any invariant fails.
    pub fn new(horizon: f64, lower: Vec<Knot>, upper: Vec<Knot>, holder_c: f64, holder_alpha: f64) -> Result<Self> {
        let band = Self::from_parts(horizon, lower, upper, holder_c, holder_alpha);
        let report = band.validate();
        if report.is_empty() {
            Ok(band)
        } else {
            let msg: Vec<String> = report.iter().map(ToString::to_string).collect();
            Err(Error::Validation(msg.join("; ")))
        }
    }

    /// Builds a band without checking anything. Pair with [`validate`](Self::validate).
    pub fn from_parts(horizon: f64, lower: Vec<Knot>, upper: Vec<Knot>, holder_c: f64, holder_alpha: f64) -> Self {
        Self {
            horizon,
            lower,
            upper,
            holder_c,
            holder_alpha,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lower_knots(&self) -> &[Knot] {
        &self.lower
    }

    pub fn upper_knots(&self) -> &[Knot] {
        &self.upper
    }

    pub fn holder_c(&self) -> f64 {
        self.holder_c
    }

    pub fn holder_alpha(&self) -> f64 {
        self.holder_alpha
    }

    /// `μ̲_t`, clamped to the knot range.
    pub fn lower_at(&self, t: f64) -> f64 {
        interpolate(&self.lower, t)
    }

    /// `μ̄_t`, clamped to the knot range.
    pub fn upper_at(&self, t: f64) -> f64 {
        interpolate(&self.upper, t)
    }

    pub fn lower_total(&self) -> f64 {
        self.lower.last().map_or(0.0, |k| k.1)
    }

    pub fn upper_total(&self) -> f64 {
        self.upper.last().map_or(0.0, |k| k.1)
    }

    /// Returns `(σ̲, σ̄)` when both distributions are linear from the origin.
    pub fn as_vol_pair(&self) -> Option<(f64, f64)> {
        let linear = |knots: &[Knot]| -> Option<f64> {
            let slope = self.horizon_value(knots) / self.horizon;
            knots
                .iter()
                .all(|&(t, v)| (v - slope * t).abs() <= slack(v, slope * t) * 16.0)
                .then_some(slope)
        };
        let lo = linear(&self.lower)?;
        let hi = linear(&self.upper)?;
        Some((lo.sqrt(), hi.sqrt()))
    }

    fn horizon_value(&self, knots: &[Knot]) -> f64 {
        interpolate(knots, self.horizon)
    }

    /// `(Δμ̲, Δμ̄)` over `[s, t]`.
    pub fn increment(&self, s: f64, t: f64) -> Result<(f64, f64)> {
        for (what, value) in [("s", s), ("t", t)] {
            if !(0.0..=self.horizon).contains(&value) {
                return Err(Error::Range {
                    what,
                    value,
                    lo: 0.0,
                    hi: self.horizon,
                });
            }
        }
        if s > t {
            return Err(Error::Range {
                what: "s",
                value: s,
                lo: 0.0,
                hi: t,
            });
        }
        if s == t {
            return Ok((0.0, 0.0));
        }
        Ok((self.lower_at(t) - self.lower_at(s), self.upper_at(t) - self.upper_at(s)))
    }

    /// Smallest `t` with `μ̄_t = level`, for `level` in `[0, μ̄_T]`.
    pub fn upper_inverse(&self, level: f64) -> f64 {
        let knots = &self.upper;
        if level <= knots[0].1 {
            return knots[0].0;
        }
        let k = knots.partition_point(|&(_, v)| v < level);
        if k >= knots.len() {
            return self.horizon;
        }
        let (t0, v0) = knots[k - 1];
        let (t1, v1) = knots[k];
        if v1 == level {
            return t1;
        }
        t0 + (t1 - t0) * (level - v0) / (v1 - v0)
    }

    /// Every violated invariant. Empty iff the band is valid.
    pub fn validate(&self) -> Vec<BandViolation> {
        let mut out = Vec::new();
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            out.push(BandViolation::NonPositiveHorizon { horizon: self.horizon });
        }
        if !(self.holder_c > 0.0 && self.holder_alpha > 0.0 && self.holder_alpha <= 1.0) {
            out.push(BandViolation::HolderParameters {
                c: self.holder_c,
                alpha: self.holder_alpha,
            });
        }
        let mut shape_ok = true;
        for (side, knots) in [(Side::Lower, &self.lower), (Side::Upper, &self.upper)] {
            if knots.iter().any(|&(t, v)| !t.is_finite() || !v.is_finite()) {
                out.push(BandViolation::NonFinite { side });
                shape_ok = false;
                continue;
            }
            if knots.len() < 2 {
                out.push(BandViolation::TooFewKnots { side });
                shape_ok = false;
                continue;
            }
            if knots[0] != (0.0, 0.0) {
                out.push(BandViolation::NotStartingAtOrigin { side });
            }
            let last_time = knots[knots.len() - 1].0;
            if last_time != self.horizon {
                out.push(BandViolation::NotEndingAtHorizon { side, last_time });
            }
            for (index, w) in knots.windows(2).enumerate() {
                if w[1].0 <= w[0].0 {
                    out.push(BandViolation::TimesNotIncreasing { side, index: index + 1 });
                    shape_ok = false;
                }
                if w[1].1 < w[0].1 {
                    out.push(BandViolation::Monotonicity {
                        side,
                        s: w[0].0,
                        t: w[1].0,
                    });
                }
            }
        }
        if !shape_ok {
            return out;
        }

        if self.upper_total() <= 0.0 {
            out.push(BandViolation::ZeroMeasure);
        }

        // Both distributions are linear between merged knot times, so checking
        // each merged interval is exhaustive for increment dominance.
        let grid = self.merged_times();
        for w in grid.windows(2) {
            let (s, t) = (w[0], w[1]);
            let dl = self.lower_at(t) - self.lower_at(s);
            let du = self.upper_at(t) - self.upper_at(s);
            if dl > du + slack(dl, du) {
                out.push(BandViolation::IncrementDominance {
                    s,
                    t,
                    lower: dl,
                    upper: du,
                });
            }
        }

        if self.holder_c > 0.0 && self.holder_alpha > 0.0 {
            let up = &self.upper;
            for a in 0..up.len() {
                for b in a + 1..up.len() {
                    let (s, vs) = up[a];
                    let (t, vt) = up[b];
                    let increment = vt - vs;
                    let bound = self.holder_c * (t - s).powf(self.holder_alpha);
                    if increment > bound + slack(increment, bound) {
                        out.push(BandViolation::Holder { s, t, increment, bound });
                    }
                }
            }
        }
        out
    }

    /// Union of lower and upper knot times, sorted and deduplicated.
    pub fn merged_times(&self) -> Vec<f64> {
        let mut grid: Vec<f64> = self.lower.iter().chain(self.upper.iter()).map(|k| k.0).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vol_band_values() {
        let band = make_vol_band(0.1, 0.2, 1.0).unwrap();
        assert_relative_eq!(band.lower_total(), 0.01, max_relative = 1e-15);
        assert_relative_eq!(band.upper_total(), 0.04, max_relative = 1e-15);
        assert_relative_eq!(band.holder_c(), 0.04, max_relative = 1e-15);
        assert_eq!(band.holder_alpha(), 1.0);
        assert!(band.validate().is_empty());
        let (lo, hi) = band.as_vol_pair().unwrap();
        assert_relative_eq!(lo, 0.1, max_relative = 1e-12);
        assert_relative_eq!(hi, 0.2, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_vol_band_collapses() {
        let band = make_vol_band(0.2, 0.2, 1.0).unwrap();
        assert_eq!(band.lower_knots(), band.upper_knots());
    }

    #[test]
    fn vol_band_ordering_error() {
        let err = make_vol_band(0.3, 0.1, 1.0).unwrap_err();
        assert!(err.to_string().contains("sigma_low > sigma_high"), "{err}");
        assert!(make_vol_band(0.1, 0.2, 0.0).is_err());
        assert!(make_vol_band(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn increments() {
        let band = make_vol_band(0.1, 0.2, 1.0).unwrap();
        let (l, u) = band.increment(0.25, 0.75).unwrap();
        assert_relative_eq!(l, 0.005, max_relative = 1e-12);
        assert_relative_eq!(u, 0.02, max_relative = 1e-12);
        assert_eq!(band.increment(0.3, 0.3).unwrap(), (0.0, 0.0));
        let (l, u) = band.increment(0.0, 1.0).unwrap();
        assert_relative_eq!(l, 0.01, max_relative = 1e-12);
        assert_relative_eq!(u, 0.04, max_relative = 1e-12);
        assert!(matches!(band.increment(-0.1, 0.5), Err(Error::Range { .. })));
        assert!(matches!(band.increment(0.5, 1.5), Err(Error::Range { .. })));
    }

    #[test]
    fn validate_reports_monotonicity() {
        let band = MeasureBand::from_parts(
            1.0,
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![(0.0, 0.0), (0.5, 0.03), (1.0, 0.02)],
            1.0,
            1.0,
        );
        let report = band.validate();
        assert!(report
            .iter()
            .any(|v| matches!(v, BandViolation::Monotonicity { side: Side::Upper, .. })));
        assert!(report[0].to_string().starts_with("monotonicity"));
    }

    #[test]
    fn validate_reports_increment_dominance() {
        let band = MeasureBand::from_parts(
            1.0,
            vec![(0.0, 0.0), (0.5, 0.03), (1.0, 0.035)],
            vec![(0.0, 0.0), (1.0, 0.04)],
            1.0,
            1.0,
        );
        let report = band.validate();
        assert_eq!(report.len(), 1, "{report:?}");
        assert!(matches!(report[0], BandViolation::IncrementDominance { s, t, .. } if s == 0.0 && t == 0.5));
        assert!(report[0].to_string().contains("increment dominance"));
    }

    #[test]
    fn validate_reports_holder() {
        let band = MeasureBand::from_parts(
            1.0,
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![(0.0, 0.0), (0.01, 0.02), (1.0, 0.04)],
            0.04,
            1.0,
        );
        assert!(band
            .validate()
            .iter()
            .any(|v| matches!(v, BandViolation::Holder { .. })));
    }

    #[test]
    fn validate_reports_zero_measure_and_origin() {
        let band = MeasureBand::from_parts(
            1.0,
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![(0.0, 0.0), (1.0, 0.0)],
            1.0,
            1.0,
        );
        assert!(band.validate().contains(&BandViolation::ZeroMeasure));
        let band = MeasureBand::from_parts(
            1.0,
            vec![(0.0, 0.1), (1.0, 0.2)],
            vec![(0.0, 0.0), (1.0, 0.4)],
            1.0,
            1.0,
        );
        assert!(band
            .validate()
            .contains(&BandViolation::NotStartingAtOrigin { side: Side::Lower }));
    }

    #[test]
    fn sqrt_band_is_half_holder() {
        let knots: Vec<Knot> = (0..=16)
            .map(|k| ((k * k) as f64 / 256.0, 0.04 * k as f64 / 16.0))
            .collect();
        let band = MeasureBand::new(1.0, vec![(0.0, 0.0), (1.0, 0.0)], knots, 0.04, 0.5).unwrap();
        assert_eq!(band.upper_inverse(0.01), 1.0 / 16.0);
        assert_eq!(band.upper_inverse(0.02), 0.25);
        assert_eq!(band.upper_inverse(0.03), 9.0 / 16.0);
        assert_eq!(band.upper_inverse(0.04), 1.0);
        assert!(band.as_vol_pair().is_none());
    }

    #[test]
    fn inverse_skips_flat_segments() {
        let band = MeasureBand::new(
            2.0,
            vec![(0.0, 0.0), (2.0, 0.0)],
            vec![(0.0, 0.0), (1.0, 0.04), (1.5, 0.04), (2.0, 0.08)],
            0.08,
            1.0,
        )
        .unwrap();
        assert_eq!(band.upper_inverse(0.04), 1.0);
        assert_relative_eq!(band.upper_inverse(0.06), 1.75, max_relative = 1e-12);
    }
}
