use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MeasureBand;

/// How the running maximum on the lattice is mapped to the payoff argument.
///
/// The lattice walk only visits integer multiples of `dx`. For a skip-free
/// symmetric walk the reflection identity gives
/// `E[max] = E|S_n| - (1 - P(S_n = 0)) dx / 2`, so the discrete maximum sits
/// half a step below the running supremum of the continuous-path limit.
/// `Continuous` adds that half step before evaluating `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Monitoring {
    #[default]
    Continuous,
    Discrete,
}

/// Time grid and per-step variance bounds of a trinomial lattice.
///
/// Node `j` at slice `i` sits at `x = j dx` with `|j| <= i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    times: Vec<f64>,
    dx: f64,
    dx2: f64,
    v_low: Vec<f64>,
    v_high: Vec<f64>,
    monitoring: Monitoring,
}

impl LatticeSpec {
    pub fn n_steps(&self) -> usize {
        self.v_high.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// `dx²`, stored exactly as the largest per-step upper variance.
    pub fn dx2(&self) -> f64 {
        self.dx2
    }

    pub fn v_low(&self) -> &[f64] {
        &self.v_low
    }

    pub fn v_high(&self) -> &[f64] {
        &self.v_high
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    pub fn x(&self, j: i64) -> f64 {
        j as f64 * self.dx
    }

    pub fn monitoring(&self) -> Monitoring {
        self.monitoring
    }

    pub fn with_monitoring(mut self, monitoring: Monitoring) -> Self {
        self.monitoring = monitoring;
        self
    }

    /// Index of the grid time matching `t`, if any.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| crate::model::date_matches(t, s))
    }

    /// Shift added to the lattice maximum before the payoff is applied.
    pub(crate) fn max_shift(&self) -> f64 {
        match self.monitoring {
            Monitoring::Continuous => 0.5 * self.dx,
            Monitoring::Discrete => 0.0,
        }
    }

    /// True when both specs share the same time grid.
    pub fn same_grid(&self, other: &LatticeSpec) -> bool {
        self.times.len() == other.times.len()
            && self
                .times
                .iter()
                .zip(&other.times)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}

/// Discretizes `band` on a grid where every step carries the same upper
/// variance `μ̄_T / n`.
pub fn build_lattice(band: &MeasureBand, n_steps: usize) -> Result<LatticeSpec> {
    if n_steps == 0 {
        return Err(Error::Validation("n_steps must be at least 1".into()));
    }
    let total = band.upper_total();
    if !(total > 0.0) {
        return Err(Error::DegenerateBand);
    }
    let report = band.validate();
    if let Some(v) = report.first() {
        return Err(Error::Validation(v.to_string()));
    }
    let n = n_steps as f64;
    let mut times = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    for i in 1..n_steps {
        times.push(band.upper_inverse(total * (i as f64 / n)));
    }
    times.push(band.horizon());

    let v_high: Vec<f64> = times
        .windows(2)
        .map(|w| band.upper_at(w[1]) - band.upper_at(w[0]))
        .collect();
    let v_low: Vec<f64> = times
        .windows(2)
        .map(|w| (band.lower_at(w[1]) - band.lower_at(w[0])).max(0.0))
        .collect();
    // Rounding can push a lower increment a hair above the upper one.
    let v_low: Vec<f64> = v_low.iter().zip(&v_high).map(|(l, h)| l.min(*h)).collect();
    let dx2 = v_high.iter().copied().fold(0.0, f64::max);
    Ok(LatticeSpec {
        times,
        dx: dx2.sqrt(),
        dx2,
        v_low,
        v_high,
        monitoring: Monitoring::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_vol_band, Knot};
    use approx::assert_relative_eq;

    #[test]
    fn vol_band_four_steps() {
        let band = make_vol_band(0.1, 0.2, 1.0).unwrap();
        let spec = build_lattice(&band, 4).unwrap();
        assert_eq!(spec.n_steps(), 4);
        for i in 0..4 {
            assert_relative_eq!(spec.v_high()[i], 0.01, max_relative = 1e-12);
            assert_relative_eq!(spec.v_low()[i], 0.0025, max_relative = 1e-12);
            assert_relative_eq!(spec.times()[i + 1], (i + 1) as f64 / 4.0, max_relative = 1e-12);
        }
        assert_relative_eq!(spec.dx(), 0.1, max_relative = 1e-12);
    }

    #[test]
    fn single_step_degenerate_band() {
        let band = make_vol_band(0.2, 0.2, 1.0).unwrap();
        let spec = build_lattice(&band, 1).unwrap();
        assert_eq!(spec.times(), &[0.0, 1.0]);
        assert_relative_eq!(spec.v_low()[0], 0.04, max_relative = 1e-12);
        assert_relative_eq!(spec.v_high()[0], 0.04, max_relative = 1e-12);
        assert_relative_eq!(spec.dx(), 0.2, max_relative = 1e-12);
    }

    #[test]
    fn sqrt_band_equal_variance_times() {
        // Closed-form inverse of μ̄_t = 0.04 √t at levels 0.01 k is t = (k/4)².
        let oracle: Vec<f64> = (0..=4).map(|k| (k as f64 / 4.0).powi(2)).collect();
        let upper: Vec<Knot> = (0..=16)
            .map(|k| ((k * k) as f64 / 256.0, 0.04 * k as f64 / 16.0))
            .collect();
        let lower: Vec<Knot> = upper.iter().map(|&(t, v)| (t, v / 4.0)).collect();
        let band = MeasureBand::new(1.0, lower, upper, 0.04, 0.5).unwrap();
        let spec = build_lattice(&band, 4).unwrap();
        for (t, o) in spec.times().iter().zip(&oracle) {
            assert_relative_eq!(*t, *o, max_relative = 1e-12);
        }
        assert_eq!(spec.times()[1], 1.0 / 16.0);
        for &v in spec.v_high() {
            assert_relative_eq!(v, 0.01, max_relative = 1e-12);
        }
    }

    #[test]
    fn invariants_hold() {
        let band = make_vol_band(0.1, 0.3, 2.0).unwrap();
        let spec = build_lattice(&band, 37).unwrap();
        let sum_hi: f64 = spec.v_high().iter().sum();
        let sum_lo: f64 = spec.v_low().iter().sum();
        assert_relative_eq!(sum_hi, band.upper_total(), max_relative = 1e-12);
        assert_relative_eq!(sum_lo, band.lower_total(), max_relative = 1e-12);
        assert!(spec.v_high().iter().all(|&v| v <= spec.dx2()));
        assert!(spec.v_low().iter().zip(spec.v_high()).all(|(l, h)| l <= h));
    }

    #[test]
    fn rejects_zero_steps() {
        let band = make_vol_band(0.1, 0.2, 1.0).unwrap();
        assert!(build_lattice(&band, 0).is_err());
        let flat = MeasureBand::from_parts(
            1.0,
            vec![(0.0, 0.0), (1.0, 0.0)],
            vec![(0.0, 0.0), (1.0, 0.0)],
            1.0,
            1.0,
        );
        assert_eq!(build_lattice(&flat, 4), Err(Error::DegenerateBand));
    }
}
