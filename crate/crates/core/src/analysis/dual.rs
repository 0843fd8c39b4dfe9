use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::model::{evaluate_payoff, MeasureBand, PathView, Payoff};
use crate::simulate::{Estimate, MeasureScheme, PathEnsemble, SchemeEstimate};

/// Monte Carlo sizing shared by the dual and capacity estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McParams {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

/// Samples of `payoff` on every path of `ensemble`, in path order.
pub fn payoff_samples(payoff: &Payoff, ensemble: &PathEnsemble) -> Result<Vec<f64>> {
    ensemble
        .map_paths(|_, path| evaluate_payoff(payoff, PathView::new(ensemble.times(), &path.values)))
        .into_iter()
        .collect()
}

/// `E_P f` with its standard error for each scheme of the battery. Every
/// scheme uses the same seed.
pub fn dual_bound(
    payoff: &Payoff,
    band: &MeasureBand,
    battery: &[MeasureScheme],
    mc: McParams,
) -> Result<Vec<SchemeEstimate>> {
    let spec = crate::lattice::build_lattice(band, mc.n_steps)?;
    dual_bound_on(&spec, payoff, battery, mc.n_paths, mc.seed)
}

/// [`dual_bound`] on an existing grid.
pub fn dual_bound_on(
    spec: &LatticeSpec,
    payoff: &Payoff,
    battery: &[MeasureScheme],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SchemeEstimate>> {
    if battery.is_empty() {
        return Err(Error::Validation("battery must not be empty".into()));
    }
    if n_paths < 2 {
        return Err(Error::Validation(format!("n_paths must be >= 2 (got {n_paths})")));
    }
    battery
        .iter()
        .map(|scheme| {
            let e = PathEnsemble::generate(spec, scheme, n_paths, seed)?;
            Ok(SchemeEstimate {
                scheme: e.scheme_name().to_string(),
                estimate: Estimate::from_samples(&payoff_samples(payoff, &e)?),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub primal: f64,
    pub per_scheme: Vec<SchemeEstimate>,
    /// Largest point estimate; ties go to the earlier scheme.
    pub best_dual: SchemeEstimate,
    pub gap: f64,
    pub gap_relative: f64,
    /// Truncation allowance added to `3 SE` in the consistency test.
    pub allowance: f64,
    /// False when some scheme exceeds `primal + 3 SE + allowance`.
    pub consistent: bool,
}

/// Assembles the primal/dual comparison. A negative gap is reported as is;
/// [`DualityReport::ensure_consistent`] turns it into an error.
pub fn duality_gap(primal: f64, per_scheme: Vec<SchemeEstimate>, allowance: f64) -> Result<DualityReport> {
    let best_dual = per_scheme
        .iter()
        .fold(None::<&SchemeEstimate>, |best, s| match best {
            Some(b) if b.estimate.mean >= s.estimate.mean => Some(b),
            _ => Some(s),
        })
        .ok_or_else(|| Error::Validation("no dual estimates".into()))?
        .clone();
    let gap = primal - best_dual.estimate.mean;
    let gap_relative = if primal != 0.0 { gap / primal.abs() } else { gap };
    let consistent = per_scheme.iter().all(|s| excess(primal, s, allowance) <= 0.0);
    Ok(DualityReport {
        primal,
        per_scheme,
        best_dual,
        gap,
        gap_relative,
        allowance,
        consistent,
    })
}

fn excess(primal: f64, s: &SchemeEstimate, allowance: f64) -> f64 {
    s.estimate.mean - (primal + 3.0 * s.estimate.se + allowance)
}

impl DualityReport {
    /// Schemes whose estimate exceeds `primal + 3 SE + allowance`.
    pub fn violations(&self) -> Vec<&SchemeEstimate> {
        self.per_scheme
            .iter()
            .filter(|s| excess(self.primal, s, self.allowance) > 0.0)
            .collect()
    }

    pub fn ensure_consistent(&self) -> Result<()> {
        match self
            .per_scheme
            .iter()
            .max_by(|a, b| excess(self.primal, a, self.allowance).total_cmp(&excess(self.primal, b, self.allowance)))
        {
            Some(s) if excess(self.primal, s, self.allowance) > 0.0 => Err(Error::NegativeGap {
                primal: self.primal,
                dual: s.estimate.mean,
                allowance: 3.0 * s.estimate.se + self.allowance,
                scheme: s.scheme.clone(),
            }),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, price_upper};
    use crate::model::make_vol_band;
    use crate::simulate::{default_battery, IncrementLaw};

    fn band() -> MeasureBand {
        make_vol_band(0.1, 0.2, 1.0).unwrap()
    }

    fn est(scheme: &str, mean: f64, se: f64) -> SchemeEstimate {
        SchemeEstimate {
            scheme: scheme.into(),
            estimate: Estimate { mean, se },
        }
    }

    #[test]
    fn constant_payoff_is_exact_under_every_scheme() {
        let mc = McParams {
            n_paths: 200,
            n_steps: 16,
            seed: 1,
        };
        let battery = default_battery(&band(), IncrementLaw::Gaussian, None);
        for s in dual_bound(&Payoff::terminal("5").unwrap(), &band(), &battery, mc).unwrap() {
            assert_eq!(s.estimate.mean, 5.0);
            assert_eq!(s.estimate.se, 0.0);
        }
    }

    #[test]
    fn second_moment_under_the_endpoints() {
        let mc = McParams {
            n_paths: 20_000,
            n_steps: 16,
            seed: 7,
        };
        let battery = vec![
            MeasureScheme::const_vol(0.1, IncrementLaw::Gaussian),
            MeasureScheme::const_vol(0.2, IncrementLaw::Gaussian),
        ];
        let d = dual_bound(&Payoff::terminal("x^2").unwrap(), &band(), &battery, mc).unwrap();
        assert!((d[0].estimate.mean - 0.01).abs() < 3.0 * d[0].estimate.se);
        assert!((d[1].estimate.mean - 0.04).abs() < 3.0 * d[1].estimate.se);
        let r = duality_gap(0.04, d, 0.0).unwrap();
        assert!(r.best_dual.scheme.starts_with("const_vol(0.2)"));
        assert!(r.consistent);
    }

    #[test]
    fn ties_go_to_the_earlier_scheme() {
        let r = duality_gap(1.0, vec![est("a", 0.5, 0.0), est("b", 0.5, 0.0)], 0.0).unwrap();
        assert_eq!(r.best_dual.scheme, "a");
        assert_eq!(r.gap, 0.5);
        assert_eq!(r.gap_relative, 0.5);
    }

    #[test]
    fn negative_gap_is_flagged_not_clipped() {
        let r = duality_gap(1.0, vec![est("a", 0.9, 0.01), est("b", 1.2, 0.01)], 0.05).unwrap();
        assert!(r.gap < 0.0);
        assert!(!r.consistent);
        assert_eq!(r.violations().len(), 1);
        match r.ensure_consistent() {
            Err(Error::NegativeGap { scheme, .. }) => assert_eq!(scheme, "b"),
            other => panic!("{other:?}"),
        }
        let ok = duality_gap(1.0, vec![est("a", 1.02, 0.01)], 0.0).unwrap();
        assert!(ok.consistent && ok.ensure_consistent().is_ok());
    }

    #[test]
    fn degenerate_band_closes_the_gap() {
        let band = make_vol_band(0.2, 0.2, 1.0).unwrap();
        let spec = build_lattice(&band, 100).unwrap();
        let payoff = Payoff::terminal("max(x,0)").unwrap();
        let primal = price_upper(&spec, &payoff).unwrap().price;
        let battery = default_battery(&band, IncrementLaw::Gaussian, None);
        let d = dual_bound_on(&spec, &payoff, &battery, 20_000, 3).unwrap();
        let r = duality_gap(primal, d, 0.005 * primal).unwrap();
        assert!(r.consistent);
        assert!(r.gap.abs() < 3.0 * r.best_dual.estimate.se + 0.005 * primal, "{r:?}");
    }

    #[test]
    fn empty_battery_is_rejected() {
        let mc = McParams {
            n_paths: 10,
            n_steps: 4,
            seed: 0,
        };
        assert!(dual_bound(&Payoff::terminal("x").unwrap(), &band(), &[], mc).is_err());
        assert!(duality_gap(0.0, vec![], 0.0).is_err());
    }
}
