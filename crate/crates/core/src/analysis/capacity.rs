use serde::{Deserialize, Serialize};

use super::dual::{payoff_samples, McParams};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeSpec};
use crate::model::{Expr, MeasureBand, Payoff};
use crate::simulate::{Estimate, MeasureScheme, PathEnsemble, SchemeEstimate};

/// `sup_P ‖f‖_{L²(P)}` over a scheme battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    /// Standard error of the maximizing scheme's norm.
    pub se: f64,
    pub argmax: String,
    /// `√(E_P f²)` per scheme; SE by the delta method.
    pub per_scheme: Vec<SchemeEstimate>,
}

fn l2_norm(samples: &[f64]) -> Estimate {
    let sq: Vec<f64> = samples.iter().map(|f| f * f).collect();
    let m = Estimate::from_samples(&sq);
    let mean = m.mean.sqrt();
    let se = if mean > 0.0 { m.se / (2.0 * mean) } else { 0.0 };
    Estimate { mean, se }
}

pub fn capacity(
    payoff: &Payoff,
    band: &MeasureBand,
    battery: &[MeasureScheme],
    mc: McParams,
) -> Result<CapacityEstimate> {
    let spec = build_lattice(band, mc.n_steps)?;
    capacity_on(&spec, payoff, battery, mc.n_paths, mc.seed)
}

/// [`capacity`] on an existing grid.
pub fn capacity_on(
    spec: &LatticeSpec,
    payoff: &Payoff,
    battery: &[MeasureScheme],
    n_paths: usize,
    seed: u64,
) -> Result<CapacityEstimate> {
    if battery.is_empty() {
        return Err(Error::Validation("battery must not be empty".into()));
    }
    let per_scheme = battery
        .iter()
        .map(|scheme| {
            let e = PathEnsemble::generate(spec, scheme, n_paths, seed)?;
            Ok(SchemeEstimate {
                scheme: e.scheme_name().to_string(),
                estimate: l2_norm(&payoff_samples(payoff, &e)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = per_scheme
        .iter()
        .fold(
            &per_scheme[0],
            |b, s| if s.estimate.mean > b.estimate.mean { s } else { b },
        )
        .clone();
    Ok(CapacityEstimate {
        value: best.estimate.mean,
        se: best.estimate.se,
        argmax: best.scheme,
        per_scheme,
    })
}

/// `c({|f| > α}) ≤ c(f) / α`, both sides estimated on the same paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub alpha: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub pass: bool,
}

pub fn markov_check(
    payoff: &Payoff,
    alpha: f64,
    band: &MeasureBand,
    battery: &[MeasureScheme],
    mc: McParams,
) -> Result<MarkovCheck> {
    if !(alpha > 0.0) {
        return Err(Error::Validation(format!("alpha must be > 0 (got {alpha})")));
    }
    let spec = build_lattice(band, mc.n_steps)?;
    let lhs = capacity_on(&spec, &payoff.exceedance(alpha), battery, mc.n_paths, mc.seed)?;
    let c = capacity_on(&spec, payoff, battery, mc.n_paths, mc.seed)?;
    let lhs = Estimate {
        mean: lhs.value,
        se: lhs.se,
    };
    let rhs = Estimate {
        mean: c.value / alpha,
        se: c.se / alpha,
    };
    Ok(MarkovCheck {
        alpha,
        lhs,
        rhs,
        pass: within(lhs, rhs),
    })
}

fn within(lhs: Estimate, rhs: Estimate) -> bool {
    lhs.mean <= rhs.mean + 3.0 * lhs.se.hypot(rhs.se)
}

/// One capacity axiom instance over event indicators (payoffs valued in {0, 1}).
#[derive(Debug, Clone, PartialEq)]
pub enum AxiomCase {
    /// `A ⊂ B` implies `c(A) ≤ c(B)`.
    Monotone { smaller: Payoff, larger: Payoff },
    /// `c(A ∪ B) ≤ c(A) + c(B)`; the union indicator is `max(1_A, 1_B)`.
    Subadditive { a: Payoff, b: Payoff },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub events: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub checks: Vec<AxiomCheck>,
    pub all_pass: bool,
}

pub fn capacity_axiom_check(
    cases: &[AxiomCase],
    band: &MeasureBand,
    battery: &[MeasureScheme],
    mc: McParams,
) -> Result<AxiomReport> {
    let spec = build_lattice(band, mc.n_steps)?;
    let cap = |p: &Payoff| -> Result<Estimate> {
        let c = capacity_on(&spec, p, battery, mc.n_paths, mc.seed)?;
        Ok(Estimate {
            mean: c.value,
            se: c.se,
        })
    };
    let mut checks = Vec::with_capacity(cases.len());
    for case in cases {
        let (axiom, events, lhs, rhs) = match case {
            AxiomCase::Monotone { smaller, larger } => (
                "monotonicity",
                format!("{smaller} <= {larger}"),
                cap(smaller)?,
                cap(larger)?,
            ),
            AxiomCase::Subadditive { a, b } => {
                let union = a.zip_outer(b, |x, y| Expr::Max(Box::new(x), Box::new(y)))?;
                let (ca, cb) = (cap(a)?, cap(b)?);
                (
                    "subadditivity",
                    format!("{a} | {b}"),
                    cap(&union)?,
                    Estimate {
                        mean: ca.mean + cb.mean,
                        se: ca.se.hypot(cb.se),
                    },
                )
            }
        };
        checks.push(AxiomCheck {
            axiom: axiom.to_string(),
            events,
            lhs,
            rhs,
            pass: within(lhs, rhs),
        });
    }
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(AxiomReport { checks, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_vol_band;
    use crate::simulate::{default_battery, IncrementLaw};

    fn setup() -> (MeasureBand, Vec<MeasureScheme>, McParams) {
        let band = make_vol_band(0.1, 0.2, 1.0).unwrap();
        let battery = default_battery(&band, IncrementLaw::Gaussian, None);
        (
            band,
            battery,
            McParams {
                n_paths: 4000,
                n_steps: 16,
                seed: 9,
            },
        )
    }

    #[test]
    fn capacity_of_constants() {
        let (band, battery, mc) = setup();
        let one = capacity(&Payoff::terminal("1").unwrap(), &band, &battery, mc).unwrap();
        assert_eq!(one.value, 1.0);
        let zero = capacity(&Payoff::terminal("0").unwrap(), &band, &battery, mc).unwrap();
        assert_eq!((zero.value, zero.se), (0.0, 0.0));
    }

    #[test]
    fn capacity_of_terminal_value_is_upper_vol() {
        let (band, battery, mut mc) = setup();
        mc.n_paths = 40_000;
        let c = capacity(&Payoff::terminal("x").unwrap(), &band, &battery, mc).unwrap();
        assert!((c.value - 0.2).abs() < 3.0 * c.se, "{c:?}");
        assert!(c.per_scheme.iter().all(|s| s.estimate.mean <= c.value));
    }

    #[test]
    fn capacity_is_homogeneous_on_common_seeds() {
        let (band, battery, mc) = setup();
        let f = Payoff::terminal("max(x,0) + 0.1").unwrap();
        let c = capacity(&f, &band, &battery, mc).unwrap().value;
        let c2 = capacity(&f.scaled(-2.0), &band, &battery, mc).unwrap().value;
        assert_eq!(c2, 2.0 * c);
        let c3 = capacity(&f.scaled(3.0), &band, &battery, mc).unwrap().value;
        assert!((c3 - 3.0 * c).abs() <= 1e-12 * c);
    }

    #[test]
    fn markov_examples() {
        let (band, battery, mc) = setup();
        let m = markov_check(&Payoff::terminal("1").unwrap(), 2.0, &band, &battery, mc).unwrap();
        assert_eq!(m.lhs.mean, 0.0);
        assert_eq!(m.rhs.mean, 0.5);
        assert!(m.pass);
        let x = Payoff::terminal("x").unwrap();
        let m = markov_check(&x, 0.2, &band, &battery, mc).unwrap();
        assert!(m.pass && m.lhs.mean <= 1.0);
        let m = markov_check(&x, 0.05, &band, &battery, mc).unwrap();
        assert!(m.rhs.mean > 1.0 && m.pass);
        assert!(markov_check(&x, 0.0, &band, &battery, mc).is_err());
    }

    #[test]
    fn axiom_examples() {
        let (band, battery, mc) = setup();
        let above = |l: f64| Payoff::terminal("x").unwrap().map_outer(|e| e.clone().exceeds(l));
        let below = Payoff::terminal("x").unwrap().map_outer(|e| e.clone().below(-0.1));
        let cases = vec![
            AxiomCase::Monotone {
                smaller: above(0.1),
                larger: above(0.05),
            },
            AxiomCase::Subadditive {
                a: above(0.1),
                b: above(0.1),
            },
            AxiomCase::Subadditive {
                a: above(0.1),
                b: below,
            },
        ];
        let r = capacity_axiom_check(&cases, &band, &battery, mc).unwrap();
        assert!(r.all_pass, "{r:?}");
        // A ∪ A = A
        assert_eq!(r.checks[1].lhs.mean * 2.0, r.checks[1].rhs.mean);
    }
}
