//! Payoff descriptions covering terminal, cylindrical, running-maximum and
//! time-integral claims, plus their evaluation on discrete paths.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::expr::Expr;
use crate::error::{Error, Result};

/// Relative tolerance used to match cylindrical dates against grid times.
pub const DATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `g(B_T)`.
    Terminal { g: Expr },
    /// `F(B_{t_1}, ..., B_{t_d})`.
    Cylindrical { dates: Vec<f64>, f: Expr },
    /// `G(sup_{[0,T]} B)`.
    RunningMax { g: Expr },
    /// `G(∫_0^T F(B_s) ds)`.
    TimeIntegral { f: Expr, g: Expr },
}

/// Which family of path functionals a payoff belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaClass {
    Cylindrical,
    RunningMax,
    TimeIntegral,
}

pub fn classify_gamma(payoff: &Payoff) -> GammaClass {
    match payoff {
        Payoff::Terminal { .. } | Payoff::Cylindrical { .. } => GammaClass::Cylindrical,
        Payoff::RunningMax { .. } => GammaClass::RunningMax,
        Payoff::TimeIntegral { .. } => GammaClass::TimeIntegral,
    }
}

/// A discrete path: sample times and values, same length, times nondecreasing.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub times: &'a [f64],
    pub values: &'a [f64],
}

impl<'a> PathView<'a> {
    pub fn new(times: &'a [f64], values: &'a [f64]) -> Self {
        debug_assert_eq!(times.len(), values.len());
        Self { times, values }
    }
}

pub(crate) fn date_matches(date: f64, t: f64) -> bool {
    (date - t).abs() <= DATE_TOL * date.abs().max(1.0)
}

impl Payoff {
    pub fn terminal(g: &str) -> Result<Self> {
        Self::Terminal { g: Expr::parse(g)? }.checked()
    }

    pub fn cylindrical(dates: Vec<f64>, f: &str) -> Result<Self> {
        Self::Cylindrical {
            dates,
            f: Expr::parse(f)?,
        }
        .checked()
    }

    pub fn running_max(g: &str) -> Result<Self> {
        Self::RunningMax { g: Expr::parse(g)? }.checked()
    }

    pub fn time_integral(f: &str, g: &str) -> Result<Self> {
        Self::TimeIntegral {
            f: Expr::parse(f)?,
            g: Expr::parse(g)?,
        }
        .checked()
    }

    fn checked(self) -> Result<Self> {
        self.validate(None)?;
        Ok(self)
    }

    /// Structural checks; with a horizon, also checks dates lie in `(0, T]`.
    pub fn validate(&self, horizon: Option<f64>) -> Result<()> {
        let one_var = |e: &Expr, name: &str| {
            if e.arity() > 1 {
                Err(Error::Validation(format!("{name} may only use the variable x")))
            } else {
                Ok(())
            }
        };
        match self {
            Payoff::Terminal { g } => one_var(g, "terminal payoff"),
            Payoff::RunningMax { g } => one_var(g, "running-max payoff"),
            Payoff::TimeIntegral { f, g } => {
                one_var(f, "time-integral integrand")?;
                one_var(g, "time-integral outer function")
            }
            Payoff::Cylindrical { dates, f } => {
                if dates.is_empty() {
                    return Err(Error::Validation("cylindrical payoff needs at least one date".into()));
                }
                if dates.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Validation(
                        "cylindrical dates must be strictly increasing".into(),
                    ));
                }
                if dates[0] <= 0.0 {
                    return Err(Error::Validation("cylindrical dates must be positive".into()));
                }
                if let Some(t) = horizon {
                    if dates[dates.len() - 1] > t * (1.0 + DATE_TOL) {
                        return Err(Error::Validation(format!(
                            "cylindrical date {} exceeds the horizon {t}",
                            dates[dates.len() - 1]
                        )));
                    }
                }
                if f.arity() > dates.len() {
                    return Err(Error::Validation(format!(
                        "cylindrical function uses x{} but only {} dates are given",
                        f.arity(),
                        dates.len()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Applies `h` to the outermost function, keeping the path functional.
    /// `h` receives an expression in which `x` is the original payoff value.
    pub fn map_outer(&self, h: impl Fn(&Expr) -> Expr) -> Payoff {
        match self {
            Payoff::Terminal { g } => Payoff::Terminal { g: h(g) },
            Payoff::Cylindrical { dates, f } => Payoff::Cylindrical {
                dates: dates.clone(),
                f: h(f),
            },
            Payoff::RunningMax { g } => Payoff::RunningMax { g: h(g) },
            Payoff::TimeIntegral { f, g } => Payoff::TimeIntegral { f: f.clone(), g: h(g) },
        }
    }

    /// `λ f`.
    pub fn scaled(&self, factor: f64) -> Payoff {
        self.map_outer(|e| e.clone().scale(factor))
    }

    /// Combines two payoffs sharing the same path functional.
    pub fn zip_outer(&self, other: &Payoff, op: impl Fn(Expr, Expr) -> Expr) -> Result<Payoff> {
        let mismatch = || Err(Error::Validation("payoffs do not share a path functional".into()));
        Ok(match (self, other) {
            (Payoff::Terminal { g: a }, Payoff::Terminal { g: b }) => Payoff::Terminal {
                g: op(a.clone(), b.clone()),
            },
            (Payoff::RunningMax { g: a }, Payoff::RunningMax { g: b }) => Payoff::RunningMax {
                g: op(a.clone(), b.clone()),
            },
            (Payoff::Cylindrical { dates: da, f: a }, Payoff::Cylindrical { dates: db, f: b }) if da == db => {
                Payoff::Cylindrical {
                    dates: da.clone(),
                    f: op(a.clone(), b.clone()),
                }
            }
            (Payoff::TimeIntegral { f: fa, g: a }, Payoff::TimeIntegral { f: fb, g: b }) if fa == fb => {
                Payoff::TimeIntegral {
                    f: fa.clone(),
                    g: op(a.clone(), b.clone()),
                }
            }
            _ => return mismatch(),
        })
    }

    /// Indicator `1{|f| > level}`.
    pub fn exceedance(&self, level: f64) -> Payoff {
        self.map_outer(|e| Expr::Abs(Box::new(e.clone())).exceeds(level))
    }

    pub fn evaluate(&self, path: PathView<'_>) -> Result<f64> {
        evaluate_payoff(self, path)
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Terminal { g } => write!(f, "terminal({g})"),
            Payoff::Cylindrical { dates, f: e } => write!(f, "cylindrical({dates:?}, {e})"),
            Payoff::RunningMax { g } => write!(f, "running_max({g})"),
            Payoff::TimeIntegral { f: e, g } => write!(f, "time_integral({e}, {g})"),
        }
    }
}

pub fn evaluate_payoff(payoff: &Payoff, path: PathView<'_>) -> Result<f64> {
    let PathView { times, values } = path;
    if values.is_empty() {
        return Err(Error::Shape("empty path".into()));
    }
    Ok(match payoff {
        Payoff::Terminal { g } => g.eval1(values[values.len() - 1]),
        Payoff::RunningMax { g } => {
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            g.eval1(max)
        }
        Payoff::TimeIntegral { f, g } => {
            let integral: f64 = times
                .windows(2)
                .zip(values)
                .map(|(w, &x)| f.eval1(x) * (w[1] - w[0]))
                .sum();
            g.eval1(integral)
        }
        Payoff::Cylindrical { dates, f } => {
            let mut fixings = Vec::with_capacity(dates.len());
            for &d in dates {
                let k = times
                    .iter()
                    .position(|&t| date_matches(d, t))
                    .ok_or(Error::Alignment { date: d })?;
                fixings.push(values[k]);
            }
            f.eval(&fixings)
        }
    })
}
