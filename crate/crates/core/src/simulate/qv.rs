use serde::{Deserialize, Serialize};

use super::ensemble::{PathEnsemble, SamplePath};
use super::scheme::MeasureScheme;
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, slope, HedgeStrategy};
use crate::model::{date_matches, MeasureBand};

/// Sample mean with its standard error `sd / √n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// Mean and standard error, summed in sample order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self {
            mean,
            se: (var / n as f64).sqrt(),
        }
    }
}

/// Cumulative sum of squared increments, one entry per knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvCurve {
    pub values: Vec<f64>,
}

pub fn qv_of(values: &[f64]) -> QvCurve {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    for w in values.windows(2) {
        acc += (w[1] - w[0]).powi(2);
        out.push(acc);
    }
    QvCurve { values: out }
}

pub fn realized_qv(ensemble: &PathEnsemble, path_index: usize) -> QvCurve {
    qv_of(&ensemble.path(path_index).values)
}

/// `Σ h(t_i, B_{t_i}, aux_i) (B_{t_{i+1}} - B_{t_i})` along one path, with the
/// auxiliary state tracked the same way the lattice tracks it.
pub fn integrate_path(strategy: &HedgeStrategy, values: &[f64]) -> f64 {
    let layout = strategy.layout();
    let mut aux = layout.aux_start();
    let mut total = 0.0;
    for i in 0..values.len() - 1 {
        let (x, x_next) = (values[i], values[i + 1]);
        total += strategy.lookup(i, x, aux) * (x_next - x);
        aux = layout.aux_advance(i, aux, x, x_next);
    }
    total
}

pub fn stochastic_integral(strategy: &HedgeStrategy, ensemble: &PathEnsemble, path_index: usize) -> Result<f64> {
    if !ensemble.on_grid(strategy.layout().spec()) {
        return Err(Error::Shape(format!(
            "strategy grid has {} steps, ensemble has {}",
            strategy.layout().spec().n_steps(),
            ensemble.n_steps()
        )));
    }
    Ok(integrate_path(strategy, &ensemble.path(path_index).values))
}

/// Knot-wise check of `μ̲_t ≤ ⟨B⟩_t ≤ μ̄_t` over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    pub scheme: String,
    pub n_paths: usize,
    pub n_knots: usize,
    pub violations: usize,
    /// Largest distance outside the band, 0 when contained.
    pub max_excess: f64,
}

/// Relative slack for the summed squared increments (rounding only).
pub const QV_TOL: f64 = 1e-12;

pub fn qv_containment(ensemble: &PathEnsemble, band: &MeasureBand) -> Containment {
    let times = ensemble.times();
    let bounds: Vec<(f64, f64)> = times.iter().map(|&t| (band.lower_at(t), band.upper_at(t))).collect();
    let rows = ensemble.map_paths(|_, path| {
        let qv = qv_of(&path.values);
        let mut count = 0;
        let mut excess = 0.0f64;
        for (q, &(lo, hi)) in qv.values.iter().zip(&bounds) {
            let slack = QV_TOL * hi.max(f64::MIN_POSITIVE);
            let out = (lo - q).max(q - hi);
            if out > slack {
                count += 1;
            }
            excess = excess.max(out.max(0.0));
        }
        (count, excess)
    });
    Containment {
        scheme: ensemble.scheme_name().to_string(),
        n_paths: ensemble.n_paths(),
        n_knots: times.len(),
        violations: rows.iter().map(|r| r.0).sum(),
        max_excess: rows.iter().map(|r| r.1).fold(0.0, f64::max),
    }
}

fn knot_index(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&s| date_matches(t, s))
        .ok_or(Error::Alignment { date: t })
}

/// Monte Carlo `E (B_t - B_s)^{2n}` for `n ∈ {1, 2, 3}`.
pub fn moment_estimate(ensemble: &PathEnsemble, n: u32, s: f64, t: f64) -> Result<Estimate> {
    if !(1..=3).contains(&n) {
        return Err(Error::Validation(format!("moment order n must be 1, 2 or 3 (got {n})")));
    }
    if s > t {
        return Err(Error::Validation(format!("need s <= t (got s = {s}, t = {t})")));
    }
    let a = knot_index(ensemble.times(), s)?;
    let b = knot_index(ensemble.times(), t)?;
    let xs = ensemble.map_paths(|_, path: &SamplePath| (path.values[b] - path.values[a]).powi(2 * n as i32));
    Ok(Estimate::from_samples(&xs))
}

#[derive(Debug, Clone)]
pub struct QvParams {
    pub battery: Vec<MeasureScheme>,
    pub fine_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeEstimate {
    pub scheme: String,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvApproxPoint {
    pub subdivisions: usize,
    pub per_scheme: Vec<SchemeEstimate>,
    /// Largest estimate over the battery.
    pub worst: SchemeEstimate,
    /// `4 C (t/n)^α μ̄_t`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvApproxReport {
    pub t: f64,
    pub fine_steps: usize,
    pub points: Vec<QvApproxPoint>,
    /// Least-squares slope of `ln worst` against `ln n`.
    pub log_log_slope: Option<f64>,
}

/// `E (S_t^n - ⟨B⟩_t)²` per scheme, where `S_t^n` sums squared increments over
/// the uniform `n`-point subdivision of `[0, t]` and `⟨B⟩_t` is the realized
/// quadratic variation on the fine grid.
pub fn qv_approx_error(
    band: &MeasureBand,
    t: f64,
    subdivisions: &[usize],
    params: &QvParams,
) -> Result<QvApproxReport> {
    if params.battery.is_empty() {
        return Err(Error::Validation("battery must not be empty".into()));
    }
    let spec = build_lattice(band, params.fine_steps)?;
    let times = spec.times();
    let end = knot_index(times, t).map_err(|_| {
        Error::Resolution(format!(
            "t = {t} is not a knot of the {}-step fine grid",
            params.fine_steps
        ))
    })?;
    let mut plans = Vec::with_capacity(subdivisions.len());
    for &n in subdivisions {
        if n == 0 || n > end {
            return Err(Error::Resolution(format!(
                "{n} subdivisions exceed the {end} fine steps covering [0, {t}]"
            )));
        }
        let mut idx = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let tk = t * k as f64 / n as f64;
            idx.push(
                knot_index(times, tk).map_err(|_| {
                    Error::Resolution(format!("subdivision point {tk} (n = {n}) is not on the fine grid"))
                })?,
            );
        }
        plans.push(idx);
    }

    let ensembles = params
        .battery
        .iter()
        .map(|s| PathEnsemble::generate(&spec, s, params.n_paths, params.seed))
        .collect::<Result<Vec<_>>>()?;
    // errors[scheme][subdivision][path]
    let per_path: Vec<Vec<Vec<f64>>> = ensembles
        .iter()
        .map(|e| {
            let rows = e.map_paths(|_, path| {
                let qv: f64 = path.values[..=end].windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
                plans
                    .iter()
                    .map(|idx| {
                        let coarse: f64 = idx
                            .windows(2)
                            .map(|w| (path.values[w[1]] - path.values[w[0]]).powi(2))
                            .sum();
                        (coarse - qv).powi(2)
                    })
                    .collect::<Vec<f64>>()
            });
            (0..plans.len()).map(|q| rows.iter().map(|r| r[q]).collect()).collect()
        })
        .collect();

    let mu_t = band.upper_at(t);
    let mut points = Vec::with_capacity(subdivisions.len());
    for (q, &n) in subdivisions.iter().enumerate() {
        let per_scheme: Vec<SchemeEstimate> = ensembles
            .iter()
            .zip(&per_path)
            .map(|(e, rows)| SchemeEstimate {
                scheme: e.scheme_name().to_string(),
                estimate: Estimate::from_samples(&rows[q]),
            })
            .collect();
        let worst = per_scheme
            .iter()
            .fold(None::<&SchemeEstimate>, |best, s| match best {
                Some(b) if b.estimate.mean >= s.estimate.mean => Some(b),
                _ => Some(s),
            })
            .expect("nonempty battery")
            .clone();
        let bound = 4.0 * band.holder_c() * (t / n as f64).powf(band.holder_alpha()) * mu_t;
        points.push(QvApproxPoint {
            subdivisions: n,
            per_scheme,
            worst,
            bound,
        });
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.worst.estimate.mean > 0.0)
        .map(|p| ((p.subdivisions as f64).ln(), p.worst.estimate.mean.ln()))
        .collect();
    let log_log_slope = (logs.len() >= 2).then(|| slope(&logs));
    Ok(QvApproxReport {
        t,
        fine_steps: params.fine_steps,
        points,
        log_log_slope,
    })
}
