//! Browser bindings for `qvband`.
//!
//! Every operation takes a JSON request string and returns a JSON response
//! string. The plain functions ([`price_map`], [`qv_sample`], [`hedge_audit`])
//! do the work and are what the native tests call; the `#[wasm_bindgen]`
//! wrappers only translate errors into JS exceptions.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use wasm_bindgen::prelude::*;

use qvband::analysis::verify_superhedge;
use qvband::lattice::{build_lattice, price_lower, price_upper, superhedge_strategy, VarianceChoice};
use qvband::model::{make_vol_band, MeasureBand, Payoff};
use qvband::simulate::{default_battery, qv_containment, qv_of, IncrementLaw, MeasureScheme, PathEnsemble};

const MAX_STEPS: usize = 1000;
const MAX_PATHS: usize = 20_000;
const MAX_GRID: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum WebError {
    #[error("bad request: {0}")]
    Request(#[from] serde_json::Error),
    #[error("{0}")]
    Engine(#[from] qvband::Error),
    #[error("{field} = {value} outside [{lo}, {hi}]")]
    Limit {
        field: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },
}

fn limit(field: &'static str, value: usize, lo: usize, hi: usize) -> Result<usize, WebError> {
    if (lo..=hi).contains(&value) {
        Ok(value)
    } else {
        Err(WebError::Limit { field, value, lo, hi })
    }
}

/// Vol band `[sigma_low, sigma_high]` on `[0, horizon]` with a terminal payoff `g(x)`.
#[derive(Debug, Clone, Deserialize)]
pub struct Market {
    pub sigma_low: f64,
    pub sigma_high: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    pub payoff: String,
}

fn one() -> f64 {
    1.0
}

impl Market {
    fn band(&self) -> Result<MeasureBand, WebError> {
        Ok(make_vol_band(self.sigma_low, self.sigma_high, self.horizon)?)
    }

    fn payoff(&self) -> Result<Payoff, WebError> {
        Ok(Payoff::terminal(&self.payoff)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct PriceRequest {
    #[serde(flatten)]
    pub market: Market,
    pub n_steps: usize,
    /// Resolution of the returned map along each axis.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    60
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceMap {
    pub upper: f64,
    pub lower: f64,
    pub high_fraction: f64,
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    /// `high[t][x]`: whether the upper price picks the high variance there.
    pub high: Vec<Vec<bool>>,
    /// Upper value surface on the same grid.
    pub value: Vec<Vec<f64>>,
}

/// Upper and lower prices plus the upper policy and value on a `(t, x)` grid.
///
/// The `x` range is three standard deviations of the high-variance walk at
/// the horizon, clamped to the lattice.
pub fn price_map(req: &PriceRequest) -> Result<PriceMap, WebError> {
    let n = limit("n_steps", req.n_steps, 2, MAX_STEPS)?;
    let grid = limit("grid", req.grid, 2, MAX_GRID)?;
    let band = req.market.band()?;
    let payoff = req.market.payoff()?;
    let spec = build_lattice(&band, n)?;
    let up = price_upper(&spec, &payoff)?;
    let lo = price_lower(&spec, &payoff)?;

    let reach = (3.0 * band.upper_at(spec.horizon()).sqrt()).min(n as f64 * spec.dx());
    let xs: Vec<f64> = (0..grid)
        .map(|c| -reach + 2.0 * reach * c as f64 / (grid - 1) as f64)
        .collect();
    let rows: Vec<usize> = (0..grid).map(|r| r * (n - 1) / (grid - 1)).collect();
    let times = rows.iter().map(|&i| spec.times()[i]).collect();
    let high = rows
        .iter()
        .map(|&i| {
            xs.iter()
                .map(|&x| up.policy.interpolated_choice(i, x, 0.0) == VarianceChoice::High)
                .collect()
        })
        .collect();
    let value = rows
        .iter()
        .map(|&i| xs.iter().map(|&x| up.surface.interpolate(i, x, 0.0)).collect())
        .collect();
    Ok(PriceMap {
        upper: up.price,
        lower: lo.price,
        high_fraction: up.policy.high_fraction(),
        times,
        xs,
        high,
        value,
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct QvRequest {
    pub sigma_low: f64,
    pub sigma_high: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    pub n_steps: usize,
    /// Paths drawn per scheme.
    pub n_paths: usize,
    /// Curves returned per scheme for plotting.
    #[serde(default = "default_shown")]
    pub shown: usize,
    #[serde(default)]
    pub gaussian: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_shown() -> usize {
    4
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeCurves {
    pub scheme: String,
    pub curves: Vec<Vec<f64>>,
    pub violations: usize,
    pub n_knots: usize,
    pub max_excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QvSample {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub schemes: Vec<SchemeCurves>,
}

/// Realized QV of paths from the standard battery against the band.
pub fn qv_sample(req: &QvRequest) -> Result<QvSample, WebError> {
    let n = limit("n_steps", req.n_steps, 1, MAX_STEPS)?;
    let n_paths = limit("n_paths", req.n_paths, 1, MAX_PATHS)?;
    let band = make_vol_band(req.sigma_low, req.sigma_high, req.horizon)?;
    let spec = build_lattice(&band, n)?;
    let law = if req.gaussian {
        IncrementLaw::Gaussian
    } else {
        IncrementLaw::Binomial
    };
    let times = spec.times().to_vec();
    let mut schemes = Vec::new();
    for scheme in default_battery(&band, law, None) {
        let e = PathEnsemble::generate(&spec, &scheme, n_paths, req.seed)?;
        let c = qv_containment(&e, &band);
        schemes.push(SchemeCurves {
            scheme: scheme.name(),
            curves: (0..req.shown.min(n_paths))
                .map(|p| qv_of(&e.path(p).values).values)
                .collect(),
            violations: c.violations,
            n_knots: c.n_knots * c.n_paths,
            max_excess: c.max_excess,
        });
    }
    Ok(QvSample {
        lower: times.iter().map(|&t| band.lower_at(t)).collect(),
        upper: times.iter().map(|&t| band.upper_at(t)).collect(),
        times,
        schemes,
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct HedgeRequest {
    #[serde(flatten)]
    pub market: Market,
    pub n_steps: usize,
    /// Paths per scheme.
    pub n_paths: usize,
    /// Initial capital as a multiple of the upper price.
    #[serde(default = "one")]
    pub funding: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_bins() -> usize {
    30
}

#[derive(Debug, Clone, Serialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HedgeAudit {
    pub price: f64,
    pub capital: f64,
    /// Shortfalls up to this size are not counted as violations.
    pub epsilon: f64,
    pub strategy: String,
    pub n_paths: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub max_shortfall: f64,
    /// Histogram of `a + Σ h ΔB - f` over all paths.
    pub surplus: Vec<Bin>,
}

/// Funds the superhedge at `funding * price` and runs it over the standard
/// battery, including the lattice's own worst-case policy. Shortfalls below
/// `3 dx²` are treated as lattice discretization error.
pub fn hedge_audit(req: &HedgeRequest) -> Result<HedgeAudit, WebError> {
    let n = limit("n_steps", req.n_steps, 2, MAX_STEPS)?;
    let n_paths = limit("n_paths", req.n_paths, 1, MAX_PATHS)?;
    let bins = limit("bins", req.bins, 1, MAX_GRID)?;
    let band = req.market.band()?;
    let payoff = req.market.payoff()?;
    let spec = build_lattice(&band, n)?;
    let sol = price_upper(&spec, &payoff)?;
    let price = sol.price;
    let policy = Arc::new(sol.policy);
    let strategy = superhedge_strategy(sol.surface, &payoff)?;
    let ensembles = default_battery(&band, IncrementLaw::Binomial, Some(policy))
        .iter()
        .map(|s: &MeasureScheme| PathEnsemble::generate(&spec, s, n_paths, req.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let capital = req.funding * price;
    let epsilon = 3.0 * spec.dx2();
    let report = verify_superhedge(capital, &strategy, &ensembles, &payoff, epsilon)?;
    let surplus: Vec<f64> = report
        .terminal_values
        .iter()
        .zip(&report.payoff_values)
        .map(|(w, f)| w - f)
        .collect();
    Ok(HedgeAudit {
        price,
        capital,
        epsilon,
        strategy: strategy.kind().to_string(),
        n_paths: report.n_paths,
        violations: report.violations,
        violation_rate: report.violation_rate,
        max_shortfall: report.max_shortfall,
        surplus: histogram(&surplus, bins),
    })
}

fn histogram(xs: &[f64], bins: usize) -> Vec<Bin> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Vec::new();
    }
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<Bin> = (0..bins)
        .map(|b| Bin {
            lo: lo + b as f64 * width,
            hi: if b + 1 == bins {
                hi.max(lo + width)
            } else {
                lo + (b + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}

fn call<Q, R>(request: &str, f: impl FnOnce(&Q) -> Result<R, WebError>) -> Result<String, WebError>
where
    Q: for<'de> Deserialize<'de>,
    R: Serialize,
{
    let req: Q = serde_json::from_str(request)?;
    Ok(serde_json::to_string(&f(&req)?)?)
}

fn to_js(e: WebError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = priceMap)]
pub fn price_map_js(request: &str) -> Result<String, JsError> {
    call(request, price_map).map_err(to_js)
}

#[wasm_bindgen(js_name = qvSample)]
pub fn qv_sample_js(request: &str) -> Result<String, JsError> {
    call(request, qv_sample).map_err(to_js)
}

#[wasm_bindgen(js_name = hedgeAudit)]
pub fn hedge_audit_js(request: &str) -> Result<String, JsError> {
    call(request, hedge_audit).map_err(to_js)
}

/// Runs one operation by name without touching JS types; used by the native tests.
pub fn dispatch(op: &str, request: &str) -> Result<String, WebError> {
    match op {
        "price" => call(request, price_map),
        "qv" => call(request, qv_sample),
        "hedge" => call(request, hedge_audit),
        _ => Err(WebError::Request(serde::de::Error::custom(format!(
            "unknown operation {op:?}"
        )))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_covers_every_sample() {
        let xs = [0.0, 0.1, 0.5, 1.0, 1.0];
        let h = histogram(&xs, 4);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), xs.len());
        assert_eq!(h[3].count, 2);
        assert_eq!(h[0].lo, 0.0);
        assert_eq!(h[3].hi, 1.0);
    }

    #[test]
    fn constant_samples_land_in_one_bin() {
        let h = histogram(&[2.0; 7], 5);
        assert_eq!(h[0].count, 7);
    }

    #[test]
    fn limits_name_the_field() {
        let e = limit("n_steps", 0, 2, 10).unwrap_err();
        assert_eq!(e.to_string(), "n_steps = 0 outside [2, 10]");
    }
}
