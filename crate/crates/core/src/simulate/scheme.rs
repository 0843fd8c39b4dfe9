use serde::{Serialize, Serializer};
use std::fmt;
use std::sync::Arc;

use crate::lattice::Policy;
use crate::model::MeasureBand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementLaw {
    /// `ΔB = √v Z`.
    Gaussian,
    /// `ΔB = ±√v` with equal probability, so `(ΔB)² = v` on every path.
    Binomial,
}

/// How a path picks its per-step variance inside the band.
#[derive(Clone)]
pub enum SchemeKind {
    /// `v_i = σ² Δt_i`; must lie inside the band on every step.
    ConstVol { sigma: f64 },
    /// `v_i = v̲_i + θ (v̄_i - v̲_i)`.
    BandFraction { theta: f64 },
    /// Explicit per-step variances.
    DeterministicProfile { variances: Vec<f64> },
    /// The step range is cut into `n_regimes` equal blocks; each block
    /// independently picks `v̄` with probability `p_high`, else `v̲`.
    PiecewiseRandom { n_regimes: usize, p_high: f64 },
    /// Reads the variance choice off a lattice policy, interpolating the
    /// recorded curvature at the current state.
    PolicyFeedback { policy: Arc<Policy> },
}

#[derive(Clone)]
pub struct MeasureScheme {
    pub kind: SchemeKind,
    pub law: IncrementLaw,
}

impl MeasureScheme {
    pub fn new(kind: SchemeKind, law: IncrementLaw) -> Self {
        Self { kind, law }
    }

    pub fn const_vol(sigma: f64, law: IncrementLaw) -> Self {
        Self::new(SchemeKind::ConstVol { sigma }, law)
    }

    pub fn band_fraction(theta: f64, law: IncrementLaw) -> Self {
        Self::new(SchemeKind::BandFraction { theta }, law)
    }

    pub fn piecewise_random(n_regimes: usize, p_high: f64, law: IncrementLaw) -> Self {
        Self::new(SchemeKind::PiecewiseRandom { n_regimes, p_high }, law)
    }

    pub fn policy_feedback(policy: Arc<Policy>, law: IncrementLaw) -> Self {
        Self::new(SchemeKind::PolicyFeedback { policy }, law)
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MeasureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let law = match self.law {
            IncrementLaw::Gaussian => "gaussian",
            IncrementLaw::Binomial => "binomial",
        };
        match &self.kind {
            SchemeKind::ConstVol { sigma } => write!(f, "const_vol({sigma})/{law}"),
            SchemeKind::BandFraction { theta } => write!(f, "band_fraction({theta})/{law}"),
            SchemeKind::DeterministicProfile { variances } => {
                write!(f, "profile({} steps)/{law}", variances.len())
            }
            SchemeKind::PiecewiseRandom { n_regimes, p_high } => {
                write!(f, "piecewise_random({n_regimes}, {p_high})/{law}")
            }
            SchemeKind::PolicyFeedback { .. } => write!(f, "policy_feedback/{law}"),
        }
    }
}

impl fmt::Debug for MeasureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MeasureScheme({self})")
    }
}

impl Serialize for MeasureScheme {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// The standard battery: the band endpoints and midpoint, three random
/// regime schemes, and optionally the lattice's own worst-case policy.
///
/// Vol bands use `ConstVol` at `σ̲`, `σ̄` and their midpoint; other bands use
/// the equivalent `BandFraction` schemes.
pub fn default_battery(band: &MeasureBand, law: IncrementLaw, policy: Option<Arc<Policy>>) -> Vec<MeasureScheme> {
    let mut out = match band.as_vol_pair() {
        Some((lo, hi)) => vec![
            MeasureScheme::const_vol(lo, law),
            MeasureScheme::const_vol(hi, law),
            MeasureScheme::const_vol(0.5 * (lo + hi), law),
        ],
        None => vec![
            MeasureScheme::band_fraction(0.0, law),
            MeasureScheme::band_fraction(1.0, law),
            MeasureScheme::band_fraction(0.5, law),
        ],
    };
    for n_regimes in [2, 8, 32] {
        out.push(MeasureScheme::piecewise_random(n_regimes, 0.5, law));
    }
    if let Some(p) = policy {
        out.push(MeasureScheme::policy_feedback(p, law));
    }
    out
}
