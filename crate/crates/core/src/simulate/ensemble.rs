//! Seeded path ensembles.
//!
//! Paths are generated on demand: path `p` draws from the ChaCha8 stream
//! `p` of the generator keyed by `seed`, so any path can be regenerated
//! independently and ensembles never need to be held in memory. Imported
//! ensembles are stored explicitly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{self, BufRead, Write};

use super::scheme::{IncrementLaw, MeasureScheme, SchemeKind};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeSpec, VarianceChoice};
use crate::model::MeasureBand;
use crate::par;

/// Identifier of the path generator, recorded in exports and reports.
pub const GENERATOR_ID: &str = "chacha8-stream-per-path/v1";

const BAND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    /// `B` at every knot, starting at 0.
    pub values: Vec<f64>,
    /// Chosen variance on every step.
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    times: Vec<f64>,
    n_paths: usize,
    seed: u64,
    scheme_name: String,
    source: Source,
}

#[derive(Debug, Clone)]
enum Source {
    Generated {
        spec: LatticeSpec,
        scheme: MeasureScheme,
        /// Resolved per-step variances for deterministic schemes.
        fixed: Option<Vec<f64>>,
    },
    Stored {
        paths: Vec<SamplePath>,
    },
}

fn inside_band(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo - BAND_TOL * lo.abs().max(hi) && v <= hi + BAND_TOL * hi
}

fn resolve_fixed(spec: &LatticeSpec, scheme: &MeasureScheme) -> Result<Option<Vec<f64>>> {
    let (lo, hi) = (spec.v_low(), spec.v_high());
    let n = spec.n_steps();
    let check = |v: Vec<f64>, what: &str| -> Result<Vec<f64>> {
        for i in 0..n {
            if !inside_band(v[i], lo[i], hi[i]) {
                return Err(Error::BandViolation(format!(
                    "{what}: step {i} variance {} outside [{}, {}]",
                    v[i], lo[i], hi[i]
                )));
            }
        }
        Ok(v.iter().enumerate().map(|(i, x)| x.clamp(lo[i], hi[i])).collect())
    };
    match &scheme.kind {
        SchemeKind::ConstVol { sigma } => {
            let v = (0..n).map(|i| sigma * sigma * spec.dt(i)).collect();
            check(v, &format!("const_vol sigma = {sigma}")).map(Some)
        }
        SchemeKind::BandFraction { theta } => {
            if !(0.0..=1.0).contains(theta) {
                return Err(Error::BandViolation(format!(
                    "band_fraction theta = {theta} outside [0, 1]"
                )));
            }
            Ok(Some((0..n).map(|i| lo[i] + theta * (hi[i] - lo[i])).collect()))
        }
        SchemeKind::DeterministicProfile { variances } => {
            if variances.len() != n {
                return Err(Error::Shape(format!(
                    "profile has {} variances for {n} steps",
                    variances.len()
                )));
            }
            check(variances.clone(), "profile").map(Some)
        }
        SchemeKind::PiecewiseRandom { n_regimes, p_high } => {
            if *n_regimes == 0 || !(0.0..=1.0).contains(p_high) {
                return Err(Error::Validation(format!(
                    "piecewise_random needs n_regimes >= 1 and p_high in [0, 1] (got {n_regimes}, {p_high})"
                )));
            }
            Ok(None)
        }
        SchemeKind::PolicyFeedback { policy } => {
            if policy.spec().n_steps() != n || !policy.spec().same_grid(spec) {
                return Err(Error::Shape(format!(
                    "policy has {} steps on a different grid than the {n}-step ensemble",
                    policy.spec().n_steps()
                )));
            }
            Ok(None)
        }
    }
}

/// Draws an ensemble of `n_paths` martingale paths on the equal-variance grid
/// of `band` with `n_steps` steps.
pub fn sample_paths(
    band: &MeasureBand,
    scheme: &MeasureScheme,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let spec = build_lattice(band, n_steps)?;
    PathEnsemble::generate(&spec, scheme, n_paths, seed)
}

impl PathEnsemble {
    /// Ensemble on an existing lattice grid.
    pub fn generate(spec: &LatticeSpec, scheme: &MeasureScheme, n_paths: usize, seed: u64) -> Result<Self> {
        let fixed = resolve_fixed(spec, scheme)?;
        Ok(Self {
            times: spec.times().to_vec(),
            n_paths,
            seed,
            scheme_name: scheme.name(),
            source: Source::Generated {
                spec: spec.clone(),
                scheme: scheme.clone(),
                fixed,
            },
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme_name(&self) -> &str {
        &self.scheme_name
    }

    pub fn generator_id(&self) -> &'static str {
        GENERATOR_ID
    }

    /// True when the knots match `spec`'s time grid.
    pub fn on_grid(&self, spec: &LatticeSpec) -> bool {
        self.times.len() == spec.times().len()
            && self
                .times
                .iter()
                .zip(spec.times())
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    pub fn path(&self, p: usize) -> SamplePath {
        match &self.source {
            Source::Stored { paths } => paths[p].clone(),
            Source::Generated { spec, scheme, fixed } => generate_path(spec, scheme, fixed.as_deref(), self.seed, p),
        }
    }

    /// Applies `f` to every path, in path order.
    pub fn map_paths<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &SamplePath) -> T + Sync + Send,
    {
        par::map_range(self.n_paths, |p| f(p, &self.path(p)))
    }

    /// Writes `path,knot,time,B,v` rows after a `#` header line.
    /// `v` on a knot is the variance of the step leaving it (empty on the last knot).
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "# scheme={};seed={};generator={};n_paths={};n_steps={}",
            self.scheme_name,
            self.seed,
            GENERATOR_ID,
            self.n_paths,
            self.n_steps()
        )?;
        writeln!(out, "path,knot,time,B,v")?;
        for p in 0..self.n_paths {
            let path = self.path(p);
            for (k, (&t, &b)) in self.times.iter().zip(&path.values).enumerate() {
                match path.variances.get(k) {
                    Some(v) => writeln!(out, "{p},{k},{t:?},{b:?},{v:?}")?,
                    None => writeln!(out, "{p},{k},{t:?},{b:?},")?,
                }
            }
        }
        Ok(())
    }

    /// Reads an ensemble written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Shape(format!("ensemble csv line {line}: {msg}"));
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            _ => return Err(bad(1, "missing header")),
        };
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad(1, "header must start with '#'"))?;
        let mut scheme_name = String::new();
        let mut seed = 0u64;
        for field in header.trim().split(';') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(1, "malformed header field"))?;
            match k.trim() {
                "scheme" => scheme_name = v.to_string(),
                "seed" => seed = v.trim().parse().map_err(|_| bad(1, "bad seed"))?,
                "generator" | "n_paths" | "n_steps" => {}
                other => return Err(bad(1, &format!("unknown header key '{other}'"))),
            }
        }
        match lines.next() {
            Some((_, Ok(cols))) if cols.trim() == "path,knot,time,B,v" => {}
            _ => return Err(bad(2, "expected column line 'path,knot,time,B,v'")),
        }
        let mut times: Vec<f64> = Vec::new();
        let mut paths: Vec<SamplePath> = Vec::new();
        for (idx, line) in lines {
            let line = line.map_err(|e| bad(idx + 1, &e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(bad(idx + 1, "expected 5 columns"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(idx + 1, "bad number"));
            let p: usize = cols[0].trim().parse().map_err(|_| bad(idx + 1, "bad path index"))?;
            let k: usize = cols[1].trim().parse().map_err(|_| bad(idx + 1, "bad knot index"))?;
            if p == paths.len() {
                paths.push(SamplePath {
                    values: Vec::new(),
                    variances: Vec::new(),
                });
            } else if p + 1 != paths.len() {
                return Err(bad(idx + 1, "paths must be contiguous and ordered"));
            }
            let path = paths.last_mut().expect("pushed above");
            if k != path.values.len() {
                return Err(bad(idx + 1, "knots must be contiguous and ordered"));
            }
            let t = num(cols[2])?;
            if p == 0 {
                times.push(t);
            } else if times.get(k).is_none_or(|&t0| t0 != t) {
                return Err(bad(idx + 1, "paths disagree on knot times"));
            }
            path.values.push(num(cols[3])?);
            if !cols[4].trim().is_empty() {
                path.variances.push(num(cols[4])?);
            }
        }
        if paths.is_empty() || times.len() < 2 {
            return Err(bad(0, "no paths"));
        }
        for p in &paths {
            if p.values.len() != times.len() || p.variances.len() + 1 != times.len() {
                return Err(bad(0, "ragged paths"));
            }
        }
        Ok(Self {
            times,
            n_paths: paths.len(),
            seed,
            scheme_name,
            source: Source::Stored { paths },
        })
    }
}

fn generate_path(spec: &LatticeSpec, scheme: &MeasureScheme, fixed: Option<&[f64]>, seed: u64, p: usize) -> SamplePath {
    let n = spec.n_steps();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(p as u64);
    let mut values = Vec::with_capacity(n + 1);
    let mut variances = Vec::with_capacity(n);
    values.push(0.0);

    let (lo, hi) = (spec.v_low(), spec.v_high());
    let mut regime_high = false;
    let (policy, mut aux) = match &scheme.kind {
        SchemeKind::PolicyFeedback { policy } => (Some(policy), policy.layout().aux_start()),
        _ => (None, 0.0),
    };
    for i in 0..n {
        let x = values[i];
        let v = match (&scheme.kind, fixed) {
            (_, Some(f)) => f[i],
            (SchemeKind::PiecewiseRandom { n_regimes, p_high }, None) => {
                let regimes = (*n_regimes).min(n);
                if i == 0 || i * regimes / n != (i - 1) * regimes / n {
                    regime_high = rng.random::<f64>() < *p_high;
                }
                if regime_high {
                    hi[i]
                } else {
                    lo[i]
                }
            }
            (SchemeKind::PolicyFeedback { .. }, None) => {
                let policy = policy.expect("policy scheme");
                match policy.interpolated_choice(i, x, aux) {
                    VarianceChoice::High => hi[i],
                    VarianceChoice::Low => lo[i],
                }
            }
            _ => unreachable!("deterministic schemes are resolved up front"),
        };
        let step = match scheme.law {
            IncrementLaw::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                v.sqrt() * z
            }
            IncrementLaw::Binomial => {
                if rng.random::<bool>() {
                    v.sqrt()
                } else {
                    -v.sqrt()
                }
            }
        };
        let x_next = x + step;
        if let Some(policy) = policy {
            aux = policy.layout().aux_advance(i, aux, x, x_next);
        }
        values.push(x_next);
        variances.push(v);
    }
    SamplePath { values, variances }
}
