//! Flat `key = value` run configuration with `[section]` headers.
//!
//! Blank lines and lines starting with `#` are ignored. Keys before the first
//! header belong to the global section. Unknown sections, unknown keys and
//! duplicate keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;
use crate::lattice::Monitoring;
use crate::model::{make_vol_band, Knot, MeasureBand, Payoff};
use crate::simulate::IncrementLaw;

/// Parsed config as written, for the provenance echo.
pub type ConfigEcho = BTreeMap<String, BTreeMap<String, String>>;

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["seed"]),
    (
        "band",
        &[
            "sigma_low",
            "sigma_high",
            "horizon",
            "lower",
            "upper",
            "knot_file",
            "holder_c",
            "holder_alpha",
        ],
    ),
    ("payoff", &["kind", "g", "f", "dates"]),
    ("price", &["n_steps", "bound", "monitoring", "export_surface"]),
    (
        "hedge",
        &[
            "n_steps",
            "n_paths",
            "law",
            "battery",
            "epsilon",
            "capital",
            "underfund",
            "histogram_bins",
            "export_histogram",
        ],
    ),
    ("duality", &["n_steps", "n_paths", "law", "battery", "allowance"]),
    (
        "capacity",
        &["n_steps", "n_paths", "law", "battery", "markov_alpha", "event_levels"],
    ),
    (
        "qv",
        &[
            "n_steps",
            "n_paths",
            "battery",
            "t",
            "fine_steps",
            "approx_paths",
            "subdivisions",
            "law",
        ],
    ),
    ("converge", &["steps", "monitoring"]),
    ("output", &["dir", "format"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "txt",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "text" => Ok(Format::Text),
            _ => Err(format!("expected json, csv or text (got '{s}')")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Text => "text",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSel {
    Upper,
    Lower,
    Both,
}

/// Members of a scheme battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatterySel {
    /// Constant schemes at the band endpoints and midpoint.
    pub endpoints: bool,
    /// Piecewise-random regime schemes.
    pub regimes: bool,
    /// The lattice policy of the priced payoff.
    pub policy: bool,
}

impl BatterySel {
    pub const ALL: BatterySel = BatterySel {
        endpoints: true,
        regimes: true,
        policy: true,
    };
}

#[derive(Debug, Clone)]
pub struct PriceParams {
    pub n_steps: usize,
    pub bound: BoundSel,
    pub monitoring: Monitoring,
    pub export_surface: bool,
}

#[derive(Debug, Clone)]
pub struct HedgeParams {
    pub n_steps: usize,
    pub n_paths: usize,
    pub law: IncrementLaw,
    pub battery: BatterySel,
    /// Default `3 dx²`.
    pub epsilon: Option<f64>,
    /// Default: the lattice price.
    pub capital: Option<f64>,
    /// Relative cut for the underfunded audit; 0 disables it.
    pub underfund: f64,
    pub histogram_bins: usize,
    pub export_histogram: bool,
}

#[derive(Debug, Clone)]
pub struct DualityParams {
    pub n_steps: usize,
    pub n_paths: usize,
    pub law: IncrementLaw,
    pub battery: BatterySel,
    /// Truncation allowance relative to `|primal|`.
    pub allowance: f64,
}

#[derive(Debug, Clone)]
pub struct CapacityParams {
    pub n_steps: usize,
    pub n_paths: usize,
    pub law: IncrementLaw,
    pub battery: BatterySel,
    pub markov_alpha: Vec<f64>,
    /// Levels `l` for the events `{f > l}` used in the axiom checks.
    pub event_levels: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QvRunParams {
    pub n_steps: usize,
    pub n_paths: usize,
    pub battery: BatterySel,
    /// Default: the band horizon.
    pub t: Option<f64>,
    pub fine_steps: usize,
    pub approx_paths: usize,
    pub subdivisions: Vec<usize>,
    pub law: IncrementLaw,
}

#[derive(Debug, Clone)]
pub struct ConvergeParams {
    pub steps: Vec<usize>,
    pub monitoring: Monitoring,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub band: MeasureBand,
    pub payoff: Payoff,
    pub price: PriceParams,
    pub hedge: HedgeParams,
    pub duality: DualityParams,
    pub capacity: CapacityParams,
    pub qv: QvRunParams,
    pub converge: ConvergeParams,
    pub out_dir: Option<PathBuf>,
    pub format: Format,
    pub echo: ConfigEcho,
}

fn err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn raw_entries(text: &str) -> Result<ConfigEcho, CliError> {
    let mut out = ConfigEcho::new();
    out.insert(String::new(), BTreeMap::new());
    let mut section = String::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = format!("line {}", n + 1);
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(&at, format!("malformed section header '{line}'")))?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(err(name, format!("unknown section [{name}] ({at})")));
            }
            if out.contains_key(name) {
                return Err(err(name, format!("section [{name}] appears twice ({at})")));
            }
            section = name.to_string();
            out.insert(section.clone(), BTreeMap::new());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(&at, format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let full = qualified(&section, key);
        let allowed = SECTIONS
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, k)| *k)
            .unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(err(&full, format!("unknown key '{full}' ({at})")));
        }
        if value.is_empty() {
            return Err(err(&full, format!("'{full}' has an empty value ({at})")));
        }
        let map = out.get_mut(&section).expect("section inserted above");
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(err(&full, format!("'{full}' is set twice ({at})")));
        }
    }
    Ok(out)
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

/// Typed access to one section with key-qualified errors.
struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    fn key(&self, key: &str) -> String {
        qualified(self.name, key)
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.entries.and_then(|m| m.get(key)).map(String::as_str)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| err(&self.key(key), format!("{}: cannot parse '{v}': {e}", self.key(key))))
            })
            .transpose()
    }

    fn f64_in(&self, key: &str, lo: f64, hi: f64) -> Result<Option<f64>, CliError> {
        match self.parse::<f64>(key)? {
            Some(v) if !(v >= lo && v <= hi) => Err(err(
                &self.key(key),
                format!("{} = {v} outside [{lo}, {hi}]", self.key(key)),
            )),
            other => Ok(other),
        }
    }

    fn usize_in(&self, key: &str, lo: usize, hi: usize, default: usize) -> Result<usize, CliError> {
        let v = self.parse::<usize>(key)?.unwrap_or(default);
        if v < lo || v > hi {
            return Err(err(
                &self.key(key),
                format!("{} = {v} outside [{lo}, {hi}]", self.key(key)),
            ));
        }
        Ok(v)
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        Ok(self.parse::<bool>(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<T>().map_err(|e| {
                            err(
                                &self.key(key),
                                format!("{}: cannot parse '{}': {e}", self.key(key), s.trim()),
                            )
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn law(&self, default: IncrementLaw) -> Result<IncrementLaw, CliError> {
        match self.raw("law") {
            None => Ok(default),
            Some("gaussian") => Ok(IncrementLaw::Gaussian),
            Some("binomial") => Ok(IncrementLaw::Binomial),
            Some(v) => Err(err(
                &self.key("law"),
                format!("{} must be gaussian or binomial (got '{v}')", self.key("law")),
            )),
        }
    }

    fn monitoring(&self) -> Result<Monitoring, CliError> {
        match self.raw("monitoring") {
            None | Some("continuous") => Ok(Monitoring::Continuous),
            Some("discrete") => Ok(Monitoring::Discrete),
            Some(v) => Err(err(
                &self.key("monitoring"),
                format!("{} must be continuous or discrete (got '{v}')", self.key("monitoring")),
            )),
        }
    }

    fn battery(&self) -> Result<BatterySel, CliError> {
        let Some(v) = self.raw("battery") else {
            return Ok(BatterySel::ALL);
        };
        let mut sel = BatterySel {
            endpoints: false,
            regimes: false,
            policy: false,
        };
        for tok in v.split(',').map(str::trim) {
            match tok {
                "endpoints" => sel.endpoints = true,
                "regimes" => sel.regimes = true,
                "policy" => sel.policy = true,
                _ => {
                    return Err(err(
                        &self.key("battery"),
                        format!(
                            "{}: unknown member '{tok}' (expected endpoints, regimes, policy)",
                            self.key("battery")
                        ),
                    ))
                }
            }
        }
        Ok(sel)
    }

    fn n_steps(&self, default: usize) -> Result<usize, CliError> {
        self.usize_in("n_steps", 1, 20_000, default)
    }

    fn n_paths(&self, key: &str, default: usize) -> Result<usize, CliError> {
        self.usize_in(key, 2, 100_000_000, default)
    }
}

/// Parses a config file; relative `knot_file` paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
    let echo = raw_entries(text)?;
    let section = |name: &'static str| Section {
        name,
        entries: echo.get(name),
    };
    let global = section("");
    let seed = global.parse::<u64>("seed")?.unwrap_or(0);
    let band = parse_band(&section("band"), base_dir)?;
    let payoff = parse_payoff(&section("payoff"), band.horizon())?;

    let s = section("price");
    let price = PriceParams {
        n_steps: s.n_steps(400)?,
        bound: match s.raw("bound") {
            None | Some("upper") => BoundSel::Upper,
            Some("lower") => BoundSel::Lower,
            Some("both") => BoundSel::Both,
            Some(v) => {
                return Err(err(
                    "price.bound",
                    format!("price.bound must be upper, lower or both (got '{v}')"),
                ))
            }
        },
        monitoring: s.monitoring()?,
        export_surface: s.bool_or("export_surface", false)?,
    };

    let s = section("hedge");
    let hedge = HedgeParams {
        n_steps: s.n_steps(200)?,
        n_paths: s.n_paths("n_paths", 10_000)?,
        law: s.law(IncrementLaw::Binomial)?,
        battery: s.battery()?,
        epsilon: s.f64_in("epsilon", 0.0, f64::MAX)?,
        capital: s.f64_in("capital", f64::MIN, f64::MAX)?,
        underfund: s.f64_in("underfund", 0.0, 1.0)?.unwrap_or(0.1),
        histogram_bins: s.usize_in("histogram_bins", 1, 10_000, 20)?,
        export_histogram: s.bool_or("export_histogram", false)?,
    };

    let s = section("duality");
    let duality = DualityParams {
        n_steps: s.n_steps(200)?,
        n_paths: s.n_paths("n_paths", 10_000)?,
        law: s.law(IncrementLaw::Binomial)?,
        battery: s.battery()?,
        allowance: s.f64_in("allowance", 0.0, 1.0)?.unwrap_or(0.005),
    };

    let s = section("capacity");
    let markov_alpha = s.list::<f64>("markov_alpha")?.unwrap_or_else(|| vec![0.1, 0.2]);
    if let Some(a) = markov_alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(err(
            "capacity.markov_alpha",
            format!("capacity.markov_alpha entries must be > 0 (got {a})"),
        ));
    }
    let event_levels = s.list::<f64>("event_levels")?.unwrap_or_else(|| vec![0.05, 0.1]);
    if event_levels.iter().any(|l| !l.is_finite()) {
        return Err(err(
            "capacity.event_levels",
            "capacity.event_levels entries must be finite",
        ));
    }
    let capacity = CapacityParams {
        n_steps: s.n_steps(64)?,
        n_paths: s.n_paths("n_paths", 10_000)?,
        law: s.law(IncrementLaw::Gaussian)?,
        battery: s.battery()?,
        markov_alpha,
        event_levels,
    };

    let s = section("qv");
    let subdivisions = s
        .list::<usize>("subdivisions")?
        .unwrap_or_else(|| vec![4, 8, 16, 32, 64]);
    if subdivisions.is_empty() || subdivisions.contains(&0) || subdivisions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(err(
            "qv.subdivisions",
            "qv.subdivisions must be positive and strictly increasing",
        ));
    }
    let qv = QvRunParams {
        n_steps: s.n_steps(400)?,
        n_paths: s.n_paths("n_paths", 10_000)?,
        battery: s.battery()?,
        t: s.f64_in("t", f64::MIN_POSITIVE, band.horizon())?,
        fine_steps: s.usize_in("fine_steps", 1, 20_000, 256)?,
        approx_paths: s.n_paths("approx_paths", 2_000)?,
        subdivisions,
        law: s.law(IncrementLaw::Gaussian)?,
    };

    let s = section("converge");
    let steps = s.list::<usize>("steps")?.unwrap_or_else(|| vec![50, 100, 200, 400]);
    if steps.is_empty() || steps.contains(&0) || steps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(err(
            "converge.steps",
            "converge.steps must be positive and strictly increasing",
        ));
    }
    let converge = ConvergeParams {
        steps,
        monitoring: s.monitoring()?,
    };

    let s = section("output");
    let format = s.parse::<Format>("format")?.unwrap_or(Format::Json);
    let out_dir = s.raw("dir").map(PathBuf::from);

    Ok(RunConfig {
        seed,
        band,
        payoff,
        price,
        hedge,
        duality,
        capacity,
        qv,
        converge,
        out_dir,
        format,
        echo,
    })
}

fn parse_knots(key: &str, v: &str) -> Result<Vec<Knot>, CliError> {
    v.split(',')
        .map(|pair| {
            let (t, m) = pair
                .split_once(':')
                .ok_or_else(|| err(key, format!("{key}: expected 't:value' pairs, got '{}'", pair.trim())))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| err(key, format!("{key}: cannot parse '{}': {e}", s.trim())))
            };
            Ok((num(t)?, num(m)?))
        })
        .collect()
}

/// `t,lower,upper` rows with a header line.
fn read_knot_file(path: &Path) -> Result<(Vec<Knot>, Vec<Knot>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => {
                lower.push((v[0], v[1]));
                upper.push((v[0], v[2]));
            }
            _ => {
                return Err(err(
                    "band.knot_file",
                    format!(
                        "band.knot_file: {} line {}: expected t,lower,upper",
                        path.display(),
                        n + 1
                    ),
                ))
            }
        }
    }
    Ok((lower, upper))
}

fn parse_band(s: &Section<'_>, base_dir: &Path) -> Result<MeasureBand, CliError> {
    let has_vol = s.raw("sigma_low").is_some() || s.raw("sigma_high").is_some();
    let has_knots = s.raw("lower").is_some() || s.raw("upper").is_some() || s.raw("knot_file").is_some();
    match (has_vol, has_knots) {
        (true, true) => Err(err(
            "band",
            "band: give either band.sigma_low/band.sigma_high or a knot table, not both",
        )),
        (false, false) => Err(err(
            "band",
            "band: missing band.sigma_low/band.sigma_high or knot table",
        )),
        (true, false) => {
            if s.raw("holder_c").is_some() || s.raw("holder_alpha").is_some() {
                return Err(err(
                    "band.holder_c",
                    "band.holder_c/band.holder_alpha only apply to knot tables",
                ));
            }
            let lo = s
                .parse::<f64>("sigma_low")?
                .ok_or_else(|| err("band.sigma_low", "band.sigma_low is required"))?;
            let hi = s
                .parse::<f64>("sigma_high")?
                .ok_or_else(|| err("band.sigma_high", "band.sigma_high is required"))?;
            let horizon = s.parse::<f64>("horizon")?.unwrap_or(1.0);
            if lo < 0.0 {
                return Err(err("band.sigma_low", format!("band.sigma_low must be >= 0 (got {lo})")));
            }
            if lo > hi {
                return Err(err(
                    "band.sigma_low",
                    format!("band.sigma_low > band.sigma_high ({lo} > {hi})"),
                ));
            }
            if !(horizon > 0.0 && horizon.is_finite()) {
                return Err(err(
                    "band.horizon",
                    format!("band.horizon must be positive (got {horizon})"),
                ));
            }
            make_vol_band(lo, hi, horizon).map_err(|e| CliError::engine("band.sigma_high", e))
        }
        (false, true) => {
            let (lower, upper) = match s.raw("knot_file") {
                Some(file) => {
                    if s.raw("lower").is_some() || s.raw("upper").is_some() {
                        return Err(err("band.knot_file", "band.knot_file excludes band.lower/band.upper"));
                    }
                    let path = base_dir.join(file);
                    if !path.is_file() {
                        return Err(err(
                            "band.knot_file",
                            format!("band.knot_file: {} does not exist", path.display()),
                        ));
                    }
                    read_knot_file(&path)?
                }
                None => (
                    parse_knots(
                        "band.lower",
                        s.raw("lower")
                            .ok_or_else(|| err("band.lower", "band.lower is required"))?,
                    )?,
                    parse_knots(
                        "band.upper",
                        s.raw("upper")
                            .ok_or_else(|| err("band.upper", "band.upper is required"))?,
                    )?,
                ),
            };
            let horizon = match s.parse::<f64>("horizon")? {
                Some(h) => h,
                None => upper.last().map(|k| k.0).unwrap_or(0.0),
            };
            let c = s
                .parse::<f64>("holder_c")?
                .ok_or_else(|| err("band.holder_c", "band.holder_c is required with a knot table"))?;
            let alpha = s.parse::<f64>("holder_alpha")?.unwrap_or(1.0);
            MeasureBand::new(horizon, lower, upper, c, alpha).map_err(|e| CliError::engine("band", e))
        }
    }
}

fn parse_payoff(s: &Section<'_>, horizon: f64) -> Result<Payoff, CliError> {
    let kind = s.raw("kind").unwrap_or("terminal");
    let need = |key: &str| {
        s.raw(key).ok_or_else(|| {
            err(
                &s.key(key),
                format!("{} is required for payoff.kind = {kind}", s.key(key)),
            )
        })
    };
    let reject = |key: &str| match s.raw(key) {
        Some(_) => Err(err(
            &s.key(key),
            format!("{} is not used by payoff.kind = {kind}", s.key(key)),
        )),
        None => Ok(()),
    };
    let payoff = match kind {
        "terminal" | "running_max" => {
            reject("f")?;
            reject("dates")?;
            let g = need("g")?;
            let p = if kind == "terminal" {
                Payoff::terminal(g)
            } else {
                Payoff::running_max(g)
            };
            p.map_err(|e| CliError::engine("payoff.g", e))?
        }
        "cylindrical" => {
            reject("g")?;
            let dates = s
                .list::<f64>("dates")?
                .ok_or_else(|| err("payoff.dates", "payoff.dates is required for payoff.kind = cylindrical"))?;
            Payoff::cylindrical(dates, need("f")?).map_err(|e| {
                let key = if matches!(e, crate::Error::Parse { .. }) {
                    "payoff.f"
                } else {
                    "payoff.dates"
                };
                CliError::engine(key, e)
            })?
        }
        "time_integral" => {
            reject("dates")?;
            let f = need("f")?;
            let g = need("g")?;
            Payoff::time_integral(f, g).map_err(|e| CliError::engine("payoff.f", e))?
        }
        other => {
            return Err(err(
                "payoff.kind",
                format!("payoff.kind must be terminal, cylindrical, running_max or time_integral (got '{other}')"),
            ))
        }
    };
    payoff
        .validate(Some(horizon))
        .map_err(|e| CliError::engine("payoff.dates", e))?;
    Ok(payoff)
}
