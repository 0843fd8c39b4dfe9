use serde::Serialize;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::config::{BatterySel, BoundSel, ConfigEcho, Format, RunConfig};
use super::{CliError, OUT_DIR_ENV};
use crate::analysis::{
    capacity_axiom_check, capacity_on, dual_bound_on, duality_gap, markov_check, verify_superhedge, AxiomCase,
    AxiomReport, CapacityEstimate, DualityReport, HedgeReport, HistogramBin, MarkovCheck, McParams, TextReport,
};
use crate::lattice::{
    build_lattice, convergence_sweep, extract_delta, price_lower, price_upper, superhedge_strategy, write_surface_csv,
    ConvergenceReport, LatticeSolution, LatticeSpec, Monitoring, Policy,
};
use crate::model::{classify_gamma, GammaClass, MeasureBand};
use crate::simulate::{
    default_battery, qv_approx_error, qv_containment, Containment, IncrementLaw, MeasureScheme, PathEnsemble,
    QvApproxReport, QvParams, GENERATOR_ID,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Price,
    Hedge,
    Duality,
    Capacity,
    Qv,
    Converge,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Price,
        Command::Hedge,
        Command::Duality,
        Command::Capacity,
        Command::Qv,
        Command::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::Hedge => "hedge",
            Command::Duality => "duality",
            Command::Capacity => "capacity",
            Command::Qv => "qv",
            Command::Converge => "converge",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command '{s}'"))
    }
}

/// Command-line overrides. `env_out_dir` is the value of [`OUT_DIR_ENV`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub env_out_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn from_env() -> Self {
        Self {
            env_out_dir: std::env::var_os(OUT_DIR_ENV).map(PathBuf::from),
            ..Self::default()
        }
    }
}

/// Everything a command produces, before anything is written.
#[derive(Debug)]
pub struct Report {
    pub command: Command,
    pub json: String,
    pub text: String,
    pub csv: String,
    /// Extra CSV files as `(file name, contents)`.
    pub side_files: Vec<(String, String)>,
    /// One-line summary for the terminal.
    pub headline: String,
    /// Set when the run completed but its result is numerically inconsistent.
    pub failure: Option<CliError>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub headline: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    provenance: Provenance<'a>,
    result: &'a T,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    generator: &'static str,
    seed: u64,
    config: &'a ConfigEcho,
}

struct Outcome<T> {
    result: T,
    text: String,
    csv: String,
    side_files: Vec<(String, String)>,
    headline: String,
    failure: Option<CliError>,
}

impl<T> Outcome<T> {
    fn new(result: T, text: String, csv: String, headline: String) -> Self {
        Self {
            result,
            text,
            csv,
            side_files: Vec::new(),
            headline,
            failure: None,
        }
    }
}

fn finish<T: Serialize>(command: Command, cfg: &RunConfig, out: Outcome<T>) -> Result<Report, CliError> {
    let mut echo = cfg.echo.clone();
    if let Some(global) = echo.remove("") {
        if !global.is_empty() {
            echo.insert("global".into(), global);
        }
    }
    let envelope = Envelope {
        command: command.name(),
        provenance: Provenance {
            tool: "qvband",
            version: env!("CARGO_PKG_VERSION"),
            generator: GENERATOR_ID,
            seed: cfg.seed,
            config: &echo,
        },
        result: &out.result,
    };
    let mut json = serde_json::to_string_pretty(&envelope).expect("reports serialize");
    json.push('\n');
    Ok(Report {
        command,
        json,
        text: out.text,
        csv: out.csv,
        side_files: out.side_files,
        headline: out.headline,
        failure: out.failure,
    })
}

/// Runs `command` and renders its report in every format.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    match command {
        Command::Price => finish(command, cfg, price(cfg)?),
        Command::Hedge => finish(command, cfg, hedge(cfg)?),
        Command::Duality => finish(command, cfg, duality(cfg)?),
        Command::Capacity => finish(command, cfg, capacity(cfg)?),
        Command::Qv => finish(command, cfg, qv(cfg)?),
        Command::Converge => finish(command, cfg, converge(cfg)?),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Applies the overrides, runs the command and writes its files. A negative
/// duality gap still writes the report before returning the error.
pub fn run(command: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let format = opts.format.unwrap_or(cfg.format);
    let dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| opts.env_out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let report = execute(command, &cfg)?;
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let main = dir.join(format!("{}.{}", command.name(), format.extension()));
    let body = match format {
        Format::Json => &report.json,
        Format::Csv => &report.csv,
        Format::Text => &report.text,
    };
    write_file(&main, body)?;
    let mut files = vec![main];
    for (name, contents) in &report.side_files {
        let path = dir.join(name);
        write_file(&path, contents)?;
        files.push(path);
    }
    match report.failure {
        Some(e) => Err(e),
        None => Ok(RunSummary {
            files,
            headline: report.headline,
        }),
    }
}

fn lattice(band: &MeasureBand, n_steps: usize, key: &str) -> Result<LatticeSpec, CliError> {
    build_lattice(band, n_steps).map_err(|e| CliError::engine(key, e))
}

fn solve_upper(spec: &LatticeSpec, cfg: &RunConfig, key: &str) -> Result<LatticeSolution, CliError> {
    price_upper(spec, &cfg.payoff).map_err(|e| CliError::engine(key, e))
}

fn battery(
    band: &MeasureBand,
    law: IncrementLaw,
    sel: BatterySel,
    policy: Option<Arc<Policy>>,
    key: &str,
) -> Result<Vec<MeasureScheme>, CliError> {
    let all = default_battery(band, law, if sel.policy { policy } else { None });
    let picked: Vec<MeasureScheme> = all
        .into_iter()
        .enumerate()
        .filter(|(i, _)| match i {
            0..=2 => sel.endpoints,
            3..=5 => sel.regimes,
            _ => true,
        })
        .map(|(_, s)| s)
        .collect();
    if picked.is_empty() {
        return Err(CliError::Config {
            key: key.to_string(),
            message: format!("{key} selects no schemes"),
        });
    }
    Ok(picked)
}

fn law_name(law: IncrementLaw) -> &'static str {
    match law {
        IncrementLaw::Gaussian => "gaussian",
        IncrementLaw::Binomial => "binomial",
    }
}

#[derive(Serialize)]
struct PriceResult {
    payoff: String,
    gamma_class: GammaClass,
    n_steps: usize,
    dx: f64,
    monitoring: Monitoring,
    price_upper: Option<f64>,
    price_lower: Option<f64>,
    /// Share of upper-bound nodes choosing the high variance.
    high_fraction: Option<f64>,
    surface_file: Option<String>,
}

fn price(cfg: &RunConfig) -> Result<Outcome<PriceResult>, CliError> {
    let p = &cfg.price;
    let spec = lattice(&cfg.band, p.n_steps, "price.n_steps")?.with_monitoring(p.monitoring);
    let upper = match p.bound {
        BoundSel::Upper | BoundSel::Both => Some(solve_upper(&spec, cfg, "payoff")?),
        BoundSel::Lower => None,
    };
    let lower = match p.bound {
        BoundSel::Lower | BoundSel::Both => {
            Some(price_lower(&spec, &cfg.payoff).map_err(|e| CliError::engine("payoff", e))?)
        }
        BoundSel::Upper => None,
    };
    let mut side_files = Vec::new();
    let mut surface_file = None;
    if p.export_surface {
        let sol = upper.as_ref().or(lower.as_ref()).expect("at least one bound is solved");
        let delta = extract_delta(sol.surface.clone());
        let mut buf = Vec::new();
        write_surface_csv(&mut buf, sol, &delta).expect("writing to memory");
        let name = "price_surface.csv".to_string();
        side_files.push((name.clone(), String::from_utf8(buf).expect("ascii csv")));
        surface_file = Some(name);
    }
    let result = PriceResult {
        payoff: cfg.payoff.to_string(),
        gamma_class: classify_gamma(&cfg.payoff),
        n_steps: p.n_steps,
        dx: spec.dx(),
        monitoring: p.monitoring,
        price_upper: upper.as_ref().map(|s| s.price),
        price_lower: lower.as_ref().map(|s| s.price),
        high_fraction: upper.as_ref().map(|s| s.policy.high_fraction()),
        surface_file,
    };
    let mut text = String::new();
    let _ = writeln!(text, "payoff        {}", result.payoff);
    let _ = writeln!(text, "n_steps       {}  (dx {:.6e})", result.n_steps, result.dx);
    let mut csv = String::from("bound,price\n");
    let mut headline = format!("price {}:", result.payoff);
    if let Some(v) = result.price_upper {
        let _ = writeln!(text, "price upper   {v:.10}");
        let _ = writeln!(text, "high fraction {:.4}", result.high_fraction.unwrap_or(0.0));
        let _ = writeln!(csv, "upper,{v:?}");
        let _ = write!(headline, " upper {v:.8}");
    }
    if let Some(v) = result.price_lower {
        let _ = writeln!(text, "price lower   {v:.10}");
        let _ = writeln!(csv, "lower,{v:?}");
        let _ = write!(headline, " lower {v:.8}");
    }
    let mut out = Outcome::new(result, text, csv, headline);
    out.side_files = side_files;
    Ok(out)
}

#[derive(Serialize)]
struct HedgeResult {
    payoff: String,
    n_steps: usize,
    n_paths_per_scheme: usize,
    law: &'static str,
    price: f64,
    strategy: &'static str,
    report: HedgeReport,
    underfunded: Option<HedgeReport>,
    histogram: Vec<HistogramBin>,
    histogram_file: Option<String>,
}

fn hedge(cfg: &RunConfig) -> Result<Outcome<HedgeResult>, CliError> {
    let h = &cfg.hedge;
    let spec = lattice(&cfg.band, h.n_steps, "hedge.n_steps")?;
    let sol = solve_upper(&spec, cfg, "payoff")?;
    let price = sol.price;
    let policy = Arc::new(sol.policy.clone());
    let strategy = superhedge_strategy(sol.surface, &cfg.payoff).map_err(|e| CliError::engine("payoff", e))?;
    let schemes = battery(&cfg.band, h.law, h.battery, Some(policy), "hedge.battery")?;
    let ensembles = schemes
        .iter()
        .map(|s| PathEnsemble::generate(&spec, s, h.n_paths, cfg.seed))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| CliError::engine("hedge.battery", e))?;
    let epsilon = h.epsilon.unwrap_or(3.0 * spec.dx2());
    let capital = h.capital.unwrap_or(price);
    let report = verify_superhedge(capital, &strategy, &ensembles, &cfg.payoff, epsilon)
        .map_err(|e| CliError::engine("hedge.epsilon", e))?;
    let underfunded = (h.underfund > 0.0).then(|| report.at_capital(capital - h.underfund * capital.abs()));
    let histogram = report.shortfall_histogram(h.histogram_bins);
    let mut csv = Vec::new();
    report
        .write_histogram_csv(&mut csv, h.histogram_bins)
        .expect("writing to memory");
    let csv = String::from_utf8(csv).expect("ascii csv");
    let histogram_file = h.export_histogram.then(|| "hedge_histogram.csv".to_string());

    let mut text = format!(
        "payoff           {}\nprice            {:.10}\nstrategy         {}\n",
        cfg.payoff,
        price,
        strategy.kind()
    );
    text.push_str(&report.to_text());
    if let Some(u) = &underfunded {
        let _ = writeln!(text, "underfunded audit at {:.10}", u.initial_capital);
        text.push_str(&u.to_text());
    }
    let headline = format!(
        "hedge {}: capital {:.8}, {} of {} paths beyond epsilon {:.2e}",
        cfg.payoff, capital, report.violations, report.n_paths, epsilon
    );
    let mut side_files = Vec::new();
    if let Some(name) = &histogram_file {
        side_files.push((name.clone(), csv.clone()));
    }
    let result = HedgeResult {
        payoff: cfg.payoff.to_string(),
        n_steps: h.n_steps,
        n_paths_per_scheme: h.n_paths,
        law: law_name(h.law),
        price,
        strategy: strategy.kind(),
        report,
        underfunded,
        histogram,
        histogram_file,
    };
    let mut out = Outcome::new(result, text, csv, headline);
    out.side_files = side_files;
    Ok(out)
}

#[derive(Serialize)]
struct DualityResult {
    payoff: String,
    n_steps: usize,
    n_paths_per_scheme: usize,
    law: &'static str,
    report: DualityReport,
}

fn duality(cfg: &RunConfig) -> Result<Outcome<DualityResult>, CliError> {
    let d = &cfg.duality;
    let spec = lattice(&cfg.band, d.n_steps, "duality.n_steps")?;
    let sol = solve_upper(&spec, cfg, "payoff")?;
    let schemes = battery(
        &cfg.band,
        d.law,
        d.battery,
        Some(Arc::new(sol.policy)),
        "duality.battery",
    )?;
    let per_scheme = dual_bound_on(&spec, &cfg.payoff, &schemes, d.n_paths, cfg.seed)
        .map_err(|e| CliError::engine("duality.battery", e))?;
    let report = duality_gap(sol.price, per_scheme, d.allowance * sol.price.abs())
        .map_err(|e| CliError::engine("duality.battery", e))?;
    let failure = report
        .ensure_consistent()
        .err()
        .map(|e| CliError::engine("duality.allowance", e));
    let mut csv = String::from("scheme,mean,se\n");
    for s in &report.per_scheme {
        let _ = writeln!(csv, "{},{:?},{:?}", s.scheme, s.estimate.mean, s.estimate.se);
    }
    let headline = format!(
        "duality {}: primal {:.8}, best dual {:.8} ({}), relative gap {:.4}",
        cfg.payoff, report.primal, report.best_dual.estimate.mean, report.best_dual.scheme, report.gap_relative
    );
    let text = format!("payoff        {}\n{}", cfg.payoff, report.to_text());
    let mut out = Outcome::new(
        DualityResult {
            payoff: cfg.payoff.to_string(),
            n_steps: d.n_steps,
            n_paths_per_scheme: d.n_paths,
            law: law_name(d.law),
            report,
        },
        text,
        csv,
        headline,
    );
    out.failure = failure;
    Ok(out)
}

#[derive(Serialize)]
struct CapacityResult {
    payoff: String,
    n_steps: usize,
    n_paths_per_scheme: usize,
    law: &'static str,
    capacity: CapacityEstimate,
    markov: Vec<MarkovCheck>,
    axioms: AxiomReport,
}

fn capacity(cfg: &RunConfig) -> Result<Outcome<CapacityResult>, CliError> {
    let c = &cfg.capacity;
    let spec = lattice(&cfg.band, c.n_steps, "capacity.n_steps")?;
    let policy = if c.battery.policy {
        Some(Arc::new(solve_upper(&spec, cfg, "payoff")?.policy))
    } else {
        None
    };
    let schemes = battery(&cfg.band, c.law, c.battery, policy, "capacity.battery")?;
    let cap = capacity_on(&spec, &cfg.payoff, &schemes, c.n_paths, cfg.seed)
        .map_err(|e| CliError::engine("capacity.battery", e))?;
    let mc = McParams {
        n_paths: c.n_paths,
        n_steps: c.n_steps,
        seed: cfg.seed,
    };
    let markov = c
        .markov_alpha
        .iter()
        .map(|&a| markov_check(&cfg.payoff, a, &cfg.band, &schemes, mc))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| CliError::engine("capacity.markov_alpha", e))?;
    let mut levels = c.event_levels.clone();
    levels.sort_by(f64::total_cmp);
    let above = |l: f64| cfg.payoff.map_outer(|e| e.clone().exceeds(l));
    let below = |l: f64| cfg.payoff.map_outer(|e| e.clone().below(l));
    let mut cases: Vec<AxiomCase> = levels
        .windows(2)
        .map(|w| AxiomCase::Monotone {
            smaller: above(w[1]),
            larger: above(w[0]),
        })
        .collect();
    for &l in &levels {
        cases.push(AxiomCase::Subadditive {
            a: above(l),
            b: below(-l),
        });
    }
    if let (Some(&lo), Some(&hi)) = (levels.first(), levels.last()) {
        cases.push(AxiomCase::Subadditive {
            a: above(lo),
            b: above(hi),
        });
    }
    let axioms = capacity_axiom_check(&cases, &cfg.band, &schemes, mc)
        .map_err(|e| CliError::engine("capacity.event_levels", e))?;

    let mut text = format!("payoff        {}\n{}", cfg.payoff, cap.to_text());
    for m in &markov {
        text.push_str(&m.to_text());
    }
    text.push_str(&axioms.to_text());
    let mut csv = String::from("scheme,l2_norm,se\n");
    for s in &cap.per_scheme {
        let _ = writeln!(csv, "{},{:?},{:?}", s.scheme, s.estimate.mean, s.estimate.se);
    }
    let all_pass = axioms.all_pass && markov.iter().all(|m| m.pass);
    let headline = format!(
        "capacity {}: {:.8} +/- {:.2e}; axiom and Markov checks {}",
        cfg.payoff,
        cap.value,
        cap.se,
        if all_pass { "pass" } else { "FAIL" }
    );
    Ok(Outcome::new(
        CapacityResult {
            payoff: cfg.payoff.to_string(),
            n_steps: c.n_steps,
            n_paths_per_scheme: c.n_paths,
            law: law_name(c.law),
            capacity: cap,
            markov,
            axioms,
        },
        text,
        csv,
        headline,
    ))
}

#[derive(Serialize)]
struct ContainmentSummary {
    n_steps: usize,
    n_paths_per_scheme: usize,
    law: &'static str,
    violations: usize,
    per_scheme: Vec<Containment>,
}

#[derive(Serialize)]
struct QvResult {
    containment: ContainmentSummary,
    approx: QvApproxReport,
}

fn qv(cfg: &RunConfig) -> Result<Outcome<QvResult>, CliError> {
    let q = &cfg.qv;
    // Containment is exact only when every squared increment equals its
    // variance, so this part always samples binomial increments.
    let spec = lattice(&cfg.band, q.n_steps, "qv.n_steps")?;
    let policy = if q.battery.policy {
        Some(Arc::new(solve_upper(&spec, cfg, "payoff")?.policy))
    } else {
        None
    };
    let schemes = battery(&cfg.band, IncrementLaw::Binomial, q.battery, policy, "qv.battery")?;
    let per_scheme = schemes
        .iter()
        .map(|s| PathEnsemble::generate(&spec, s, q.n_paths, cfg.seed).map(|e| qv_containment(&e, &cfg.band)))
        .collect::<crate::Result<Vec<_>>>()
        .map_err(|e| CliError::engine("qv.battery", e))?;
    let containment = ContainmentSummary {
        n_steps: q.n_steps,
        n_paths_per_scheme: q.n_paths,
        law: "binomial",
        violations: per_scheme.iter().map(|c| c.violations).sum(),
        per_scheme,
    };
    // The lattice policy lives on the pricing grid, not the fine grid.
    let approx_sel = BatterySel {
        policy: false,
        ..q.battery
    };
    let approx_battery = if approx_sel.endpoints || approx_sel.regimes {
        battery(&cfg.band, q.law, approx_sel, None, "qv.battery")?
    } else {
        battery(
            &cfg.band,
            q.law,
            BatterySel {
                endpoints: true,
                ..approx_sel
            },
            None,
            "qv.battery",
        )?
    };
    let params = QvParams {
        battery: approx_battery,
        fine_steps: q.fine_steps,
        n_paths: q.approx_paths,
        seed: cfg.seed,
    };
    let t = q.t.unwrap_or(cfg.band.horizon());
    let approx =
        qv_approx_error(&cfg.band, t, &q.subdivisions, &params).map_err(|e| CliError::engine("qv.subdivisions", e))?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "containment   {} violations over {} binomial paths per scheme, {} steps",
        containment.violations, q.n_paths, q.n_steps
    );
    for c in &containment.per_scheme {
        let _ = writeln!(text, "  {:<32}  {:>8}  {:.3e}", c.scheme, c.violations, c.max_excess);
    }
    let _ = writeln!(text, "approximation at t = {t}, fine grid {} steps", approx.fine_steps);
    let _ = writeln!(text, "  {:>6}  {:>12}  {:>12}  {:>12}", "n", "worst", "se", "bound");
    let mut csv = String::from("n,worst,se,bound\n");
    for p in &approx.points {
        let _ = writeln!(
            text,
            "  {:>6}  {:>12.4e}  {:>12.3e}  {:>12.4e}",
            p.subdivisions, p.worst.estimate.mean, p.worst.estimate.se, p.bound
        );
        let _ = writeln!(
            csv,
            "{},{:?},{:?},{:?}",
            p.subdivisions, p.worst.estimate.mean, p.worst.estimate.se, p.bound
        );
    }
    if let Some(s) = approx.log_log_slope {
        let _ = writeln!(text, "log-log slope {s:.4}");
    }
    let headline = format!(
        "qv: {} containment violations; approximation slope {}",
        containment.violations,
        approx.log_log_slope.map_or("n/a".to_string(), |s| format!("{s:.3}"))
    );
    Ok(Outcome::new(QvResult { containment, approx }, text, csv, headline))
}

#[derive(Serialize)]
struct ConvergeResult {
    payoff: String,
    monitoring: Monitoring,
    report: ConvergenceReport,
}

fn converge(cfg: &RunConfig) -> Result<Outcome<ConvergeResult>, CliError> {
    let c = &cfg.converge;
    let report = convergence_sweep(&cfg.band, &cfg.payoff, &c.steps, c.monitoring)
        .map_err(|e| CliError::engine("converge.steps", e))?;
    let mut text = format!("payoff        {}\n  {:>8}  {:>16}\n", cfg.payoff, "n_steps", "price");
    let mut csv = String::from("n_steps,price\n");
    for p in &report.points {
        let _ = writeln!(text, "  {:>8}  {:>16.10}", p.n_steps, p.price);
        let _ = writeln!(csv, "{},{:?}", p.n_steps, p.price);
    }
    if let Some(o) = report.order {
        let _ = writeln!(text, "order         {o:.4}");
    }
    let last = report.points.last().expect("steps is non-empty");
    let headline = format!("converge {}: {:.10} at n = {}", cfg.payoff, last.price, last.n_steps);
    Ok(Outcome::new(
        ConvergeResult {
            payoff: cfg.payoff.to_string(),
            monitoring: c.monitoring,
            report,
        },
        text,
        csv,
        headline,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::{parse_config, EXIT_IO, EXIT_NEGATIVE_GAP};

    fn cfg(extra: &str) -> RunConfig {
        let text = format!("seed = 11\n[band]\nsigma_low = 0.1\nsigma_high = 0.2\n[payoff]\ng = max(x, 0)\n{extra}");
        parse_config(&text, Path::new(".")).unwrap()
    }

    const SMALL: &str = "[price]\nn_steps = 40\nexport_surface = true\n[hedge]\nn_steps = 20\nn_paths = 200\n\
        [duality]\nn_steps = 20\nn_paths = 500\n[capacity]\nn_steps = 8\nn_paths = 500\n\
        [qv]\nn_steps = 16\nn_paths = 50\nfine_steps = 32\napprox_paths = 100\nsubdivisions = 2, 4, 8\n\
        [converge]\nsteps = 10, 20, 40\n";

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("prices".parse::<Command>().is_err());
    }

    #[test]
    fn every_command_renders_all_formats() {
        let c = cfg(SMALL);
        for cmd in Command::ALL {
            let r = execute(cmd, &c).unwrap();
            assert!(r.failure.is_none(), "{cmd}");
            let v: serde_json::Value = serde_json::from_str(&r.json).unwrap();
            assert_eq!(v["command"], cmd.name());
            assert_eq!(v["provenance"]["seed"], 11);
            assert_eq!(v["provenance"]["config"]["band"]["sigma_low"], "0.1");
            assert!(r.csv.lines().count() >= 2, "{cmd}");
            assert!(!r.text.is_empty() && !r.headline.is_empty());
        }
    }

    #[test]
    fn run_writes_files_and_honours_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(SMALL);
        let opts = RunOptions {
            seed: Some(5),
            out_dir: Some(dir.path().join("a")),
            format: Some(Format::Text),
            env_out_dir: Some(dir.path().join("env")),
        };
        let s = run(Command::Price, &c, &opts).unwrap();
        assert_eq!(s.files.len(), 2);
        assert!(dir.path().join("a/price.txt").is_file());
        assert!(dir.path().join("a/price_surface.csv").is_file());

        let env_only = RunOptions {
            env_out_dir: Some(dir.path().join("env")),
            ..RunOptions::default()
        };
        run(Command::Converge, &c, &env_only).unwrap();
        assert!(dir.path().join("env/converge.json").is_file());

        let json = std::fs::read_to_string(dir.path().join("env/converge.json")).unwrap();
        let again = execute(Command::Converge, &c).unwrap().json;
        assert_eq!(json, again);
    }

    #[test]
    fn seed_override_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            seed: Some(99),
            out_dir: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        };
        run(Command::Duality, &cfg(SMALL), &opts).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("duality.json")).unwrap()).unwrap();
        assert_eq!(v["provenance"]["seed"], 99);
    }

    #[test]
    fn unwritable_output_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let opts = RunOptions {
            out_dir: Some(blocker.join("sub")),
            ..RunOptions::default()
        };
        let e = run(Command::Converge, &cfg(SMALL), &opts).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_IO);
    }

    #[test]
    fn negative_gap_maps_to_its_own_exit_code() {
        let e = CliError::engine(
            "duality.allowance",
            crate::Error::NegativeGap {
                primal: 0.0,
                dual: 1.0,
                allowance: 0.0,
                scheme: "s".into(),
            },
        );
        assert_eq!(e.exit_code(), EXIT_NEGATIVE_GAP);
        assert!(e.to_string().starts_with("duality.allowance: numerical inconsistency"));
    }

    #[test]
    fn empty_battery_selection_is_rejected() {
        let c = cfg("[capacity]\nbattery = policy\nn_steps = 4\nn_paths = 10\n");
        assert!(execute(Command::Capacity, &c).is_ok());
        let mut c = cfg(
            "[qv]\nbattery = policy\nn_steps = 4\nn_paths = 10\nfine_steps = 8\nsubdivisions = 2\napprox_paths = 10\n",
        );
        assert!(execute(Command::Qv, &c).is_ok());
        c.duality.battery = BatterySel {
            endpoints: false,
            regimes: false,
            policy: false,
        };
        let e = execute(Command::Duality, &c).unwrap_err();
        assert_eq!(e.key(), Some("duality.battery"));
    }
}
