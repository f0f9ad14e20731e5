//! Command-line driver: config parsing, dispatch and deterministic output files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{regime_check, CouplingSpec, Interpolation};
use crate::dynamics::{evolve, virtual_population_estimate, DecayConfig};
use crate::entanglement::{
    distribution_stats, log_space, qudit_sweep, schmidt_of_field, schmidt_on_grid, success_probability_analytic,
    success_probability_numeric, thermal_schmidt_number, tradeoff_sweep, QuditConfig, SchmidtSpectrum, SweepReport,
    TradeoffConfig, DEFAULT_COUNT,
};
use crate::error::{Error, Result};
use crate::modeopt::{interpolate_profile, optimize_mode, ModeOptConfig};
use crate::scattering::{
    analytic_gaussian_outputs, analytic_qudit_output, apply_comb_filter, gaussian_input, relative_rms, scatter,
    CombFilter, GaussianInput,
};
use crate::spectral::{
    fmt_f64, trap_weight, BiphotonField, ChannelLabel, FrequencyGrid, PhysicalParams, DEFAULT_POINTS,
    DEFAULT_WINDOW_SIGMAS,
};

pub const THREADS_ENV: &str = "FRENGATE_THREADS";
pub const MANIFEST: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "frengate", version, about = "Frequency-entangling gate simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML or JSON config, chosen by extension.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to frengate-<command>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// ω_2X/2π in Hz; converts frequency and time columns to SI units.
    #[arg(long = "omega2x-hz", global = true)]
    pub omega2x_hz: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Scatter,
    Schmidt,
    Tradeoff,
    Qudit,
    Decay,
    OptimizeMode,
    Regime,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Scatter => "scatter",
            Command::Schmidt => "schmidt",
            Command::Tradeoff => "tradeoff",
            Command::Qudit => "qudit",
            Command::Decay => "decay",
            Command::OptimizeMode => "optimize-mode",
            Command::Regime => "regime",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Reads a config, rejecting unknown keys.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        _ => Err(Error::Config(format!("{}: config must end in .toml or .json", path.display()))),
    }
}

/// Parses FRENGATE_THREADS; `None` when unset.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unit {
    Plain,
    Frequency,
    Time,
    Rate,
}

#[derive(Clone, Debug)]
enum Cell {
    F(f64),
    S(String),
}

struct Table {
    columns: Vec<(String, Unit)>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[(&str, Unit)]) -> Self {
        Table { columns: columns.iter().map(|(n, u)| (n.to_string(), *u)).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Collects files for one command run and writes the manifest.
pub struct Output {
    dir: PathBuf,
    format: Format,
    hz: Option<f64>,
    files: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf, format: Format, hz: Option<f64>) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Output { dir, format, hz, files: Vec::new() })
    }

    fn convert(&self, unit: Unit, x: f64) -> f64 {
        match (self.hz, unit) {
            (Some(f), Unit::Frequency) => x * f,
            (Some(f), Unit::Time) => x / (2.0 * PI * f),
            (Some(f), Unit::Rate) => x * 2.0 * PI * f,
            _ => x,
        }
    }

    fn header(&self, name: &str, unit: Unit) -> String {
        match (self.hz, unit) {
            (Some(_), Unit::Frequency) => format!("{name}_hz"),
            (Some(_), Unit::Time) => format!("{name}_s"),
            (Some(_), Unit::Rate) => format!("{name}_per_s"),
            _ => name.to_string(),
        }
    }

    fn table(&mut self, stem: &str, t: &Table) -> Result<()> {
        let headers: Vec<String> = t.columns.iter().map(|(n, u)| self.header(n, *u)).collect();
        match self.format {
            Format::Csv => {
                let name = format!("{stem}.csv");
                let mut w = csv::Writer::from_writer(std::io::BufWriter::new(fs::File::create(self.dir.join(&name))?));
                w.write_record(&headers)?;
                for row in &t.rows {
                    let rec: Vec<String> = row
                        .iter()
                        .zip(&t.columns)
                        .map(|(c, (_, u))| match c {
                            Cell::F(x) => fmt_f64(self.convert(*u, *x)),
                            Cell::S(s) => s.clone(),
                        })
                        .collect();
                    w.write_record(&rec)?;
                }
                w.flush()?;
                self.files.push(name);
            }
            Format::Json => {
                let rows: Vec<serde_json::Map<String, serde_json::Value>> = t
                    .rows
                    .iter()
                    .map(|row| {
                        row.iter()
                            .zip(&t.columns)
                            .zip(&headers)
                            .map(|((c, (_, u)), h)| {
                                let v = match c {
                                    Cell::F(x) => serde_json::Number::from_f64(self.convert(*u, *x))
                                        .map(serde_json::Value::Number)
                                        .unwrap_or(serde_json::Value::Null),
                                    Cell::S(s) => serde_json::Value::String(s.clone()),
                                };
                                (h.clone(), v)
                            })
                            .collect()
                    })
                    .collect();
                self.json(&format!("{stem}.json"), &rows)?;
            }
        }
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn field(&mut self, stem: &str, f: &BiphotonField) -> Result<()> {
        let mut t = Table::new(&[
            ("omega", Unit::Frequency),
            ("omega_prime", Unit::Frequency),
            ("re", Unit::Plain),
            ("im", Unit::Plain),
        ]);
        for i in 0..f.grid.n_omega {
            for j in 0..f.grid.n_omega_prime {
                let c = f.at(i, j);
                t.push(vec![Cell::F(f.grid.omega(i)), Cell::F(f.grid.omega_prime(j)), Cell::F(c.re), Cell::F(c.im)]);
            }
        }
        self.table(stem, &t)
    }

    fn finish(mut self, command: Command, config: &impl Serialize) -> Result<PathBuf> {
        self.files.sort();
        let mut checksums = BTreeMap::new();
        for name in &self.files {
            let bytes = fs::read(self.dir.join(name))?;
            let digest = Sha256::digest(&bytes);
            checksums.insert(name.clone(), digest.iter().map(|b| format!("{b:02x}")).collect::<String>());
        }
        #[derive(Serialize)]
        struct Manifest<'a, C: Serialize> {
            tool: &'static str,
            version: &'static str,
            command: &'static str,
            format: Format,
            omega2x_hz: Option<f64>,
            config: &'a C,
            files: BTreeMap<String, String>,
        }
        let m = Manifest {
            tool: "frengate",
            version: env!("CARGO_PKG_VERSION"),
            command: command.name(),
            format: self.format,
            omega2x_hz: self.hz,
            config,
            files: checksums,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(self.dir)
    }
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

fn default_sigmas() -> f64 {
    DEFAULT_WINDOW_SIGMAS
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    pub alpha: f64,
    /// Width of the isotropic Gaussian coupling, used when `coupling` is absent.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub coupling: Option<CouplingSpec>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_sigmas")]
    pub window_sigmas: f64,
    /// Overrides window_sigmas·max(α, β).
    #[serde(default)]
    pub half_width: Option<f64>,
    #[serde(default)]
    pub filter: Option<CombFilter>,
    #[serde(default = "default_true")]
    pub write_fields: bool,
}

impl ScatterConfig {
    fn resolve(mut self) -> Result<Self> {
        if self.coupling.is_none() {
            let beta = self.beta.ok_or_else(|| Error::Config("scatter needs beta or coupling".into()))?;
            self.coupling =
                Some(CouplingSpec::isotropic(beta, self.params.gamma, self.params.omega_e - self.params.omega_b));
        }
        if self.half_width.is_none() {
            let width = match &self.coupling {
                Some(CouplingSpec::Gaussian { beta, .. }) => self.alpha.max(*beta),
                _ => self.alpha,
            };
            self.half_width = Some(self.window_sigmas * width);
        }
        Ok(self)
    }
}

#[derive(Serialize)]
struct ScatterSummary {
    probabilities: BTreeMap<String, f64>,
    p_success: f64,
    p_success_analytic: Option<f64>,
    closed_form_rms: Option<f64>,
    markov_variation: Option<f64>,
    warnings: Vec<String>,
}

fn cmd_scatter(cfg: ScatterConfig, out: &mut Output) -> Result<ScatterConfig> {
    let cfg = cfg.resolve()?;
    let p = &cfg.params;
    let coupling = cfg.coupling.clone().unwrap();
    let spec = GaussianInput { alpha: cfg.alpha, omega_e: p.omega_e, omega_b: p.omega_b };
    let grid = FrequencyGrid::centered(p.omega_e, p.omega_b, cfg.half_width.unwrap(), cfg.points)?;
    let mut input = gaussian_input(&spec, &grid)?;
    if let Some(f) = &cfg.filter {
        input = apply_comb_filter(&input, f, (p.omega_e, p.omega_b))?;
    }
    let res = scatter(&input, &coupling, p)?;
    let probs = success_probability_numeric(&res, &input)?;
    let mut warnings = res.warnings.clone();
    let centered = |c: f64| (c - (p.omega_e - p.omega_b)).abs() <= 1e-12;
    let (analytic, rms) = match (&coupling, &cfg.filter) {
        (CouplingSpec::Gaussian { beta, gamma, center }, None)
            if centered(*center) && (*gamma - p.gamma / 4.0).abs() <= 1e-12 * p.gamma =>
        {
            let a = analytic_gaussian_outputs(&spec, *beta, p, &grid)?;
            let rms = relative_rms(res.field(ChannelLabel::MM), a.field(ChannelLabel::MM));
            (Some(success_probability_analytic(beta / cfg.alpha)), Some(rms))
        }
        (CouplingSpec::Gaussian { beta, gamma, center }, Some(f))
            if centered(*center) && (*gamma - p.gamma / 4.0).abs() <= 1e-12 * p.gamma =>
        {
            let q = analytic_qudit_output(&spec, f, *beta, p, &grid)?;
            warnings.extend(q.warnings.iter().cloned());
            (None, Some(relative_rms(res.field(ChannelLabel::MM), &q.field)))
        }
        _ => (None, None),
    };
    let mut t = Table::new(&[("channel", Unit::Plain), ("probability", Unit::Plain)]);
    for (ch, pr) in &probs.per_channel {
        t.push(vec![Cell::S(ch.clone()), Cell::F(*pr)]);
    }
    out.table("probabilities", &t)?;
    if cfg.write_fields {
        out.field("input", &input)?;
        for f in &res.fields {
            out.field(&format!("field_{}", f.channel.tag()), f)?;
        }
    }
    out.json(
        "summary.json",
        &ScatterSummary {
            probabilities: probs.per_channel.iter().cloned().collect(),
            p_success: probs.p_success,
            p_success_analytic: analytic,
            closed_form_rms: rms,
            markov_variation: res.markov_variation,
            warnings,
        },
    )?;
    Ok(cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchmidtSource {
    Input,
    Output,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchmidtMethod {
    HermiteGauss,
    Grid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchmidtConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    pub source: SchmidtSource,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_sigmas")]
    pub window_sigmas: f64,
    #[serde(default)]
    pub half_width: Option<f64>,
    /// Field CSV and its JSON sidecar, for `source = "file"`.
    #[serde(default)]
    pub field_csv: Option<PathBuf>,
    #[serde(default)]
    pub field_sidecar: Option<PathBuf>,
    #[serde(default = "default_method")]
    pub method: SchmidtMethod,
    #[serde(default = "default_counts")]
    pub counts: (usize, usize),
    #[serde(default = "default_modes")]
    pub modes: Vec<usize>,
}

fn default_method() -> SchmidtMethod {
    SchmidtMethod::HermiteGauss
}

fn default_counts() -> (usize, usize) {
    (DEFAULT_COUNT, DEFAULT_COUNT)
}

fn default_modes() -> Vec<usize> {
    vec![1, 3, 5]
}

#[derive(Serialize)]
struct SchmidtSummary<'a> {
    spectrum: &'a SchmidtSpectrum,
    ellipticity: f64,
    sigma_sigma: f64,
    sigma_delta: f64,
    /// (r + 1/r)/2 for the double-Gaussian limit of the output.
    limit_schmidt_number: Option<f64>,
    warnings: Vec<String>,
}

fn cmd_schmidt(mut cfg: SchmidtConfig, out: &mut Output) -> Result<SchmidtConfig> {
    let p = cfg.params.clone();
    let mut limit = None;
    let field = match cfg.source {
        SchmidtSource::File => {
            let (c, s) = match (&cfg.field_csv, &cfg.field_sidecar) {
                (Some(c), Some(s)) => (c, s),
                _ => return Err(Error::Config("source = \"file\" needs field_csv and field_sidecar".into())),
            };
            BiphotonField::read(c, s)?.0
        }
        SchmidtSource::Input | SchmidtSource::Output => {
            let alpha = cfg.alpha.ok_or_else(|| Error::Config("schmidt needs alpha".into()))?;
            let spec = GaussianInput { alpha, omega_e: p.omega_e, omega_b: p.omega_b };
            let beta = cfg.beta;
            if cfg.source == SchmidtSource::Output && beta.is_none() {
                return Err(Error::Config("source = \"output\" needs beta".into()));
            }
            let width = alpha.max(beta.unwrap_or(0.0));
            let hw = *cfg.half_width.get_or_insert(cfg.window_sigmas * width);
            let grid = FrequencyGrid::centered(p.omega_e, p.omega_b, hw, cfg.points)?;
            let input = gaussian_input(&spec, &grid)?;
            if cfg.source == SchmidtSource::Input {
                input
            } else {
                let b = beta.unwrap();
                limit = Some(thermal_schmidt_number(b / alpha));
                let coupling = CouplingSpec::isotropic(b, p.gamma, p.omega_e - p.omega_b);
                scatter(&input, &coupling, &p)?.field(ChannelLabel::MM).clone()
            }
        }
    };
    let stats = distribution_stats(&field)?;
    let mut warnings = Vec::new();
    let mut t = Table::new(&[("k", Unit::Plain), ("lambda", Unit::Plain)]);
    let grid = field.grid.clone();
    let modes: Vec<(usize, Vec<_>, Vec<_>)>;
    let spectrum = match cfg.method {
        SchmidtMethod::HermiteGauss => {
            let fs = schmidt_of_field(&field, cfg.counts)?;
            warnings.extend(fs.warnings.iter().cloned());
            modes = cfg
                .modes
                .iter()
                .filter(|&&k| k >= 1 && k <= fs.spectrum.lambdas.len())
                .map(|&k| fs.mode_samples(&grid, k - 1).map(|(a, b)| (k, a, b)))
                .collect::<Result<_>>()?;
            fs.spectrum
        }
        SchmidtMethod::Grid => {
            let sp = schmidt_on_grid(&field.clone().normalize()?)?;
            let (n, np) = (grid.n_omega, grid.n_omega_prime);
            let (h, hp) = (grid.d_omega(), grid.d_omega_prime());
            modes = cfg
                .modes
                .iter()
                .filter(|&&k| k >= 1 && k <= sp.lambdas.len())
                .map(|&k| {
                    let a = (0..n).map(|i| sp.modes_omega[k - 1][i] / (trap_weight(i, n) * h).sqrt()).collect();
                    let b = (0..np).map(|j| sp.modes_omega_prime[k - 1][j] / (trap_weight(j, np) * hp).sqrt()).collect();
                    (k, a, b)
                })
                .collect();
            sp
        }
    };
    for (k, l) in spectrum.lambdas.iter().enumerate() {
        t.push(vec![Cell::F((k + 1) as f64), Cell::F(*l)]);
    }
    out.table("lambdas", &t)?;
    for (k, a, b) in &modes {
        for (suffix, axis, v) in [("omega", grid.omegas(), a), ("omega_prime", grid.omega_primes(), b)] {
            let mut mt = Table::new(&[(suffix, Unit::Frequency), ("re", Unit::Plain), ("im", Unit::Plain)]);
            for (w, z) in axis.iter().zip(v.iter()) {
                mt.push(vec![Cell::F(*w), Cell::F(z.re), Cell::F(z.im)]);
            }
            out.table(&format!("mode_{k}_{suffix}"), &mt)?;
        }
    }
    out.json(
        "schmidt.json",
        &SchmidtSummary {
            spectrum: &spectrum,
            ellipticity: stats.ellipticity,
            sigma_sigma: stats.sigma_sigma,
            sigma_delta: stats.sigma_delta,
            limit_schmidt_number: limit,
            warnings,
        },
    )?;
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl RatioGrid {
    fn values(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0) || !(self.max >= self.min) || self.count == 0 {
            return Err(Error::Config("ratio grid needs 0 < min <= max and count >= 1".into()));
        }
        Ok(log_space(self.min, self.max, self.count))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffCmdConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    pub sweep: TradeoffConfig,
    #[serde(default = "tradeoff_ratios")]
    pub ratios: RatioGrid,
}

fn tradeoff_ratios() -> RatioGrid {
    RatioGrid { min: 0.1, max: 10.0, count: 21 }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuditCmdConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    pub sweep: QuditConfig,
    #[serde(default = "qudit_ratios")]
    pub ratios: RatioGrid,
}

fn qudit_ratios() -> RatioGrid {
    RatioGrid { min: 0.1, max: 45.0, count: 25 }
}

fn write_sweep(out: &mut Output, report: &SweepReport) -> Result<()> {
    let mut t = Table::new(&[
        ("ratio", Unit::Plain),
        ("p_success", Unit::Plain),
        ("p_success_reference", Unit::Plain),
        ("resolved", Unit::Plain),
        ("schmidt_number", Unit::Plain),
        ("entropy_nats", Unit::Plain),
        ("entropy_normalized", Unit::Plain),
        ("reconstruction_error", Unit::Plain),
        ("regime", Unit::Plain),
        ("error", Unit::Plain),
    ]);
    for r in &report.rows {
        t.push(vec![
            Cell::F(r.ratio),
            Cell::F(r.p_success),
            Cell::F(r.p_success_reference),
            Cell::S(r.resolved.to_string()),
            Cell::F(r.schmidt_number),
            Cell::F(r.entropy_nats),
            Cell::F(r.entropy_normalized),
            Cell::F(r.reconstruction_error),
            Cell::S(r.regime.clone()),
            Cell::S(r.error.clone().unwrap_or_default()),
        ]);
    }
    out.table("sweep", &t)?;
    #[derive(Serialize)]
    struct Summary {
        points: usize,
        failed: usize,
        argmin_schmidt_ratio: Option<f64>,
        schmidt_unimodal: bool,
        argmax_success_ratio: Option<f64>,
        max_p_success: Option<f64>,
        min_p_success: Option<f64>,
    }
    let ok: Vec<f64> = report.rows.iter().filter(|r| r.error.is_none()).map(|r| r.p_success).collect();
    out.json(
        "summary.json",
        &Summary {
            points: report.rows.len(),
            failed: report.rows.len() - ok.len(),
            argmin_schmidt_ratio: report.argmin_schmidt.map(|k| report.rows[k].ratio),
            schmidt_unimodal: report.schmidt_unimodal,
            argmax_success_ratio: report.argmax_success.map(|k| report.rows[k].ratio),
            max_p_success: ok.iter().cloned().reduce(f64::max),
            min_p_success: ok.iter().cloned().reduce(f64::min),
        },
    )
}

fn cmd_tradeoff(cfg: TradeoffCmdConfig, out: &mut Output) -> Result<TradeoffCmdConfig> {
    cfg.params.validate()?;
    let report = tradeoff_sweep(&cfg.ratios.values()?, &cfg.sweep, &cfg.params);
    write_sweep(out, &report)?;
    Ok(cfg)
}

fn cmd_qudit(cfg: QuditCmdConfig, out: &mut Output) -> Result<QuditCmdConfig> {
    cfg.params.validate()?;
    cfg.sweep.filter.validate()?;
    let report = qudit_sweep(&cfg.ratios.values()?, &cfg.sweep, &cfg.params);
    write_sweep(out, &report)?;
    Ok(cfg)
}

/// Preset plus optional overrides.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCmdConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: Option<PhysicalParams>,
    #[serde(default)]
    pub n_freq: Option<usize>,
    #[serde(default)]
    pub g0: Option<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub mode_center: Option<f64>,
    #[serde(default)]
    pub half_width_sigmas: Option<f64>,
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub drift_limit: Option<f64>,
}

impl DecayCmdConfig {
    pub fn resolve(&self) -> Result<DecayConfig> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("decay without preset needs {name}")));
        let mut c = match &self.preset {
            Some(name) => DecayConfig::preset(name)?,
            None => DecayConfig {
                params: PhysicalParams::default(),
                n_freq: 400,
                g0: need(self.g0, "g0")?,
                bandwidth: need(self.bandwidth, "bandwidth")?,
                mode_center: None,
                half_width_sigmas: 4.0,
                t_max: need(self.t_max, "t_max")?,
                step: need(self.step, "step")?,
                record_every: 20,
                drift_limit: 1e-5,
            },
        };
        if let Some(p) = &self.params {
            c.params = p.clone();
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(n_freq, g0, bandwidth, half_width_sigmas, t_max, step, record_every, drift_limit);
        if self.mode_center.is_some() {
            c.mode_center = self.mode_center;
        }
        c.validate()?;
        Ok(c)
    }
}

fn cmd_decay(cfg: DecayCmdConfig, out: &mut Output) -> Result<DecayConfig> {
    let c = cfg.resolve()?;
    let tr = evolve(&c)?;
    let mut t = Table::new(&[
        ("t", Unit::Time),
        ("p0", Unit::Plain),
        ("px", Unit::Plain),
        ("p2x", Unit::Plain),
        ("norm", Unit::Plain),
    ]);
    for k in 0..tr.times.len() {
        t.push(vec![Cell::F(tr.times[k]), Cell::F(tr.p0[k]), Cell::F(tr.px[k]), Cell::F(tr.p2x[k]), Cell::F(tr.norm[k])]);
    }
    out.table("trajectory", &t)?;
    #[derive(Serialize)]
    struct Summary {
        gamma_fit: Option<f64>,
        gamma_fit_si: Option<f64>,
        fit_residual: Option<f64>,
        fit_points: Option<usize>,
        fit_error: Option<String>,
        max_px: f64,
        late_px: f64,
        mean_px: f64,
        virtual_population_estimate: f64,
        max_norm_drift: f64,
        energy_drift: f64,
    }
    out.json(
        "decay.json",
        &Summary {
            gamma_fit: tr.fit.as_ref().map(|f| f.gamma),
            gamma_fit_si: tr.fit.as_ref().and(out.hz).map(|_| out.convert(Unit::Rate, tr.fit.as_ref().unwrap().gamma)),
            fit_residual: tr.fit.as_ref().map(|f| f.residual),
            fit_points: tr.fit.as_ref().map(|f| f.points),
            fit_error: tr.fit_error.clone(),
            max_px: tr.max_px(),
            late_px: tr.late_px(),
            mean_px: tr.mean_px(),
            virtual_population_estimate: virtual_population_estimate(&c),
            max_norm_drift: tr.max_norm_drift(),
            energy_drift: tr.energy_drift,
        },
    )?;
    Ok(c)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeModeCmdConfig {
    pub mode: ModeOptConfig,
    #[serde(default = "default_interp")]
    pub interpolation: Interpolation,
}

fn default_interp() -> Interpolation {
    Interpolation::Cubic
}

fn cmd_optimize_mode(cfg: OptimizeModeCmdConfig, out: &mut Output) -> Result<OptimizeModeCmdConfig> {
    let (target, sol) = optimize_mode(&cfg.mode)?;
    let merged = interpolate_profile(&sol, cfg.interpolation)?;
    let linear = interpolate_profile(&sol, Interpolation::Linear)?;
    // Cubic vs linear at interior midpoints of each window.
    let mut midpoint_gap: f64 = 0.0;
    let scale = sol.u.iter().chain(&sol.u_prime).cloned().fold(0.0, f64::max);
    for w in [&sol.omega, &sol.omega_prime] {
        for pair in w.windows(2) {
            let m = 0.5 * (pair[0] + pair[1]);
            midpoint_gap = midpoint_gap.max((merged.profile.eval(m)? - linear.profile.eval(m)?).abs() / scale);
        }
    }
    for (stem, w, u) in [("mode_omega", &sol.omega, &sol.u), ("mode_omega_prime", &sol.omega_prime, &sol.u_prime)] {
        let mut t = Table::new(&[("omega", Unit::Frequency), ("u", Unit::Plain)]);
        for (a, b) in w.iter().zip(u.iter()) {
            t.push(vec![Cell::F(*a), Cell::F(*b)]);
        }
        out.table(stem, &t)?;
    }
    #[derive(Serialize)]
    struct Metrics<'a> {
        residual: f64,
        init_residual: f64,
        rank1_bound: f64,
        iterations: usize,
        singular_values_head: &'a [f64],
        sigma2_over_sigma1: f64,
        window_correlation: f64,
        anticorrelated: bool,
        coupling_rms: f64,
        gauge_norm: f64,
        overlap_disagreement: Option<f64>,
        cubic_linear_midpoint_gap: f64,
        residual_history: &'a [f64],
    }
    let s = &sol.singular_values_head;
    out.json(
        "metrics.json",
        &Metrics {
            residual: sol.residual,
            init_residual: sol.init_residual,
            rank1_bound: sol.rank1_bound,
            iterations: sol.iterations,
            singular_values_head: s,
            sigma2_over_sigma1: if s.len() > 1 { s[1] / s[0] } else { 0.0 },
            window_correlation: sol.window_correlation,
            anticorrelated: sol.anticorrelated(),
            coupling_rms: sol.coupling_rms(&target),
            gauge_norm: sol.gauge_norm,
            overlap_disagreement: merged.overlap_disagreement,
            cubic_linear_midpoint_gap: midpoint_gap,
            residual_history: &sol.history,
        },
    )?;
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeConfig {
    #[serde(default)]
    pub params: PhysicalParams,
    pub interaction_time: f64,
    pub coupling_norms: Vec<f64>,
    pub bandwidths: (f64, f64),
    /// One-photon detuning; defaults to |ω_e − ω_X|.
    #[serde(default)]
    pub delta_e: Option<f64>,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_factor() -> f64 {
    10.0
}

fn cmd_regime(mut cfg: RegimeConfig, out: &mut Output) -> Result<RegimeConfig> {
    cfg.params.validate()?;
    if !(cfg.interaction_time > 0.0) || !(cfg.factor > 0.0) {
        return Err(Error::Config("regime needs interaction_time > 0 and factor > 0".into()));
    }
    let de = *cfg.delta_e.get_or_insert((cfg.params.omega_e - cfg.params.omega_x).abs());
    let r = regime_check(&cfg.params, cfg.interaction_time, &cfg.coupling_norms, cfg.bandwidths, de, cfg.factor);
    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        report: &'a crate::coupling::RegimeReport,
        timescales_hold: bool,
    }
    out.json("regime.json", &Report { report: &r, timescales_hold: r.timescales_hold() })?;
    Ok(cfg)
}

/// Runs one command and returns its output directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    if let Some(f) = cli.omega2x_hz {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Config("--omega2x-hz must be positive".into()));
        }
    }
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(format!("frengate-{}", cli.command.name())));
    let mut out = Output::new(dir, cli.format, cli.omega2x_hz)?;
    let cmd = cli.command;
    match cmd {
        Command::Scatter => {
            let c = cmd_scatter(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
        Command::Schmidt => {
            let c = cmd_schmidt(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
        Command::Tradeoff => {
            let c = cmd_tradeoff(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
        Command::Qudit => {
            let c = cmd_qudit(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
        Command::Decay => {
            let c = cmd_decay(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
        Command::OptimizeMode => {
            let c = cmd_optimize_mode(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
        Command::Regime => {
            let c = cmd_regime(load_config(path)?, &mut out)?;
            out.finish(cmd, &c)
        }
    }
}

/// Full entry point: thread cap, dispatch, exit code.
pub fn main_with(cli: Cli) -> i32 {
    let threads = match thread_cap(std::env::var(THREADS_ENV).ok().as_deref()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Some(n) = threads {
        // Fails only if a pool already exists, which keeps the earlier cap.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.join(MANIFEST).display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
