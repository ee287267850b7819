use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{
    parse_index_list, parse_model_config, parse_real_list, parse_words, validate_sweep,
    ConfigError, Format, ModelConfig,
};
use super::emit::{self, CsvRow};
use super::store::{unix_ms, CommandRecord, RunStore, StoreError};
use crate::ergodic_opt::{self, ErgodicError, K0Report};
use crate::limits::{self, LimitsError, TightnessReport, UscReport};
use crate::potential::{check_summability_t, normalize, SummabilityCertificate};
use crate::rpf_finite::{self, gibbs_ratio, partition_entropy, RpfError};
use crate::shift_model::{admissible_words, build_truncation, ShiftError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const OUT_ENV: &str = "GIBBSLINE_OUT";
pub const DEFAULT_OUT: &str = "gibbsline-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot read config `{path}`: {source}")]
    ReadConfig {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Limits(#[from] LimitsError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    /// Files were written but some points did not converge.
    #[error("{0}")]
    Incomplete(String),
}

impl From<ShiftError> for CliError {
    fn from(e: ShiftError) -> Self {
        CliError::Limits(e.into())
    }
}

impl From<RpfError> for CliError {
    fn from(e: RpfError) -> Self {
        CliError::Limits(e.into())
    }
}

impl From<ErgodicError> for CliError {
    fn from(e: ErgodicError) -> Self {
        CliError::Limits(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ReadConfig { .. } => EXIT_VALIDATION,
            CliError::Limits(e) if e.is_convergence_failure() => EXIT_NO_CONVERGENCE,
            CliError::Limits(_) => EXIT_VALIDATION,
            CliError::Incomplete(_) => EXIT_NO_CONVERGENCE,
            CliError::Store(_) | CliError::Json(_) => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// P_k(t) over the (k, t) grid.
    Pressure,
    /// Cylinder masses of the equilibrium states as k grows.
    Equilibrium,
    /// Trajectories in t and the zero-temperature limit weights.
    Zerotemp,
    /// Entropy of the equilibrium states as t grows.
    EntropyLimit,
    /// All consistency checks on the configured grid.
    Diagnose,
    /// Summability certificate of the potential.
    CertifySummability,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Pressure => "pressure",
            Command::Equilibrium => "equilibrium",
            Command::Zerotemp => "zerotemp",
            Command::EntropyLimit => "entropy-limit",
            Command::Diagnose => "diagnose",
            Command::CertifySummability => "certify-summability",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gibbsline", version, about = "Pressure, equilibrium states and zero-temperature limits on countable Markov shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Model configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides GIBBSLINE_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Truncation indices, e.g. `8`, `1,2,3` or `1..6`.
    #[arg(long, global = true)]
    k: Option<String>,
    /// Inverse temperatures, e.g. `2` or `2,8,32`.
    #[arg(long, global = true)]
    t: Option<String>,
    /// Words, e.g. `0,0.1,2.2.0`.
    #[arg(long, global = true)]
    words: Option<String>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Convergence tolerance for limits and trajectories
    #[arg(long, global = true)]
    tol: Option<f64>,
}

/// Result of one invocation.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub run_dir: Option<PathBuf>,
    pub files: Vec<String>,
    pub message: Option<String>,
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let out = execute(argv);
    if let Some(dir) = &out.run_dir {
        println!("run: {}", dir.display());
        for f in &out.files {
            println!("  {f}");
        }
    }
    if let Some(m) = &out.message {
        eprintln!("error: {m}");
    }
    out.exit_code
}

/// Like [`run_command`] but returns the outcome instead of printing it.
pub fn execute<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return Outcome {
                exit_code: code,
                run_dir: None,
                files: Vec::new(),
                message: None,
            };
        }
    };
    let failed = |e: CliError| Outcome {
        exit_code: e.exit_code(),
        run_dir: None,
        files: Vec::new(),
        message: Some(e.to_string()),
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => return failed(e),
    };
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    let root = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let store = RunStore::new(root);
    let run_id = match store.create_run(&config.hash()) {
        Ok(id) => id,
        Err(e) => return failed(e.into()),
    };
    let run_dir = store.run_dir(&run_id);
    let started = unix_ms();
    let clock = Instant::now();
    let mut files = Vec::new();
    let result = store
        .put(&run_id, "config.cfg", super::config::emit_config(&config).as_bytes())
        .map_err(CliError::from)
        .and_then(|_| dispatch(cli.command, &config, &store, &run_id, &mut files));
    let (exit_code, message) = match result {
        Ok(()) => (EXIT_OK, None),
        Err(e) => (e.exit_code(), Some(e.to_string())),
    };
    let record = CommandRecord {
        command: cli.command.name().to_string(),
        status: message.clone().unwrap_or_else(|| "ok".into()),
        exit_code,
        started_unix_ms: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    if let Err(e) = store.record_command(&run_id, record) {
        return failed(e.into());
    }
    Outcome {
        exit_code,
        run_dir: Some(run_dir),
        files,
        message,
    }
}

fn load_config(cli: &Cli) -> Result<ModelConfig, CliError> {
    let mut c = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig {
                path: path.clone(),
                source,
            })?;
            parse_model_config(&text)?
        }
        None => ModelConfig::default(),
    };
    let bad = |what: &str| ConfigError::Validation(format!("cannot parse --{what}"));
    if let Some(k) = &cli.k {
        c.sweep.ks = parse_index_list(k).ok_or_else(|| bad("k"))?;
        if matches!(cli.command, Command::Zerotemp | Command::EntropyLimit) {
            c.sweep.k = c.sweep.ks.first().copied();
        }
    }
    if let Some(t) = &cli.t {
        c.sweep.ts = parse_real_list(t).ok_or_else(|| bad("t"))?;
    } else if matches!(cli.command, Command::Zerotemp | Command::EntropyLimit) && c.sweep.ts.len() < 2 {
        c.sweep.ts = limits::default_ts();
    }
    if let Some(w) = &cli.words {
        c.sweep.words = parse_words(w).ok_or_else(|| bad("words"))?;
    }
    if let Some(tol) = cli.tol {
        c.sweep.tol = tol;
    }
    if let Some(f) = cli.format {
        c.output.formats = vec![match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }];
    }
    validate_sweep(&c.sweep)?;
    Ok(c)
}

fn put(store: &RunStore, run_id: &str, files: &mut Vec<String>, name: String, text: String) -> Result<(), CliError> {
    store.put(run_id, &name, text.as_bytes())?;
    files.push(name);
    Ok(())
}

fn put_all<T: Serialize>(
    c: &ModelConfig,
    store: &RunStore,
    run_id: &str,
    files: &mut Vec<String>,
    stem: &str,
    value: &T,
    rows: impl Fn(&T) -> Vec<CsvRow>,
) -> Result<(), CliError> {
    for &fmt in &c.output.formats {
        let text = emit::render(value, &rows, fmt)?;
        put(store, run_id, files, format!("{stem}.{}", fmt.name()), text)?;
    }
    Ok(())
}

/// Truncation for zero-temperature work: configured or detected `k0`.
fn zero_temp_k(c: &ModelConfig) -> Result<usize, CliError> {
    if let Some(k) = c.sweep.k {
        return Ok(k);
    }
    let r = ergodic_opt::detect_k0(&c.model, &c.potential, &c.sweep.ks, c.sweep.window)?;
    Ok(r.k0)
}

fn dispatch(cmd: Command, c: &ModelConfig, store: &RunStore, run_id: &str, files: &mut Vec<String>) -> Result<(), CliError> {
    let s = &c.sweep;
    match cmd {
        Command::Pressure => {
            let r = limits::pressure_sweep(&c.model, &c.potential, &s.ks, &s.ts, &s.words)?;
            put_all(c, store, run_id, files, "pressure", &r, emit::sweep_rows)?;
            let failed = r.grid.iter().filter(|p| p.error.is_some()).count();
            if failed > 0 {
                return Err(CliError::Incomplete(format!("{failed} grid points failed")));
            }
        }
        Command::Equilibrium => {
            let mut tables = Vec::new();
            let mut worst: Option<f64> = None;
            for &t in &s.ts {
                match limits::equilibrium_limit_in_k(&c.model, &c.potential, t, &s.ks, &s.words, s.tol) {
                    Ok(table) => tables.push(table),
                    Err(LimitsError::NotConverged { gap, table }) => {
                        worst = Some(worst.map_or(gap, |w: f64| w.max(gap)));
                        tables.push(*table);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            put_all(c, store, run_id, files, "equilibrium", &tables, |ts| {
                ts.iter().flat_map(emit::limit_rows).collect()
            })?;
            if let Some(gap) = worst {
                return Err(CliError::Incomplete(format!("cylinder masses not converged in k: final gap {}", emit::fmt_num(gap))));
            }
        }
        Command::Zerotemp => {
            let k = zero_temp_k(c)?;
            let z = limits::zero_temp_sweep(&c.model, &c.potential, k, &s.ts, &s.words)?;
            put_all(c, store, run_id, files, "trajectories", &z, emit::zero_temp_rows)?;
            let Some(est) = &z.estimate else {
                return Err(CliError::Incomplete("fewer than two temperatures solved".into()));
            };
            put(store, run_id, files, "mu_infty.json".into(), emit::to_json(est)?)?;
            if c.output.formats.contains(&Format::Csv) {
                put(store, run_id, files, "mu_infty.csv".into(), emit::write_csv(&emit::mu_infty_rows(est)))?;
            }
            if z.points.iter().any(|p| p.error.is_some()) {
                return Err(CliError::Incomplete("some temperatures failed".into()));
            }
        }
        Command::EntropyLimit => {
            let k = zero_temp_k(c)?;
            let e = limits::entropy_limit(&c.model, &c.potential, k, &s.ts)?;
            if let Some(w) = &e.warning {
                eprintln!("warning: {w}");
            }
            put_all(c, store, run_id, files, "entropy_limit", &e, emit::entropy_rows)?;
        }
        Command::Diagnose => {
            let d = diagnose(c)?;
            put(store, run_id, files, "diagnose.json".into(), emit::to_json(&d)?)?;
            if c.output.formats.contains(&Format::Csv) {
                put(store, run_id, files, "diagnose.csv".into(), emit::write_csv(&d.rows()))?;
            }
        }
        Command::CertifySummability => {
            let cert = limits::certify(&c.potential)?;
            let g = normalize(&c.potential);
            let mut weighted = Vec::new();
            for &t in s.ts.iter().filter(|&&t| t > 1.0) {
                let w = check_summability_t(&g, t, limits::CERTIFICATE_TOL).map_err(LimitsError::from)?;
                if !w.converges {
                    return Err(LimitsError::NotSummable(format!("weighted series diverges at t = {t}")).into());
                }
                weighted.push(WeightedCertificate { t, certificate: w });
            }
            let report = CertificateReport {
                certificate: cert,
                weighted,
            };
            put_all(c, store, run_id, files, "certificate", &report, CertificateReport::rows)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCertificate {
    pub t: f64,
    pub certificate: SummabilityCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub certificate: SummabilityCertificate,
    pub weighted: Vec<WeightedCertificate>,
}

impl CertificateReport {
    fn rows(&self) -> Vec<CsvRow> {
        let row = |t: Option<f64>, q: &str, v: f64| CsvRow {
            k: None,
            t,
            quantity: q.into(),
            value: Some(v),
            gap: None,
            flag: "certified".into(),
        };
        let c = &self.certificate;
        let mut rows = vec![
            row(None, "partial_sum", c.partial_sum),
            row(None, "tail_bound", c.tail_bound),
            row(None, "total_upper_bound", c.total_upper_bound),
            row(None, "explicit_terms", c.explicit_terms as f64),
        ];
        for w in &self.weighted {
            rows.push(row(Some(w.t), "weighted_total_upper_bound", w.certificate.total_upper_bound));
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsCheck {
    pub k: usize,
    pub t: f64,
    pub words: usize,
    pub failures: usize,
    /// Largest `|log ratio|`.
    pub max_log_ratio: f64,
    pub log_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub grid_points: usize,
    pub failed_points: usize,
    pub monotone_violations: usize,
    pub convexity_violations: usize,
    pub max_vp_residual: f64,
    pub max_partition_defect: Option<f64>,
    pub gibbs: Vec<GibbsCheck>,
    pub tightness: Vec<TightnessReport>,
    pub k0: Option<K0Report>,
    pub k0_error: Option<String>,
    pub integral_convergence_residual: Option<f64>,
    pub integral_convergence_error: Option<String>,
    pub semicontinuity: Option<UscReport>,
    pub certified: bool,
}

impl DiagnoseReport {
    fn rows(&self) -> Vec<CsvRow> {
        let row = |q: &str, v: Option<f64>, pass: bool| CsvRow {
            k: None,
            t: None,
            quantity: q.into(),
            value: v,
            gap: None,
            flag: if pass { "pass" } else { "fail" }.into(),
        };
        let mut rows = vec![
            row("failed_points", Some(self.failed_points as f64), self.failed_points == 0),
            row("monotone_violations", Some(self.monotone_violations as f64), self.monotone_violations == 0),
            row("convexity_violations", Some(self.convexity_violations as f64), self.convexity_violations == 0),
            row("max_vp_residual", Some(self.max_vp_residual), self.max_vp_residual <= 1e-9),
        ];
        if let Some(d) = self.max_partition_defect {
            rows.push(row("max_partition_defect", Some(d), d <= 1e-9));
        }
        for g in &self.gibbs {
            let mut r = row("gibbs_failures", Some(g.failures as f64), g.failures == 0);
            r.k = Some(g.k);
            r.t = Some(g.t);
            rows.push(r);
        }
        for t in &self.tightness {
            let n = t.violation_count();
            let mut r = row("tightness_violations", Some(n as f64), n == 0);
            r.t = Some(t.t);
            rows.push(r);
        }
        match (&self.k0, &self.k0_error) {
            (Some(k), _) => {
                let mut r = row("k0", Some(k.k0 as f64), true);
                r.flag = "heuristic".into();
                rows.push(r);
            }
            (None, e) => {
                let mut r = row("k0", None, false);
                r.flag = format!("fail: {}", e.clone().unwrap_or_default());
                rows.push(r);
            }
        }
        if let Some(res) = self.integral_convergence_residual {
            rows.push(row("integral_convergence_identity_residual", Some(res), res <= 1e-9));
        } else if let Some(e) = &self.integral_convergence_error {
            let mut r = row("integral_convergence_identity_residual", None, false);
            r.flag = format!("skipped: {e}");
            rows.push(r);
        }
        if let Some(u) = &self.semicontinuity {
            let mut r = row("entropy_excess", Some(u.max_excess), u.band_ok);
            r.t = Some(u.t);
            rows.push(r);
        }
        rows
    }
}

const GIBBS_MAX_SYMBOLS: usize = 12;
const GIBBS_MAX_LEN: usize = 4;

fn diagnose(c: &ModelConfig) -> Result<DiagnoseReport, CliError> {
    let s = &c.sweep;
    let (model, f) = (&c.model, &c.potential);
    let sweep = limits::pressure_sweep(model, f, &s.ks, &s.ts, &s.words)?;
    let count = |kind: &str| sweep.violations.iter().filter(|v| v.kind == kind).count();
    let max_vp_residual = sweep
        .grid
        .iter()
        .filter_map(|p| p.values.as_ref())
        .map(|v| v.vp_residual)
        .fold(0.0, f64::max);

    let mut gibbs = Vec::new();
    let mut partition_defect: Option<f64> = None;
    for &k in &s.ks {
        let trunc = build_truncation(model, k)?;
        for &t in &s.ts {
            let eq = match rpf_finite::solve(&trunc, f, t) {
                Ok(eq) => eq,
                Err(_) => continue,
            };
            let h = rpf_finite::entropy(&eq.measure);
            let hs: Vec<Option<f64>> = (1..=4)
                .map(|n| partition_entropy(&eq.measure, n, s.budget).ok())
                .collect();
            for n in 0..3 {
                if let (Some(a), Some(b)) = (hs[n], hs[n + 1]) {
                    let d = (b - a - h).abs();
                    partition_defect = Some(partition_defect.map_or(d, |x| x.max(d)));
                }
            }
            if trunc.len() > GIBBS_MAX_SYMBOLS {
                continue;
            }
            let mut check = GibbsCheck {
                k,
                t,
                words: 0,
                failures: 0,
                max_log_ratio: 0.0,
                log_constant: 0.0,
            };
            for n in 1..=GIBBS_MAX_LEN {
                if (trunc.len() as f64).powi(n as i32) > s.budget as f64 {
                    break;
                }
                for w in admissible_words(&trunc, n)? {
                    let g = gibbs_ratio(&eq.measure, &w, f, t, eq.pressure()).map_err(LimitsError::from)?;
                    check.words += 1;
                    check.failures += usize::from(!g.bound_ok);
                    check.max_log_ratio = check.max_log_ratio.max(g.ratio.ln().abs());
                    check.log_constant = g.constant.ln();
                }
            }
            gibbs.push(check);
        }
    }

    let tightness = s
        .ts
        .iter()
        .filter(|&&t| t > 1.0)
        .map(|&t| limits::tightness_bound_check(model, f, t, &s.ks))
        .collect::<Result<Vec<_>, _>>()?;
    let (k0, k0_error) = match ergodic_opt::detect_k0(model, f, &s.ks, s.window) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let t0 = s.ts[0];
    let (integral_convergence_residual, integral_convergence_error) = if s.ks.len() >= 3 && t0 > 1.0 {
        match limits::integral_convergence_check(model, f, t0, &s.ks, s.tol) {
            Ok(r) => (Some(r.identity_residual), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("needs three truncations and t > 1".into()))
    };
    let semicontinuity =
        limits::entropy_upper_semicontinuity_check(model, f, t0, &s.ks, s.tol, s.budget).ok();
    Ok(DiagnoseReport {
        grid_points: sweep.grid.len(),
        failed_points: sweep.grid.iter().filter(|p| p.error.is_some()).count(),
        monotone_violations: count("monotone_k"),
        convexity_violations: count("convex_t"),
        max_vp_residual,
        max_partition_defect: partition_defect,
        gibbs,
        tightness,
        k0,
        k0_error,
        integral_convergence_residual,
        integral_convergence_error,
        semicontinuity,
        certified: sweep.certificate.is_some(),
    })
}
