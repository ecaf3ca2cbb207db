//! Run configuration and the subcommand drivers behind the `hodge-bands` binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use hodge_bands::bands::{
    compute_bands_with, convergence_study_against, detect_gaps, extended_window, write_bands_csv,
    write_convergence_csv, write_gaps_csv, Band, BandOptions, ConvergenceTable, GapReport, StudyOptions,
};
use hodge_bands::limit::{assemble_limit_spectrum, write_limit_csv, LimitSpectrum};
use hodge_bands::radial::Profile;
use hodge_bands::selfcheck::{run_selfcheck, SelfcheckOptions, SelfcheckReport};
use hodge_bands::transversal::{flat_torus, load_spectrum, TransversalSpectrum};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Core(#[from] hodge_bands::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("selfcheck failed: {0}")]
    Selfcheck(String),
}

impl CliError {
    fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config { field: field.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Toml(_) | CliError::Io { .. } => 1,
            CliError::Core(e) if e.is_input_error() => 1,
            CliError::Core(_) => 2,
            CliError::Selfcheck(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Sigma {
    Torus { sides: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_root_tol")]
    pub root_tol: f64,
    #[serde(default = "default_oracle_n")]
    pub oracle_n: usize,
    #[serde(default = "default_true")]
    pub richardson: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { root_tol: default_root_tol(), oracle_n: default_oracle_n(), richardson: true }
    }
}

fn default_root_tol() -> f64 {
    1e-10
}
fn default_oracle_n() -> usize {
    2000
}
fn default_true() -> bool {
    true
}
fn default_theta_grid() -> usize {
    65
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    SelfcheckOptions::default().seed
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sigma: Sigma,
    pub degrees: Vec<i64>,
    pub eps_list: Vec<f64>,
    #[serde(rename = "L")]
    pub handle_len: f64,
    pub l_out: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: usize,
    pub lambda_max: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl RunConfig {
    /// Parses a TOML config, applying `key=value` overrides first. Keys may be
    /// dotted (`tolerances.oracle_n`); values are TOML literals, and anything
    /// that does not parse as one is taken as a string.
    pub fn from_toml(text: &str, overrides: &[String]) -> CliResult<RunConfig> {
        let mut doc: toml::Value = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = doc.try_into()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> CliResult<RunConfig> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = RunConfig::from_toml(&text, overrides)?;
        if let (Sigma::File { path: p }, Some(dir)) = (&mut cfg.sigma, path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        match &self.sigma {
            Sigma::Torus { sides } => {
                if sides.is_empty() {
                    return Err(CliError::config("sigma.sides", "needs at least one side length"));
                }
                if let Some(i) = sides.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(CliError::config(&format!("sigma.sides[{i}]"), "side lengths must be positive"));
                }
            }
            Sigma::File { path } => {
                if !path.is_file() {
                    return Err(CliError::config("sigma.path", format!("file {} does not exist", path.display())));
                }
            }
        }
        if self.degrees.is_empty() {
            return Err(CliError::config("degrees", "list is empty"));
        }
        if self.eps_list.is_empty() {
            return Err(CliError::config("eps_list", "list is empty"));
        }
        if let Some(i) = self.eps_list.iter().position(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(CliError::config(&format!("eps_list[{i}]"), "eps must lie in ]0, 1]"));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(CliError::config("lambda_max", "must be positive"));
        }
        if !(self.handle_len >= 0.0 && self.handle_len.is_finite()) {
            return Err(CliError::config("L", "must be non-negative"));
        }
        if !(self.l_out >= 0.0 && self.l_out.is_finite()) {
            return Err(CliError::config("l_out", "must be non-negative"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(CliError::config("eta", "must be non-negative"));
        }
        if self.theta_grid < 2 {
            return Err(CliError::config("theta_grid", "needs at least 2 points"));
        }
        if !(self.tolerances.root_tol > 0.0) {
            return Err(CliError::config("tolerances.root_tol", "must be positive"));
        }
        if self.tolerances.oracle_n < 16 {
            return Err(CliError::config("tolerances.oracle_n", "must be at least 16"));
        }
        Ok(())
    }

    /// The transversal spectrum, with degrees checked against its dimension.
    pub fn spectrum(&self) -> CliResult<TransversalSpectrum> {
        let ts = match &self.sigma {
            Sigma::Torus { sides } => {
                let window = extended_window(self.lambda_max, StudyOptions::default().radius);
                flat_torus(sides, 1.2 * window + 1.0)?
            }
            Sigma::File { path } => load_spectrum(path)?,
        };
        let top = ts.n as i64 + 1;
        if let Some(i) = self.degrees.iter().position(|&p| p < 0 || p > top) {
            return Err(CliError::config(&format!("degrees[{i}]"), format!("degree must lie in 0..={top}")));
        }
        Ok(ts)
    }

    fn band_options(&self) -> BandOptions {
        BandOptions {
            theta_points: self.theta_grid,
            root_tol: self.tolerances.root_tol,
            oracle_n: self.tolerances.oracle_n,
            richardson: self.tolerances.richardson,
        }
    }

    fn profile(&self, eps: f64) -> CliResult<Profile> {
        Ok(if self.eta == 0.0 {
            Profile::new(eps, self.handle_len, self.l_out)?
        } else {
            Profile::smoothed(eps, self.handle_len, self.l_out, self.eta)?
        })
    }
}

fn apply_override(doc: &mut toml::Value, item: &str) -> CliResult<()> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| CliError::config(item, "override must have the form key=value"))?;
    let key = key.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut parts = key.split('.').peekable();
    let mut node = doc;
    while let Some(part) = parts.next() {
        let table = node.as_table_mut().ok_or_else(|| CliError::config(key, "path runs through a non-table value"))?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(CliError::config(key, "empty key"))
}

/// Everything computed by `bands` or `gaps`, ordered by (p, ε).
pub struct BandRun {
    pub bands: Vec<Vec<Band>>,
    pub gaps: Vec<GapReport>,
}

pub fn compute_band_run(cfg: &RunConfig) -> CliResult<BandRun> {
    cfg.validate()?;
    let ts = cfg.spectrum()?;
    let opts = cfg.band_options();
    let mut bands = Vec::new();
    let mut gaps = Vec::new();
    for &p in &cfg.degrees {
        for &eps in &cfg.eps_list {
            let b = compute_bands_with(&ts, p, &cfg.profile(eps)?, cfg.lambda_max, &opts)?;
            gaps.push(detect_gaps(&b, cfg.lambda_max)?);
            bands.push(b);
        }
    }
    Ok(BandRun { bands, gaps })
}

fn gap_summary(gaps: &[GapReport]) -> Value {
    Value::Array(
        gaps.iter()
            .map(|g| json!({ "p": g.p, "eps": g.eps, "gap_count": g.count(), "gaps": g.gaps }))
            .collect(),
    )
}

pub fn run_bands(cfg: &RunConfig) -> CliResult<Value> {
    let run = compute_band_run(cfg)?;
    let all: Vec<Band> = run.bands.iter().flatten().cloned().collect();
    write_file(&cfg.output, "bands.csv", |w| write_bands_csv(&all, w))?;
    write_file(&cfg.output, "gaps.csv", |w| write_gaps_csv(&run.gaps, w))?;
    let counts: Vec<Value> = run
        .bands
        .iter()
        .map(|b| json!({ "p": b.first().map(|x| x.p), "eps": b.first().map(|x| x.eps), "band_count": b.len() }))
        .collect();
    let summary = summary(cfg, "bands", json!({ "bands": counts, "gaps": gap_summary(&run.gaps) }));
    write_summary(cfg, &summary)?;
    Ok(summary)
}

pub fn run_gaps(cfg: &RunConfig) -> CliResult<Value> {
    let run = compute_band_run(cfg)?;
    write_file(&cfg.output, "gaps.csv", |w| write_gaps_csv(&run.gaps, w))?;
    let summary = summary(cfg, "gaps", json!({ "gaps": gap_summary(&run.gaps) }));
    write_summary(cfg, &summary)?;
    Ok(summary)
}

pub fn compute_limits(cfg: &RunConfig) -> CliResult<Vec<LimitSpectrum>> {
    cfg.validate()?;
    let ts = cfg.spectrum()?;
    let mut out = Vec::new();
    for &p in &cfg.degrees {
        out.push(assemble_limit_spectrum(&ts, p, cfg.handle_len, cfg.l_out, cfg.lambda_max)?);
    }
    Ok(out)
}

pub fn run_limit(cfg: &RunConfig) -> CliResult<Value> {
    let limits = compute_limits(cfg)?;
    write_file(&cfg.output, "limit.csv", |w| write_limit_csv(&limits, w))?;
    let per: Vec<Value> = limits
        .iter()
        .map(|l| {
            json!({
                "p": l.p,
                "case_tag": l.case_tag.to_string(),
                "points": l.points().len(),
                "kernel_multiplicity": l.kernel_multiplicity(),
            })
        })
        .collect();
    let summary = summary(cfg, "limit", json!({ "degrees": per }));
    write_summary(cfg, &summary)?;
    Ok(summary)
}

pub fn compute_convergence(cfg: &RunConfig) -> CliResult<Vec<ConvergenceTable>> {
    cfg.validate()?;
    if cfg.eta != 0.0 {
        return Err(CliError::config("eta", "convergence studies use the unsmoothed profile; set eta = 0"));
    }
    let ts = cfg.spectrum()?;
    let opts = StudyOptions { bands: cfg.band_options(), ..StudyOptions::default() };
    let window = extended_window(cfg.lambda_max, opts.radius);
    let mut out = Vec::new();
    for &p in &cfg.degrees {
        let limit = assemble_limit_spectrum(&ts, p, cfg.handle_len, cfg.l_out, window)?;
        out.push(convergence_study_against(
            &ts,
            p,
            &cfg.eps_list,
            cfg.handle_len,
            cfg.l_out,
            cfg.lambda_max,
            &limit,
            &opts,
        )?);
    }
    Ok(out)
}

pub fn run_converge(cfg: &RunConfig) -> CliResult<Value> {
    let tables = compute_convergence(cfg)?;
    write_file(&cfg.output, "convergence.csv", |w| write_convergence_csv(&tables, w))?;
    let per: Vec<Value> = tables
        .iter()
        .map(|t| {
            let steps: Vec<Value> = t
                .steps
                .iter()
                .map(|s| {
                    json!({
                        "eps": s.eps,
                        "matched": s.matching.assignments.iter().map(|a| a.mult).sum::<u64>(),
                        "unmatched_bands": s.matching.unmatched_bands.iter().map(|x| x.1).sum::<u64>(),
                        "unmatched_points": s.matching.unmatched_points.iter().map(|x| x.1).sum::<u64>(),
                        "max_distance": s.matching.max_distance(),
                    })
                })
                .collect();
            let all_matched = t.last().map(|s| s.matching.is_bidirectional()).unwrap_or(false);
            json!({
                "p": t.p,
                "case_tag": t.limit.case_tag.to_string(),
                "steps": steps,
                "verdict": if all_matched { "all matched" } else { "unmatched" },
            })
        })
        .collect();
    let summary = summary(cfg, "converge", json!({ "degrees": per }));
    write_summary(cfg, &summary)?;
    Ok(summary)
}

/// Runs the invariant suite; a failing suite is reported as [`CliError::Selfcheck`]
/// after the summary has been written.
pub fn run_selfcheck_command(cfg: &RunConfig) -> CliResult<(Value, SelfcheckReport)> {
    let opts = SelfcheckOptions { seed: cfg.seed, oracle_n: cfg.tolerances.oracle_n, ..SelfcheckOptions::default() };
    let report = run_selfcheck(&opts)?;
    let summary = summary(cfg, "selfcheck", json!({ "passed": report.passed(), "checks": report.checks }));
    write_summary(cfg, &summary)?;
    if !report.passed() {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
        return Err(CliError::Selfcheck(names.join(", ")));
    }
    Ok((summary, report))
}

fn summary(cfg: &RunConfig, command: &str, results: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "results": results,
    })
}

fn write_summary(cfg: &RunConfig, summary: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    write_file(&cfg.output, "summary.json", |w| {
        use std::io::Write;
        w.write_all(text.as_bytes())?;
        Ok(())
    })
}

fn write_file<F>(dir: &Path, name: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut fs::File) -> hodge_bands::Result<()>,
{
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    body(&mut f)?;
    Ok(())
}
