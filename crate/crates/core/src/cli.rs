//! Batch front end: parses a JSON run configuration, runs the scenarios of
//! one subcommand, caches their outcomes and writes CSV/JSON/plot files.
//!
//! Exit codes: 0 when every scenario passes, 2 when any fails, 1 on errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::amalgam::{amalgam_norm, embedding_constant};
use crate::commutators::{
    ad, propagator_growth, verify_duhamel_with, verify_expansion_base_with, verify_leibniz, CriterionOptions,
    IdentityOptions,
};
use crate::error::{LabError, Result};
use crate::estimates::{
    fit_growth_exponent, fourier_decay_check, run_scenario, DecayModelKind, DecaySettings, KatoSettings, ScenarioKind,
    ScenarioSpec,
};
use crate::grid::{make_grid, GridFunction};
use crate::normest::norm_bracket;
use crate::operators::{
    build_operator, heat_semigroup, kato_norm, resolvent_power, schrodinger_group, LinearGridOperator,
    OperatorKind, OperatorSpec, PotentialSpec,
};
use crate::verify::{check_assumption, check_remark2_equiv, AssumptionParams};

#[derive(Parser, Debug)]
#[command(name = "spectral-lab", version, about = "Spectral-calculus experiments on periodic grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct CommonArgs {
    /// JSON run configuration; a built-in default runs when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for scenario-level parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides every scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recompute even when a cached outcome exists.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Off-diagonal block-decay hypothesis for heat semigroups.
    CheckAssumption(CommonArgs),
    /// Growth exponents of frequency-truncated Schrödinger groups.
    Growth(CommonArgs),
    /// Uniform bounds for φ(2^k H).
    Uniformity(CommonArgs),
    /// Growth of e^{-itH}(I+H)^{-s-ε}.
    Sobolev(CommonArgs),
    /// Heat-kernel decay exponents.
    KernelDecay(CommonArgs),
    /// Decay of the inverse transform of exp(-|ξ|^{2k}).
    FourierDecay(CommonArgs),
    /// Kato integrals over shrinking radii.
    Kato(CommonArgs),
    /// Commutator identities and propagator growth on amalgam spaces.
    Commutators(CommonArgs),
    /// Trivial consistency suite.
    Selftest(CommonArgs),
}

/// A run configuration: scenarios of one subcommand plus shared settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig<T> {
    pub scenarios: Vec<T>,
    /// Operator and grid used by scenarios that do not name one.
    #[serde(default)]
    pub defaults: Option<OperatorSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "yes")]
    pub cache: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn yes() -> bool {
    true
}

impl<T> RunConfig<T> {
    pub fn new(scenarios: Vec<T>) -> Self {
        Self { scenarios, defaults: None, out: None, cache: true, seed: None }
    }
}

/// What a scenario leaves behind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    pub pass: bool,
    pub summary: String,
    pub csv: String,
    pub plot: Option<String>,
    pub report: Value,
}

/// A scenario type runnable from the command line.
pub trait Scenario: Serialize + DeserializeOwned + Clone + Send + Sync {
    fn name(&self) -> String;
    /// Fills unset fields from the config defaults and applies a seed override.
    fn prepare(&mut self, defaults: Option<&OperatorSpec>, seed: Option<u64>) -> Result<()>;
    fn run(&self) -> Result<Outcome>;
}

fn utf8(buf: Vec<u8>) -> String {
    String::from_utf8(buf).expect("writers emit UTF-8")
}

fn need_operator(op: &mut Option<OperatorSpec>, defaults: Option<&OperatorSpec>, name: &str) -> Result<()> {
    if op.is_none() {
        *op = defaults.cloned();
    }
    if op.is_none() {
        return Err(LabError::InvalidArgument(format!("scenario {name} has no operator and the config has no defaults")));
    }
    Ok(())
}

/// Estimate scenarios restricted to the kinds a subcommand accepts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EstimateScenario(pub ScenarioSpec);

impl Scenario for EstimateScenario {
    fn name(&self) -> String {
        self.0.label()
    }

    fn prepare(&mut self, defaults: Option<&OperatorSpec>, seed: Option<u64>) -> Result<()> {
        if let Some(s) = seed {
            self.0.seed = s;
        }
        if self.0.kind != ScenarioKind::KatoLimit {
            let name = self.name();
            need_operator(&mut self.0.operator, defaults, &name)?;
        }
        Ok(())
    }

    fn run(&self) -> Result<Outcome> {
        let report = run_scenario(&self.0)?;
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        let mut plot = Vec::new();
        report.write_plot_tsv(&mut plot)?;
        Ok(Outcome {
            name: self.name(),
            pass: report.pass,
            summary: format!("{} rows, {} skipped; {}", report.rows.len(), report.skipped.len(), report.detail()),
            csv: utf8(csv),
            plot: Some(utf8(plot)),
            report: serde_json::to_value(&report)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionScenario {
    pub name: String,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    pub params: AssumptionParams,
    /// Also run the `L^1 → L^2` reformulation (`p0 = 1` only).
    #[serde(default)]
    pub equivalence: bool,
}

impl Scenario for AssumptionScenario {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn prepare(&mut self, defaults: Option<&OperatorSpec>, seed: Option<u64>) -> Result<()> {
        if let Some(s) = seed {
            self.params.seed = s;
        }
        need_operator(&mut self.operator, defaults, &self.name)
    }

    fn run(&self) -> Result<Outcome> {
        let h = build_operator(self.operator.as_ref().expect("prepared"))?;
        let report = check_assumption(&h, &self.params)?;
        let mut pass = report.pass();
        let mut json = serde_json::to_value(&report)?;
        let mut summary = format!(
            "{} rows, {} skipped; uno sup {}, due sup {}",
            report.rows.len(),
            report.skipped.len(),
            report.uno.as_ref().map_or("-".into(), |r| format!("{:.3}", r.sup)),
            report.due.as_ref().map_or("-".into(), |r| format!("{:.3}", r.sup)),
        );
        if self.equivalence {
            let eq = check_remark2_equiv(&h, &self.params)?;
            let dominate = eq.rows.iter().all(|r| r.routes_dominate());
            pass &= dominate && !eq.rows.is_empty();
            summary.push_str(&format!("; equivalence routes dominate: {dominate}"));
            json["equivalence"] = serde_json::to_value(&eq)?;
        }
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        Ok(Outcome { name: self.name.clone(), pass, summary, csv: utf8(csv), plot: None, report: json })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierScenario {
    pub name: String,
    pub k: u32,
    #[serde(default = "default_fourier_n")]
    pub n: usize,
    /// Tolerance on γ; 0.05 for `k = 1`, 0.1 otherwise when absent.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

fn default_fourier_n() -> usize {
    4096
}

impl Scenario for FourierScenario {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn prepare(&mut self, _: Option<&OperatorSpec>, _: Option<u64>) -> Result<()> {
        Ok(())
    }

    fn run(&self) -> Result<Outcome> {
        let r = fourier_decay_check(self.k, self.n)?;
        let tol = self.tolerance.unwrap_or(if self.k == 1 { 0.05 } else { 0.1 });
        let pass = (r.fit.exponent - r.expected).abs() <= tol && r.derivative_bound_ok;
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["a", "derivative_l1_norm"])?;
        for (a, v) in r.derivative_norms.iter().enumerate() {
            csv.write_record([a.to_string(), format!("{v:e}")])?;
        }
        let csv = utf8(csv.into_inner().map_err(|e| LabError::Io(e.into_error()))?);
        let mut plot = String::from("log_u\tlog_v\n");
        for (x, v) in &r.fit.samples {
            plot.push_str(&format!("{:.12e}\t{:.12e}\n", x.ln(), v.ln()));
        }
        let summary = format!(
            "gamma {:.4} (claimed {:.4} ± {tol}), derivative ratio spread {:.2}",
            r.fit.exponent, r.expected, r.ratio_spread
        );
        Ok(Outcome { name: self.name.clone(), pass, summary, csv, plot: Some(plot), report: serde_json::to_value(&r)? })
    }
}

fn default_identity_tol() -> f64 {
    1e-6
}

fn default_leibniz_tol() -> f64 {
    1e-8
}

fn default_growth_margin() -> f64 {
    0.3
}

/// Commutator checks on one operator `H`; `R = (I + H)^{-1}` after a shift
/// when `H` has negative spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorScenario {
    pub name: String,
    #[serde(default)]
    pub operator: Option<OperatorSpec>,
    /// Times for the first-order expansion identity.
    #[serde(default)]
    pub expansion_t: Vec<f64>,
    /// Frequencies for the Duhamel identity of `e^{-iξR}`.
    #[serde(default)]
    pub duhamel_xi: Vec<f64>,
    /// Leibniz order checked on two and three factors built from `H`.
    #[serde(default)]
    pub leibniz_order: Option<u32>,
    /// Sweep for the growth of `‖e^{-iξR}‖` on `X^{1,2}`.
    #[serde(default)]
    pub growth_xi: Vec<f64>,
    #[serde(default)]
    pub identity: IdentityOptions,
    #[serde(default)]
    pub criterion: CriterionOptions,
    #[serde(default = "default_identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "default_leibniz_tol")]
    pub leibniz_tol: f64,
    /// Allowed excess of the fitted growth exponent over `d/2`.
    #[serde(default = "default_growth_margin")]
    pub growth_margin: f64,
}

impl CommutatorScenario {
    pub fn new(name: &str, operator: OperatorSpec) -> Self {
        Self {
            name: name.into(),
            operator: Some(operator),
            expansion_t: Vec::new(),
            duhamel_xi: Vec::new(),
            leibniz_order: None,
            growth_xi: Vec::new(),
            identity: IdentityOptions::default(),
            criterion: CriterionOptions::default(),
            identity_tol: default_identity_tol(),
            leibniz_tol: default_leibniz_tol(),
            growth_margin: default_growth_margin(),
        }
    }
}

impl Scenario for CommutatorScenario {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn prepare(&mut self, defaults: Option<&OperatorSpec>, seed: Option<u64>) -> Result<()> {
        if let Some(s) = seed {
            self.criterion.seed = s;
        }
        need_operator(&mut self.operator, defaults, &self.name)
    }

    fn run(&self) -> Result<Outcome> {
        let spec = self.operator.as_ref().expect("prepared");
        let h = build_operator(spec)?;
        let (lo, _) = h.spectrum_bounds()?;
        let h_pos = if lo < 0.0 { h.shifted(-lo) } else { h.clone() };
        let r = resolvent_power(&h_pos, 1.0)?;
        let mut rows: Vec<(String, f64, f64, f64, bool)> = Vec::new();
        let mut report = serde_json::Map::new();
        for &t in &self.expansion_t {
            let c = verify_expansion_base_with(&h, t, &self.identity)?;
            rows.push(("expansion".into(), t, c.expansion_residual, self.identity_tol, c.expansion_residual <= self.identity_tol));
            rows.push(("resolvent_commutator".into(), t, c.resolvent_residual, self.identity_tol, c.resolvent_residual <= self.identity_tol));
        }
        for &xi in &self.duhamel_xi {
            let c = verify_duhamel_with(&r, xi, &self.identity)?;
            rows.push(("duhamel".into(), xi, c.residual, self.identity_tol, c.residual <= self.identity_tol));
        }
        if let Some(order) = self.leibniz_order {
            let heat = heat_semigroup(&h_pos, 0.1)?;
            let factors = [r.clone(), heat, resolvent_power(&h_pos, 2.0)?];
            for count in [2usize, 3] {
                let res = verify_leibniz(&factors[..count], order, &self.identity)?;
                rows.push((format!("leibniz_{count}_factors"), order as f64, res, self.leibniz_tol, res <= self.leibniz_tol));
            }
        }
        if !self.growth_xi.is_empty() {
            let g = propagator_growth(&r, &self.growth_xi, &self.criterion)?;
            let bound = g.claimed_exponent + self.growth_margin;
            rows.push(("propagator_growth_exponent".into(), g.xi.len() as f64, g.fit.exponent, bound, g.fit.exponent <= bound));
            report.insert("propagator_growth".into(), serde_json::to_value(&g)?);
        }
        if rows.is_empty() {
            return Err(LabError::InvalidArgument(format!("commutator scenario {} requests no checks", self.name)));
        }
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record(["check", "parameter", "value", "threshold", "pass"])?;
        for (c, p, v, t, ok) in &rows {
            csv.write_record([c.clone(), format!("{p:e}"), format!("{v:e}"), format!("{t:e}"), ok.to_string()])?;
        }
        let csv = utf8(csv.into_inner().map_err(|e| LabError::Io(e.into_error()))?);
        let pass = rows.iter().all(|r| r.4);
        let identities: Vec<f64> = rows.iter().filter(|r| !r.0.starts_with("propagator")).map(|r| r.2).collect();
        let mut summary = format!("{} checks", rows.len());
        if !identities.is_empty() {
            summary.push_str(&format!(", worst identity residual {:.2e}", identities.iter().fold(0.0, |a: f64, b| a.max(*b))));
        }
        if let Some(g) = rows.iter().find(|r| r.0.starts_with("propagator")) {
            summary.push_str(&format!(", growth exponent {:.3} (bound {:.3})", g.2, g.3));
        }
        report.insert(
            "checks".into(),
            Value::Array(rows.iter().map(|(c, p, v, t, ok)| json!({"check": c, "parameter": p, "value": v, "threshold": t, "pass": ok})).collect()),
        );
        Ok(Outcome { name: self.name.clone(), pass, summary, csv, plot: None, report: Value::Object(report) })
    }
}

/// Recursively sorts object keys.
fn canonical(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let mut out = serde_json::Map::new();
            for k in keys {
                out.insert(k.clone(), canonical(&m[k]));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.iter().map(canonical).collect()),
        _ => v.clone(),
    }
}

/// SHA-256 of the canonical (key-sorted, compact) JSON text of `fragment`.
pub fn cache_key(fragment: &Value) -> String {
    let text = serde_json::to_string(&canonical(fragment)).expect("JSON values serialize");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{file_name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<RunConfig<T>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| LabError::InvalidArgument(format!("config {}: {e}", path.display())))
}

struct Executed {
    outcome: Outcome,
    cached: bool,
}

fn execute<T: Scenario>(command: &str, mut config: RunConfig<T>, args: &CommonArgs) -> Result<i32> {
    let seed = args.seed.or(config.seed);
    for s in &mut config.scenarios {
        s.prepare(config.defaults.as_ref(), seed)?;
    }
    let mut stems: Vec<String> = config.scenarios.iter().map(|s| file_stem(&s.name())).collect();
    stems.sort();
    if stems.windows(2).any(|w| w[0] == w[1]) {
        return Err(LabError::InvalidArgument("scenario names must be unique".into()));
    }
    let out = args.out.clone().or(config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let use_cache = config.cache && !args.no_cache;
    let cache_dir = out.join(".cache");
    let run_one = |s: &T| -> Result<Executed> {
        let key = cache_key(&json!({
            "command": command,
            "scenario": serde_json::to_value(s)?,
            "version": env!("CARGO_PKG_VERSION"),
        }));
        let path = cache_dir.join(format!("{key}.json"));
        if use_cache {
            if let Ok(text) = fs::read_to_string(&path) {
                if let Ok(outcome) = serde_json::from_str::<Outcome>(&text) {
                    return Ok(Executed { outcome, cached: true });
                }
            }
        }
        let outcome = s.run()?;
        write_atomic(&path, serde_json::to_string(&outcome)?.as_bytes())?;
        Ok(Executed { outcome, cached: false })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .map_err(|e| LabError::InvalidArgument(format!("worker pool: {e}")))?;
    // results come back in config order regardless of scheduling
    let results: Vec<Result<Executed>> = pool.install(|| config.scenarios.par_iter().map(run_one).collect());
    let mut entries = Vec::new();
    let mut all_pass = true;
    for (s, r) in config.scenarios.iter().zip(results) {
        let ex = r.map_err(|e| LabError::InvalidArgument(format!("scenario {}: {e}", s.name())))?;
        let o = &ex.outcome;
        let stem = file_stem(&o.name);
        write_atomic(&out.join(format!("{stem}.csv")), o.csv.as_bytes())?;
        write_atomic(&out.join(format!("{stem}.json")), serde_json::to_string_pretty(&o.report)?.as_bytes())?;
        if let Some(p) = &o.plot {
            write_atomic(&out.join("plotdata").join(format!("{stem}.tsv")), p.as_bytes())?;
        }
        println!("{} {}: {}{}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.summary, if ex.cached { " (cached)" } else { "" });
        all_pass &= o.pass;
        entries.push(json!({"name": o.name, "pass": o.pass, "summary": o.summary, "cached": ex.cached}));
    }
    let generated = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let summary = json!({
        "command": command,
        "pass": all_pass,
        "seed": seed,
        "scenarios": entries,
        "metadata": {"generated_unix": generated, "version": env!("CARGO_PKG_VERSION")},
    });
    write_atomic(&out.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    Ok(if all_pass { 0 } else { 2 })
}

fn run_with<T: Scenario>(command: &str, args: &CommonArgs, default: impl FnOnce() -> Result<RunConfig<T>>) -> Result<i32> {
    let config = match &args.config {
        Some(path) => load_config(path)?,
        None => default()?,
    };
    execute(command, config, args)
}

/// Restricts estimate configs to the kinds a subcommand accepts.
fn estimate_command(command: &str, args: &CommonArgs, kinds: &[ScenarioKind], default: RunConfig<EstimateScenario>) -> Result<i32> {
    let config: RunConfig<EstimateScenario> = match &args.config {
        Some(path) => load_config(path)?,
        None => default,
    };
    if let Some(bad) = config.scenarios.iter().find(|s| !kinds.contains(&s.0.kind)) {
        return Err(LabError::InvalidArgument(format!("{command} does not run scenarios of kind {:?}", bad.0.kind)));
    }
    execute(command, config, args)
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::CheckAssumption(a) => run_with("check-assumption", &a, defaults::assumption),
        Command::Growth(a) => {
            estimate_command("growth", &a, &[ScenarioKind::FreeGrowth, ScenarioKind::MainGrowth], defaults::growth()?)
        }
        Command::Uniformity(a) => {
            estimate_command("uniformity", &a, &[ScenarioKind::MultiplierUniformity], defaults::uniformity()?)
        }
        Command::Sobolev(a) => estimate_command("sobolev", &a, &[ScenarioKind::Sobolev], defaults::sobolev()?),
        Command::KernelDecay(a) => {
            estimate_command("kernel-decay", &a, &[ScenarioKind::KernelDecay], defaults::kernel_decay()?)
        }
        Command::FourierDecay(a) => run_with("fourier-decay", &a, defaults::fourier),
        Command::Kato(a) => estimate_command("kato", &a, &[ScenarioKind::KatoLimit], defaults::kato()),
        Command::Commutators(a) => run_with("commutators", &a, defaults::commutators),
        Command::Selftest(a) => {
            if a.config.is_some() {
                return Err(LabError::InvalidArgument("selftest runs a built-in suite and takes no config".into()));
            }
            execute("selftest", RunConfig::new(selftest_suite()), &a)
        }
    }
}

/// Built-in configurations used when `--config` is absent.
pub mod defaults {
    use super::*;

    fn named(mut s: ScenarioSpec, name: &str) -> EstimateScenario {
        s.name = Some(name.into());
        EstimateScenario(s)
    }

    fn well() -> OperatorKind {
        OperatorKind::Schrodinger { potential: PotentialSpec::GaussianWell { depth: 1.0, width: 1.0 } }
    }

    const GROWTH_U: [f64; 8] = [1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];

    pub fn assumption() -> Result<RunConfig<AssumptionScenario>> {
        Ok(RunConfig::new(vec![AssumptionScenario {
            name: "laplacian_1d".into(),
            operator: Some(OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 2048, 32.0)?)),
            params: AssumptionParams::new(1.0, 2.0, 1),
            equivalence: true,
        }]))
    }

    /// Free Laplacian against `1 + 4^k t`, and the Gaussian-well operator
    /// against `1 + 2^k t`.
    pub fn growth() -> Result<RunConfig<EstimateScenario>> {
        let mut free = ScenarioSpec::new(ScenarioKind::FreeGrowth, Some(OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 256, 64.0)?)));
        free.k_sweep = vec![2, 3, 4, 5];
        free.u_sweep = vec![2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
        let mut main = ScenarioSpec::new(ScenarioKind::MainGrowth, Some(OperatorSpec::new(well(), make_grid(1, 128, 32.0)?)));
        main.k_sweep = vec![2, 3, 4, 5];
        main.u_sweep = GROWTH_U.to_vec();
        Ok(RunConfig::new(vec![named(free, "free_laplacian_p1"), named(main, "gaussian_well_p1")]))
    }

    pub fn uniformity() -> Result<RunConfig<EstimateScenario>> {
        let mut s = ScenarioSpec::new(ScenarioKind::MultiplierUniformity, Some(OperatorSpec::new(well(), make_grid(1, 1024, 256.0)?)));
        s.k_sweep = (-4..=4).collect();
        s.family = vec![1.0, 2.0];
        s.thresholds.tail_max = 5e-2;
        Ok(RunConfig::new(vec![named(s, "gaussian_well_cutoffs")]))
    }

    pub fn sobolev() -> Result<RunConfig<EstimateScenario>> {
        let mut s = ScenarioSpec::new(ScenarioKind::Sobolev, Some(OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 8192, 8192.0)?)));
        s.t_sweep = vec![3.0, 7.0, 15.0, 31.0, 63.0, 127.0];
        Ok(RunConfig::new(vec![named(s, "laplacian_p1")]))
    }

    pub fn kernel_decay() -> Result<RunConfig<EstimateScenario>> {
        let grid = make_grid(1, 4096, 256.0)?;
        let case = |kind: OperatorKind, model: DecayModelKind, name: &str| {
            let mut s = ScenarioSpec::new(ScenarioKind::KernelDecay, Some(OperatorSpec::new(kind, grid)));
            s.decay = Some(DecaySettings { t: 1.0, model, expected: None });
            named(s, name)
        };
        let mut gauss = case(OperatorKind::Laplacian, DecayModelKind::Stretched, "gaussian");
        gauss.0.thresholds.decay_tol = 0.05;
        Ok(RunConfig::new(vec![
            gauss,
            case(OperatorKind::Polyharmonic { k: 2 }, DecayModelKind::Stretched, "polyharmonic_2"),
            case(OperatorKind::Polyharmonic { k: 3 }, DecayModelKind::Stretched, "polyharmonic_3"),
            case(OperatorKind::Fractional { alpha: 0.5 }, DecayModelKind::Algebraic, "poisson"),
        ]))
    }

    pub fn fourier() -> Result<RunConfig<FourierScenario>> {
        Ok(RunConfig::new(
            (1..=3).map(|k| FourierScenario { name: format!("k{k}"), k, n: 4096, tolerance: None }).collect(),
        ))
    }

    pub fn kato() -> RunConfig<EstimateScenario> {
        let case = |alpha: f64, name: &str| {
            let mut s = ScenarioSpec::new(ScenarioKind::KatoLimit, None);
            s.kato = Some(KatoSettings {
                potential: PotentialSpec::InversePower { alpha, cap: None },
                dim: 3,
                radii: vec![0.4, 0.2, 0.1],
                expected_power: Some(2.0 - alpha),
            });
            named(s, name)
        };
        RunConfig::new(vec![case(1.0, "coulomb_3d"), case(1.5, "inverse_power_1_5_3d")])
    }

    pub fn commutators() -> Result<RunConfig<CommutatorScenario>> {
        let mut ids = CommutatorScenario::new("identities_laplacian", OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 64, 16.0)?));
        ids.expansion_t = vec![0.5];
        ids.duhamel_xi = vec![2.0];
        ids.leibniz_order = Some(2);
        ids.identity.centre = 8.0;
        let mut growth = CommutatorScenario::new("propagator_growth", OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 128, 64.0)?));
        growth.growth_xi = vec![1.0, 2.0, 4.0, 8.0, 16.0];
        Ok(RunConfig::new(vec![ids, growth]))
    }
}

/// One trivially checkable fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfCheck {
    pub name: String,
}

fn check_outcome(name: &str, values: Vec<(&str, f64, bool)>) -> Outcome {
    let mut csv = String::from("check,value,pass\n");
    for (c, v, ok) in &values {
        csv.push_str(&format!("{c},{v:e},{ok}\n"));
    }
    let pass = values.iter().all(|v| v.2);
    Outcome {
        name: name.into(),
        pass,
        summary: format!("{}/{} checks", values.iter().filter(|v| v.2).count(), values.len()),
        csv,
        plot: None,
        report: Value::Array(values.iter().map(|(c, v, ok)| json!({"check": c, "value": v, "pass": ok})).collect()),
    }
}

impl Scenario for SelfCheck {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn prepare(&mut self, _: Option<&OperatorSpec>, _: Option<u64>) -> Result<()> {
        Ok(())
    }

    fn run(&self) -> Result<Outcome> {
        let grid = make_grid(1, 64, 16.0)?;
        let lap = build_operator(&OperatorSpec::new(OperatorKind::Laplacian, grid))?;
        let checks = match self.name.as_str() {
            "unitarity" => {
                let f = GridFunction::from_fn(grid, |x| Complex64::new((x[0] * 0.7).sin(), (x[0] * 0.3).cos()));
                let n0 = f.lp_norm(2.0)?;
                let mut v = Vec::new();
                for (label, t) in [("t=0.1", 0.1), ("t=1", 1.0), ("t=10", 10.0)] {
                    let r = schrodinger_group(&lap, t)?.apply(&f)?.lp_norm(2.0)? / n0;
                    v.push((label, (r - 1.0).abs(), (r - 1.0).abs() <= 1e-10));
                }
                v
            }
            "p2_growth_flat" => {
                let mut s = ScenarioSpec::new(ScenarioKind::MainGrowth, Some(OperatorSpec::new(OperatorKind::Laplacian, make_grid(1, 256, 64.0)?)));
                s.p = 2.0;
                s.k_sweep = vec![4, 5];
                s.u_sweep = vec![1.5, 2.0, 4.0, 8.0, 16.0];
                let r = run_scenario(&s)?;
                let top = r.rows.iter().map(|r| r.upper).fold(0.0, f64::max);
                let e = r.fit.map_or(f64::NAN, |f| f.exponent);
                vec![("max_norm_minus_1", top - 1.0, top <= 1.0 + 1e-8), ("exponent", e, e.abs() <= 0.02)]
            }
            "exact_power_fit" => {
                let rows: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0, 8.0, 16.0].iter().map(|u| (*u, u.sqrt())).collect();
                let f = fit_growth_exponent(&rows)?;
                let flat = fit_growth_exponent(&rows.iter().map(|r| (r.0, 2.0)).collect::<Vec<_>>())?;
                vec![("sqrt_law", f.exponent - 0.5, (f.exponent - 0.5).abs() <= 1e-12), ("constant", flat.exponent, flat.exponent.abs() <= 1e-12)]
            }
            "zero_potential_kato" => {
                let k = kato_norm(&PotentialSpec::zero(), 0.2, 3)?;
                vec![("kato_norm", k, k == 0.0)]
            }
            "identity_commutes" => {
                let id = LinearGridOperator::identity(*lap.space());
                let c = crate::operators::max_abs(&ad(&id, 0)?.matrix());
                let h = crate::operators::max_abs(&ad(&heat_semigroup(&lap, 0.0)?, 0)?.matrix());
                vec![("ad_identity", c, c == 0.0), ("ad_heat_t0", h, h <= 1e-12)]
            }
            "amalgam_diagonal" => {
                let f = GridFunction::from_fn(grid, |x| Complex64::new(1.0 + x[0].cos(), 0.0));
                let a = amalgam_norm(&f, 3.0, 3.0, 1)?;
                let l = f.lp_norm(3.0)?;
                let c = embedding_constant(2.0, 2.0, 0, 1)?;
                vec![("x33_equals_l3", (a - l).abs() / l, (a - l).abs() <= 1e-12 * l), ("embedding_p_eq_q", c, c == 1.0)]
            }
            "bracket_exact_p2" => {
                let b = norm_bracket(&heat_semigroup(&lap, 0.5)?, 2.0)?;
                vec![("width", b.upper - b.lower, b.upper == b.lower), ("norm", b.upper, (b.upper - 1.0).abs() <= 1e-12)]
            }
            "cache_key" => {
                let a = cache_key(&json!({"x": 1, "y": [1, 2], "seed": 3}));
                let b = cache_key(&json!({"seed": 3, "y": [1, 2], "x": 1}));
                let c = cache_key(&json!({"x": 1, "y": [1, 2], "seed": 4}));
                vec![("reordered_equal", 0.0, a == b), ("seed_changes_key", 0.0, a != c)]
            }
            other => return Err(LabError::InvalidArgument(format!("unknown self check {other}"))),
        };
        Ok(check_outcome(&self.name, checks))
    }
}

fn selftest_suite() -> Vec<SelfCheck> {
    [
        "unitarity",
        "p2_growth_flat",
        "exact_power_fit",
        "zero_potential_kato",
        "identity_commutes",
        "amalgam_diagonal",
        "bracket_exact_p2",
        "cache_key",
    ]
    .iter()
    .map(|n| SelfCheck { name: (*n).into() })
    .collect()
}

/// Names of the subcommands, for usage text and tests.
pub const SUBCOMMANDS: [&str; 9] = [
    "check-assumption",
    "growth",
    "uniformity",
    "sobolev",
    "kernel-decay",
    "fourier-decay",
    "kato",
    "commutators",
    "selftest",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_keys_are_canonical() {
        let a = cache_key(&json!({"b": {"y": 1, "x": 2}, "a": [3, {"q": 1, "p": 2}]}));
        let b = cache_key(&json!({"a": [3, {"p": 2, "q": 1}], "b": {"x": 2, "y": 1}}));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_ne!(a, cache_key(&json!({"a": [3, {"p": 2, "q": 1}], "b": {"x": 2, "y": 2}})));
    }

    #[test]
    fn run_config_round_trip_and_unknown_keys() {
        let cfg = defaults::growth().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig<EstimateScenario> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let bad = text.replacen("\"scenarios\"", "\"scenarioz\"", 1);
        assert!(serde_json::from_str::<RunConfig<EstimateScenario>>(&bad).is_err());
        let cfg = defaults::commutators().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig<CommutatorScenario>>(&text).unwrap(), cfg);
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        let leftovers: Vec<_> = fs::read_dir(p.parent().unwrap()).unwrap().filter_map(|e| e.ok()).collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn unknown_subcommand_is_an_error() {
        assert_eq!(run(["spectral-lab", "frobnicate"]), 1);
        assert_eq!(run(["spectral-lab"]), 1);
    }
}
