//! CSV ingestion, the TOML run configuration and report rendering.
//!
//! A configuration for `fit` and `test`:
//!
//! ```toml
//! [data]
//! path = "prater.csv"          # relative to the config file
//! response = "yield"
//!
//! [mean]
//! link = "logit"
//! formula = "b0 + b1*temp"
//! parameters = ["b0", "b1"]
//!
//! [precision]
//! link = "log"
//! formula = "t0 + t1*temp"
//! parameters = ["t0", "t1"]
//!
//! corrections = ["cox_snell", "firth", "pboot", "npboot", "pboot_direct", "npboot_direct"]
//!
//! [bootstrap]
//! replications = 200
//! seed = 1
//!
//! [[tests]]
//! name = "constant precision slope"
//! fixed = { t1 = 0.0 }
//!
//! [output]
//! format = "text"              # text | csv | structured
//! ```
//!
//! `corrections` must appear before the first `[section]` header.
//! For `simulate`, a `[scenario]` section replaces `data`, `mean` and `precision`:
//!
//! ```toml
//! [scenario]
//! preset = "experiment1"       # experiment1_reference, experiment2, or give
//!                              # mean/precision/truth/covariates
//! n = 20
//! replications = 1000
//! bootstrap_b = 200
//! seed = 2024
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bias::{cox_snell_bias, ingredients};
use crate::bootstrap::{bootstrap, BootstrapPlan, BootstrapResult, Scheme, DEFAULT_FAILURE_FRACTION};
use crate::error::{Error, Result};
use crate::fit::{fit_firth_from, fit_mle, lrt_with, score_test, wald_ci, FitOptions, FitResult, Start, TestResult};
use crate::formula::Formula;
use crate::harness::{linearize_and_compare, run_scenario, CovariateGen, EstimatorSet, EstimatorSummary, Scenario, HARNESS_FAILURE_FRACTION, REFERENCE_X1};
use crate::likelihood::{information, BoundModel, Dataset, ModelSpec};
use crate::links::{MeanLink, PrecisionLink};
use crate::muphi::{corrected_mu_phi, CorrectionInputs, CorrectionScheme};

fn csv_error(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Parses CSV text with a header row. Every column must be numeric. Rows are
/// numbered from 1, counting data rows only.
pub fn parse_csv<R: std::io::Read>(reader: R, response: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(0, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let response_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::InvalidData(format!("response column '{response}' is not in the header")))?;
    let mut columns = vec![Vec::new(); headers.len()];
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(row, "", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(csv_error(row, "", format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field
                .parse()
                .map_err(|_| csv_error(row, &headers[j], format!("'{field}' is not a number")))?;
            if j == response_col && !(value > 0.0 && value < 1.0) {
                return Err(Error::ResponseOutOfRange { row, value });
            }
            columns[j].push(value);
        }
    }
    let y = columns[response_col].clone();
    let covariates = headers
        .into_iter()
        .zip(columns)
        .enumerate()
        .filter(|(j, _)| *j != response_col)
        .map(|(_, c)| c)
        .collect();
    Dataset::new(y, covariates)
}

pub fn load_csv(path: &Path, response: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(std::io::BufReader::new(file), response)
}

/// CSV text for a dataset, response first, at full precision.
pub fn dataset_to_csv(data: &Dataset, response: &str) -> String {
    let mut out = String::from(response);
    for name in data.column_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..data.n() {
        let _ = write!(out, "{}", data.y()[i]);
        for name in data.column_names() {
            let _ = write!(out, ",{}", data.column(name).expect("listed column")[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Csv,
    #[serde(alias = "json")]
    Structured,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "structured" | "json" => Ok(Format::Structured),
            other => Err(Error::Config(format!("unknown format '{other}' (text, csv, structured)"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub response: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig<L> {
    pub link: L,
    pub formula: String,
    pub parameters: Vec<String>,
    /// Optional start values, one per parameter.
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub seed: u64,
    pub max_failure_fraction: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replications: 200,
            seed: 1,
            max_failure_fraction: DEFAULT_FAILURE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub grad_tolerance: f64,
    pub max_iterations: usize,
    /// Coverage of the Wald intervals.
    pub level: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = FitOptions::default();
        FitConfig {
            grad_tolerance: d.grad_tolerance,
            max_iterations: d.max_iterations,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub name: Option<String>,
    /// Parameters held at these values under the null.
    pub fixed: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: Format,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CovariateConfig {
    Normal { name: String },
    Uniform { name: String, low: f64, high: f64 },
    Exponential { name: String, mean: f64 },
    Fixed { name: String, values: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub preset: Option<String>,
    pub name: Option<String>,
    pub n: usize,
    pub replications: usize,
    #[serde(default)]
    pub bootstrap_b: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub firth: bool,
    #[serde(default = "yes")]
    pub pboot: bool,
    #[serde(default = "yes")]
    pub npboot: bool,
    #[serde(default = "harness_fraction")]
    pub bootstrap_failure_fraction: f64,
    /// Also fit the linearized power-law model on the same draws.
    #[serde(default)]
    pub compare_linearized: bool,
    pub mean: Option<PredictorConfig<MeanLink>>,
    pub precision: Option<PredictorConfig<PrecisionLink>>,
    pub truth: Option<BTreeMap<String, f64>>,
    pub covariates: Option<Vec<CovariateConfig>>,
}

fn yes() -> bool {
    true
}

fn harness_fraction() -> f64 {
    HARNESS_FAILURE_FRACTION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<DataConfig>,
    pub mean: Option<PredictorConfig<MeanLink>>,
    pub precision: Option<PredictorConfig<PrecisionLink>>,
    #[serde(default)]
    pub corrections: Vec<CorrectionScheme>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub tests: Vec<TestConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    pub scenario: Option<ScenarioConfig>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let d = self.data.as_ref().ok_or_else(|| Error::Config("missing [data] section".into()))?;
        load_csv(&self.resolve(&d.path), &d.response)
    }

    fn fit_options(&self) -> Result<FitOptions> {
        let mut opts = FitOptions {
            grad_tolerance: self.fit.grad_tolerance,
            max_iterations: self.fit.max_iterations,
            ..FitOptions::default()
        };
        let starts = (
            self.mean.as_ref().and_then(|m| m.start.clone()),
            self.precision.as_ref().and_then(|p| p.start.clone()),
        );
        match starts {
            (Some(a), Some(b)) => opts.start = Start::User(a.into_iter().chain(b).collect()),
            (None, None) => {}
            _ => return Err(Error::Config("give start values for both predictors or neither".into())),
        }
        Ok(opts)
    }
}

fn build_spec(mean: &PredictorConfig<MeanLink>, precision: &PredictorConfig<PrecisionLink>, covariates: &[String]) -> Result<ModelSpec> {
    ModelSpec::new(
        mean.link,
        Formula::parse(&mean.formula, &mean.parameters, covariates)?,
        precision.link,
        Formula::parse(&precision.formula, &precision.parameters, covariates)?,
    )
}

/// Model specification against the dataset's covariate columns.
pub fn model_spec(cfg: &RunConfig, data: &Dataset) -> Result<ModelSpec> {
    let mean = cfg.mean.as_ref().ok_or_else(|| Error::Config("missing [mean] section".into()))?;
    let precision = cfg.precision.as_ref().ok_or_else(|| Error::Config("missing [precision] section".into()))?;
    build_spec(mean, precision, data.column_names())
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterRow {
    pub name: String,
    /// One entry per parameter-level scheme; `None` when that scheme failed.
    pub estimates: Vec<Option<f64>>,
    /// Square roots of the inverse-information diagonal at each estimate.
    pub std_errors: Vec<Option<f64>>,
    pub wald_low: f64,
    pub wald_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservationRow {
    pub index: usize,
    pub y: f64,
    pub mu: Vec<Option<f64>>,
    pub phi: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeNote {
    pub scheme: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestRow {
    pub name: String,
    pub fixed: BTreeMap<String, f64>,
    pub lrt: TestResult,
    pub score: TestResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub mean_link: MeanLink,
    pub mean_formula: String,
    pub precision_link: PrecisionLink,
    pub precision_formula: String,
    pub loglik: f64,
    pub iterations: usize,
    pub wald_level: f64,
    pub parameter_schemes: Vec<String>,
    pub parameters: Vec<ParameterRow>,
    pub observation_schemes: Vec<String>,
    pub observations: Vec<ObservationRow>,
    pub tests: Vec<TestRow>,
    /// Failures, out-of-range corrected values and fit warnings.
    pub notes: Vec<SchemeNote>,
}

fn std_errors_at(spec: &ModelSpec, data: &Dataset, zeta: &[f64]) -> Option<Vec<f64>> {
    let ctx = BoundModel::new(spec, data).ok()?.context(zeta).ok()?;
    let info = information(&ctx).ok()?;
    Some((0..zeta.len()).map(|i| info.inverse[(i, i)].sqrt()).collect())
}

/// Fits the configured model, applies the requested corrections and runs the
/// configured tests.
pub fn fit_report(cfg: &RunConfig, seed: Option<u64>) -> Result<FitReport> {
    let data = cfg.load_data()?;
    let spec = model_spec(cfg, &data)?;
    let opts = cfg.fit_options()?;
    let mle = fit_mle(&spec, &data, &opts)?;
    let mut notes: Vec<SchemeNote> = mle
        .warnings
        .iter()
        .map(|w| SchemeNote {
            scheme: "mle".into(),
            message: w.clone(),
        })
        .collect();

    let wants = |s: CorrectionScheme| cfg.corrections.contains(&s);
    let mut model = BoundModel::new(&spec, &data)?;
    let ctx = model.context(mle.zeta_hat.as_slice())?;
    let info = information(&ctx)?;
    let ing = ingredients(&ctx, &info.inverse)?;
    let cs = cox_snell_bias(&ctx, &info)?;
    let mut record = |scheme: &str, e: Error| {
        notes.push(SchemeNote {
            scheme: scheme.into(),
            message: format!("[{}] {e}", e.code()),
        })
    };
    let firth = if wants(CorrectionScheme::Firth) {
        fit_firth_from(&spec, &data, &opts, &mle).map_err(|e| record("firth", e)).ok()
    } else {
        None
    };
    let seed = seed.unwrap_or(cfg.bootstrap.seed);
    let run_boot = |scheme: Scheme, seed: u64| -> Result<BootstrapResult> {
        let mut plan = BootstrapPlan::new(scheme, cfg.bootstrap.replications, seed);
        plan.refit_tolerance = opts.grad_tolerance;
        plan.max_failures = Some((cfg.bootstrap.max_failure_fraction * cfg.bootstrap.replications as f64).floor() as usize);
        bootstrap(&spec, &data, &mle, &plan)
    };
    let pboot = if wants(CorrectionScheme::Pboot) || wants(CorrectionScheme::PbootDirect) {
        run_boot(Scheme::Parametric, seed).map_err(|e| record("pboot", e)).ok()
    } else {
        None
    };
    // A distinct stream family for the second bootstrap.
    let npboot = if wants(CorrectionScheme::Npboot) || wants(CorrectionScheme::NpbootDirect) {
        run_boot(Scheme::Nonparametric, seed ^ 0x9e37_79b9_7f4a_7c15).map_err(|e| record("npboot", e)).ok()
    } else {
        None
    };
    for (name, boot) in [("pboot", &pboot), ("npboot", &npboot)] {
        if let Some(b) = boot {
            if b.n_failed > 0 {
                notes.push(SchemeNote {
                    scheme: name.into(),
                    message: format!("{} of {} refits failed and were dropped", b.n_failed, cfg.bootstrap.replications),
                });
            }
        }
    }

    let mut parameter_schemes = vec!["mle".to_string()];
    let mut estimates: Vec<Option<Vec<f64>>> = vec![Some(mle.zeta_hat.iter().copied().collect())];
    let mut add = |name: &str, on: bool, est: Option<Vec<f64>>| {
        if on {
            parameter_schemes.push(name.into());
            estimates.push(est);
        }
    };
    add("cox_snell", wants(CorrectionScheme::CoxSnell), Some((&mle.zeta_hat - &cs.b_zeta).iter().copied().collect()));
    add("firth", wants(CorrectionScheme::Firth), firth.as_ref().map(|f| f.zeta_hat.iter().copied().collect()));
    add("pboot", wants(CorrectionScheme::Pboot), pboot.as_ref().map(|b| b.corrected.iter().copied().collect()));
    add("npboot", wants(CorrectionScheme::Npboot), npboot.as_ref().map(|b| b.corrected.iter().copied().collect()));
    let ses: Vec<Option<Vec<f64>>> = estimates
        .iter()
        .map(|e| e.as_ref().and_then(|z| std_errors_at(&spec, &data, z)))
        .collect();
    let ci = wald_ci(&mle, cfg.fit.level)?;
    let parameters = spec
        .param_names()
        .into_iter()
        .enumerate()
        .map(|(j, name)| ParameterRow {
            name,
            estimates: estimates.iter().map(|e| e.as_ref().map(|v| v[j])).collect(),
            std_errors: ses.iter().map(|e| e.as_ref().map(|v| v[j])).collect(),
            wald_low: ci[j].0,
            wald_high: ci[j].1,
        })
        .collect();

    let inputs = CorrectionInputs {
        cox_snell: Some(&cs),
        firth: firth.as_ref(),
        pboot: pboot.as_ref(),
        npboot: npboot.as_ref(),
    };
    let mut observation_schemes = vec!["mle".to_string()];
    let mut mu_cols = vec![Some(ctx.mu.iter().copied().collect::<Vec<_>>())];
    let mut phi_cols = vec![Some(ctx.phi.iter().copied().collect::<Vec<_>>())];
    for scheme in CorrectionScheme::ALL.into_iter().filter(|s| wants(*s)) {
        observation_schemes.push(scheme.name().into());
        match corrected_mu_phi(scheme, &ctx, &ing, &mle, &inputs) {
            Ok(c) => {
                if !c.mu_out_of_range.is_empty() || !c.phi_out_of_range.is_empty() {
                    notes.push(SchemeNote {
                        scheme: scheme.name().into(),
                        message: format!(
                            "corrected values out of range: mu at rows {:?}, phi at rows {:?}",
                            c.mu_out_of_range.iter().map(|i| i + 1).collect::<Vec<_>>(),
                            c.phi_out_of_range.iter().map(|i| i + 1).collect::<Vec<_>>()
                        ),
                    });
                }
                mu_cols.push(Some(c.mu_corrected));
                phi_cols.push(Some(c.phi_corrected));
            }
            Err(_) => {
                mu_cols.push(None);
                phi_cols.push(None);
            }
        }
    }
    let observations = (0..data.n())
        .map(|i| ObservationRow {
            index: i + 1,
            y: data.y()[i],
            mu: mu_cols.iter().map(|c| c.as_ref().map(|v| v[i])).collect(),
            phi: phi_cols.iter().map(|c| c.as_ref().map(|v| v[i])).collect(),
        })
        .collect();

    let tests = run_tests(cfg, &spec, &data, &opts, &mle)?;
    Ok(FitReport {
        n: data.n(),
        mean_link: spec.mean_link,
        mean_formula: spec.mean.source().to_string(),
        precision_link: spec.precision_link,
        precision_formula: spec.precision.source().to_string(),
        loglik: mle.loglik,
        iterations: mle.iterations,
        wald_level: cfg.fit.level,
        parameter_schemes,
        parameters,
        observation_schemes,
        observations,
        tests,
        notes,
    })
}

fn run_tests(cfg: &RunConfig, spec: &ModelSpec, data: &Dataset, opts: &FitOptions, mle: &FitResult) -> Result<Vec<TestRow>> {
    cfg.tests
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let fixed: Vec<(String, f64)> = t.fixed.iter().map(|(k, v)| (k.clone(), *v)).collect();
            Ok(TestRow {
                name: t.name.clone().unwrap_or_else(|| format!("test{}", i + 1)),
                fixed: t.fixed.clone(),
                lrt: lrt_with(spec, &fixed, data, opts, mle)?,
                score: score_test(spec, &fixed, data, opts)?,
            })
        })
        .collect()
}

/// Maximum likelihood fit and the configured tests only.
pub fn test_report(cfg: &RunConfig) -> Result<FitReport> {
    if cfg.tests.is_empty() {
        return Err(Error::Config("no [[tests]] entries in the configuration".into()));
    }
    let mut only_tests = cfg.clone();
    only_tests.corrections.clear();
    fit_report(&only_tests, None)
}

fn opt(v: Option<f64>, width: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.5}"),
        None => format!("{:>width$}", "-"),
    }
}

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl FitReport {
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Text => Ok(self.to_text()),
            Format::Csv => Ok(self.to_csv()),
            Format::Structured => serde_json::to_string_pretty(self).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string())),
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mean:      {}(mu) = {}", self.mean_link, self.mean_formula);
        let _ = writeln!(out, "precision: {}(phi) = {}", self.precision_link, self.precision_formula);
        let _ = writeln!(out, "n = {}, log-likelihood = {:.5}, iterations = {}", self.n, self.loglik, self.iterations);
        let _ = write!(out, "\n{:<12}", "parameter");
        for s in &self.parameter_schemes {
            let _ = write!(out, " {s:>12}");
        }
        let _ = writeln!(out, "   wald {:.0}% interval", 100.0 * self.wald_level);
        for row in &self.parameters {
            let _ = write!(out, "{:<12}", row.name);
            for e in &row.estimates {
                out.push(' ');
                out.push_str(&opt(*e, 12));
            }
            let _ = writeln!(out, "   ({:.5}, {:.5})", row.wald_low, row.wald_high);
            let _ = write!(out, "{:<12}", "");
            for se in &row.std_errors {
                let cell = se.map(|v| format!("({v:.5})")).unwrap_or_else(|| "-".into());
                let _ = write!(out, " {cell:>12}");
            }
            out.push('\n');
        }
        let _ = write!(out, "\n{:<5} {:>9}", "obs", "y");
        for s in &self.observation_schemes {
            let _ = write!(out, " {:>14} {:>14}", format!("mu {s}"), format!("phi {s}"));
        }
        out.push('\n');
        for row in &self.observations {
            let _ = write!(out, "{:<5} {:>9.5}", row.index, row.y);
            for (m, p) in row.mu.iter().zip(&row.phi) {
                let _ = write!(out, " {} {}", opt(*m, 14), opt(*p, 14));
            }
            out.push('\n');
        }
        if !self.tests.is_empty() {
            out.push_str("\ntests\n");
            for t in &self.tests {
                let fixed: Vec<String> = t.fixed.iter().map(|(k, v)| format!("{k} = {v}")).collect();
                let _ = writeln!(out, "{} (null: {})", t.name, fixed.join(", "));
                for (label, r) in [("likelihood ratio", &t.lrt), ("score", &t.score)] {
                    let _ = writeln!(out, "  {label:<17} {:>12.5}  df {}  p-value {:.5}", r.statistic, r.df, r.p_value);
                }
            }
        }
        if !self.notes.is_empty() {
            out.push_str("\nnotes\n");
            for n in &self.notes {
                let _ = writeln!(out, "  {}: {}", n.scheme, n.message);
            }
        }
        out
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("section,item,scheme,quantity,value\n");
        for row in &self.parameters {
            for (s, scheme) in self.parameter_schemes.iter().enumerate() {
                let _ = writeln!(out, "parameter,{},{scheme},estimate,{}", row.name, csv_opt(row.estimates[s]));
                let _ = writeln!(out, "parameter,{},{scheme},std_error,{}", row.name, csv_opt(row.std_errors[s]));
            }
            let _ = writeln!(out, "parameter,{},mle,wald_low,{}", row.name, row.wald_low);
            let _ = writeln!(out, "parameter,{},mle,wald_high,{}", row.name, row.wald_high);
        }
        for row in &self.observations {
            let _ = writeln!(out, "observation,{},data,y,{}", row.index, row.y);
            for (s, scheme) in self.observation_schemes.iter().enumerate() {
                let _ = writeln!(out, "observation,{},{scheme},mu,{}", row.index, csv_opt(row.mu[s]));
                let _ = writeln!(out, "observation,{},{scheme},phi,{}", row.index, csv_opt(row.phi[s]));
            }
        }
        for t in &self.tests {
            for (label, r) in [("lrt", &t.lrt), ("score", &t.score)] {
                let _ = writeln!(out, "test,{},{label},statistic,{}", t.name, r.statistic);
                let _ = writeln!(out, "test,{},{label},df,{}", t.name, r.df);
                let _ = writeln!(out, "test,{},{label},p_value,{}", t.name, r.p_value);
            }
        }
        out
    }
}

fn preset(cfg: &ScenarioConfig) -> Result<Scenario> {
    match cfg.preset.as_deref() {
        Some("experiment1") => Ok(Scenario::experiment1(cfg.n, cfg.replications, cfg.bootstrap_b, cfg.seed)),
        Some("experiment1_reference") => {
            if cfg.n != REFERENCE_X1.len() {
                return Err(Error::Config(format!("the reference design has n = {}", REFERENCE_X1.len())));
            }
            Ok(Scenario::experiment1_reference(cfg.replications, cfg.bootstrap_b, cfg.seed))
        }
        Some("experiment2") => Ok(Scenario::experiment2(cfg.n, cfg.replications, cfg.bootstrap_b, cfg.seed)),
        Some(other) => Err(Error::Config(format!("unknown preset '{other}' (experiment1, experiment1_reference, experiment2)"))),
        None => {
            let missing = |s: &str| Error::Config(format!("scenario without a preset needs '{s}'"));
            let covs = cfg.covariates.as_ref().ok_or_else(|| missing("covariates"))?;
            let covariates: Vec<(String, CovariateGen)> = covs
                .iter()
                .map(|c| match c {
                    CovariateConfig::Normal { name } => (name.clone(), CovariateGen::Normal),
                    CovariateConfig::Uniform { name, low, high } => (name.clone(), CovariateGen::Uniform { low: *low, high: *high }),
                    CovariateConfig::Exponential { name, mean } => (name.clone(), CovariateGen::Exponential { mean: *mean }),
                    CovariateConfig::Fixed { name, values } => (name.clone(), CovariateGen::Fixed { values: values.clone() }),
                })
                .collect();
            let names: Vec<String> = covariates.iter().map(|(n, _)| n.clone()).collect();
            let spec = build_spec(
                cfg.mean.as_ref().ok_or_else(|| missing("mean"))?,
                cfg.precision.as_ref().ok_or_else(|| missing("precision"))?,
                &names,
            )?;
            let truth = cfg.truth.as_ref().ok_or_else(|| missing("truth"))?;
            let true_zeta = spec
                .param_names()
                .iter()
                .map(|p| truth.get(p).copied().ok_or_else(|| Error::Config(format!("no true value for '{p}'"))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(extra) = truth.keys().find(|k| spec.param_index(k).is_none()) {
                return Err(Error::Config(format!("true value given for unknown parameter '{extra}'")));
            }
            Ok(Scenario {
                name: "custom".into(),
                spec,
                true_zeta,
                n: cfg.n,
                replications: cfg.replications,
                bootstrap_b: cfg.bootstrap_b,
                covariates,
                master_seed: cfg.seed,
                estimators: EstimatorSet::default(),
                bootstrap_failure_fraction: HARNESS_FAILURE_FRACTION,
            })
        }
    }
}

/// Scenario from the `[scenario]` section, with an optional seed override.
pub fn scenario_from_config(cfg: &RunConfig, seed: Option<u64>) -> Result<Scenario> {
    let sc = cfg.scenario.as_ref().ok_or_else(|| Error::Config("missing [scenario] section".into()))?;
    let mut s = preset(sc)?;
    if let Some(name) = &sc.name {
        s.name = name.clone();
    }
    s.estimators = EstimatorSet {
        firth: sc.firth,
        pboot: sc.pboot,
        npboot: sc.npboot,
    };
    s.bootstrap_failure_fraction = sc.bootstrap_failure_fraction;
    if let Some(seed) = seed {
        s.master_seed = seed;
    }
    Ok(s)
}

pub fn simulate(cfg: &RunConfig, seed: Option<u64>) -> Result<Vec<EstimatorSummary>> {
    let s = scenario_from_config(cfg, seed)?;
    if cfg.scenario.as_ref().is_some_and(|sc| sc.compare_linearized) {
        let (non, lin) = linearize_and_compare(&s)?;
        Ok(vec![non, lin])
    } else {
        Ok(vec![run_scenario(&s)?])
    }
}

pub fn render_summaries(summaries: &[EstimatorSummary], format: Format) -> Result<String> {
    match format {
        Format::Text => Ok(summaries.iter().map(|s| s.to_text()).collect::<Vec<_>>().join("\n")),
        Format::Csv => {
            let mut out = String::new();
            for (i, s) in summaries.iter().enumerate() {
                let csv = s.to_csv();
                // One header for the whole file.
                out.push_str(if i == 0 { &csv } else { csv.split_once('\n').map_or("", |(_, rest)| rest) });
            }
            Ok(out)
        }
        Format::Structured => serde_json::to_string_pretty(summaries).map(|s| s + "\n").map_err(|e| Error::Io(e.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Test,
    Simulate,
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

/// Runs a command and writes the report to the configured destination.
/// Returns the report text when it goes to standard output.
pub fn run(command: Command, cfg: &RunConfig, overrides: &Overrides) -> Result<Option<String>> {
    let format = overrides.format.unwrap_or(cfg.output.format);
    let text = match command {
        Command::Fit => fit_report(cfg, overrides.seed)?.render(format)?,
        Command::Test => test_report(cfg)?.render(format)?,
        Command::Simulate => render_summaries(&simulate(cfg, overrides.seed)?, format)?,
    };
    let path = overrides.output.clone().or_else(|| cfg.output.path.as_ref().map(|p| cfg.resolve(p)));
    match path {
        Some(p) => {
            std::fs::write(&p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Ok(None)
        }
        None => Ok(Some(text)),
    }
}
