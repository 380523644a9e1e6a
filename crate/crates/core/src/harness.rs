//! Monte Carlo driver: simulate responses from a true parameter with fixed
//! covariates, compute every estimator per replication and aggregate bias,
//! variance and mean squared error.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{cox_snell_bias, ingredients};
use crate::bootstrap::{bootstrap, replicate_rng, sample_beta, BootstrapPlan, Scheme};
use crate::error::{Error, Result};
use crate::fit::{fit_firth_from, fit_mle, Convergence, FitOptions};
use crate::formula::Formula;
use crate::likelihood::{information, BoundModel, Dataset, ModelSpec};
use crate::links::{MeanLink, PrecisionLink};
use crate::muphi::{corrected_mu_phi, CorrectionInputs, CorrectionScheme};

/// Stream index reserved for the covariate draw; replications use 0, 1, 2, ...
const COVARIATE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovariateGen {
    Normal,
    Uniform { low: f64, high: f64 },
    Exponential { mean: f64 },
    /// Given values, one per observation.
    Fixed { values: Vec<f64> },
}

impl CovariateGen {
    fn draw<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        match self {
            CovariateGen::Normal => Ok((0..n).map(|_| rng.sample(StandardNormal)).collect()),
            &CovariateGen::Uniform { low, high } => {
                let d = Uniform::new(low, high).map_err(|e| Error::Config(format!("uniform({low}, {high}): {e}")))?;
                Ok((0..n).map(|_| d.sample(rng)).collect())
            }
            &CovariateGen::Exponential { mean } => {
                let d = Exp::new(1.0 / mean).map_err(|e| Error::Config(format!("exponential({mean}): {e}")))?;
                Ok((0..n).map(|_| d.sample(rng)).collect())
            }
            CovariateGen::Fixed { values } if values.len() == n => Ok(values.clone()),
            CovariateGen::Fixed { values } => Err(Error::Config(format!("{} fixed covariate values for n = {n}", values.len()))),
        }
    }
}

/// Which estimators each replication computes besides the MLE and Cox-Snell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorSet {
    pub firth: bool,
    pub pboot: bool,
    pub npboot: bool,
}

impl Default for EstimatorSet {
    fn default() -> Self {
        EstimatorSet {
            firth: true,
            pboot: true,
            npboot: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub spec: ModelSpec,
    pub true_zeta: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    pub bootstrap_b: usize,
    pub covariates: Vec<(String, CovariateGen)>,
    pub master_seed: u64,
    pub estimators: EstimatorSet,
    /// Largest fraction of failed refits a bootstrap may have before that
    /// bootstrap counts as failed for the replication.
    pub bootstrap_failure_fraction: f64,
}

/// Nonparametric resamples of the standard designs duplicate rows often
/// enough that 5-25% of refits have no finite maximum.
pub const HARNESS_FAILURE_FRACTION: f64 = 0.5;

pub fn experiment1_spec() -> ModelSpec {
    ModelSpec::new(
        MeanLink::Logit,
        Formula::parse("b0 + b1*x1 + x2^b2", &["b0", "b1", "b2"], &["x1", "x2"]).expect("valid formula"),
        PrecisionLink::Log,
        Formula::parse("t0 + t1*x1 + x2^t2", &["t0", "t1", "t2"], &["x1", "x2"]).expect("valid formula"),
    )
    .expect("valid model")
}

pub fn experiment2_spec() -> ModelSpec {
    ModelSpec::new(
        MeanLink::Logit,
        Formula::parse("b0*x^b1", &["b0", "b1"], &["x"]).expect("valid formula"),
        PrecisionLink::Identity,
        Formula::parse("t0*x^t1", &["t0", "t1"], &["x"]).expect("valid formula"),
    )
    .expect("valid model")
}

/// A standard-normal and a U(1, 2) column for n = 20, solved back from a
/// reference table of true precisions and average fitted means for this
/// experiment. Small-sample bias in this model depends strongly on the
/// design, so this is the one to compare against reference results.
pub const REFERENCE_X1: [f64; 20] = [
    0.2128, 1.6506, -0.2759, -0.9395, -0.7301, -0.3505, 0.2036, -0.1440, -0.1933, 0.6426, 0.0919, -0.8459, 0.7537, 1.0819, 0.3172,
    -0.5420, -1.6896, 0.8930, -1.5537, -1.9459,
];
pub const REFERENCE_X2: [f64; 20] = [
    1.9628, 1.6468, 1.2622, 1.6988, 1.3939, 1.9665, 1.4866, 1.9115, 1.9918, 1.4590, 1.9114, 1.8762, 1.3720, 1.6755, 1.7673, 1.4222,
    1.7556, 1.0000, 1.4667, 1.4213,
];

impl Scenario {
    /// The first experiment at n = 20 on the fixed reference design.
    pub fn experiment1_reference(replications: usize, bootstrap_b: usize, master_seed: u64) -> Scenario {
        let mut s = Scenario::experiment1(REFERENCE_X1.len(), replications, bootstrap_b, master_seed);
        s.name = "experiment1_reference".into();
        s.covariates = vec![
            ("x1".into(), CovariateGen::Fixed { values: REFERENCE_X1.to_vec() }),
            ("x2".into(), CovariateGen::Fixed { values: REFERENCE_X2.to_vec() }),
        ];
        s
    }

    /// Nonlinear mean and precision with a power term in a uniform covariate.
    pub fn experiment1(n: usize, replications: usize, bootstrap_b: usize, master_seed: u64) -> Scenario {
        Scenario {
            name: "experiment1".into(),
            spec: experiment1_spec(),
            true_zeta: vec![1.5, 0.5, 2.0, 1.7, 0.7, 3.0],
            n,
            replications,
            bootstrap_b,
            covariates: vec![
                ("x1".into(), CovariateGen::Normal),
                ("x2".into(), CovariateGen::Uniform { low: 1.0, high: 2.0 }),
            ],
            master_seed,
            estimators: EstimatorSet::default(),
            bootstrap_failure_fraction: HARNESS_FAILURE_FRACTION,
        }
    }

    /// Power-law mean and precision in an exponential covariate.
    pub fn experiment2(n: usize, replications: usize, bootstrap_b: usize, master_seed: u64) -> Scenario {
        Scenario {
            name: "experiment2".into(),
            spec: experiment2_spec(),
            true_zeta: vec![0.7, 0.5, 100.0, 2.0],
            n,
            replications,
            bootstrap_b,
            covariates: vec![("x".into(), CovariateGen::Exponential { mean: 1.0 })],
            master_seed,
            estimators: EstimatorSet::default(),
            bootstrap_failure_fraction: HARNESS_FAILURE_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.true_zeta.len() != self.spec.n_params() {
            return Err(Error::Config(format!(
                "true parameter has {} values, model has {}",
                self.true_zeta.len(),
                self.spec.n_params()
            )));
        }
        if !(0.0..1.0).contains(&self.bootstrap_failure_fraction) {
            return Err(Error::Config("bootstrap failure fraction must lie in [0, 1)".into()));
        }
        if (self.estimators.pboot || self.estimators.npboot) && self.bootstrap_b == 0 {
            return Err(Error::Config("bootstrap estimators need bootstrap_b >= 1".into()));
        }
        Ok(())
    }

    /// Covariates, drawn once from the master seed.
    pub fn design(&self) -> Result<Vec<(String, Vec<f64>)>> {
        let mut rng = replicate_rng(self.master_seed, COVARIATE_STREAM);
        self.covariates
            .iter()
            .map(|(name, gen)| Ok((name.clone(), gen.draw(&mut rng, self.n)?)))
            .collect()
    }
}

/// How a fitted parameter maps back to the reported scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Exp,
}

impl Transform {
    fn apply(self, v: f64) -> f64 {
        match self {
            Transform::Identity => v,
            Transform::Exp => v.exp(),
        }
    }
}

/// A model fitted to the simulated data, possibly a reparameterization of the
/// generating one.
#[derive(Debug, Clone)]
pub struct FitVariant {
    pub name: String,
    pub spec: ModelSpec,
    /// One transform per parameter, taking fitted values to the generating scale.
    pub transforms: Vec<Transform>,
}

impl FitVariant {
    pub fn same_as(s: &Scenario) -> FitVariant {
        FitVariant {
            name: "nonlinear".into(),
            spec: s.spec.clone(),
            transforms: vec![Transform::Identity; s.spec.n_params()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    /// Number of replications contributing.
    pub count: usize,
    pub mean: f64,
    pub bias: f64,
    pub variance: f64,
    pub mse: f64,
}

impl Stats {
    /// Population moments; all NaN when there are no samples.
    fn from_samples(samples: &[f64], truth: f64) -> Stats {
        let r = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / r;
        let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / r;
        let mse = samples.iter().map(|s| (s - truth).powi(2)).sum::<f64>() / r;
        Stats {
            count: samples.len(),
            mean,
            bias: mean - truth,
            variance,
            mse,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub scenario: String,
    pub variant: String,
    pub n: usize,
    pub bootstrap_b: usize,
    pub param_names: Vec<String>,
    pub truth: Vec<f64>,
    pub estimators: Vec<String>,
    /// Replications contributing to each estimator.
    pub estimator_counts: Vec<usize>,
    /// Indexed by estimator, then parameter.
    pub params: Vec<Vec<Stats>>,
    pub observation_schemes: Vec<String>,
    pub mu_truth: Vec<f64>,
    pub phi_truth: Vec<f64>,
    /// Indexed by scheme, then observation.
    pub mu: Vec<Vec<Stats>>,
    pub phi: Vec<Vec<Stats>>,
    pub replications_ok: usize,
    pub replications_failed: usize,
    /// Failure counts keyed by error code.
    pub failures: BTreeMap<String, usize>,
}

impl EstimatorSummary {
    pub fn estimator_index(&self, name: &str) -> Option<usize> {
        self.estimators.iter().position(|e| e == name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|e| e == name)
    }

    /// Statistics of one estimator for one parameter.
    pub fn get(&self, estimator: &str, param: &str) -> Option<Stats> {
        Some(self.params[self.estimator_index(estimator)?][self.param_index(param)?])
    }

    pub fn scheme_index(&self, name: &str) -> Option<usize> {
        self.observation_schemes.iter().position(|e| e == name)
    }

    /// Aligned text tables with five decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} ({}): n = {}, replications = {} ok / {} failed, bootstrap B = {}",
            self.scenario, self.variant, self.n, self.replications_ok, self.replications_failed, self.bootstrap_b
        );
        for (code, count) in &self.failures {
            let _ = writeln!(out, "  failures {code}: {count}");
        }
        let _ = write!(out, "\n{:<10} {:<9}", "parameter", "measure");
        for e in &self.estimators {
            let _ = write!(out, " {e:>14}");
        }
        out.push('\n');
        for (j, name) in self.param_names.iter().enumerate() {
            let label = format!("{name} ({:.5})", self.truth[j]);
            for (m, measure) in ["mean", "bias", "variance", "mse"].iter().enumerate() {
                let _ = write!(out, "{:<10} {measure:<9}", if m == 0 { label.as_str() } else { "" });
                for row in &self.params {
                    let s = row[j];
                    let v = [s.mean, s.bias, s.variance, s.mse][m];
                    let _ = write!(out, " {v:>14.5}");
                }
                out.push('\n');
            }
        }
        for (label, truth, table) in [("mu", &self.mu_truth, &self.mu), ("phi", &self.phi_truth, &self.phi)] {
            let _ = write!(out, "\n{:<4} {:>12}", "obs", format!("{label} true"));
            for s in &self.observation_schemes {
                let _ = write!(out, " {:>14} {:>14}", format!("{s} mean"), format!("{s} mse"));
            }
            out.push('\n');
            for (i, t) in truth.iter().enumerate() {
                let _ = write!(out, "{:<4} {t:>12.5}", i + 1);
                for col in table {
                    let _ = write!(out, " {:>14.5} {:>14.5}", col[i].mean, col[i].mse);
                }
                out.push('\n');
            }
        }
        out
    }

    /// Long-format CSV with full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,variant,section,item,truth,estimator,mean,bias,variance,mse\n");
        let mut row = |section: &str, item: &str, truth: f64, est: &str, s: &Stats| {
            let _ = writeln!(
                out,
                "{},{},{section},{item},{truth},{est},{},{},{},{}",
                self.scenario, self.variant, s.mean, s.bias, s.variance, s.mse
            );
        };
        for (e, est) in self.estimators.iter().enumerate() {
            for (j, name) in self.param_names.iter().enumerate() {
                row("parameter", name, self.truth[j], est, &self.params[e][j]);
            }
        }
        for (section, truth, table) in [("mu", &self.mu_truth, &self.mu), ("phi", &self.phi_truth, &self.phi)] {
            for (s, scheme) in self.observation_schemes.iter().enumerate() {
                for (i, t) in truth.iter().enumerate() {
                    row(section, &(i + 1).to_string(), *t, scheme, &table[s][i]);
                }
            }
        }
        out
    }
}

fn estimator_names(set: EstimatorSet) -> Vec<String> {
    let mut v = vec!["mle".to_string(), "cox_snell".to_string()];
    if set.firth {
        v.push("firth".into());
    }
    if set.pboot {
        v.push("pboot".into());
    }
    if set.npboot {
        v.push("npboot".into());
    }
    v
}

fn observation_schemes(set: EstimatorSet) -> Vec<CorrectionScheme> {
    let mut v = vec![CorrectionScheme::CoxSnell];
    if set.firth {
        v.push(CorrectionScheme::Firth);
    }
    if set.pboot {
        v.push(CorrectionScheme::Pboot);
    }
    if set.npboot {
        v.push(CorrectionScheme::Npboot);
    }
    if set.pboot {
        v.push(CorrectionScheme::PbootDirect);
    }
    if set.npboot {
        v.push(CorrectionScheme::NpbootDirect);
    }
    v
}

struct Outcome {
    /// Per estimator, parameters on the generating scale; `None` where that
    /// estimator failed.
    params: Vec<Option<Vec<f64>>>,
    /// Per observation scheme (MLE first), fitted means and precisions.
    mu: Vec<Option<Vec<f64>>>,
    phi: Vec<Option<Vec<f64>>>,
    /// Error codes of the estimators that failed, prefixed by estimator.
    failures: Vec<String>,
}

fn note<T>(failures: &mut Vec<String>, name: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push(format!("{name}:{}", e.code()));
            None
        }
    }
}

fn estimate_all(variant: &FitVariant, data: &Dataset, s: &Scenario, seeds: (u64, u64)) -> Result<Outcome> {
    let (set, b) = (s.estimators, s.bootstrap_b);
    let spec = &variant.spec;
    let opts = FitOptions {
        convergence: Convergence::Decrement,
        ..FitOptions::default()
    };
    let mle = fit_mle(spec, data, &opts)?;
    let mut model = BoundModel::new(spec, data)?;
    let ctx = model.context(mle.zeta_hat.as_slice())?;
    let info = information(&ctx)?;
    let ing = ingredients(&ctx, &info.inverse)?;
    let cs = cox_snell_bias(&ctx, &info)?;
    let mut failures = Vec::new();
    let firth = if set.firth { note(&mut failures, "firth", fit_firth_from(spec, data, &opts, &mle)) } else { None };
    let run_boot = |scheme, seed| {
        let mut plan = BootstrapPlan::new(scheme, b, seed);
        plan.refit_tolerance = opts.grad_tolerance;
        plan.max_failures = Some((s.bootstrap_failure_fraction * b as f64).floor() as usize);
        bootstrap(spec, data, &mle, &plan)
    };
    let pboot = if set.pboot { note(&mut failures, "pboot", run_boot(Scheme::Parametric, seeds.0)) } else { None };
    let npboot = if set.npboot { note(&mut failures, "npboot", run_boot(Scheme::Nonparametric, seeds.1)) } else { None };

    let mut raw = vec![Some(mle.zeta_hat.clone()), Some(&mle.zeta_hat - &cs.b_zeta)];
    if set.firth {
        raw.push(firth.as_ref().map(|f| f.zeta_hat.clone()));
    }
    if set.pboot {
        raw.push(pboot.as_ref().map(|r| r.corrected.clone()));
    }
    if set.npboot {
        raw.push(npboot.as_ref().map(|r| r.corrected.clone()));
    }
    let inputs = CorrectionInputs {
        cox_snell: Some(&cs),
        firth: firth.as_ref(),
        pboot: pboot.as_ref(),
        npboot: npboot.as_ref(),
    };
    let mut mu = vec![Some(ctx.mu.iter().copied().collect::<Vec<_>>())];
    let mut phi = vec![Some(ctx.phi.iter().copied().collect::<Vec<_>>())];
    for scheme in observation_schemes(set) {
        match corrected_mu_phi(scheme, &ctx, &ing, &mle, &inputs) {
            Ok(c) => {
                mu.push(Some(c.mu_corrected));
                phi.push(Some(c.phi_corrected));
            }
            Err(Error::MissingPrerequisite(..)) => {
                mu.push(None);
                phi.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let params = raw
        .iter()
        .map(|z| {
            z.as_ref()
                .map(|z| z.iter().zip(&variant.transforms).map(|(v, t)| t.apply(*v)).collect())
        })
        .collect();
    Ok(Outcome {
        params,
        mu,
        phi,
        failures,
    })
}

/// Runs every variant on identical simulated data and summarizes each.
///
/// A replication whose maximum likelihood fit fails is dropped for every
/// estimator. Failures of the bias-reduced fit or of a bootstrap drop only
/// that estimator for the replication; each is counted under
/// `estimator:error_code`.
pub fn run_variants(s: &Scenario, variants: &[FitVariant]) -> Result<Vec<EstimatorSummary>> {
    s.validate()?;
    for v in variants {
        if v.transforms.len() != v.spec.n_params() {
            return Err(Error::Config(format!("variant '{}' needs one transform per parameter", v.name)));
        }
    }
    let design = s.design()?;
    let template = Dataset::new(vec![0.5; s.n], design)?;
    let (mu_true, phi_true) = BoundModel::new(&s.spec, &template)?.fitted(&s.true_zeta)?;

    let outcomes: Vec<Vec<std::result::Result<Outcome, String>>> = (0..s.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(s.master_seed, r as u64);
            let y: Result<Vec<f64>> = mu_true.iter().zip(&phi_true).map(|(m, p)| sample_beta(&mut rng, *m, *p)).collect();
            let seeds = (rng.random::<u64>(), rng.random::<u64>());
            let data = y.and_then(|y| template.with_response(y));
            variants
                .iter()
                .map(|v| match &data {
                    Ok(d) => estimate_all(v, d, s, seeds).map_err(|e| format!("mle:{}", e.code())),
                    Err(e) => Err(format!("data:{}", e.code())),
                })
                .collect()
        })
        .collect();

    let names = estimator_names(s.estimators);
    let mut schemes = vec!["mle".to_string()];
    schemes.extend(observation_schemes(s.estimators).iter().map(|c| c.name().to_string()));
    let mut summaries = Vec::new();
    for (vi, variant) in variants.iter().enumerate() {
        let mut failures = BTreeMap::new();
        let mut good = Vec::new();
        for rep in &outcomes {
            match &rep[vi] {
                Ok(o) => {
                    for code in &o.failures {
                        *failures.entry(code.clone()).or_insert(0) += 1;
                    }
                    good.push(o);
                }
                Err(code) => *failures.entry(code.clone()).or_insert(0) += 1,
            }
        }
        if good.is_empty() {
            return Err(Error::TooManyFailures {
                failed: s.replications,
                total: s.replications,
                allowed: s.replications - 1,
            });
        }
        let collect = |pick: &dyn Fn(&Outcome) -> Option<f64>| good.iter().filter_map(|o| pick(o)).collect::<Vec<f64>>();
        let params: Vec<Vec<Stats>> = (0..names.len())
            .map(|e| {
                (0..s.true_zeta.len())
                    .map(|j| Stats::from_samples(&collect(&|o| o.params[e].as_ref().map(|v| v[j])), s.true_zeta[j]))
                    .collect()
            })
            .collect();
        let table = |pick: &dyn Fn(&Outcome) -> &Vec<Option<Vec<f64>>>, truth: &[f64]| -> Vec<Vec<Stats>> {
            (0..schemes.len())
                .map(|c| {
                    (0..s.n)
                        .map(|i| Stats::from_samples(&collect(&|o| pick(o)[c].as_ref().map(|v| v[i])), truth[i]))
                        .collect()
                })
                .collect()
        };
        summaries.push(EstimatorSummary {
            scenario: s.name.clone(),
            variant: variant.name.clone(),
            n: s.n,
            bootstrap_b: if s.estimators.pboot || s.estimators.npboot { s.bootstrap_b } else { 0 },
            param_names: s.spec.param_names(),
            truth: s.true_zeta.clone(),
            estimator_counts: params.iter().map(|p| p[0].count).collect(),
            estimators: names.clone(),
            params,
            observation_schemes: schemes.clone(),
            mu: table(&|o| &o.mu, &mu_true),
            phi: table(&|o| &o.phi, &phi_true),
            mu_truth: mu_true.clone(),
            phi_truth: phi_true.clone(),
            replications_ok: good.len(),
            replications_failed: s.replications - good.len(),
            failures,
        });
    }
    Ok(summaries)
}

/// Monte Carlo study of the scenario's own model.
pub fn run_scenario(s: &Scenario) -> Result<EstimatorSummary> {
    let mut v = run_variants(s, &[FitVariant::same_as(s)])?;
    Ok(v.remove(0))
}

fn compact(src: &str) -> String {
    src.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Linearized counterpart of a power-law scenario: the mean predictor
/// `b0*x^b1` becomes `exp(g0 + b1*log(x))` under the same link (a log-logit
/// link on a linear predictor), and the identity-linked precision `t0*x^t1`
/// becomes `z0 + t1*log(x)` under the log link. `g0` and `z0` are reported
/// through `exp`.
pub fn linearized_variant(s: &Scenario) -> Result<FitVariant> {
    let spec = &s.spec;
    let mismatch = || Error::InvalidModel("scenario is not of the form b0*x^b1 / t0*x^t1 with an identity precision link".into());
    let (mp, pp) = (spec.mean.params(), spec.precision.params());
    if mp.len() != 2 || pp.len() != 2 || spec.mean.covariates().len() != 1 || spec.precision.covariates() != spec.mean.covariates() {
        return Err(mismatch());
    }
    let x = &spec.mean.covariates()[0];
    if compact(spec.mean.source()) != format!("{}*{x}^{}", mp[0], mp[1])
        || compact(spec.precision.source()) != format!("{}*{x}^{}", pp[0], pp[1])
        || spec.precision_link != PrecisionLink::Identity
    {
        return Err(mismatch());
    }
    let (scale_mean, scale_prec) = (format!("log_{}", mp[0]), format!("log_{}", pp[0]));
    let mean = Formula::parse(
        &format!("exp({scale_mean} + {}*log({x}))", mp[1]),
        &[scale_mean.as_str(), mp[1].as_str()],
        &[x.as_str()],
    )?;
    let precision = Formula::parse(
        &format!("{scale_prec} + {}*log({x})", pp[1]),
        &[scale_prec.as_str(), pp[1].as_str()],
        &[x.as_str()],
    )?;
    Ok(FitVariant {
        name: "linearized".into(),
        spec: ModelSpec::new(spec.mean_link, mean, PrecisionLink::Log, precision)?,
        transforms: vec![Transform::Exp, Transform::Identity, Transform::Exp, Transform::Identity],
    })
}

/// Fits the nonlinear model and its linearization on identical replications.
/// Returns (nonlinear, linearized) summaries, both on the original scale.
pub fn linearize_and_compare(s: &Scenario) -> Result<(EstimatorSummary, EstimatorSummary)> {
    let linear = linearized_variant(s)?;
    let mut v = run_variants(s, &[FitVariant::same_as(s), linear])?;
    let lin = v.pop().expect("two summaries");
    let non = v.pop().expect("two summaries");
    Ok((non, lin))
}
