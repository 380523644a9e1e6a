#![allow(dead_code)]

use std::path::PathBuf;

use nlbeta::bootstrap::{replicate_rng, sample_beta};
use nlbeta::formula::Formula;
use nlbeta::likelihood::{BoundModel, Dataset, ModelSpec};
use nlbeta::links::{MeanLink, PrecisionLink};
use rand::Rng;

/// The four standard model families plus the fully nonlinear one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Linear,
    LinearDispersion,
    Nonlinear,
    NonlinearDispersion,
    BothNonlinear,
}

impl Family {
    pub const SPECIAL: [Family; 4] = [Family::Linear, Family::LinearDispersion, Family::Nonlinear, Family::NonlinearDispersion];

    pub fn mean_is_linear(self) -> bool {
        matches!(self, Family::Linear | Family::LinearDispersion)
    }

    pub fn precision_is_linear(self) -> bool {
        self != Family::BothNonlinear
    }
}

pub struct Instance {
    pub family: Family,
    pub spec: ModelSpec,
    pub data: Dataset,
    pub zeta: Vec<f64>,
}

const LINEAR_MEAN: (&str, &[&str]) = ("b0 + b1*x1 + b2*x2", &["b0", "b1", "b2"]);
const CURVED_MEAN: (&str, &[&str]) = ("b0 + b1*x2^b2", &["b0", "b1", "b2"]);
const SHORT_CURVED_MEAN: (&str, &[&str]) = ("b0 + x2^b1", &["b0", "b1"]);
const CONSTANT_PRECISION: (&str, &[&str]) = ("t0", &["t0"]);
const LINEAR_PRECISION: (&str, &[&str]) = ("t0 + t1*x1", &["t0", "t1"]);
const CURVED_PRECISION: (&str, &[&str]) = ("t0 + t1*x2^t2", &["t0", "t1", "t2"]);

fn uniform<R: Rng>(rng: &mut R, low: f64, high: f64) -> f64 {
    low + (high - low) * rng.random::<f64>()
}

/// Intercept, slopes in (-0.8, 0.8), and the exponent of `x2` (the last
/// parameter of a curved mean). A scaled power gets an exponent near 2 and a
/// slope away from zero; an exponent near 1 over this short covariate range
/// lets the fit escape to a log-linear limit with no finite maximum.
fn mean_values<R: Rng>(rng: &mut R, names: &[&str], curved: bool) -> Vec<f64> {
    let scaled = curved && names.len() == 3;
    (0..names.len())
        .map(|j| match j {
            0 => uniform(rng, -0.6, 0.6),
            2 if scaled => uniform(rng, 1.8, 2.4),
            1 if scaled => uniform(rng, 0.3, 0.8) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            j if curved && j == names.len() - 1 => uniform(rng, 0.8, 1.6),
            _ => uniform(rng, -0.8, 0.8),
        })
        .collect()
}

fn precision_values<R: Rng>(rng: &mut R, names: &[&str], link: PrecisionLink) -> Vec<f64> {
    names
        .iter()
        .map(|n| match (*n, link) {
            ("t0", PrecisionLink::Log) => uniform(rng, 2.0, 4.0),
            ("t0", PrecisionLink::Sqrt) => uniform(rng, 3.0, 6.0),
            ("t0", PrecisionLink::Identity) => uniform(rng, 8.0, 60.0),
            ("t1", _) => uniform(rng, -0.5, 0.5),
            _ => uniform(rng, 0.8, 2.0),
        })
        .collect()
}

/// A random small model of the given family with simulated responses.
/// The seed fixes everything.
pub fn random_instance(family: Family, seed: u64) -> Instance {
    let mut rng = replicate_rng(seed, 0);
    let n = rng.random_range(12..=30);
    let mean_link = MeanLink::ALL[rng.random_range(0..3)];
    let (mean, precision) = match family {
        Family::Linear => (LINEAR_MEAN, CONSTANT_PRECISION),
        Family::LinearDispersion => (LINEAR_MEAN, LINEAR_PRECISION),
        Family::Nonlinear => (CURVED_MEAN, CONSTANT_PRECISION),
        Family::NonlinearDispersion => (CURVED_MEAN, LINEAR_PRECISION),
        Family::BothNonlinear => (SHORT_CURVED_MEAN, CURVED_PRECISION),
    };
    // Identity and square-root links need a predictor that stays positive.
    let precision_link = if precision == CONSTANT_PRECISION {
        PrecisionLink::ALL[rng.random_range(0..3)]
    } else {
        PrecisionLink::Log
    };
    let covs = ["x1", "x2"];
    let spec = ModelSpec::new(
        mean_link,
        Formula::parse(mean.0, mean.1, &covs).unwrap(),
        precision_link,
        Formula::parse(precision.0, precision.1, &covs).unwrap(),
    )
    .unwrap();
    // Redraw until every mean and precision is safely interior; beta draws
    // near a saturated mean round to 0 or 1.
    let (zeta, placeholder, mu, phi) = loop {
        let mut zeta = mean_values(&mut rng, mean.1, mean != LINEAR_MEAN);
        if mean_link == MeanLink::Cloglog {
            // Keep the means away from one, where cloglog saturates fastest.
            zeta[0] -= 1.5;
        }
        zeta.extend(precision_values(&mut rng, precision.1, precision_link));
        let x1: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.3, 2.0)).collect();
        let placeholder = Dataset::new(vec![0.5; n], vec![("x1".into(), x1), ("x2".into(), x2)]).unwrap();
        let Ok((mu, phi)) = BoundModel::new(&spec, &placeholder).unwrap().fitted(&zeta) else {
            continue;
        };
        if mu.iter().all(|m| (1e-3..=1.0 - 1e-3).contains(m)) && phi.iter().all(|p| *p >= 1.0) {
            break (zeta, placeholder, mu, phi);
        }
    };
    let y = mu.iter().zip(&phi).map(|(m, p)| sample_beta(&mut rng, *m, *p).unwrap()).collect();
    Instance {
        family,
        spec,
        data: placeholder.with_response(y).unwrap(),
        zeta,
    }
}

pub fn prater_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/prater.csv")
}

pub const PRATER_MEAN: &str = "b1 + b2*batch1 + b3*batch2 + b4*batch3 + b5*batch4 + b6*batch5 + b7*batch6 + b8*batch7 + b9*batch8 + b10*batch9 + b11*temp";

/// The gasoline yield model: batch effects and temperature in the mean,
/// temperature in the log precision.
pub fn prater_spec(data: &Dataset) -> ModelSpec {
    let params: Vec<String> = (1..=11).map(|j| format!("b{j}")).collect();
    ModelSpec::new(
        MeanLink::Logit,
        Formula::parse(PRATER_MEAN, &params, data.column_names()).unwrap(),
        PrecisionLink::Log,
        Formula::parse("t1 + t2*temp", &["t1", "t2"], data.column_names()).unwrap(),
    )
    .unwrap()
}
