//! Parametric (fixed covariates) and nonparametric (row resampling)
//! bootstrap bias estimates with constant-bias-correcting estimators.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_mle, Convergence, FitOptions, FitResult, Start};
use crate::likelihood::{BoundModel, Dataset, ModelSpec};

/// Default cap on failed refits as a fraction of the replications.
pub const DEFAULT_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Parametric,
    Nonparametric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    pub scheme: Scheme,
    pub replications: usize,
    pub rng_seed: u64,
    pub refit_tolerance: f64,
    /// Resamples routinely reach very large precisions, where the score's
    /// rounding floor exceeds any fixed absolute tolerance.
    pub refit_convergence: Convergence,
    pub refit_max_iterations: usize,
    /// Defaults to 5% of the replications, rounded down.
    pub max_failures: Option<usize>,
}

impl BootstrapPlan {
    pub fn new(scheme: Scheme, replications: usize, rng_seed: u64) -> Self {
        BootstrapPlan {
            scheme,
            replications,
            rng_seed,
            refit_tolerance: FitOptions::default().grad_tolerance,
            refit_convergence: Convergence::Decrement,
            refit_max_iterations: FitOptions::default().max_iterations,
            max_failures: None,
        }
    }

    pub fn failure_cap(&self) -> usize {
        self.max_failures
            .unwrap_or((DEFAULT_FAILURE_FRACTION * self.replications as f64).floor() as usize)
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub scheme: Scheme,
    pub mean_replicate: DVector<f64>,
    pub bias_hat: DVector<f64>,
    pub corrected: DVector<f64>,
    pub n_success: usize,
    pub n_failed: usize,
    /// Successful replicate estimates, in replicate order.
    pub replicates: Vec<Vec<f64>>,
    /// Mean over replicates of the fitted means at the original rows.
    pub mean_fitted_mu: Vec<f64>,
    /// Mean over replicates of the fitted precisions at the original rows.
    pub mean_fitted_phi: Vec<f64>,
}

/// Draw from Beta(mu * phi, (1 - mu) * phi), redrawing values that round to 0 or 1.
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, mu: f64, phi: f64) -> Result<f64> {
    let dist = Beta::new(mu * phi, (1.0 - mu) * phi)
        .map_err(|e| Error::Domain(format!("beta parameters mu={mu}, phi={phi}: {e}")))?;
    for _ in 0..1000 {
        let y: f64 = dist.sample(rng);
        if y > 0.0 && y < 1.0 {
            return Ok(y);
        }
    }
    Err(Error::Domain(format!(
        "beta draws with mu={mu}, phi={phi} keep landing on the boundary"
    )))
}

/// Independent generator for one replicate, fixed by the seed and the index.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Replicate {
    zeta: Vec<f64>,
    mu: Vec<f64>,
    phi: Vec<f64>,
}

fn refit(spec: &ModelSpec, data: &Dataset, warm: &[f64], plan: &BootstrapPlan) -> Result<FitResult> {
    let opts = FitOptions {
        grad_tolerance: plan.refit_tolerance,
        convergence: plan.refit_convergence,
        max_iterations: plan.refit_max_iterations,
        // Resamples start from the original estimate; the failures left are
        // mostly samples without a finite maximum, where retries only cost time.
        retry_starts: false,
        ..FitOptions::default()
    };
    let warm_fit = fit_mle(spec, data, &opts.with_start(warm.to_vec()));
    match warm_fit {
        Ok(fit) if fit.warnings.is_empty() => Ok(fit),
        Ok(_) => Err(Error::InvalidData("rank-deficient resample".into())),
        Err(_) => {
            let cold = fit_mle(
                spec,
                data,
                &FitOptions {
                    start: Start::Heuristic,
                    ..opts
                },
            )?;
            if cold.warnings.is_empty() {
                Ok(cold)
            } else {
                Err(Error::InvalidData("rank-deficient resample".into()))
            }
        }
    }
}

fn one_replicate(spec: &ModelSpec, data: &Dataset, fit: &FitResult, mu: &[f64], phi: &[f64], plan: &BootstrapPlan, index: usize) -> Result<Replicate> {
    let mut rng = replicate_rng(plan.rng_seed, index as u64);
    let sample = match plan.scheme {
        Scheme::Parametric => {
            let y = mu
                .iter()
                .zip(phi)
                .map(|(m, p)| sample_beta(&mut rng, *m, *p))
                .collect::<Result<Vec<_>>>()?;
            data.with_response(y)?
        }
        Scheme::Nonparametric => {
            let n = data.n();
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            data.select_rows(&rows)
        }
    };
    let refit = refit(spec, &sample, fit.zeta_hat.as_slice(), plan)?;
    let mut model = BoundModel::new(spec, data)?;
    let (mu_b, phi_b) = model.fitted(refit.zeta_hat.as_slice())?;
    Ok(Replicate {
        zeta: refit.zeta_hat.iter().copied().collect(),
        mu: mu_b,
        phi: phi_b,
    })
}

fn column_means(rows: &[&Vec<f64>], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    out
}

/// Runs the plan's resampling scheme around a converged fit.
pub fn bootstrap(spec: &ModelSpec, data: &Dataset, fit: &FitResult, plan: &BootstrapPlan) -> Result<BootstrapResult> {
    if plan.replications == 0 {
        return Err(Error::InvalidModel("bootstrap needs at least one replication".into()));
    }
    if !fit.converged {
        return Err(Error::MissingPrerequisite(
            "bootstrap".into(),
            "a converged fit".into(),
        ));
    }
    let (mu, phi) = BoundModel::new(spec, data)?.fitted(fit.zeta_hat.as_slice())?;
    let outcomes: Vec<Option<Replicate>> = (0..plan.replications)
        .into_par_iter()
        .map(|b| one_replicate(spec, data, fit, &mu, &phi, plan, b).ok())
        .collect();
    let good: Vec<&Replicate> = outcomes.iter().flatten().collect();
    let n_failed = plan.replications - good.len();
    if n_failed > plan.failure_cap() || good.is_empty() {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: plan.replications,
            allowed: plan.failure_cap(),
        });
    }
    let p = fit.zeta_hat.len();
    let mean = DVector::from_vec(column_means(&good.iter().map(|r| &r.zeta).collect::<Vec<_>>(), p));
    let bias_hat = &mean - &fit.zeta_hat;
    let corrected = &fit.zeta_hat * 2.0 - &mean;
    Ok(BootstrapResult {
        scheme: plan.scheme,
        mean_fitted_mu: column_means(&good.iter().map(|r| &r.mu).collect::<Vec<_>>(), data.n()),
        mean_fitted_phi: column_means(&good.iter().map(|r| &r.phi).collect::<Vec<_>>(), data.n()),
        mean_replicate: mean,
        bias_hat,
        corrected,
        n_success: good.len(),
        n_failed,
        replicates: good.iter().map(|r| r.zeta.clone()).collect(),
    })
}

pub fn parametric_bootstrap(spec: &ModelSpec, data: &Dataset, fit: &FitResult, replications: usize, seed: u64) -> Result<BootstrapResult> {
    bootstrap(spec, data, fit, &BootstrapPlan::new(Scheme::Parametric, replications, seed))
}

pub fn nonparametric_bootstrap(spec: &ModelSpec, data: &Dataset, fit: &FitResult, replications: usize, seed: u64) -> Result<BootstrapResult> {
    bootstrap(spec, data, fit, &BootstrapPlan::new(Scheme::Nonparametric, replications, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_draws_stay_inside() {
        let mut rng = replicate_rng(7, 0);
        for &(mu, phi) in &[(0.5, 1.0), (0.999, 5.0), (0.001, 0.5), (0.3, 1e4)] {
            for _ in 0..200 {
                let y = sample_beta(&mut rng, mu, phi).unwrap();
                assert!(y > 0.0 && y < 1.0);
            }
        }
        assert!(sample_beta(&mut rng, 0.5, -1.0).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = replicate_rng(3, 5).random();
        let b: u64 = replicate_rng(3, 5).random();
        let c: u64 = replicate_rng(3, 6).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn failure_cap_defaults_to_five_percent() {
        assert_eq!(BootstrapPlan::new(Scheme::Parametric, 200, 1).failure_cap(), 10);
        assert_eq!(BootstrapPlan::new(Scheme::Parametric, 19, 1).failure_cap(), 0);
    }
}
