//! Bias of the fitted predictors, means and precisions, and the corrected
//! fitted values under each correction scheme.
//!
//! Corrections are additive. Corrected means outside (0, 1) or non-positive
//! precisions are reported as they are and listed in the out-of-range flags.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bias::{BiasIngredients, BiasVector};
use crate::bootstrap::BootstrapResult;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::likelihood::EvalContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionScheme {
    CoxSnell,
    Firth,
    Pboot,
    Npboot,
    PbootDirect,
    NpbootDirect,
}

impl CorrectionScheme {
    pub const ALL: [CorrectionScheme; 6] = [
        CorrectionScheme::CoxSnell,
        CorrectionScheme::Firth,
        CorrectionScheme::Pboot,
        CorrectionScheme::Npboot,
        CorrectionScheme::PbootDirect,
        CorrectionScheme::NpbootDirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorrectionScheme::CoxSnell => "cox_snell",
            CorrectionScheme::Firth => "firth",
            CorrectionScheme::Pboot => "pboot",
            CorrectionScheme::Npboot => "npboot",
            CorrectionScheme::PbootDirect => "pboot_direct",
            CorrectionScheme::NpbootDirect => "npboot_direct",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MuPhiCorrection {
    pub scheme: CorrectionScheme,
    pub mu_corrected: Vec<f64>,
    pub phi_corrected: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub b_phi: Vec<f64>,
    /// Observations whose corrected mean left (0, 1).
    pub mu_out_of_range: Vec<usize>,
    /// Observations whose corrected precision is not positive.
    pub phi_out_of_range: Vec<usize>,
}

/// Bias of the two linear predictors: `Xt b_beta + F/2` and `Zt b_theta + G/2`.
pub fn eta_bias(ctx: &EvalContext, ing: &BiasIngredients, bias: &BiasVector) -> (DVector<f64>, DVector<f64>) {
    let b_beta = DVector::from_column_slice(bias.b_beta());
    let b_theta = DVector::from_column_slice(bias.b_theta());
    let b_eta1 = &ctx.xt * b_beta + &ing.f * 0.5;
    let b_eta2 = &ctx.zt * b_theta + &ing.g * 0.5;
    (b_eta1, b_eta2)
}

/// Delta-method bias of the fitted means and precisions from predictor biases.
pub fn mu_phi_bias(ctx: &EvalContext, b_eta1: &DVector<f64>, b_eta2: &DVector<f64>, p_bb: &DVector<f64>, p_tt: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let b_mu = ctx.t1.component_mul(b_eta1) + ctx.s1.component_mul(p_bb) * 0.5;
    let b_phi = ctx.t2.component_mul(b_eta2) + ctx.s2.component_mul(p_tt) * 0.5;
    (b_mu, b_phi)
}

/// Upstream results a scheme may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorrectionInputs<'a> {
    pub cox_snell: Option<&'a BiasVector>,
    pub firth: Option<&'a FitResult>,
    pub pboot: Option<&'a BootstrapResult>,
    pub npboot: Option<&'a BootstrapResult>,
}

fn missing(scheme: CorrectionScheme, what: &str) -> Error {
    Error::MissingPrerequisite(scheme.name().to_string(), what.to_string())
}

/// Corrected fitted values `mu_hat - b_mu`, `phi_hat - b_phi` for one scheme.
/// `ctx` and `ing` are evaluated at the maximum likelihood estimate `mle`.
pub fn corrected_mu_phi(scheme: CorrectionScheme, ctx: &EvalContext, ing: &BiasIngredients, mle: &FitResult, inputs: &CorrectionInputs) -> Result<MuPhiCorrection> {
    let taylor = |bias: &BiasVector| {
        let (e1, e2) = eta_bias(ctx, ing, bias);
        mu_phi_bias(ctx, &e1, &e2, &ing.p_bb, &ing.p_tt)
    };
    let from_params = |b: DVector<f64>| BiasVector { b_zeta: b, k: mle.k };
    let direct = |boot: &BootstrapResult| {
        (
            DVector::from_column_slice(&boot.mean_fitted_mu) - &ctx.mu,
            DVector::from_column_slice(&boot.mean_fitted_phi) - &ctx.phi,
        )
    };
    let (b_mu, b_phi) = match scheme {
        CorrectionScheme::CoxSnell => taylor(inputs.cox_snell.ok_or_else(|| missing(scheme, "Cox-Snell bias vector"))?),
        CorrectionScheme::Firth => {
            let firth = inputs.firth.ok_or_else(|| missing(scheme, "bias-reduced fit"))?;
            taylor(&from_params(&mle.zeta_hat - &firth.zeta_hat))
        }
        CorrectionScheme::Pboot => {
            let boot = inputs.pboot.ok_or_else(|| missing(scheme, "parametric bootstrap"))?;
            taylor(&from_params(boot.bias_hat.clone()))
        }
        CorrectionScheme::Npboot => {
            let boot = inputs.npboot.ok_or_else(|| missing(scheme, "nonparametric bootstrap"))?;
            taylor(&from_params(boot.bias_hat.clone()))
        }
        CorrectionScheme::PbootDirect => direct(inputs.pboot.ok_or_else(|| missing(scheme, "parametric bootstrap"))?),
        CorrectionScheme::NpbootDirect => direct(inputs.npboot.ok_or_else(|| missing(scheme, "nonparametric bootstrap"))?),
    };
    let mu_corrected: Vec<f64> = (&ctx.mu - &b_mu).iter().copied().collect();
    let phi_corrected: Vec<f64> = (&ctx.phi - &b_phi).iter().copied().collect();
    Ok(MuPhiCorrection {
        scheme,
        mu_out_of_range: (0..mu_corrected.len())
            .filter(|&i| !(mu_corrected[i] > 0.0 && mu_corrected[i] < 1.0))
            .collect(),
        phi_out_of_range: (0..phi_corrected.len()).filter(|&i| !(phi_corrected[i] > 0.0)).collect(),
        mu_corrected,
        phi_corrected,
        b_mu: b_mu.iter().copied().collect(),
        b_phi: b_phi.iter().copied().collect(),
    })
}
