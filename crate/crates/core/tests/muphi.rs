mod common;

use common::{random_instance, Family};
use nlbeta::bias::{cox_snell_bias, ingredients};
use nlbeta::bootstrap::{parametric_bootstrap, nonparametric_bootstrap};
use nlbeta::fit::{fit_firth_from, fit_mle, FitOptions};
use nlbeta::formula::Formula;
use nlbeta::likelihood::{build_context, information, Dataset, ModelSpec};
use nlbeta::links::{MeanLink, PrecisionLink};
use nlbeta::muphi::{corrected_mu_phi, eta_bias, mu_phi_bias, CorrectionInputs, CorrectionScheme};
use nlbeta::Error;

#[test]
fn identity_precision_passes_predictor_bias_through() {
    for seed in 0..10u64 {
        let inst = random_instance(Family::Nonlinear, 100 + seed);
        if inst.spec.precision_link != PrecisionLink::Identity {
            continue;
        }
        let ctx = build_context(&inst.spec, &inst.data, &inst.zeta).unwrap();
        let info = information(&ctx).unwrap();
        let ing = ingredients(&ctx, &info.inverse).unwrap();
        let bias = cox_snell_bias(&ctx, &info).unwrap();
        let (e1, e2) = eta_bias(&ctx, &ing, &bias);
        let (_, b_phi) = mu_phi_bias(&ctx, &e1, &e2, &ing.p_bb, &ing.p_tt);
        assert_eq!(b_phi, e2);
        return;
    }
    panic!("no identity-link instance among the seeds");
}

#[test]
fn logit_at_one_half_scales_by_a_quarter() {
    // Intercept-only mean at zero puts every mean at exactly one half.
    let covs = ["x"];
    let spec = ModelSpec::new(
        MeanLink::Logit,
        Formula::parse("b0", &["b0"], &covs).unwrap(),
        PrecisionLink::Log,
        Formula::parse("t0 + t1*x", &["t0", "t1"], &covs).unwrap(),
    )
    .unwrap();
    let data = Dataset::new(vec![0.3, 0.6, 0.45, 0.52, 0.7], vec![("x".into(), vec![0.1, 0.5, 0.9, 1.3, 1.7])]).unwrap();
    let ctx = build_context(&spec, &data, &[0.0, 2.0, 0.3]).unwrap();
    let info = information(&ctx).unwrap();
    let ing = ingredients(&ctx, &info.inverse).unwrap();
    let bias = cox_snell_bias(&ctx, &info).unwrap();
    let (e1, e2) = eta_bias(&ctx, &ing, &bias);
    let (b_mu, _) = mu_phi_bias(&ctx, &e1, &e2, &ing.p_bb, &ing.p_tt);
    for i in 0..5 {
        assert_eq!(ctx.s1[i], 0.0);
        assert_eq!(b_mu[i], 0.25 * e1[i]);
    }
}

#[test]
fn schemes_need_their_inputs() {
    let inst = random_instance(Family::LinearDispersion, 7);
    let fit = fit_mle(&inst.spec, &inst.data, &FitOptions::default()).unwrap();
    let ctx = build_context(&inst.spec, &inst.data, fit.zeta_hat.as_slice()).unwrap();
    let info = information(&ctx).unwrap();
    let ing = ingredients(&ctx, &info.inverse).unwrap();
    let none = CorrectionInputs::default();
    for scheme in CorrectionScheme::ALL {
        assert!(matches!(corrected_mu_phi(scheme, &ctx, &ing, &fit, &none), Err(Error::MissingPrerequisite(..))));
    }
}

#[test]
fn every_scheme_corrects_additively() {
    let inst = random_instance(Family::NonlinearDispersion, 11);
    let opts = FitOptions::default();
    let fit = fit_mle(&inst.spec, &inst.data, &opts).unwrap();
    let ctx = build_context(&inst.spec, &inst.data, fit.zeta_hat.as_slice()).unwrap();
    let info = information(&ctx).unwrap();
    let ing = ingredients(&ctx, &info.inverse).unwrap();
    let cs = cox_snell_bias(&ctx, &info).unwrap();
    let firth = fit_firth_from(&inst.spec, &inst.data, &opts, &fit).unwrap();
    let pboot = parametric_bootstrap(&inst.spec, &inst.data, &fit, 40, 5).unwrap();
    let npboot = nonparametric_bootstrap(&inst.spec, &inst.data, &fit, 40, 6);
    let inputs = CorrectionInputs {
        cox_snell: Some(&cs),
        firth: Some(&firth),
        pboot: Some(&pboot),
        npboot: npboot.as_ref().ok(),
    };
    for scheme in CorrectionScheme::ALL {
        let Ok(c) = corrected_mu_phi(scheme, &ctx, &ing, &fit, &inputs) else {
            assert!(matches!(scheme, CorrectionScheme::Npboot | CorrectionScheme::NpbootDirect));
            continue;
        };
        for i in 0..ctx.n {
            assert_eq!(c.mu_corrected[i], ctx.mu[i] - c.b_mu[i]);
            assert_eq!(c.phi_corrected[i], ctx.phi[i] - c.b_phi[i]);
            assert_eq!(c.mu_out_of_range.contains(&i), !(c.mu_corrected[i] > 0.0 && c.mu_corrected[i] < 1.0));
        }
        if scheme == CorrectionScheme::PbootDirect {
            for i in 0..ctx.n {
                assert_eq!(c.b_mu[i], pboot.mean_fitted_mu[i] - ctx.mu[i]);
            }
        }
    }
}
