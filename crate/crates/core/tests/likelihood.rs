mod common;

use common::{random_instance, Family};
use nlbeta::formula::Formula;
use nlbeta::likelihood::{build_context, information, loglik, score, BoundModel, Dataset, ModelSpec};
use nlbeta::links::{MeanLink, PrecisionLink};
use nlbeta::Error;
use proptest::prelude::*;

const FAMILIES: [Family; 5] = [Family::Linear, Family::LinearDispersion, Family::Nonlinear, Family::NonlinearDispersion, Family::BothNonlinear];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn score_matches_differences(seed in 0u64..1_000_000, which in 0usize..5) {
        let inst = random_instance(FAMILIES[which], seed);
        let mut model = BoundModel::new(&inst.spec, &inst.data).unwrap();
        let ctx = model.context(&inst.zeta).unwrap();
        let u = score(&ctx);
        let (ll, u2) = model.loglik_and_score(&inst.zeta, true).unwrap();
        prop_assert!((ll - loglik(&ctx, &inst.data).unwrap()).abs() < 1e-10 * ll.abs().max(1.0));
        let scale = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for j in 0..u.len() {
            prop_assert!((u[j] - u2[j]).abs() < 1e-10 * scale);
            let h = 1e-6 * inst.zeta[j].abs().max(1.0);
            let mut up = inst.zeta.clone();
            let mut down = inst.zeta.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (model.loglik(&up).unwrap() - model.loglik(&down).unwrap()) / (2.0 * h);
            prop_assert!((fd - u[j]).abs() < 1e-5 * scale, "param {}: {} vs {}", j, fd, u[j]);
        }
    }

    #[test]
    fn information_is_symmetric_positive_definite(seed in 0u64..1_000_000, which in 0usize..5) {
        let inst = random_instance(FAMILIES[which], seed);
        let ctx = build_context(&inst.spec, &inst.data, &inst.zeta).unwrap();
        let info = information(&ctx).unwrap();
        let p = info.k.nrows();
        prop_assert!((&info.k - info.k.transpose()).norm() == 0.0);
        prop_assert!(info.k.clone().cholesky().is_some());
        let eye = &info.k * &info.inverse;
        prop_assert!((eye - nalgebra::DMatrix::identity(p, p)).norm() < 1e-8);
    }
}

#[test]
fn single_observation_log_density() {
    // Beta(2, 2) at 0.5 has density 1.5.
    let spec = ModelSpec::new(
        MeanLink::Logit,
        Formula::parse("b0", &["b0"], &[] as &[&str]).unwrap(),
        PrecisionLink::Identity,
        Formula::parse("t0", &["t0"], &[] as &[&str]).unwrap(),
    )
    .unwrap();
    let data = Dataset::new(vec![0.5], vec![]).unwrap();
    let ctx = build_context(&spec, &data, &[0.0, 4.0]).unwrap();
    assert!((loglik(&ctx, &data).unwrap() - 1.5f64.ln()).abs() < 1e-14);
}

#[test]
fn dataset_checks() {
    assert!(matches!(Dataset::new(vec![0.2, 1.0], vec![]), Err(Error::ResponseOutOfRange { row: 2, .. })));
    assert!(Dataset::new(vec![], vec![]).is_err());
    assert!(Dataset::new(vec![0.5], vec![("x".into(), vec![1.0, 2.0])]).is_err());
    let d = Dataset::new(vec![0.1, 0.2, 0.3], vec![("x".into(), vec![1.0, 2.0, 3.0])]).unwrap();
    let s = d.select_rows(&[2, 2, 0]);
    assert_eq!(s.y(), [0.3, 0.3, 0.1]);
    assert_eq!(s.column("x").unwrap(), [3.0, 3.0, 1.0]);
}

#[test]
fn model_requires_known_covariates() {
    let inst = random_instance(Family::Linear, 1);
    let other = Dataset::new(vec![0.5; 3], vec![("z".into(), vec![1.0; 3])]).unwrap();
    assert!(BoundModel::new(&inst.spec, &other).is_err());
}
