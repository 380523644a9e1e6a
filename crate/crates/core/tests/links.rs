use nlbeta::links::{MeanLink, PrecisionLink};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1e-3)
}

#[test]
fn logit_reference_values() {
    let l = MeanLink::Logit;
    assert!((l.dmu_deta(0.2).unwrap() - 0.16).abs() < 1e-15);
    assert!((l.d2mu_deta2(0.2).unwrap() - 0.096).abs() < 1e-15);
    assert!((l.inverse(0.0).unwrap() - 0.5).abs() < 1e-16);
}

#[test]
fn identity_precision_reference_values() {
    let p = PrecisionLink::Identity.eval(5.0).unwrap();
    assert_eq!((p.phi, p.d1, p.d2), (5.0, 1.0, 0.0));
}

#[test]
fn cloglog_slope_uses_the_consistent_form() {
    // -(1 - mu) log(1 - mu), not -log(1 - mu) / (1 - mu).
    let mu: f64 = 0.3;
    let want = -(1.0 - mu) * (1.0 - mu).ln();
    assert!((MeanLink::Cloglog.dmu_deta(mu).unwrap() - want).abs() < 1e-15);
}

#[test]
fn sqrt_slope_is_twice_root_phi() {
    let phi: f64 = 9.0;
    assert!((PrecisionLink::Sqrt.dphi_deta(phi).unwrap() - 6.0).abs() < 1e-14);
    assert!((PrecisionLink::Sqrt.d2phi_deta2(phi).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn domain_errors() {
    for l in MeanLink::ALL {
        assert!(l.link(0.0).is_err());
        assert!(l.link(1.0).is_err());
        assert!(l.inverse(f64::NAN).is_err());
    }
    assert!(PrecisionLink::Log.link(0.0).is_err());
    assert!(PrecisionLink::Identity.inverse(-1.0).is_err());
    assert!(PrecisionLink::Sqrt.inverse(-1.0).is_err());
}

proptest! {
    #[test]
    fn mean_link_derivatives_match_differences(eta in -6.0f64..3.0, which in 0usize..3) {
        let link = MeanLink::ALL[which];
        let h = 1e-5;
        let p = link.eval(eta).unwrap();
        let up = link.eval(eta + h).unwrap();
        let down = link.eval(eta - h).unwrap();
        prop_assert!(close((up.mu - down.mu) / (2.0 * h), p.d1, 1e-5));
        prop_assert!(close((up.d1 - down.d1) / (2.0 * h), p.d2, 1e-5));
        prop_assert!(close(link.dmu_deta(p.mu).unwrap(), p.d1, 1e-8));
        prop_assert!(close(link.d2mu_deta2(p.mu).unwrap(), p.d2, 1e-7));
        prop_assert!(close(p.one_minus_mu, 1.0 - p.mu, 1e-12));
    }

    #[test]
    fn mean_link_round_trip(mu in 1e-6f64..(1.0 - 1e-6), which in 0usize..3) {
        let link = MeanLink::ALL[which];
        let back = link.inverse(link.link(mu).unwrap()).unwrap();
        prop_assert!((back - mu).abs() < 1e-10 * mu.max(1e-3));
    }

    #[test]
    fn precision_link_derivatives_match_differences(eta in 0.1f64..8.0, which in 0usize..3) {
        let link = PrecisionLink::ALL[which];
        let h = 1e-5;
        let p = link.eval(eta).unwrap();
        let up = link.eval(eta + h).unwrap();
        let down = link.eval(eta - h).unwrap();
        prop_assert!(close((up.phi - down.phi) / (2.0 * h), p.d1, 1e-5));
        prop_assert!(close((up.d1 - down.d1) / (2.0 * h), p.d2, 1e-5) || (p.d2 == 0.0 && (up.d1 - down.d1).abs() < 1e-12));
        prop_assert!(close(link.dphi_deta(p.phi).unwrap(), p.d1, 1e-10));
        prop_assert!(close(link.d2phi_deta2(p.phi).unwrap(), p.d2, 1e-10) || p.d2 == 0.0);
        let back = link.link(link.inverse(eta).unwrap()).unwrap();
        prop_assert!((back - eta).abs() < 1e-12 * eta.abs().max(1.0));
    }
}
