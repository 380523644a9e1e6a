use nlbeta::special_fn::{digamma, polygamma, tetragamma, tetragamma_tail, trigamma, trigamma_tail, PolygammaOrder};
use proptest::prelude::*;

// 30-digit reference values: (x, digamma, trigamma, tetragamma).
const REFERENCE: &[(f64, f64, f64, f64)] = &[
    (1e-3, -1000.5755719318102797, 1000001.6425331958273, -2000000002.3976321648),
    (0.1, -10.423754940411076232, 101.4332991507927477, -2001.8614573783436732),
    (0.5, -1.9635100260214234794, 4.9348022005446793094, -16.828796644234319996),
    (1.0, -0.57721566490153286061, 1.6449340668482264365, -2.4041138063191885708),
    (2.5, 0.70315664064524318723, 0.49035775610023486497, -0.236204051641727403),
    (7.3, 1.9178203356379860723, 0.14679576813142710199, -0.021510814441620252037),
    (9.99, 2.250700372831201122, 0.10527695014824178439, -0.011073070531461051158),
    (10.0, 2.2517525890667211076, 0.10516633568168574612, -0.011049834970802067462),
    (12.5, 2.4851956512749120482, 0.083285224601578370444, -0.0069324365857882407909),
    (50.0, 3.901989673427892197, 0.020201333226697125806, -0.00040807998933759693141),
    (1e3, 6.9072551956488120521, 0.0010005001666666333334, -1.0010004999998333335e-6),
    (1e6, 13.815510057964190771, 1.0000005000001666667e-6, -1.0000010000005e-12),
    (1e10, 23.02585092989045684, 1.00000000005e-10, -1.0000000001e-20),
];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn matches_high_precision_values() {
    for &(x, d0, d1, d2) in REFERENCE {
        assert!(rel(digamma(x).unwrap(), d0) < 1e-13, "digamma({x})");
        assert!(rel(trigamma(x).unwrap(), d1) < 1e-13, "trigamma({x})");
        assert!(rel(tetragamma(x).unwrap(), d2) < 1e-13, "tetragamma({x})");
    }
}

#[test]
fn dispatch_by_order() {
    for order in [PolygammaOrder::Digamma, PolygammaOrder::Trigamma, PolygammaOrder::Tetragamma] {
        let direct = match order.order() {
            0 => digamma(3.7),
            1 => trigamma(3.7),
            _ => tetragamma(3.7),
        };
        assert_eq!(polygamma(order, 3.7).unwrap(), direct.unwrap());
    }
    assert!(PolygammaOrder::try_from(3).is_err());
}

#[test]
fn rejects_bad_arguments() {
    for x in [0.0, -1.0, -0.5, f64::NAN, f64::INFINITY, 1e-301] {
        assert!(digamma(x).is_err());
        assert!(trigamma(x).is_err());
        assert!(tetragamma(x).is_err());
    }
}

#[test]
fn tails_keep_precision_for_huge_arguments() {
    // trigamma(x) - 1/x - 1/(2x^2) ~ 1/(6x^3); tetragamma(x) + 1/x^2 + 1/x^3 ~ -1/(2x^4).
    for x in [1e4, 1e8, 1e11] {
        assert!(rel(trigamma_tail(x).unwrap(), 1.0 / (6.0 * x * x * x)) < 1e-6);
        assert!(rel(tetragamma_tail(x).unwrap(), -1.0 / (2.0 * x.powi(4))) < 1e-6);
    }
}

proptest! {
    #[test]
    fn recurrences(x in 1e-3f64..1e4) {
        let d0 = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
        let d1 = trigamma(x + 1.0).unwrap() - trigamma(x).unwrap() + 1.0 / (x * x);
        let d2 = tetragamma(x + 1.0).unwrap() - tetragamma(x).unwrap() - 2.0 / (x * x * x);
        prop_assert!(d0.abs() <= 1e-13 * (1.0 + 1.0 / x));
        prop_assert!(d1.abs() <= 1e-13 * (1.0 + 1.0 / (x * x)));
        prop_assert!(d2.abs() <= 1e-13 * (1.0 + 2.0 / (x * x * x)));
    }

    #[test]
    fn derivatives_agree_with_differences(x in 0.2f64..200.0) {
        let h = 1e-4 * x;
        let fd1 = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
        let fd2 = (trigamma(x + h).unwrap() - trigamma(x - h).unwrap()) / (2.0 * h);
        prop_assert!(rel(fd1, trigamma(x).unwrap()) < 1e-6);
        prop_assert!(rel(fd2, tetragamma(x).unwrap()) < 1e-6);
    }

    #[test]
    fn signs_and_monotonicity(x in 1e-3f64..1e8) {
        prop_assert!(trigamma(x).unwrap() > 0.0);
        prop_assert!(tetragamma(x).unwrap() < 0.0);
        prop_assert!(digamma(x * 1.01).unwrap() > digamma(x).unwrap());
    }
}
