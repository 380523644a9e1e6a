//! Polygamma functions of order 0, 1 and 2 on the positive real line.
//!
//! Each function shifts its argument upward with the recurrence until it is at
//! least [`SHIFT_THRESHOLD`] and then sums the asymptotic Bernoulli series.
//! Truncation error at the threshold is below 1e-16 for every order.

use crate::error::{Error, Result};

/// Smallest accepted argument. Below this, quantities such as `(1 - mu) * phi`
/// have underflowed and the fit is numerically degenerate.
pub const MIN_ARGUMENT: f64 = 1e-300;

const SHIFT_THRESHOLD: f64 = 10.0;

/// Order of a polygamma function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolygammaOrder {
    Digamma,
    Trigamma,
    Tetragamma,
}

impl PolygammaOrder {
    pub fn order(self) -> u32 {
        match self {
            PolygammaOrder::Digamma => 0,
            PolygammaOrder::Trigamma => 1,
            PolygammaOrder::Tetragamma => 2,
        }
    }
}

impl TryFrom<u32> for PolygammaOrder {
    type Error = Error;

    fn try_from(order: u32) -> Result<Self> {
        match order {
            0 => Ok(PolygammaOrder::Digamma),
            1 => Ok(PolygammaOrder::Trigamma),
            2 => Ok(PolygammaOrder::Tetragamma),
            _ => Err(Error::Domain(format!(
                "polygamma order {order} is not supported (only 0, 1, 2)"
            ))),
        }
    }
}

/// Evaluate the polygamma function of the given order.
pub fn polygamma(order: PolygammaOrder, x: f64) -> Result<f64> {
    match order {
        PolygammaOrder::Digamma => digamma(x),
        PolygammaOrder::Trigamma => trigamma(x),
        PolygammaOrder::Tetragamma => tetragamma(x),
    }
}

fn check_argument(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < MIN_ARGUMENT {
        return Err(Error::Domain(format!("{name}({x}) is outside (0, inf)")));
    }
    Ok(())
}

fn check_result(name: &str, x: f64, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain(format!("{name}({x}) overflows")))
    }
}

/// ψ(x), the logarithmic derivative of the gamma function.
pub fn digamma(x: f64) -> Result<f64> {
    check_argument("digamma", x)?;
    let x0 = x;
    let mut x = x;
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0
                        - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r / 12.0))))));
    check_result("digamma", x0, acc + x.ln() - 0.5 / x - series)
}

/// ψ′(x).
pub fn trigamma(x: f64) -> Result<f64> {
    check_argument("trigamma", x)?;
    let x0 = x;
    let mut x = x;
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    check_result("trigamma", x0, acc + inv + 0.5 * inv * inv + trigamma_series(x))
}

/// Terms of the trigamma expansion beyond `1/x + 1/(2x^2)`, for `x >= 10`.
fn trigamma_series(x: f64) -> f64 {
    let inv = 1.0 / x;
    let r = inv * inv;
    inv * r
        * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0
                    - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * 7.0 / 6.0))))))
}

/// Terms of the tetragamma expansion beyond `-1/x^2 - 1/x^3`, for `x >= 10`.
fn tetragamma_series(x: f64) -> f64 {
    let r = 1.0 / (x * x);
    -r * r
        * (0.5
            - r * (1.0 / 6.0
                - r * (1.0 / 6.0
                    - r * (3.0 / 10.0 - r * (5.0 / 6.0 - r * (691.0 / 210.0 - r * 35.0 / 2.0))))))
}

/// `ψ′(x) - 1/x - 1/(2x^2)`. Combinations such as
/// `mu^2 ψ′(mu phi) + (1-mu)^2 ψ′((1-mu) phi) - ψ′(phi)` lose every digit to
/// cancellation at large `phi` unless the leading terms are removed
/// analytically first.
pub fn trigamma_tail(x: f64) -> Result<f64> {
    check_argument("trigamma_tail", x)?;
    if x >= SHIFT_THRESHOLD {
        return Ok(trigamma_series(x));
    }
    Ok(trigamma(x)? - 1.0 / x - 0.5 / (x * x))
}

/// `ψ″(x) + 1/x^2 + 1/x^3`.
pub fn tetragamma_tail(x: f64) -> Result<f64> {
    check_argument("tetragamma_tail", x)?;
    if x >= SHIFT_THRESHOLD {
        return Ok(tetragamma_series(x));
    }
    Ok(tetragamma(x)? + 1.0 / (x * x) + 1.0 / (x * x * x))
}

/// ψ″(x).
pub fn tetragamma(x: f64) -> Result<f64> {
    check_argument("tetragamma", x)?;
    let x0 = x;
    let mut x = x;
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    check_result("tetragamma", x0, acc - r - r / x + tetragamma_series(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn digamma_closed_forms() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-14);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-14);
        let half = -EULER_GAMMA - 2.0 * std::f64::consts::LN_2;
        assert!((digamma(0.5).unwrap() - half).abs() < 1e-14);
    }

    #[test]
    fn trigamma_closed_forms() {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert!((trigamma(1.0).unwrap() - pi2 / 6.0).abs() < 1e-14);
        assert!((trigamma(0.5).unwrap() - pi2 / 2.0).abs() < 1e-13);
    }

    #[test]
    fn tetragamma_closed_forms() {
        assert!((tetragamma(1.0).unwrap() + 2.404_113_806_319_188).abs() < 1e-13);
        assert!((tetragamma(2.0).unwrap() + 0.404_113_806_319_188).abs() < 1e-13);
    }

    #[test]
    fn tails_match_direct_subtraction() {
        for &x in &[0.3, 2.5, 9.9, 10.0, 37.0] {
            let t1 = trigamma(x).unwrap() - 1.0 / x - 0.5 / (x * x);
            let t2 = tetragamma(x).unwrap() + 1.0 / (x * x) + 1.0 / (x * x * x);
            assert!((trigamma_tail(x).unwrap() - t1).abs() < 1e-13 * t1.abs().max(1e-3));
            assert!((tetragamma_tail(x).unwrap() - t2).abs() < 1e-13 * t2.abs().max(1e-3));
        }
        // Leading behaviour 1/(6x^3) and -1/(2x^4).
        let x = 1e6;
        assert!((trigamma_tail(x).unwrap() * 6.0 * x.powi(3) - 1.0).abs() < 1e-10);
        assert!((tetragamma_tail(x).unwrap() * -2.0 * x.powi(4) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn domain_errors() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY, 1e-301] {
            assert!(digamma(bad).is_err());
            assert!(trigamma(bad).is_err());
            assert!(tetragamma(bad).is_err());
        }
        assert!(PolygammaOrder::try_from(3).is_err());
        assert_eq!(PolygammaOrder::try_from(2).unwrap().order(), 2);
    }

    #[test]
    fn tiny_arguments_overflow_is_reported() {
        assert!(digamma(1e-300).is_ok());
        assert!(trigamma(1e-200).is_err());
    }
}
