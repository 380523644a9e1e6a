//! Link functions for the mean (onto (0,1)) and the precision (onto (0,inf)).
//!
//! Two derivative entries differ from the usual printed tables: the
//! complementary log-log slope is `-(1-mu) ln(1-mu)` and the square-root
//! precision slope is `2 sqrt(phi)`. Both follow from differentiating the
//! inverse link and agree with finite differences.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Predictor magnitude beyond which the inverse mean link is treated as saturated.
pub const ETA_SATURATION: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanLink {
    Logit,
    Probit,
    Cloglog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionLink {
    Identity,
    Log,
    Sqrt,
}

/// Inverse mean link evaluated at a predictor value together with its slope
/// and curvature. `one_minus_mu` is computed directly rather than as `1 - mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanPoint {
    pub mu: f64,
    pub one_minus_mu: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionPoint {
    pub phi: f64,
    pub d1: f64,
    pub d2: f64,
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by a
/// single Halley step against the same `erfc` used by the inverse link, so the
/// two round-trip to about 1e-12.
pub fn std_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    const P_LOW: f64 = 0.02425;

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (-p).ln_1p()).sqrt())
    };
    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    if u.is_finite() {
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("mean {mu} is outside (0, 1)")))
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi > 0.0 && phi.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("precision {phi} is not positive and finite")))
    }
}

impl MeanLink {
    pub const ALL: [MeanLink; 3] = [MeanLink::Logit, MeanLink::Probit, MeanLink::Cloglog];

    pub fn name(self) -> &'static str {
        match self {
            MeanLink::Logit => "logit",
            MeanLink::Probit => "probit",
            MeanLink::Cloglog => "cloglog",
        }
    }

    /// g(mu).
    pub fn link(self, mu: f64) -> Result<f64> {
        check_mu(mu)?;
        Ok(match self {
            MeanLink::Logit => (mu / (1.0 - mu)).ln(),
            MeanLink::Probit => std_normal_quantile(mu),
            MeanLink::Cloglog => (-(-mu).ln_1p()).ln(),
        })
    }

    /// g^{-1}(eta).
    pub fn inverse(self, eta: f64) -> Result<f64> {
        self.eval(eta).map(|p| p.mu)
    }

    /// Inverse link with first and second derivatives in eta.
    pub fn eval(self, eta: f64) -> Result<MeanPoint> {
        if !eta.is_finite() || eta.abs() > ETA_SATURATION {
            return Err(Error::Domain(format!(
                "{} inverse link saturated at eta = {eta}",
                self.name()
            )));
        }
        let point = match self {
            MeanLink::Logit => {
                let (mu, one_minus_mu) = if eta >= 0.0 {
                    let e = (-eta).exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                } else {
                    let e = eta.exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                };
                let d1 = mu * one_minus_mu;
                MeanPoint {
                    mu,
                    one_minus_mu,
                    d1,
                    d2: d1 * (one_minus_mu - mu),
                }
            }
            MeanLink::Probit => {
                let density = std_normal_pdf(eta);
                MeanPoint {
                    mu: std_normal_cdf(eta),
                    one_minus_mu: std_normal_cdf(-eta),
                    d1: density,
                    d2: -eta * density,
                }
            }
            MeanLink::Cloglog => {
                let e = eta.exp();
                let one_minus_mu = (-e).exp();
                let d1 = e * one_minus_mu;
                MeanPoint {
                    mu: -(-e).exp_m1(),
                    one_minus_mu,
                    d1,
                    d2: d1 * (1.0 - e),
                }
            }
        };
        if !(point.mu > 0.0 && point.mu < 1.0 && point.one_minus_mu > 0.0) {
            return Err(Error::Domain(format!(
                "{} inverse link saturated at eta = {eta}",
                self.name()
            )));
        }
        Ok(point)
    }

    /// dmu/deta expressed in terms of mu.
    pub fn dmu_deta(self, mu: f64) -> Result<f64> {
        check_mu(mu)?;
        Ok(match self {
            MeanLink::Logit => mu * (1.0 - mu),
            MeanLink::Probit => std_normal_pdf(std_normal_quantile(mu)),
            MeanLink::Cloglog => -(1.0 - mu) * (-mu).ln_1p(),
        })
    }

    /// d^2 mu / deta^2 expressed in terms of mu.
    pub fn d2mu_deta2(self, mu: f64) -> Result<f64> {
        check_mu(mu)?;
        Ok(match self {
            MeanLink::Logit => mu * (1.0 - mu) * (1.0 - 2.0 * mu),
            MeanLink::Probit => {
                let z = std_normal_quantile(mu);
                -z * std_normal_pdf(z)
            }
            MeanLink::Cloglog => {
                let l = (-mu).ln_1p();
                -(1.0 - mu) * l * (1.0 + l)
            }
        })
    }
}

impl PrecisionLink {
    pub const ALL: [PrecisionLink; 3] =
        [PrecisionLink::Identity, PrecisionLink::Log, PrecisionLink::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            PrecisionLink::Identity => "identity",
            PrecisionLink::Log => "log",
            PrecisionLink::Sqrt => "sqrt",
        }
    }

    pub fn link(self, phi: f64) -> Result<f64> {
        check_phi(phi)?;
        Ok(match self {
            PrecisionLink::Identity => phi,
            PrecisionLink::Log => phi.ln(),
            PrecisionLink::Sqrt => phi.sqrt(),
        })
    }

    pub fn inverse(self, eta: f64) -> Result<f64> {
        self.eval(eta).map(|p| p.phi)
    }

    /// Inverse link with first and second derivatives in eta. The identity and
    /// square-root links require a strictly positive predictor.
    pub fn eval(self, eta: f64) -> Result<PrecisionPoint> {
        if !eta.is_finite() {
            return Err(Error::Domain(format!("precision predictor {eta} is not finite")));
        }
        let point = match self {
            PrecisionLink::Identity | PrecisionLink::Sqrt if eta <= 0.0 => {
                return Err(Error::Domain(format!(
                    "{} precision link needs a positive predictor, got {eta}",
                    self.name()
                )));
            }
            PrecisionLink::Identity => PrecisionPoint {
                phi: eta,
                d1: 1.0,
                d2: 0.0,
            },
            PrecisionLink::Log => {
                let phi = eta.exp();
                PrecisionPoint {
                    phi,
                    d1: phi,
                    d2: phi,
                }
            }
            PrecisionLink::Sqrt => PrecisionPoint {
                phi: eta * eta,
                d1: 2.0 * eta,
                d2: 2.0,
            },
        };
        check_phi(point.phi)?;
        Ok(point)
    }

    pub fn dphi_deta(self, phi: f64) -> Result<f64> {
        check_phi(phi)?;
        Ok(match self {
            PrecisionLink::Identity => 1.0,
            PrecisionLink::Log => phi,
            PrecisionLink::Sqrt => 2.0 * phi.sqrt(),
        })
    }

    pub fn d2phi_deta2(self, phi: f64) -> Result<f64> {
        check_phi(phi)?;
        Ok(match self {
            PrecisionLink::Identity => 0.0,
            PrecisionLink::Log => phi,
            PrecisionLink::Sqrt => 2.0,
        })
    }
}

impl fmt::Display for MeanLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for PrecisionLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeanLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeanLink::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mean link '{s}'")))
    }
}

impl FromStr for PrecisionLink {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PrecisionLink::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown precision link '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_mean_at_zero() {
        assert_eq!(MeanLink::Logit.inverse(0.0).unwrap(), 0.5);
        assert!((MeanLink::Probit.inverse(0.0).unwrap() - 0.5).abs() < 1e-16);
        let cll = MeanLink::Cloglog.inverse(0.0).unwrap();
        assert!((cll - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn table_values() {
        assert!((MeanLink::Logit.dmu_deta(0.5).unwrap() - 0.25).abs() < 1e-16);
        assert!((MeanLink::Logit.dmu_deta(0.2).unwrap() - 0.16).abs() < 1e-15);
        assert!(MeanLink::Logit.d2mu_deta2(0.5).unwrap().abs() < 1e-16);
        assert!((MeanLink::Logit.d2mu_deta2(0.2).unwrap() - 0.096).abs() < 1e-15);
        assert!(MeanLink::Probit.d2mu_deta2(0.5).unwrap().abs() < 1e-15);
        let mu = 1.0 - (-1.0f64).exp();
        let slope = MeanLink::Cloglog.dmu_deta(mu).unwrap();
        assert!((slope - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn precision_table_values() {
        let log = PrecisionLink::Log.eval(0.0).unwrap();
        assert_eq!((log.phi, log.d1, log.d2), (1.0, 1.0, 1.0));
        let id = PrecisionLink::Identity.eval(5.0).unwrap();
        assert_eq!((id.phi, id.d1, id.d2), (5.0, 1.0, 0.0));
        let sq = PrecisionLink::Sqrt.eval(3.0).unwrap();
        assert_eq!((sq.phi, sq.d1, sq.d2), (9.0, 6.0, 2.0));
        assert_eq!(PrecisionLink::Sqrt.dphi_deta(9.0).unwrap(), 6.0);
        assert!(PrecisionLink::Identity.eval(0.0).is_err());
        assert!(PrecisionLink::Identity.eval(-1.0).is_err());
    }

    #[test]
    fn saturation_is_an_error() {
        assert!(MeanLink::Logit.eval(701.0).is_err());
        assert!(MeanLink::Logit.eval(-701.0).is_err());
        assert!(MeanLink::Cloglog.eval(5.0).is_err());
        assert!(MeanLink::Logit.eval(f64::NAN).is_err());
        assert!(MeanLink::Logit.dmu_deta(1.0).is_err());
        assert!(MeanLink::Logit.d2mu_deta2(0.0).is_err());
    }

    #[test]
    fn quantile_matches_cdf() {
        for &p in &[1e-10, 1e-4, 0.01, 0.02425, 0.3, 0.5, 0.8, 0.975, 0.999] {
            let x = std_normal_quantile(p);
            assert!((std_normal_cdf(x) - p).abs() <= 1e-15 + 1e-12 * p, "p = {p}");
        }
        assert!((std_normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn names_round_trip() {
        for l in MeanLink::ALL {
            assert_eq!(l.name().parse::<MeanLink>().unwrap(), l);
        }
        for l in PrecisionLink::ALL {
            assert_eq!(l.to_string().parse::<PrecisionLink>().unwrap(), l);
        }
        assert!("cauchit".parse::<MeanLink>().is_err());
    }
}
