//! Population-size profiles and the deterministic time change.
//!
//! A profile gives the relative population size `nu(t)` forward in
//! coalescent time. A time-scale exponent `beta`, fixed by the discrete
//! model the coalescent arose from, turns the profile into the intensity
//!
//! ```text
//! g(t) = integral from 0 to t of nu(s)^(-beta) ds
//! ```
//!
//! which maps real time to the internal clock of the time-changed
//! coalescent. Closed forms cover the constant and exponential-growth
//! profiles, with a log-space branch keeping growth rates up to a
//! thousand finite as long as the double range allows; piecewise
//! profiles integrate and invert segment by segment.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, unsupported, Error, Result};

/// Relative population size as a function of time.
///
/// `Constant` is size one forever. `ExponentialGrowth` has `nu(t) =
/// exp(-rho t)` with `rho >= 0`, so the population shrinks backward in
/// time. `PiecewiseConstant` holds `levels[i]` on the interval between
/// consecutive breakpoints, with the last level extending to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeProfile {
    Constant,
    ExponentialGrowth {
        rho: f64,
    },
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
    },
}

impl SizeProfile {
    pub fn constant() -> SizeProfile {
        SizeProfile::Constant
    }

    pub fn exponential_growth(rho: f64) -> Result<SizeProfile> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(invalid(format!(
                "growth rate must be finite and nonnegative, got rho={rho}"
            )));
        }
        Ok(SizeProfile::ExponentialGrowth { rho })
    }

    /// A profile holding `levels[i]` between `breakpoints[i - 1]` and
    /// `breakpoints[i]`, starting at time zero and ending at infinity.
    pub fn piecewise_constant(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<SizeProfile> {
        let profile = SizeProfile::PiecewiseConstant {
            breakpoints,
            levels,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Checks structural invariants, for profiles built by
    /// deserialization rather than the constructors.
    pub fn validate(&self) -> Result<()> {
        match self {
            SizeProfile::Constant => Ok(()),
            SizeProfile::ExponentialGrowth { rho } => {
                SizeProfile::exponential_growth(*rho).map(|_| ())
            }
            SizeProfile::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                if levels.len() != breakpoints.len() + 1 {
                    return Err(invalid(format!(
                        "piecewise profile needs one more level than breakpoints, got {} levels for {} breakpoints",
                        levels.len(),
                        breakpoints.len()
                    )));
                }
                if levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                    return Err(invalid("piecewise levels must be positive and finite"));
                }
                let increasing = breakpoints.windows(2).all(|w| w[0] < w[1]);
                let positive = breakpoints.first().is_none_or(|b| *b > 0.0);
                if !(increasing && positive && breakpoints.iter().all(|b| b.is_finite())) {
                    return Err(invalid(
                        "piecewise breakpoints must be finite, positive, and strictly increasing",
                    ));
                }
                Ok(())
            }
        }
    }

    /// The relative size `nu(t)`.
    pub fn size_at(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid(format!("time must be nonnegative, got t={t}")));
        }
        Ok(match self {
            SizeProfile::Constant => 1.0,
            SizeProfile::ExponentialGrowth { rho } => (-rho * t).exp(),
            SizeProfile::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                let idx = breakpoints.partition_point(|b| *b <= t);
                levels[idx]
            }
        })
    }
}

/// Which discrete reproduction model fixed the time-scale exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WrightFisher,
    DiracModifiedMoran,
    BetaModifiedMoran,
    SchweinsbergBeta,
}

/// The exponent `beta` applied to the size profile inside the time
/// change, together with the model family that produced it.
///
/// Each provenance pins its own admissible range: the Wright-Fisher
/// scaling is exactly one; a modified Moran model with a point-mass
/// offspring law carries its dust ratio in (0, 2); a modified Moran
/// model with Beta offspring shape `a` in (0, 1) yields `2 - a`; the
/// heavy-tailed Beta model with index `alpha` in [1, 2) yields
/// `alpha - 1`, which vanishes at `alpha = 1` where the coalescent is
/// insensitive to population-size changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExponentRepr", into = "ExponentRepr")]
pub struct TimeScaleExponent {
    beta: f64,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ExponentRepr {
    provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
}

impl From<TimeScaleExponent> for ExponentRepr {
    fn from(e: TimeScaleExponent) -> ExponentRepr {
        ExponentRepr {
            provenance: e.provenance,
            value: Some(e.beta),
        }
    }
}

impl TryFrom<ExponentRepr> for TimeScaleExponent {
    type Error = Error;

    fn try_from(repr: ExponentRepr) -> Result<TimeScaleExponent> {
        match repr.provenance {
            Provenance::WrightFisher => match repr.value {
                None => Ok(TimeScaleExponent::wright_fisher()),
                Some(v) => {
                    if v == 1.0 {
                        Ok(TimeScaleExponent::wright_fisher())
                    } else {
                        Err(invalid(format!(
                            "wright-fisher exponent is fixed at 1, got value={v}"
                        )))
                    }
                }
            },
            Provenance::DiracModifiedMoran => {
                let v = require_value(repr.value, "dirac_modified_moran")?;
                TimeScaleExponent::dirac_modified_moran(v)
            }
            Provenance::BetaModifiedMoran => {
                let v = require_value(repr.value, "beta_modified_moran")?;
                TimeScaleExponent::beta_modified_moran(2.0 - v)
            }
            Provenance::SchweinsbergBeta => {
                let v = require_value(repr.value, "schweinsberg_beta")?;
                TimeScaleExponent::schweinsberg_beta(v + 1.0)
            }
        }
    }
}

fn require_value(value: Option<f64>, provenance: &str) -> Result<f64> {
    value.ok_or_else(|| invalid(format!("exponent provenance {provenance} needs a value")))
}

impl TimeScaleExponent {
    /// The classical scaling, `beta = 1`.
    pub fn wright_fisher() -> TimeScaleExponent {
        TimeScaleExponent {
            beta: 1.0,
            provenance: Provenance::WrightFisher,
        }
    }

    /// Modified Moran model with a point-mass offspring law whose dust
    /// ratio `gamma` lies in (0, 2); the exponent equals `gamma`.
    pub fn dirac_modified_moran(gamma: f64) -> Result<TimeScaleExponent> {
        if !(gamma.is_finite() && gamma > 0.0 && gamma < 2.0) {
            return Err(invalid(format!(
                "dirac modified Moran exponent needs gamma in (0, 2), got {gamma}"
            )));
        }
        Ok(TimeScaleExponent {
            beta: gamma,
            provenance: Provenance::DiracModifiedMoran,
        })
    }

    /// Modified Moran model with Beta(a, b) offspring shape, `a` in
    /// (0, 1); the exponent equals `2 - a`.
    pub fn beta_modified_moran(a: f64) -> Result<TimeScaleExponent> {
        if !(a.is_finite() && a > 0.0 && a < 1.0) {
            return Err(invalid(format!(
                "beta modified Moran exponent needs a in (0, 1), got {a}"
            )));
        }
        Ok(TimeScaleExponent {
            beta: 2.0 - a,
            provenance: Provenance::BetaModifiedMoran,
        })
    }

    /// Heavy-tailed offspring model with index `alpha` in [1, 2); the
    /// exponent equals `alpha - 1` and vanishes at `alpha = 1`.
    pub fn schweinsberg_beta(alpha: f64) -> Result<TimeScaleExponent> {
        if !(alpha.is_finite() && (1.0..2.0).contains(&alpha)) {
            return Err(invalid(format!(
                "heavy-tailed exponent needs alpha in [1, 2), got {alpha}"
            )));
        }
        Ok(TimeScaleExponent {
            beta: alpha - 1.0,
            provenance: Provenance::SchweinsbergBeta,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// A size profile paired with a time-scale exponent, exposing the
/// intensity `g` and its inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChange {
    #[serde(rename = "demography")]
    profile: SizeProfile,
    #[serde(rename = "beta")]
    exponent: TimeScaleExponent,
}

/// Intensities beyond this exponent are evaluated in log space.
const LOG_SPACE_THRESHOLD: f64 = 700.0;

impl TimeChange {
    pub fn new(profile: SizeProfile, exponent: TimeScaleExponent) -> Result<TimeChange> {
        profile.validate()?;
        Ok(TimeChange { profile, exponent })
    }

    pub fn profile(&self) -> &SizeProfile {
        &self.profile
    }

    pub fn exponent(&self) -> TimeScaleExponent {
        self.exponent
    }

    /// Whether the time change is the identity map.
    pub fn is_identity(&self) -> bool {
        self.exponent.beta == 0.0 || self.profile == SizeProfile::Constant
    }

    /// The intensity `g(t)`, strictly increasing in `t` whenever the
    /// exponent is positive. May reach `f64::INFINITY` for extreme
    /// growth; callers treating that as an error should check.
    pub fn intensity(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid(format!("time must be nonnegative, got t={t}")));
        }
        let beta = self.exponent.beta;
        Ok(match &self.profile {
            SizeProfile::Constant => t,
            SizeProfile::ExponentialGrowth { rho } => {
                let scale = beta * rho;
                if scale == 0.0 {
                    t
                } else if scale * t > LOG_SPACE_THRESHOLD {
                    (scale * t - scale.ln()).exp()
                } else {
                    (scale * t).exp_m1() / scale
                }
            }
            SizeProfile::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                let mut acc = 0.0f64;
                let mut start = 0.0f64;
                for (i, level) in levels.iter().enumerate() {
                    let end = breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
                    let stop = t.min(end);
                    if stop > start {
                        acc += (stop - start) * level.powf(-beta);
                    }
                    if t <= end {
                        break;
                    }
                    start = end;
                }
                acc
            }
        })
    }

    /// The inverse map `g^(-1)(u)`, placing an internal-clock time back
    /// on the real-time axis.
    pub fn inverse_intensity(&self, u: f64) -> Result<f64> {
        let beta = self.exponent.beta;
        if beta == 0.0 {
            return Err(unsupported(
                "the intensity is not invertible when the exponent is zero",
            ));
        }
        if u < 0.0 || u.is_nan() {
            return Err(invalid(format!(
                "internal time must be nonnegative, got u={u}"
            )));
        }
        if !u.is_finite() {
            return Err(Error::Numerical(
                "internal time beyond the representable range".into(),
            ));
        }
        Ok(match &self.profile {
            SizeProfile::Constant => u,
            SizeProfile::ExponentialGrowth { rho } => {
                let scale = beta * rho;
                if scale == 0.0 {
                    u
                } else {
                    (scale * u).ln_1p() / scale
                }
            }
            SizeProfile::PiecewiseConstant {
                breakpoints,
                levels,
            } => {
                let mut acc = 0.0f64;
                let mut start = 0.0f64;
                let mut result = None;
                for (i, level) in levels.iter().enumerate() {
                    let end = breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
                    let rate = level.powf(-beta);
                    let segment = (end - start) * rate;
                    if u <= acc + segment || !end.is_finite() {
                        result = Some(start + (u - acc) / rate);
                        break;
                    }
                    acc += segment;
                    start = end;
                }
                result.expect("the last piecewise segment is unbounded")
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    const ROUND_TRIP: f64 = 1e-9;

    fn growth(rho: f64, beta_value: f64) -> TimeChange {
        let exponent = TimeScaleExponent::dirac_modified_moran(beta_value).unwrap();
        TimeChange::new(SizeProfile::exponential_growth(rho).unwrap(), exponent).unwrap()
    }

    #[test]
    fn constant_profile_is_the_identity() {
        let tc = TimeChange::new(SizeProfile::constant(), TimeScaleExponent::wright_fisher())
            .unwrap();
        assert_eq!(tc.intensity(3.7).unwrap(), 3.7);
        assert_eq!(tc.inverse_intensity(2.5).unwrap(), 2.5);
        assert!(tc.is_identity());
    }

    #[test]
    fn growth_intensity_matches_the_closed_form() {
        let tc = growth(0.5, 2.0 - 1e-12);
        assert_relative_eq!(
            tc.intensity(1.0).unwrap(),
            std::f64::consts::E - 1.0,
            max_relative = 1e-9
        );
        let unit_scale = TimeChange::new(
            SizeProfile::exponential_growth(1.0).unwrap(),
            TimeScaleExponent::wright_fisher(),
        )
        .unwrap();
        assert_relative_eq!(
            unit_scale.intensity(1.0).unwrap(),
            std::f64::consts::E - 1.0,
            max_relative = 1e-15
        );
        let tc = growth(1000.0, 1.0);
        assert_eq!(tc.intensity(0.0).unwrap(), 0.0);
    }

    #[test]
    fn growth_inverse_matches_the_closed_form() {
        let tc = growth(0.5, 2.0 - 1e-12);
        assert_relative_eq!(
            tc.inverse_intensity(std::f64::consts::E - 1.0).unwrap(),
            1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn zero_exponent_is_identity_and_not_invertible() {
        let exponent = TimeScaleExponent::schweinsberg_beta(1.0).unwrap();
        assert_eq!(exponent.beta(), 0.0);
        for profile in [
            SizeProfile::constant(),
            SizeProfile::exponential_growth(3.0).unwrap(),
            SizeProfile::piecewise_constant(vec![1.0], vec![2.0, 0.5]).unwrap(),
        ] {
            let tc = TimeChange::new(profile, exponent).unwrap();
            assert!(tc.is_identity());
            for t in [0.0, 0.4, 2.0, 9.5] {
                assert_relative_eq!(tc.intensity(t).unwrap(), t, max_relative = 1e-14);
            }
            assert!(matches!(
                tc.inverse_intensity(1.0),
                Err(Error::Unsupported(_))
            ));
        }
    }

    #[test]
    fn zero_growth_rate_is_the_identity() {
        let tc = growth(0.0, 1.0);
        assert_eq!(tc.intensity(4.2).unwrap(), 4.2);
        assert_eq!(tc.inverse_intensity(4.2).unwrap(), 4.2);
    }

    #[test]
    fn piecewise_intensity_integrates_segment_by_segment() {
        let profile =
            SizeProfile::piecewise_constant(vec![1.0, 3.0], vec![1.0, 2.0, 4.0]).unwrap();
        let tc = TimeChange::new(profile, TimeScaleExponent::wright_fisher()).unwrap();
        assert_relative_eq!(tc.intensity(2.0).unwrap(), 1.5, max_relative = 1e-14);
        assert_relative_eq!(tc.intensity(4.0).unwrap(), 2.25, max_relative = 1e-14);
        assert_relative_eq!(tc.inverse_intensity(1.5).unwrap(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(
            tc.inverse_intensity(2.25).unwrap(),
            4.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn extreme_growth_stays_ordered_in_log_space() {
        let tc = growth(1000.0, 1.0);
        let moderate = tc.intensity(0.69).unwrap();
        let large = tc.intensity(0.705).unwrap();
        assert!(moderate.is_finite() && large.is_finite());
        assert!(large > moderate);
        assert!(tc.intensity(1.0).unwrap().is_infinite());
    }

    #[test]
    fn round_trip_over_random_internal_times() {
        let cases = [
            growth(0.5, 1.7),
            growth(2.0, 1.0),
            TimeChange::new(
                SizeProfile::piecewise_constant(vec![0.5, 2.0], vec![0.3, 1.0, 5.0]).unwrap(),
                TimeScaleExponent::beta_modified_moran(0.25).unwrap(),
            )
            .unwrap(),
        ];
        let mut rng = crate::rng::task_rng(9, 0);
        for tc in &cases {
            let mut previous = -1.0f64;
            for _ in 0..100 {
                let u: f64 = rng.random_range(0.0..1e3);
                let t = tc.inverse_intensity(u).unwrap();
                let back = tc.intensity(t).unwrap();
                assert_relative_eq!(back, u, max_relative = ROUND_TRIP, epsilon = ROUND_TRIP);
                let again = tc.inverse_intensity(u + 1.0).unwrap();
                assert!(again > t, "inverse must be strictly increasing");
                let _ = previous;
                previous = t;
            }
        }
    }

    #[test]
    fn domain_errors_are_reported() {
        let tc = growth(0.5, 1.0);
        assert!(tc.intensity(-1.0).is_err());
        assert!(tc.inverse_intensity(-0.5).is_err());
        assert!(matches!(
            tc.inverse_intensity(f64::INFINITY),
            Err(Error::Numerical(_))
        ));
        assert!(SizeProfile::exponential_growth(-0.1).is_err());
    }

    #[test]
    fn piecewise_construction_is_validated() {
        assert!(SizeProfile::piecewise_constant(vec![1.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(SizeProfile::piecewise_constant(vec![2.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(SizeProfile::piecewise_constant(vec![1.0], vec![1.0]).is_err());
        assert!(SizeProfile::piecewise_constant(vec![1.0], vec![1.0, 0.0]).is_err());
        assert!(SizeProfile::piecewise_constant(vec![-1.0], vec![1.0, 2.0]).is_err());
        assert!(SizeProfile::piecewise_constant(vec![], vec![4.0]).is_ok());
    }

    #[test]
    fn exponent_constructors_enforce_their_ranges() {
        assert_eq!(TimeScaleExponent::wright_fisher().beta(), 1.0);
        assert!(TimeScaleExponent::dirac_modified_moran(2.0).is_err());
        assert!(TimeScaleExponent::dirac_modified_moran(0.0).is_err());
        assert_eq!(
            TimeScaleExponent::beta_modified_moran(0.25).unwrap().beta(),
            1.75
        );
        assert!(TimeScaleExponent::beta_modified_moran(1.0).is_err());
        assert_eq!(
            TimeScaleExponent::schweinsberg_beta(1.5).unwrap().beta(),
            0.5
        );
        assert!(TimeScaleExponent::schweinsberg_beta(2.0).is_err());
        assert!(TimeScaleExponent::schweinsberg_beta(0.99).is_err());
    }

    #[test]
    fn json_round_trip_keeps_the_documented_shape() {
        let tc = TimeChange::new(
            SizeProfile::exponential_growth(0.5).unwrap(),
            TimeScaleExponent::schweinsberg_beta(1.5).unwrap(),
        )
        .unwrap();
        let text = serde_json::to_string(&tc).unwrap();
        assert!(text.contains("\"demography\""));
        assert!(text.contains("\"kind\""));
        assert!(text.contains("\"beta\""));
        assert!(text.contains("\"provenance\""));
        let back: TimeChange = serde_json::from_str(&text).unwrap();
        assert_eq!(tc, back);
    }

    #[test]
    fn exponent_deserialization_validates_per_provenance() {
        let good = r#"{"provenance":"dirac_modified_moran","value":0.8}"#;
        let e: TimeScaleExponent = serde_json::from_str(good).unwrap();
        assert_eq!(e.beta(), 0.8);
        let bad = r#"{"provenance":"dirac_modified_moran","value":2.5}"#;
        assert!(serde_json::from_str::<TimeScaleExponent>(bad).is_err());
        let fixed = r#"{"provenance":"wright_fisher"}"#;
        let e: TimeScaleExponent = serde_json::from_str(fixed).unwrap();
        assert_eq!(e.beta(), 1.0);
        let alpha_one = r#"{"provenance":"schweinsberg_beta","value":0.0}"#;
        let e: TimeScaleExponent = serde_json::from_str(alpha_one).unwrap();
        assert_eq!(e.beta(), 0.0);
    }
}
