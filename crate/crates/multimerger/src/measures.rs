//! Coalescent driving measures and their merger-rate laws.
//!
//! A finite measure on the unit interval determines a multiple-merger
//! coalescent through the rates
//!
//! ```text
//! rate(n, k) = integral over [0,1] of x^(k-2) (1-x)^(n-k) d(measure)
//! ```
//!
//! at which a fixed set of `k` out of `n` blocks merges. This module
//! implements the supported measure families with closed-form rates, the
//! induced jump distribution over merger sizes, and the constants that
//! describe the dust component (singleton blocks that persist for a
//! positive time).
//!
//! All rate computations run in log space so block counts up to ten
//! thousand stay inside the double-precision range.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, numerical, Result};
use crate::special::{ln_beta, ln_choose, log_sum_exp};

/// A driving measure for a multiple-merger coalescent.
///
/// Construct through the validating constructors ([`Measure::beta`],
/// [`Measure::dirac`], and friends); they reject parameters outside the
/// open domains below. Every family is normalized to total mass one.
///
/// - `Kingman`: unit atom at zero, producing only pairwise mergers.
/// - `Beta { a, b }`: the Beta(a, b) probability density, `a, b > 0`.
/// - `Dirac { p }`: unit atom at `p`, with `p` strictly inside (0, 1).
/// - `EldonWakeley { psi }`: mixture of an atom at zero with weight
///   `2 / (2 + psi^2)` and an atom at `psi` with weight
///   `psi^2 / (2 + psi^2)`.
/// - `BolthausenSznitman`: the uniform measure, identical in behavior to
///   `Beta { a: 1, b: 1 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Measure {
    Kingman,
    Beta { a: f64, b: f64 },
    Dirac { p: f64 },
    EldonWakeley { psi: f64 },
    BolthausenSznitman,
}

/// Dust-related constants of a measure.
///
/// `mu_minus_one` is the integral of `1/x` against the measure, with
/// `f64::INFINITY` when it diverges. The measure has dust exactly when
/// that integral is finite, and `gamma` is then the ratio of the total
/// mass to `mu_minus_one`, which always lands in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DustProfile {
    pub mu_minus_one: f64,
    pub has_dust: bool,
    pub gamma: Option<f64>,
}

impl Measure {
    /// The unit atom at zero.
    pub fn kingman() -> Measure {
        Measure::Kingman
    }

    /// The Beta(a, b) density with both shape parameters positive.
    pub fn beta(a: f64, b: f64) -> Result<Measure> {
        if !(a.is_finite() && a > 0.0) || !(b.is_finite() && b > 0.0) {
            return Err(invalid(format!(
                "beta measure needs positive shape parameters, got a={a}, b={b}"
            )));
        }
        Ok(Measure::Beta { a, b })
    }

    /// The Beta family in its stable-index parameterization.
    ///
    /// `alpha` in (0, 2) maps to `Beta { a: 2 - alpha, b: alpha }`, so
    /// `alpha = 1` is the uniform measure and `alpha` near 2 approaches
    /// the Kingman regime.
    pub fn beta_from_alpha(alpha: f64) -> Result<Measure> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 2.0) {
            return Err(invalid(format!(
                "beta index must lie strictly inside (0, 2), got alpha={alpha}"
            )));
        }
        Measure::beta(2.0 - alpha, alpha)
    }

    /// The unit atom at `p`, strictly inside (0, 1).
    pub fn dirac(p: f64) -> Result<Measure> {
        if !(p.is_finite() && p > 0.0 && p < 1.0) {
            return Err(invalid(format!(
                "dirac atom must lie strictly inside (0, 1), got p={p}"
            )));
        }
        Ok(Measure::Dirac { p })
    }

    /// The two-atom mixture with reproduction fraction `psi` in (0, 1).
    pub fn eldon_wakeley(psi: f64) -> Result<Measure> {
        if !(psi.is_finite() && psi > 0.0 && psi < 1.0) {
            return Err(invalid(format!(
                "eldon-wakeley atom must lie strictly inside (0, 1), got psi={psi}"
            )));
        }
        Ok(Measure::EldonWakeley { psi })
    }

    /// The uniform measure on the unit interval.
    pub fn bolthausen_sznitman() -> Measure {
        Measure::BolthausenSznitman
    }

    /// Checks the parameter domains, for measures built outside the
    /// validating constructors (deserialization in particular).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Measure::Kingman | Measure::BolthausenSznitman => Ok(()),
            Measure::Beta { a, b } => Measure::beta(a, b).map(|_| ()),
            Measure::Dirac { p } => Measure::dirac(p).map(|_| ()),
            Measure::EldonWakeley { psi } => Measure::eldon_wakeley(psi).map(|_| ()),
        }
    }

    /// Parses and validates a measure from its JSON form
    /// `{"family": "...", "params": {...}}`.
    pub fn from_json(text: &str) -> Result<Measure> {
        let measure: Measure = serde_json::from_str(text)?;
        measure.validate()?;
        Ok(measure)
    }

    /// Total mass of the measure. All supported families are normalized.
    pub fn total_mass(&self) -> f64 {
        1.0
    }

    /// Rate at which a fixed set of `k` out of `n` blocks merges.
    pub fn merger_rate(&self, n: u32, k: u32) -> Result<f64> {
        if n < 2 || k < 2 || k > n {
            return Err(invalid(format!(
                "merger rate needs 2 <= k <= n, got n={n}, k={k}"
            )));
        }
        Ok(match *self {
            Measure::Kingman => {
                if k == 2 {
                    1.0
                } else {
                    0.0
                }
            }
            Measure::EldonWakeley { psi } => {
                let weight_zero = 2.0 / (2.0 + psi * psi);
                let weight_psi = 1.0 - weight_zero;
                let kingman_part = if k == 2 { weight_zero } else { 0.0 };
                kingman_part + weight_psi * atom_rate(psi, n, k)
            }
            _ => self.ln_merger_rate(n, k).exp(),
        })
    }

    /// Log of the merger rate, negative infinity for a zero rate.
    fn ln_merger_rate(&self, n: u32, k: u32) -> f64 {
        debug_assert!(2 <= k && k <= n);
        let (n, k) = (n as f64, k as f64);
        match *self {
            Measure::Kingman => {
                if k == 2.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Measure::Dirac { p } => (k - 2.0) * p.ln() + (n - k) * (1.0 - p).ln(),
            Measure::Beta { a, b } => ln_beta(k - 2.0 + a, n - k + b) - ln_beta(a, b),
            Measure::BolthausenSznitman => ln_beta(k - 1.0, n - k + 1.0),
            Measure::EldonWakeley { psi } => {
                let weight_zero = 2.0 / (2.0 + psi * psi);
                let weight_psi = 1.0 - weight_zero;
                let ln_atom =
                    weight_psi.ln() + (k - 2.0) * psi.ln() + (n - k) * (1.0 - psi).ln();
                if k == 2.0 {
                    log_sum_exp(&[weight_zero.ln(), ln_atom])
                } else {
                    ln_atom
                }
            }
        }
    }

    /// Jump law of the block-counting process when `n` blocks are
    /// present: the total merger rate and the distribution of the merger
    /// size `k`.
    pub fn transition_distribution(&self, n: u32) -> Result<Transition> {
        if n < 2 {
            return Err(invalid(format!(
                "transition distribution needs n >= 2, got n={n}"
            )));
        }
        let mut ln_weights = Vec::with_capacity(n as usize - 1);
        for k in 2..=n {
            ln_weights
                .push(ln_choose(n as u64, k as u64) + self.ln_merger_rate(n, k));
        }
        let ln_total = log_sum_exp(&ln_weights);
        if !ln_total.is_finite() {
            return Err(numerical(format!(
                "total merger rate is not positive and finite for n={n}"
            )));
        }
        let probs: Vec<f64> = ln_weights.iter().map(|lw| (lw - ln_total).exp()).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0f64;
        for &p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(Transition {
            n,
            total_rate: ln_total.exp(),
            probs,
            cdf,
        })
    }

    /// Dust constants of the measure.
    pub fn dust_profile(&self) -> DustProfile {
        let mu_minus_one = match *self {
            Measure::Kingman | Measure::BolthausenSznitman | Measure::EldonWakeley { .. } => {
                f64::INFINITY
            }
            Measure::Dirac { p } => 1.0 / p,
            Measure::Beta { a, b } => {
                if a > 1.0 {
                    (a + b - 1.0) / (a - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        };
        let has_dust = mu_minus_one.is_finite();
        DustProfile {
            mu_minus_one,
            has_dust,
            gamma: has_dust.then(|| self.total_mass() / mu_minus_one),
        }
    }

    /// Integral of `1 / x^2` against the measure, with `f64::INFINITY`
    /// when it diverges. Finiteness is exactly the condition under which
    /// the coalescent can be simulated as a finite-rate point process of
    /// candidate merger events.
    pub fn reciprocal_second_moment(&self) -> f64 {
        match *self {
            Measure::Dirac { p } => 1.0 / (p * p),
            Measure::Beta { a, b } if a > 2.0 => {
                (a + b - 1.0) * (a + b - 2.0) / ((a - 1.0) * (a - 2.0))
            }
            _ => f64::INFINITY,
        }
    }
}

/// Rate contribution of a unit atom at `x`.
fn atom_rate(x: f64, n: u32, k: u32) -> f64 {
    ((k as f64 - 2.0) * x.ln() + (n as f64 - k as f64) * (1.0 - x).ln()).exp()
}

/// Jump law of the block-counting process at a fixed block count.
///
/// `probs()[i]` is the probability that the next merger involves
/// `i + 2` blocks; the vector covers merger sizes 2 through `n`.
#[derive(Debug, Clone)]
pub struct Transition {
    n: u32,
    total_rate: f64,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Transition {
    /// Block count this law applies to.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Total rate at which some merger happens.
    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// Distribution of the merger size over `k = 2..=n`.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability that the next merger has size `k`.
    pub fn prob(&self, k: u32) -> f64 {
        assert!(2 <= k && k <= self.n, "merger size out of range");
        self.probs[(k - 2) as usize]
    }

    /// Samples a merger size by inverting the cumulative distribution.
    pub fn sample_k<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let idx = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1);
        idx as u32 + 2
    }
}
