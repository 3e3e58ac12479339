//! Run descriptions shared by flags and JSON config files.
//!
//! Every command can be driven either by flags or by a JSON document whose
//! fields mirror the flag names, so a run is reproducible from the single
//! `config` object echoed into the output metadata. The types here parse
//! both forms and convert them into validated domain values; anything that
//! fails at this stage is a usage error rather than a runtime error.

use std::fmt;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use multimerger::abc::{ClassPrior, ModelClass, DEFAULT_S_SUPPORT};
use multimerger::analytics::{expected_total_length, kingman_growth_expected_total_length};
use multimerger::cannings::OffspringVariant;
use multimerger::demography::{SizeProfile, TimeChange, TimeScaleExponent};
use multimerger::measures::Measure;

/// Error for invalid command lines and config files; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

/// How the parameters of a beta measure are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BetaProvenance {
    /// One-parameter family: `alpha` selects Beta(2 - alpha, alpha).
    Alpha,
    /// Explicit shape parameters `a` and `b`.
    Shape,
}

/// A measure family plus its parameters, as written in configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<BetaProvenance>,
}

/// Parameter payload of the `--params` flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureParams {
    pub alpha: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub p: Option<f64>,
    pub psi: Option<f64>,
}

impl MeasureSpec {
    pub fn from_flags(
        name: &str,
        params: Option<&str>,
        provenance: Option<BetaProvenance>,
    ) -> Result<MeasureSpec> {
        let params: MeasureParams = match params {
            Some(text) => serde_json::from_str(text)
                .map_err(|error| usage(format!("cannot parse --params: {error}")))?,
            None => MeasureParams::default(),
        };
        Ok(MeasureSpec {
            name: name.to_string(),
            alpha: params.alpha,
            a: params.a,
            b: params.b,
            p: params.p,
            psi: params.psi,
            provenance,
        })
    }

    /// Validates the combination and builds the domain measure.
    pub fn build(&self) -> Result<Measure> {
        let set: Vec<&str> = [
            ("alpha", self.alpha.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("p", self.p.is_some()),
            ("psi", self.psi.is_some()),
        ]
        .iter()
        .filter(|(_, present)| *present)
        .map(|(name, _)| *name)
        .collect();
        let expect = |wanted: &[&str]| -> Result<()> {
            if set != wanted {
                return Err(usage(format!(
                    "measure {} takes parameters {:?}, got {:?}",
                    self.name, wanted, set
                )));
            }
            Ok(())
        };
        let measure = match self.name.as_str() {
            "kingman" => {
                expect(&[])?;
                Measure::Kingman
            }
            "bsz" | "bolthausen-sznitman" => {
                expect(&[])?;
                Measure::bolthausen_sznitman()
            }
            "beta" => match self.provenance.unwrap_or(BetaProvenance::Alpha) {
                BetaProvenance::Alpha => {
                    expect(&["alpha"])?;
                    Measure::beta_from_alpha(self.alpha.unwrap())
                        .map_err(|error| usage(error.to_string()))?
                }
                BetaProvenance::Shape => {
                    expect(&["a", "b"])?;
                    Measure::beta(self.a.unwrap(), self.b.unwrap())
                        .map_err(|error| usage(error.to_string()))?
                }
            },
            "dirac" => {
                expect(&["p"])?;
                Measure::dirac(self.p.unwrap()).map_err(|error| usage(error.to_string()))?
            }
            "eldon-wakeley" => {
                expect(&["psi"])?;
                Measure::eldon_wakeley(self.psi.unwrap())
                    .map_err(|error| usage(error.to_string()))?
            }
            other => {
                return Err(usage(format!(
                    "unknown measure {other}; expected kingman, bsz, beta, dirac or eldon-wakeley"
                )));
            }
        };
        Ok(measure)
    }
}

/// Population-size profile, as written in configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant,
    ExponentialGrowth { rho: f64 },
    PiecewiseConstant { breakpoints: Vec<f64>, levels: Vec<f64> },
}

/// Time-scale exponent linking population size to coalescence speed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentSpec {
    WrightFisher,
    DiracModifiedMoran { gamma: f64 },
    BetaModifiedMoran { a: f64 },
    SchweinsbergBeta { alpha: f64 },
}

/// Deterministic time change applied to simulated genealogies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographySpec {
    pub profile: ProfileSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentSpec>,
}

impl DemographySpec {
    pub fn parse(text: &str) -> Result<DemographySpec> {
        serde_json::from_str(text)
            .map_err(|error| usage(format!("cannot parse --demography: {error}")))
    }

    pub fn to_time_change(&self) -> Result<TimeChange> {
        let profile = match &self.profile {
            ProfileSpec::Constant => SizeProfile::constant(),
            ProfileSpec::ExponentialGrowth { rho } => {
                SizeProfile::exponential_growth(*rho).map_err(|error| usage(error.to_string()))?
            }
            ProfileSpec::PiecewiseConstant { breakpoints, levels } => {
                SizeProfile::piecewise_constant(breakpoints.clone(), levels.clone())
                    .map_err(|error| usage(error.to_string()))?
            }
        };
        let exponent = match &self.exponent {
            None | Some(ExponentSpec::WrightFisher) => TimeScaleExponent::wright_fisher(),
            Some(ExponentSpec::DiracModifiedMoran { gamma }) => {
                TimeScaleExponent::dirac_modified_moran(*gamma)
                    .map_err(|error| usage(error.to_string()))?
            }
            Some(ExponentSpec::BetaModifiedMoran { a }) => {
                TimeScaleExponent::beta_modified_moran(*a)
                    .map_err(|error| usage(error.to_string()))?
            }
            Some(ExponentSpec::SchweinsbergBeta { alpha }) => {
                TimeScaleExponent::schweinsberg_beta(*alpha)
                    .map_err(|error| usage(error.to_string()))?
            }
        };
        TimeChange::new(profile, exponent).map_err(|error| usage(error.to_string()))
    }
}

/// Full description of a `simulate` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub measure: MeasureSpec,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demography: Option<DemographySpec>,
    pub reps: u64,
    pub seed: u64,
    #[serde(default)]
    pub newick: bool,
}

impl SimulateSpec {
    /// Resolves the mutation rate, converting a target site count through
    /// the expected tree length where a formula is available.
    pub fn effective_theta(&self, measure: &Measure) -> Result<Option<f64>> {
        match (self.theta, self.s_target) {
            (Some(_), Some(_)) => Err(usage("give either theta or s-target, not both")),
            (Some(theta), None) => {
                if !(theta.is_finite() && theta > 0.0) {
                    return Err(usage(format!("theta must be positive, got {theta}")));
                }
                Ok(Some(theta))
            }
            (None, Some(target)) => {
                if !(target.is_finite() && target > 0.0) {
                    return Err(usage(format!("s-target must be positive, got {target}")));
                }
                let length = self.expected_length(measure)?;
                Ok(Some(2.0 * target / length))
            }
            (None, None) => Ok(None),
        }
    }

    fn expected_length(&self, measure: &Measure) -> Result<f64> {
        match &self.demography {
            None | Some(DemographySpec { profile: ProfileSpec::Constant, exponent: _ }) => {
                expected_total_length(measure, self.n).map_err(|error| usage(error.to_string()))
            }
            Some(DemographySpec {
                profile: ProfileSpec::ExponentialGrowth { rho },
                exponent: None | Some(ExponentSpec::WrightFisher),
            }) if *measure == Measure::Kingman => {
                kingman_growth_expected_total_length(self.n, *rho)
                    .map_err(|error| usage(error.to_string()))
            }
            Some(_) => Err(usage(
                "s-target needs a constant-size run or a kingman run with exponential growth; \
                 give theta directly for other demographies",
            )),
        }
    }
}

/// Full description of a `pshare` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PshareSpec {
    pub measure: MeasureSpec,
    pub n: Vec<u32>,
    pub m: Vec<u32>,
}

/// One model class in an `abc` config: either a built-in name or a full
/// prior description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassSpec {
    Named(String),
    Custom {
        name: String,
        #[serde(flatten)]
        prior: ClassPrior,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s_support: Option<Vec<u32>>,
    },
}

impl ClassSpec {
    pub fn to_model_class(&self) -> Result<ModelClass> {
        match self {
            ClassSpec::Named(name) => match name.as_str() {
                "beta_family" => Ok(ModelClass::beta_family()),
                "kingman_growth" => Ok(ModelClass::kingman_growth()),
                other => Err(usage(format!(
                    "unknown class {other}; expected beta_family, kingman_growth or a full \
                     class object"
                ))),
            },
            ClassSpec::Custom { name, prior, s_support } => {
                let support = s_support.clone().unwrap_or_else(|| DEFAULT_S_SUPPORT.to_vec());
                ModelClass::new(name, prior.clone(), &support)
                    .map_err(|error| usage(error.to_string()))
            }
        }
    }
}

/// Full description of an `abc` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSpec {
    pub classes: Vec<ClassSpec>,
    pub rows_per_class: u64,
    pub sample_size: u32,
    pub n_trees: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mtry: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_node_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    pub seed: u64,
}

/// Discrete-model offspring mechanism, as written in configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantSpec {
    FirstMergerBlock,
    ThinnedFirstMergerBlock { gamma_b: f64 },
}

impl VariantSpec {
    pub fn to_variant(&self) -> OffspringVariant {
        match self {
            VariantSpec::FirstMergerBlock => OffspringVariant::FirstMergerBlock,
            VariantSpec::ThinnedFirstMergerBlock { gamma_b } => {
                OffspringVariant::ThinnedFirstMergerBlock { gamma_b: *gamma_b }
            }
        }
    }
}

/// Full description of a `cannings-validate` run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanningsSpec {
    pub measure: MeasureSpec,
    pub variant: VariantSpec,
    pub n: u32,
    pub populations: Vec<u32>,
    pub reps: u64,
    pub seed: u64,
    /// Growth rate of the discrete population; the convergence report is
    /// defined for constant size, so only 0 is accepted and it selects the
    /// same run as omitting the field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl CanningsSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(rho) = self.rho {
            if rho != 0.0 {
                return Err(usage(format!(
                    "the convergence report compares against the constant-size limit; \
                     rho must be 0 when given, got {rho}"
                )));
            }
        }
        Ok(())
    }
}

pub fn read_config<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|error| usage(format!("cannot read config {}: {error}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|error| usage(format!("cannot parse config {}: {error}", path.display())))
}
