//! Simulation and inference toolkit for multiple-merger coalescents.
//!
//! A finite measure on the unit interval drives an exchangeable coalescent
//! in which several ancestral lines may fuse at once. This crate bundles
//! the pieces needed to work with such genealogies end to end:
//!
//! * [`measures`]: the driving measures (Kingman, Beta, Dirac, point-mass
//!   mixtures, uniform) with exact merger rates and next-jump laws;
//! * [`demography`]: population size histories and the time changes they
//!   induce on the coalescent clock;
//! * [`genealogy`]: jump-chain simulation of sample genealogies, nested
//!   subsamples coupled by restriction, tree functionals, Newick and JSON
//!   serialization;
//! * [`mutstats`]: infinite-sites mutation and the summary statistics used
//!   downstream (site-frequency spectrum, pairwise distances, linkage,
//!   minimal observable clade sizes);
//! * [`analytics`]: exact recursions and Monte Carlo estimators for
//!   root-sharing probabilities, expected tree lengths, and the frequency
//!   of the minimal clade in the infinite-sample limit;
//! * [`cannings`]: discrete-generation Moran-type models whose genealogies
//!   approximate the continuous limits, with convergence diagnostics;
//! * [`abc`]: simulated reference tables and a reproducible random-forest
//!   classifier for model choice between coalescent families.
//!
//! All stochastic routines are deterministic given a `u64` seed; parallel
//! replicates draw from one independent counter-based stream per task so
//! results never depend on thread scheduling.

#![forbid(unsafe_code)]

pub mod abc;
pub mod analytics;
pub mod cannings;
pub mod demography;
mod error;
pub mod genealogy;
pub mod measures;
pub mod mutstats;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use measures::Measure;
