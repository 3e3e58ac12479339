//! Infinite-sites mutations and summary statistics.
//!
//! Mutations fall on the branches of a genealogy as a Poisson process
//! with rate `theta / 2` per unit branch length. Every mutation is a
//! distinct site, identified with the set of individuals below the
//! branch it landed on, so a dataset is just a list of leaf sets. All
//! downstream summaries work on that representation: the site frequency
//! spectrum, nucleotide diversity, the allele-frequency, Hamming and
//! correlation quantiles, and the minimal observable clade sizes.
//!
//! Quantiles interpolate linearly between order statistics (see
//! [`crate::stats::quantile_sorted`]); the levels live in
//! [`QUANTILE_LEVELS`] so the convention is pinned in one place.
//! Replicates with zero or one site still produce complete feature
//! vectors: with no sites every frequency-based statistic is zero and
//! the clade sizes fall back to `n`; with a single site the correlation
//! quantiles are zero.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::genealogy::Genealogy;
use crate::measures::Measure;
use crate::rng::task_rng;
use crate::stats::{harmonic_mean, moments, quantile_sorted};

/// Quantile levels reported for every distributional statistic.
pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Number of entries in a [`StatVector`].
pub const FEATURE_COUNT: usize = 25;

/// Column names of a [`StatVector`], in serialization order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "s",
    "pi",
    "af_q10",
    "af_q30",
    "af_q50",
    "af_q70",
    "af_q90",
    "ham_q10",
    "ham_q30",
    "ham_q50",
    "ham_q70",
    "ham_q90",
    "r2_q10",
    "r2_q30",
    "r2_q50",
    "r2_q70",
    "r2_q90",
    "o_q10",
    "o_q30",
    "o_q50",
    "o_q70",
    "o_q90",
    "o_mean",
    "o_sd",
    "o_harmonic_mean",
];

/// An infinite-sites dataset: each site is the sorted set of individuals
/// (1-based) carrying one mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteMatrix {
    n: u32,
    sites: Vec<Vec<u32>>,
}

impl SiteMatrix {
    /// Builds a dataset, sorting each site and checking that every site
    /// holds between 1 and `n - 1` distinct individuals from `1..=n`.
    pub fn new(n: u32, mut sites: Vec<Vec<u32>>) -> Result<SiteMatrix> {
        if n == 0 {
            return Err(invalid("a site matrix needs at least one individual"));
        }
        for site in &mut sites {
            site.sort_unstable();
            let distinct = site.windows(2).all(|w| w[0] < w[1]);
            let in_range = site.first().is_some_and(|&lo| lo >= 1)
                && site.last().is_some_and(|&hi| hi <= n);
            if !(distinct && in_range) {
                return Err(invalid(
                    "each site must list distinct individuals from 1..=n",
                ));
            }
            if site.len() >= n as usize {
                return Err(invalid(
                    "a site cannot be carried by the whole sample",
                ));
            }
        }
        Ok(SiteMatrix { n, sites })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn sites(&self) -> &[Vec<u32>] {
        &self.sites
    }

    /// Number of segregating sites.
    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    /// Number of carriers of each site.
    pub fn allele_counts(&self) -> Vec<u32> {
        self.sites.iter().map(|s| s.len() as u32).collect()
    }

    /// Site frequency spectrum: entry `i - 1` counts the sites carried
    /// by exactly `i` individuals, for `i` in `1..=n-1`.
    pub fn sfs(&self) -> Vec<u64> {
        let mut spectrum = vec![0u64; self.n.saturating_sub(1) as usize];
        for site in &self.sites {
            spectrum[site.len() - 1] += 1;
        }
        spectrum
    }

    /// Bit rows per individual over sites, for Hamming distances.
    fn individual_bitsets(&self) -> (usize, Vec<u64>) {
        let words = self.sites.len().div_ceil(64);
        let mut rows = vec![0u64; words * self.n as usize];
        for (s, site) in self.sites.iter().enumerate() {
            let (word, bit) = (s / 64, s % 64);
            for &individual in site {
                rows[(individual as usize - 1) * words + word] |= 1u64 << bit;
            }
        }
        (words, rows)
    }

    /// Hamming distances over all unordered pairs of individuals, in
    /// lexicographic pair order.
    pub fn hamming_distances(&self) -> Vec<f64> {
        let n = self.n as usize;
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        if self.sites.is_empty() {
            out.resize(n * (n - 1) / 2, 0.0);
            return out;
        }
        let (words, rows) = self.individual_bitsets();
        for i in 0..n {
            let row_i = &rows[i * words..(i + 1) * words];
            for j in (i + 1)..n {
                let row_j = &rows[j * words..(j + 1) * words];
                let differing: u32 = row_i
                    .iter()
                    .zip(row_j)
                    .map(|(a, b)| (a ^ b).count_ones())
                    .sum();
                out.push(differing as f64);
            }
        }
        out
    }

    /// Nucleotide diversity: the mean pairwise Hamming distance.
    pub fn mean_pairwise_distance(&self) -> f64 {
        if self.n < 2 || self.sites.is_empty() {
            return 0.0;
        }
        let distances = self.hamming_distances();
        distances.iter().sum::<f64>() / distances.len() as f64
    }

    /// Squared allele-frequency correlations over all unordered site
    /// pairs. Empty when fewer than two sites segregate.
    pub fn r_squared_values(&self) -> Vec<f64> {
        let s = self.sites.len();
        if s < 2 {
            return Vec::new();
        }
        let n = self.n as usize;
        let words = n.div_ceil(64);
        let mut masks = vec![0u64; words * s];
        for (idx, site) in self.sites.iter().enumerate() {
            for &individual in site {
                let pos = individual as usize - 1;
                masks[idx * words + pos / 64] |= 1u64 << (pos % 64);
            }
        }
        let nf = n as f64;
        let freqs: Vec<f64> = self.sites.iter().map(|s| s.len() as f64 / nf).collect();
        let mut out = Vec::with_capacity(s * (s - 1) / 2);
        for a in 0..s {
            let mask_a = &masks[a * words..(a + 1) * words];
            for b in (a + 1)..s {
                let mask_b = &masks[b * words..(b + 1) * words];
                let joint: u32 = mask_a
                    .iter()
                    .zip(mask_b)
                    .map(|(x, y)| (x & y).count_ones())
                    .sum();
                let p_ab = joint as f64 / nf;
                let (p_a, p_b) = (freqs[a], freqs[b]);
                let covariance = p_ab - p_a * p_b;
                out.push(covariance * covariance / (p_a * (1.0 - p_a) * p_b * (1.0 - p_b)));
            }
        }
        out
    }

    /// Minimal observable clade size of each individual: the smallest
    /// allele count of a non-private site carrying it, or `n` when every
    /// mutation of that individual is private.
    pub fn observable_clade_sizes(&self) -> Vec<u32> {
        let mut sizes = vec![self.n; self.n as usize];
        for site in &self.sites {
            let count = site.len() as u32;
            if count < 2 {
                continue;
            }
            for &individual in site {
                let slot = &mut sizes[individual as usize - 1];
                if count < *slot {
                    *slot = count;
                }
            }
        }
        sizes
    }

    /// Frequency-based statistics with the degenerate-replicate rules
    /// applied.
    pub fn classic_stats(&self) -> ClassicStats {
        let s = self.sites.len();
        if s == 0 {
            return ClassicStats {
                s: 0,
                pi: 0.0,
                af_quantiles: [0.0; 5],
                ham_quantiles: [0.0; 5],
                r2_quantiles: [0.0; 5],
            };
        }
        let mut counts: Vec<f64> = self.sites.iter().map(|s| s.len() as f64).collect();
        counts.sort_unstable_by(f64::total_cmp);
        let mut distances = self.hamming_distances();
        distances.sort_unstable_by(f64::total_cmp);
        let pi = distances.iter().sum::<f64>() / distances.len() as f64;
        let r2_quantiles = if s == 1 {
            [0.0; 5]
        } else {
            let mut values = self.r_squared_values();
            values.sort_unstable_by(f64::total_cmp);
            quantiles_of(&values)
        };
        ClassicStats {
            s: s as u64,
            pi,
            af_quantiles: quantiles_of(&counts),
            ham_quantiles: quantiles_of(&distances),
            r2_quantiles,
        }
    }

    /// Summary of the minimal observable clade sizes.
    pub fn clade_summary(&self) -> CladeSummary {
        let sizes = self.observable_clade_sizes();
        let mut values: Vec<f64> = sizes.iter().map(|&v| v as f64).collect();
        values.sort_unstable_by(f64::total_cmp);
        let m = moments(&values);
        CladeSummary {
            quantiles: quantiles_of(&values),
            mean: m.mean,
            sd: m.sd,
            harmonic_mean: harmonic_mean(&values),
            sizes,
        }
    }

    /// The full fixed-order feature vector.
    pub fn stat_vector(&self) -> StatVector {
        let classic = self.classic_stats();
        let clades = self.clade_summary();
        let mut values = [0.0f64; FEATURE_COUNT];
        values[0] = classic.s as f64;
        values[1] = classic.pi;
        values[2..7].copy_from_slice(&classic.af_quantiles);
        values[7..12].copy_from_slice(&classic.ham_quantiles);
        values[12..17].copy_from_slice(&classic.r2_quantiles);
        values[17..22].copy_from_slice(&clades.quantiles);
        values[22] = clades.mean;
        values[23] = clades.sd;
        values[24] = clades.harmonic_mean;
        StatVector { values }
    }
}

fn quantiles_of(sorted: &[f64]) -> [f64; 5] {
    let mut out = [0.0f64; 5];
    for (slot, &level) in out.iter_mut().zip(QUANTILE_LEVELS.iter()) {
        *slot = quantile_sorted(sorted, level);
    }
    out
}

/// Frequency-based summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicStats {
    pub s: u64,
    pub pi: f64,
    pub af_quantiles: [f64; 5],
    pub ham_quantiles: [f64; 5],
    pub r2_quantiles: [f64; 5],
}

/// Summary of minimal observable clade sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CladeSummary {
    pub sizes: Vec<u32>,
    pub quantiles: [f64; 5],
    pub mean: f64,
    pub sd: f64,
    pub harmonic_mean: f64,
}

/// The complete feature vector in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct StatVector {
    pub values: [f64; FEATURE_COUNT],
}

impl StatVector {
    /// Value of a named feature.
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&f| f == name)
            .map(|idx| self.values[idx])
    }
}

/// Drops infinite-sites mutations on a genealogy, deterministic in the
/// seed.
pub fn drop_mutations(genealogy: &Genealogy, theta: f64, rng_seed: u64) -> Result<SiteMatrix> {
    drop_mutations_with(genealogy, theta, &mut task_rng(rng_seed, 0))
}

/// As [`drop_mutations`], drawing from a caller-owned stream.
pub fn drop_mutations_with<R: Rng + ?Sized>(
    genealogy: &Genealogy,
    theta: f64,
    rng: &mut R,
) -> Result<SiteMatrix> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(invalid(format!(
            "the mutation rate must be positive, got theta={theta}"
        )));
    }
    let lengths = genealogy.branch_lengths();
    let ranges = genealogy.leaf_ranges();
    let root = genealogy.root() as usize;
    let mut sites: Vec<Vec<u32>> = Vec::new();
    for (block, &length) in lengths.iter().enumerate() {
        if block == root || length <= 0.0 {
            continue;
        }
        let poisson = Poisson::new(0.5 * theta * length)
            .expect("positive branch length gives a valid mean");
        let count = poisson.sample(rng) as u64;
        if count == 0 {
            continue;
        }
        let leaves = ranges.individuals_below(block as u32);
        for _ in 1..count {
            sites.push(leaves.clone());
        }
        sites.push(leaves);
    }
    SiteMatrix::new(genealogy.n(), sites)
}

/// Generalized Watterson calibration: the mutation rate that makes the
/// expected number of segregating sites equal `s_target` under the given
/// measure at sample size `n`.
pub fn watterson_theta(measure: &Measure, n: u32, s_target: f64) -> Result<f64> {
    if !(s_target.is_finite() && s_target > 0.0) {
        return Err(invalid(format!(
            "the target site count must be positive, got {s_target}"
        )));
    }
    let expected_length = crate::analytics::expected_total_length(measure, n)?;
    Ok(2.0 * s_target / expected_length)
}
