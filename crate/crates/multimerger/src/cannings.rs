//! Discrete Moran-type population models whose genealogies approximate
//! multiple-merger coalescents.
//!
//! Every generation one uniformly chosen parent leaves a family of `U`
//! offspring, `U - 1` other parents leave none, and each remaining parent
//! leaves exactly one. Two family-size laws are supported.
//! [`OffspringVariant::FirstMergerBlock`] draws `U` as the block size of the
//! first merger of the measure's coalescent started from `N` lineages.
//! [`OffspringVariant::ThinnedFirstMergerBlock`] keeps that draw with
//! probability `N^{-gamma_b}` and otherwise produces an ordinary pair, which
//! shrinks the pair-coalescence probability towards zero even for measures
//! whose unthinned family law keeps it bounded away from zero.
//!
//! Tracing a sample backwards through these steps yields a
//! [`DiscreteGenealogy`]. Offspring slots are exchangeable, so the sampled
//! lineages land in the large family like draws from an urn without
//! replacement; a backward step therefore needs only the family size and a
//! multivariate hypergeometric draw, never the full offspring assignment.
//! When the population size is constant the chain is also skipped over the
//! geometrically distributed stretches of mergerless generations. Both
//! routes sample the same law and the tests compare them directly.
//!
//! [`convergence_check`] measures, via two-sample Kolmogorov-Smirnov
//! distances, how the rescaled discrete genealogies approach the measure's
//! coalescent as the population grows.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::genealogy::Simulator;
use crate::measures::{Measure, Transition};
use crate::rng::task_rng;
use crate::special::hypergeom_weight;
use crate::stats::{ks_pvalue, ks_statistic, McEstimate};

/// Family-size law used by the modified Moran step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OffspringVariant {
    /// `U` is distributed as the size of the block created by the first
    /// merger of the measure's coalescent started from `N` lineages.
    FirstMergerBlock,
    /// The first-merger draw is kept with probability `N^{-gamma_b}` and
    /// replaced by an ordinary pair otherwise; `gamma_b` must lie strictly
    /// between one and two.
    ThinnedFirstMergerBlock { gamma_b: f64 },
}

impl OffspringVariant {
    fn validate(&self) -> Result<()> {
        if let OffspringVariant::ThinnedFirstMergerBlock { gamma_b } = *self {
            if !(gamma_b > 1.0 && gamma_b < 2.0) {
                return Err(invalid(format!(
                    "the thinning exponent must lie strictly between 1 and 2, got {gamma_b}"
                )));
            }
        }
        Ok(())
    }

    /// Probability of keeping the first-merger draw in a population of
    /// `n_parents`; one for the unthinned variant.
    fn keep_probability(&self, n_parents: u32) -> f64 {
        match *self {
            OffspringVariant::FirstMergerBlock => 1.0,
            OffspringVariant::ThinnedFirstMergerBlock { gamma_b } => {
                f64::from(n_parents).powf(-gamma_b)
            }
        }
    }
}

/// Deterministic population-size profile, indexed backwards in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum DiscreteSizeProfile {
    /// Every generation has the initial size.
    Constant,
    /// Generation `r` in the past has size `floor(N0 (1 - c rho)^r)` where
    /// `c` is the model's pair-coalescence probability, so the population
    /// grows exponentially forwards in time.
    ExponentialDecline { rho: f64 },
}

impl DiscreteSizeProfile {
    fn validate(&self) -> Result<()> {
        if let DiscreteSizeProfile::ExponentialDecline { rho } = *self {
            if !(rho.is_finite() && rho >= 0.0) {
                return Err(invalid(format!(
                    "the decline rate must be finite and nonnegative, got {rho}"
                )));
            }
        }
        Ok(())
    }
}

/// A Cannings population with one large family per generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedMoranModel {
    measure: Measure,
    variant: OffspringVariant,
    initial_population: u32,
    profile: DiscreteSizeProfile,
    pair_probability: f64,
}

impl ModifiedMoranModel {
    /// A model with `initial_population >= 2` individuals at the sampling
    /// generation. A declining profile must satisfy `rho c < 1` for the
    /// pair-coalescence probability `c` at the initial size, otherwise the
    /// very first backward step would empty the population.
    pub fn new(
        measure: &Measure,
        variant: OffspringVariant,
        initial_population: u32,
        profile: DiscreteSizeProfile,
    ) -> Result<ModifiedMoranModel> {
        variant.validate()?;
        profile.validate()?;
        if initial_population < 2 {
            return Err(invalid(format!(
                "the population needs at least two individuals, got {initial_population}"
            )));
        }
        let pair_probability = pair_probability_at(measure, variant, initial_population)?;
        if let DiscreteSizeProfile::ExponentialDecline { rho } = profile {
            if rho * pair_probability >= 1.0 {
                return Err(invalid(format!(
                    "the per-generation decline {} must stay below one",
                    rho * pair_probability
                )));
            }
        }
        Ok(ModifiedMoranModel {
            measure: *measure,
            variant,
            initial_population,
            profile,
            pair_probability,
        })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn variant(&self) -> OffspringVariant {
        self.variant
    }

    pub fn initial_population(&self) -> u32 {
        self.initial_population
    }

    pub fn profile(&self) -> DiscreteSizeProfile {
        self.profile
    }

    /// Probability that two distinct offspring share a parent across one
    /// generation at the initial population size, computed exactly as
    /// `E[U(U-1)] / (N(N-1))` from the family-size distribution.
    pub fn coalescence_probability(&self) -> f64 {
        self.pair_probability
    }

    /// Population size `r` generations before the sampling generation.
    pub fn population_at(&self, r: u64) -> u32 {
        match self.profile {
            DiscreteSizeProfile::Constant => self.initial_population,
            DiscreteSizeProfile::ExponentialDecline { rho } => {
                let factor = 1.0 - rho * self.pair_probability;
                let size = f64::from(self.initial_population) * factor.powf(r as f64);
                size.floor() as u32
            }
        }
    }

    /// Draws one family size for a generation with `n_parents` parents.
    ///
    /// Builds the first-merger distribution on each call; the simulation
    /// routes cache it per population size instead.
    pub fn sample_family_size<R: Rng + ?Sized>(
        &self,
        n_parents: u32,
        rng: &mut R,
    ) -> Result<u32> {
        let mut law = FamilyLaw::new(self);
        law.sample(n_parents, rng)
    }

    /// Traces `n` sampled individuals backwards to their common ancestor.
    pub fn simulate_genealogy(&self, n: u32, rng_seed: u64) -> Result<DiscreteGenealogy> {
        let mut rng = task_rng(rng_seed, 0);
        self.simulate_genealogy_with(n, &mut rng)
    }

    /// As [`simulate_genealogy`](Self::simulate_genealogy) with a caller
    /// supplied generator, for replicate loops.
    pub fn simulate_genealogy_with<R: Rng + ?Sized>(
        &self,
        n: u32,
        rng: &mut R,
    ) -> Result<DiscreteGenealogy> {
        if n < 1 {
            return Err(invalid("the sample needs at least one individual"));
        }
        if n > self.initial_population {
            return Err(invalid(format!(
                "a sample of {n} exceeds the population of {}",
                self.initial_population
            )));
        }
        if n == 1 {
            return Ok(DiscreteGenealogy {
                n,
                merges: Vec::new(),
                absorption_generation: 0,
            });
        }
        let constant = match self.profile {
            DiscreteSizeProfile::Constant => true,
            DiscreteSizeProfile::ExponentialDecline { rho } => rho == 0.0,
        };
        if constant {
            self.simulate_skip_ahead(n, rng)
        } else {
            self.simulate_per_generation(n, rng)
        }
    }

    /// Constant-size route: waits between mergers are geometric, so whole
    /// mergerless stretches are sampled in one draw. The family size and the
    /// number of absorbed lineages are then drawn from their laws
    /// conditioned on the generation containing a merger.
    fn simulate_skip_ahead<R: Rng + ?Sized>(
        &self,
        n: u32,
        rng: &mut R,
    ) -> Result<DiscreteGenealogy> {
        let population = self.initial_population;
        let transition = self.measure.transition_distribution(population)?;
        let keep = self.variant.keep_probability(population);
        let mut laws: Vec<Option<MergeLaw>> = (0..=n).map(|_| None).collect();
        let mut lineages: Vec<u32> = (0..n).collect();
        let mut merges: Vec<DiscreteMerge> = Vec::new();
        let mut next_block = n;
        let mut generation: u64 = 0;
        while lineages.len() > 1 {
            let b = lineages.len() as u32;
            let law = laws[b as usize]
                .get_or_insert_with(|| MergeLaw::new(&transition, keep, population, b));
            generation += sample_geometric(law.merge_probability, rng);
            let family = law.sample_family(rng);
            let hits = law.sample_hits(family, rng) as usize;
            for i in 0..hits {
                let j = rng.random_range(i..lineages.len());
                lineages.swap(i, j);
            }
            let mut children: Vec<u32> = lineages[..hits].to_vec();
            children.sort_unstable();
            lineages.drain(..hits);
            lineages.push(next_block);
            merges.push(DiscreteMerge {
                generation,
                children,
                block: next_block,
            });
            next_block += 1;
        }
        Ok(DiscreteGenealogy {
            n,
            merges,
            absorption_generation: generation,
        })
    }

    /// Variable-size route: realises every generation. A growing population
    /// assigns the forward surplus of offspring to the large family, so the
    /// family occupies `U + (N_r - N_{r+1})` of the `N_r` offspring slots.
    fn simulate_per_generation<R: Rng + ?Sized>(
        &self,
        n: u32,
        rng: &mut R,
    ) -> Result<DiscreteGenealogy> {
        let mut lineages: Vec<u32> = (0..n).collect();
        let mut merges: Vec<DiscreteMerge> = Vec::new();
        let mut next_block = n;
        let mut law = FamilyLaw::new(self);
        let mut selected: Vec<usize> = Vec::new();
        let mut generation: u64 = 0;
        while lineages.len() > 1 {
            let offspring_side = self.population_at(generation);
            let parent_side = self.population_at(generation + 1);
            if parent_side < lineages.len() as u32 {
                return Err(invalid(format!(
                    "the population profile falls to {parent_side} while {} lineages survive",
                    lineages.len()
                )));
            }
            let family = law.sample(parent_side, rng)? + (offspring_side - parent_side);
            selected.clear();
            let mut hits: u32 = 0;
            for idx in 0..lineages.len() {
                let remaining_slots = offspring_side - idx as u32;
                let remaining_family = family - hits;
                if rng.random::<f64>() * f64::from(remaining_slots) < f64::from(remaining_family)
                {
                    selected.push(idx);
                    hits += 1;
                }
            }
            generation += 1;
            if hits >= 2 {
                let mut children: Vec<u32> = selected.iter().map(|&i| lineages[i]).collect();
                children.sort_unstable();
                for &i in selected.iter().rev() {
                    lineages.swap_remove(i);
                }
                lineages.push(next_block);
                merges.push(DiscreteMerge {
                    generation,
                    children,
                    block: next_block,
                });
                next_block += 1;
            }
        }
        Ok(DiscreteGenealogy {
            n,
            merges,
            absorption_generation: generation,
        })
    }
}

/// Exact pair-coalescence probability for one generation with `n_parents`
/// parents under the given family-size variant.
fn pair_probability_at(
    measure: &Measure,
    variant: OffspringVariant,
    n_parents: u32,
) -> Result<f64> {
    let transition = measure.transition_distribution(n_parents)?;
    let mean_pairs: f64 = transition
        .probs()
        .iter()
        .zip(2u32..)
        .map(|(&p, k)| p * f64::from(k) * f64::from(k - 1))
        .sum();
    let keep = variant.keep_probability(n_parents);
    let mixed = keep * mean_pairs + (1.0 - keep) * 2.0;
    Ok(mixed / (f64::from(n_parents) * f64::from(n_parents - 1)))
}

/// Family-size sampler with a per-population-size cache of first-merger
/// distributions.
struct FamilyLaw<'a> {
    model: &'a ModifiedMoranModel,
    transitions: HashMap<u32, Transition>,
}

impl<'a> FamilyLaw<'a> {
    fn new(model: &'a ModifiedMoranModel) -> FamilyLaw<'a> {
        FamilyLaw {
            model,
            transitions: HashMap::new(),
        }
    }

    fn sample<R: Rng + ?Sized>(&mut self, n_parents: u32, rng: &mut R) -> Result<u32> {
        if n_parents < 2 {
            return Err(invalid(format!(
                "a family needs at least two potential parents, got {n_parents}"
            )));
        }
        let keep = self.model.variant.keep_probability(n_parents);
        if keep < 1.0 && rng.random::<f64>() >= keep {
            return Ok(2);
        }
        if matches!(self.model.measure, Measure::Kingman) {
            return Ok(2);
        }
        let transition = match self.transitions.entry(n_parents) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(self.model.measure.transition_distribution(n_parents)?)
            }
        };
        Ok(transition.sample_k(rng))
    }
}

/// Per-lineage-count law of a merger generation at constant population size.
struct MergeLaw {
    population: u32,
    sample_size: u32,
    /// Probability that a generation merges at least two of the lineages.
    merge_probability: f64,
    /// Cumulative distribution of the family size given a merger, indexed
    /// by `family - 2`.
    family_cdf: Vec<f64>,
}

impl MergeLaw {
    fn new(transition: &Transition, keep: f64, population: u32, sample_size: u32) -> MergeLaw {
        let probs = transition.probs();
        let mut weights = Vec::with_capacity(probs.len());
        for (i, &p) in probs.iter().enumerate() {
            let family = i as u32 + 2;
            let mut pmf = keep * p;
            if family == 2 {
                pmf += 1.0 - keep;
            }
            weights.push(pmf * hit_probability(population, family, sample_size));
        }
        let merge_probability: f64 = weights.iter().sum();
        let mut family_cdf = weights;
        let mut acc = 0.0;
        for w in family_cdf.iter_mut() {
            acc += *w / merge_probability;
            *w = acc;
        }
        MergeLaw {
            population,
            sample_size,
            merge_probability,
            family_cdf,
        }
    }

    fn sample_family<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let idx = self.family_cdf.partition_point(|&c| c <= u);
        (idx.min(self.family_cdf.len() - 1)) as u32 + 2
    }

    /// Number of lineages inside the family, conditioned on at least two.
    fn sample_hits<R: Rng + ?Sized>(&self, family: u32, rng: &mut R) -> u32 {
        let (lo, hi) = hit_range(self.population, family, self.sample_size);
        if lo >= hi {
            return hi;
        }
        let weights: Vec<f64> = (lo..=hi)
            .map(|hits| {
                hypergeom_weight(
                    u64::from(self.population),
                    u64::from(family),
                    u64::from(self.sample_size),
                    u64::from(hits),
                )
            })
            .collect();
        let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                return lo + i as u32;
            }
        }
        hi
    }
}

/// Support of the number of lineages inside the family given a merger: at
/// least two, at least the overflow the non-family slots cannot hold, and
/// at most the smaller of family and sample.
fn hit_range(population: u32, family: u32, sample_size: u32) -> (u32, u32) {
    let overflow = sample_size.saturating_sub(population - family);
    (overflow.max(2), family.min(sample_size))
}

/// Probability that at least two of `sample_size` exchangeable offspring
/// slots fall inside a family occupying `family` of `population` slots,
/// summed directly to avoid cancellation.
fn hit_probability(population: u32, family: u32, sample_size: u32) -> f64 {
    let (lo, hi) = hit_range(population, family, sample_size);
    let mut total = 0.0;
    for hits in lo..=hi {
        total += hypergeom_weight(
            u64::from(population),
            u64::from(family),
            u64::from(sample_size),
            u64::from(hits),
        );
    }
    total
}

/// Number of generations until the first success for success probability
/// `p`, at least one.
fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    (u.ln() / (-p).ln_1p()).floor() as u64 + 1
}

/// A single backward merger of sampled lineages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMerge {
    /// Parent generation at which the lineages first share a parent,
    /// counted backwards from the sample at zero.
    pub generation: u64,
    /// Ids of the absorbed lineages, ascending; at least two.
    pub children: Vec<u32>,
    /// Id of the merged lineage; leaves are `0..n` and merged lineages
    /// follow in order of creation.
    pub block: u32,
}

/// Backward genealogy of a sample through a discrete population model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteGenealogy {
    n: u32,
    merges: Vec<DiscreteMerge>,
    absorption_generation: u64,
}

impl DiscreteGenealogy {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn merges(&self) -> &[DiscreteMerge] {
        &self.merges
    }

    /// Generation of the final merger.
    pub fn absorption_generation(&self) -> u64 {
        self.absorption_generation
    }

    /// Number of surviving lineages at generation `r`.
    pub fn lineage_count_at(&self, r: u64) -> u32 {
        let merged: u32 = self
            .merges
            .iter()
            .take_while(|e| e.generation <= r)
            .map(|e| e.children.len() as u32 - 1)
            .sum();
        self.n - merged
    }

    /// Sum over generations of the number of surviving lineages, the
    /// discrete analogue of total branch length.
    pub fn total_lineage_generations(&self) -> u64 {
        let mut total = 0u64;
        let mut previous = 0u64;
        let mut count = u64::from(self.n);
        for event in &self.merges {
            total += count * (event.generation - previous);
            previous = event.generation;
            count -= event.children.len() as u64 - 1;
        }
        total
    }

    /// Partition of the sample `1..=n` into ancestral blocks at generation
    /// `r`, sorted by smallest element.
    pub fn partition_at(&self, r: u64) -> Vec<Vec<u32>> {
        let mut sets: Vec<Option<Vec<u32>>> = (1..=self.n).map(|i| Some(vec![i])).collect();
        sets.resize(self.n as usize + self.merges.len(), None);
        for event in self.merges.iter().take_while(|e| e.generation <= r) {
            let mut joined = Vec::new();
            for &child in &event.children {
                joined.append(sets[child as usize].take().as_mut().expect("live child"));
            }
            joined.sort_unstable();
            sets[event.block as usize] = Some(joined);
        }
        let mut blocks: Vec<Vec<u32>> = sets.into_iter().flatten().collect();
        blocks.sort_unstable_by_key(|b| b[0]);
        blocks
    }
}

/// Materialises the offspring counts of one forward step: a uniformly
/// chosen parent receives `family_size` offspring plus the growth surplus
/// `n_offspring - n_parents`, `family_size - 1` uniformly chosen other
/// parents receive none, and every remaining parent receives one.
pub fn offspring_assignment<R: Rng + ?Sized>(
    n_parents: u32,
    n_offspring: u32,
    family_size: u32,
    rng: &mut R,
) -> Result<Vec<u32>> {
    if n_parents < 2 || family_size < 2 || family_size > n_parents {
        return Err(invalid(format!(
            "a family of {family_size} needs between two and {n_parents} members"
        )));
    }
    if n_offspring < n_parents {
        return Err(invalid(format!(
            "the offspring generation of {n_offspring} cannot shrink below {n_parents} parents"
        )));
    }
    let mut order: Vec<u32> = (0..n_parents).collect();
    for i in 0..family_size as usize {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }
    let mut counts = vec![1u32; n_parents as usize];
    counts[order[0] as usize] = family_size + (n_offspring - n_parents);
    for &parent in &order[1..family_size as usize] {
        counts[parent as usize] = 0;
    }
    Ok(counts)
}

/// Monte Carlo cross-check of [`ModifiedMoranModel::coalescence_probability`]
/// that draws a family and asks whether two fixed offspring slots both fall
/// inside it.
pub fn coalescence_probability_mc(
    model: &ModifiedMoranModel,
    reps: u64,
    rng_seed: u64,
) -> Result<McEstimate> {
    if reps < 2 {
        return Err(invalid("the estimate needs at least two replicates"));
    }
    let population = model.initial_population();
    let mut rng = task_rng(rng_seed, 0);
    let mut law = FamilyLaw::new(model);
    let mut samples = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let family = law.sample(population, &mut rng)?;
        let first = rng.random::<f64>() * f64::from(population) < f64::from(family);
        let both = first
            && rng.random::<f64>() * f64::from(population - 1) < f64::from(family - 1);
        samples.push(if both { 1.0 } else { 0.0 });
    }
    Ok(McEstimate::from_samples(&samples))
}

/// Kolmogorov-Smirnov distances between rescaled discrete genealogies at one
/// population size and the measure's coalescent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub population: u32,
    pub reps: u64,
    /// Distance between rescaled absorption generations and coalescent
    /// absorption times.
    pub ks_absorption: f64,
    pub p_absorption: f64,
    /// Distance between rescaled lineage generations and coalescent total
    /// branch lengths.
    pub ks_length: f64,
    pub p_length: f64,
}

/// Compares constant-size discrete genealogies, with generations rescaled by
/// the pair-coalescence probability, against the measure's coalescent for
/// each population size. One coalescent reference sample of `reps` draws is
/// shared across rows, so differences between rows reflect the populations
/// rather than reference noise.
pub fn convergence_check(
    measure: &Measure,
    variant: OffspringVariant,
    n: u32,
    populations: &[u32],
    reps: u64,
    rng_seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if populations.is_empty() {
        return Err(invalid("the check needs at least one population size"));
    }
    if reps < 2 {
        return Err(invalid("the check needs at least two replicates"));
    }
    let simulator = Simulator::new(*measure, n)?;
    let mut rng = task_rng(rng_seed, 0);
    let mut reference_absorption = Vec::with_capacity(reps as usize);
    let mut reference_length = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let genealogy = simulator.sample(n, &mut rng)?;
        reference_absorption.push(genealogy.height());
        reference_length.push(genealogy.functionals().total_length);
    }
    let mut rows = Vec::with_capacity(populations.len());
    for (index, &population) in populations.iter().enumerate() {
        let model =
            ModifiedMoranModel::new(measure, variant, population, DiscreteSizeProfile::Constant)?;
        let scale = model.coalescence_probability();
        let mut rng = task_rng(rng_seed, index as u64 + 1);
        let mut absorption = Vec::with_capacity(reps as usize);
        let mut length = Vec::with_capacity(reps as usize);
        for _ in 0..reps {
            let genealogy = model.simulate_genealogy_with(n, &mut rng)?;
            absorption.push(genealogy.absorption_generation() as f64 * scale);
            length.push(genealogy.total_lineage_generations() as f64 * scale);
        }
        let ks_absorption = ks_statistic(&absorption, &reference_absorption);
        let ks_length = ks_statistic(&length, &reference_length);
        rows.push(ConvergenceRow {
            population,
            reps,
            ks_absorption,
            p_absorption: ks_pvalue(ks_absorption, absorption.len(), reference_absorption.len()),
            ks_length,
            p_length: ks_pvalue(ks_length, length.len(), reference_length.len()),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXACT_TOLERANCE: f64 = 1e-12;
    const SE_MULTIPLES: f64 = 4.0;
    const EQUIVALENCE_P_FLOOR: f64 = 1e-3;
    const PAIR_TIME_RELATIVE_BAND: f64 = 0.05;

    fn constant_model(measure: &Measure, population: u32) -> ModifiedMoranModel {
        ModifiedMoranModel::new(
            measure,
            OffspringVariant::FirstMergerBlock,
            population,
            DiscreteSizeProfile::Constant,
        )
        .unwrap()
    }

    #[test]
    fn kingman_families_are_always_pairs() {
        let model = constant_model(&Measure::Kingman, 50);
        let mut rng = task_rng(11, 0);
        for _ in 0..200 {
            assert_eq!(model.sample_family_size(50, &mut rng).unwrap(), 2);
        }
        let thinned = ModifiedMoranModel::new(
            &Measure::Kingman,
            OffspringVariant::ThinnedFirstMergerBlock { gamma_b: 1.5 },
            50,
            DiscreteSizeProfile::Constant,
        )
        .unwrap();
        for _ in 0..50 {
            assert_eq!(thinned.sample_family_size(50, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn bolthausen_sznitman_family_frequencies_match_the_transition() {
        let model = constant_model(&Measure::BolthausenSznitman, 3);
        let mut rng = task_rng(12, 0);
        let reps = 20_000;
        let mut pairs = 0u32;
        for _ in 0..reps {
            match model.sample_family_size(3, &mut rng).unwrap() {
                2 => pairs += 1,
                3 => {}
                other => panic!("family of {other} in a population of three"),
            }
        }
        let observed = f64::from(pairs) / f64::from(reps);
        let se = (0.75 * 0.25 / f64::from(reps)).sqrt();
        assert!(
            (observed - 0.75).abs() <= SE_MULTIPLES * se,
            "pair frequency {observed} strays from 0.75"
        );
    }

    #[test]
    fn dirac_family_sizes_concentrate_near_half_the_population() {
        let measure = Measure::dirac(0.5).unwrap();
        let transition = measure.transition_distribution(100).unwrap();
        let mode = transition
            .probs()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i as u32 + 2)
            .unwrap();
        assert!((48..=52).contains(&mode), "mode {mode} far from 50");
        let exact_mean: f64 = transition
            .probs()
            .iter()
            .zip(2u32..)
            .map(|(&p, k)| p * f64::from(k))
            .sum();
        let model = constant_model(&measure, 100);
        let mut rng = task_rng(13, 0);
        let reps = 20_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| f64::from(model.sample_family_size(100, &mut rng).unwrap()))
            .collect();
        let estimate = McEstimate::from_samples(&draws);
        assert!(
            estimate.within(exact_mean, SE_MULTIPLES),
            "sampled family mean {} strays from {exact_mean}",
            estimate.mean
        );
    }

    #[test]
    fn pair_coalescence_probability_inverts_the_total_rate() {
        for measure in [
            Measure::dirac(0.5).unwrap(),
            Measure::BolthausenSznitman,
            Measure::beta(1.5, 0.5).unwrap(),
            Measure::eldon_wakeley(0.8).unwrap(),
        ] {
            let model = constant_model(&measure, 40);
            let expected = 1.0 / measure.transition_distribution(40).unwrap().total_rate();
            assert!(
                (model.coalescence_probability() - expected).abs() <= EXACT_TOLERANCE,
                "pair probability disagrees with the rate inverse for {measure:?}"
            );
        }
        let moran = constant_model(&Measure::Kingman, 200);
        let expected = 2.0 / (200.0 * 199.0);
        assert!((moran.coalescence_probability() - expected).abs() <= EXACT_TOLERANCE);
    }

    #[test]
    fn thinning_interpolates_the_pair_probability() {
        let measure = Measure::dirac(0.5).unwrap();
        let population = 30u32;
        let unthinned = constant_model(&measure, population).coalescence_probability();
        let gamma_b = 1.5;
        let thinned = ModifiedMoranModel::new(
            &measure,
            OffspringVariant::ThinnedFirstMergerBlock { gamma_b },
            population,
            DiscreteSizeProfile::Constant,
        )
        .unwrap()
        .coalescence_probability();
        let keep = f64::from(population).powf(-gamma_b);
        let pair = 2.0 / (f64::from(population) * f64::from(population - 1));
        let expected = keep * unthinned + (1.0 - keep) * pair;
        assert!(
            (thinned - expected).abs() <= EXACT_TOLERANCE,
            "thinned pair probability {thinned} is not the mixture {expected}"
        );
    }

    #[test]
    fn thinning_keeps_large_families_at_the_stated_rate() {
        let measure = Measure::dirac(0.9).unwrap();
        let population = 10u32;
        let gamma_b = 1.5;
        let model = ModifiedMoranModel::new(
            &measure,
            OffspringVariant::ThinnedFirstMergerBlock { gamma_b },
            population,
            DiscreteSizeProfile::Constant,
        )
        .unwrap();
        let keep = f64::from(population).powf(-gamma_b);
        let pair_weight = measure
            .transition_distribution(population)
            .unwrap()
            .prob(2);
        let expected = keep * (1.0 - pair_weight);
        let mut rng = task_rng(14, 0);
        let reps = 100_000;
        let large = (0..reps)
            .filter(|_| model.sample_family_size(population, &mut rng).unwrap() > 2)
            .count();
        let observed = large as f64 / reps as f64;
        let se = (expected * (1.0 - expected) / reps as f64).sqrt();
        assert!(
            (observed - expected).abs() <= SE_MULTIPLES * se,
            "large-family frequency {observed} strays from {expected}"
        );
    }

    #[test]
    fn parent_draws_reproduce_the_pair_probability() {
        let model = constant_model(&Measure::dirac(0.5).unwrap(), 100);
        let estimate = coalescence_probability_mc(&model, 200_000, 15).unwrap();
        assert!(
            estimate.within(model.coalescence_probability(), SE_MULTIPLES),
            "monte carlo {} strays from {}",
            estimate.mean,
            model.coalescence_probability()
        );
    }

    #[test]
    fn offspring_counts_sum_to_the_next_generation() {
        let mut rng = task_rng(16, 0);
        for trial in 0u32..50 {
            let n_parents = 2 + trial % 30;
            let surplus = trial % 7;
            let n_offspring = n_parents + surplus;
            let family = 2 + rng.random_range(0..n_parents - 1);
            let counts = offspring_assignment(n_parents, n_offspring, family, &mut rng).unwrap();
            assert_eq!(counts.iter().sum::<u32>(), n_offspring);
            let zeros = counts.iter().filter(|&&c| c == 0).count() as u32;
            assert_eq!(zeros, family - 1);
            let large = counts.iter().filter(|&&c| c == family + surplus).count();
            assert!(large >= 1, "no parent received the family");
        }
    }

    #[test]
    fn both_simulation_routes_sample_the_same_law() {
        let measure = Measure::dirac(0.5).unwrap();
        let model = constant_model(&measure, 30);
        let reps = 4000;
        let mut rng = task_rng(17, 0);
        let mut skip_absorption = Vec::new();
        let mut skip_length = Vec::new();
        for _ in 0..reps {
            let g = model.simulate_skip_ahead(4, &mut rng).unwrap();
            skip_absorption.push(g.absorption_generation() as f64);
            skip_length.push(g.total_lineage_generations() as f64);
        }
        let mut stepped_absorption = Vec::new();
        let mut stepped_length = Vec::new();
        for _ in 0..reps {
            let g = model.simulate_per_generation(4, &mut rng).unwrap();
            stepped_absorption.push(g.absorption_generation() as f64);
            stepped_length.push(g.total_lineage_generations() as f64);
        }
        let d_absorption = ks_statistic(&skip_absorption, &stepped_absorption);
        let d_length = ks_statistic(&skip_length, &stepped_length);
        assert!(
            ks_pvalue(d_absorption, reps, reps) > EQUIVALENCE_P_FLOOR,
            "absorption laws differ between routes, distance {d_absorption}"
        );
        assert!(
            ks_pvalue(d_length, reps, reps) > EQUIVALENCE_P_FLOOR,
            "length laws differ between routes, distance {d_length}"
        );
    }

    #[test]
    fn rescaled_pair_times_have_unit_mean() {
        for (measure, population) in [
            (Measure::Kingman, 200u32),
            (Measure::dirac(0.5).unwrap(), 500),
        ] {
            let model = constant_model(&measure, population);
            let scale = model.coalescence_probability();
            let mut rng = task_rng(18, 0);
            let reps = 10_000;
            let times: Vec<f64> = (0..reps)
                .map(|_| {
                    let g = model.simulate_genealogy_with(2, &mut rng).unwrap();
                    g.absorption_generation() as f64 * scale
                })
                .collect();
            let estimate = McEstimate::from_samples(&times);
            assert!(
                estimate.within(1.0, 3.0),
                "rescaled pair time {} strays from one for {measure:?}",
                estimate.mean
            );
            assert!(
                (estimate.mean - 1.0).abs() <= PAIR_TIME_RELATIVE_BAND,
                "rescaled pair time {} outside the five percent band",
                estimate.mean
            );
        }
    }

    #[test]
    fn a_population_of_two_absorbs_in_one_generation() {
        let model = constant_model(&Measure::Kingman, 2);
        let genealogy = model.simulate_genealogy(2, 19).unwrap();
        assert_eq!(genealogy.absorption_generation(), 1);
        assert_eq!(genealogy.merges().len(), 1);
        assert_eq!(genealogy.merges()[0].children, vec![0, 1]);
        assert_eq!(genealogy.merges()[0].block, 2);
        assert_eq!(genealogy.total_lineage_generations(), 2);
        assert_eq!(genealogy.lineage_count_at(0), 2);
        assert_eq!(genealogy.lineage_count_at(1), 1);
        assert_eq!(genealogy.partition_at(1), vec![vec![1, 2]]);
    }

    #[test]
    fn declining_profiles_coarsen_the_partition() {
        let measure = Measure::dirac(0.5).unwrap();
        let model = ModifiedMoranModel::new(
            &measure,
            OffspringVariant::FirstMergerBlock,
            100,
            DiscreteSizeProfile::ExponentialDecline { rho: 0.5 },
        )
        .unwrap();
        for r in 0..20 {
            assert!(model.population_at(r + 1) <= model.population_at(r));
        }
        for seed in 0..20 {
            let genealogy = model.simulate_genealogy(6, seed).unwrap();
            assert!(genealogy.absorption_generation() > 0);
            assert_eq!(genealogy.lineage_count_at(genealogy.absorption_generation()), 1);
            let mut previous = 6;
            for event in genealogy.merges() {
                assert!(event.children.len() >= 2);
                let blocks = genealogy.partition_at(event.generation);
                let total: usize = blocks.iter().map(Vec::len).sum();
                assert_eq!(total, 6, "partition loses individuals");
                assert!(blocks.len() < previous, "partition failed to coarsen");
                previous = blocks.len();
            }
            let root = genealogy.partition_at(genealogy.absorption_generation());
            assert_eq!(root, vec![(1..=6).collect::<Vec<u32>>()]);
        }
    }

    #[test]
    fn a_profile_that_empties_is_reported() {
        let model = ModifiedMoranModel::new(
            &Measure::Kingman,
            OffspringVariant::FirstMergerBlock,
            3,
            DiscreteSizeProfile::ExponentialDecline { rho: 2.9 },
        )
        .unwrap();
        assert_eq!(model.population_at(1), 0);
        assert!(model.simulate_genealogy(3, 20).is_err());
    }

    #[test]
    fn degenerate_decline_matches_the_constant_profile() {
        let measure = Measure::dirac(0.5).unwrap();
        let constant = constant_model(&measure, 40);
        let degenerate = ModifiedMoranModel::new(
            &measure,
            OffspringVariant::FirstMergerBlock,
            40,
            DiscreteSizeProfile::ExponentialDecline { rho: 0.0 },
        )
        .unwrap();
        for r in [0, 5, 50] {
            assert_eq!(degenerate.population_at(r), 40);
        }
        let a = constant.simulate_genealogy(5, 21).unwrap();
        let b = degenerate.simulate_genealogy(5, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let measure = Measure::dirac(0.5).unwrap();
        assert!(ModifiedMoranModel::new(
            &measure,
            OffspringVariant::FirstMergerBlock,
            1,
            DiscreteSizeProfile::Constant,
        )
        .is_err());
        for gamma_b in [1.0, 2.0, 0.5, f64::NAN] {
            assert!(ModifiedMoranModel::new(
                &measure,
                OffspringVariant::ThinnedFirstMergerBlock { gamma_b },
                50,
                DiscreteSizeProfile::Constant,
            )
            .is_err());
        }
        assert!(ModifiedMoranModel::new(
            &measure,
            OffspringVariant::FirstMergerBlock,
            50,
            DiscreteSizeProfile::ExponentialDecline { rho: -0.1 },
        )
        .is_err());
        assert!(ModifiedMoranModel::new(
            &Measure::Kingman,
            OffspringVariant::FirstMergerBlock,
            4,
            DiscreteSizeProfile::ExponentialDecline { rho: 6.1 },
        )
        .is_err());
        let model = constant_model(&measure, 10);
        assert!(model.simulate_genealogy(11, 0).is_err());
        assert!(model.simulate_genealogy(0, 0).is_err());
        let mut rng = task_rng(0, 0);
        assert!(model.sample_family_size(1, &mut rng).is_err());
        assert!(offspring_assignment(5, 4, 3, &mut rng).is_err());
        assert!(offspring_assignment(5, 7, 1, &mut rng).is_err());
    }

    #[test]
    fn single_individual_samples_are_already_absorbed() {
        let model = constant_model(&Measure::Kingman, 10);
        let genealogy = model.simulate_genealogy(1, 22).unwrap();
        assert_eq!(genealogy.absorption_generation(), 0);
        assert!(genealogy.merges().is_empty());
        assert_eq!(genealogy.total_lineage_generations(), 0);
        assert_eq!(genealogy.partition_at(0), vec![vec![1]]);
    }

    #[test]
    fn convergence_rows_are_structurally_sound() {
        let rows = convergence_check(
            &Measure::Kingman,
            OffspringVariant::FirstMergerBlock,
            4,
            &[20, 80],
            1500,
            23,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].population, 20);
        assert_eq!(rows[1].population, 80);
        for row in &rows {
            assert_eq!(row.reps, 1500);
            assert!(row.ks_absorption > 0.0 && row.ks_absorption < 1.0);
            assert!(row.ks_length > 0.0 && row.ks_length < 1.0);
            assert!(row.p_absorption > 0.0 && row.p_absorption <= 1.0);
            assert!(row.p_length > 0.0 && row.p_length <= 1.0);
        }
        assert!(
            rows[1].p_absorption > EQUIVALENCE_P_FLOOR,
            "a Moran population of eighty already matches its coalescent closely"
        );
    }
}
