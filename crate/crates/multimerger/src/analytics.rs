//! Exact and semi-exact quantities of the coalescent models.
//!
//! The centerpiece is the probability that a nested subsample shares
//! its most recent common ancestor with the full sample. A bottom-up
//! recursion over the block-counting jump chain evaluates it for any
//! measure; closed forms cover the Kingman case, and an independent
//! Bernoulli representation covers Bolthausen-Sznitman, where the
//! recursion would be far too slow for sample sizes in the tens of
//! thousands. A Monte Carlo estimator built on the sizes of the blocks
//! merged at absorption gives a third route for cross-checks.
//!
//! The module also carries the expected total branch length (the
//! quantity behind the generalized Watterson calibration), its Kingman
//! analogue under exponential population growth, and the dust-regime
//! distribution theory for the minimal observable clade: the jump chain
//! of the frequency of the block containing individual 1, the exact law
//! of that frequency after the first merge for Dirac measures, and the
//! candidate formulas for its mean at the first non-private mutation,
//! which disagree with one another and are settled by a Monte Carlo
//! arbiter. The losing candidates stay available for inspection.

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{invalid, numerical, unsupported, Result};
use crate::genealogy::Simulator;
use crate::measures::Measure;
use crate::rng::task_rng;
use crate::special::hypergeom_weight;
use crate::stats::McEstimate;

/// Largest sample size accepted by [`RootShareTable`].
pub const ROOT_SHARE_N_MAX: u32 = 2000;

/// Largest sample size accepted by [`bsz_root_share`].
pub const BSZ_ROOT_SHARE_N_MAX: u32 = 100_000;

/// Support cap for the Poisson-binomial convolutions inside
/// [`bsz_root_share`]; truncated mass beyond the cap is tracked and
/// must stay below [`CONVOLUTION_MASS_GUARD`].
const CONVOLUTION_CAP: usize = 256;

/// Permitted probability mass lost to convolution truncation.
const CONVOLUTION_MASS_GUARD: f64 = 1e-12;

/// Probability that the genealogy of a nested subsample reaches the
/// root of the full genealogy, tabulated over sample sizes.
///
/// Entry `(n, m)` answers: when `m` of the `n` sampled individuals are
/// tracked, does their most recent common ancestor coincide with the
/// whole sample's? The table is filled bottom-up over the jump chain of
/// block counts, so every entry is exact up to accumulation error.
pub struct RootShareTable {
    measure: Measure,
    n_max: u32,
    m_max: u32,
    rows: Vec<Vec<f64>>,
}

impl RootShareTable {
    /// Fills the table for all `n <= n_max`, `m <= m_max`.
    pub fn new(measure: &Measure, n_max: u32, m_max: u32) -> Result<RootShareTable> {
        measure.validate()?;
        if n_max < 1 || m_max < 1 {
            return Err(invalid("the table needs n_max >= 1 and m_max >= 1"));
        }
        if n_max > ROOT_SHARE_N_MAX {
            return Err(invalid(format!(
                "n_max={n_max} exceeds the supported maximum {ROOT_SHARE_N_MAX}"
            )));
        }
        let m_max = m_max.min(n_max);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max as usize + 1);
        rows.push(Vec::new());
        rows.push(vec![0.0, 1.0]);
        for nn in 2..=n_max {
            let columns = nn.min(m_max) as usize;
            let mut row = vec![0.0; columns + 1];
            if nn <= m_max {
                row[nn as usize] = 1.0;
            }
            if nn >= 3 && m_max >= 2 {
                let transition = measure.transition_distribution(nn)?;
                let probs = transition.probs();
                for mm in 2..=(nn - 1).min(m_max) {
                    row[mm as usize] = root_share_state(&rows, probs, nn, mm);
                }
            }
            rows.push(row);
        }
        Ok(RootShareTable {
            measure: *measure,
            n_max,
            m_max,
            rows,
        })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn m_max(&self) -> u32 {
        self.m_max
    }

    /// The tabulated probability for a subsample of size `m` out of `n`.
    pub fn prob(&self, n: u32, m: u32) -> Result<f64> {
        if m < 1 || m > n {
            return Err(invalid(format!(
                "subsample size must satisfy 1 <= m <= n, got m={m}, n={n}"
            )));
        }
        if n > self.n_max {
            return Err(invalid(format!(
                "n={n} exceeds the tabulated maximum {}",
                self.n_max
            )));
        }
        if m == n {
            return Ok(1.0);
        }
        if m == 1 {
            return Ok(0.0);
        }
        if m > self.m_max {
            return Err(invalid(format!(
                "m={m} exceeds the tabulated maximum {}",
                self.m_max
            )));
        }
        Ok(self.rows[n as usize][m as usize])
    }
}

/// One recursion state: blends the already-filled smaller rows through
/// the merger-size law at `nn` blocks. Hypergeometric weights walk both
/// the merger size `k` and the subsample participation count `l` by
/// ratio updates, so each term costs constant time.
fn root_share_state(rows: &[Vec<f64>], probs: &[f64], nn: u32, mm: u32) -> f64 {
    let nnf = f64::from(nn);
    let mmf = f64::from(mm);
    let mut acc = 0.0;
    let mut l_min = 2_u32.saturating_sub(nn - mm);
    let mut w_start = hypergeom_weight(
        u64::from(nn),
        u64::from(mm),
        2,
        u64::from(l_min),
    );
    for k in 2..=nn {
        let kf = f64::from(k);
        let l_max = k.min(mm);
        let weight_sum_target = probs[(k - 2) as usize];
        if weight_sum_target > 0.0 {
            let target_row = (nn - k + 1) as usize;
            let mut w = w_start;
            let mut inner = 0.0;
            for l in l_min..=l_max {
                let reduced = if l <= 1 { mm } else { mm - l + 1 } as usize;
                debug_assert!(reduced <= target_row);
                let p_next = if reduced == target_row {
                    1.0
                } else if reduced == 1 {
                    0.0
                } else {
                    rows[target_row][reduced]
                };
                inner += w * p_next;
                if l < l_max {
                    let lf = f64::from(l);
                    w *= (mmf - lf) * (kf - lf)
                        / ((lf + 1.0) * (nnf - mmf - kf + lf + 1.0));
                }
            }
            acc += weight_sum_target * inner;
        }
        if k < nn {
            let lf = f64::from(l_min);
            if k >= nn - mm {
                w_start *= (mmf - lf) * (kf + 1.0) / ((lf + 1.0) * (nnf - kf));
                l_min += 1;
            } else {
                w_start *= (nnf - mmf - kf) / (nnf - kf);
            }
        }
    }
    acc
}

/// One-shot root-share probability; builds the table up to `(n, m)`.
pub fn root_share_probability(measure: &Measure, n: u32, m: u32) -> Result<f64> {
    if m < 1 || m > n {
        return Err(invalid(format!(
            "subsample size must satisfy 1 <= m <= n, got m={m}, n={n}"
        )));
    }
    if m == n {
        return Ok(1.0);
    }
    RootShareTable::new(measure, n, m)?.prob(n, m)
}

/// Closed-form root-share probability of the Kingman coalescent.
pub fn kingman_root_share(n: u32, m: u32) -> Result<f64> {
    if m < 2 || m > n {
        return Err(invalid(format!(
            "the closed form needs 2 <= m <= n, got m={m}, n={n}"
        )));
    }
    let (nf, mf) = (f64::from(n), f64::from(m));
    Ok((mf - 1.0) * (nf + 1.0) / ((mf + 1.0) * (nf - 1.0)))
}

/// Large-sample limit of [`kingman_root_share`] for fixed `m`.
pub fn kingman_root_share_limit(m: u32) -> Result<f64> {
    if m < 2 {
        return Err(invalid(format!(
            "the limit needs a subsample of at least two, got m={m}"
        )));
    }
    let mf = f64::from(m);
    Ok((mf - 1.0) / (mf + 1.0))
}

/// Root-share probability of the Bolthausen-Sznitman coalescent via its
/// representation through independent Bernoulli variables `B_i` with
/// success probability `1/i`: the probability equals
/// `E[(B_1+..+B_{m-1}) / (B_1+..+B_{n-1})]`, evaluated by convolving
/// the two independent Poisson-binomial halves.
pub fn bsz_root_share(n: u32, m: u32) -> Result<f64> {
    if m < 2 || m >= n {
        return Err(invalid(format!(
            "the representation needs 2 <= m < n, got m={m}, n={n}"
        )));
    }
    if n > BSZ_ROOT_SHARE_N_MAX {
        return Err(invalid(format!(
            "n={n} exceeds the supported maximum {BSZ_ROOT_SHARE_N_MAX}"
        )));
    }
    let (head, lost_head) = bernoulli_sum_pmf(2..=m - 1);
    let (tail, lost_tail) = bernoulli_sum_pmf(m..=n - 1);
    if lost_head + lost_tail > CONVOLUTION_MASS_GUARD {
        return Err(numerical(format!(
            "convolution truncation lost {} mass, above the {} guard",
            lost_head + lost_tail,
            CONVOLUTION_MASS_GUARD
        )));
    }
    let mut value = 0.0;
    for (s, &ph) in head.iter().enumerate() {
        if ph == 0.0 {
            continue;
        }
        let numerator = 1.0 + s as f64;
        for (t, &pt) in tail.iter().enumerate() {
            value += ph * pt * numerator / (numerator + t as f64);
        }
    }
    Ok(value)
}

/// Distribution of `sum(Bernoulli(1/i))` over the index range, support
/// truncated at [`CONVOLUTION_CAP`]; returns the pmf and the lost mass.
fn bernoulli_sum_pmf(indices: std::ops::RangeInclusive<u32>) -> (Vec<f64>, f64) {
    let mut pmf = vec![1.0f64];
    let mut lost = 0.0;
    for i in indices {
        let q = 1.0 / f64::from(i);
        if pmf.len() < CONVOLUTION_CAP {
            pmf.push(0.0);
        } else {
            lost += pmf[CONVOLUTION_CAP - 1] * q;
        }
        for v in (1..pmf.len()).rev() {
            pmf[v] = pmf[v] * (1.0 - q) + pmf[v - 1] * q;
        }
        pmf[0] *= 1.0 - q;
    }
    (pmf, lost)
}

/// Monte Carlo root-share estimate from the sizes of the blocks merged
/// at absorption: conditionally on those sizes, the subsample fails to
/// reach the root exactly when all of its members fall inside a single
/// absorbed block, a probability available in closed form.
pub fn root_share_last_merger_mc(
    measure: &Measure,
    n: u32,
    m: u32,
    reps: u64,
    rng_seed: u64,
) -> Result<McEstimate> {
    if m < 2 || m > n {
        return Err(invalid(format!(
            "subsample size must satisfy 2 <= m <= n, got m={m}, n={n}"
        )));
    }
    if reps < 100 {
        return Err(invalid(format!(
            "at least 100 replicates are needed for a standard error, got {reps}"
        )));
    }
    let simulator = Simulator::new(*measure, n)?;
    let mut rng = task_rng(rng_seed, 0);
    let nf = f64::from(n);
    let mf = m as usize;
    let mut samples = Vec::with_capacity(reps as usize);
    let mut sizes: Vec<f64> = Vec::with_capacity(n as usize);
    for _ in 0..reps {
        sizes.clear();
        sizes.resize(n as usize, 1.0);
        let mut b = n;
        loop {
            let (_, k) = simulator.step(b, &mut rng)?;
            let k = k as usize;
            for i in 0..k {
                let j = rng.random_range(i..sizes.len());
                sizes.swap(i, j);
            }
            if k == b as usize {
                break;
            }
            let merged: f64 = sizes[..k].iter().sum();
            sizes[0] = merged;
            for i in (1..k).rev() {
                sizes.swap_remove(i);
            }
            b -= k as u32 - 1;
        }
        let mut miss = 0.0;
        for &size in &sizes {
            if size >= mf as f64 {
                let mut product = 1.0;
                for t in 0..mf {
                    product *= (size - t as f64) / (nf - t as f64);
                }
                miss += product;
            }
        }
        samples.push(1.0 - miss);
    }
    Ok(McEstimate::from_samples(&samples))
}

/// Expected total branch length of the coalescent genealogy, by the
/// one-step recursion over block counts: the chain spends mean time
/// `1/rate(b)` at `b` blocks, contributing length `b` per unit time.
pub fn expected_total_length(measure: &Measure, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!(
            "expected length needs a sample of at least two, got n={n}"
        )));
    }
    let mut lengths = vec![0.0f64; n as usize + 1];
    for b in 2..=n {
        let transition = measure.transition_distribution(b)?;
        let probs = transition.probs();
        let mut value = f64::from(b) / transition.total_rate();
        for (idx, &p) in probs.iter().enumerate() {
            let k = idx + 2;
            value += p * lengths[b as usize - k + 1];
        }
        lengths[b as usize] = value;
    }
    Ok(lengths[n as usize])
}

/// Positive-half nodes of the 16-point Gauss-Legendre rule.
const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];

/// Weights paired with [`GL16_NODES`].
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_1,
];

/// Panel edges for the Laplace-transform integral behind
/// [`kingman_growth_expected_total_length`]; geometric refinement near
/// zero resolves the sharp layer that appears at strong growth.
const GROWTH_PANEL_EDGES: [f64; 17] = [
    0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0,
    32.0, 60.0,
];

/// Expected total branch length of the Kingman coalescent under
/// exponential population growth at rate `rho`, on the natural time
/// scale of the population.
///
/// Writing `U_m` for the coalescent time at which the block count drops
/// below `m`, the length telescopes to `gi(U_2) + sum_m gi(U_m)` with
/// `gi(u) = ln(1 + rho u) / rho`. Each expectation reduces, through the
/// Frullani representation of the logarithm, to an integral of
/// `exp(-t)/t` against one minus the Laplace transform of `U_m`, which
/// is a product over the merger rates. The integrand is evaluated with
/// complementary accumulation so small `rho` loses no precision.
pub fn kingman_growth_expected_total_length(n: u32, rho: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!(
            "expected length needs a sample of at least two, got n={n}"
        )));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(invalid(format!(
            "the growth rate must be finite and nonnegative, got {rho}"
        )));
    }
    if rho == 0.0 {
        return Ok(2.0 * (1..n).map(|i| 1.0 / f64::from(i)).sum::<f64>());
    }
    let n = n as usize;
    let mut rates = vec![0.0f64; n + 1];
    for (j, rate) in rates.iter_mut().enumerate().take(n + 1).skip(2) {
        *rate = j as f64 * (j as f64 - 1.0) / 2.0;
    }
    let mut log_terms = vec![0.0f64; n + 1];
    for panel in GROWTH_PANEL_EDGES.windows(2) {
        let mid = 0.5 * (panel[0] + panel[1]);
        let half = 0.5 * (panel[1] - panel[0]);
        for (&node, &weight) in GL16_NODES.iter().zip(GL16_WEIGHTS.iter()) {
            for t in [mid - half * node, mid + half * node] {
                let base = half * weight * (-t).exp() / t;
                let mut complement = 0.0;
                for m in (2..=n).rev() {
                    let g = t * rho / (rates[m] + t * rho);
                    complement += g * (1.0 - complement);
                    log_terms[m] += base * complement;
                }
            }
        }
    }
    let total: f64 = log_terms[2] + log_terms.iter().skip(2).sum::<f64>();
    Ok(total / rho)
}

/// Law of the sizes marking the points of the merger point process for
/// a measure whose point rate is finite.
enum DustPointLaw {
    Fixed(f64),
    Beta(rand_distr::Beta<f64>),
}

impl DustPointLaw {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DustPointLaw::Fixed(p) => *p,
            DustPointLaw::Beta(beta) => beta.sample(rng),
        }
    }
}

/// Paintbox size law of the point process, for measures that both keep
/// dust and admit exact point-by-point simulation.
fn dust_point_law(measure: &Measure) -> Result<(DustPointLaw, f64)> {
    let profile = measure.dust_profile();
    let gamma = match profile.gamma {
        Some(gamma) if profile.has_dust => gamma,
        _ => {
            return Err(unsupported(
                "the jump chain needs a measure with a dust component",
            ))
        }
    };
    if !measure.reciprocal_second_moment().is_finite() {
        return Err(unsupported(
            "the point process rate is infinite for this measure, so exact \
             point-by-point simulation is not available",
        ));
    }
    let law = match measure {
        Measure::Dirac { p } => DustPointLaw::Fixed(*p),
        Measure::Beta { a, b } => DustPointLaw::Beta(
            rand_distr::Beta::new(a - 2.0, *b)
                .expect("a finite reciprocal second moment means a > 2"),
        ),
        _ => {
            return Err(unsupported(
                "no dust point law is defined for this measure family",
            ))
        }
    };
    Ok((law, gamma))
}

/// Block-resolved state of the dust-regime merger chain: macroscopic
/// block masses, the remaining dust mass, and the position of the block
/// holding individual 1 (none while it is still dust).
struct DustChainState {
    blocks: Vec<f64>,
    scratch: Vec<f64>,
    dust: f64,
    own: Option<usize>,
}

impl DustChainState {
    fn new() -> DustChainState {
        DustChainState {
            blocks: Vec::new(),
            scratch: Vec::new(),
            dust: 1.0,
            own: None,
        }
    }

    fn reset(&mut self) {
        self.blocks.clear();
        self.dust = 1.0;
        self.own = None;
    }

    /// Runs the chain until individual 1 has taken part in `k_target`
    /// merges, pushing its block frequency after each one.
    fn run<R: Rng + ?Sized>(
        &mut self,
        law: &DustPointLaw,
        k_target: u32,
        rng: &mut R,
        frequencies: &mut Vec<f64>,
    ) {
        frequencies.clear();
        while frequencies.len() < k_target as usize {
            let x = law.sample(rng);
            let dust_join = x * self.dust;
            self.dust -= dust_join;
            let mut merged = dust_join;
            let mut own_joins = match self.own {
                None => rng.random::<f64>() < x,
                Some(_) => false,
            };
            let mut new_own = None;
            self.scratch.clear();
            for idx in 0..self.blocks.len() {
                let mass = self.blocks[idx];
                if rng.random::<f64>() < x {
                    merged += mass;
                    if self.own == Some(idx) {
                        own_joins = true;
                    }
                } else {
                    if self.own == Some(idx) {
                        new_own = Some(self.scratch.len());
                    }
                    self.scratch.push(mass);
                }
            }
            if own_joins {
                new_own = Some(self.scratch.len());
            }
            self.scratch.push(merged);
            std::mem::swap(&mut self.blocks, &mut self.scratch);
            self.own = new_own;
            if own_joins {
                frequencies.push(merged);
            }
        }
    }
}

/// Monte Carlo estimates of the mean block-1 frequency after each of
/// its first merges, plus the raw first-merge frequencies for
/// distributional checks.
pub struct DustChainEstimates {
    pub per_jump: Vec<McEstimate>,
    pub first_jump_values: Vec<f64>,
    pub gamma: f64,
}

/// Simulates the dust-regime jump chain of the frequency of the block
/// containing individual 1.
pub fn dust_jump_chain_mc(
    measure: &Measure,
    k_max: u32,
    reps: u64,
    rng_seed: u64,
) -> Result<DustChainEstimates> {
    if k_max < 1 {
        return Err(invalid("at least one jump must be tracked"));
    }
    if reps < 100 {
        return Err(invalid(format!(
            "at least 100 replicates are needed for a standard error, got {reps}"
        )));
    }
    let (law, gamma) = dust_point_law(measure)?;
    let mut rng = task_rng(rng_seed, 0);
    let mut state = DustChainState::new();
    let mut path = Vec::with_capacity(k_max as usize);
    let mut per_jump: Vec<Vec<f64>> =
        vec![Vec::with_capacity(reps as usize); k_max as usize];
    let mut first_jump_values = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        state.reset();
        state.run(&law, k_max, &mut rng, &mut path);
        first_jump_values.push(path[0]);
        for (slot, &value) in per_jump.iter_mut().zip(path.iter()) {
            slot.push(value);
        }
    }
    Ok(DustChainEstimates {
        per_jump: per_jump
            .iter()
            .map(|samples| McEstimate::from_samples(samples))
            .collect(),
        first_jump_values,
        gamma,
    })
}

/// Exact law of the block-1 frequency after its first merge under a
/// Dirac measure, enumerated to a finite depth of the point process.
pub struct FirstJumpPmf {
    /// Pairs of frequency value and probability, ascending in value.
    pub atoms: Vec<(f64, f64)>,
    /// Total reported mass; approaches one as the depth grows.
    pub mass: f64,
}

const FIRST_JUMP_PRUNE_FLOOR: f64 = 1e-15;
const FIRST_JUMP_ATOM_CAP: usize = 4_000_000;
const FIRST_JUMP_DEPTH_CAP: u32 = 30;

struct FirstJumpWalk<'a> {
    p: f64,
    q: f64,
    terms: &'a [f64],
    atoms: Vec<(f64, f64)>,
    mass: f64,
    overflow: bool,
}

impl FirstJumpWalk<'_> {
    /// Depth-first enumeration over which earlier points feed the merge.
    /// `geom` carries the geometric return sum that prices membership of
    /// the current level, so each branch costs constant time; sibling
    /// factors sum to one, which keeps the enumeration exactly normalized
    /// within each first-participation class.
    fn descend(&mut self, level: u32, weight: f64, geom: f64, value: f64) {
        if weight < FIRST_JUMP_PRUNE_FLOOR || self.overflow {
            return;
        }
        if level == 0 {
            if self.atoms.len() >= FIRST_JUMP_ATOM_CAP {
                self.overflow = true;
                return;
            }
            self.atoms.push((value, weight));
            self.mass += weight;
            return;
        }
        let hit = self.p * geom;
        self.descend(
            level - 1,
            weight * hit,
            geom * self.q + 1.0,
            value + self.terms[level as usize],
        );
        self.descend(level - 1, weight * (1.0 - hit), geom * self.q, value);
    }
}

/// Enumerates the exact first-merge frequency law for `Dirac(p)`.
///
/// Frequencies take the form `sum_{i in J} p q^{i-1}` over finite index
/// sets `J`; the representation is unique exactly when `p >= 1/2`, the
/// regime this enumeration accepts. Atoms of probability below an
/// internal floor are pruned, so the reported mass can fall slightly
/// short of the depth-`d` total `1 - q^d`.
pub fn dirac_first_jump_pmf(p: f64, depth: u32) -> Result<FirstJumpPmf> {
    if !(0.5..1.0).contains(&p) {
        return Err(invalid(format!(
            "the enumeration needs p in [0.5, 1); for smaller p the value \
             representation is no longer unique, got p={p}"
        )));
    }
    if !(1..=FIRST_JUMP_DEPTH_CAP).contains(&depth) {
        return Err(invalid(format!(
            "depth must lie in 1..={FIRST_JUMP_DEPTH_CAP}, got {depth}"
        )));
    }
    let q = 1.0 - p;
    let mut terms = vec![0.0f64; depth as usize + 1];
    for (i, term) in terms.iter_mut().enumerate().skip(1) {
        *term = p * q.powi(i as i32 - 1);
    }
    let mut walk = FirstJumpWalk {
        p,
        q,
        terms: &terms,
        atoms: Vec::new(),
        mass: 0.0,
        overflow: false,
    };
    for j in 1..=depth {
        walk.descend(j - 1, terms[j as usize], 1.0, terms[j as usize]);
    }
    if walk.overflow {
        return Err(numerical(format!(
            "atom count exceeded the {FIRST_JUMP_ATOM_CAP} memory guard"
        )));
    }
    walk.atoms.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    Ok(FirstJumpPmf {
        atoms: walk.atoms,
        mass: walk.mass,
    })
}

/// Candidate values for the mean block-1 frequency at the first
/// non-private mutation, which the Monte Carlo arbiter
/// [`dust_observable_clade_mc`] discriminates between. The three
/// expressions genuinely disagree; all are kept on purpose.
pub struct CladeMeanCandidates {
    /// Closed-form expression through the auxiliary quantity
    /// `a = (1 - mass/mu) * (theta/2) / (theta/2 + mu)`:
    /// `1 - theta/(2 mu) * a/(1-a)`.
    pub closed_form: f64,
    /// Geometric mixture of the per-jump means with the merge event
    /// playing the success role.
    pub jump_success_mixture: f64,
    /// Geometric mixture of the per-jump means with the mutation
    /// playing the success role.
    pub mutation_success_mixture: f64,
}

/// Evaluates the three candidate formulas for the limiting mean of the
/// scaled minimal observable clade size in the dust regime.
pub fn dust_observable_clade_candidates(
    measure: &Measure,
    theta: f64,
) -> Result<CladeMeanCandidates> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(invalid(format!(
            "the mutation rate must be positive, got theta={theta}"
        )));
    }
    let profile = measure.dust_profile();
    let gamma = match profile.gamma {
        Some(gamma) if profile.has_dust => gamma,
        _ => {
            return Err(unsupported(
                "the clade limit needs a measure with a dust component",
            ))
        }
    };
    let mu = profile.mu_minus_one;
    let mass = measure.total_mass();
    let half_theta = 0.5 * theta;
    let a = (1.0 - mass / mu) * half_theta / (half_theta + mu);
    let closed_form = 1.0 - half_theta / mu * a / (1.0 - a);
    let jump_success = mu / (mu + half_theta);
    let survive = 1.0 - gamma;
    let jump_success_mixture =
        1.0 - jump_success * survive / (1.0 - (1.0 - jump_success) * survive);
    let mutation_success = 1.0 - jump_success;
    let mutation_success_mixture =
        1.0 - mutation_success * survive / (1.0 - jump_success * survive);
    Ok(CladeMeanCandidates {
        closed_form,
        jump_success_mixture,
        mutation_success_mixture,
    })
}

/// Monte Carlo arbiter for [`dust_observable_clade_candidates`]: the
/// limiting scaled minimal observable clade size equals the block-1
/// frequency at the first mutation that lands after the block's first
/// merge. Merges arrive at rate `mu`, mutations at rate `theta/2`, and
/// the frequency path is independent of both clocks, so each replicate
/// counts competing exponentials and reads the chain at that jump.
pub fn dust_observable_clade_mc(
    measure: &Measure,
    theta: f64,
    reps: u64,
    rng_seed: u64,
) -> Result<McEstimate> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(invalid(format!(
            "the mutation rate must be positive, got theta={theta}"
        )));
    }
    if reps < 100 {
        return Err(invalid(format!(
            "at least 100 replicates are needed for a standard error, got {reps}"
        )));
    }
    let (law, _) = dust_point_law(measure)?;
    let mu = measure.dust_profile().mu_minus_one;
    let jump_first = mu / (mu + 0.5 * theta);
    let mut rng = task_rng(rng_seed, 0);
    let mut state = DustChainState::new();
    let mut path = Vec::new();
    let mut samples = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let mut jumps = 1u32;
        while rng.random::<f64>() < jump_first {
            jumps += 1;
        }
        state.reset();
        state.run(&law, jumps, &mut rng, &mut path);
        samples.push(path[jumps as usize - 1]);
    }
    Ok(McEstimate::from_samples(&samples))
}

/// Parameters of the Beta law of the scaled minimal observable clade
/// size in the Bolthausen-Sznitman case: `Beta(1/(1+theta/2),
/// (theta/2)/(1+theta/2))`; the parameters sum to one.
pub fn bsz_observable_clade_beta_params(theta: f64) -> Result<(f64, f64)> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(invalid(format!(
            "the mutation rate must be positive, got theta={theta}"
        )));
    }
    let half = 0.5 * theta;
    Ok((1.0 / (1.0 + half), half / (1.0 + half)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    const RECURSION_VS_REFERENCE: f64 = 1e-13;
    const RECURSION_VS_CLOSED: f64 = 1e-13;
    const RECURSION_VS_BERNOULLI: f64 = 1e-10;
    const LENGTH_VS_HARMONIC: f64 = 1e-10;
    const QUADRATURE_TOLERANCE: f64 = 1e-8;

    /// Straightforward memoized evaluation of the root-share recursion
    /// using directly computed hypergeometric weights, as an oracle for
    /// the ratio-update scheme inside the table.
    fn reference_root_share(
        measure: &Measure,
        n: u32,
        m: u32,
        memo: &mut HashMap<(u32, u32), f64>,
    ) -> f64 {
        if m == n {
            return 1.0;
        }
        if m == 1 {
            return 0.0;
        }
        if let Some(&hit) = memo.get(&(n, m)) {
            return hit;
        }
        let transition = measure.transition_distribution(n).unwrap();
        let mut acc = 0.0;
        for k in 2..=n {
            let weight_k = transition.probs()[(k - 2) as usize];
            let l_lo = k.saturating_sub(n - m);
            for l in l_lo..=k.min(m) {
                let w = hypergeom_weight(
                    u64::from(n),
                    u64::from(m),
                    u64::from(k),
                    u64::from(l),
                );
                let reduced = if l <= 1 { m } else { m - l + 1 };
                acc += weight_k
                    * w
                    * reference_root_share(measure, n - k + 1, reduced, memo);
            }
        }
        memo.insert((n, m), acc);
        acc
    }

    #[test]
    fn table_matches_the_reference_recursion() {
        let measure = Measure::dirac(0.3).unwrap();
        let table = RootShareTable::new(&measure, 14, 14).unwrap();
        let mut memo = HashMap::new();
        for n in 2..=14 {
            for m in 2..=n {
                let expected = reference_root_share(&measure, n, m, &mut memo);
                assert_relative_eq!(
                    table.prob(n, m).unwrap(),
                    expected,
                    max_relative = RECURSION_VS_REFERENCE,
                    epsilon = RECURSION_VS_REFERENCE
                );
            }
        }
    }

    #[test]
    fn kingman_recursion_matches_the_closed_form() {
        let table = RootShareTable::new(&Measure::kingman(), 20, 20).unwrap();
        for n in 2..=20 {
            for m in 2..=n {
                assert_relative_eq!(
                    table.prob(n, m).unwrap(),
                    kingman_root_share(n, m).unwrap(),
                    max_relative = RECURSION_VS_CLOSED
                );
            }
        }
        assert_relative_eq!(
            root_share_probability(&Measure::kingman(), 3, 2).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            root_share_probability(&Measure::kingman(), 4, 2).unwrap(),
            5.0 / 9.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn boundaries_and_argument_checks() {
        let measure = Measure::eldon_wakeley(0.8).unwrap();
        let table = RootShareTable::new(&measure, 12, 6).unwrap();
        assert_eq!(table.prob(12, 12).unwrap(), 1.0);
        assert_eq!(table.prob(7, 1).unwrap(), 0.0);
        assert_eq!(table.prob(1, 1).unwrap(), 1.0);
        assert!(table.prob(12, 7).is_err());
        assert!(table.prob(13, 2).is_err());
        assert!(table.prob(5, 0).is_err());
        assert!(table.prob(5, 6).is_err());
        assert!(RootShareTable::new(&measure, 0, 3).is_err());
        assert!(RootShareTable::new(&measure, ROOT_SHARE_N_MAX + 1, 3).is_err());
        assert!(kingman_root_share(5, 1).is_err());
        assert!(kingman_root_share_limit(1).is_err());
        assert_relative_eq!(kingman_root_share(6, 6).unwrap(), 1.0);
        assert_relative_eq!(
            kingman_root_share_limit(10).unwrap(),
            9.0 / 11.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn bsz_exact_small_case_and_preconditions() {
        assert_eq!(bsz_root_share(3, 2).unwrap(), 0.75);
        assert!(bsz_root_share(3, 3).is_err());
        assert!(bsz_root_share(3, 1).is_err());
        assert!(bsz_root_share(BSZ_ROOT_SHARE_N_MAX + 1, 2).is_err());
    }

    #[test]
    fn bsz_recursion_agrees_with_the_bernoulli_representation() {
        let table =
            RootShareTable::new(&Measure::bolthausen_sznitman(), 25, 25).unwrap();
        for n in 3..=25 {
            for m in 2..n {
                assert_relative_eq!(
                    table.prob(n, m).unwrap(),
                    bsz_root_share(n, m).unwrap(),
                    max_relative = RECURSION_VS_BERNOULLI,
                    epsilon = RECURSION_VS_BERNOULLI
                );
            }
        }
    }

    #[test]
    fn root_share_is_nonincreasing_in_the_sample_size() {
        for measure in [
            Measure::dirac(0.5).unwrap(),
            Measure::beta(1.5, 0.5).unwrap(),
            Measure::eldon_wakeley(0.8).unwrap(),
        ] {
            let table = RootShareTable::new(&measure, 40, 5).unwrap();
            for m in 2..=5u32 {
                for n in m..40 {
                    let here = table.prob(n, m).unwrap();
                    let next = table.prob(n + 1, m).unwrap();
                    assert!(
                        next <= here + 1e-12,
                        "share rose from {here} to {next} at n={n}, m={m}"
                    );
                }
            }
        }
    }

    #[test]
    fn kingman_dominates_the_beta_family_shares() {
        let kingman = kingman_root_share(100, 10).unwrap();
        let mut previous = 0.0;
        for alpha in [1.0, 1.25, 1.5] {
            let measure = Measure::beta_from_alpha(alpha).unwrap();
            let share = root_share_probability(&measure, 100, 10).unwrap();
            assert!(
                share > previous && share < kingman,
                "share {share} at alpha={alpha} broke the ordering"
            );
            previous = share;
        }
        let pinned = root_share_probability(
            &Measure::beta_from_alpha(1.25).unwrap(),
            100,
            10,
        )
        .unwrap();
        assert_relative_eq!(pinned, 0.647_907_094_291_822_7, max_relative = 1e-10);
    }

    #[test]
    fn last_merger_mc_matches_closed_and_recursive_values() {
        let kingman = root_share_last_merger_mc(&Measure::kingman(), 4, 2, 20_000, 5)
            .unwrap();
        assert!(
            kingman.within(5.0 / 9.0, 4.0),
            "Kingman estimate {} strays from 5/9 (se {})",
            kingman.mean,
            kingman.se
        );

        let full = root_share_last_merger_mc(&Measure::kingman(), 5, 5, 500, 6).unwrap();
        assert_eq!(full.mean, 1.0);
        assert_eq!(full.se, 0.0);

        let dirac = Measure::dirac(0.5).unwrap();
        let mc = root_share_last_merger_mc(&dirac, 10, 5, 20_000, 7).unwrap();
        let exact = root_share_probability(&dirac, 10, 5).unwrap();
        assert!(
            mc.within(exact, 4.0),
            "Dirac estimate {} strays from {exact} (se {})",
            mc.mean,
            mc.se
        );

        assert!(root_share_last_merger_mc(&dirac, 10, 5, 99, 1).is_err());
        assert!(root_share_last_merger_mc(&dirac, 10, 1, 1000, 1).is_err());
    }

    #[test]
    fn expected_length_reproduces_hand_recursions() {
        let kingman = Measure::kingman();
        assert_relative_eq!(
            expected_total_length(&kingman, 2).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        let harmonic_9: f64 = (1..10).map(|i| 1.0 / f64::from(i)).sum();
        assert_relative_eq!(
            expected_total_length(&kingman, 10).unwrap(),
            2.0 * harmonic_9,
            max_relative = 1e-12
        );
        let harmonic_999: f64 = (1..1000).map(|i| 1.0 / f64::from(i)).sum();
        assert_relative_eq!(
            expected_total_length(&kingman, 1000).unwrap(),
            2.0 * harmonic_999,
            max_relative = LENGTH_VS_HARMONIC
        );
        let dirac = Measure::dirac(0.5).unwrap();
        assert_relative_eq!(
            expected_total_length(&dirac, 3).unwrap(),
            3.0,
            max_relative = 1e-14
        );
        assert!(expected_total_length(&kingman, 1).is_err());
    }

    #[test]
    fn growth_length_matches_its_limits() {
        let harmonic_9: f64 = (1..10).map(|i| 1.0 / f64::from(i)).sum();
        assert_relative_eq!(
            kingman_growth_expected_total_length(10, 0.0).unwrap(),
            2.0 * harmonic_9,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            kingman_growth_expected_total_length(10, 1e-8).unwrap(),
            2.0 * harmonic_9,
            max_relative = 1e-5
        );
        let exponential_integral_at_one = 0.219_383_934_395_520_27;
        assert_relative_eq!(
            kingman_growth_expected_total_length(2, 1.0).unwrap(),
            2.0 * std::f64::consts::E * exponential_integral_at_one,
            max_relative = QUADRATURE_TOLERANCE
        );
        let slow = kingman_growth_expected_total_length(10, 0.5).unwrap();
        let mid = kingman_growth_expected_total_length(10, 2.0).unwrap();
        let fast = kingman_growth_expected_total_length(10, 50.0).unwrap();
        assert!(slow > mid && mid > fast && fast > 0.0);
        assert!(slow < 2.0 * harmonic_9);
        assert!(kingman_growth_expected_total_length(1, 1.0).is_err());
        assert!(kingman_growth_expected_total_length(10, -1.0).is_err());
    }

    #[test]
    fn dust_chain_means_decay_geometrically() {
        let dirac = Measure::dirac(0.5).unwrap();
        let run = dust_jump_chain_mc(&dirac, 3, 20_000, 11).unwrap();
        assert_eq!(run.first_jump_values.len(), 20_000);
        assert_relative_eq!(run.gamma, 0.5);
        for (k, estimate) in run.per_jump.iter().enumerate() {
            let expected = 1.0 - 0.5f64.powi(k as i32 + 1);
            assert!(
                estimate.within(expected, 3.0),
                "jump {} mean {} strays from {expected} (se {})",
                k + 1,
                estimate.mean,
                estimate.se
            );
        }

        let beta = Measure::beta(3.0, 1.0).unwrap();
        let run = dust_jump_chain_mc(&beta, 2, 20_000, 12).unwrap();
        let gamma = 2.0 / 3.0;
        assert_relative_eq!(run.gamma, gamma, max_relative = 1e-14);
        for (k, estimate) in run.per_jump.iter().enumerate() {
            let expected = 1.0 - (1.0 - gamma).powi(k as i32 + 1);
            assert!(
                estimate.within(expected, 3.0),
                "beta jump {} mean {} strays from {expected} (se {})",
                k + 1,
                estimate.mean,
                estimate.se
            );
        }
    }

    #[test]
    fn dust_chain_paths_are_increasing_and_below_one() {
        let (law, _) = dust_point_law(&Measure::dirac(0.7).unwrap()).unwrap();
        let mut rng = task_rng(13, 0);
        let mut state = DustChainState::new();
        let mut path = Vec::new();
        for _ in 0..200 {
            state.reset();
            state.run(&law, 6, &mut rng, &mut path);
            let mut previous = 0.0;
            for &value in &path {
                assert!(value > previous && value < 1.0);
                previous = value;
            }
        }
    }

    #[test]
    fn dust_chain_rejects_unsupported_measures() {
        assert!(dust_jump_chain_mc(&Measure::kingman(), 2, 1000, 1).is_err());
        assert!(
            dust_jump_chain_mc(&Measure::eldon_wakeley(0.5).unwrap(), 2, 1000, 1)
                .is_err()
        );
        assert!(dust_jump_chain_mc(&Measure::bolthausen_sznitman(), 2, 1000, 1).is_err());
        let dusty_but_heavy = Measure::beta(1.5, 0.5).unwrap();
        assert!(dusty_but_heavy.dust_profile().has_dust);
        assert!(dust_jump_chain_mc(&dusty_but_heavy, 2, 1000, 1).is_err());
    }

    #[test]
    fn first_jump_pmf_has_the_expected_atoms_and_mass() {
        let pmf = dirac_first_jump_pmf(0.6, 10).unwrap();
        let expected_mass = 1.0 - 0.4f64.powi(10);
        assert!((pmf.mass - expected_mass).abs() < 1e-9);
        let direct = pmf
            .atoms
            .iter()
            .find(|(value, _)| (*value - 0.6).abs() < 1e-12)
            .expect("the single-point atom must be present");
        assert_relative_eq!(direct.1, 0.6, max_relative = 1e-12);
        for window in pmf.atoms.windows(2) {
            assert!(window[0].0 < window[1].0);
        }
        assert!(pmf.atoms.iter().all(|&(v, p)| v > 0.0 && v < 1.0 && p > 0.0));

        let deep = dirac_first_jump_pmf(0.6, 25).unwrap();
        assert!(deep.mass >= 0.999, "deep mass {} fell short", deep.mass);

        assert!(dirac_first_jump_pmf(0.4, 10).is_err());
        assert!(dirac_first_jump_pmf(0.6, 0).is_err());
        assert!(dirac_first_jump_pmf(0.6, FIRST_JUMP_DEPTH_CAP + 1).is_err());
    }

    #[test]
    fn first_jump_pmf_matches_the_simulated_histogram() {
        let reps = 30_000usize;
        let pmf = dirac_first_jump_pmf(0.6, 20).unwrap();
        let run =
            dust_jump_chain_mc(&Measure::dirac(0.6).unwrap(), 1, reps as u64, 17).unwrap();
        for &(value, prob) in pmf.atoms.iter().filter(|&&(_, p)| p >= 0.02) {
            let hits = run
                .first_jump_values
                .iter()
                .filter(|&&sample| (sample - value).abs() < 1e-9)
                .count();
            let observed = hits as f64 / reps as f64;
            let se = (prob * (1.0 - prob) / reps as f64).sqrt();
            assert!(
                (observed - prob).abs() <= 4.0 * se,
                "atom at {value}: observed {observed}, expected {prob}"
            );
        }
    }

    #[test]
    fn clade_candidate_formulas_give_the_known_values() {
        let dirac = Measure::dirac(0.5).unwrap();
        let candidates = dust_observable_clade_candidates(&dirac, 2.0).unwrap();
        assert_relative_eq!(candidates.closed_form, 0.9, max_relative = 1e-12);
        assert_relative_eq!(
            candidates.jump_success_mixture,
            0.6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            candidates.mutation_success_mixture,
            0.75,
            max_relative = 1e-12
        );
        assert!(dust_observable_clade_candidates(&dirac, 0.0).is_err());
        assert!(
            dust_observable_clade_candidates(&Measure::kingman(), 2.0).is_err()
        );
    }

    #[test]
    fn clade_arbiter_settles_on_the_mutation_success_mixture() {
        let dirac = Measure::dirac(0.5).unwrap();
        let estimate = dust_observable_clade_mc(&dirac, 2.0, 30_000, 19).unwrap();
        let candidates = dust_observable_clade_candidates(&dirac, 2.0).unwrap();
        assert!(
            estimate.within(candidates.mutation_success_mixture, 4.0),
            "arbiter mean {} strays from {} (se {})",
            estimate.mean,
            candidates.mutation_success_mixture,
            estimate.se
        );
        assert!(!estimate.within(candidates.closed_form, 4.0));
        assert!(!estimate.within(candidates.jump_success_mixture, 4.0));
    }

    #[test]
    fn bsz_clade_parameters_sum_to_one() {
        let (a, b) = bsz_observable_clade_beta_params(2.0).unwrap();
        assert_eq!((a, b), (0.5, 0.5));
        let (a, b) = bsz_observable_clade_beta_params(0.001).unwrap();
        assert!(a > 0.999 && b < 0.001);
        assert_relative_eq!(a + b, 1.0, max_relative = 1e-15);
        assert!(bsz_observable_clade_beta_params(0.0).is_err());
    }
}
