//! Coalescent genealogies and their samplers.
//!
//! A genealogy on `n` leaves is stored as the ordered list of merger
//! events of the block-counting jump chain. Leaves are blocks `0..n`,
//! with leaf `i` carrying individual `i + 1`; the event at position `j`
//! merges at least two living blocks into the new block `n + j`. The
//! encoding makes the tree ultrametric by construction: every leaf sits
//! at time zero and every block persists until the event that absorbs
//! it.
//!
//! Sampling walks the jump chain: with `b` blocks alive, wait an
//! exponential time with the total merger rate, draw the merger size
//! `k` from the transition law, and merge a uniformly random `k`-subset.
//! Kingman and Bolthausen-Sznitman measures get closed-form merger-size
//! samplers; other families use cached transition tables per block
//! count. Time-changed genealogies map every event time through the
//! inverse intensity of a [`TimeChange`]. Subsample genealogies are
//! derived from the full tree by restriction, never resimulated, so the
//! coupling between the two trees is exact.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::demography::TimeChange;
use crate::error::{invalid, Error, Result};
use crate::measures::{Measure, Transition};
use crate::rng::task_rng;

/// One merger of the block-counting chain: at `time`, the blocks in
/// `children` fuse into the new block `block`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub time: f64,
    pub children: Vec<u32>,
    pub block: u32,
}

/// An ultrametric genealogy encoded as an ordered merger list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Genealogy {
    n: u32,
    events: Vec<MergeEvent>,
}

#[derive(Deserialize)]
struct GenealogyRepr {
    n: u32,
    events: Vec<MergeEvent>,
}

impl TryFrom<GenealogyRepr> for Genealogy {
    type Error = Error;

    fn try_from(repr: GenealogyRepr) -> Result<Genealogy> {
        Genealogy::new(repr.n, repr.events)
    }
}

impl<'de> Deserialize<'de> for Genealogy {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Genealogy, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let repr = GenealogyRepr::deserialize(deserializer)?;
        Genealogy::try_from(repr).map_err(serde::de::Error::custom)
    }
}

impl Genealogy {
    /// Builds a genealogy from its event list, checking that the events
    /// describe a single ultrametric tree: strictly increasing positive
    /// times, each event merging at least two blocks that are alive at
    /// that moment, block ids `n + j` in creation order, and exactly one
    /// block surviving at the end. Children are sorted on construction.
    pub fn new(n: u32, mut events: Vec<MergeEvent>) -> Result<Genealogy> {
        if n == 0 {
            return Err(invalid("a genealogy needs at least one leaf"));
        }
        let total_blocks = n as usize + events.len();
        let mut alive = vec![false; total_blocks];
        for slot in alive.iter_mut().take(n as usize) {
            *slot = true;
        }
        let mut living = n as usize;
        let mut last_time = 0.0f64;
        for (j, event) in events.iter_mut().enumerate() {
            if !(event.time.is_finite() && event.time > last_time) {
                return Err(invalid(format!(
                    "event {j} has time {} not strictly after {last_time}",
                    event.time
                )));
            }
            last_time = event.time;
            if event.block as usize != n as usize + j {
                return Err(invalid(format!(
                    "event {j} creates block {} but blocks must be numbered in order",
                    event.block
                )));
            }
            if event.children.len() < 2 {
                return Err(invalid(format!("event {j} merges fewer than 2 blocks")));
            }
            event.children.sort_unstable();
            if event.children.windows(2).any(|w| w[0] == w[1]) {
                return Err(invalid(format!("event {j} lists a block twice")));
            }
            for &child in &event.children {
                if (child as usize) >= n as usize + j || !alive[child as usize] {
                    return Err(invalid(format!(
                        "event {j} merges block {child} which is not alive"
                    )));
                }
                alive[child as usize] = false;
            }
            alive[n as usize + j] = true;
            living -= event.children.len() - 1;
        }
        if living != 1 {
            return Err(invalid(format!(
                "events leave {living} blocks alive instead of a single root"
            )));
        }
        Ok(Genealogy { n, events })
    }

    /// Parses and validates a genealogy from its JSON event-list form.
    pub fn from_json(text: &str) -> Result<Genealogy> {
        Ok(serde_json::from_str(text)?)
    }

    /// Serializes the event list to JSON. Event times survive a round
    /// trip bit for bit.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("genealogy serializes")
    }

    /// Number of leaves.
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Merger events in time order.
    pub fn events(&self) -> &[MergeEvent] {
        &self.events
    }

    /// Total number of blocks over the whole history, leaves included.
    pub fn num_blocks(&self) -> usize {
        self.n as usize + self.events.len()
    }

    /// The block surviving at the end.
    pub fn root(&self) -> u32 {
        self.num_blocks() as u32 - 1
    }

    /// Time of the last merger, zero for a single-leaf genealogy.
    pub fn height(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Birth time of every block: zero for leaves, the creating event's
    /// time for internal blocks.
    pub fn birth_times(&self) -> Vec<f64> {
        let mut births = vec![0.0; self.num_blocks()];
        for event in &self.events {
            births[event.block as usize] = event.time;
        }
        births
    }

    /// Time at which each block is merged away. The root never merges
    /// and reports the tree height, giving it a zero-length branch.
    pub fn merge_times(&self) -> Vec<f64> {
        let mut merges = vec![self.height(); self.num_blocks()];
        for event in &self.events {
            for &child in &event.children {
                merges[child as usize] = event.time;
            }
        }
        merges
    }

    /// Parent block of each block, `None` for the root.
    pub fn parents(&self) -> Vec<Option<u32>> {
        let mut parents = vec![None; self.num_blocks()];
        for event in &self.events {
            for &child in &event.children {
                parents[child as usize] = Some(event.block);
            }
        }
        parents
    }

    /// Number of leaves below each block.
    pub fn leaf_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.num_blocks()];
        for slot in counts.iter_mut().take(self.n as usize) {
            *slot = 1;
        }
        for event in &self.events {
            counts[event.block as usize] = event
                .children
                .iter()
                .map(|&c| counts[c as usize])
                .sum();
        }
        counts
    }

    /// Branch length of each block, from its birth to the event that
    /// absorbs it; zero for the root.
    pub fn branch_lengths(&self) -> Vec<f64> {
        let births = self.birth_times();
        let merges = self.merge_times();
        births
            .iter()
            .zip(&merges)
            .map(|(b, m)| m - b)
            .collect()
    }

    /// Scalar tree functionals used by the downstream statistics.
    pub fn functionals(&self) -> TreeFunctionals {
        let merges = self.merge_times();
        let births = self.birth_times();
        let root = self.root() as usize;
        let mut total = 0.0f64;
        for idx in 0..self.num_blocks() {
            if idx != root {
                total += merges[idx] - births[idx];
            }
        }
        let external: Vec<f64> = merges[..self.n as usize].to_vec();
        let external_sum: f64 = external.iter().sum();
        TreeFunctionals {
            height: self.height(),
            total_length: total,
            internal_length: total - external_sum,
            external_lengths: external,
        }
    }

    /// Leaf layout for contiguous subtree slices: a depth-first order of
    /// the leaves and, for every block, the half-open range of positions
    /// its subtree occupies in that order.
    pub fn leaf_ranges(&self) -> LeafRanges {
        let blocks = self.num_blocks();
        let mut children: Vec<&[u32]> = vec![&[]; blocks];
        for event in &self.events {
            children[event.block as usize] = &event.children;
        }
        let mut order = Vec::with_capacity(self.n as usize);
        let mut ranges = vec![(0u32, 0u32); blocks];
        let mut stack = vec![self.root()];
        while let Some(block) = stack.pop() {
            if (block as usize) < self.n as usize {
                let pos = order.len() as u32;
                order.push(block);
                ranges[block as usize] = (pos, pos + 1);
            } else {
                stack.extend(children[block as usize].iter().rev());
            }
        }
        for event in &self.events {
            let start = event
                .children
                .iter()
                .map(|&c| ranges[c as usize].0)
                .min()
                .expect("events merge at least two blocks");
            let end = event
                .children
                .iter()
                .map(|&c| ranges[c as usize].1)
                .max()
                .expect("events merge at least two blocks");
            ranges[event.block as usize] = (start, end);
        }
        LeafRanges { order, ranges }
    }

    /// Newick serialization with branch lengths, leaves labelled by
    /// individual (1-based).
    pub fn to_newick(&self) -> String {
        let births = self.birth_times();
        let mut reprs: Vec<String> = Vec::with_capacity(self.num_blocks());
        for leaf in 0..self.n {
            reprs.push((leaf + 1).to_string());
        }
        for event in &self.events {
            let mut text = String::from("(");
            for (i, &child) in event.children.iter().enumerate() {
                if i > 0 {
                    text.push(',');
                }
                text.push_str(&reprs[child as usize]);
                text.push(':');
                text.push_str(&format!("{}", event.time - births[child as usize]));
            }
            text.push(')');
            reprs.push(text);
        }
        let mut out = reprs.pop().expect("at least one block");
        out.push(';');
        out
    }
}

/// Scalar functionals of a genealogy.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeFunctionals {
    /// Time of the final merger.
    pub height: f64,
    /// Sum of all branch lengths.
    pub total_length: f64,
    /// Length of each leaf's branch, indexed by leaf id.
    pub external_lengths: Vec<f64>,
    /// Total length of branches subtending at least two leaves; equals
    /// `total_length` minus the external lengths exactly.
    pub internal_length: f64,
}

/// Depth-first leaf order plus per-block position ranges.
#[derive(Debug, Clone)]
pub struct LeafRanges {
    /// Leaf ids in depth-first order.
    pub order: Vec<u32>,
    /// Half-open `(start, end)` positions of each block's leaves in
    /// `order`, indexed by block id.
    pub ranges: Vec<(u32, u32)>,
}

impl LeafRanges {
    /// Sorted individual labels (1-based) below the given block.
    pub fn individuals_below(&self, block: u32) -> Vec<u32> {
        let (start, end) = self.ranges[block as usize];
        let mut leaves: Vec<u32> = self.order[start as usize..end as usize]
            .iter()
            .map(|&leaf| leaf + 1)
            .collect();
        leaves.sort_unstable();
        leaves
    }
}

enum SamplerKind {
    Kingman,
    BolthausenSznitman,
    General,
}

/// Reusable sampler for genealogies under a fixed measure.
///
/// Kingman and Bolthausen-Sznitman mergers are drawn from closed forms;
/// every other family caches one transition table per block count, so
/// repeated sampling at the same size pays the table cost once.
pub struct Simulator {
    measure: Measure,
    kind: SamplerKind,
    transitions: Vec<OnceLock<Transition>>,
}

impl Simulator {
    /// A sampler able to draw genealogies with up to `max_n` leaves.
    pub fn new(measure: Measure, max_n: u32) -> Result<Simulator> {
        measure.validate()?;
        if max_n < 2 {
            return Err(invalid(format!(
                "sampling needs at least two leaves, got n={max_n}"
            )));
        }
        let kind = match measure {
            Measure::Kingman => SamplerKind::Kingman,
            Measure::BolthausenSznitman => SamplerKind::BolthausenSznitman,
            _ => SamplerKind::General,
        };
        let slots = match kind {
            SamplerKind::General => max_n as usize + 1,
            _ => 0,
        };
        let mut transitions = Vec::with_capacity(slots);
        transitions.resize_with(slots, OnceLock::new);
        Ok(Simulator {
            measure,
            kind,
            transitions,
        })
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    /// Total merger rate and a sampled merger size at block count `b`.
    pub(crate) fn step<R: Rng + ?Sized>(&self, b: u32, rng: &mut R) -> Result<(f64, u32)> {
        Ok(match self.kind {
            SamplerKind::Kingman => ((b as f64) * (b as f64 - 1.0) / 2.0, 2),
            SamplerKind::BolthausenSznitman => {
                let bf = b as f64;
                let u: f64 = rng.random();
                let k = (bf / (bf - u * (bf - 1.0))).ceil() as u32;
                (bf - 1.0, k.clamp(2, b))
            }
            SamplerKind::General => {
                let transition = self.transition(b)?;
                (transition.total_rate(), transition.sample_k(rng))
            }
        })
    }

    /// The cached transition law at block count `b`.
    pub fn transition(&self, b: u32) -> Result<&Transition> {
        let slot = self
            .transitions
            .get(b as usize)
            .ok_or_else(|| invalid(format!("block count {b} beyond the sampler's maximum")))?;
        if let Some(t) = slot.get() {
            return Ok(t);
        }
        let built = self.measure.transition_distribution(b)?;
        Ok(slot.get_or_init(|| built))
    }

    /// Draws one genealogy on `n` leaves.
    pub fn sample<R: Rng + ?Sized>(&self, n: u32, rng: &mut R) -> Result<Genealogy> {
        if n < 2 {
            return Err(invalid(format!(
                "sampling needs at least two leaves, got n={n}"
            )));
        }
        if matches!(self.kind, SamplerKind::General) && (n as usize) >= self.transitions.len() {
            return Err(invalid(format!(
                "sample size {n} beyond the sampler's maximum"
            )));
        }
        let mut blocks: Vec<u32> = (0..n).collect();
        let mut events: Vec<MergeEvent> = Vec::with_capacity(n as usize - 1);
        let mut time = 0.0f64;
        let mut next_block = n;
        while blocks.len() > 1 {
            let b = blocks.len() as u32;
            let (rate, k) = self.step(b, rng)?;
            let wait: f64 = rng.sample(Exp1);
            time += wait / rate;
            let k = k as usize;
            for i in 0..k {
                let j = rng.random_range(i..blocks.len());
                blocks.swap(i, j);
            }
            let mut children: Vec<u32> = blocks[..k].to_vec();
            children.sort_unstable();
            blocks[0] = next_block;
            for i in (1..k).rev() {
                blocks.swap_remove(i);
            }
            events.push(MergeEvent {
                time,
                children,
                block: next_block,
            });
            next_block += 1;
        }
        Genealogy::new(n, events)
    }
}

/// Samples one genealogy, deterministic in the seed.
pub fn simulate(measure: &Measure, n: u32, rng_seed: u64) -> Result<Genealogy> {
    let simulator = Simulator::new(*measure, n.max(2))?;
    simulator.sample(n, &mut task_rng(rng_seed, 0))
}

/// Samples one genealogy and places its event times on the real-time
/// axis of the given time change. The jump chain is untouched, so the
/// topology matches [`simulate`] for the same seed; an identity time
/// change returns its output unchanged.
pub fn simulate_time_changed(
    measure: &Measure,
    n: u32,
    time_change: &TimeChange,
    rng_seed: u64,
) -> Result<Genealogy> {
    let internal = simulate(measure, n, rng_seed)?;
    apply_time_change(internal, time_change)
}

/// Maps every event time of an internal-clock genealogy through the
/// inverse intensity.
pub fn apply_time_change(genealogy: Genealogy, time_change: &TimeChange) -> Result<Genealogy> {
    if time_change.is_identity() {
        return Ok(genealogy);
    }
    let n = genealogy.n();
    let mut events = genealogy.events;
    for event in &mut events {
        event.time = time_change.inverse_intensity(event.time)?;
    }
    Genealogy::new(n, events)
}

/// A branch segment of the full tree covered by the subsample tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Full-tree block whose branch carries the segment.
    pub full_block: u32,
    /// Segment start time.
    pub start: f64,
    /// Segment end time.
    pub end: f64,
}

/// A genealogy together with the genealogy of the subsample holding the
/// first `m` individuals, derived by restriction so the coupling is
/// exact.
///
/// The embedding records, for every block of the sub tree, the full-tree
/// branch segments its own branch runs along; the sub root's image is
/// extended up to the full root, so the embedded image equals the union
/// of the full-tree paths from leaves `1..=m` to the root.
#[derive(Debug, Clone)]
pub struct NestedGenealogy {
    full: Genealogy,
    sub: Genealogy,
    embedding: Vec<Vec<Segment>>,
}

impl NestedGenealogy {
    /// Restricts `full` to its first `m` leaves.
    pub fn new(full: Genealogy, m: u32) -> Result<NestedGenealogy> {
        if m < 1 || m > full.n() {
            return Err(invalid(format!(
                "subsample size must satisfy 1 <= m <= n, got m={m}, n={}",
                full.n()
            )));
        }
        let blocks = full.num_blocks();
        let mut to_sub: Vec<Option<u32>> = vec![None; blocks];
        let mut open_start = vec![0.0f64; m as usize + full.events().len()];
        let mut embedding: Vec<Vec<Segment>> = Vec::with_capacity(open_start.len());
        for leaf in 0..m {
            to_sub[leaf as usize] = Some(leaf);
            embedding.push(Vec::new());
        }
        let mut sub_events: Vec<MergeEvent> = Vec::new();
        let mut hits: Vec<(u32, u32)> = Vec::new();
        for event in full.events() {
            hits.clear();
            hits.extend(event.children.iter().filter_map(|&child| {
                to_sub[child as usize].map(|sub_id| (child, sub_id))
            }));
            match hits.len() {
                0 => {}
                1 => {
                    let (child, sub_id) = hits[0];
                    embedding[sub_id as usize].push(Segment {
                        full_block: child,
                        start: open_start[sub_id as usize],
                        end: event.time,
                    });
                    to_sub[child as usize] = None;
                    to_sub[event.block as usize] = Some(sub_id);
                    open_start[sub_id as usize] = event.time;
                }
                _ => {
                    let new_sub = m + sub_events.len() as u32;
                    let mut children = Vec::with_capacity(hits.len());
                    for &(child, sub_id) in &hits {
                        embedding[sub_id as usize].push(Segment {
                            full_block: child,
                            start: open_start[sub_id as usize],
                            end: event.time,
                        });
                        to_sub[child as usize] = None;
                        children.push(sub_id);
                    }
                    children.sort_unstable();
                    sub_events.push(MergeEvent {
                        time: event.time,
                        children,
                        block: new_sub,
                    });
                    to_sub[event.block as usize] = Some(new_sub);
                    open_start[new_sub as usize] = event.time;
                    embedding.push(Vec::new());
                }
            }
        }
        let sub_root = to_sub[full.root() as usize]
            .expect("the full root hosts the subsample root");
        embedding[sub_root as usize].push(Segment {
            full_block: full.root(),
            start: open_start[sub_root as usize],
            end: full.height(),
        });
        let sub = Genealogy::new(m, sub_events)?;
        Ok(NestedGenealogy {
            full,
            sub,
            embedding,
        })
    }

    pub fn full(&self) -> &Genealogy {
        &self.full
    }

    pub fn sub(&self) -> &Genealogy {
        &self.sub
    }

    /// Full-tree segments covered by each sub-tree block's branch,
    /// indexed by sub block id.
    pub fn embedding(&self) -> &[Vec<Segment>] {
        &self.embedding
    }

    /// Whether the subsample already reaches the full tree's root, that
    /// is, both trees have the same most recent common ancestor time.
    pub fn root_shared(&self) -> Result<bool> {
        if self.sub.n() < 2 {
            return Err(invalid(
                "root sharing needs a subsample of at least two individuals",
            ));
        }
        Ok(self.sub.height() == self.full.height())
    }

    /// Fraction of the full tree's internal branch length covered by the
    /// embedded subsample tree.
    ///
    /// Internal branches are those subtending at least two leaves of the
    /// full sample. A tree whose only merger is the root event has no
    /// internal branches at all; the fraction is reported as zero then.
    pub fn shared_internal_length_fraction(&self) -> Result<f64> {
        if self.sub.n() < 2 {
            return Err(invalid(
                "the shared length fraction needs a subsample of at least two individuals",
            ));
        }
        let counts = self.full.leaf_counts();
        let lengths = self.full.branch_lengths();
        let root = self.full.root() as usize;
        let mut denominator = 0.0f64;
        for (block, (&count, &length)) in counts.iter().zip(&lengths).enumerate() {
            if block != root && count >= 2 {
                denominator += length;
            }
        }
        if denominator == 0.0 {
            return Ok(0.0);
        }
        let mut numerator = 0.0f64;
        for segments in &self.embedding {
            for segment in segments {
                let block = segment.full_block as usize;
                if block != root && counts[block] >= 2 {
                    numerator += segment.end - segment.start;
                }
            }
        }
        Ok(numerator / denominator)
    }
}

/// Samples a full genealogy on `n` leaves and restricts it to the first
/// `m` individuals.
pub fn simulate_nested(
    measure: &Measure,
    n: u32,
    m: u32,
    rng_seed: u64,
) -> Result<NestedGenealogy> {
    if m > n {
        return Err(invalid(format!(
            "subsample size must not exceed the sample size, got m={m}, n={n}"
        )));
    }
    let full = simulate(measure, n, rng_seed)?;
    NestedGenealogy::new(full, m)
}

/// Draws the cycle partition of a uniform random permutation of
/// `{2, ..., n}` and a uniformly random merge order over its cycles.
///
/// Cycles are grown by sequential insertion: the j-th element starts a
/// fresh cycle with probability `1/j` and otherwise attaches to the
/// cycle of a uniformly chosen earlier element. Each cycle then receives
/// an independent exponential stamp and the list is returned in stamp
/// order, members sorted. This is an independent construction of the
/// Bolthausen-Sznitman merger order used to cross-check root-sharing
/// probabilities: the root is shared with the subsample `1..=m` exactly
/// when the last cycle contains an element at most `m`.
pub fn bsz_cycle_merge_sequence(n: u32, rng_seed: u64) -> Result<Vec<Vec<u32>>> {
    if n < 2 {
        return Err(invalid(format!(
            "the cycle construction needs n >= 2, got n={n}"
        )));
    }
    let mut rng = task_rng(rng_seed, 0);
    bsz_cycle_merge_sequence_with(n, &mut rng)
}

/// As [`bsz_cycle_merge_sequence`], drawing from a caller-owned stream.
pub fn bsz_cycle_merge_sequence_with<R: Rng + ?Sized>(
    n: u32,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    if n < 2 {
        return Err(invalid(format!(
            "the cycle construction needs n >= 2, got n={n}"
        )));
    }
    let count = n as usize - 1;
    let mut cycle_of: Vec<usize> = Vec::with_capacity(count);
    let mut cycles: Vec<Vec<u32>> = Vec::new();
    for j in 0..count {
        let element = j as u32 + 2;
        let r = rng.random_range(0..=j);
        if r == 0 {
            cycle_of.push(cycles.len());
            cycles.push(vec![element]);
        } else {
            let idx = cycle_of[r - 1];
            cycle_of.push(idx);
            cycles[idx].push(element);
        }
    }
    let mut stamped: Vec<(f64, Vec<u32>)> = cycles
        .into_iter()
        .map(|mut members| {
            members.sort_unstable();
            let stamp: f64 = rng.sample(Exp1);
            (stamp, members)
        })
        .collect();
    stamped.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(stamped.into_iter().map(|(_, members)| members).collect())
}
