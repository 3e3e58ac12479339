//! Random-forest model choice between coalescent model classes.
//!
//! A [`ModelClass`] couples a measure family and its parameter prior with a
//! prior on the observed number of segregating sites. Reference tables pair
//! simulated summary-statistic vectors with their class labels, and a
//! [`Forest`] of bagged decision trees learns to tell the classes apart.
//! Out-of-bag votes estimate the misclassification rate without a holdout
//! set, and split-based importances rank the statistics by how much they
//! contribute to the separation.
//!
//! Rows and trees are generated on independent generator streams indexed by
//! their position, so tables and forests are reproducible for a given seed
//! regardless of thread count.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{expected_total_length, kingman_growth_expected_total_length};
use crate::demography::{SizeProfile, TimeChange, TimeScaleExponent};
use crate::error::{invalid, Result};
use crate::genealogy::{apply_time_change, Simulator};
use crate::measures::Measure;
use crate::mutstats::{drop_mutations_with, StatVector, FEATURE_NAMES};
use crate::rng::task_rng;

/// Default prior support for the observed number of segregating sites.
pub const DEFAULT_S_SUPPORT: [u32; 6] = [15, 20, 30, 40, 60, 75];

/// Site count, nucleotide diversity, and allele-frequency quantiles.
pub const CORE_FEATURES: [&str; 7] = ["s", "pi", "af_q10", "af_q30", "af_q50", "af_q70", "af_q90"];

/// The core features plus the minimal observable clade summaries.
pub const CORE_AND_CLADE_FEATURES: [&str; 15] = [
    "s",
    "pi",
    "af_q10",
    "af_q30",
    "af_q50",
    "af_q70",
    "af_q90",
    "o_q10",
    "o_q30",
    "o_q50",
    "o_q70",
    "o_q90",
    "o_mean",
    "o_sd",
    "o_harmonic_mean",
];

/// How many rows may be retried before a simulation error is reported.
const ROW_ATTEMPTS: u64 = 3;

/// Stream offset separating retry attempts of the same row.
const ATTEMPT_STRIDE: u64 = 1 << 40;

/// Parameter prior of one model class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prior", rename_all = "snake_case")]
pub enum ClassPrior {
    /// Beta coalescent at constant size with the stability parameter
    /// uniform on `[low, high)`.
    BetaAlpha { low: f64, high: f64 },
    /// Kingman coalescent with exponential growth; the rate is zero with
    /// probability `atom_weight` and otherwise log-uniform on `[low, high]`.
    KingmanGrowth {
        atom_weight: f64,
        low: f64,
        high: f64,
    },
}

impl ClassPrior {
    fn validate(&self) -> Result<()> {
        match *self {
            ClassPrior::BetaAlpha { low, high } => {
                if !(low.is_finite() && high.is_finite() && 0.0 < low && low < high && high <= 2.0)
                {
                    return Err(invalid(format!(
                        "the stability prior needs 0 < low < high <= 2, got [{low}, {high})"
                    )));
                }
            }
            ClassPrior::KingmanGrowth {
                atom_weight,
                low,
                high,
            } => {
                if !(atom_weight.is_finite() && (0.0..=1.0).contains(&atom_weight)) {
                    return Err(invalid(format!(
                        "the atom weight must lie in [0, 1], got {atom_weight}"
                    )));
                }
                if !(low.is_finite() && high.is_finite() && 0.0 < low && low < high) {
                    return Err(invalid(format!(
                        "the growth-rate prior needs 0 < low < high, got [{low}, {high}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One parameter record drawn from a class prior.
///
/// `theta` is filled in during simulation, where the sample size is known,
/// so that the expected number of segregating sites equals `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub s: u32,
    pub theta: Option<f64>,
}

impl ParameterDraw {
    /// A placeholder record for rows that were not produced by a prior,
    /// such as externally constructed tables.
    pub fn none() -> ParameterDraw {
        ParameterDraw {
            alpha: None,
            rho: None,
            s: 0,
            theta: None,
        }
    }
}

/// A named model class: a parameter prior plus a site-count prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClass {
    name: String,
    prior: ClassPrior,
    s_support: Vec<u32>,
}

impl ModelClass {
    pub fn new(name: &str, prior: ClassPrior, s_support: &[u32]) -> Result<ModelClass> {
        if name.is_empty() {
            return Err(invalid("a model class needs a nonempty name"));
        }
        prior.validate()?;
        if s_support.is_empty() {
            return Err(invalid("the site-count support must be nonempty"));
        }
        if s_support[0] == 0 || s_support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "the site-count support must be strictly increasing and positive",
            ));
        }
        Ok(ModelClass {
            name: name.to_string(),
            prior,
            s_support: s_support.to_vec(),
        })
    }

    /// Beta coalescents with the stability parameter uniform on `[1, 2)`.
    pub fn beta_family() -> ModelClass {
        ModelClass::new(
            "beta",
            ClassPrior::BetaAlpha {
                low: 1.0,
                high: 2.0,
            },
            &DEFAULT_S_SUPPORT,
        )
        .expect("default beta class")
    }

    /// Kingman coalescents with exponentially growing populations, no
    /// growth with probability one tenth and a log-uniform rate otherwise.
    pub fn kingman_growth() -> ModelClass {
        ModelClass::new(
            "kingman_growth",
            ClassPrior::KingmanGrowth {
                atom_weight: 0.1,
                low: 0.1,
                high: 1000.0,
            },
            &DEFAULT_S_SUPPORT,
        )
        .expect("default growth class")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn prior(&self) -> &ClassPrior {
        &self.prior
    }

    pub fn s_support(&self) -> &[u32] {
        &self.s_support
    }

    /// Draws model parameters and a site count from the priors. The
    /// mutation rate stays unset until a simulation fixes the sample size.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterDraw {
        let mut draw = ParameterDraw::none();
        match self.prior {
            ClassPrior::BetaAlpha { low, high } => {
                draw.alpha = Some(rng.random_range(low..high));
            }
            ClassPrior::KingmanGrowth {
                atom_weight,
                low,
                high,
            } => {
                let rho = if rng.random::<f64>() < atom_weight {
                    0.0
                } else {
                    (low.ln() + rng.random::<f64>() * (high.ln() - low.ln())).exp()
                };
                draw.rho = Some(rho);
            }
        }
        draw.s = self.s_support[rng.random_range(0..self.s_support.len())];
        draw
    }

    /// Simulates one reference-table row: a prior draw, a genealogy of `n`
    /// leaves, mutations at the rate calibrated so the expected number of
    /// segregating sites equals the drawn `s`, and the summary statistics.
    fn simulate_row<R: Rng + ?Sized>(
        &self,
        n: u32,
        rng: &mut R,
    ) -> Result<(ParameterDraw, StatVector)> {
        let mut draw = self.sample_prior(rng);
        let (genealogy, expected_length) = match self.prior {
            ClassPrior::BetaAlpha { .. } => {
                let alpha = draw.alpha.expect("beta draw");
                let measure = Measure::beta_from_alpha(alpha)?;
                let expected_length = expected_total_length(&measure, n)?;
                let genealogy = Simulator::new(measure, n)?.sample(n, rng)?;
                (genealogy, expected_length)
            }
            ClassPrior::KingmanGrowth { .. } => {
                let rho = draw.rho.expect("growth draw");
                let expected_length = kingman_growth_expected_total_length(n, rho)?;
                let plain = Simulator::new(Measure::Kingman, n)?.sample(n, rng)?;
                let change = TimeChange::new(
                    SizeProfile::exponential_growth(rho)?,
                    TimeScaleExponent::wright_fisher(),
                )?;
                (apply_time_change(plain, &change)?, expected_length)
            }
        };
        let theta = 2.0 * f64::from(draw.s) / expected_length;
        draw.theta = Some(theta);
        let sites = drop_mutations_with(&genealogy, theta, rng)?;
        Ok((draw, sites.stat_vector()))
    }
}

/// One labelled simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Index into the table's class list.
    pub label: u32,
    pub params: ParameterDraw,
    pub values: Vec<f64>,
}

/// Labelled summary-statistic vectors with a fixed feature-column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    feature_names: Vec<String>,
    classes: Vec<String>,
    rows: Vec<TableRow>,
}

impl ReferenceTable {
    /// Validates rectangularity, finite values, known labels, and equal row
    /// counts per class.
    pub fn new(
        feature_names: Vec<String>,
        classes: Vec<String>,
        rows: Vec<TableRow>,
    ) -> Result<ReferenceTable> {
        if feature_names.is_empty() {
            return Err(invalid("the table needs at least one feature column"));
        }
        if has_duplicates(&feature_names) {
            return Err(invalid("feature names must be distinct"));
        }
        if classes.is_empty() {
            return Err(invalid("the table needs at least one class"));
        }
        if has_duplicates(&classes) {
            return Err(invalid("class names must be distinct"));
        }
        let mut counts = vec![0u64; classes.len()];
        for row in &rows {
            if row.label as usize >= classes.len() {
                return Err(invalid(format!("row label {} has no class", row.label)));
            }
            if row.values.len() != feature_names.len() {
                return Err(invalid(format!(
                    "a row has {} values for {} features",
                    row.values.len(),
                    feature_names.len()
                )));
            }
            if row.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("feature values must be finite"));
            }
            counts[row.label as usize] += 1;
        }
        if counts.windows(2).any(|w| w[0] != w[1]) {
            return Err(invalid(format!(
                "classes must have equal row counts, got {counts:?}"
            )));
        }
        Ok(ReferenceTable {
            feature_names,
            classes,
            rows,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    /// The same rows restricted to the named feature columns, in the order
    /// given.
    pub fn restricted(&self, features: &[&str]) -> Result<ReferenceTable> {
        let positions: Vec<usize> = features
            .iter()
            .map(|f| {
                self.feature_names
                    .iter()
                    .position(|name| name == f)
                    .ok_or_else(|| invalid(format!("unknown feature {f}")))
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|row| TableRow {
                label: row.label,
                params: row.params,
                values: positions.iter().map(|&p| row.values[p]).collect(),
            })
            .collect();
        ReferenceTable::new(
            features.iter().map(|f| f.to_string()).collect(),
            self.classes.clone(),
            rows,
        )
    }

    /// Writes `class,params,<features...>` records; the params column holds
    /// the JSON-encoded parameter draw.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["class".to_string(), "params".to_string()];
        header.extend(self.feature_names.iter().cloned());
        out.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![
                self.classes[row.label as usize].clone(),
                serde_json::to_string(&row.params)?,
            ];
            record.extend(row.values.iter().map(|v| format!("{v}")));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a table written by [`write_csv`](Self::write_csv). Classes are
    /// numbered in order of first appearance.
    pub fn read_csv<R: Read>(reader: R) -> Result<ReferenceTable> {
        let mut input = csv::Reader::from_reader(reader);
        let header = input.headers()?.clone();
        if header.len() < 3 || &header[0] != "class" || &header[1] != "params" {
            return Err(invalid(
                "the header must start with class,params followed by feature names",
            ));
        }
        let feature_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let mut classes: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        for record in input.records() {
            let record = record?;
            if record.len() != header.len() {
                return Err(invalid("a record does not match the header width"));
            }
            let class_name = &record[0];
            let label = match classes.iter().position(|c| c == class_name) {
                Some(index) => index as u32,
                None => {
                    classes.push(class_name.to_string());
                    classes.len() as u32 - 1
                }
            };
            let params: ParameterDraw = serde_json::from_str(&record[1])?;
            let values: Vec<f64> = record
                .iter()
                .skip(2)
                .map(|field| {
                    field
                        .parse::<f64>()
                        .map_err(|_| invalid(format!("unparseable feature value {field}")))
                })
                .collect::<Result<_>>()?;
            rows.push(TableRow {
                label,
                params,
                values,
            });
        }
        ReferenceTable::new(feature_names, classes, rows)
    }
}

fn has_duplicates(names: &[String]) -> bool {
    let mut seen = std::collections::HashSet::new();
    names.iter().any(|n| !seen.insert(n))
}

/// Simulates `rows_per_class` labelled rows for every class, in parallel
/// over rows. Each row runs on its own generator stream; a failed row is
/// retried on fresh streams a bounded number of times so that rare
/// degenerate draws cannot bias the table silently.
pub fn simulate_reference_table(
    classes: &[ModelClass],
    rows_per_class: u64,
    n: u32,
    rng_seed: u64,
) -> Result<ReferenceTable> {
    if classes.is_empty() {
        return Err(invalid("the table needs at least one class"));
    }
    if rows_per_class < 100 {
        return Err(invalid(format!(
            "the table needs at least 100 rows per class, got {rows_per_class}"
        )));
    }
    if n < 2 {
        return Err(invalid("the sample needs at least two individuals"));
    }
    let total = classes.len() as u64 * rows_per_class;
    let rows: Vec<TableRow> = (0..total)
        .into_par_iter()
        .map(|index| {
            let class = &classes[(index / rows_per_class) as usize];
            let mut last = None;
            for attempt in 0..ROW_ATTEMPTS {
                let mut rng = task_rng(rng_seed, attempt * ATTEMPT_STRIDE + index);
                match class.simulate_row(n, &mut rng) {
                    Ok((params, stats)) => {
                        return Ok(TableRow {
                            label: (index / rows_per_class) as u32,
                            params,
                            values: stats.values.to_vec(),
                        })
                    }
                    Err(error) => last = Some(error),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect::<Result<_>>()?;
    ReferenceTable::new(
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        classes.iter().map(|c| c.name.clone()).collect(),
        rows,
    )
}

/// Child index marking a leaf; the feature field then holds the label.
const LEAF_CHILD: u32 = u32::MAX;

/// One decision-tree node. Rows with `value > threshold` descend right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
}

/// A single classification tree in a flat node arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    root: u32,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    fn predict(&self, values: &[f64]) -> u32 {
        let mut index = self.root as usize;
        loop {
            let node = &self.nodes[index];
            if node.left == LEAF_CHILD {
                return node.feature;
            }
            index = if values[node.feature as usize] > node.threshold {
                node.right as usize
            } else {
                node.left as usize
            };
        }
    }
}

/// Training controls beyond the table itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub n_trees: u32,
    /// Features considered at each node.
    pub mtry: u32,
    /// Nodes with fewer rows become leaves.
    pub min_node_size: u32,
}

/// The conventional default of the rounded-up square root of the feature
/// count.
pub fn default_mtry(feature_count: usize) -> u32 {
    (feature_count as f64).sqrt().ceil() as u32
}

/// A bagged forest with its out-of-bag bookkeeping and split-based feature
/// importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    feature_names: Vec<String>,
    classes: Vec<String>,
    trees: Vec<Tree>,
    /// Per tree, a bitmask over training rows marking bootstrap membership.
    in_bag: Vec<Vec<u64>>,
    /// Per feature, the normalized sum of row-count-weighted impurity
    /// decreases over all splits.
    importances: Vec<f64>,
    options: TrainOptions,
    rng_seed: u64,
    trained_rows: u64,
}

impl Forest {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn options(&self) -> TrainOptions {
        self.options
    }

    /// Per-feature importance scores aligned with
    /// [`feature_names`](Self::feature_names), summing to one when any
    /// split exists.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }
}

/// Trains with the default minimum node size of two.
pub fn train_forest(
    table: &ReferenceTable,
    n_trees: u32,
    mtry: u32,
    rng_seed: u64,
) -> Result<Forest> {
    train_forest_with(
        table,
        TrainOptions {
            n_trees,
            mtry,
            min_node_size: 2,
        },
        rng_seed,
    )
}

/// Grows `n_trees` trees on bootstrap resamples of the table. Every node
/// draws a fresh random subset of `mtry` features and takes the split with
/// the largest Gini impurity decrease, breaking ties towards the lowest
/// feature index and then the lowest threshold. Nodes stop at purity or
/// below `min_node_size` rows. Trees are grown in parallel and assembled in
/// index order, so the result depends only on the seed.
pub fn train_forest_with(
    table: &ReferenceTable,
    options: TrainOptions,
    rng_seed: u64,
) -> Result<Forest> {
    let feature_count = table.feature_names.len();
    if options.n_trees < 1 {
        return Err(invalid("the forest needs at least one tree"));
    }
    if options.mtry < 1 || options.mtry as usize > feature_count {
        return Err(invalid(format!(
            "mtry must lie in 1..={feature_count}, got {}",
            options.mtry
        )));
    }
    if options.min_node_size < 1 {
        return Err(invalid("the minimum node size must be positive"));
    }
    let n_rows = table.rows.len();
    if n_rows < 2 {
        return Err(invalid("training needs at least two rows"));
    }
    let labels: Vec<u32> = table.rows.iter().map(|r| r.label).collect();
    let distinct: std::collections::HashSet<u32> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(invalid("training needs at least two classes present"));
    }
    let columns: Vec<Vec<f64>> = (0..feature_count)
        .map(|f| table.rows.iter().map(|r| r.values[f]).collect())
        .collect();
    let class_count = table.classes.len();
    let grown: Vec<(Tree, Vec<u64>, Vec<f64>)> = (0..options.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng = task_rng(rng_seed, u64::from(tree_index));
            let mut bootstrap: Vec<u32> = (0..n_rows)
                .map(|_| rng.random_range(0..n_rows) as u32)
                .collect();
            let mut mask = vec![0u64; n_rows.div_ceil(64)];
            for &row in &bootstrap {
                mask[row as usize / 64] |= 1 << (row % 64);
            }
            let mut importance = vec![0.0; feature_count];
            let mut grower = TreeGrower {
                columns: &columns,
                labels: &labels,
                class_count,
                options,
                nodes: Vec::new(),
                importance: &mut importance,
            };
            let root = grower.grow(&mut bootstrap, &mut rng);
            (
                Tree {
                    nodes: grower.nodes,
                    root,
                },
                mask,
                importance,
            )
        })
        .collect();
    let mut trees = Vec::with_capacity(grown.len());
    let mut in_bag = Vec::with_capacity(grown.len());
    let mut importances = vec![0.0; feature_count];
    for (tree, mask, importance) in grown {
        trees.push(tree);
        in_bag.push(mask);
        for (total, part) in importances.iter_mut().zip(&importance) {
            *total += part;
        }
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for value in importances.iter_mut() {
            *value /= total;
        }
    }
    Ok(Forest {
        feature_names: table.feature_names.clone(),
        classes: table.classes.clone(),
        trees,
        in_bag,
        importances,
        options,
        rng_seed,
        trained_rows: n_rows as u64,
    })
}

struct TreeGrower<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u32],
    class_count: usize,
    options: TrainOptions,
    nodes: Vec<Node>,
    importance: &'a mut [f64],
}

impl TreeGrower<'_> {
    fn grow<R: Rng + ?Sized>(&mut self, rows: &mut [u32], rng: &mut R) -> u32 {
        let counts = self.class_counts(rows);
        let total = rows.len() as f64;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || rows.len() < self.options.min_node_size as usize {
            return self.push_leaf(&counts);
        }
        let candidates = self.sample_features(rng);
        let parent_gini = gini(&counts, total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(rows.len());
        for &feature in &candidates {
            let column = &self.columns[feature];
            scratch.clear();
            scratch.extend(
                rows.iter()
                    .map(|&r| (column[r as usize], self.labels[r as usize])),
            );
            scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0u64; self.class_count];
            for i in 1..scratch.len() {
                left[scratch[i - 1].1 as usize] += 1;
                let (a, b) = (scratch[i - 1].0, scratch[i].0);
                if a < b {
                    let mid = (a + b) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    let left_total = i as f64;
                    let right_total = total - left_total;
                    let right: Vec<u64> = counts
                        .iter()
                        .zip(&left)
                        .map(|(&all, &l)| all - l)
                        .collect();
                    let decrease = parent_gini
                        - left_total / total * gini(&left, left_total)
                        - right_total / total * gini(&right, right_total);
                    if best.is_none_or(|(d, _, _)| decrease > d) {
                        best = Some((decrease, feature, threshold));
                    }
                }
            }
        }
        match best {
            Some((decrease, feature, threshold)) if decrease > 0.0 => {
                self.importance[feature] += decrease * total;
                let column = &self.columns[feature];
                let mut split = 0usize;
                for i in 0..rows.len() {
                    if column[rows[i] as usize] <= threshold {
                        rows.swap(i, split);
                        split += 1;
                    }
                }
                let (left_rows, right_rows) = rows.split_at_mut(split);
                let left = self.grow(left_rows, rng);
                let right = self.grow(right_rows, rng);
                self.nodes.push(Node {
                    feature: feature as u32,
                    threshold,
                    left,
                    right,
                });
                self.nodes.len() as u32 - 1
            }
            _ => self.push_leaf(&counts),
        }
    }

    fn class_counts(&self, rows: &[u32]) -> Vec<u64> {
        let mut counts = vec![0u64; self.class_count];
        for &row in rows {
            counts[self.labels[row as usize] as usize] += 1;
        }
        counts
    }

    fn push_leaf(&mut self, counts: &[u64]) -> u32 {
        let mut label = 0usize;
        for (class, &count) in counts.iter().enumerate() {
            if count > counts[label] {
                label = class;
            }
        }
        self.nodes.push(Node {
            feature: label as u32,
            threshold: 0.0,
            left: LEAF_CHILD,
            right: LEAF_CHILD,
        });
        self.nodes.len() as u32 - 1
    }

    /// A uniformly random `mtry`-subset of features, ascending so that Gini
    /// ties resolve towards the lowest feature index.
    fn sample_features<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut all: Vec<usize> = (0..self.columns.len()).collect();
        let mtry = self.options.mtry as usize;
        for i in 0..mtry {
            let j = rng.random_range(i..all.len());
            all.swap(i, j);
        }
        all.truncate(mtry);
        all.sort_unstable();
        all
    }
}

fn gini(counts: &[u64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum::<f64>()
}

/// Majority vote over the forest for a full statistic vector. Returns the
/// winning class name and its vote fraction; vote ties resolve towards the
/// lowest class index.
pub fn classify(forest: &Forest, stats: &StatVector) -> Result<(String, f64)> {
    let values: Vec<f64> = forest
        .feature_names
        .iter()
        .map(|name| {
            stats
                .get(name)
                .ok_or_else(|| invalid(format!("the statistic vector lacks feature {name}")))
        })
        .collect::<Result<_>>()?;
    let mut votes = vec![0u64; forest.classes.len()];
    for tree in &forest.trees {
        votes[tree.predict(&values) as usize] += 1;
    }
    let mut winner = 0usize;
    for (class, &count) in votes.iter().enumerate() {
        if count > votes[winner] {
            winner = class;
        }
    }
    Ok((
        forest.classes[winner].clone(),
        votes[winner] as f64 / forest.trees.len() as f64,
    ))
}

/// Out-of-bag misclassification report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OobReport {
    pub class_names: Vec<String>,
    /// Misclassification fraction per class over its evaluated rows.
    pub per_class: Vec<f64>,
    /// Rows of each class that received at least one out-of-bag vote.
    pub evaluated: Vec<u64>,
    /// Rows that were in every bootstrap and could not be evaluated.
    pub skipped: u64,
    /// Misclassification fraction over all evaluated rows.
    pub overall: f64,
}

/// Votes each training row through the trees whose bootstrap excluded it
/// and reports majority-vote error rates per class.
pub fn oob_error(forest: &Forest, table: &ReferenceTable) -> Result<OobReport> {
    if forest.feature_names != table.feature_names {
        return Err(invalid("the forest was trained on different features"));
    }
    if forest.classes != table.classes {
        return Err(invalid("the forest was trained on different classes"));
    }
    if forest.trained_rows != table.rows.len() as u64 {
        return Err(invalid("the forest was trained on a different row count"));
    }
    let class_count = table.classes.len();
    let mut votes = vec![0u64; table.rows.len() * class_count];
    for (tree, mask) in forest.trees.iter().zip(&forest.in_bag) {
        for (row_index, row) in table.rows.iter().enumerate() {
            let in_bag = mask[row_index / 64] >> (row_index % 64) & 1 == 1;
            if !in_bag {
                let label = tree.predict(&row.values) as usize;
                votes[row_index * class_count + label] += 1;
            }
        }
    }
    let mut wrong = vec![0u64; class_count];
    let mut evaluated = vec![0u64; class_count];
    let mut skipped = 0u64;
    for (row_index, row) in table.rows.iter().enumerate() {
        let row_votes = &votes[row_index * class_count..(row_index + 1) * class_count];
        if row_votes.iter().all(|&v| v == 0) {
            skipped += 1;
            continue;
        }
        let mut winner = 0usize;
        for (class, &count) in row_votes.iter().enumerate() {
            if count > row_votes[winner] {
                winner = class;
            }
        }
        evaluated[row.label as usize] += 1;
        if winner != row.label as usize {
            wrong[row.label as usize] += 1;
        }
    }
    let per_class: Vec<f64> = wrong
        .iter()
        .zip(&evaluated)
        .map(|(&w, &e)| if e > 0 { w as f64 / e as f64 } else { 0.0 })
        .collect();
    let total_evaluated: u64 = evaluated.iter().sum();
    let total_wrong: u64 = wrong.iter().sum();
    Ok(OobReport {
        class_names: table.classes.clone(),
        per_class,
        evaluated,
        skipped,
        overall: if total_evaluated > 0 {
            total_wrong as f64 / total_evaluated as f64
        } else {
            0.0
        },
    })
}

/// Importance scores keyed by feature name, descending.
pub fn ranked_importances(forest: &Forest) -> Vec<(String, f64)> {
    let mut pairs: Vec<(String, f64)> = forest
        .feature_names
        .iter()
        .cloned()
        .zip(forest.importances.iter().copied())
        .collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    pairs
}

/// Builds a classification report as JSON-ready data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub label: String,
    pub vote_fraction: f64,
    pub importances: HashMap<String, f64>,
}

pub fn classification_report(forest: &Forest, stats: &StatVector) -> Result<ClassificationReport> {
    let (label, vote_fraction) = classify(forest, stats)?;
    Ok(ClassificationReport {
        label,
        vote_fraction,
        importances: forest
            .feature_names
            .iter()
            .cloned()
            .zip(forest.importances.iter().copied())
            .collect(),
    })
}
