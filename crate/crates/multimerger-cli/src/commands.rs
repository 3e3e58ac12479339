//! Command implementations. Each one turns a validated run description
//! into CSV artifacts plus a `metadata.json` echoing the configuration,
//! the master seed and the toolkit version, so any output directory can
//! be reproduced from its own metadata.
//!
//! Determinism contract: rows are produced from per-index seed streams
//! and reduced in index order, so reruns with the same config and seed
//! are byte-identical regardless of thread count.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use multimerger::abc::{
    default_mtry, oob_error, ranked_importances, simulate_reference_table, train_forest_with,
    TrainOptions,
};
use multimerger::analytics::{kingman_root_share, kingman_root_share_limit, RootShareTable};
use multimerger::cannings::convergence_check;
use multimerger::genealogy::{apply_time_change, Simulator};
use multimerger::mutstats::{drop_mutations_with, StatVector, FEATURE_NAMES};
use multimerger::rng::task_rng;

use crate::config::{usage, AbcSpec, CanningsSpec, PshareSpec, SimulateSpec};

/// Nodes with fewer rows than this become leaves unless configured.
const DEFAULT_MIN_NODE_SIZE: u32 = 2;

/// Offset added to the master seed by the independent-seed rerun flag.
const INDEPENDENT_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed salt separating forest training streams from table simulation.
const FOREST_SEED_SALT: u64 = 0x517c_c1b7_2722_0a95;

#[derive(Serialize)]
struct Metadata<'a, C: Serialize> {
    command: &'a str,
    toolkit_version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    config: &'a C,
}

fn write_metadata<C: Serialize>(
    out: &Path,
    command: &str,
    seed: Option<u64>,
    config: &C,
) -> Result<()> {
    let path = out.join("metadata.json");
    let file = create(&path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(
        &mut writer,
        &Metadata {
            command,
            toolkit_version: env!("CARGO_PKG_VERSION"),
            seed,
            config,
        },
    )
    .with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(create(path)?)))
}

struct RepRow {
    rep: u64,
    height: f64,
    total_length: f64,
    internal_length: f64,
    external_length: f64,
    merge_events: usize,
    stats: Option<StatVector>,
    newick: Option<String>,
}

pub fn run_simulate(spec: &SimulateSpec, out: &Path) -> Result<()> {
    let measure = spec.measure.build()?;
    let change = spec
        .demography
        .as_ref()
        .map(|demography| demography.to_time_change())
        .transpose()?;
    let theta = spec.effective_theta(&measure)?;
    let simulator = Simulator::new(measure, spec.n).map_err(|error| usage(error.to_string()))?;

    let rows = (0..spec.reps)
        .into_par_iter()
        .map(|rep| -> Result<RepRow> {
            let mut rng = task_rng(spec.seed, rep);
            let mut genealogy = simulator.sample(spec.n, &mut rng)?;
            if let Some(change) = &change {
                genealogy = apply_time_change(genealogy, change)?;
            }
            let functionals = genealogy.functionals();
            let stats = match theta {
                Some(theta) => {
                    let sites = drop_mutations_with(&genealogy, theta, &mut rng)?;
                    Some(sites.stat_vector())
                }
                None => None,
            };
            Ok(RepRow {
                rep,
                height: functionals.height,
                total_length: functionals.total_length,
                internal_length: functionals.internal_length,
                external_length: functionals.external_lengths.iter().sum(),
                merge_events: genealogy.events().len(),
                stats,
                newick: spec.newick.then(|| genealogy.to_newick()),
            })
        })
        .collect::<Result<Vec<RepRow>>>()?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let mut genealogies = csv_writer(&out.join("genealogies.csv"))?;
    genealogies.write_record([
        "rep",
        "height",
        "total_length",
        "internal_length",
        "external_length",
        "merge_events",
    ])?;
    for row in &rows {
        genealogies.write_record([
            row.rep.to_string(),
            format!("{}", row.height),
            format!("{}", row.total_length),
            format!("{}", row.internal_length),
            format!("{}", row.external_length),
            row.merge_events.to_string(),
        ])?;
    }
    genealogies.flush()?;

    if theta.is_some() {
        let mut stats = csv_writer(&out.join("stats.csv"))?;
        let mut header = vec!["rep"];
        header.extend(FEATURE_NAMES);
        stats.write_record(&header)?;
        for row in &rows {
            let vector = row.stats.as_ref().expect("stats follow theta");
            let mut record = vec![row.rep.to_string()];
            record.extend(vector.values.iter().map(|value| format!("{value}")));
            stats.write_record(&record)?;
        }
        stats.flush()?;
    }

    if spec.newick {
        let path = out.join("trees.newick");
        let mut writer = BufWriter::new(create(&path)?);
        for row in &rows {
            writeln!(writer, "{}", row.newick.as_ref().expect("newick follows the flag"))?;
        }
    }

    write_metadata(out, "simulate", Some(spec.seed), spec)
}

pub fn run_pshare(spec: &PshareSpec, out: &Path) -> Result<()> {
    let measure = spec.measure.build()?;
    if spec.n.is_empty() || spec.m.is_empty() {
        return Err(usage("pshare needs at least one n and one m"));
    }
    let n_max = *spec.n.iter().max().unwrap();
    let m_max = *spec.m.iter().max().unwrap();
    let table =
        RootShareTable::new(&measure, n_max, m_max).map_err(|error| usage(error.to_string()))?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut grid = csv_writer(&out.join("pshare.csv"))?;
    grid.write_record(["n", "m", "p", "kingman", "kingman_limit"])?;
    for &n in &spec.n {
        for &m in &spec.m {
            if m > n {
                continue;
            }
            let p = table.prob(n, m).map_err(|error| usage(error.to_string()))?;
            let kingman = kingman_root_share(n, m).map_err(|error| usage(error.to_string()))?;
            let limit =
                kingman_root_share_limit(m).map_err(|error| usage(error.to_string()))?;
            grid.write_record([
                n.to_string(),
                m.to_string(),
                format!("{p}"),
                format!("{kingman}"),
                format!("{limit}"),
            ])?;
        }
    }
    grid.flush()?;

    write_metadata(out, "pshare", None, spec)
}

pub fn run_abc(spec: &AbcSpec, out: &Path, independent_seed: bool) -> Result<()> {
    if spec.classes.len() < 2 {
        return Err(usage(format!(
            "abc needs at least two model classes, got {}",
            spec.classes.len()
        )));
    }
    let classes = spec
        .classes
        .iter()
        .map(|class| class.to_model_class())
        .collect::<Result<Vec<_>>>()?;
    let seed = if independent_seed {
        spec.seed.wrapping_add(INDEPENDENT_SEED_OFFSET)
    } else {
        spec.seed
    };

    let full_table = simulate_reference_table(&classes, spec.rows_per_class, spec.sample_size, seed)?;
    let table = match &spec.features {
        Some(features) => {
            let names: Vec<&str> = features.iter().map(String::as_str).collect();
            full_table
                .restricted(&names)
                .map_err(|error| usage(error.to_string()))?
        }
        None => full_table,
    };

    let options = TrainOptions {
        n_trees: spec.n_trees,
        mtry: spec
            .mtry
            .unwrap_or_else(|| default_mtry(table.feature_names().len())),
        min_node_size: spec.min_node_size.unwrap_or(DEFAULT_MIN_NODE_SIZE),
    };
    let forest = train_forest_with(&table, options, seed ^ FOREST_SEED_SALT)?;
    let oob = oob_error(&forest, &table)?;
    let importances = ranked_importances(&forest);

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let table_path = out.join("table.csv");
    table
        .write_csv(BufWriter::new(create(&table_path)?))
        .with_context(|| format!("cannot write {}", table_path.display()))?;

    let forest_path = out.join("forest.json");
    serde_json::to_writer(BufWriter::new(create(&forest_path)?), &forest)
        .with_context(|| format!("cannot write {}", forest_path.display()))?;

    let oob_path = out.join("oob.json");
    let mut oob_writer = BufWriter::new(create(&oob_path)?);
    serde_json::to_writer_pretty(&mut oob_writer, &oob)
        .with_context(|| format!("cannot write {}", oob_path.display()))?;
    oob_writer.write_all(b"\n")?;

    let mut ranking = csv_writer(&out.join("importances.csv"))?;
    ranking.write_record(["feature", "importance"])?;
    for (feature, importance) in &importances {
        ranking.write_record([feature.clone(), format!("{importance}")])?;
    }
    ranking.flush()?;

    write_metadata(out, "abc", Some(seed), spec)
}

pub fn run_cannings_validate(spec: &CanningsSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    let measure = spec.measure.build()?;
    if spec.populations.is_empty() {
        return Err(usage("cannings-validate needs at least one population size"));
    }
    let rows = convergence_check(
        &measure,
        spec.variant.to_variant(),
        spec.n,
        &spec.populations,
        spec.reps,
        spec.seed,
    )?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut report = csv_writer(&out.join("convergence.csv"))?;
    report.write_record([
        "population",
        "reps",
        "ks_absorption",
        "p_absorption",
        "ks_length",
        "p_length",
    ])?;
    for row in &rows {
        report.write_record([
            row.population.to_string(),
            row.reps.to_string(),
            format!("{}", row.ks_absorption),
            format!("{}", row.p_absorption),
            format!("{}", row.ks_length),
            format!("{}", row.p_length),
        ])?;
    }
    report.flush()?;

    write_metadata(out, "cannings-validate", Some(spec.seed), spec)
}
