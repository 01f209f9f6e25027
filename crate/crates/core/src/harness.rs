//! Batch experiments: exhaustive decision-path sweeps, replicated runs,
//! summary statistics, and the hypervolume indicator against clairvoyant
//! reference fronts. Everything here works in `f64`.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decisions::{DecisionPath, PathDecisionMaker};
use crate::dynamics::{run_demoa, EraTrace};
use crate::emoa::EmoaConfig;
use crate::error::{param, Error, Result};
use crate::instance::Instance;
use crate::metrics::{filter_by_bound, hv_indicator, nondominated_union, to_aposteriori};
use crate::model::ObjectiveVector;
use crate::rng::{derive_seed, hash_str};

/// An instance together with the name used in result files.
#[derive(Clone, Debug)]
pub struct NamedInstance {
    pub name: String,
    pub instance: Instance<f64>,
}

impl NamedInstance {
    /// Loads an instance file and names it after the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let instance = crate::instance::read_instance(path)?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        Ok(Self { name, instance })
    }
}

/// The four decision paths highlighted in reports: constant low, constant
/// high, and the two paths that switch between them after the first half.
pub fn selected_paths(n_eras: usize, low: f64, high: f64) -> Vec<DecisionPath<f64>> {
    let split = n_eras.div_ceil(2);
    let switch = |a: f64, b: f64| (0..n_eras).map(|j| if j < split { a } else { b }).collect::<Vec<_>>();
    [vec![low; n_eras], vec![high; n_eras], switch(low, high), switch(high, low)]
        .into_iter()
        .map(|v| DecisionPath::new(v).expect("valid d values"))
        .collect()
}

/// Seed of one run; independent of the order in which runs execute.
pub fn run_seed(master: u64, instance: &str, path: &DecisionPath<f64>, replicate: usize) -> u64 {
    derive_seed(master, &[hash_str(instance), hash_str(&path.to_literal()), replicate as u64])
}

/// One final-era front member of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance: String,
    pub topology: String,
    pub path: String,
    pub replicate: usize,
    pub era: usize,
    pub solution_id: usize,
    pub tour_length: f64,
    pub unvisited: usize,
    pub unvisited_apost: usize,
    pub selected: u8,
    pub upper_bound: usize,
}

impl ResultRow {
    fn key(&self) -> RunKey {
        (self.instance.clone(), self.path.clone(), self.replicate)
    }

    /// The decision applied in the last era.
    pub fn last_decision(&self) -> Result<f64> {
        let path: DecisionPath<f64> = self.path.parse()?;
        path.last().ok_or_else(|| param("empty decision path"))
    }
}

type RunKey = (String, String, usize);

/// Final-era rows of one finished run.
pub fn final_rows(name: &str, instance: &Instance<f64>, path: &DecisionPath<f64>, replicate: usize, trace: &EraTrace<f64>) -> Vec<ResultRow> {
    let Some(last) = trace.final_record() else { return Vec::new() };
    last.front
        .members()
        .iter()
        .enumerate()
        .map(|(k, (_, obj))| ResultRow {
            instance: name.to_string(),
            topology: instance.topology().to_string(),
            path: path.to_literal(),
            replicate,
            era: last.era,
            solution_id: k + 1,
            tour_length: obj.tour_length,
            unvisited: obj.unvisited,
            unvisited_apost: to_aposteriori(*obj, last.appeared, trace.total_dynamic).unvisited,
            selected: u8::from(k + 1 == last.chosen_rank),
            upper_bound: last.upper_bound,
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub paths: Vec<DecisionPath<f64>>,
    pub replicates: usize,
    pub emoa: EmoaConfig<f64>,
    pub master_seed: u64,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Era length; `None` uses each instance's own value.
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub completed: usize,
    pub skipped: usize,
}

/// Runs every (instance, path, replicate) tuple and appends the final-era
/// fronts to the CSV at `out`. Tuples already present in `out` are skipped,
/// so an interrupted sweep resumes where it stopped. Rows appear in tuple
/// order regardless of parallelism, so a resumed sweep produces the same
/// file as an uninterrupted one.
pub fn sweep(instances: &[NamedInstance], cfg: &SweepConfig, out: &Path) -> Result<SweepSummary> {
    sweep_with_progress(instances, cfg, out, &mut |_, _| {})
}

/// [`sweep`] reporting `(finished, pending)` after every run.
pub fn sweep_with_progress(
    instances: &[NamedInstance],
    cfg: &SweepConfig,
    out: &Path,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<SweepSummary> {
    if cfg.replicates == 0 || cfg.paths.is_empty() {
        return Err(param("a sweep needs at least one path and one replicate"));
    }
    if let Some(bad) = cfg.paths.windows(2).find(|w| w[0].len() != w[1].len()) {
        return Err(param(format!("decision paths differ in length: {} vs {}", bad[0], bad[1])));
    }
    let mut names = HashSet::new();
    if let Some(dup) = instances.iter().find(|i| !names.insert(&i.name)) {
        return Err(param(format!("instance name {} used twice", dup.name)));
    }
    cfg.emoa.validate()?;

    let done = prepare_output(out)?;
    let tuples: Vec<(usize, usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..cfg.paths.len()).flat_map(move |p| (0..cfg.replicates).map(move |r| (i, p, r))))
        .filter(|&(i, p, r)| !done.contains(&(instances[i].name.clone(), cfg.paths[p].to_literal(), r)))
        .collect();
    let skipped = instances.len() * cfg.paths.len() * cfg.replicates - tuples.len();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cfg.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder.build().map_err(|e| param(format!("thread pool: {e}")))?;

    let mut file = OpenOptions::new().append(true).open(out)?;
    let (tx, rx) = mpsc::channel::<(usize, Result<Vec<u8>>)>();
    let pending = tuples.len();
    std::thread::scope(|scope| -> Result<()> {
        let tuples = &tuples;
        scope.spawn(move || {
            pool.install(|| {
                tuples.par_iter().enumerate().for_each_with(tx, |tx, (k, &(i, p, r))| {
                    let _ = tx.send((k, run_tuple(&instances[i], &cfg.paths[p], r, cfg)));
                });
            })
        });
        // Single writer: buffer out-of-order results and flush in tuple order.
        let mut buffered: BTreeMap<usize, Vec<u8>> = BTreeMap::new();
        let mut next = 0;
        for (k, result) in rx {
            buffered.insert(k, result?);
            while let Some(bytes) = buffered.remove(&next) {
                file.write_all(&bytes)?;
                file.flush()?;
                next += 1;
                progress(next, pending);
            }
        }
        Ok(())
    })?;
    Ok(SweepSummary { completed: pending, skipped })
}

fn run_tuple(named: &NamedInstance, path: &DecisionPath<f64>, replicate: usize, cfg: &SweepConfig) -> Result<Vec<u8>> {
    let emoa = EmoaConfig { seed: run_seed(cfg.master_seed, &named.name, path, replicate), ..cfg.emoa.clone() };
    let delta = cfg.delta.unwrap_or_else(|| named.instance.delta());
    let mut dm = PathDecisionMaker::new(path.clone());
    let trace = run_demoa(&named.instance, path.len(), delta, &mut dm, &emoa).map_err(|partial| partial.error)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in final_rows(&named.name, &named.instance, path, replicate, &trace) {
        writer.serialize(row)?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Creates `out` with a header, or cleans up an existing file for resuming:
/// a torn trailing line and the rows of the last run (which may be
/// incomplete) are dropped. Returns the runs that are complete.
fn prepare_output(out: &Path) -> Result<HashSet<RunKey>> {
    if !out.exists() || std::fs::metadata(out)?.len() == 0 {
        let mut writer = csv::Writer::from_path(out)?;
        writer.write_record(RESULT_COLUMNS)?;
        writer.flush()?;
        return Ok(HashSet::new());
    }
    let mut keep_len = 0u64;
    let mut runs: Vec<(RunKey, u64)> = Vec::new();
    {
        let mut reader = BufReader::new(File::open(out)?);
        let mut line = String::new();
        let mut offset = 0u64;
        let mut header = true;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)? as u64;
            if read == 0 || !line.ends_with('\n') {
                break;
            }
            if header {
                if line.trim_end() != RESULT_COLUMNS.join(",") {
                    return Err(param(format!("{} is not a results file", out.display())));
                }
                header = false;
            } else {
                let row = parse_row(&line)?;
                if runs.last().is_none_or(|(k, _)| *k != row.key()) {
                    runs.push((row.key(), offset));
                }
            }
            offset += read;
            keep_len = offset;
        }
    }
    if let Some((_, start)) = runs.pop() {
        keep_len = start;
    }
    let file = OpenOptions::new().write(true).open(out)?;
    file.set_len(keep_len)?;
    (&file).seek(SeekFrom::End(0))?;
    Ok(runs.into_iter().map(|(k, _)| k).collect())
}

const RESULT_COLUMNS: [&str; 11] = [
    "instance",
    "topology",
    "path",
    "replicate",
    "era",
    "solution_id",
    "tour_length",
    "unvisited",
    "unvisited_apost",
    "selected",
    "upper_bound",
];

fn parse_row(line: &str) -> Result<ResultRow> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(line.as_bytes());
    let record = reader.deserialize().next().ok_or_else(|| param("empty results line"))?;
    Ok(record?)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Number of distinct runs in a result set.
pub fn count_runs(rows: &[ResultRow]) -> usize {
    rows.iter().map(ResultRow::key).collect::<HashSet<_>>().len()
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub topology: String,
    pub last_decision: f64,
    pub runs: usize,
    pub tour_length_mean: f64,
    pub tour_length_std: f64,
    pub unvisited_mean: f64,
    pub unvisited_std: f64,
}

/// Mean and standard deviation of the chosen final solutions, grouped by
/// topology and last-era decision.
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(String, u64), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.selected == 1) {
        let d = row.last_decision()?;
        let entry = groups.entry((row.topology.clone(), d.to_bits())).or_default();
        entry.0.push(row.tour_length);
        entry.1.push(row.unvisited as f64);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((topology, d), (tours, unvisited))| {
            let (tour_length_mean, tour_length_std) = mean_std(&tours);
            let (unvisited_mean, unvisited_std) = mean_std(&unvisited);
            SummaryRow {
                topology,
                last_decision: f64::from_bits(d),
                runs: tours.len(),
                tour_length_mean,
                tour_length_std,
                unvisited_mean,
                unvisited_std,
            }
        })
        .collect();
    out.sort_by(|a, b| a.topology.cmp(&b.topology).then(a.last_decision.total_cmp(&b.last_decision)));
    Ok(out)
}

/// Clairvoyant fronts keyed by instance name, stored as
/// `instance,tour_length,unvisited` rows.
pub type ClairvoyantFronts = BTreeMap<String, Vec<ObjectiveVector<f64>>>;

#[derive(Serialize, Deserialize)]
struct FrontRow {
    instance: String,
    tour_length: f64,
    unvisited: usize,
}

pub fn write_clairvoyant(fronts: &ClairvoyantFronts, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for (instance, front) in fronts {
        for p in front {
            writer.serialize(FrontRow { instance: instance.clone(), tour_length: p.tour_length, unvisited: p.unvisited })?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_clairvoyant(path: &Path) -> Result<ClairvoyantFronts> {
    let mut fronts = ClairvoyantFronts::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let row: FrontRow = row?;
        fronts.entry(row.instance).or_default().push(ObjectiveVector::new(row.tour_length, row.unvisited));
    }
    Ok(fronts)
}

/// Label used in indicator output for the clairvoyant front itself.
pub const CLAIRVOYANT_LABEL: &str = "clairvoyant";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRow {
    pub instance: String,
    pub topology: String,
    pub path: String,
    pub replicate: usize,
    pub bound: usize,
    pub i_hv: f64,
}

/// Hypervolume indicator of every run's final front in the a-posteriori
/// space. The reference set of an instance is the non-dominated union of
/// its clairvoyant front, restricted to the largest last-era upper bound
/// seen across its runs, and all its final fronts. One extra row per
/// instance scores the restricted clairvoyant front itself.
pub fn evaluate(rows: &[ResultRow], clairvoyant: &ClairvoyantFronts) -> Result<Vec<IndicatorRow>> {
    let mut by_instance: BTreeMap<&str, BTreeMap<(String, usize), Vec<&ResultRow>>> = BTreeMap::new();
    for row in rows {
        by_instance.entry(&row.instance).or_default().entry((row.path.clone(), row.replicate)).or_default().push(row);
    }
    let mut out = Vec::new();
    for (name, runs) in by_instance {
        let front_of = |rs: &[&ResultRow]| -> Vec<ObjectiveVector<f64>> {
            rs.iter().map(|r| ObjectiveVector::new(r.tour_length, r.unvisited_apost)).collect()
        };
        let fronts: Vec<Vec<ObjectiveVector<f64>>> = runs.values().map(|rs| front_of(rs)).collect();
        let bound = runs.values().flatten().map(|r| r.upper_bound).max().unwrap_or(0);
        let reference_front = clairvoyant.get(name).ok_or_else(|| param(format!("no clairvoyant front for instance {name}")))?;
        let restricted = filter_by_bound(reference_front, bound);
        let mut sets: Vec<&[ObjectiveVector<f64>]> = fronts.iter().map(Vec::as_slice).collect();
        sets.push(&restricted);
        let reference = nondominated_union(&sets);
        let topology = runs.values().next().and_then(|rs| rs.first()).map(|r| r.topology.clone()).unwrap_or_default();
        for (((path, replicate), _), front) in runs.iter().zip(&fronts) {
            out.push(IndicatorRow {
                instance: name.to_string(),
                topology: topology.clone(),
                path: path.clone(),
                replicate: *replicate,
                bound,
                i_hv: hv_indicator(front, &reference),
            });
        }
        if !restricted.is_empty() {
            out.push(IndicatorRow {
                instance: name.to_string(),
                topology,
                path: CLAIRVOYANT_LABEL.to_string(),
                replicate: 0,
                bound,
                i_hv: hv_indicator(&restricted, &reference),
            });
        }
    }
    Ok(out)
}

pub fn write_csv<S: Serialize>(rows: &[S], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
