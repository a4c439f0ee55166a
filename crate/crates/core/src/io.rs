//! File formats. Structured files are JSON envelopes
//! `{"format_version": 1, "kind": ..., "manifest": ..., "data": ...}`;
//! demand history and per-day reports are CSV.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::colgen::RoutePool;
use crate::error::{Error, Result};
use crate::eval::{DayRecord, EvaluationReport};
use crate::instance::Instance;
use crate::lshaped::{Checkpoint, IterationRecord, LShapedResult, LShapedStatus, PhaseTimings};
use crate::model::{DemandRealization, FirstStageSolution, InstanceConfig, Network, NodeId};
use crate::scenario::DemandHistory;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format_version: u32,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<&'a str>,
    data: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    data: T,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Serializes `value` in an envelope of the given kind.
pub fn to_json<T: Serialize>(kind: &str, value: &T, manifest: Option<&str>) -> Result<String> {
    let env = EnvelopeOut {
        format_version: FORMAT_VERSION,
        kind,
        manifest,
        data: value,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| Error::input(format!("cannot encode {kind}: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, value: &T, manifest: Option<&str>) -> Result<()> {
    write_atomic(path, to_json(kind, value, manifest)?.as_bytes())
}

/// Parses an envelope of the given kind from `text`; `path` is used in
/// diagnostics only.
pub fn from_json<T: DeserializeOwned>(path: &Path, kind: &str, text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::parse(path, e))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            path: path.to_path_buf(),
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if header.kind != kind {
        return Err(Error::parse(
            path,
            format!("expected a `{kind}` file, found `{}`", header.kind),
        ));
    }
    let env: EnvelopeIn<T> = serde_json::from_str(text).map_err(|e| Error::parse(path, e))?;
    Ok(env.data)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    from_json(path, kind, &read_text(path)?)
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Deserialize, Serialize)]
struct HistoryRow {
    date: String,
    node: String,
    units: f64,
}

/// Reads `date,node,units` rows (ISO dates). Zero rows are allowed and
/// dropped.
pub fn read_history(path: &Path) -> Result<DemandHistory> {
    let text = read_text(path)?;
    parse_history(path, &text)
}

pub fn parse_history(path: &Path, text: &str) -> Result<DemandHistory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let expected = ["date", "node", "units"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(Error::parse(path, "line 1: header must be `date,node,units`"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: HistoryRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d")
            .map_err(|e| Error::parse(path, format!("line {line}: date `{}`: {e}", row.date)))?;
        if !(row.units >= 0.0) || !row.units.is_finite() {
            return Err(Error::parse(path, format!("line {line}: units must be a nonnegative number")));
        }
        rows.push((date, NodeId::new(row.node), row.units));
    }
    DemandHistory::from_rows(rows)
}

pub fn write_history(path: &Path, history: &DemandHistory) -> Result<()> {
    // `serialize` writes the header row itself, so it is written by hand only
    // for an empty history.
    let mut w = csv::Writer::from_writer(Vec::new());
    if history.days.iter().all(|d| d.orders.is_empty()) {
        w.write_record(["date", "node", "units"]).map_err(|e| Error::io(path, e.into()))?;
    }
    for d in &history.days {
        for (n, u) in &d.orders {
            w.serialize(HistoryRow {
                date: d.date.format("%Y-%m-%d").to_string(),
                node: n.to_string(),
                units: *u,
            })
            .map_err(|e| Error::io(path, e.into()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Days of a history as realizations named by date.
pub fn history_days(history: &DemandHistory) -> Vec<DemandRealization> {
    history
        .days
        .iter()
        .map(|d| DemandRealization::new(d.date.format("%Y-%m-%d").to_string(), d.orders.clone()))
        .collect()
}

/// A batch of simulated demand days.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub month: Option<u32>,
    pub days: Vec<DemandRealization>,
}

/// Demand days from a history CSV (by extension) or a sample file.
pub fn read_days(path: &Path) -> Result<Vec<DemandRealization>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok(history_days(&read_history(path)?))
    } else {
        let text = read_text(path)?;
        let header: Header = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        match header.kind.as_str() {
            "scenarios" => Ok(from_json::<crate::scenario::ScenarioSet>(path, "scenarios", &text)?.scenarios),
            "day" => Ok(vec![from_json(path, "day", &text)?]),
            _ => Ok(from_json::<Sample>(path, "sample", &text)?.days),
        }
    }
}

/// A network together with the instance configuration to solve on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub network: Network,
    pub config: InstanceConfig,
}

impl ProblemFile {
    pub fn read(path: &Path) -> Result<Self> {
        read_json(path, "problem")
    }

    pub fn instance(&self) -> Result<Instance> {
        Instance::new(&self.network, self.config.clone())
    }
}

/// A route pool with routes as node-id sequences, independent of node
/// numbering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub realization_id: String,
    pub routes: Vec<Vec<NodeId>>,
}

impl PoolSnapshot {
    pub fn of(inst: &Instance, pool: &RoutePool) -> Self {
        PoolSnapshot {
            realization_id: pool.realization_id.clone(),
            routes: pool
                .iter()
                .map(|r| r.visits.iter().map(|&v| inst.graph.id(v).clone()).collect())
                .collect(),
        }
    }

    /// Rebuilds the pool, with loads and times computed for `demand`.
    pub fn restore(&self, inst: &Instance, demand: &DemandRealization) -> Result<RoutePool> {
        let dem = inst.resolve(demand)?;
        let mut pool = RoutePool::new(self.realization_id.clone());
        for ids in &self.routes {
            let visits = ids.iter().map(|id| inst.graph.require(id)).collect::<Result<Vec<_>>>()?;
            let depot = *visits.first().ok_or_else(|| Error::input("empty route in pool"))?;
            inst.require_depot(inst.graph.id(depot))?;
            pool.insert(inst.make_route(depot, visits, &dem)?);
        }
        Ok(pool)
    }
}

/// The output of a solve: the first-stage decision with enough context to
/// evaluate it later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    /// Problem file as given to the solver.
    #[serde(default)]
    pub problem: Option<PathBuf>,
    /// Content hash of the network (see [`crate::graph::network_hash`]).
    pub network_hash: String,
    pub config: InstanceConfig,
    pub solution: FirstStageSolution,
    #[serde(with = "crate::serde_util::inf_as_null")]
    pub objective: f64,
    pub lower_bound: f64,
    #[serde(with = "crate::serde_util::inf_as_null")]
    pub gap: f64,
    pub status: LShapedStatus,
    pub iterations: usize,
    pub fixed_cost: f64,
    pub scenarios: Vec<DemandRealization>,
    #[serde(with = "crate::serde_util::vec_inf_as_null")]
    pub scenario_values: Vec<f64>,
    pub timings: PhaseTimings,
    pub trace: Vec<IterationRecord>,
    pub pools: Vec<PoolSnapshot>,
}

impl SolutionFile {
    pub fn from_result(
        inst: &Instance,
        problem: Option<PathBuf>,
        network_hash: String,
        scenarios: &[DemandRealization],
        res: &LShapedResult,
    ) -> Self {
        SolutionFile {
            problem,
            network_hash,
            config: inst.config.clone(),
            solution: res.solution.clone(),
            objective: res.objective(),
            lower_bound: res.state.lower_bound,
            gap: res.gap(),
            status: res.status,
            iterations: res.state.iteration,
            fixed_cost: crate::model::first_stage_cost(&res.solution, &inst.config),
            scenarios: scenarios.to_vec(),
            scenario_values: res.state.incumbent_values.clone(),
            timings: res.timings,
            trace: res.trace.clone(),
            pools: res.pools.iter().map(|p| PoolSnapshot::of(inst, p)).collect(),
        }
    }

    /// Scenario pools, for recycling into evaluation days.
    pub fn seed_pools(&self, inst: &Instance) -> Result<Vec<RoutePool>> {
        self.pools
            .iter()
            .map(|snap| {
                let empty = DemandRealization::new(snap.realization_id.clone(), BTreeMap::new());
                let demand = self
                    .scenarios
                    .iter()
                    .find(|s| s.id == snap.realization_id)
                    .unwrap_or(&empty);
                snap.restore(inst, demand)
            })
            .collect()
    }
}

/// A checkpoint tied to the network it was computed on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub network_hash: String,
    pub checkpoint: Checkpoint,
}

pub fn read_checkpoint(path: &Path, network_hash: &str) -> Result<Checkpoint> {
    let f: CheckpointFile = read_json(path, "checkpoint")?;
    if f.network_hash != network_hash {
        return Err(Error::input(format!(
            "{} was written for a different network",
            path.display()
        )));
    }
    Ok(f.checkpoint)
}

#[derive(Serialize)]
struct DayRow<'a> {
    id: &'a str,
    value: f64,
    routing_cost: f64,
    active_clients: usize,
    vehicles_used: usize,
    unserved_clients: usize,
    total_units: f64,
    served_units: f64,
    distance: f64,
    solve_time: f64,
    exact: bool,
}

/// Per-day records as CSV.
pub fn days_csv(days: &[DayRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for d in days {
        w.serialize(DayRow {
            id: &d.id,
            value: d.value,
            routing_cost: d.routing_cost,
            active_clients: d.active_clients,
            vehicles_used: d.vehicles_used,
            unserved_clients: d.unserved_clients,
            total_units: d.total_units,
            served_units: d.served_units,
            distance: d.distance,
            solve_time: d.solve_time,
            exact: d.exact,
        })
        .map_err(|e| Error::input(format!("cannot encode day `{}`: {e}", d.id)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `<stem>.json` with the full report and `<stem>.csv` with the day
/// table.
pub fn write_report(path: &Path, report: &EvaluationReport, manifest: Option<&str>) -> Result<()> {
    write_json(&path.with_extension("json"), "report", report, manifest)?;
    write_atomic(&path.with_extension("csv"), days_csv(&report.days)?.as_bytes())
}

/// Provenance of one command-line run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub tool_version: String,
    #[serde(default)]
    pub config_hash: Option<String>,
    /// Input file to SHA-256.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub threads: usize,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub wall_seconds: f64,
}
