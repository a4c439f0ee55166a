use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::{Datelike, Days, NaiveDate};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use fleetroute::eval::{self, EvalMode, EvalOptions, EvaluationReport};
use fleetroute::graph::network_hash;
use fleetroute::io::{self, CheckpointFile, ProblemFile, Sample, SolutionFile};
use fleetroute::lshaped::{self, LShapedOptions, LShapedStatus};
use fleetroute::model::{DemandRealization, NodeId};
use fleetroute::scenario::{self, Band, DemandHistory, Districts, HistoryDay, OrderSizeLaw};
use fleetroute::synthetic::{self, SyntheticSpec};
use fleetroute::Instance;

use crate::manifest::{manifest_path, Recorder};
use crate::{Cli, Command, Global};

pub enum Outcome {
    Done,
    /// A budget ran out; the best result so far was still written.
    Partial(String),
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Generate(a) => generate(g, a),
        Command::Fit(a) => fit(g, a),
        Command::Simulate(a) => simulate(g, a),
        Command::SelectScenarios(a) => select(g, a),
        Command::Solve(a) => solve(g, a),
        Command::Evaluate(a) => evaluate(g, a),
        Command::RouteDay(a) => route_day(g, a),
        Command::Compare(a) => compare(g, a),
    }
}

fn finish(g: &Global, rec: Recorder, output: &Path) -> Result<String> {
    let path = manifest_path(g.manifest.as_deref(), output);
    let reference = Recorder::reference(&path);
    rec.finish(&path)?;
    Ok(reference)
}

/// Writes a JSON output whose envelope points at the manifest, then the
/// manifest itself.
fn write_with_manifest<T: Serialize>(
    g: &Global,
    mut rec: Recorder,
    output: &Path,
    kind: &str,
    value: &T,
) -> Result<()> {
    let reference = Recorder::reference(&manifest_path(g.manifest.as_deref(), output));
    io::write_json(output, kind, value, Some(&reference))?;
    rec.output(output);
    finish(g, rec, output)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// The bundled six-client, two-depot instance.
    #[arg(long)]
    pub toy: bool,
    #[arg(long, default_value_t = 20)]
    pub clients: usize,
    #[arg(long, default_value_t = 3)]
    pub depots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of clients with a delivery window.
    #[arg(long)]
    pub window_share: Option<f64>,
    /// Also write a demand history CSV here.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Days of history to write.
    #[arg(long, default_value_t = 365)]
    pub history_days: u64,
    /// Mean number of active clients per history day.
    #[arg(long, default_value_t = 6.0)]
    pub active: f64,
    /// Mean order size in the history.
    #[arg(long, default_value_t = 5.0)]
    pub order_size: f64,
    /// First date of the history.
    #[arg(long, default_value = "2023-01-01")]
    pub start: NaiveDate,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn generate(g: &Global, a: &GenerateArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("generate");
    rec.manifest.seed = Some(a.seed);
    let mut spec = SyntheticSpec {
        clients: a.clients,
        depots: a.depots,
        seed: a.seed,
        ..Default::default()
    };
    if let Some(w) = a.window_share {
        if !(0.0..=1.0).contains(&w) {
            bail!("--window-share must lie in [0, 1]");
        }
        spec.window_share = w;
    }
    let (network, config) = if a.toy {
        synthetic::toy()
    } else {
        if a.clients == 0 || a.depots == 0 {
            bail!("--clients and --depots must be positive");
        }
        synthetic::generate(&spec)
    };
    let problem = ProblemFile { network, config };
    problem.instance().context("generated instance is invalid")?;
    rec.mark("generate");
    if let Some(h) = &a.history {
        let history = synthetic_history(&spec, a)?;
        io::write_history(h, &history)?;
        rec.output(h);
        rec.mark("history");
    }
    write_with_manifest(g, rec, &a.output, "problem", &problem)?;
    Ok(Outcome::Done)
}

fn synthetic_history(spec: &SyntheticSpec, a: &GenerateArgs) -> Result<DemandHistory> {
    let spec = if a.toy {
        SyntheticSpec {
            clients: 6,
            ..spec.clone()
        }
    } else {
        spec.clone()
    };
    let model = synthetic::demand_model(&spec, a.active, a.order_size);
    let mut days = Vec::new();
    for d in 0..a.history_days {
        let date = a.start + Days::new(d);
        let day = scenario::simulate(&model, 1, date.month(), a.seed.wrapping_add(d))?.remove(0);
        days.push(HistoryDay {
            date,
            orders: day.orders,
        });
    }
    Ok(DemandHistory { days })
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Law {
    /// Poisson conditioned on a positive draw.
    Ztp,
    Poisson,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// CSV with `date,node,units` rows.
    pub history: PathBuf,
    #[arg(long, value_enum, default_value = "ztp")]
    pub law: Law,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn fit(g: &Global, a: &FitArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("fit");
    rec.input(&a.history)?;
    let history = io::read_history(&a.history)?;
    rec.mark("read");
    let law = match a.law {
        Law::Ztp => OrderSizeLaw::ZeroTruncatedPoisson,
        Law::Poisson => OrderSizeLaw::Poisson,
    };
    let model = scenario::fit(&history, law)?;
    rec.mark("training");
    log::info!(
        "{} days, {} clients, order size mean {:.3}, active count lognormal({:.4}, {:.4})",
        history.days.len(),
        model.activity.len(),
        model.order_size_mean,
        model.active_count.mu,
        model.active_count.sigma
    );
    write_with_manifest(g, rec, &a.output, "model", &model)?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub days: usize,
    #[arg(long)]
    pub seed: u64,
    /// Calendar month (1-12) whose activity probabilities are used.
    #[arg(long, default_value_t = 1)]
    pub month: u32,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn simulate(g: &Global, a: &SimulateArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("simulate");
    rec.manifest.seed = Some(a.seed);
    rec.input(&a.model)?;
    let model = io::read_json(&a.model, "model")?;
    rec.mark("read");
    let days = scenario::simulate(&model, a.days, a.month, a.seed)?;
    rec.mark("simulate");
    let sample = Sample {
        seed: Some(a.seed),
        month: Some(a.month),
        days,
    };
    write_with_manifest(g, rec, &a.output, "sample", &sample)?;
    Ok(Outcome::Done)
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Method {
    Argmax,
    Mip,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Weights {
    BandWidth,
    Uniform,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    pub sample: PathBuf,
    /// Percentile bands of aggregate demand, e.g. `90-95,95-99,99-100`.
    #[arg(long, value_delimiter = ',', default_value = "90-95,95-99,99-100")]
    pub bands: Vec<String>,
    /// Number of districts.
    #[arg(long, default_value_t = 4)]
    pub districts: usize,
    /// Problem file whose node coordinates define the districts. Without
    /// it, clients are split into districts by id order.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: Method,
    #[arg(long, value_enum, default_value = "band-width")]
    pub weights: Weights,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn select(g: &Global, a: &SelectArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("select-scenarios");
    rec.input(&a.sample)?;
    let text = std::fs::read_to_string(&a.sample).with_context(|| format!("cannot read {}", a.sample.display()))?;
    let sample: Sample = io::from_json(&a.sample, "sample", &text)?;
    rec.manifest.seed = sample.seed;
    let bands = a.bands.iter().map(|b| Band::parse(b)).collect::<fleetroute::Result<Vec<_>>>()?;
    if a.districts == 0 {
        bail!("--districts must be positive");
    }
    let districts = match &a.problem {
        Some(p) => {
            rec.input(p)?;
            let problem = ProblemFile::read(p)?;
            let clients: std::collections::BTreeSet<&NodeId> = sample.days.iter().flat_map(|d| d.orders.keys()).collect();
            let nodes: Vec<_> = problem.network.nodes.into_iter().filter(|n| clients.contains(&n.id)).collect();
            Districts::spatial(&nodes, a.districts)?
        }
        None => {
            let ids: std::collections::BTreeSet<&NodeId> = sample.days.iter().flat_map(|d| d.orders.keys()).collect();
            let per = ids.len().div_ceil(a.districts).max(1);
            let assignment: BTreeMap<NodeId, String> = ids
                .into_iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), format!("d{:03}", i / per)))
                .collect();
            Districts::from_assignment(&assignment)
        }
    };
    rec.mark("read");
    let method = match a.method {
        Method::Argmax => scenario::SelectionMethod::ArgmaxMin,
        Method::Mip => scenario::SelectionMethod::Mip,
        Method::Both => scenario::SelectionMethod::Both,
    };
    let rule = match a.weights {
        Weights::BandWidth => scenario::ProbabilityRule::BandWidth,
        Weights::Uniform => scenario::ProbabilityRule::Uniform,
    };
    let mut set = scenario::select_scenarios(&sample.days, &bands, &districts, method, rule)?;
    set.seed = sample.seed;
    rec.mark("selection");
    for b in &set.bands {
        log::info!(
            "band {}-{}: {} candidates, picked {} (aggregate {:.1}, weakest district {:.1})",
            b.band.lower,
            b.band.upper,
            b.pool_size,
            b.selected,
            b.aggregate_demand,
            b.min_district_demand
        );
    }
    write_with_manifest(g, rec, &a.output, "scenarios", &set)?;
    Ok(Outcome::Done)
}

/// Solver settings that may come from a settings file; command-line flags
/// take precedence.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSettings {
    pub eps: Option<f64>,
    pub depots: Option<u32>,
    pub time_limit: Option<f64>,
    pub pricing_time_limit: Option<f64>,
    pub max_iterations: Option<usize>,
    pub warm_start: Option<bool>,
    pub route_pooling: Option<bool>,
    pub activation: Option<bool>,
    pub recycling: Option<bool>,
}

impl SolveSettings {
    fn over(self, base: SolveSettings) -> SolveSettings {
        SolveSettings {
            eps: self.eps.or(base.eps),
            depots: self.depots.or(base.depots),
            time_limit: self.time_limit.or(base.time_limit),
            pricing_time_limit: self.pricing_time_limit.or(base.pricing_time_limit),
            max_iterations: self.max_iterations.or(base.max_iterations),
            warm_start: self.warm_start.or(base.warm_start),
            route_pooling: self.route_pooling.or(base.route_pooling),
            activation: self.activation.or(base.activation),
            recycling: self.recycling.or(base.recycling),
        }
    }

    fn options(&self) -> Result<LShapedOptions> {
        let d = LShapedOptions::default();
        let secs = |s: Option<f64>, name: &str| -> Result<Option<Duration>> {
            s.map(|v| Duration::try_from_secs_f64(v).with_context(|| format!("{name} must be a nonnegative number of seconds")))
                .transpose()
        };
        Ok(LShapedOptions {
            eps: self.eps.unwrap_or(d.eps),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            time_limit: secs(self.time_limit, "time limit")?,
            pricing_time_limit: secs(self.pricing_time_limit, "pricing time limit")?,
            warm_start: self.warm_start.unwrap_or(d.warm_start),
            route_pooling: self.route_pooling.unwrap_or(d.route_pooling),
            activation: self.activation.unwrap_or(d.activation),
            recycling: self.recycling.unwrap_or(d.recycling),
            ..d
        })
    }
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Problem file (network and instance configuration).
    pub problem: PathBuf,
    /// Scenario set, sample or history CSV.
    pub scenarios: PathBuf,
    /// Solver settings file; flags override it.
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Relative optimality gap at which to stop.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Open exactly this many depots; free when omitted.
    #[arg(long)]
    pub depots: Option<u32>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Budget per pricing call in seconds.
    #[arg(long)]
    pub pricing_time_limit: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub no_warm_start: bool,
    #[arg(long)]
    pub no_route_pooling: bool,
    #[arg(long)]
    pub no_activation: bool,
    #[arg(long)]
    pub no_recycling: bool,
    /// Resume from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write a checkpoint here at the end of the run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn solve(g: &Global, a: &SolveArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("solve");
    let file = match &a.settings {
        Some(p) => {
            rec.config(p)?;
            io::read_json::<SolveSettings>(p, "solve-settings")?
        }
        None => SolveSettings::default(),
    };
    let off = |flag: bool| if flag { Some(false) } else { None };
    let flags = SolveSettings {
        eps: a.eps,
        depots: a.depots,
        time_limit: a.time_limit,
        pricing_time_limit: a.pricing_time_limit,
        max_iterations: a.max_iterations,
        warm_start: off(a.no_warm_start),
        route_pooling: off(a.no_route_pooling),
        activation: off(a.no_activation),
        recycling: off(a.no_recycling),
    };
    let settings = flags.over(file);
    let opts = settings.options()?;
    if g.verbose > 0 {
        eprintln!("settings: {}", serde_json::to_string(&settings)?);
    }

    rec.input(&a.problem)?;
    rec.input(&a.scenarios)?;
    let problem = ProblemFile::read(&a.problem)?;
    let mut config = problem.config.clone();
    if settings.depots.is_some() {
        config.num_depots_to_open = settings.depots;
    }
    let inst = Instance::new(&problem.network, config)?;
    let scenarios = io::read_days(&a.scenarios)?;
    if scenarios.is_empty() {
        bail!("{} holds no scenarios", a.scenarios.display());
    }
    let hash = network_hash(&problem.network);
    let resume = match &a.resume {
        Some(p) => {
            rec.input(p)?;
            Some(io::read_checkpoint(p, &hash)?)
        }
        None => None,
    };
    rec.mark("preprocessing");

    let res = lshaped::run_lshaped_from(&inst, &scenarios, &opts, resume)?;
    let t = res.timings;
    rec.split("warm_start", t.warm_start, "other");
    for (phase, secs) in [
        ("facility_location", t.facility_location),
        ("set_covering", t.set_covering),
        ("route_generators", t.route_generators),
    ] {
        *rec.manifest.timings.entry(phase.to_string()).or_default() += secs;
    }
    // The solver's phases were charged to "other" by the split above.
    let solver = t.facility_location + t.set_covering + t.route_generators;
    if let Some(o) = rec.manifest.timings.get_mut("other") {
        *o = (*o - solver).max(0.0);
    }

    let problem_path = std::path::absolute(&a.problem).unwrap_or_else(|_| a.problem.clone());
    let sol = SolutionFile::from_result(&inst, Some(problem_path), hash.clone(), &scenarios, &res);
    if let Some(cp) = &a.checkpoint {
        io::write_json(
            cp,
            "checkpoint",
            &CheckpointFile {
                network_hash: hash,
                checkpoint: res.checkpoint(),
            },
            None,
        )?;
        rec.output(cp);
    }
    eprintln!(
        "objective {:.4}  lower bound {:.4}  gap {:.2e}  iterations {}  status {:?}",
        sol.objective, sol.lower_bound, sol.gap, sol.iterations, sol.status
    );
    let status = res.status;
    write_with_manifest(g, rec, &a.output, "solution", &sol)?;
    Ok(match status {
        LShapedStatus::Converged => Outcome::Done,
        LShapedStatus::TimeLimit => Outcome::Partial(format!("time limit reached at gap {:.3e}", sol.gap)),
        LShapedStatus::IterationLimit => Outcome::Partial(format!("iteration limit reached at gap {:.3e}", sol.gap)),
    })
}

/// The solution and the instance it was solved on.
fn load_solution(rec: &mut Recorder, path: &Path, problem: Option<&Path>) -> Result<(SolutionFile, Instance)> {
    rec.input(path)?;
    let sol: SolutionFile = io::read_json(path, "solution")?;
    let problem_path = match (problem, &sol.problem) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) if p.exists() => p.clone(),
        (None, Some(p)) => path.parent().unwrap_or(Path::new(".")).join(p),
        (None, None) => bail!("{} does not name its problem file; pass --problem", path.display()),
    };
    rec.input(&problem_path)?;
    let problem = ProblemFile::read(&problem_path)?;
    if network_hash(&problem.network) != sol.network_hash {
        bail!(
            "{} holds a different network than the one {} was solved on",
            problem_path.display(),
            path.display()
        );
    }
    let inst = Instance::new(&problem.network, sol.config.clone())?;
    Ok((sol, inst))
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    pub solution: PathBuf,
    /// Days to evaluate: history CSV, sample or scenario file.
    pub days: PathBuf,
    #[arg(long, default_value = "full_cg", value_parser = parse_mode)]
    pub mode: EvalMode,
    /// Problem file, when the path recorded in the solution is stale.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Evaluate every day from the solution's pools only.
    #[arg(long)]
    pub no_cross_day: bool,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// CO2 emission factor in kg per mile.
    #[arg(long, default_value_t = eval::DEFAULT_EMISSION_KG_PER_MILE)]
    pub emission: f64,
    /// Budget per pricing call in seconds.
    #[arg(long)]
    pub pricing_time_limit: Option<f64>,
    /// Output stem: `<stem>.json` and `<stem>.csv` are written.
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_mode(s: &str) -> std::result::Result<EvalMode, String> {
    s.parse().map_err(|e: fleetroute::Error| e.to_string())
}

fn eval_options(mode: EvalMode, cross_day: bool, batch: usize, emission: f64, pricing: Option<f64>) -> Result<EvalOptions> {
    if batch == 0 {
        bail!("--batch-size must be positive");
    }
    Ok(EvalOptions {
        mode,
        cross_day_recycling: cross_day,
        batch_size: batch,
        emission_kg_per_mile: emission,
        pricing_time_limit: pricing
            .map(Duration::try_from_secs_f64)
            .transpose()
            .context("pricing time limit must be a nonnegative number of seconds")?,
        ..Default::default()
    })
}

fn evaluate(g: &Global, a: &EvaluateArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("evaluate");
    let (sol, inst) = load_solution(&mut rec, &a.solution, a.problem.as_deref())?;
    rec.input(&a.days)?;
    let days = io::read_days(&a.days)?;
    let pools = sol.seed_pools(&inst)?;
    rec.mark("preprocessing");
    let opts = eval_options(a.mode, !a.no_cross_day, a.batch_size, a.emission, a.pricing_time_limit)?;
    let report = eval::evaluate(&inst, &sol.solution, &days, &pools, &opts)?;
    rec.mark("evaluation");
    log::info!(
        "{} days: mean routing cost {:.2}, service level {:.4} (days) {:.4} (orders), utilization {:.3}",
        report.days.len(),
        report.routing_cost.mean,
        report.service_level_days,
        report.service_level_orders,
        report.vehicle_utilization
    );
    let json = a.output.with_extension("json");
    let csv = a.output.with_extension("csv");
    let reference = Recorder::reference(&manifest_path(g.manifest.as_deref(), &json));
    io::write_report(&a.output, &report, Some(&reference))?;
    rec.output(&json);
    rec.output(&csv);
    let inexact = report.days.iter().filter(|d| !d.exact).count();
    finish(g, rec, &json)?;
    if inexact > 0 && a.mode == EvalMode::FullCg && a.pricing_time_limit.is_some() {
        return Ok(Outcome::Partial(format!("{inexact} days were not solved to optimality within the pricing budget")));
    }
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct RouteDayArgs {
    pub solution: PathBuf,
    /// File holding the day (a day file, or a sample with `--day-id`).
    pub day: PathBuf,
    /// Which day of a multi-day file to route.
    #[arg(long)]
    pub day_id: Option<String>,
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Serialize)]
struct DayRoutes<'a> {
    day: &'a DemandRealization,
    record: &'a eval::DayRecord,
}

fn route_day(g: &Global, a: &RouteDayArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("route-day");
    let (sol, inst) = load_solution(&mut rec, &a.solution, a.problem.as_deref())?;
    rec.input(&a.day)?;
    let mut days = io::read_days(&a.day)?;
    let day = match &a.day_id {
        Some(id) => days
            .into_iter()
            .find(|d| &d.id == id)
            .with_context(|| format!("no day `{id}` in {}", a.day.display()))?,
        None if days.len() == 1 => days.remove(0),
        None => bail!("{} holds {} days; pick one with --day-id", a.day.display(), days.len()),
    };
    let pools = sol.seed_pools(&inst)?;
    rec.mark("preprocessing");
    let opts = EvalOptions::default();
    let report = eval::evaluate(&inst, &sol.solution, std::slice::from_ref(&day), &pools, &opts)?;
    rec.mark("routing");
    let record = &report.days[0];
    for r in &record.routes {
        println!("{}", r.join(" -> "));
    }
    eprintln!(
        "routing cost {:.2}, {} vehicles, {} unserved",
        record.routing_cost, record.vehicles_used, record.unserved_clients
    );
    write_with_manifest(g, rec, &a.output, "routes", &DayRoutes { day: &day, record })?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn compare(g: &Global, a: &CompareArgs) -> Result<Outcome> {
    let mut rec = Recorder::new("compare");
    rec.input(&a.first)?;
    rec.input(&a.second)?;
    let x: EvaluationReport = io::read_json(&a.first, "report")?;
    let y: EvaluationReport = io::read_json(&a.second, "report")?;
    rec.mark("read");
    let cmp = eval::compare(&x, &y)?;
    rec.mark("comparison");
    if let Some(t) = &cmp.t_test {
        eprintln!("Welch t = {:.4}, df = {:.1}, p = {:.4}", t.t, t.degrees_of_freedom, t.p_value);
    }
    write_with_manifest(g, rec, &a.output, "comparison", &cmp)?;
    Ok(Outcome::Done)
}
