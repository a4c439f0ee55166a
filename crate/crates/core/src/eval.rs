//! Evaluation of a fixed depot and fleet decision on observed demand days.
//!
//! Every day is a routing subproblem solved in one of three modes. All
//! modes start from the same base pool, built by recycling the seed pools
//! (typically the scenario pools of the solve) into the day. Full and
//! single-iteration evaluation also recycle routes found on earlier days,
//! in fixed-size batches so results do not depend on the thread count.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::colgen::{self, CgMode, CgOptions, Fleet, RoutePool};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{first_stage_cost, DemandRealization, FirstStageSolution};
use crate::recycle;

/// Default emission factor in kilograms of CO2 per vehicle mile. A generic
/// light-truck figure; override it for a specific fleet.
pub const DEFAULT_EMISSION_KG_PER_MILE: f64 = 1.617;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Column generation to exhaustion with exact gap closing.
    #[default]
    FullCg,
    /// One pricing round, then the integer master.
    SingleIteration,
    /// Recycled routes only, no pricing.
    PetalHeuristic,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_cg" | "full" => Ok(EvalMode::FullCg),
            "single_iteration" | "single" => Ok(EvalMode::SingleIteration),
            "petal" | "petal_heuristic" => Ok(EvalMode::PetalHeuristic),
            _ => Err(Error::input(format!(
                "unknown mode `{s}` (expected full_cg, single_iteration or petal)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub mode: EvalMode,
    /// Recycle routes of already evaluated days into later ones.
    pub cross_day_recycling: bool,
    /// Days solved concurrently between pool merges.
    pub batch_size: usize,
    pub emission_kg_per_mile: f64,
    pub pricing_time_limit: Option<Duration>,
    pub mip_node_limit: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: EvalMode::FullCg,
            cross_day_recycling: true,
            batch_size: 8,
            emission_kg_per_mile: DEFAULT_EMISSION_KG_PER_MILE,
            pricing_time_limit: None,
            mip_node_limit: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub id: String,
    /// Routing cost plus unserved-client penalties.
    pub value: f64,
    pub routing_cost: f64,
    pub active_clients: usize,
    pub vehicles_used: usize,
    pub unserved_clients: usize,
    pub total_units: f64,
    pub served_units: f64,
    pub distance: f64,
    pub solve_time: f64,
    /// `value` is proven optimal over all routes.
    pub exact: bool,
    /// Routes as node-id sequences.
    #[serde(default)]
    pub routes: Vec<Vec<String>>,
}

/// Spreadsheet-style descriptive statistics. Moments that need more data
/// points than available are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub count: usize,
    pub mean: f64,
    pub standard_error: Option<f64>,
    pub median: f64,
    pub std_dev: Option<f64>,
    /// Excess kurtosis with the small-sample correction (needs 4 points).
    pub kurtosis: Option<f64>,
    /// Adjusted Fisher-Pearson skewness (needs 3 points).
    pub skewness: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl Descriptive {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("statistics of an empty series"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        let sd = (values.len() >= 2)
            .then(|| (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        let std_sum = |p: i32| values.iter().map(|x| ((x - mean) / sd.unwrap()).powi(p)).sum::<f64>();
        let spread = sd.is_some_and(|s| s > 0.0);
        let skewness = (spread && values.len() >= 3).then(|| n / ((n - 1.0) * (n - 2.0)) * std_sum(3));
        let kurtosis = (spread && values.len() >= 4).then(|| {
            n * (n + 1.0) / ((n - 1.0) * (n - 2.0) * (n - 3.0)) * std_sum(4)
                - 3.0 * (n - 1.0).powi(2) / ((n - 2.0) * (n - 3.0))
        });
        Ok(Descriptive {
            count: values.len(),
            mean,
            standard_error: sd.map(|s| s / n.sqrt()),
            median,
            std_dev: sd,
            kurtosis,
            skewness,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares fit of `y` on `x`. Two points with distinct `x`
/// give the line through them.
pub fn regress(points: &[(f64, f64)]) -> Result<Regression> {
    if points.len() < 2 {
        return Err(Error::input("regression needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 1e-12 * n * mx.abs().max(1.0).powi(2) {
        return Err(Error::input("regression needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // A constant response is fitted perfectly.
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(Regression {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    /// Mean of the first series minus mean of the second.
    pub mean_difference: f64,
    pub t: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Two-sample t-test without the equal-variance assumption.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    let (da, db) = (Descriptive::of(a)?, Descriptive::of(b)?);
    let (Some(sa), Some(sb)) = (da.std_dev, db.std_dev) else {
        return Err(Error::input("t-test needs at least two values per series"));
    };
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    let diff = da.mean - db.mean;
    if va + vb == 0.0 {
        return Err(Error::input("t-test on two constant series"));
    }
    let t = diff / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(format!("t distribution: {e}")))?;
    Ok(WelchTest {
        mean_difference: diff,
        t,
        degrees_of_freedom: df,
        p_value: 2.0 * dist.cdf(-t.abs()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvalMode,
    pub total_vehicles: u32,
    pub fixed_cost: f64,
    pub days: Vec<DayRecord>,
    pub routing_cost: Descriptive,
    pub vehicle_utilization: f64,
    /// Share of days on which every active client was served.
    pub service_level_days: f64,
    /// Share of client orders served over all days.
    pub service_level_orders: f64,
    pub mean_distance: f64,
    pub daily_co2_tons: f64,
    /// Routing cost against active clients; `None` when all days have the
    /// same number of active clients.
    pub regression: Option<Regression>,
    pub wall_seconds: f64,
}

impl EvaluationReport {
    /// Aggregates `days`. Utilization is zero without vehicles.
    pub fn from_records(
        mode: EvalMode,
        total_vehicles: u32,
        fixed_cost: f64,
        days: Vec<DayRecord>,
        emission_kg_per_mile: f64,
    ) -> Result<Self> {
        let n = days.len() as f64;
        let costs: Vec<f64> = days.iter().map(|d| d.routing_cost).collect();
        let routing_cost = Descriptive::of(&costs)?;
        let vehicle_utilization = if total_vehicles == 0 {
            0.0
        } else {
            days.iter().map(|d| d.vehicles_used as f64 / total_vehicles as f64).sum::<f64>() / n
        };
        let service_level_days = days.iter().filter(|d| d.unserved_clients == 0).count() as f64 / n;
        let orders: usize = days.iter().map(|d| d.active_clients).sum();
        let unserved: usize = days.iter().map(|d| d.unserved_clients).sum();
        let service_level_orders = if orders == 0 {
            1.0
        } else {
            (orders - unserved) as f64 / orders as f64
        };
        let mean_distance = days.iter().map(|d| d.distance).sum::<f64>() / n;
        let points: Vec<(f64, f64)> = days.iter().map(|d| (d.active_clients as f64, d.routing_cost)).collect();
        Ok(EvaluationReport {
            mode,
            total_vehicles,
            fixed_cost,
            days,
            routing_cost,
            vehicle_utilization,
            service_level_days,
            service_level_orders,
            mean_distance,
            daily_co2_tons: emission_kg_per_mile * mean_distance / 1000.0,
            regression: regress(&points).ok(),
            wall_seconds: 0.0,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.value).collect()
    }
}

/// Fleet in graph indices; depots with no vehicles are left out.
pub fn fleet_of(inst: &Instance, first_stage: &FirstStageSolution) -> Result<Fleet> {
    first_stage.validate(&inst.config)?;
    let mut fleet = Fleet::new();
    for (k, &y) in &first_stage.fleet {
        if y > 0 {
            fleet.insert(inst.require_depot(k)?, y);
        }
    }
    Ok(fleet)
}

/// Solves one day from `base` and returns its record together with the
/// grown pool.
pub fn evaluate_day(
    inst: &Instance,
    fleet: &Fleet,
    day: &DemandRealization,
    mut pool: RoutePool,
    opts: &EvalOptions,
) -> Result<(DayRecord, RoutePool)> {
    let started = Instant::now();
    let demand = inst.resolve(day)?;
    let cg = CgOptions {
        mode: match opts.mode {
            EvalMode::FullCg => CgMode::Full,
            EvalMode::SingleIteration => CgMode::SingleIteration,
            EvalMode::PetalHeuristic => CgMode::PoolOnly,
        },
        pricing_time_limit: opts.pricing_time_limit,
        close_gap: opts.mode == EvalMode::FullCg,
        mip_node_limit: opts.mip_node_limit,
        ..Default::default()
    };
    let res = colgen::solve_mdvrp(inst, fleet, &demand, &mut pool, &cg)?;
    let unserved_units: f64 = res.unserved.iter().filter_map(|&c| demand.size_of(c)).sum();
    let record = DayRecord {
        id: day.id.clone(),
        value: res.value,
        routing_cost: res.routing_cost,
        active_clients: demand.len(),
        vehicles_used: res.vehicles_used(),
        unserved_clients: res.unserved.len(),
        total_units: demand.total,
        served_units: demand.total - unserved_units,
        distance: res.distance(inst),
        solve_time: started.elapsed().as_secs_f64(),
        exact: opts.mode == EvalMode::FullCg && res.integer_exact,
        routes: res
            .selected_routes
            .iter()
            .map(|r| r.visit_ids(&inst.graph).map(|id| id.to_string()).collect())
            .collect(),
    };
    Ok((record, pool))
}

/// Evaluates `first_stage` on every day of `days`.
pub fn evaluate(
    inst: &Instance,
    first_stage: &FirstStageSolution,
    days: &[DemandRealization],
    seed_pools: &[RoutePool],
    opts: &EvalOptions,
) -> Result<EvaluationReport> {
    let started = Instant::now();
    if days.is_empty() {
        return Err(Error::input("no days to evaluate"));
    }
    if opts.mode == EvalMode::PetalHeuristic && seed_pools.iter().all(RoutePool::is_empty) {
        return Err(Error::input(
            "petal evaluation needs seed routes; solve with warm start or route pooling first",
        ));
    }
    let fleet = fleet_of(inst, first_stage)?;
    let depots: Vec<usize> = fleet.keys().copied().collect();
    let cross = opts.cross_day_recycling && opts.mode != EvalMode::PetalHeuristic;
    let mut shared = RoutePool::new("shared");
    let mut records = Vec::with_capacity(days.len());
    for batch in days.chunks(opts.batch_size.max(1)) {
        let snapshot = &shared;
        let solved: Vec<Result<(DayRecord, RoutePool)>> = batch
            .par_iter()
            .map(|day| {
                let demand = inst.resolve(day)?;
                let mut base = RoutePool::new(day.id.clone());
                for p in seed_pools {
                    recycle::recycle_into(inst, p, &demand, Some(&depots), &mut base)?;
                }
                if cross {
                    recycle::recycle_into(inst, snapshot, &demand, Some(&depots), &mut base)?;
                }
                evaluate_day(inst, &fleet, day, base, opts)
            })
            .collect();
        let mut merged = Vec::new();
        for s in solved {
            let (rec, pool) = s?;
            records.push(rec);
            merged.push(pool);
        }
        if cross {
            for pool in merged {
                for r in pool.iter() {
                    shared.insert(r.clone());
                }
            }
        }
    }
    let mut report = EvaluationReport::from_records(
        opts.mode,
        first_stage.total_vehicles(),
        first_stage_cost(first_stage, &inst.config),
        records,
        opts.emission_kg_per_mile,
    )?;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Per-day value comparison between two reports over the same days.
pub fn compare(a: &EvaluationReport, b: &EvaluationReport) -> Result<Comparison> {
    let ids_a: Vec<&str> = a.days.iter().map(|d| d.id.as_str()).collect();
    let ids_b: Vec<&str> = b.days.iter().map(|d| d.id.as_str()).collect();
    if ids_a != ids_b {
        return Err(Error::input("reports cover different days"));
    }
    let costs = |r: &EvaluationReport| r.days.iter().map(|d| d.routing_cost).collect::<Vec<_>>();
    Ok(Comparison {
        t_test: welch_t_test(&costs(a), &costs(b)).ok(),
        fixed_cost_difference: a.fixed_cost - b.fixed_cost,
        mean_routing_difference: a.routing_cost.mean - b.routing_cost.mean,
        first_cheaper_days: a.days.iter().zip(&b.days).filter(|(x, y)| x.value < y.value).count(),
        second_cheaper_days: a.days.iter().zip(&b.days).filter(|(x, y)| x.value > y.value).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t_test: Option<WelchTest>,
    pub fixed_cost_difference: f64,
    pub mean_routing_difference: f64,
    pub first_cheaper_days: usize,
    pub second_cheaper_days: usize,
}

/// Routes of `pools` grouped by depot id, for reporting.
pub fn pool_sizes(inst: &Instance, pools: &[RoutePool]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for p in pools {
        for r in p.iter() {
            *out.entry(inst.depot_id(r.depot).to_string()).or_insert(0) += 1;
        }
    }
    out
}
