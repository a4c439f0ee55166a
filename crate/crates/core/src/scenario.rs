//! Demand model fitting, day simulation and worst-case scenario selection.
//!
//! The demand process is zero-inflated: which clients order on a day is
//! driven by per-client, per-month activity probabilities, how many order
//! follows a lognormal law, and order sizes follow a (zero-truncated)
//! Poisson law.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearModel, ObjectiveSense, RowSense};
use crate::model::{DemandRealization, Node, NodeId};

/// Minimum number of history days accepted by [`fit`].
pub const MIN_HISTORY_DAYS: usize = 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryDay {
    pub date: NaiveDate,
    pub orders: BTreeMap<NodeId, f64>,
}

/// Observed orders, one entry per day with at least one order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DemandHistory {
    pub days: Vec<HistoryDay>,
}

impl DemandHistory {
    /// Groups `(date, node, units)` rows into days. Zero rows are dropped and
    /// repeated `(date, node)` rows are summed.
    pub fn from_rows(rows: impl IntoIterator<Item = (NaiveDate, NodeId, f64)>) -> Result<Self> {
        let mut by_day: BTreeMap<NaiveDate, BTreeMap<NodeId, f64>> = BTreeMap::new();
        for (date, node, units) in rows {
            if !(units >= 0.0) || !units.is_finite() {
                return Err(Error::input(format!("order of {units} units for `{node}` on {date}")));
            }
            let day = by_day.entry(date).or_default();
            if units > 0.0 {
                *day.entry(node).or_insert(0.0) += units;
            }
        }
        Ok(DemandHistory {
            days: by_day
                .into_iter()
                .map(|(date, orders)| HistoryDay { date, orders })
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.days {
            if !seen.insert(d.date) {
                return Err(Error::input(format!("date {} appears twice", d.date)));
            }
            if let Some((n, u)) = d.orders.iter().find(|(_, &u)| !(u >= 0.0) || !u.is_finite()) {
                return Err(Error::input(format!("order of {u} units for `{n}` on {}", d.date)));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.days.iter().flat_map(|d| d.orders.keys().cloned()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSizeLaw {
    /// Poisson conditioned on a positive draw.
    #[default]
    ZeroTruncatedPoisson,
    /// Plain Poisson; a zero draw leaves the client inactive that day.
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedDemandModel {
    /// Activity probability per client and calendar month (index 0 is
    /// January).
    pub activity: BTreeMap<NodeId, [f64; 12]>,
    /// Law of the number of active clients per day.
    pub active_count: LogNormalParams,
    pub order_size_law: OrderSizeLaw,
    /// Poisson mean of the order size (before truncation).
    pub order_size_mean: f64,
}

impl FittedDemandModel {
    pub fn validate(&self) -> Result<()> {
        for (n, ps) in &self.activity {
            if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::input(format!("activity probability of `{n}` outside [0, 1]")));
            }
        }
        if !(self.active_count.sigma > 0.0) || !self.active_count.mu.is_finite() {
            return Err(Error::input("lognormal parameters must be finite with sigma > 0"));
        }
        if !(self.order_size_mean > 0.0) || !self.order_size_mean.is_finite() {
            return Err(Error::input("order size mean must be positive"));
        }
        Ok(())
    }

    pub fn probability(&self, node: &NodeId, month: u32) -> f64 {
        self.activity.get(node).map_or(0.0, |ps| ps[(month as usize - 1) % 12])
    }
}

/// Mean of a zero-truncated Poisson law with parameter `lambda`.
pub fn truncated_poisson_mean(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0 + lambda / 2.0;
    }
    lambda / -(-lambda).exp_m1()
}

/// Maximum-likelihood Poisson parameter given the mean of zero-truncated
/// observations. Solves `lambda / (1 - exp(-lambda)) = mean` by Newton's
/// method.
pub fn fit_truncated_poisson(mean: f64) -> Result<f64> {
    if !(mean >= 1.0) || !mean.is_finite() {
        return Err(Error::input(format!(
            "mean {mean} of positive integer orders must be at least 1"
        )));
    }
    if mean - 1.0 < 1e-9 {
        return Ok(2.0 * (mean - 1.0).max(1e-12));
    }
    let mut lambda = mean;
    for _ in 0..100 {
        let e = (-lambda).exp();
        let f = truncated_poisson_mean(lambda) - mean;
        let d = (1.0 - e - lambda * e) / (1.0 - e).powi(2);
        let step = f / d;
        lambda = (lambda - step).max(lambda / 2.0);
        if step.abs() < 1e-12 * lambda.max(1.0) {
            break;
        }
    }
    Ok(lambda)
}

/// Fits the demand model to `history` with the given order-size law.
pub fn fit(history: &DemandHistory, law: OrderSizeLaw) -> Result<FittedDemandModel> {
    history.validate()?;
    if history.days.len() < MIN_HISTORY_DAYS {
        return Err(Error::input(format!(
            "history has {} days; at least {MIN_HISTORY_DAYS} are needed",
            history.days.len()
        )));
    }
    let mut days_per_month = [0usize; 12];
    for d in &history.days {
        days_per_month[d.date.month0() as usize] += 1;
    }
    let mut counts: BTreeMap<NodeId, [usize; 12]> = BTreeMap::new();
    for d in &history.days {
        for n in d.orders.keys() {
            counts.entry(n.clone()).or_default()[d.date.month0() as usize] += 1;
        }
    }
    let total_days = history.days.len();
    let activity = counts
        .into_iter()
        .map(|(n, c)| {
            let overall = c.iter().sum::<usize>() as f64 / total_days as f64;
            let mut ps = [0.0; 12];
            for m in 0..12 {
                // Months absent from the history fall back to the overall
                // frequency.
                ps[m] = if days_per_month[m] > 0 {
                    c[m] as f64 / days_per_month[m] as f64
                } else {
                    overall
                };
            }
            (n, ps)
        })
        .collect();

    let logs: Vec<f64> = history
        .days
        .iter()
        .filter(|d| !d.orders.is_empty())
        .map(|d| (d.orders.len() as f64).ln())
        .collect();
    if logs.is_empty() {
        return Err(Error::input("history has no positive orders"));
    }
    let mu = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / logs.len() as f64;
    // A constant daily count has no spread; keep the law proper.
    let sigma = var.sqrt().max(1e-6);

    let sizes: Vec<f64> = history.days.iter().flat_map(|d| d.orders.values().copied()).collect();
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let order_size_mean = match law {
        OrderSizeLaw::ZeroTruncatedPoisson => fit_truncated_poisson(mean)?,
        OrderSizeLaw::Poisson => mean,
    };
    Ok(FittedDemandModel {
        activity,
        active_count: LogNormalParams { mu, sigma },
        order_size_law: law,
        order_size_mean,
    })
}

fn day_rng(seed: u64, day: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day as u64);
    rng
}

fn draw_order(rng: &mut ChaCha8Rng, poisson: &Poisson<f64>, law: OrderSizeLaw) -> f64 {
    match law {
        OrderSizeLaw::Poisson => poisson.sample(rng),
        OrderSizeLaw::ZeroTruncatedPoisson => loop {
            let k = poisson.sample(rng);
            if k > 0.0 {
                break k;
            }
        },
    }
}

/// Simulates `n_days` demand days for calendar `month` (1 to 12).
///
/// Each day draws a client count `N = round(exp(mu + sigma Z))` clamped to
/// `[1, eligible clients]`, then picks `N` distinct clients one at a time
/// with probability proportional to their activity (renormalized after each
/// pick), then draws each order size. Day `d` uses ChaCha8 stream `d` of
/// `seed`, so days are independent of each other and of thread count.
pub fn simulate(model: &FittedDemandModel, n_days: usize, month: u32, seed: u64) -> Result<Vec<DemandRealization>> {
    model.validate()?;
    if n_days == 0 {
        return Err(Error::input("n_days must be at least 1"));
    }
    if !(1..=12).contains(&month) {
        return Err(Error::input(format!("month {month} outside 1..=12")));
    }
    let eligible: Vec<(&NodeId, f64)> = model
        .activity
        .keys()
        .map(|n| (n, model.probability(n, month)))
        .filter(|(_, p)| *p > 0.0)
        .collect();
    if eligible.is_empty() {
        return Err(Error::input(format!("no client has positive activity in month {month}")));
    }
    let normal = Normal::new(model.active_count.mu, model.active_count.sigma)
        .map_err(|e| Error::input(format!("lognormal parameters: {e}")))?;
    let poisson = Poisson::new(model.order_size_mean).map_err(|e| Error::input(format!("order size mean: {e}")))?;
    let width = n_days.to_string().len().max(4);
    (0..n_days)
        .into_par_iter()
        .map(|d| {
            let mut rng = day_rng(seed, d);
            let n = normal.sample(&mut rng).exp().round().clamp(1.0, eligible.len() as f64) as usize;
            let mut left: Vec<usize> = (0..eligible.len()).collect();
            let mut orders = BTreeMap::new();
            for _ in 0..n {
                let w = WeightedIndex::new(left.iter().map(|&i| eligible[i].1))
                    .map_err(|e| Error::Numerical(format!("weighted sampling: {e}")))?;
                let pick = left.swap_remove(w.sample(&mut rng));
                let size = draw_order(&mut rng, &poisson, model.order_size_law);
                if size > 0.0 {
                    orders.insert(eligible[pick].0.clone(), size);
                }
            }
            Ok(DemandRealization::new(format!("sim{:0width$}", d + 1), orders))
        })
        .collect()
}

/// A percentile interval `[lower, upper)` of aggregate daily demand;
/// `upper = 100` includes the largest day.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn new(lower: f64, upper: f64) -> Self {
        Band { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Parses `"90-95"`.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::input(format!("band `{s}` is not of the form LOW-HIGH")))?;
        let p = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::input(format!("band `{s}` has a non-numeric bound")))
        };
        Ok(Band::new(p(a)?, p(b)?))
    }
}

pub fn validate_bands(bands: &[Band]) -> Result<()> {
    if bands.is_empty() {
        return Err(Error::input("at least one band is required"));
    }
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.lower.total_cmp(&b.lower));
    for b in &sorted {
        if !(0.0 <= b.lower && b.lower < b.upper && b.upper <= 100.0) {
            return Err(Error::input(format!("band {}-{} is not within 0-100", b.lower, b.upper)));
        }
    }
    for w in sorted.windows(2) {
        if w[1].lower < w[0].upper {
            return Err(Error::input(format!(
                "bands {}-{} and {}-{} overlap",
                w[0].lower, w[0].upper, w[1].lower, w[1].upper
            )));
        }
    }
    Ok(())
}

/// A partition of the clients into districts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Districts {
    pub cells: Vec<Vec<NodeId>>,
}

impl Districts {
    /// Balanced spatial partition into `k` cells: nodes are cut into
    /// vertical strips by longitude, and each strip into cells by
    /// latitude, with cell sizes as equal as possible. With fewer nodes
    /// than `k`, every node becomes its own district.
    pub fn spatial(nodes: &[Node], k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::input("number of districts must be positive"));
        }
        if nodes.is_empty() {
            return Err(Error::input("cannot partition an empty node set"));
        }
        let k = k.min(nodes.len());
        let strips = (k as f64).sqrt().ceil() as usize;
        let mut per_strip = vec![k / strips; strips];
        for s in per_strip.iter_mut().take(k % strips) {
            *s += 1;
        }
        let mut by_lon: Vec<&Node> = nodes.iter().collect();
        by_lon.sort_by(|a, b| a.lon.total_cmp(&b.lon).then_with(|| a.id.cmp(&b.id)));
        let mut cells = Vec::with_capacity(k);
        let mut start = 0;
        let mut cells_done = 0;
        for &c in &per_strip {
            // Nodes proportional to the number of cells in the strip.
            let end = (nodes.len() * (cells_done + c)) / k;
            let mut strip: Vec<&Node> = by_lon[start..end].to_vec();
            strip.sort_by(|a, b| a.lat.total_cmp(&b.lat).then_with(|| a.id.cmp(&b.id)));
            for j in 0..c {
                let lo = strip.len() * j / c;
                let hi = strip.len() * (j + 1) / c;
                cells.push(strip[lo..hi].iter().map(|n| n.id.clone()).collect());
            }
            start = end;
            cells_done += c;
        }
        Ok(Districts { cells })
    }

    /// Districts from an explicit node-to-district assignment.
    pub fn from_assignment(assignment: &BTreeMap<NodeId, String>) -> Self {
        let mut groups: BTreeMap<&String, Vec<NodeId>> = BTreeMap::new();
        for (n, d) in assignment {
            groups.entry(d).or_default().push(n.clone());
        }
        Districts {
            cells: groups.into_values().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.cells {
            if c.is_empty() {
                return Err(Error::input("district with no nodes"));
            }
            for n in c {
                if !seen.insert(n) {
                    return Err(Error::input(format!("node `{n}` lies in two districts")));
                }
            }
        }
        Ok(())
    }

    /// Demand per district for `xi`.
    pub fn demand(&self, xi: &DemandRealization) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| c.iter().filter_map(|n| xi.orders.get(n)).sum())
            .collect()
    }
}

/// Smallest district demand of `xi`.
pub fn min_district_demand(xi: &DemandRealization, districts: &Districts) -> f64 {
    districts.demand(xi).into_iter().fold(f64::INFINITY, f64::min)
}

/// Index of the candidate with the largest minimum district demand; ties go
/// to the earliest candidate.
pub fn select_argmax_min(candidates: &[&DemandRealization], districts: &Districts) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, xi) in candidates.iter().enumerate() {
        let v = min_district_demand(xi, districts);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((t, v));
        }
    }
    best.map(|b| b.0)
}

/// The same choice through the MIP `max z` subject to `z <= demand of
/// district k under the chosen candidate` for every `k` and exactly one
/// candidate chosen. Ties are resolved to the earliest candidate of equal
/// value.
pub fn select_by_mip(candidates: &[&DemandRealization], districts: &Districts) -> Result<Option<usize>> {
    if candidates.is_empty() {
        return Ok(None);
    }
    let demand: Vec<Vec<f64>> = candidates.iter().map(|xi| districts.demand(xi)).collect();
    let mut m = LinearModel::new(ObjectiveSense::Maximize);
    let x: Vec<_> = (0..candidates.len())
        .map(|t| m.add_var(format!("pick_{t}"), 0.0, 1.0, 0.0, true))
        .collect();
    let z = m.add_var("z", f64::NEG_INFINITY, f64::INFINITY, 1.0, false);
    for k in 0..districts.len() {
        let mut row = vec![(z, 1.0)];
        row.extend(x.iter().enumerate().map(|(t, &v)| (v, -demand[t][k])));
        m.add_row(format!("district_{k}"), row, RowSense::Le, 0.0);
    }
    m.add_row("one", x.iter().map(|&v| (v, 1.0)).collect(), RowSense::Eq, 1.0);
    let r = lp::solve_mip(&m, &Default::default())?;
    if r.status != lp::Status::Optimal {
        return Err(Error::Numerical(format!("selection MIP ended with status {:?}", r.status)));
    }
    let best = r.objective;
    let mins: Vec<f64> = demand.iter().map(|d| d.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let tol = 1e-9 * best.abs().max(1.0);
    Ok(mins.iter().position(|&v| v >= best - tol))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    #[default]
    ArgmaxMin,
    Mip,
    /// Run both and fail if they disagree.
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilityRule {
    /// Proportional to the band's percentile width.
    #[default]
    BandWidth,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub band: Band,
    pub pool_size: usize,
    pub selected: String,
    pub aggregate_demand: f64,
    pub min_district_demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<DemandRealization>,
    pub bands: Vec<BandSelection>,
    pub districts: Districts,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ScenarioSet {
    pub fn validate(&self) -> Result<()> {
        self.districts.validate()?;
        let sum: f64 = self.scenarios.iter().map(|s| s.probability.unwrap_or(f64::NAN)).sum();
        if !((sum - 1.0).abs() <= 1e-9) {
            return Err(Error::input(format!("scenario probabilities sum to {sum}, not 1")));
        }
        self.scenarios.iter().try_for_each(|s| s.validate())
    }
}

/// Percentile rank of each day by aggregate demand, in `[0, 100)`: the
/// share of days ranked strictly before it (ties broken by sample order).
pub fn percentile_ranks(sample: &[DemandRealization]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.sort_by(|&a, &b| sample[a].total_demand().total_cmp(&sample[b].total_demand()).then(a.cmp(&b)));
    let mut ranks = vec![0.0; sample.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = 100.0 * r as f64 / sample.len() as f64;
    }
    ranks
}

/// Picks one worst-case day per band.
pub fn select_scenarios(
    sample: &[DemandRealization],
    bands: &[Band],
    districts: &Districts,
    method: SelectionMethod,
    rule: ProbabilityRule,
) -> Result<ScenarioSet> {
    validate_bands(bands)?;
    districts.validate()?;
    if districts.is_empty() {
        return Err(Error::input("at least one district is required"));
    }
    let ranks = percentile_ranks(sample);
    let widths: f64 = bands.iter().map(Band::width).sum();
    let mut scenarios = Vec::new();
    let mut meta = Vec::new();
    for (b, band) in bands.iter().enumerate() {
        let pool: Vec<&DemandRealization> = sample
            .iter()
            .zip(&ranks)
            .filter(|(_, &r)| r >= band.lower && (r < band.upper || band.upper >= 100.0))
            .map(|(xi, _)| xi)
            .collect();
        if pool.is_empty() {
            return Err(Error::input(format!(
                "band {}-{} holds no simulated day",
                band.lower, band.upper
            )));
        }
        let pick = match method {
            SelectionMethod::ArgmaxMin => select_argmax_min(&pool, districts),
            SelectionMethod::Mip => select_by_mip(&pool, districts)?,
            SelectionMethod::Both => {
                let a = select_argmax_min(&pool, districts);
                let m = select_by_mip(&pool, districts)?;
                if a != m {
                    return Err(Error::Numerical(format!(
                        "band {}-{}: enumeration picked {a:?}, MIP picked {m:?}",
                        band.lower, band.upper
                    )));
                }
                a
            }
        }
        .expect("pool is nonempty");
        let chosen = pool[pick];
        let p = match rule {
            ProbabilityRule::BandWidth => band.width() / widths,
            ProbabilityRule::Uniform => 1.0 / bands.len() as f64,
        };
        let mut xi = chosen.clone();
        xi.id = format!("band{}_{}", b + 1, chosen.id);
        scenarios.push(xi.with_probability(p));
        meta.push(BandSelection {
            band: *band,
            pool_size: pool.len(),
            selected: chosen.id.clone(),
            aggregate_demand: chosen.total_demand(),
            min_district_demand: min_district_demand(chosen, districts),
        });
    }
    // Absorb rounding so the probabilities sum to one.
    let head: f64 = scenarios[..scenarios.len() - 1].iter().map(|s| s.probability.unwrap()).sum();
    scenarios.last_mut().unwrap().probability = Some(1.0 - head);
    Ok(ScenarioSet {
        scenarios,
        bands: meta,
        districts: districts.clone(),
        seed: None,
    })
}
