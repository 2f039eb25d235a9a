//! Periodic data-collection queries, load accounting and the
//! schedulability tests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::{interference_radius, region_of, InterferenceModel, Network, NodeId, RegionIndex};
use crate::routing::RoutingTree;

/// A periodic query: every source produces one data unit of transmission
/// time `chi` per `period`, starting at `release`; instance `t` (1-based)
/// must reach the sink by `release + (t-1)·period + deadline`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub id: u32,
    pub sources: BTreeSet<NodeId>,
    pub chi: f64,
    pub period: f64,
    pub release: f64,
    pub deadline: f64,
    pub weight: f64,
}

impl Query {
    pub fn new(
        id: u32,
        sources: BTreeSet<NodeId>,
        chi: f64,
        period: f64,
        release: f64,
        deadline: f64,
        weight: f64,
    ) -> Result<Self> {
        let q = Query { id, sources, chi, period, release, deadline, weight };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if self.sources.is_empty() {
            return Err(Error::InvalidInput(format!("query {} has no sources", self.id)));
        }
        if !pos(self.chi) || !pos(self.period) || !pos(self.deadline) || !pos(self.weight) {
            return Err(Error::InvalidInput(format!(
                "query {}: chi, period, deadline and weight must be positive",
                self.id
            )));
        }
        if !(self.release >= 0.0 && self.release.is_finite()) {
            return Err(Error::InvalidInput(format!("query {}: release must be non-negative", self.id)));
        }
        Ok(())
    }

    /// `χ/p`: the share of time one data unit per period occupies.
    pub fn unit_load(&self) -> f64 {
        self.chi / self.period
    }

    /// `|S|·χ/p`: the load this query puts on the sink.
    pub fn load(&self) -> f64 {
        self.sources.len() as f64 * self.unit_load()
    }

    pub fn instance_release(&self, t: u64) -> f64 {
        self.release + (t - 1) as f64 * self.period
    }

    pub fn instance_deadline(&self, t: u64) -> f64 {
        self.instance_release(t) + self.deadline
    }
}

/// `Σ_i |S_i|·χ_i/p_i`.
pub fn total_load(queries: &[Query]) -> f64 {
    queries.iter().map(Query::load).fold(0.0, |a, l| a + l)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadMap {
    pub per_node: BTreeMap<NodeId, f64>,
    /// Only non-empty cells are present.
    pub per_region: BTreeMap<RegionIndex, f64>,
}

impl LoadMap {
    fn from_nodes(net: &Network, lambda: f64, per_node: BTreeMap<NodeId, f64>) -> Self {
        let mut per_region = BTreeMap::new();
        for node in net.nodes() {
            let load = per_node.get(&node.id).copied().unwrap_or(0.0);
            *per_region.entry(region_of(&node.pos, lambda)).or_insert(0.0) += load;
        }
        LoadMap { per_node, per_region }
    }

    pub fn node(&self, id: NodeId) -> f64 {
        self.per_node.get(&id).copied().unwrap_or(0.0)
    }

    pub fn region(&self, r: RegionIndex) -> f64 {
        self.per_region.get(&r).copied().unwrap_or(0.0)
    }
}

pub fn initial_load_node(node: NodeId, queries: &[Query]) -> f64 {
    queries.iter().filter(|q| q.sources.contains(&node)).map(Query::unit_load).fold(0.0, |a, l| a + l)
}

pub fn initial_load_region(region: RegionIndex, queries: &[Query], net: &Network, lambda: f64) -> f64 {
    net.nodes()
        .iter()
        .filter(|n| region_of(&n.pos, lambda) == region)
        .map(|n| initial_load_node(n.id, queries))
        .fold(0.0, |a, l| a + l)
}

pub fn initial_loads(net: &Network, queries: &[Query], lambda: f64) -> LoadMap {
    let per_node = net.nodes().iter().map(|n| (n.id, initial_load_node(n.id, queries))).collect();
    LoadMap::from_nodes(net, lambda, per_node)
}

/// Relay load of a node: for every query whose tree contains the node, the
/// number of that query's data units the node forwards per period
/// (its own plus those from its subtree) times `χ/p`.
///
/// The sink's value is the total it receives; it never transmits.
pub fn relay_load_node(node: NodeId, queries: &[Query], trees: &BTreeMap<u32, RoutingTree>) -> f64 {
    queries
        .iter()
        .filter_map(|q| trees.get(&q.id).map(|t| t.sources_below(node) as f64 * q.unit_load()))
        .fold(0.0, |a, l| a + l)
}

pub fn relay_loads(net: &Network, queries: &[Query], trees: &BTreeMap<u32, RoutingTree>, lambda: f64) -> LoadMap {
    let per_node = net.nodes().iter().map(|n| (n.id, relay_load_node(n.id, queries, trees))).collect();
    LoadMap::from_nodes(net, lambda, per_node)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Violation {
    /// Total load at the sink exceeds one.
    SinkOverload { load: f64 },
    /// A region's load exceeds the concurrency limit `c1`.
    RegionOverload { region: RegionIndex, load: f64, limit: f64 },
    /// Total load exceeds `0.69/(c2·c3)`.
    AboveThreshold { load: f64, threshold: f64 },
    /// Relative deadline shorter than `c2·T·2R`.
    DeadlineTooShort { query: u32, deadline: f64, required: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SinkOverload { load } => write!(f, "sink load {} > 1", fmt_num(*load)),
            Violation::RegionOverload { region, load, limit } => {
                write!(f, "region {region} load {} > c1 = {}", fmt_num(*load), fmt_num(*limit))
            }
            Violation::AboveThreshold { load, threshold } => {
                write!(f, "total load {} > {}", fmt_num(*load), fmt_num(*threshold))
            }
            Violation::DeadlineTooShort { query, deadline, required } => {
                write!(f, "query {query} deadline {} < {}", fmt_num(*deadline), fmt_num(*required))
            }
        }
    }
}

/// Compact number formatting for diagnostics: up to 6 significant
/// decimals, no trailing zeros.
pub fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e9) {
        return format!("{v:.4e}");
    }
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "violations", rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail(Vec<Violation>),
}

impl Verdict {
    fn from_violations(v: Vec<Violation>) -> Self {
        if v.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail(v)
        }
    }

    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Verdict::Pass => &[],
            Verdict::Fail(v) => v,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail(v) => {
                let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                write!(f, "FAIL ({})", parts.join("; "))
            }
        }
    }
}

/// Relative slack used when comparing loads and deadlines against their bounds.
const SLACK: f64 = 1e-12;

fn exceeds(value: f64, bound: f64) -> bool {
    value > bound + SLACK * bound.abs().max(1.0)
}

/// Necessary condition: every interference-aware region's initial load is
/// at most `c1` and the sink's load is at most one.
pub fn necessary_condition(net: &Network, queries: &[Query], model: &InterferenceModel) -> Result<Verdict> {
    let c1 = model.c1()? as f64;
    let lambda = interference_radius(model, net.tx_range());
    let loads = initial_loads(net, queries, lambda);
    let mut violations: Vec<Violation> = loads
        .per_region
        .iter()
        .filter(|(_, &l)| exceeds(l, c1))
        .map(|(&region, &load)| Violation::RegionOverload { region, load, limit: c1 })
        .collect();
    let total = total_load(queries);
    if exceeds(total, 1.0) {
        violations.push(Violation::SinkOverload { load: total });
    }
    Ok(Verdict::from_violations(violations))
}

/// Sufficient condition: `Σ_i |S_i|·χ_i/p_i ≤ 0.69/(c2·c3)`.
pub fn sufficient_condition(queries: &[Query], model: &InterferenceModel) -> Result<Verdict> {
    let threshold = model.sufficient_threshold()?;
    let load = total_load(queries);
    Ok(if exceeds(load, threshold) {
        Verdict::Fail(vec![Violation::AboveThreshold { load, threshold }])
    } else {
        Verdict::Pass
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    /// Hop eccentricity of the sink.
    pub radius: usize,
    /// `c2 · T · 2R`.
    pub required: f64,
    /// Set when `T` does not exceed every query period.
    pub frame_not_above_periods: bool,
    pub verdicts: Vec<(u32, Verdict)>,
}

impl DelayReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|(_, v)| v.passed())
    }
}

/// Per-query delay test `d_i ≥ c2 · T · 2R`.
pub fn delay_feasible(net: &Network, queries: &[Query], model: &InterferenceModel, frame_t: f64) -> Result<DelayReport> {
    if !(frame_t > 0.0 && frame_t.is_finite()) {
        return Err(Error::InvalidInput(format!("frame length must be positive, got {frame_t}")));
    }
    let radius = net.sink_eccentricity();
    let required = model.c2()? as f64 * frame_t * 2.0 * radius as f64;
    let verdicts = queries
        .iter()
        .map(|q| {
            let v = if q.deadline < required - SLACK * required {
                Verdict::Fail(vec![Violation::DeadlineTooShort { query: q.id, deadline: q.deadline, required }])
            } else {
                Verdict::Pass
            };
            (q.id, v)
        })
        .collect();
    let frame_not_above_periods = queries.iter().any(|q| frame_t <= q.period);
    Ok(DelayReport { radius, required, frame_not_above_periods, verdicts })
}

/// Liu–Layland utilization bound `n·(2^(1/n) − 1)`.
pub fn rm_utilization_bound(n: usize) -> f64 {
    assert!(n >= 1, "utilization bound needs at least one flow");
    let n = n as f64;
    n * (2f64.powf(1.0 / n) - 1.0)
}
