//! Deterministic discrete-event simulation of frame-scheduled data
//! collection.

mod audit;
mod engine;
mod fixture;
mod sweep;

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{InterferenceModel, Network, Node, NodeId};
use crate::queries::{total_load, Query};
use crate::routing::reduced_graph;

pub use audit::{interference_audit, AuditViolation};
pub use engine::{DropReason, RoundRecord, TxRecord, MIN_LINK_QUALITY};
pub use fixture::{
    build_tightness_fixture, fixture_region, relay_overloaded_regions, tightness_fixture, FixtureQuery,
    TightnessFixture,
};
pub use sweep::{run_sweep, SweepKind, SweepRow, SweepSpec, SWEEP_CSV_HEADER};

use engine::{Admission, Engine, EngineParams};

/// How many sources each generated query gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSelection {
    /// Uniform count between 1 and half the network size.
    RandomCount,
    /// `round(fraction · n)` sources.
    FixedFraction { fraction: f64 },
    /// Exactly `count` sources.
    Count { count: usize },
}

/// Distributions for generated queries. The deadline is
/// `deadline_factor · c2 · T · 2R` for the generated network's sink radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryGen {
    pub chi: f64,
    pub period_min: f64,
    pub period_max: f64,
    pub deadline_factor: f64,
}

impl Default for QueryGen {
    fn default() -> Self {
        QueryGen { chi: 0.1, period_min: 20.0, period_max: 40.0, deadline_factor: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub width: f64,
    pub height: f64,
    pub node_count: usize,
    pub tx_range: f64,
    pub model: InterferenceModel,
    pub frame_t: f64,
    pub max_queries: usize,
    /// Packets per node; `None` means unbounded.
    pub buffer_limit: Option<usize>,
    pub source_selection: SourceSelection,
    pub duration: f64,
    pub loss_scale: f64,
    /// Drop packets whose deadline has passed instead of forwarding them.
    pub drop_expired: bool,
    pub query_gen: QueryGen,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 1,
            width: 400.0,
            height: 400.0,
            node_count: 100,
            tx_range: 50.0,
            model: InterferenceModel::rts_cts(),
            frame_t: 10.0,
            max_queries: 20,
            buffer_limit: Some(256),
            source_selection: SourceSelection::RandomCount,
            duration: 3000.0,
            loss_scale: 0.0,
            drop_expired: true,
            query_gen: QueryGen::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.width) || !pos(self.height) || !pos(self.tx_range) {
            return Err(Error::InvalidInput("area and range must be positive".into()));
        }
        if self.node_count == 0 {
            return Err(Error::InvalidInput("node count must be at least 1".into()));
        }
        if !pos(self.frame_t) || !pos(self.duration) {
            return Err(Error::InvalidInput("frame length and duration must be positive".into()));
        }
        if self.buffer_limit == Some(0) {
            return Err(Error::InvalidInput("buffer limit must be at least 1".into()));
        }
        if !(self.loss_scale >= 0.0 && self.loss_scale.is_finite()) {
            return Err(Error::InvalidInput("loss scale must be non-negative".into()));
        }
        let g = &self.query_gen;
        if !pos(g.chi) || !pos(g.period_min) || g.period_max < g.period_min || !pos(g.deadline_factor) {
            return Err(Error::InvalidInput("query generator needs positive chi, periods and deadline factor".into()));
        }
        match self.source_selection {
            SourceSelection::FixedFraction { fraction } if !(fraction > 0.0 && fraction <= 1.0) => {
                return Err(Error::InvalidInput(format!("source fraction must lie in (0, 1], got {fraction}")));
            }
            SourceSelection::Count { count: 0 } => {
                return Err(Error::InvalidInput("source count must be at least 1".into()));
            }
            _ => {}
        }
        self.model.validate()?;
        self.model.c2()?;
        Ok(())
    }
}

/// Knobs of a simulation over a given network and query set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub frame_t: f64,
    pub buffer_limit: Option<usize>,
    pub loss_scale: f64,
    pub drop_expired: bool,
    pub duration: f64,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            frame_t: 1.0,
            buffer_limit: None,
            loss_scale: 0.0,
            drop_expired: true,
            duration: 1000.0,
            seed: 1,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub id: u32,
    pub released_at: f64,
    pub load: f64,
    pub rounds: usize,
    pub successful_rounds: usize,
    pub success_ratio: f64,
    pub max_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub seed: u64,
    pub nodes: usize,
    pub sink_radius: usize,
    pub tree_depth: usize,
    pub queries_released: usize,
    /// `Σ|S|χ/p` over released queries.
    pub offered_load: f64,
    /// `Σ|S|χ/p` over every query the run could release.
    pub demand: f64,
    pub rounds: usize,
    pub successful_rounds: usize,
    pub success_ratio: f64,
    pub transmissions: u64,
    pub failed_attempts: u64,
    pub drops_buffer: u64,
    pub drops_expired: u64,
    pub end_time: f64,
    pub trace_hash: String,
    pub per_query: Vec<QueryMetrics>,
}

impl Metrics {
    pub fn drops(&self) -> u64 {
        self.drops_buffer + self.drops_expired
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: Metrics,
    pub rounds: Vec<RoundRecord>,
    /// Populated when trace recording is on.
    pub trace: Vec<TxRecord>,
    pub trace_lines: Vec<String>,
    pub network: Network,
    pub queries: Vec<Query>,
}

/// Successful rounds over all rounds; 1.0 when there are none.
pub fn success_ratio(records: &[RoundRecord]) -> f64 {
    if records.is_empty() {
        return 1.0;
    }
    records.iter().filter(|r| r.success).count() as f64 / records.len() as f64
}

/// Network the scheduler routes on: the reduced graph under PhIM, the
/// network itself otherwise.
pub fn routing_network(net: &Network, model: &InterferenceModel) -> Result<Network> {
    match model {
        InterferenceModel::Phim(p) => reduced_graph(net, p, p.shrink),
        _ => Ok(net.clone()),
    }
}

fn check_queries(net: &Network, queries: &[Query]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for q in queries {
        q.validate()?;
        if !seen.insert(q.id) {
            return Err(Error::InvalidInput(format!("duplicate query id {}", q.id)));
        }
        if let Some(s) = q.sources.iter().find(|s| !net.contains(**s)) {
            return Err(Error::UnknownNode(*s));
        }
    }
    Ok(())
}

/// Simulates `queries` on `net`, each active from its own release time.
/// Only rounds whose deadline falls inside the run are counted.
pub fn simulate(net: &Network, model: &InterferenceModel, queries: &[Query], opts: &RunOptions) -> Result<SimOutcome> {
    model.validate()?;
    check_queries(net, queries)?;
    let routed = routing_network(net, model)?;
    let params = EngineParams {
        frame_t: opts.frame_t,
        buffer_limit: opts.buffer_limit,
        loss_scale: opts.loss_scale,
        drop_expired: opts.drop_expired,
        duration: opts.duration,
        record_trace: opts.record_trace,
    };
    if !(opts.frame_t > 0.0 && opts.duration > 0.0) || opts.buffer_limit == Some(0) {
        return Err(Error::InvalidInput("frame length, duration and buffer limit must be positive".into()));
    }
    let rng = stream(opts.seed, 2);
    let engine = Engine::new(&routed, *model, params, Admission::Fixed, queries.to_vec(), rng)?;
    let out = engine.run()?;
    Ok(finish(opts.seed, routed, total_load(queries), out))
}

/// Generates a topology and queries from `cfg`, then runs the staggered
/// release flow: query 0 starts at time 0 and one more query is released
/// at a frame boundary whenever every active query's latest completed round
/// succeeded. The run ends at `duration` or once every active query's
/// latest completed round failed.
pub fn run_scenario(cfg: &SimConfig) -> Result<SimOutcome> {
    scenario(cfg, false)
}

/// Same as [`run_scenario`] but keeps the transmission trace.
pub fn run_scenario_traced(cfg: &SimConfig) -> Result<SimOutcome> {
    scenario(cfg, true)
}

fn scenario(cfg: &SimConfig, record_trace: bool) -> Result<SimOutcome> {
    cfg.validate()?;
    let net = generate_topology(cfg)?;
    let routed = routing_network(&net, &cfg.model)?;
    let queries = generate_queries(cfg, &routed)?;
    let params = EngineParams {
        frame_t: cfg.frame_t,
        buffer_limit: cfg.buffer_limit,
        loss_scale: cfg.loss_scale,
        drop_expired: cfg.drop_expired,
        duration: cfg.duration,
        record_trace,
    };
    let demand = total_load(&queries[..cfg.max_queries.min(queries.len())]);
    let admission = Admission::Staggered { max_queries: cfg.max_queries };
    let engine = Engine::new(&routed, cfg.model, params, admission, queries, stream(cfg.seed, 2))?;
    let out = engine.run()?;
    Ok(finish(cfg.seed, routed, demand, out))
}

fn finish(seed: u64, net: Network, demand: f64, out: engine::EngineOutput) -> SimOutcome {
    let mut per_query = Vec::new();
    for q in &out.released {
        let rs: Vec<&RoundRecord> = out.rounds.iter().filter(|r| r.query_id == q.id).collect();
        let ok = rs.iter().filter(|r| r.success).count();
        let max_latency = rs
            .iter()
            .filter(|r| r.success)
            .filter_map(|r| r.last_delivery.map(|t| t - r.released_at))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        per_query.push(QueryMetrics {
            id: q.id,
            released_at: q.release,
            load: q.load(),
            rounds: rs.len(),
            successful_rounds: ok,
            success_ratio: if rs.is_empty() { 1.0 } else { ok as f64 / rs.len() as f64 },
            max_latency,
        });
    }
    let successful = out.rounds.iter().filter(|r| r.success).count();
    let metrics = Metrics {
        seed,
        nodes: net.len(),
        sink_radius: net.sink_eccentricity(),
        tree_depth: out.max_tree_depth,
        queries_released: out.released.len(),
        offered_load: out.released.iter().map(Query::load).fold(0.0, |a, l| a + l),
        demand,
        rounds: out.rounds.len(),
        successful_rounds: successful,
        success_ratio: success_ratio(&out.rounds),
        transmissions: out.transmissions,
        failed_attempts: out.failed_attempts,
        drops_buffer: out.drops_buffer,
        drops_expired: out.drops_expired,
        end_time: out.end_time,
        trace_hash: out.trace_hash,
        per_query,
    };
    SimOutcome {
        metrics,
        rounds: out.rounds,
        trace: out.trace,
        trace_lines: out.trace_lines,
        network: net,
        queries: out.released,
    }
}

/// Independent RNG stream per purpose so that, for one seed, the topology
/// does not change when query generation changes.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Random connected deployment: the sink is placed at the center of the
/// area, then every further node is drawn uniformly and kept only if it is
/// within range of a node already placed.
pub fn generate_topology(cfg: &SimConfig) -> Result<Network> {
    let mut rng = stream(cfg.seed, 0);
    let mut nodes = vec![Node::new(0, cfg.width / 2.0, cfg.height / 2.0)];
    let mut attempts = 0u64;
    while nodes.len() < cfg.node_count {
        attempts += 1;
        if attempts > 1_000_000 * cfg.node_count as u64 {
            return Err(Error::InvalidInput("could not place a connected deployment".into()));
        }
        let x = rng.gen_range(0.0..cfg.width);
        let y = rng.gen_range(0.0..cfg.height);
        let near = nodes.iter().any(|n| {
            let d = ((n.pos.x - x).powi(2) + (n.pos.y - y).powi(2)).sqrt();
            d <= cfg.tx_range && d > 0.0
        });
        if near {
            nodes.push(Node::new(nodes.len() as u32, x, y));
        }
    }
    Network::new(nodes, NodeId(0), cfg.tx_range)
}

/// `max_queries` queries with ids `0..max_queries` and release time 0.
pub fn generate_queries(cfg: &SimConfig, net: &Network) -> Result<Vec<Query>> {
    let mut rng = stream(cfg.seed, 1);
    let g = &cfg.query_gen;
    let c2 = cfg.model.c2()? as f64;
    let radius = net.sink_eccentricity().max(1) as f64;
    let deadline = g.deadline_factor * c2 * cfg.frame_t * 2.0 * radius;
    let candidates: Vec<NodeId> = net.nodes().iter().map(|n| n.id).filter(|&id| id != net.sink()).collect();
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let n = candidates.len();
    let mut out = Vec::with_capacity(cfg.max_queries);
    for id in 0..cfg.max_queries {
        let count = match cfg.source_selection {
            SourceSelection::RandomCount => rng.gen_range(1..=(net.len() / 2).max(1)),
            SourceSelection::FixedFraction { fraction } => (fraction * net.len() as f64).round() as usize,
            SourceSelection::Count { count } => count,
        }
        .clamp(1, n);
        let sources = sample(&mut rng, n, count).into_iter().map(|i| candidates[i]).collect();
        let period = if g.period_max > g.period_min { rng.gen_range(g.period_min..g.period_max) } else { g.period_min };
        out.push(Query::new(id as u32, sources, g.chi, period, 0.0, deadline, 1.0)?);
    }
    Ok(out)
}

/// Per-query success ratios keyed by id.
pub fn per_query_ratio(records: &[RoundRecord]) -> BTreeMap<u32, f64> {
    let mut tally: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = tally.entry(r.query_id).or_default();
        e.1 += 1;
        if r.success {
            e.0 += 1;
        }
    }
    tally.into_iter().map(|(k, (s, t))| (k, s as f64 / t as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn round(q: u32, success: bool) -> RoundRecord {
        RoundRecord {
            query_id: q,
            instance: 1,
            released_at: 0.0,
            deadline_at: 1.0,
            delivered_sources: BTreeSet::new(),
            last_delivery: None,
            success,
        }
    }

    #[test]
    fn success_ratio_definition() {
        let mut rs: Vec<RoundRecord> = (0..8).map(|_| round(0, true)).collect();
        rs.extend((0..2).map(|_| round(0, false)));
        assert_eq!(success_ratio(&rs), 0.8);
        assert_eq!(success_ratio(&[round(0, false), round(1, false)]), 0.0);
        assert_eq!(success_ratio(&[]), 1.0);
        let mixed = [round(0, true), round(1, false), round(1, true), round(2, true)];
        assert_eq!(success_ratio(&mixed), 0.75);
        assert_eq!(per_query_ratio(&mixed)[&1], 0.5);
    }

    #[test]
    fn single_hop_query_always_succeeds() {
        let net = Network::new(vec![Node::new(0, 0.0, 0.0), Node::new(1, 20.0, 0.0)], NodeId(0), 50.0).unwrap();
        let q = Query::new(0, [NodeId(1)].into(), 0.01, 10.0, 0.0, 10.0, 1.0).unwrap();
        let opts = RunOptions { duration: 200.0, record_trace: true, ..Default::default() };
        let out = simulate(&net, &InterferenceModel::rts_cts(), &[q], &opts).unwrap();
        assert_eq!(out.metrics.rounds, 20);
        assert_eq!(out.metrics.success_ratio, 1.0);
        assert_eq!(out.metrics.drops(), 0);
        // first packet leaves in node 1's first window, at time 0
        assert_eq!(out.trace[0].start, 0.0);
        assert_eq!(out.trace[0].receiver, NodeId(0));
    }

    #[test]
    fn no_queries_reports_full_ratio() {
        let net = Network::new(vec![Node::new(0, 0.0, 0.0), Node::new(1, 20.0, 0.0)], NodeId(0), 50.0).unwrap();
        let out = simulate(&net, &InterferenceModel::rts_cts(), &[], &RunOptions::default()).unwrap();
        assert_eq!(out.metrics.rounds, 0);
        assert_eq!(out.metrics.success_ratio, 1.0);
    }

    #[test]
    fn sink_sources_deliver_immediately() {
        let net = Network::new(vec![Node::new(0, 0.0, 0.0), Node::new(1, 20.0, 0.0)], NodeId(0), 50.0).unwrap();
        let q = Query::new(0, [NodeId(0)].into(), 0.5, 10.0, 0.0, 1.0, 1.0).unwrap();
        let out = simulate(&net, &InterferenceModel::rts_cts(), &[q], &RunOptions::default()).unwrap();
        assert_eq!(out.metrics.success_ratio, 1.0);
        assert_eq!(out.metrics.transmissions, 0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SimConfig { buffer_limit: Some(0), ..Default::default() };
        assert!(run_scenario(&cfg).is_err());
        let cfg = SimConfig { node_count: 0, ..Default::default() };
        assert!(run_scenario(&cfg).is_err());
        let cfg = SimConfig { model: InterferenceModel::Prim { rho: 0.5 }, ..Default::default() };
        assert!(run_scenario(&cfg).is_err());
    }

    #[test]
    fn topology_is_connected_and_seeded() {
        let cfg = SimConfig { node_count: 60, ..Default::default() };
        let a = generate_topology(&cfg).unwrap();
        let b = generate_topology(&cfg).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.len(), 60);
        let c = generate_topology(&SimConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(a.nodes(), c.nodes());
    }

    #[test]
    fn unknown_source_rejected() {
        let net = Network::new(vec![Node::new(0, 0.0, 0.0), Node::new(1, 20.0, 0.0)], NodeId(0), 50.0).unwrap();
        let q = Query::new(0, [NodeId(9)].into(), 0.5, 10.0, 0.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            simulate(&net, &InterferenceModel::rts_cts(), &[q], &RunOptions::default()),
            Err(Error::UnknownNode(NodeId(9)))
        ));
    }
}
