//! Geometric network model: node placement, link derivation, interference
//! predicates, the interference-aware region grid and the model constants
//! `c1`, `c2`, `c3`, `K` and `λ`.
//!
//! All values are immutable after construction.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a sensor node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point,
}

impl Node {
    pub const fn new(id: u32, x: f64, y: f64) -> Self {
        Node { id: NodeId(id), pos: Point::new(x, y) }
    }
}

/// A directed transmission `sender -> receiver`, carrying both endpoints'
/// positions so that interference predicates are purely geometric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub sender: Node,
    pub receiver: Node,
}

impl Link {
    pub fn new(sender: Node, receiver: Node) -> Self {
        Link { sender, receiver }
    }

    pub fn length(&self) -> f64 {
        self.sender.pos.dist(&self.receiver.pos)
    }

    fn shares_endpoint(&self, other: &Link) -> bool {
        let a = [self.sender.id, self.receiver.id];
        let b = [other.sender.id, other.receiver.id];
        a.iter().any(|x| b.contains(x))
    }
}

/// Communication graph `G = (V, E)` with a distinguished sink.
///
/// Nodes are stored sorted by id; adjacency is kept by dense index and
/// every neighbor list is sorted ascending, so traversals that visit
/// neighbors in list order break ties by lower node id.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<Node>,
    index: BTreeMap<NodeId, usize>,
    sink: NodeId,
    tx_range: f64,
    adj: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network whose links are every pair within `tx_range`.
    pub fn new(nodes: Vec<Node>, sink: NodeId, tx_range: f64) -> Result<Self> {
        let links = build_links(&nodes, tx_range)?;
        Self::with_links(nodes, sink, tx_range, &links)
    }

    /// Builds a network from an explicit link set. Every link must be no
    /// longer than `tx_range` and the resulting graph must be connected.
    pub fn with_links(
        mut nodes: Vec<Node>,
        sink: NodeId,
        tx_range: f64,
        links: &[(NodeId, NodeId)],
    ) -> Result<Self> {
        if !(tx_range > 0.0 && tx_range.is_finite()) {
            return Err(Error::InvalidInput(format!("transmission range must be positive, got {tx_range}")));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidInput("network has no nodes".into()));
        }
        nodes.sort_by_key(|n| n.id);
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !(n.pos.x.is_finite() && n.pos.y.is_finite()) {
                return Err(Error::InvalidInput(format!("node {} has a non-finite position", n.id)));
            }
            if index.insert(n.id, i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate node id {}", n.id)));
            }
        }
        if !index.contains_key(&sink) {
            return Err(Error::UnknownNode(sink));
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        for &(a, b) in links {
            let ia = *index.get(&a).ok_or(Error::UnknownNode(a))?;
            let ib = *index.get(&b).ok_or(Error::UnknownNode(b))?;
            if ia == ib {
                return Err(Error::InvalidInput(format!("self-link on node {a}")));
            }
            let d = nodes[ia].pos.dist(&nodes[ib].pos);
            if d > tx_range {
                return Err(Error::InvalidInput(format!(
                    "link {a}-{b} has length {d} > transmission range {tx_range}"
                )));
            }
            adj[ia].push(ib);
            adj[ib].push(ia);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        let comps = components(&adj);
        if comps.len() > 1 {
            return Err(Error::Disconnected(
                comps.into_iter().map(|c| c.into_iter().map(|i| nodes[i].id).collect()).collect(),
            ));
        }
        Ok(Network { nodes, index, sink, tx_range, adj })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn sink_index(&self) -> usize {
        self.index[&self.sink]
    }

    pub fn tx_range(&self) -> f64 {
        self.tx_range
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn node_at(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    /// Neighbor indices of the node at `idx`, ascending.
    pub fn neighbors_of(&self, idx: usize) -> &[usize] {
        &self.adj[idx]
    }

    pub fn neighbors(&self, id: NodeId) -> Vec<NodeId> {
        match self.index_of(id) {
            Some(i) => self.adj[i].iter().map(|&j| self.nodes[j].id).collect(),
            None => Vec::new(),
        }
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.adj[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    /// Undirected links as `(lower id, higher id)` pairs, sorted.
    pub fn links(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, list) in self.adj.iter().enumerate() {
            for &j in list {
                if i < j {
                    out.push((self.nodes[i].id, self.nodes[j].id));
                }
            }
        }
        out
    }

    pub fn link_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Directed link between two existing nodes (not required to be adjacent).
    pub fn link(&self, sender: NodeId, receiver: NodeId) -> Result<Link> {
        let s = *self.node(sender).ok_or(Error::UnknownNode(sender))?;
        let r = *self.node(receiver).ok_or(Error::UnknownNode(receiver))?;
        Ok(Link::new(s, r))
    }

    /// Hop distance from the sink to every node (by index).
    pub fn hop_distances(&self) -> Vec<usize> {
        bfs_levels(&self.adj, self.sink_index())
            .into_iter()
            .map(|d| d.expect("network is connected"))
            .collect()
    }

    /// Hop eccentricity of the sink: the largest hop distance sink -> node.
    pub fn sink_eccentricity(&self) -> usize {
        self.hop_distances().into_iter().max().unwrap_or(0)
    }
}

/// BFS levels from `root` over an adjacency list; `None` for unreachable.
pub(crate) fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = std::collections::VecDeque::new();
    level[root] = Some(0);
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        let next = level[u].unwrap() + 1;
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(next);
                queue.push_back(v);
            }
        }
    }
    level
}

/// Connected components as sorted index lists, ordered by smallest member.
pub(crate) fn components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    let mut out = Vec::new();
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut i = 0;
        while i < comp.len() {
            let u = comp[i];
            i += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Derives the unit-disk link set: a link iff Euclidean distance ≤ `tx_range`.
/// Fails when the resulting graph is disconnected.
pub fn build_links(nodes: &[Node], tx_range: f64) -> Result<Vec<(NodeId, NodeId)>> {
    let mut sorted: Vec<Node> = nodes.to_vec();
    sorted.sort_by_key(|n| n.id);
    let n = sorted.len();
    let mut links = Vec::new();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if sorted[i].pos.dist(&sorted[j].pos) <= tx_range {
                links.push((sorted[i].id, sorted[j].id));
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let comps = components(&adj);
    if comps.len() > 1 {
        return Err(Error::Disconnected(
            comps.into_iter().map(|c| c.into_iter().map(|i| sorted[i].id).collect()).collect(),
        ));
    }
    Ok(links)
}

/// Parameters of the physical (SINR) interference model.
///
/// `shrink` is the factor applied to the maximum transmission radius when
/// building the reduced communication graph: routing only uses links of
/// length at most `shrink · r`, which leaves the SINR margin that the
/// region-coloring separation `K` is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhimParams {
    pub power: f64,
    pub noise: f64,
    pub beta: f64,
    pub kappa: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
}

pub const DEFAULT_SHRINK: f64 = 0.7;

fn default_shrink() -> f64 {
    DEFAULT_SHRINK
}

impl PhimParams {
    pub fn new(power: f64, noise: f64, beta: f64, kappa: f64) -> Self {
        PhimParams { power, noise, beta, kappa, shrink: DEFAULT_SHRINK }
    }

    /// Parameters whose reduced-graph link bound `shrink · r` equals `tx_range`,
    /// so that a unit-disk network of that range is routed without losing links.
    pub fn for_range(tx_range: f64, beta: f64, kappa: f64, shrink: f64) -> Self {
        let r = tx_range / shrink;
        let power = 1.0;
        let noise = power / (beta * r.powf(kappa));
        PhimParams { power, noise, beta, kappa, shrink }
    }

    /// Maximum transmission radius `r = (P / (N0 β))^(1/κ)`.
    pub fn max_radius(&self) -> f64 {
        (self.power / (self.noise * self.beta)).powf(1.0 / self.kappa)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.power) || !ok(self.noise) || !ok(self.beta) {
            return Err(Error::InvalidModel("PhIM power, noise and beta must be positive".into()));
        }
        if !(self.kappa > 2.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidModel(format!("PhIM path-loss exponent must exceed 2, got {}", self.kappa)));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(Error::InvalidModel(format!("PhIM shrink factor must lie in (0, 1], got {}", self.shrink)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterferenceModel {
    /// Protocol model: a receiver is disturbed by any other sender within
    /// `rho · tx_range`.
    Prim { rho: f64 },
    /// RTS/CTS: nodes within the interference range of either endpoint of an
    /// active link stay silent. `None` means the interference range equals
    /// the transmission range.
    RtsCts { interference_range: Option<f64> },
    Phim(PhimParams),
}

impl InterferenceModel {
    pub fn rts_cts() -> Self {
        InterferenceModel::RtsCts { interference_range: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InterferenceModel::Prim { .. } => "prim",
            InterferenceModel::RtsCts { .. } => "rtscts",
            InterferenceModel::Phim(_) => "phim",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InterferenceModel::Prim { rho } => {
                if !(*rho > 1.0 && rho.is_finite()) {
                    return Err(Error::InvalidModel(format!("PrIM interference ratio rho must exceed 1, got {rho}")));
                }
                Ok(())
            }
            InterferenceModel::RtsCts { interference_range } => match interference_range {
                Some(r) if !(*r > 0.0 && r.is_finite()) => {
                    Err(Error::InvalidModel(format!("RTS/CTS interference range must be positive, got {r}")))
                }
                _ => Ok(()),
            },
            InterferenceModel::Phim(p) => p.validate(),
        }
    }

    /// Maximum number of concurrent transmitters inside one
    /// interference-aware region.
    pub fn c1(&self) -> Result<u32> {
        match self {
            InterferenceModel::Prim { rho } => {
                if rho.is_nan() || *rho <= 1.0 {
                    return Err(Error::InvalidModel(format!("c1 under PrIM needs rho > 1, got {rho}")));
                }
                let v = 16.0 * rho * rho / ((rho - 1.0) * (rho - 1.0));
                Ok(clamp_count(v.floor()))
            }
            InterferenceModel::RtsCts { .. } => Ok(36),
            InterferenceModel::Phim(p) => {
                let v = 2f64.powf(p.kappa) * p.power / (p.noise * p.beta * p.beta);
                Ok(clamp_count(v.floor()))
            }
        }
    }

    /// Number of colors of the region coloring, `K²`.
    pub fn c2(&self) -> Result<u32> {
        let k = self.k_factor()?;
        Ok(k * k)
    }

    /// Color-lattice spacing `K`. Same-colored regions are `K` cells apart in
    /// each axis.
    ///
    /// For PrIM and RTS/CTS `K = 2`: any two points in regions two cells
    /// apart are farther than `λ`, which rules out interference.
    ///
    /// For PhIM, `K` is the smallest integer for which the worst-case
    /// interference from one sender in every same-colored region cannot push
    /// a reduced-graph link below `β`. With `λ = r`, link length at most
    /// `s·r`, and `8m` same-colored regions at lattice ring `m`, each at
    /// receiver distance greater than `(mK − 1 − s)·r`, the requirement
    /// `P (s r)^-κ ≥ β (N0 + I)` reduces to
    ///
    /// ```text
    /// s^-κ − 1 ≥ β · Σ_{m≥1} 8m (mK − 1 − s)^-κ
    /// ```
    ///
    /// which does not depend on `P/N0`. The series is bounded above by its
    /// first 1000 terms plus the integral of the (decreasing) tail.
    pub fn k_factor(&self) -> Result<u32> {
        match self {
            InterferenceModel::Prim { .. } | InterferenceModel::RtsCts { .. } => {
                self.validate()?;
                Ok(2)
            }
            InterferenceModel::Phim(p) => {
                p.validate()?;
                let margin = p.shrink.powf(-p.kappa) - 1.0;
                if margin <= 0.0 {
                    return Err(Error::InvalidModel(
                        "PhIM admits no finite color separation: shrink factor leaves no SINR margin".into(),
                    ));
                }
                (2..=MAX_PHIM_K)
                    .find(|&k| p.beta * phim_interference_bound(k, p.shrink, p.kappa) <= margin)
                    .ok_or_else(|| {
                        Error::InvalidModel(format!(
                            "PhIM admits no color separation K <= {MAX_PHIM_K} for beta={} kappa={}",
                            p.beta, p.kappa
                        ))
                    })
            }
        }
    }

    /// Upper bound on CDS nodes inside one interference-aware region, plus one.
    pub fn c3(&self) -> Result<u32> {
        match self {
            InterferenceModel::Prim { rho } => {
                if rho.is_nan() || *rho <= 1.0 {
                    return Err(Error::InvalidModel(format!("c3 under PrIM needs rho > 1, got {rho}")));
                }
                // ceil: c3 is an upper bound, so rounding up stays conservative.
                Ok(clamp_count((8.0 * (rho + 4.0) * (rho + 4.0)).ceil()))
            }
            InterferenceModel::RtsCts { .. } | InterferenceModel::Phim(_) => Ok(200),
        }
    }

    /// `0.69 / (c2 · c3)`: the total-load threshold of the sufficient
    /// schedulability condition.
    pub fn sufficient_threshold(&self) -> Result<f64> {
        Ok(RM_LIMIT / (self.c2()? as f64 * self.c3()? as f64))
    }
}

/// Asymptotic rate-monotonic utilization bound used by the sufficient condition.
pub const RM_LIMIT: f64 = 0.69;

const MAX_PHIM_K: u32 = 256;

fn clamp_count(v: f64) -> u32 {
    if v >= u32::MAX as f64 {
        u32::MAX
    } else {
        (v as u32).max(1)
    }
}

/// Upper bound on `Σ_{m≥1} 8m (mK − 1 − s)^-κ` for `K ≥ 2`, `s < 1`, `κ > 2`.
fn phim_interference_bound(k: u32, shrink: f64, kappa: f64) -> f64 {
    const TERMS: u32 = 1000;
    let k = k as f64;
    let c = 1.0 + shrink;
    let mut sum = 0.0;
    for m in 1..=TERMS {
        let m = m as f64;
        sum += 8.0 * m * (m * k - c).powf(-kappa);
    }
    // ∫_{M}^{∞} 8x (xK − c)^-κ dx with y = xK − c.
    let y0 = TERMS as f64 * k - c;
    let tail = 8.0 / (k * k) * (y0.powf(2.0 - kappa) / (kappa - 2.0) + c * y0.powf(1.0 - kappa) / (kappa - 1.0));
    sum + tail
}

/// Interference-aware radius `λ`: the largest sender-to-sender distance at
/// which two links can still interfere.
///
/// * PrIM: a receiver lies within `tx_range` of its sender and is disturbed
///   by senders within `rho · tx_range`, so by the triangle inequality two
///   senders farther apart than `(1 + rho) · tx_range` never interfere.
/// * RTS/CTS: endpoints of the two links must stay more than the
///   interference range `I` apart; each endpoint is within `tx_range` of its
///   sender, giving `2 · tx_range + I`.
/// * PhIM: the maximum transmission radius `r`.
pub fn interference_radius(model: &InterferenceModel, tx_range: f64) -> f64 {
    match model {
        InterferenceModel::Prim { rho } => tx_range * (1.0 + rho),
        InterferenceModel::RtsCts { interference_range } => 2.0 * tx_range + interference_range.unwrap_or(tx_range),
        InterferenceModel::Phim(p) => p.max_radius(),
    }
}

/// Index of a cell `[v·λ, (v+1)·λ) × [h·λ, (h+1)·λ)` of the region grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionIndex {
    pub v: i64,
    pub h: i64,
}

impl RegionIndex {
    pub const fn new(v: i64, h: i64) -> Self {
        RegionIndex { v, h }
    }
}

impl fmt::Display for RegionIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g({},{})", self.v, self.h)
    }
}

pub fn region_of(pos: &Point, lambda: f64) -> RegionIndex {
    RegionIndex { v: (pos.x / lambda).floor() as i64, h: (pos.y / lambda).floor() as i64 }
}

/// SINR at `link.receiver` when every node of `transmitters` is active.
///
/// Uses the standard path-loss form `P d^-κ` for both signal and
/// interference.
pub fn sinr(transmitters: &[Node], link: &Link, params: &PhimParams) -> Result<f64> {
    if !transmitters.iter().any(|t| t.id == link.sender.id) {
        return Err(Error::InvalidInput(format!("sender {} is not transmitting", link.sender.id)));
    }
    if transmitters.iter().any(|t| t.id == link.receiver.id) {
        return Err(Error::InvalidInput(format!("receiver {} is itself transmitting", link.receiver.id)));
    }
    let d = link.length();
    if d == 0.0 {
        return Err(Error::Degenerate(format!(
            "sender {} and receiver {} share a position",
            link.sender.id, link.receiver.id
        )));
    }
    let rx = &link.receiver.pos;
    let interference: f64 = transmitters
        .iter()
        .filter(|t| t.id != link.sender.id)
        .map(|t| params.power * t.pos.dist(rx).powf(-params.kappa))
        .sum();
    Ok(params.power * d.powf(-params.kappa) / (params.noise + interference))
}

/// Pairwise interference predicate for two concurrent transmissions.
///
/// Links that share a node always conflict (half-duplex radios, one
/// reception at a time).
pub fn conflicts(a: &Link, b: &Link, model: &InterferenceModel, tx_range: f64) -> bool {
    if a.shares_endpoint(b) {
        return true;
    }
    match model {
        InterferenceModel::Prim { rho } => {
            let reach = rho * tx_range;
            a.receiver.pos.dist(&b.sender.pos) <= reach || b.receiver.pos.dist(&a.sender.pos) <= reach
        }
        InterferenceModel::RtsCts { interference_range } => {
            let reach = interference_range.unwrap_or(tx_range);
            let ea = [a.sender.pos, a.receiver.pos];
            let eb = [b.sender.pos, b.receiver.pos];
            ea.iter().any(|p| eb.iter().any(|q| p.dist(q) <= reach))
        }
        InterferenceModel::Phim(p) => {
            let tx = [a.sender, b.sender];
            let below = |l: &Link| sinr(&tx, l, p).map(|s| s < p.beta).unwrap_or(true);
            below(a) || below(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phim_example() -> PhimParams {
        PhimParams::new(1.0, 0.01, 2.0, 2.0)
    }

    #[test]
    fn links_follow_range_threshold() {
        let near = [Node::new(0, 0.0, 0.0), Node::new(1, 49.0, 0.0)];
        assert_eq!(build_links(&near, 50.0).unwrap(), vec![(NodeId(0), NodeId(1))]);
        let far = [Node::new(0, 0.0, 0.0), Node::new(1, 51.0, 0.0)];
        assert!(matches!(build_links(&far, 50.0), Err(Error::Disconnected(c)) if c.len() == 2));
        let line = [Node::new(0, 0.0, 0.0), Node::new(1, 40.0, 0.0), Node::new(2, 80.0, 0.0)];
        assert_eq!(
            build_links(&line, 50.0).unwrap(),
            vec![(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))]
        );
    }

    #[test]
    fn disconnected_error_names_components() {
        let nodes = vec![Node::new(0, 0.0, 0.0), Node::new(1, 1.0, 0.0), Node::new(7, 100.0, 0.0)];
        let err = Network::new(nodes, NodeId(0), 2.0).unwrap_err();
        assert_eq!(err, Error::Disconnected(vec![vec![NodeId(0), NodeId(1)], vec![NodeId(7)]]));
        assert!(err.to_string().contains("{7}"));
    }

    #[test]
    fn explicit_links_must_respect_range() {
        let nodes = vec![Node::new(0, 0.0, 0.0), Node::new(1, 3.0, 0.0)];
        assert!(Network::with_links(nodes, NodeId(0), 2.0, &[(NodeId(0), NodeId(1))]).is_err());
    }

    #[test]
    fn radius_per_model() {
        assert!((phim_example().max_radius() - 50f64.sqrt()).abs() < 1e-12);
        let unit = PhimParams::new(2.0, 0.5, 4.0, 3.3);
        assert!((unit.max_radius() - 1.0).abs() < 1e-12);
        assert_eq!(interference_radius(&InterferenceModel::Prim { rho: 2.0 }, 1.0), 3.0);
        assert_eq!(interference_radius(&InterferenceModel::rts_cts(), 50.0), 150.0);
    }

    #[test]
    fn region_floor_convention() {
        assert_eq!(region_of(&Point::new(0.0, 0.0), 3.0), RegionIndex::new(0, 0));
        assert_eq!(region_of(&Point::new(3.0, 0.0), 3.0), RegionIndex::new(1, 0));
        assert_eq!(region_of(&Point::new(-0.5, 7.0), 3.0), RegionIndex::new(-1, 2));
    }

    #[test]
    fn sinr_examples() {
        let p = phim_example();
        let s = Node::new(0, 0.0, 0.0);
        let r = Node::new(1, 5.0, 0.0);
        let v = sinr(&[s], &Link::new(s, r), &p).unwrap();
        assert!((v - 4.0).abs() < 1e-12);

        let edge = Node::new(2, p.max_radius(), 0.0);
        let v = sinr(&[s], &Link::new(s, edge), &p).unwrap();
        assert!((v - p.beta).abs() < 1e-9);

        let i1 = Node::new(3, 5.0, 10.0);
        let i2 = Node::new(4, 5.0, -10.0);
        let with = sinr(&[s, i1, i2], &Link::new(s, r), &p).unwrap();
        assert!(with < 4.0);
    }

    #[test]
    fn sinr_rejects_degenerate_input() {
        let p = phim_example();
        let s = Node::new(0, 1.0, 1.0);
        let same = Node::new(1, 1.0, 1.0);
        assert!(matches!(sinr(&[s], &Link::new(s, same), &p), Err(Error::Degenerate(_))));
        let r = Node::new(2, 2.0, 1.0);
        assert!(sinr(&[r], &Link::new(s, r), &p).is_err());
    }

    #[test]
    fn prim_receiver_inside_interference_range_conflicts() {
        let m = InterferenceModel::Prim { rho: 2.0 };
        let a = Link::new(Node::new(0, 0.0, 0.0), Node::new(1, 10.0, 0.0));
        let c = Link::new(Node::new(2, 11.0, 0.0), Node::new(3, 20.0, 0.0));
        assert!(conflicts(&a, &c, &m, 50.0));
    }

    #[test]
    fn far_links_never_conflict() {
        let tx = 1.0;
        for m in [
            InterferenceModel::Prim { rho: 2.0 },
            InterferenceModel::rts_cts(),
            InterferenceModel::Phim(PhimParams::new(1.0, 0.01, 2.0, 3.0)),
        ] {
            let lambda = interference_radius(&m, tx).max(tx);
            let len = 0.5f64.min(lambda / 4.0);
            let a = Link::new(Node::new(0, 0.0, 0.0), Node::new(1, len, 0.0));
            let off = 100.0 * lambda;
            let b = Link::new(Node::new(2, off, 0.0), Node::new(3, off + len, 0.0));
            assert!(!conflicts(&a, &b, &m, tx), "{}", m.name());
        }
    }

    #[test]
    fn phim_parallel_links_far_apart_do_not_conflict() {
        let p = PhimParams::new(1.0, 0.01, 2.0, 3.0);
        let r = p.max_radius();
        let m = InterferenceModel::Phim(p);
        let a = Link::new(Node::new(0, 0.0, 0.0), Node::new(1, r / 2.0, 0.0));
        let b = Link::new(Node::new(2, 0.0, 100.0 * r), Node::new(3, r / 2.0, 100.0 * r));
        assert!(!conflicts(&a, &b, &m, r));
    }

    #[test]
    fn shared_endpoint_conflicts() {
        let a = Link::new(Node::new(0, 0.0, 0.0), Node::new(1, 1.0, 0.0));
        let b = Link::new(Node::new(2, 2.0, 0.0), Node::new(1, 1.0, 0.0));
        assert!(conflicts(&a, &b, &InterferenceModel::Prim { rho: 1.01 }, 0.001));
    }

    #[test]
    fn constants_match_closed_forms() {
        assert_eq!(InterferenceModel::rts_cts().c1().unwrap(), 36);
        assert_eq!(InterferenceModel::Prim { rho: 2.0 }.c1().unwrap(), 64);
        assert_eq!(InterferenceModel::Phim(phim_example()).c1().unwrap(), 100);
        assert_eq!(InterferenceModel::Prim { rho: 2.0 }.c2().unwrap(), 4);
        assert_eq!(InterferenceModel::rts_cts().c2().unwrap(), 4);
        assert_eq!(InterferenceModel::rts_cts().k_factor().unwrap(), 2);
        assert_eq!(InterferenceModel::rts_cts().c3().unwrap(), 200);
        assert_eq!(InterferenceModel::Prim { rho: 2.0 }.c3().unwrap(), 288);
        assert_eq!(InterferenceModel::Phim(phim_example()).c3().unwrap(), 200);
    }

    #[test]
    fn prim_constants_reject_small_rho() {
        assert!(InterferenceModel::Prim { rho: 1.0 }.c1().is_err());
        assert!(InterferenceModel::Prim { rho: 0.5 }.c2().is_err());
    }

    #[test]
    fn phim_k_factor_is_finite_and_squared() {
        // P/N0 = 100, beta = 2, kappa = 4, shrink 0.7.
        let m = InterferenceModel::Phim(PhimParams::new(1.0, 0.01, 2.0, 4.0));
        let k = m.k_factor().unwrap();
        assert_eq!(k, 4);
        assert_eq!(m.c2().unwrap(), 16);
    }

    #[test]
    fn phim_k_factor_errors_without_margin() {
        let mut p = PhimParams::new(1.0, 0.01, 2.0, 4.0);
        p.shrink = 1.0;
        assert!(InterferenceModel::Phim(p).k_factor().is_err());
        // kappa must exceed 2 for the interference series to converge.
        assert!(InterferenceModel::Phim(phim_example()).k_factor().is_err());
    }

    #[test]
    fn phim_k_grows_with_beta() {
        let k = |beta: f64| InterferenceModel::Phim(PhimParams::new(1.0, 0.01, beta, 4.0)).k_factor().unwrap();
        assert!(k(2.0) <= k(20.0));
        assert!(k(20.0) <= k(200.0));
    }
}
