//! Routing backbone and per-query collection trees.
//!
//! The backbone is a connected dominating set (CDS) built from a
//! maximal independent set ranked by BFS level from the sink, joined by
//! the BFS parents of the non-root dominators. Redundant members are then
//! pruned as long as the set stays a CDS and no node's tree depth grows.
//! Every node outside the CDS hangs off a neighboring dominator, and each
//! query's tree is the spanning tree with source-free subtrees removed.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::netmodel::{bfs_levels, components, Network, NodeId, PhimParams};
use crate::queries::Query;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cds {
    pub dominators: BTreeSet<NodeId>,
    pub connectors: BTreeSet<NodeId>,
}

impl Cds {
    pub fn members(&self) -> BTreeSet<NodeId> {
        self.dominators.union(&self.connectors).copied().collect()
    }

    pub fn len(&self) -> usize {
        self.dominators.len() + self.connectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.dominators.contains(&id) || self.connectors.contains(&id)
    }

    /// Checks the CDS invariants against `net`: the members induce a
    /// connected subgraph and every node is a dominator or adjacent to one.
    pub fn is_valid_for(&self, net: &Network) -> bool {
        let members: Vec<usize> = self.members().iter().filter_map(|&id| net.index_of(id)).collect();
        if members.len() != self.len() || members.is_empty() {
            return false;
        }
        let mut in_set = vec![false; net.len()];
        for &m in &members {
            in_set[m] = true;
        }
        if !induced_connected(net, &in_set) {
            return false;
        }
        let dom: Vec<bool> = (0..net.len()).map(|i| self.dominators.contains(&net.node_at(i).id)).collect();
        (0..net.len()).all(|i| dom[i] || net.neighbors_of(i).iter().any(|&j| dom[j]))
    }
}

/// Parent-pointer tree rooted at the sink.
///
/// For a query tree, `query_id` is set and `sources_below(u)` counts the
/// query's sources in the subtree of `u`. The full spanning tree has no
/// query id and treats every node as a source.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTree {
    pub query_id: Option<u32>,
    sink: NodeId,
    parent: BTreeMap<NodeId, NodeId>,
    members: BTreeSet<NodeId>,
    depth: BTreeMap<NodeId, usize>,
    sources_below: BTreeMap<NodeId, usize>,
}

impl RoutingTree {
    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    pub fn parents(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.parent
    }

    pub fn members(&self) -> &BTreeSet<NodeId> {
        &self.members
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.members.contains(&id)
    }

    pub fn depth(&self, id: NodeId) -> Option<usize> {
        self.depth.get(&id).copied()
    }

    pub fn max_depth(&self) -> usize {
        self.depth.values().copied().max().unwrap_or(0)
    }

    /// Number of source data units forwarded by `id` per query period.
    pub fn sources_below(&self, id: NodeId) -> usize {
        self.sources_below.get(&id).copied().unwrap_or(0)
    }

    /// Members of the subtree rooted at `id` (including `id`).
    pub fn subtree(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.members
            .iter()
            .copied()
            .filter(|&m| self.path_to_sink(m).contains(&id))
            .collect()
    }

    /// Node sequence from `id` up to and including the sink.
    pub fn path_to_sink(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = Vec::new();
        if !self.members.contains(&id) {
            return path;
        }
        let mut cur = id;
        path.push(cur);
        while let Some(&p) = self.parent.get(&cur) {
            path.push(p);
            cur = p;
            if path.len() > self.members.len() {
                break;
            }
        }
        path
    }

    /// `(query id, child, parent)` records ordered by child id. The full
    /// spanning tree uses query id `-1`.
    pub fn records(&self) -> Vec<(i64, NodeId, NodeId)> {
        let q = self.query_id.map_or(-1, i64::from);
        self.parent.iter().map(|(&c, &p)| (q, c, p)).collect()
    }
}

/// Builds the routing backbone. The sink is always a member.
pub fn build_cds(net: &Network) -> Cds {
    let n = net.len();
    let sink = net.sink_index();
    let level: Vec<usize> = net.hop_distances();
    // Node indices follow id order, so (level, index) is the rank.
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by_key(|&i| (level[i], i));

    let mut dominator = vec![false; n];
    for &u in &rank {
        if !net.neighbors_of(u).iter().any(|&v| dominator[v]) {
            dominator[u] = true;
        }
    }
    let mut in_cds = dominator.clone();
    for u in 0..n {
        if dominator[u] && u != sink {
            let parent = net
                .neighbors_of(u)
                .iter()
                .copied()
                .find(|&v| level[v] + 1 == level[u])
                .expect("non-root node has a BFS parent");
            in_cds[parent] = true;
        }
    }

    let mut depth = tree_depths(net, &in_cds);
    for &u in rank.iter().rev() {
        if u == sink || !in_cds[u] {
            continue;
        }
        in_cds[u] = false;
        let ok = induced_connected(net, &in_cds)
            && dominates_all(net, &in_cds)
            && {
                let d = tree_depths(net, &in_cds);
                let no_growth = d.iter().zip(&depth).all(|(a, b)| a <= b);
                if no_growth {
                    depth = d;
                }
                no_growth
            };
        if !ok {
            in_cds[u] = true;
        }
    }

    let parents = attach_parents(net, &in_cds);
    let mut dom = vec![false; n];
    dom[sink] = true;
    for u in 0..n {
        if !in_cds[u] {
            dom[parents[u].expect("non-sink node has a parent")] = true;
        }
    }
    for &u in &rank {
        if in_cds[u] && !dom[u] && !net.neighbors_of(u).iter().any(|&v| dom[v]) {
            dom[u] = true;
        }
    }
    let id = |i: usize| net.node_at(i).id;
    Cds {
        dominators: (0..n).filter(|&i| dom[i]).map(id).collect(),
        connectors: (0..n).filter(|&i| in_cds[i] && !dom[i]).map(id).collect(),
    }
}

/// Spanning tree rooted at the sink: BFS over the CDS-induced subgraph
/// gives the backbone parents (lowest id on ties); each remaining node
/// attaches to its neighboring CDS member of least depth, then lowest id.
pub fn build_spanning_tree(net: &Network, cds: &Cds) -> Result<RoutingTree> {
    let mut in_cds = vec![false; net.len()];
    for id in cds.members() {
        let i = net.index_of(id).ok_or(Error::UnknownNode(id))?;
        in_cds[i] = true;
    }
    in_cds[net.sink_index()] = true;
    if !induced_connected(net, &in_cds) || !dominates_all(net, &in_cds) {
        return Err(Error::InvalidInput("backbone is not a connected dominating set".into()));
    }
    let parents = attach_parents(net, &in_cds);
    let all: Vec<usize> = vec![1; net.len()];
    Ok(tree_from_parents(net, &parents, None, &all))
}

/// Removes every node whose subtree contains none of the query's sources.
/// The sink is always kept.
pub fn prune_tree(full: &RoutingTree, query: &Query) -> Result<RoutingTree> {
    for s in &query.sources {
        if !full.contains(*s) {
            return Err(Error::UnknownNode(*s));
        }
    }
    // Process members deepest-first so children are counted before parents.
    let mut order: Vec<NodeId> = full.members.iter().copied().collect();
    order.sort_by_key(|id| std::cmp::Reverse((full.depth[id], *id)));
    let mut below: BTreeMap<NodeId, usize> = BTreeMap::new();
    for &u in &order {
        let own = usize::from(query.sources.contains(&u));
        let total = below.get(&u).copied().unwrap_or(0) + own;
        below.insert(u, total);
        if let Some(&p) = full.parent.get(&u) {
            *below.entry(p).or_insert(0) += total;
        }
    }
    let members: BTreeSet<NodeId> =
        full.members.iter().copied().filter(|u| *u == full.sink || below[u] > 0).collect();
    Ok(RoutingTree {
        query_id: Some(query.id),
        sink: full.sink,
        parent: full.parent.iter().filter(|(c, _)| members.contains(c)).map(|(&c, &p)| (c, p)).collect(),
        depth: full.depth.iter().filter(|(c, _)| members.contains(c)).map(|(&c, &d)| (c, d)).collect(),
        sources_below: members.iter().map(|&u| (u, below[&u])).collect(),
        members,
    })
}

/// Reduced communication graph for PhIM: keeps only links no longer than
/// `shrink · r`. Fails when this disconnects the network.
pub fn reduced_graph(net: &Network, params: &PhimParams, shrink: f64) -> Result<Network> {
    if !(shrink > 0.0 && shrink <= 1.0) {
        return Err(Error::InvalidInput(format!("shrink factor must lie in (0, 1], got {shrink}")));
    }
    let limit = shrink * params.max_radius();
    let links: Vec<(NodeId, NodeId)> = net
        .links()
        .into_iter()
        .filter(|&(a, b)| net.node(a).unwrap().pos.dist(&net.node(b).unwrap().pos) <= limit)
        .collect();
    Network::with_links(net.nodes().to_vec(), net.sink(), net.tx_range(), &links)
}

/// Backbone, spanning tree and one pruned tree per query.
#[derive(Debug, Clone)]
pub struct Routing {
    pub cds: Cds,
    pub spanning: RoutingTree,
    pub trees: BTreeMap<u32, RoutingTree>,
}

impl Routing {
    pub fn build(net: &Network, queries: &[Query]) -> Result<Self> {
        let cds = build_cds(net);
        let spanning = build_spanning_tree(net, &cds)?;
        Self::with_spanning(cds, spanning, queries)
    }

    pub fn with_spanning(cds: Cds, spanning: RoutingTree, queries: &[Query]) -> Result<Self> {
        let mut trees = BTreeMap::new();
        for q in queries {
            trees.insert(q.id, prune_tree(&spanning, q)?);
        }
        Ok(Routing { cds, spanning, trees })
    }

    pub fn tree(&self, query_id: u32) -> Option<&RoutingTree> {
        self.trees.get(&query_id)
    }
}

fn induced_connected(net: &Network, in_set: &[bool]) -> bool {
    let adj: Vec<Vec<usize>> = (0..net.len())
        .map(|i| {
            if in_set[i] {
                net.neighbors_of(i).iter().copied().filter(|&j| in_set[j]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let comps = components(&adj);
    comps.iter().filter(|c| in_set[c[0]]).count() == 1
}

fn dominates_all(net: &Network, in_set: &[bool]) -> bool {
    (0..net.len()).all(|i| in_set[i] || net.neighbors_of(i).iter().any(|&j| in_set[j]))
}

/// Parent of every node given a backbone marking (which must contain the
/// sink, be connected and dominating).
fn attach_parents(net: &Network, backbone: &[bool]) -> Vec<Option<usize>> {
    let n = net.len();
    let sink = net.sink_index();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            if backbone[i] {
                net.neighbors_of(i).iter().copied().filter(|&j| backbone[j]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let depth = bfs_levels(&adj, sink);
    let mut parent = vec![None; n];
    for u in 0..n {
        if u == sink {
            continue;
        }
        parent[u] = if backbone[u] {
            let du = depth[u].expect("backbone is connected");
            adj[u].iter().copied().find(|&v| depth[v] == Some(du - 1))
        } else {
            net.neighbors_of(u)
                .iter()
                .copied()
                .filter(|&v| backbone[v])
                .min_by_key(|&v| (depth[v].unwrap(), v))
        };
    }
    parent
}

fn tree_depths(net: &Network, backbone: &[bool]) -> Vec<usize> {
    let parent = attach_parents(net, backbone);
    depths_from_parents(&parent, net.sink_index())
}

fn depths_from_parents(parent: &[Option<usize>], root: usize) -> Vec<usize> {
    let n = parent.len();
    let mut depth = vec![usize::MAX; n];
    depth[root] = 0;
    for start in 0..n {
        let mut chain = Vec::new();
        let mut cur = start;
        while depth[cur] == usize::MAX {
            chain.push(cur);
            cur = parent[cur].expect("every non-root node has a parent");
        }
        let mut d = depth[cur];
        for &c in chain.iter().rev() {
            d += 1;
            depth[c] = d;
        }
    }
    depth
}

fn tree_from_parents(
    net: &Network,
    parent: &[Option<usize>],
    query_id: Option<u32>,
    weight: &[usize],
) -> RoutingTree {
    let sink = net.sink_index();
    let depth = depths_from_parents(parent, sink);
    let mut order: Vec<usize> = (0..net.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((depth[i], i)));
    let mut below = weight.to_vec();
    for &u in &order {
        if let Some(p) = parent[u] {
            below[p] += below[u];
        }
    }
    let id = |i: usize| net.node_at(i).id;
    RoutingTree {
        query_id,
        sink: id(sink),
        parent: (0..net.len()).filter_map(|i| parent[i].map(|p| (id(i), id(p)))).collect(),
        members: (0..net.len()).map(id).collect(),
        depth: (0..net.len()).map(|i| (id(i), depth[i])).collect(),
        sources_below: (0..net.len()).map(|i| (id(i), below[i])).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::Node;

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn path(n: u32, sink: u32) -> Network {
        let nodes = (0..n).map(|i| Node::new(i, i as f64, 0.0)).collect();
        Network::new(nodes, NodeId(sink), 1.0).unwrap()
    }

    fn star(leaves: u32) -> Network {
        let mut nodes = vec![Node::new(0, 0.0, 0.0)];
        for i in 0..leaves {
            let a = i as f64 * std::f64::consts::TAU / leaves as f64;
            nodes.push(Node::new(i + 1, a.cos(), a.sin()));
        }
        Network::new(nodes, NodeId(0), 1.0).unwrap()
    }

    fn query(id: u32, sources: &[u32]) -> Query {
        Query::new(id, sources.iter().map(|&s| NodeId(s)).collect(), 1.0, 10.0, 0.0, 10.0, 1.0).unwrap()
    }

    #[test]
    fn star_has_single_hub_dominator() {
        let net = star(6);
        let cds = build_cds(&net);
        assert_eq!(cds.dominators, ids(&[0]));
        assert!(cds.connectors.is_empty());
        assert!(cds.is_valid_for(&net));
        let tree = build_spanning_tree(&net, &cds).unwrap();
        for leaf in 1..=6 {
            assert_eq!(tree.parent(NodeId(leaf)), Some(NodeId(0)));
        }
    }

    #[test]
    fn path_of_four_uses_middle_nodes() {
        let net = path(4, 1);
        let cds = build_cds(&net);
        assert_eq!(cds.members(), ids(&[1, 2]));
        assert!(cds.is_valid_for(&net));
    }

    #[test]
    fn clique_needs_one_node() {
        let nodes = (0..5).map(|i| Node::new(i, 0.1 * i as f64, 0.0)).collect();
        let net = Network::new(nodes, NodeId(2), 1.0).unwrap();
        let cds = build_cds(&net);
        assert_eq!(cds.len(), 1);
        assert!(cds.is_valid_for(&net));
    }

    #[test]
    fn path_tree_is_unique() {
        let net = path(4, 0);
        let tree = build_spanning_tree(&net, &build_cds(&net)).unwrap();
        assert_eq!(tree.parent(NodeId(3)), Some(NodeId(2)));
        assert_eq!(tree.parent(NodeId(2)), Some(NodeId(1)));
        assert_eq!(tree.parent(NodeId(1)), Some(NodeId(0)));
        assert_eq!(tree.parent(NodeId(0)), None);
        assert_eq!(tree.max_depth(), 3);
    }

    #[test]
    fn pruning_keeps_only_source_paths() {
        let net = star(4);
        let tree = build_spanning_tree(&net, &build_cds(&net)).unwrap();
        let all = prune_tree(&tree, &query(0, &[0, 1, 2, 3, 4])).unwrap();
        assert_eq!(all.members(), tree.members());
        assert_eq!(all.parents(), tree.parents());

        let one = prune_tree(&tree, &query(1, &[3])).unwrap();
        assert_eq!(one.members(), &ids(&[0, 3]));
        assert_eq!(one.path_to_sink(NodeId(3)), vec![NodeId(3), NodeId(0)]);

        let two = prune_tree(&tree, &query(2, &[1, 4])).unwrap();
        assert_eq!(two.members(), &ids(&[0, 1, 4]));
        assert_eq!(two.sources_below(NodeId(0)), 2);
    }

    #[test]
    fn pruning_on_path_keeps_branch_to_source() {
        let net = path(5, 0);
        let tree = build_spanning_tree(&net, &build_cds(&net)).unwrap();
        let q = prune_tree(&tree, &query(0, &[2])).unwrap();
        assert_eq!(q.members(), &ids(&[0, 1, 2]));
        assert_eq!(q.sources_below(NodeId(1)), 1);
    }

    #[test]
    fn unknown_source_is_rejected() {
        let net = path(3, 0);
        let tree = build_spanning_tree(&net, &build_cds(&net)).unwrap();
        assert!(prune_tree(&tree, &query(0, &[9])).is_err());
    }

    #[test]
    fn reduced_graph_filters_long_links() {
        let p = PhimParams::new(1.0, 0.01, 2.0, 3.0);
        let r = p.max_radius();
        let nodes = (0..4).map(|i| Node::new(i, 0.9 * r * i as f64, 0.0)).collect();
        let net = Network::new(nodes, NodeId(0), r).unwrap();
        let same = reduced_graph(&net, &p, 1.0).unwrap();
        assert_eq!(same.links(), net.links());
        assert!(matches!(reduced_graph(&net, &p, 0.5), Err(Error::Disconnected(_))));
        assert!(reduced_graph(&net, &p, 0.0).is_err());
    }
}
