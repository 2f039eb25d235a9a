//! Worst-case placement: a forced relay path that crosses one
//! interference-aware region `c3` times.
//!
//! The region holds `c3` relay nodes laid out column by column in a
//! serpentine. The sink sits just below the first one and a gateway node
//! just right of the last one; every source hangs off the gateway, so all
//! data crosses the whole path while no source lies inside the region.
//! Links are given explicitly: the path is the only route.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::netmodel::{interference_radius, region_of, InterferenceModel, Network, Node, NodeId, RegionIndex};
use crate::queries::{relay_loads, Query};
use crate::routing::RoutingTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureQuery {
    pub sources: usize,
    pub chi: f64,
    pub period: f64,
}

#[derive(Debug, Clone)]
pub struct TightnessFixture {
    pub network: Network,
    pub queries: Vec<Query>,
    pub region: RegionIndex,
    pub chain: Vec<NodeId>,
    pub gateway: NodeId,
    pub lambda: f64,
}

/// Fixture with range 50 and two queries.
pub fn tightness_fixture(model: &InterferenceModel) -> Result<TightnessFixture> {
    let specs = [
        FixtureQuery { sources: 3, chi: 0.01, period: 20.0 },
        FixtureQuery { sources: 5, chi: 0.02, period: 50.0 },
    ];
    build_tightness_fixture(model, 50.0, &specs)
}

pub fn build_tightness_fixture(
    model: &InterferenceModel,
    tx_range: f64,
    specs: &[FixtureQuery],
) -> Result<TightnessFixture> {
    let c3 = model.c3()? as usize;
    let lambda = interference_radius(model, tx_range);
    let cols = (c3 as f64).sqrt().ceil() as usize;
    let rows = c3.div_ceil(cols);
    let used_cols = c3.div_ceil(rows);
    let sx = lambda / (used_cols + 1) as f64;
    let sy = lambda / (rows + 1) as f64;

    let mut nodes = vec![Node::new(0, sx, -sy / 2.0)];
    let mut links = Vec::new();
    let mut chain = Vec::with_capacity(c3);
    for k in 0..c3 {
        let col = k / rows;
        let step = k % rows;
        let row = if col.is_multiple_of(2) { step } else { rows - 1 - step };
        let id = (k + 1) as u32;
        nodes.push(Node::new(id, (col + 1) as f64 * sx, (row + 1) as f64 * sy));
        links.push((NodeId(id - 1), NodeId(id)));
        chain.push(NodeId(id));
    }
    let last = *nodes.last().expect("chain is non-empty");
    let gateway = NodeId(c3 as u32 + 1);
    let gpos = (lambda + sx / 2.0, last.pos.y);
    nodes.push(Node::new(gateway.0, gpos.0, gpos.1));
    links.push((last.id, gateway));

    let source_count = specs.iter().map(|s| s.sources).max().unwrap_or(0);
    let arm = tx_range / 2.0;
    let mut sources = Vec::new();
    for s in 0..source_count {
        let theta = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (s + 1) as f64 / (source_count + 1) as f64;
        let id = gateway.0 + 1 + s as u32;
        nodes.push(Node::new(id, gpos.0 + arm * theta.cos(), gpos.1 + arm * theta.sin()));
        links.push((gateway, NodeId(id)));
        sources.push(NodeId(id));
    }
    let network = Network::with_links(nodes, NodeId(0), tx_range, &links)?;
    let queries = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let set: BTreeSet<NodeId> = sources[..s.sources].iter().copied().collect();
            Query::new(i as u32, set, s.chi, s.period, 0.0, s.period, 1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TightnessFixture { network, queries, region: RegionIndex::new(0, 0), chain, gateway, lambda })
}

/// Regions whose relay load exceeds `c1`, with that load.
pub fn relay_overloaded_regions(
    net: &Network,
    queries: &[Query],
    trees: &BTreeMap<u32, RoutingTree>,
    model: &InterferenceModel,
) -> Result<Vec<(RegionIndex, f64)>> {
    let c1 = model.c1()? as f64;
    let lambda = interference_radius(model, net.tx_range());
    let loads = relay_loads(net, queries, trees, lambda);
    Ok(loads.per_region.into_iter().filter(|&(_, l)| l > c1).collect())
}

/// Region of `node` in the fixture's partition.
pub fn fixture_region(f: &TightnessFixture, node: NodeId) -> Option<RegionIndex> {
    f.network.node(node).map(|n| region_of(&n.pos, f.lambda))
}
