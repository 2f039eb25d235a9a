//! Node activity scheduling: transmission plans, region coloring with
//! load-proportional time assignment, and rate-monotonic packet selection.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::{interference_radius, region_of, InterferenceModel, Network, NodeId, RegionIndex};
use crate::queries::{relay_load_node, Query};
use crate::routing::RoutingTree;

/// Time comparison tolerance.
pub const EPS: f64 = 1e-9;

/// Color of a region: `(v mod K)·K + (h mod K)` with non-negative modulo.
pub fn region_color(region: RegionIndex, k: u32) -> u32 {
    let k = i64::from(k);
    (region.v.rem_euclid(k) * k + region.h.rem_euclid(k)) as u32
}

pub fn color_regions<I>(occupied: I, model: &InterferenceModel) -> Result<BTreeMap<RegionIndex, u32>>
where
    I: IntoIterator<Item = RegionIndex>,
{
    let k = model.k_factor()?;
    Ok(occupied.into_iter().map(|r| (r, region_color(r, k))).collect())
}

/// Linear time assignment: each node gets `frame_t · L(u) / L(region)`.
/// A region without load assigns nothing.
pub fn assign_times(loads: &[(NodeId, f64)], frame_t: f64) -> BTreeMap<NodeId, f64> {
    let total: f64 = loads.iter().map(|(_, l)| l).fold(0.0, |a, l| a + l);
    loads
        .iter()
        .map(|&(id, l)| (id, if total > 0.0 { frame_t * l / total } else { 0.0 }))
        .collect()
}

/// One node's window inside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slot {
    pub node: NodeId,
    pub region: RegionIndex,
    pub color: u32,
    /// Offset from the frame start.
    pub start: f64,
    pub duration: f64,
}

impl Slot {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Result of interference-aware node scheduling. Color `c` is active on
/// `[c·T, (c+1)·T)` of every frame of length `c2·T`; inside an active
/// region nodes transmit one after another in ascending id order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSchedule {
    pub frame_t: f64,
    pub color_count: u32,
    pub k: u32,
    pub lambda: f64,
    pub region_colors: BTreeMap<RegionIndex, u32>,
    pub allotments: BTreeMap<NodeId, f64>,
    pub slots: BTreeMap<NodeId, Slot>,
}

impl FrameSchedule {
    pub fn frame_length(&self) -> f64 {
        self.color_count as f64 * self.frame_t
    }

    pub fn slot(&self, node: NodeId) -> Option<&Slot> {
        self.slots.get(&node)
    }

    /// Absolute `[start, end)` of `node`'s window in frame `frame`.
    pub fn window(&self, node: NodeId, frame: u64) -> Option<(f64, f64)> {
        self.slots.get(&node).map(|s| {
            let base = frame as f64 * self.frame_length();
            (base + s.start, base + s.end())
        })
    }

    /// `(color, region, node, start offset, duration)` rows ordered by
    /// color, region, then start.
    pub fn records(&self) -> Vec<Slot> {
        let mut rows: Vec<Slot> = self.slots.values().copied().collect();
        rows.sort_by(|a, b| {
            (a.color, a.region).cmp(&(b.color, b.region)).then(a.start.total_cmp(&b.start))
        });
        rows
    }
}

/// Builds the frame for the given trees. The sink receives but never
/// transmits, so it takes no share of its region's window.
pub fn build_frame(
    net: &Network,
    queries: &[Query],
    trees: &BTreeMap<u32, RoutingTree>,
    model: &InterferenceModel,
    frame_t: f64,
) -> Result<FrameSchedule> {
    if !(frame_t > 0.0 && frame_t.is_finite()) {
        return Err(Error::InvalidInput(format!("frame length must be positive, got {frame_t}")));
    }
    let k = model.k_factor()?;
    let lambda = interference_radius(model, net.tx_range());
    let mut by_region: BTreeMap<RegionIndex, Vec<(NodeId, f64)>> = BTreeMap::new();
    for node in net.nodes() {
        let load = if node.id == net.sink() { 0.0 } else { relay_load_node(node.id, queries, trees) };
        by_region.entry(region_of(&node.pos, lambda)).or_default().push((node.id, load));
    }
    let region_colors: BTreeMap<RegionIndex, u32> =
        by_region.keys().map(|&r| (r, region_color(r, k))).collect();
    let mut allotments = BTreeMap::new();
    let mut slots = BTreeMap::new();
    for (region, members) in &by_region {
        let color = region_colors[region];
        let times = assign_times(members, frame_t);
        let mut offset = color as f64 * frame_t;
        // members are in ascending id order
        for (id, _) in members {
            let d = times[id];
            allotments.insert(*id, d);
            if d > 0.0 {
                slots.insert(*id, Slot { node: *id, region: *region, color, start: offset, duration: d });
                offset += d;
            }
        }
    }
    Ok(FrameSchedule { frame_t, color_count: k * k, k, lambda, region_colors, allotments, slots })
}

/// A data unit in flight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Packet {
    pub query_id: u32,
    /// 1-based period index of the query instance.
    pub instance: u64,
    pub source: NodeId,
    pub created_at: f64,
    pub deadline_at: f64,
    pub period: f64,
    pub chi: f64,
}

impl Packet {
    /// The packet belongs to the current instance if it was produced in the
    /// period window that contains `now`.
    pub fn is_current(&self, now: f64) -> bool {
        now < self.created_at + self.period - EPS
    }
}

/// Rate-monotonic packet order; `Less` means higher priority.
///
/// Packets of earlier periods outrank current ones; within each class a
/// shorter period wins; a query's packets leave in instance order (FIFO);
/// remaining ties go by query id, then instance, then source id.
pub fn rm_compare(a: &Packet, b: &Packet, now: f64) -> Ordering {
    a.is_current(now)
        .cmp(&b.is_current(now))
        .then(a.period.total_cmp(&b.period))
        .then(a.query_id.cmp(&b.query_id))
        .then(a.instance.cmp(&b.instance))
        .then(a.source.cmp(&b.source))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanEntry {
    pub query_id: u32,
    /// Data units forwarded per period: the node's own plus its subtree's.
    pub units_per_period: usize,
    pub chi: f64,
    pub period: f64,
}

/// A node's transmission plan and packet buffer.
///
/// Packets are kept per query in `(instance, source)` order. Within one
/// query that order is also the priority order, and all packets share the
/// same length, so only the head of each queue competes for the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionPlan {
    pub node: NodeId,
    pub entries: Vec<PlanEntry>,
    queues: BTreeMap<u32, BTreeMap<(u64, NodeId), Packet>>,
    count: usize,
    limit: Option<usize>,
}

impl TransmissionPlan {
    pub fn new(node: NodeId, limit: Option<usize>) -> Self {
        TransmissionPlan { node, entries: Vec::new(), queues: BTreeMap::new(), count: 0, limit }
    }

    /// Plan with one entry for every query whose tree contains `node`.
    pub fn for_node(
        node: NodeId,
        queries: &[Query],
        trees: &BTreeMap<u32, RoutingTree>,
        limit: Option<usize>,
    ) -> Self {
        let mut plan = Self::new(node, limit);
        for q in queries {
            if let Some(t) = trees.get(&q.id).filter(|t| t.contains(node)) {
                plan.entries.push(PlanEntry {
                    query_id: q.id,
                    units_per_period: t.sources_below(node),
                    chi: q.chi,
                    period: q.period,
                });
            }
        }
        plan
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Adds a packet; hands it back when the buffer is full.
    pub fn push(&mut self, pkt: Packet) -> std::result::Result<(), Packet> {
        if self.limit.is_some_and(|l| self.count >= l) {
            return Err(pkt);
        }
        let q = self.queues.entry(pkt.query_id).or_default();
        if q.insert((pkt.instance, pkt.source), pkt).is_none() {
            self.count += 1;
        }
        Ok(())
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.queues.values().flat_map(|q| q.values())
    }

    /// Buffered packets in priority order at `now`.
    pub fn ordered(&self, now: f64) -> Vec<&Packet> {
        let mut v: Vec<&Packet> = self.packets().collect();
        v.sort_by(|a, b| rm_compare(a, b, now));
        v
    }

    /// Highest-priority packet whose transmission fits in `remaining`.
    /// A packet is never split across windows.
    pub fn next_transmission(&self, now: f64, remaining: f64) -> Option<&Packet> {
        self.queues
            .values()
            .filter_map(|q| q.values().next())
            .filter(|p| p.chi <= remaining + EPS)
            .min_by(|a, b| rm_compare(a, b, now))
    }

    /// Removes and returns the packet `next_transmission` would pick.
    pub fn take_next(&mut self, now: f64, remaining: f64) -> Option<Packet> {
        let p = self.next_transmission(now, remaining)?;
        let (qid, key) = (p.query_id, (p.instance, p.source));
        let q = self.queues.get_mut(&qid).expect("queue of picked packet");
        let pkt = q.remove(&key).expect("picked packet");
        if q.is_empty() {
            self.queues.remove(&qid);
        }
        self.count -= 1;
        Some(pkt)
    }

    /// Drops every packet whose deadline is already past, returning them.
    pub fn drain_expired(&mut self, now: f64) -> Vec<Packet> {
        let mut gone = Vec::new();
        for q in self.queues.values_mut() {
            // deadlines grow with the instance number
            while let Some(entry) = q.first_entry() {
                if entry.get().deadline_at < now - EPS {
                    gone.push(entry.remove());
                } else {
                    break;
                }
            }
        }
        self.queues.retain(|_, q| !q.is_empty());
        self.count -= gone.len();
        gone
    }
}

/// A synthetic periodic flow through one node: `units` packets of length
/// `chi` arrive every `period`, each due before the next arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub id: u32,
    pub period: f64,
    pub chi: f64,
    pub units: u32,
}

impl Flow {
    pub fn utilization(&self) -> f64 {
        self.units as f64 * self.chi / self.period
    }
}

/// Transmission opportunity of a node: `[offset, offset + length)` of every
/// frame. `length == frame` means the node may always transmit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supply {
    pub frame: f64,
    pub offset: f64,
    pub length: f64,
}

impl Supply {
    pub fn continuous() -> Self {
        Supply { frame: 1.0, offset: 0.0, length: 1.0 }
    }

    pub fn fraction(&self) -> f64 {
        self.length / self.frame
    }

    fn always(&self) -> bool {
        self.length >= self.frame
    }

    /// End of the window containing `t`, or `None` if `t` is outside any window.
    fn window_end(&self, t: f64) -> Option<f64> {
        if self.always() {
            return Some(f64::INFINITY);
        }
        let k = ((t - self.offset) / self.frame).floor();
        let start = self.offset + k * self.frame;
        let end = start + self.length;
        (t >= start - EPS && t < end - EPS).then_some(end)
    }

    fn next_window_start(&self, t: f64) -> f64 {
        let k = ((t - self.offset) / self.frame).ceil();
        self.offset + k * self.frame
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SingleNodeReport {
    pub released: u64,
    pub sent: u64,
    pub misses: u64,
    pub max_response: f64,
}

/// Runs one node's rate-monotonic packet scheduler for `periods` periods of
/// the slowest flow and counts per-hop deadline misses.
pub fn run_single_node(flows: &[Flow], supply: Supply, periods: u64) -> SingleNodeReport {
    let horizon = periods as f64 * flows.iter().map(|f| f.period).fold(0.0, f64::max);
    let mut plan = TransmissionPlan::new(NodeId(0), None);
    let mut next_release: Vec<(f64, u64)> = flows.iter().map(|_| (0.0, 1)).collect();
    let mut report = SingleNodeReport::default();
    let mut now = 0.0;
    let release_due = |next: &[(f64, u64)]| next.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);

    while now < horizon {
        for (f, slot) in flows.iter().zip(next_release.iter_mut()) {
            while slot.0 <= now + EPS && slot.0 < horizon {
                for u in 0..f.units {
                    let pkt = Packet {
                        query_id: f.id,
                        instance: slot.1,
                        source: NodeId(u),
                        created_at: slot.0,
                        deadline_at: slot.0 + f.period,
                        period: f.period,
                        chi: f.chi,
                    };
                    plan.push(pkt).expect("unbounded buffer");
                    report.released += 1;
                }
                slot.1 += 1;
                slot.0 = f.period * (slot.1 - 1) as f64;
            }
        }
        let next_arrival = release_due(&next_release);
        if let Some(end) = supply.window_end(now) {
            if let Some(pkt) = plan.take_next(now, end - now) {
                now += pkt.chi;
                report.sent += 1;
                let response = now - pkt.created_at;
                report.max_response = report.max_response.max(response);
                if now > pkt.deadline_at + EPS {
                    report.misses += 1;
                }
                continue;
            }
            now = if plan.is_empty() { next_arrival } else { next_arrival.min(supply.next_window_start(now + EPS)) };
        } else {
            now = next_arrival.min(supply.next_window_start(now));
        }
    }
    // Anything still queued whose deadline fell inside the horizon missed it.
    report.misses += plan.packets().filter(|p| p.deadline_at <= horizon + EPS).count() as u64;
    report
}
