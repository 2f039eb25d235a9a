//! Event loop shared by fixed-release runs and staggered scenarios.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::netmodel::{InterferenceModel, Network, NodeId};
use crate::queries::Query;
use crate::routing::{Cds, Routing, RoutingTree};
use crate::scheduler::{build_frame, FrameSchedule, Packet, TransmissionPlan, EPS};

/// Lower bound on per-attempt delivery probability on lossy links.
pub const MIN_LINK_QUALITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    TxEnd,
    RoundCheck,
    FrameBoundary,
    Release,
    WindowStart,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: Kind,
    node: usize,
    seq: u64,
    /// Query id and instance for releases and round checks; frame index for
    /// frame boundaries.
    a: u64,
    b: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.node.cmp(&other.node))
            .then(self.seq.cmp(&other.seq))
    }
}

/// One transmission attempt on a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TxRecord {
    pub start: f64,
    pub end: f64,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub query_id: u32,
    pub instance: u64,
    pub source: NodeId,
    pub delivered: bool,
}

/// Outcome of one period instance of one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub query_id: u32,
    pub instance: u64,
    pub released_at: f64,
    pub deadline_at: f64,
    pub delivered_sources: BTreeSet<NodeId>,
    pub last_delivery: Option<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    BufferFull,
    Expired,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EngineParams {
    pub frame_t: f64,
    pub buffer_limit: Option<usize>,
    pub loss_scale: f64,
    pub drop_expired: bool,
    pub duration: f64,
    pub record_trace: bool,
}

/// Query admission policy.
#[derive(Debug, Clone)]
pub(crate) enum Admission {
    /// Every query is active from its own release time.
    Fixed,
    /// Queries are released one at a time at frame boundaries while every
    /// active query's latest completed round succeeded; the run stops once
    /// every active query's latest completed round failed.
    Staggered { max_queries: usize },
}

#[derive(Debug, Clone, Default)]
pub(crate) struct EngineOutput {
    pub rounds: Vec<RoundRecord>,
    pub transmissions: u64,
    pub failed_attempts: u64,
    pub drops_buffer: u64,
    pub drops_expired: u64,
    pub end_time: f64,
    pub released: Vec<Query>,
    pub trace_hash: String,
    pub trace: Vec<TxRecord>,
    pub trace_lines: Vec<String>,
    pub max_tree_depth: usize,
}

struct RoundState {
    released_at: f64,
    deadline_at: f64,
    needed: usize,
    delivered: BTreeSet<NodeId>,
    last_delivery: Option<f64>,
}

struct InFlight {
    packet: Packet,
    start: f64,
    ok: bool,
}

pub(crate) struct Engine<'a> {
    net: &'a Network,
    model: InterferenceModel,
    params: EngineParams,
    admission: Admission,
    cds: Cds,
    spanning: RoutingTree,
    parent: Vec<Option<usize>>,
    /// Queries waiting for release, in release order.
    pending: Vec<Query>,
    active: Vec<Query>,
    frame: Option<FrameSchedule>,
    buffers: Vec<TransmissionPlan>,
    window_end: Vec<f64>,
    in_flight: Vec<Option<InFlight>>,
    heap: BinaryHeap<Reverse<Event>>,
    seq: u64,
    rounds: BTreeMap<(u32, u64), RoundState>,
    latest: BTreeMap<u32, bool>,
    rng: ChaCha8Rng,
    hasher: Sha256,
    out: EngineOutput,
    stopped: bool,
}

impl<'a> Engine<'a> {
    pub fn new(
        net: &'a Network,
        model: InterferenceModel,
        params: EngineParams,
        admission: Admission,
        queries: Vec<Query>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let routing = Routing::build(net, &[])?;
        let parent = (0..net.len())
            .map(|i| routing.spanning.parent(net.node_at(i).id).and_then(|p| net.index_of(p)))
            .collect();
        let buffers = net.nodes().iter().map(|n| TransmissionPlan::new(n.id, params.buffer_limit)).collect();
        let out = EngineOutput { max_tree_depth: routing.spanning.max_depth(), ..Default::default() };
        Ok(Engine {
            net,
            model,
            admission,
            cds: routing.cds,
            spanning: routing.spanning,
            parent,
            pending: queries,
            active: Vec::new(),
            frame: None,
            buffers,
            window_end: vec![f64::NEG_INFINITY; net.len()],
            in_flight: (0..net.len()).map(|_| None).collect(),
            heap: BinaryHeap::new(),
            seq: 0,
            rounds: BTreeMap::new(),
            latest: BTreeMap::new(),
            rng,
            hasher: Sha256::new(),
            out,
            stopped: false,
            params,
        })
    }

    fn push(&mut self, time: f64, kind: Kind, node: usize, a: u64, b: u64) {
        self.seq += 1;
        self.heap.push(Reverse(Event { time, kind, node, seq: self.seq, a, b }));
    }

    fn trace(&mut self, line: String) {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        if self.params.record_trace {
            self.out.trace_lines.push(line);
        }
    }

    fn frame_length(&self) -> f64 {
        self.model.c2().map(|c| c as f64).unwrap_or(1.0) * self.params.frame_t
    }

    fn activate(&mut self, mut q: Query, at: Option<f64>) -> Result<()> {
        if let Some(t) = at {
            q.release = t;
        }
        self.trace(format!("release {} {}", q.id, q.release));
        self.push(q.release, Kind::Release, 0, u64::from(q.id), 1);
        self.out.released.push(q.clone());
        self.active.push(q);
        self.rebuild()
    }

    fn rebuild(&mut self) -> Result<()> {
        let routing = Routing::with_spanning(self.cds.clone(), self.spanning.clone(), &self.active)?;
        self.frame = Some(build_frame(self.net, &self.active, &routing.trees, &self.model, self.params.frame_t)?);
        Ok(())
    }

    fn query(&self, id: u32) -> &Query {
        self.active.iter().find(|q| q.id == id).expect("active query")
    }

    pub fn run(mut self) -> Result<EngineOutput> {
        match self.admission {
            Admission::Fixed => {
                for q in std::mem::take(&mut self.pending) {
                    self.activate(q, None)?;
                }
            }
            Admission::Staggered { .. } => {
                if !self.pending.is_empty() {
                    let q = self.pending.remove(0);
                    self.activate(q, Some(0.0))?;
                }
            }
        }
        self.push(0.0, Kind::FrameBoundary, 0, 0, 0);
        let duration = self.params.duration;
        let mut now = 0.0;
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.time > duration + EPS || self.stopped {
                break;
            }
            now = ev.time;
            match ev.kind {
                Kind::FrameBoundary => self.on_frame(ev.time, ev.a)?,
                Kind::WindowStart => {
                    let end = self.frame.as_ref().and_then(|f| f.slot(self.net.node_at(ev.node).id)).map(|s| s.duration);
                    if let Some(d) = end {
                        self.window_end[ev.node] = ev.time + d;
                        self.try_send(ev.node, ev.time);
                    }
                }
                Kind::TxEnd => self.on_tx_end(ev.node, ev.time),
                Kind::Release => self.on_release(ev.a as u32, ev.b, ev.time),
                Kind::RoundCheck => self.on_round_check(ev.a as u32, ev.b, ev.time),
            }
        }
        self.out.end_time = if self.stopped { now } else { now.min(duration) };
        self.out.rounds.sort_by_key(|r| (r.query_id, r.instance));
        self.out.trace_hash = format!("{:x}", self.hasher.finalize_reset());
        Ok(self.out)
    }

    fn on_frame(&mut self, time: f64, k: u64) -> Result<()> {
        if let Admission::Staggered { max_queries } = self.admission {
            let satisfied = !self.active.is_empty()
                && self.active.iter().all(|q| self.latest.get(&q.id).copied() == Some(true));
            if k > 0 && satisfied && self.active.len() < max_queries && !self.pending.is_empty() {
                let q = self.pending.remove(0);
                self.activate(q, Some(time))?;
            }
        }
        if let Some(frame) = &self.frame {
            let slots: Vec<(usize, f64)> = frame
                .slots
                .values()
                .map(|s| (self.net.index_of(s.node).expect("slot node"), time + s.start))
                .collect();
            for (i, t) in slots {
                self.push(t, Kind::WindowStart, i, 0, 0);
            }
        }
        let next = (k + 1) as f64 * self.frame_length();
        if next <= self.params.duration + EPS {
            self.push(next, Kind::FrameBoundary, 0, k + 1, 0);
        }
        Ok(())
    }

    fn on_release(&mut self, qid: u32, t: u64, now: f64) {
        let q = self.query(qid).clone();
        let deadline_at = q.instance_deadline(t);
        let sink = self.net.sink();
        self.rounds.insert(
            (qid, t),
            RoundState {
                released_at: now,
                deadline_at,
                needed: q.sources.len(),
                delivered: BTreeSet::new(),
                last_delivery: None,
            },
        );
        self.push(deadline_at + EPS, Kind::RoundCheck, 0, u64::from(qid), t);
        let next = q.instance_release(t + 1);
        if next < self.params.duration - EPS {
            self.push(next, Kind::Release, 0, u64::from(qid), t + 1);
        }
        let mut kick = Vec::new();
        for &src in &q.sources {
            let pkt = Packet {
                query_id: qid,
                instance: t,
                source: src,
                created_at: now,
                deadline_at,
                period: q.period,
                chi: q.chi,
            };
            if src == sink {
                self.deliver(pkt, now);
                continue;
            }
            let i = self.net.index_of(src).expect("validated source");
            match self.buffers[i].push(pkt) {
                Ok(()) => kick.push(i),
                Err(p) => self.drop_packet(i, p, DropReason::BufferFull, now),
            }
        }
        for i in kick {
            self.try_send(i, now);
        }
    }

    fn drop_packet(&mut self, node: usize, p: Packet, reason: DropReason, now: f64) {
        match reason {
            DropReason::BufferFull => self.out.drops_buffer += 1,
            DropReason::Expired => self.out.drops_expired += 1,
        }
        let tag = match reason {
            DropReason::BufferFull => "full",
            DropReason::Expired => "expired",
        };
        let line = format!("drop {now} {} {} {} {} {tag}", self.net.node_at(node).id, p.query_id, p.instance, p.source);
        self.trace(line);
    }

    fn deliver(&mut self, p: Packet, now: f64) {
        let line = format!("deliver {now} {} {} {}", p.query_id, p.instance, p.source);
        self.trace(line);
        if let Some(r) = self.rounds.get_mut(&(p.query_id, p.instance)) {
            if now <= r.deadline_at + EPS && r.delivered.insert(p.source) {
                r.last_delivery = Some(now);
            }
        }
    }

    fn try_send(&mut self, i: usize, now: f64) {
        if self.in_flight[i].is_some() {
            return;
        }
        let remaining = self.window_end[i] - now;
        if remaining <= EPS {
            return;
        }
        if self.params.drop_expired {
            for p in self.buffers[i].drain_expired(now) {
                self.drop_packet(i, p, DropReason::Expired, now);
            }
        }
        let Some(packet) = self.buffers[i].take_next(now, remaining) else {
            return;
        };
        let ok = match self.parent[i] {
            Some(pi) if self.params.loss_scale > 0.0 => {
                let d = self.net.node_at(i).pos.dist(&self.net.node_at(pi).pos);
                let q = (1.0 - d / self.net.tx_range() * self.params.loss_scale).max(MIN_LINK_QUALITY);
                q >= 1.0 || self.rng.gen::<f64>() < q
            }
            _ => true,
        };
        let end = now + packet.chi;
        self.in_flight[i] = Some(InFlight { packet, start: now, ok });
        self.push(end, Kind::TxEnd, i, 0, 0);
    }

    fn on_tx_end(&mut self, i: usize, now: f64) {
        let Some(f) = self.in_flight[i].take() else { return };
        let pi = self.parent[i].expect("only non-sink nodes transmit");
        let sender = self.net.node_at(i).id;
        let receiver = self.net.node_at(pi).id;
        self.out.transmissions += 1;
        let mut line = String::new();
        let _ = write!(
            line,
            "tx {} {now} {sender} {receiver} {} {} {} {}",
            f.start,
            f.packet.query_id,
            f.packet.instance,
            f.packet.source,
            if f.ok { "ok" } else { "lost" }
        );
        self.trace(line);
        if self.params.record_trace {
            self.out.trace.push(TxRecord {
                start: f.start,
                end: now,
                sender,
                receiver,
                query_id: f.packet.query_id,
                instance: f.packet.instance,
                source: f.packet.source,
                delivered: f.ok,
            });
        }
        if !f.ok {
            self.out.failed_attempts += 1;
            // A child may have taken the freed slot while the packet was in the air.
            if let Err(p) = self.buffers[i].push(f.packet) {
                self.drop_packet(i, p, DropReason::BufferFull, now);
            }
        } else if receiver == self.net.sink() {
            self.deliver(f.packet, now);
        } else {
            match self.buffers[pi].push(f.packet) {
                Ok(()) => self.try_send(pi, now),
                Err(p) => self.drop_packet(pi, p, DropReason::BufferFull, now),
            }
        }
        self.try_send(i, now);
    }

    fn on_round_check(&mut self, qid: u32, t: u64, now: f64) {
        let Some(r) = self.rounds.remove(&(qid, t)) else { return };
        let success = r.delivered.len() == r.needed;
        self.trace(format!("round {qid} {t} {}", if success { "ok" } else { "miss" }));
        self.latest.insert(qid, success);
        self.out.rounds.push(RoundRecord {
            query_id: qid,
            instance: t,
            released_at: r.released_at,
            deadline_at: r.deadline_at,
            delivered_sources: r.delivered,
            last_delivery: r.last_delivery,
            success,
        });
        if let Admission::Staggered { .. } = self.admission {
            let all_failed = self.active.iter().all(|q| self.latest.get(&q.id) == Some(&false));
            if all_failed {
                self.trace(format!("stop {now}"));
                self.stopped = true;
            }
        }
    }
}
