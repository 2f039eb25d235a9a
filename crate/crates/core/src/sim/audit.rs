//! Checks a transmission trace for interference between concurrent links.

use serde::Serialize;

use crate::netmodel::{conflicts, sinr, InterferenceModel, Link, Network, Node, NodeId};
use crate::scheduler::EPS;
use crate::sim::engine::TxRecord;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AuditViolation {
    /// Two overlapping transmissions whose links conflict.
    Conflict { time: f64, a: (NodeId, NodeId), b: (NodeId, NodeId) },
    /// Cumulative SINR at a receiver below the threshold.
    LowSinr { time: f64, link: (NodeId, NodeId), sinr: f64 },
    /// A record names a node missing from the network.
    UnknownLink { time: f64, link: (NodeId, NodeId) },
}

fn overlap(a: &TxRecord, b: &TxRecord) -> bool {
    a.start < b.end - EPS && b.start < a.end - EPS
}

/// Empty iff every set of simultaneously active links is pairwise
/// conflict-free and, under PhIM, each of them keeps SINR ≥ β against all
/// the others.
pub fn interference_audit(trace: &[TxRecord], net: &Network, model: &InterferenceModel) -> Vec<AuditViolation> {
    let mut order: Vec<&TxRecord> = trace.iter().collect();
    order.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut out = Vec::new();
    let mut active: Vec<(&TxRecord, Link)> = Vec::new();
    for rec in order {
        let (Some(s), Some(r)) = (net.node(rec.sender), net.node(rec.receiver)) else {
            out.push(AuditViolation::UnknownLink { time: rec.start, link: (rec.sender, rec.receiver) });
            continue;
        };
        active.retain(|(o, _)| overlap(o, rec));
        let link = Link::new(*s, *r);
        for (o, ol) in &active {
            if conflicts(&link, ol, model, net.tx_range()) {
                out.push(AuditViolation::Conflict {
                    time: rec.start,
                    a: (o.sender, o.receiver),
                    b: (rec.sender, rec.receiver),
                });
            }
        }
        active.push((rec, link));
        // The concurrent set only grows at a start, so checking here covers
        // every maximal set.
        if let InterferenceModel::Phim(params) = model {
            if active.len() > 1 {
                let senders: Vec<Node> = active.iter().map(|(_, l)| l.sender).collect();
                for (o, l) in &active {
                    match sinr(&senders, l, params) {
                        Ok(v) if v >= params.beta * (1.0 - 1e-12) => {}
                        Ok(v) => out.push(AuditViolation::LowSinr {
                            time: rec.start,
                            link: (o.sender, o.receiver),
                            sinr: v,
                        }),
                        // A receiver that is itself transmitting cannot receive.
                        Err(_) => out.push(AuditViolation::LowSinr {
                            time: rec.start,
                            link: (o.sender, o.receiver),
                            sinr: 0.0,
                        }),
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::PhimParams;

    fn rec(start: f64, end: f64, s: u32, r: u32) -> TxRecord {
        TxRecord {
            start,
            end,
            sender: NodeId(s),
            receiver: NodeId(r),
            query_id: 0,
            instance: 1,
            source: NodeId(s),
            delivered: true,
        }
    }

    fn net() -> Network {
        let nodes = vec![
            Node::new(0, 0.0, 0.0),
            Node::new(1, 30.0, 0.0),
            Node::new(2, 60.0, 0.0),
            Node::new(3, 90.0, 0.0),
        ];
        Network::new(nodes, NodeId(0), 35.0).unwrap()
    }

    #[test]
    fn adjacent_simultaneous_senders_conflict() {
        let trace = [rec(0.0, 1.0, 1, 0), rec(0.5, 1.5, 3, 2)];
        let v = interference_audit(&trace, &net(), &InterferenceModel::rts_cts());
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn sequential_transmissions_are_clean() {
        let trace = [rec(0.0, 1.0, 1, 0), rec(1.0, 2.0, 3, 2), rec(2.0, 3.0, 2, 1)];
        assert!(interference_audit(&trace, &net(), &InterferenceModel::rts_cts()).is_empty());
    }

    #[test]
    fn single_transmitter_is_clean() {
        let trace = [rec(0.0, 1.0, 1, 0)];
        let phim = InterferenceModel::Phim(PhimParams::for_range(35.0, 2.0, 4.0, 0.7));
        assert!(interference_audit(&trace, &net(), &phim).is_empty());
    }

    #[test]
    fn phim_flags_close_pairs() {
        let nodes = vec![
            Node::new(0, 0.0, 0.0),
            Node::new(1, 30.0, 0.0),
            Node::new(2, 35.0, 0.0),
            Node::new(3, 50.0, 0.0),
        ];
        let net = Network::new(nodes, NodeId(0), 35.0).unwrap();
        // node 3 transmits 20 away from node 1 while node 1 receives from 30 away
        let trace = [rec(0.0, 1.0, 0, 1), rec(0.0, 1.0, 3, 2)];
        let phim = InterferenceModel::Phim(PhimParams::for_range(35.0, 2.0, 4.0, 0.7));
        let v = interference_audit(&trace, &net, &phim);
        assert!(v.iter().any(|x| matches!(x, AuditViolation::LowSinr { .. })));
    }
}
