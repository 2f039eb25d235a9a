//! Plain-text file formats.
//!
//! Topology:
//!
//! ```text
//! # comment
//! sink 0
//! range 50
//! 0 200 200        # node id, x, y
//! 1 230.5 190
//! link 0 1         # optional; when present only listed links exist
//! ```
//!
//! Queries, one per line: `id sources chi period release deadline weight`
//! with `sources` a comma-separated id list, e.g. `0 3,7,9 0.1 20 0 80 1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::netmodel::{build_links, Network, Node, NodeId};
use crate::queries::Query;
use crate::routing::RoutingTree;
use crate::scheduler::FrameSchedule;
use crate::sim::RoundRecord;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Non-empty, comment-stripped lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| parse_err(line, format!("bad {what}: {field:?}")))
}

pub fn parse_topology(text: &str) -> Result<Network> {
    let mut sink = None;
    let mut range = None;
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut seen = BTreeSet::new();
    let mut last_line = 0;
    for (ln, line) in content_lines(text) {
        last_line = ln;
        let f: Vec<&str> = line.split_whitespace().collect();
        match f[0] {
            "sink" if f.len() == 2 => sink = Some(NodeId(num(ln, f[1], "sink id")?)),
            "range" if f.len() == 2 => range = Some(num::<f64>(ln, f[1], "range")?),
            "link" if f.len() == 3 => {
                links.push((NodeId(num(ln, f[1], "node id")?), NodeId(num(ln, f[2], "node id")?)));
            }
            "sink" | "range" | "link" => return Err(parse_err(ln, format!("wrong field count in {line:?}"))),
            _ if f.len() == 3 => {
                let id: u32 = num(ln, f[0], "node id")?;
                if !seen.insert(id) {
                    return Err(parse_err(ln, format!("duplicate node id {id}")));
                }
                nodes.push(Node::new(id, num(ln, f[1], "x")?, num(ln, f[2], "y")?));
            }
            _ => return Err(parse_err(ln, format!("expected `id x y`, got {line:?}"))),
        }
    }
    let sink = sink.ok_or_else(|| parse_err(last_line, "missing `sink <id>` line"))?;
    let range = range.ok_or_else(|| parse_err(last_line, "missing `range <value>` line"))?;
    if links.is_empty() {
        Network::new(nodes, sink, range)
    } else {
        Network::with_links(nodes, sink, range, &links)
    }
}

pub fn write_topology(net: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sink {}", net.sink());
    let _ = writeln!(out, "range {}", net.tx_range());
    for n in net.nodes() {
        let _ = writeln!(out, "{} {} {}", n.id, n.pos.x, n.pos.y);
    }
    let links = net.links();
    let disk = build_links(net.nodes(), net.tx_range()).unwrap_or_default();
    if links != disk {
        for (a, b) in links {
            let _ = writeln!(out, "link {a} {b}");
        }
    }
    out
}

pub fn parse_queries(text: &str) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (ln, line) in content_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 7 {
            return Err(parse_err(ln, format!("expected 7 fields `id sources chi period release deadline weight`, got {}", f.len())));
        }
        let id: u32 = num(ln, f[0], "query id")?;
        if !ids.insert(id) {
            return Err(parse_err(ln, format!("duplicate query id {id}")));
        }
        let sources = f[1]
            .split(',')
            .map(|s| num::<u32>(ln, s.trim(), "source id").map(NodeId))
            .collect::<Result<BTreeSet<_>>>()?;
        let q = Query {
            id,
            sources,
            chi: num(ln, f[2], "chi")?,
            period: num(ln, f[3], "period")?,
            release: num(ln, f[4], "release")?,
            deadline: num(ln, f[5], "deadline")?,
            weight: num(ln, f[6], "weight")?,
        };
        q.validate().map_err(|e| parse_err(ln, e.to_string()))?;
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries(queries: &[Query]) -> String {
    let mut out = String::new();
    for q in queries {
        let src: Vec<String> = q.sources.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {}",
            q.id,
            src.join(","),
            q.chi,
            q.period,
            q.release,
            q.deadline,
            q.weight
        );
    }
    out
}

/// `query child parent` rows; the full spanning tree uses query `-1`.
pub fn write_trees<'a>(trees: impl IntoIterator<Item = &'a RoutingTree>) -> String {
    let mut out = String::from("# query child parent\n");
    for t in trees {
        for (q, c, p) in t.records() {
            let _ = writeln!(out, "{q} {c} {p}");
        }
    }
    out
}

/// `color v h node start duration` rows, start relative to the frame.
pub fn write_frame(frame: &FrameSchedule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# frame length {} (T = {}, colors = {})", frame.frame_length(), frame.frame_t, frame.color_count);
    let _ = writeln!(out, "# color v h node start duration");
    for s in frame.records() {
        let _ = writeln!(out, "{} {} {} {} {} {}", s.color, s.region.v, s.region.h, s.node, s.start, s.duration);
    }
    out
}

/// `query instance released deadline delivered success` rows.
pub fn write_rounds(rounds: &[RoundRecord]) -> String {
    let mut out = String::from("# query instance released deadline delivered success\n");
    for r in rounds {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            r.query_id,
            r.instance,
            r.released_at,
            r.deadline_at,
            r.delivered_sources.len(),
            r.success
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOPO: &str = "# small line\nsink 0\nrange 50\n0 0 0\n1 40 0   # relay\n2 80 0\n";

    #[test]
    fn topology_round_trip() {
        let net = parse_topology(TOPO).unwrap();
        assert_eq!(net.len(), 3);
        assert_eq!(net.sink(), NodeId(0));
        let again = parse_topology(&write_topology(&net)).unwrap();
        assert_eq!(again.nodes(), net.nodes());
        assert_eq!(again.links(), net.links());
        assert!(!write_topology(&net).contains("link"));
    }

    #[test]
    fn explicit_links_round_trip() {
        let text = "sink 0\nrange 50\n0 0 0\n1 10 0\n2 20 0\nlink 0 1\nlink 1 2\n";
        let net = parse_topology(text).unwrap();
        assert!(!net.has_link(NodeId(0), NodeId(2)));
        let written = write_topology(&net);
        assert!(written.contains("link 0 1"));
        assert_eq!(parse_topology(&written).unwrap().links(), net.links());
    }

    #[test]
    fn topology_errors_carry_line() {
        let err = parse_topology("sink 0\nrange 50\n0 0 0\n1 x 0\n").unwrap_err();
        assert_eq!(err, Error::Parse { line: 4, msg: "bad x: \"x\"".into() });
        assert!(matches!(parse_topology("range 5\n0 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_topology("sink 0\nrange 5\n0 0 0\n0 1 1\n"), Err(Error::Parse { line: 4, .. })));
        assert!(matches!(parse_topology("sink 0\nrange 5\n0 0 0\n1 100 0\n"), Err(Error::Disconnected(_))));
    }

    #[test]
    fn query_round_trip() {
        let text = "0 1,2 0.1 20 0 80 1\n# second\n1 2 0.25 10.5 3 40 2.5\n";
        let qs = parse_queries(text).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].sources, [NodeId(1), NodeId(2)].into());
        assert_eq!(parse_queries(&write_queries(&qs)).unwrap(), qs);
        assert!(parse_queries("").unwrap().is_empty());
    }

    #[test]
    fn query_errors_carry_line() {
        assert!(matches!(parse_queries("0 1 0.1 20 0 80\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_queries("\n\n0 1 0.1 -2 0 80 1\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_queries("0 1 0.1 2 0 8 1\n0 2 0.1 2 0 8 1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_queries("0 1,a 0.1 2 0 8 1\n"), Err(Error::Parse { line: 1, .. })));
    }
}
