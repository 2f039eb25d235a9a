//! Parameter sweeps over generated scenarios.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{run_scenario, SimConfig, SourceSelection};

pub const SWEEP_CSV_HEADER: &str =
    "sweep,param,seed,nodes,success_ratio,rounds,successful_rounds,drops,offered_load,demand,queries_released";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Network size; sources follow the base configuration.
    Size,
    /// Sources per query at the base network size.
    Sources,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Size => "size",
            SweepKind::Sources => "sources",
        }
    }
}

/// `kind:from:to:step`, inclusive of `to` when the steps land on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub from: usize,
    pub to: usize,
    pub step: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<usize> {
        (self.from..=self.to).step_by(self.step).collect()
    }
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("sweep must look like size:50:250:25, got {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(bad());
        }
        let kind = match parts[0] {
            "size" => SweepKind::Size,
            "sources" => SweepKind::Sources,
            _ => return Err(bad()),
        };
        let num = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
        let spec = SweepSpec { kind, from: num(parts[1])?, to: num(parts[2])?, step: num(parts[3])? };
        if spec.step == 0 || spec.from == 0 || spec.to < spec.from {
            return Err(Error::InvalidInput(format!("sweep range {s:?} is empty")));
        }
        Ok(spec)
    }
}

impl fmt::Display for SweepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.kind.name(), self.from, self.to, self.step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: SweepKind,
    pub param: usize,
    pub seed: u64,
    pub nodes: usize,
    pub success_ratio: f64,
    pub rounds: usize,
    pub successful_rounds: usize,
    pub drops: u64,
    pub offered_load: f64,
    pub demand: f64,
    pub queries_released: usize,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.sweep.name(),
            self.param,
            self.seed,
            self.nodes,
            self.success_ratio,
            self.rounds,
            self.successful_rounds,
            self.drops,
            self.offered_load,
            self.demand,
            self.queries_released
        )
    }
}

fn run_point(base: &SimConfig, kind: SweepKind, param: usize, seed: u64) -> Result<SweepRow> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    match kind {
        SweepKind::Size => cfg.node_count = param,
        SweepKind::Sources => cfg.source_selection = SourceSelection::Count { count: param },
    }
    let m = run_scenario(&cfg)?.metrics;
    Ok(SweepRow {
        sweep: kind,
        param,
        seed,
        nodes: m.nodes,
        success_ratio: m.success_ratio,
        rounds: m.rounds,
        successful_rounds: m.successful_rounds,
        drops: m.drops(),
        offered_load: m.offered_load,
        demand: m.demand,
        queries_released: m.queries_released,
    })
}

/// One row per `(param, seed)`, ordered by parameter then seed. Points run
/// on all available cores.
pub fn run_sweep(base: &SimConfig, spec: &SweepSpec, seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let jobs: Vec<(usize, u64)> =
        spec.values().into_iter().flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SweepRow>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(param, seed)) = jobs.get(i) else { break };
                let row = run_point(base, spec.kind, param, seed);
                *slots[i].lock().expect("sweep slot") = Some(row);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("sweep slot").expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_expand() {
        let s: SweepSpec = "size:50:250:25".parse().unwrap();
        assert_eq!(s.values().len(), 9);
        let s: SweepSpec = "sources:10:100:10".parse().unwrap();
        assert_eq!(s.values().len(), 10);
        assert_eq!(s.to_string(), "sources:10:100:10");
        let s: SweepSpec = "size:80:80:5".parse().unwrap();
        assert_eq!(s.values(), vec![80]);
        assert!("size:50:10:5".parse::<SweepSpec>().is_err());
        assert!("width:1:2:1".parse::<SweepSpec>().is_err());
        assert!("size:1:2:0".parse::<SweepSpec>().is_err());
    }

    #[test]
    fn single_point_sweep_gives_one_row() {
        let base = SimConfig { node_count: 20, duration: 200.0, max_queries: 2, ..Default::default() };
        let spec: SweepSpec = "size:20:20:1".parse().unwrap();
        let rows = run_sweep(&base, &spec, &[3]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].nodes, 20);
        assert_eq!(rows[0].csv().split(',').count(), SWEEP_CSV_HEADER.split(',').count());
    }
}
