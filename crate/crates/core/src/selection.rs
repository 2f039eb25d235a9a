//! Maximum weighted query selection built on a 0-1 knapsack solver.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::InterferenceModel;
use crate::queries::Query;

/// Instances up to this size are solved exactly by branch and bound.
pub const EXACT_LIMIT: usize = 25;
/// Approximation parameter of the profit-scaling fallback.
pub const FPTAS_EPS: f64 = 0.01;
/// Largest instance accepted by the exhaustive optimum oracle.
pub const ORACLE_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnapsackItem {
    pub id: u32,
    pub size: f64,
    pub weight: f64,
}

impl KnapsackItem {
    pub fn from_query(q: &Query) -> Self {
        KnapsackItem { id: q.id, size: q.load(), weight: q.weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnapsackSolution {
    pub ids: BTreeSet<u32>,
    pub size: f64,
    pub weight: f64,
    /// False when the profit-scaling approximation was used.
    pub exact: bool,
}

impl KnapsackSolution {
    fn empty() -> Self {
        KnapsackSolution { ids: BTreeSet::new(), size: 0.0, weight: 0.0, exact: true }
    }

    fn from_items(items: &[KnapsackItem], exact: bool) -> Self {
        KnapsackSolution {
            ids: items.iter().map(|i| i.id).collect(),
            size: items.iter().map(|i| i.size).fold(0.0, |a, v| a + v),
            weight: items.iter().map(|i| i.weight).fold(0.0, |a, v| a + v),
            exact,
        }
    }
}

fn fits(size: f64, capacity: f64) -> bool {
    size <= capacity + 1e-12 * capacity.max(1.0)
}

fn tol(w: f64) -> f64 {
    1e-9 * w.abs().max(1.0)
}

/// Compares candidate `(weight, ids)` against the incumbent: heavier wins,
/// equal weights go to the lexicographically smaller id list.
fn better(weight: f64, ids: &[u32], best_weight: f64, best_ids: &[u32]) -> bool {
    let t = tol(best_weight);
    if weight > best_weight + t {
        return true;
    }
    weight >= best_weight - t && ids < best_ids
}

/// Solves 0-1 knapsack: exact for up to [`EXACT_LIMIT`] items, profit-scaling
/// FPTAS with [`FPTAS_EPS`] above that.
pub fn knapsack(items: &[KnapsackItem], capacity: f64) -> KnapsackSolution {
    if items.len() <= EXACT_LIMIT {
        knapsack_exact(items, capacity)
    } else {
        knapsack_fptas(items, capacity, FPTAS_EPS)
    }
}

/// Branch and bound with the fractional relaxation as upper bound.
pub fn knapsack_exact(items: &[KnapsackItem], capacity: f64) -> KnapsackSolution {
    let mut pool: Vec<KnapsackItem> =
        items.iter().copied().filter(|i| i.weight > 0.0 && fits(i.size, capacity)).collect();
    if pool.is_empty() {
        return KnapsackSolution::empty();
    }
    pool.sort_by(|a, b| {
        let ra = a.weight / a.size;
        let rb = b.weight / b.size;
        rb.total_cmp(&ra).then(a.id.cmp(&b.id))
    });
    let mut search = Search { items: &pool, capacity, best_weight: 0.0, best_ids: Vec::new(), chosen: Vec::new() };
    search.descend(0, 0.0, 0.0);
    let mut best: Vec<KnapsackItem> =
        pool.iter().copied().filter(|i| search.best_ids.contains(&i.id)).collect();
    best.sort_by_key(|i| i.id);
    KnapsackSolution::from_items(&best, true)
}

struct Search<'a> {
    items: &'a [KnapsackItem],
    capacity: f64,
    best_weight: f64,
    best_ids: Vec<u32>,
    chosen: Vec<u32>,
}

impl Search<'_> {
    fn bound(&self, from: usize, size: f64, weight: f64) -> f64 {
        let mut room = self.capacity - size;
        let mut b = weight;
        for it in &self.items[from..] {
            if it.size <= room {
                room -= it.size;
                b += it.weight;
            } else {
                b += it.weight * (room / it.size).max(0.0);
                break;
            }
        }
        b
    }

    fn descend(&mut self, i: usize, size: f64, weight: f64) {
        if i == self.items.len() {
            let mut ids = self.chosen.clone();
            ids.sort_unstable();
            if better(weight, &ids, self.best_weight, &self.best_ids) {
                self.best_weight = weight;
                self.best_ids = ids;
            }
            return;
        }
        if self.bound(i, size, weight) < self.best_weight - tol(self.best_weight) {
            return;
        }
        let it = self.items[i];
        if fits(size + it.size, self.capacity) {
            self.chosen.push(it.id);
            self.descend(i + 1, size + it.size, weight + it.weight);
            self.chosen.pop();
        }
        self.descend(i + 1, size, weight);
    }
}

/// Profit-scaling dynamic program: the result weighs at least `(1 - eps)`
/// times the optimum.
pub fn knapsack_fptas(items: &[KnapsackItem], capacity: f64, eps: f64) -> KnapsackSolution {
    let mut pool: Vec<KnapsackItem> =
        items.iter().copied().filter(|i| i.weight > 0.0 && fits(i.size, capacity)).collect();
    if pool.is_empty() {
        return KnapsackSolution::empty();
    }
    pool.sort_by_key(|i| i.id);
    let n = pool.len();
    let pmax = pool.iter().map(|i| i.weight).fold(0.0, f64::max);
    let scale = eps * pmax / n as f64;
    let scaled: Vec<usize> = pool.iter().map(|i| (i.weight / scale).floor() as usize).collect();
    let total: usize = scaled.iter().sum();
    // min_size[p] = smallest size reaching scaled profit exactly p
    let mut min_size = vec![f64::INFINITY; total + 1];
    min_size[0] = 0.0;
    let words = (total + 1).div_ceil(64);
    let mut took = vec![vec![0u64; words]; n];
    let mut reach = 0;
    for (k, it) in pool.iter().enumerate() {
        let p = scaled[k];
        for q in (p..=reach + p).rev() {
            let cand = min_size[q - p] + it.size;
            if cand < min_size[q] && fits(cand, capacity) {
                min_size[q] = cand;
                took[k][q / 64] |= 1 << (q % 64);
            }
        }
        reach += p;
    }
    let mut q = (0..=total).rev().find(|&q| min_size[q].is_finite()).unwrap_or(0);
    let mut picked = Vec::new();
    for k in (0..n).rev() {
        if took[k][q / 64] >> (q % 64) & 1 == 1 {
            picked.push(pool[k]);
            q -= scaled[k];
        }
    }
    picked.sort_by_key(|i| i.id);
    KnapsackSolution::from_items(&picked, false)
}

/// Every subset, for oracle use on small instances.
pub fn knapsack_exhaustive(items: &[KnapsackItem], capacity: f64) -> Result<KnapsackSolution> {
    if items.len() > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge { size: items.len(), limit: ORACLE_LIMIT });
    }
    let mut best = KnapsackSolution::empty();
    let mut best_ids: Vec<u32> = Vec::new();
    for mask in 0u32..(1 << items.len()) {
        let subset: Vec<KnapsackItem> =
            (0..items.len()).filter(|b| mask >> b & 1 == 1).map(|b| items[b]).collect();
        let size: f64 = subset.iter().map(|i| i.size).fold(0.0, |a, v| a + v);
        if !fits(size, capacity) {
            continue;
        }
        let weight: f64 = subset.iter().map(|i| i.weight).fold(0.0, |a, v| a + v);
        let mut ids: Vec<u32> = subset.iter().map(|i| i.id).collect();
        ids.sort_unstable();
        if better(weight, &ids, best.weight, &best_ids) {
            best = KnapsackSolution::from_items(&subset, true);
            best_ids = ids;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Single,
    Knapsack,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub ids: BTreeSet<u32>,
    pub weight: f64,
    /// Which candidate won; `None` when nothing could be selected.
    pub phase: Option<Phase>,
    /// Knapsack capacity `0.69 / (c2·c3)`.
    pub capacity: f64,
    pub single: Option<(u32, f64)>,
    pub packed: KnapsackSolution,
}

/// Takes the heavier of the best single query of load at most 1 and the
/// knapsack solution at capacity `0.69 / (c2·c3)`. Ties go to the knapsack.
pub fn select_queries(queries: &[Query], model: &InterferenceModel) -> Result<Selection> {
    let capacity = model.sufficient_threshold()?;
    let items: Vec<KnapsackItem> = queries.iter().map(KnapsackItem::from_query).collect();
    let single = items
        .iter()
        .filter(|i| fits(i.size, 1.0))
        .max_by(|a, b| a.weight.total_cmp(&b.weight).then(b.id.cmp(&a.id)))
        .map(|i| (i.id, i.weight));
    let packed = knapsack(&items, capacity);
    let single_weight = single.map_or(0.0, |s| s.1);
    let (ids, weight, phase) = if packed.ids.is_empty() && single.is_none() {
        (BTreeSet::new(), 0.0, None)
    } else if single_weight > packed.weight {
        let (id, w) = single.expect("positive weight implies a candidate");
        (BTreeSet::from([id]), w, Some(Phase::Single))
    } else {
        (packed.ids.clone(), packed.weight, Some(Phase::Knapsack))
    };
    Ok(Selection { ids, weight, phase, capacity, single, packed })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationReport {
    pub selected_weight: f64,
    /// Exhaustive optimum of the knapsack at capacity 1.
    pub optimum: f64,
    pub capacity: f64,
    pub ratio: f64,
    pub holds: bool,
}

/// Compares the selection weight against the capacity-1 knapsack optimum
/// and checks `w(A) >= (d/2)·OPT`.
pub fn approximation_check(queries: &[Query], model: &InterferenceModel) -> Result<ApproximationReport> {
    let items: Vec<KnapsackItem> = queries.iter().map(KnapsackItem::from_query).collect();
    let opt = knapsack_exhaustive(&items, 1.0)?;
    let sel = select_queries(queries, model)?;
    let ratio = if opt.weight > 0.0 { sel.weight / opt.weight } else { 1.0 };
    let holds = sel.weight >= sel.capacity / 2.0 * opt.weight - tol(opt.weight);
    Ok(ApproximationReport { selected_weight: sel.weight, optimum: opt.weight, capacity: sel.capacity, ratio, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::NodeId;
    use crate::queries::sufficient_condition;

    fn item(id: u32, size: f64, weight: f64) -> KnapsackItem {
        KnapsackItem { id, size, weight }
    }

    /// A query whose load equals `size` exactly: one source, period 1.
    fn query(id: u32, size: f64, weight: f64) -> Query {
        Query::new(id, [NodeId(1)].into(), size, 1.0, 0.0, 10.0, weight).unwrap()
    }

    #[test]
    fn small_knapsack_example() {
        let items = [item(0, 0.6, 10.0), item(1, 0.5, 8.0), item(2, 0.4, 7.0)];
        let s = knapsack(&items, 1.0);
        assert_eq!(s.ids, BTreeSet::from([0, 2]));
        assert_eq!(s.weight, 17.0);
        assert!(knapsack(&items, 0.0).ids.is_empty());
        let one = knapsack(&[item(4, 0.3, 2.0)], 0.5);
        assert_eq!(one.ids, BTreeSet::from([4]));
    }

    #[test]
    fn ties_pick_smallest_ids() {
        let items = [item(3, 0.5, 1.0), item(1, 0.5, 1.0), item(2, 0.5, 1.0)];
        let s = knapsack(&items, 0.5);
        assert_eq!(s.ids, BTreeSet::from([1]));
        let e = knapsack_exhaustive(&items, 0.5).unwrap();
        assert_eq!(e.ids, s.ids);
    }

    #[test]
    fn fptas_close_to_exact() {
        let items: Vec<KnapsackItem> =
            (0..30).map(|i| item(i, 0.05 + (i % 7) as f64 * 0.013, 1.0 + (i * 37 % 11) as f64)).collect();
        let approx = knapsack_fptas(&items, 0.8, FPTAS_EPS);
        let exact = knapsack_exact(&items, 0.8);
        assert!(approx.size <= 0.8 + 1e-12);
        assert!(approx.weight >= (1.0 - FPTAS_EPS) * exact.weight - 1e-9);
        assert!(!approx.exact);
        assert!(knapsack(&items, 0.8).weight >= (1.0 - FPTAS_EPS) * exact.weight - 1e-9);
    }

    #[test]
    fn single_beats_packing() {
        let m = InterferenceModel::rts_cts();
        let d = m.sufficient_threshold().unwrap();
        let mut qs = vec![query(0, 0.9, 100.0)];
        qs.extend((1..=10).map(|i| query(i, d / 10.0, 5.0)));
        let sel = select_queries(&qs, &m).unwrap();
        assert_eq!(sel.ids, BTreeSet::from([0]));
        assert_eq!(sel.weight, 100.0);
        assert_eq!(sel.phase, Some(Phase::Single));
        assert!((sel.packed.weight - 50.0).abs() < 1e-9);
    }

    #[test]
    fn nothing_fits() {
        let m = InterferenceModel::rts_cts();
        let qs = vec![query(0, 1.5, 3.0), query(1, 2.0, 4.0)];
        let sel = select_queries(&qs, &m).unwrap();
        assert!(sel.ids.is_empty());
        assert_eq!(sel.weight, 0.0);
        assert_eq!(sel.phase, None);
    }

    #[test]
    fn small_query_selected_by_knapsack() {
        let m = InterferenceModel::rts_cts();
        let d = m.sufficient_threshold().unwrap();
        let qs = vec![query(7, d / 2.0, 1.0)];
        let sel = select_queries(&qs, &m).unwrap();
        assert_eq!(sel.ids, BTreeSet::from([7]));
        assert_eq!(sel.phase, Some(Phase::Knapsack));
        let chosen: Vec<Query> = qs.iter().filter(|q| sel.ids.contains(&q.id)).cloned().collect();
        assert!(sufficient_condition(&chosen, &m).unwrap().passed());
    }

    #[test]
    fn approximation_on_easy_instance() {
        let m = InterferenceModel::rts_cts();
        let d = m.sufficient_threshold().unwrap();
        let qs: Vec<Query> = (0..4).map(|i| query(i, d / 5.0, 1.0 + i as f64)).collect();
        let r = approximation_check(&qs, &m).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12);
        assert!(r.holds);
    }

    #[test]
    fn approximation_adversarial() {
        let m = InterferenceModel::rts_cts();
        let mut qs = vec![query(0, 1.0, 50.0)];
        qs.extend((1..10).map(|i| query(i, 0.1, 5.0)));
        let r = approximation_check(&qs, &m).unwrap();
        assert!(r.ratio >= 0.5);
        assert!(r.holds);
    }

    #[test]
    fn oracle_limit() {
        let m = InterferenceModel::rts_cts();
        let qs: Vec<Query> = (0..21).map(|i| query(i, 0.01, 1.0)).collect();
        assert!(matches!(approximation_check(&qs, &m), Err(Error::OracleTooLarge { size: 21, limit: 20 })));
    }
}
