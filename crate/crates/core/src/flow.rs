//! Exact min-cost transportation on a dense bipartite graph.
//!
//! Successive shortest augmenting paths with node potentials: supplies and
//! demands are nonnegative integer unit counts, so every intermediate flow is
//! an exact integer and the algorithm terminates without degeneracy cycling.
//! Arc costs are floats; reduced costs are clamped at zero so Dijkstra keys
//! never go negative from rounding dust.
//!
//! Determinism: heap ties break on node index, the entering target on each
//! augmentation is the lowest-index cheapest deficit node, and backward arcs
//! are scanned in source order. Re-running on the same instance reproduces
//! the same flow.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};

use crate::error::{Error, Result};

const UNSET: u32 = u32::MAX;

#[derive(PartialEq)]
struct HeapKey(f64, u32);

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Solves the balanced transportation problem
/// `min sum cost[i * n1 + j] * f[i, j]` subject to row sums = `supplies`,
/// column sums = `demands`, `f >= 0`.
///
/// Returns positive flows as `(source, target, units)` sorted by
/// `(source, target)`. All costs must be finite and nonnegative.
pub(crate) fn min_cost_transport(
    supplies: &[i64],
    demands: &[i64],
    cost: &[f64],
) -> Result<Vec<(usize, usize, i64)>> {
    let n0 = supplies.len();
    let n1 = demands.len();
    assert_eq!(cost.len(), n0 * n1, "cost matrix shape mismatch");
    debug_assert!(cost.iter().all(|c| c.is_finite() && *c >= 0.0));

    let total_supply: i64 = supplies.iter().sum();
    let total_demand: i64 = demands.iter().sum();
    if total_supply != total_demand {
        return Err(Error::Numerical(format!(
            "transportation instance is not balanced: {total_supply} vs {total_demand} units"
        )));
    }
    if supplies.iter().chain(demands).any(|u| *u < 0) {
        return Err(Error::Numerical("negative supply or demand units".into()));
    }

    let n_nodes = n0 + n1;
    let mut remaining_supply = supplies.to_vec();
    let mut remaining_demand = demands.to_vec();
    let mut remaining_total = total_supply;

    // flow_by_target[j]: source -> positive units, kept in source order.
    let mut flow_by_target: Vec<BTreeMap<u32, i64>> = vec![BTreeMap::new(); n1];
    let mut potential = vec![0.0f64; n_nodes];

    let mut dist = vec![f64::INFINITY; n_nodes];
    let mut prev = vec![UNSET; n_nodes];
    let mut done = vec![false; n_nodes];

    while remaining_total > 0 {
        dist.fill(f64::INFINITY);
        prev.fill(UNSET);
        done.fill(false);
        let mut heap = BinaryHeap::new();
        for (i, s) in remaining_supply.iter().enumerate() {
            if *s > 0 {
                dist[i] = 0.0;
                heap.push(Reverse(HeapKey(0.0, i as u32)));
            }
        }

        while let Some(Reverse(HeapKey(d, v))) = heap.pop() {
            let v = v as usize;
            if done[v] {
                continue;
            }
            done[v] = true;
            if v < n0 {
                // Forward arcs: source v to every target.
                let row = &cost[v * n1..(v + 1) * n1];
                for (j, c) in row.iter().enumerate() {
                    let t = n0 + j;
                    if done[t] {
                        continue;
                    }
                    let rc = (c + potential[v] - potential[t]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[t] {
                        dist[t] = nd;
                        prev[t] = v as u32;
                        heap.push(Reverse(HeapKey(nd, t as u32)));
                    }
                }
            } else {
                // Backward arcs: target v to sources currently feeding it.
                let j = v - n0;
                for &i in flow_by_target[j].keys() {
                    let i = i as usize;
                    if done[i] {
                        continue;
                    }
                    let rc = (potential[v] - potential[i] - cost[i * n1 + j]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[i] {
                        dist[i] = nd;
                        prev[i] = v as u32;
                        heap.push(Reverse(HeapKey(nd, i as u32)));
                    }
                }
            }
        }

        // Cheapest target that still needs mass; lowest index on ties.
        let mut best: Option<(f64, usize)> = None;
        for (j, r) in remaining_demand.iter().enumerate() {
            if *r > 0 && dist[n0 + j].is_finite() {
                let key = (dist[n0 + j], j);
                if best.map_or(true, |(bd, bj)| key < (bd, bj)) {
                    best = Some(key);
                }
            }
        }
        let Some((_, best_j)) = best else {
            return Err(Error::Numerical(
                "no augmenting path while supply remains; instance disconnected".into(),
            ));
        };
        let sink = n0 + best_j;

        for v in 0..n_nodes {
            if dist[v].is_finite() {
                potential[v] += dist[v];
            }
        }

        // Bottleneck along the path (path alternates target <- source <- ...).
        let mut delta = remaining_demand[best_j];
        let mut cur = sink;
        while prev[cur] != UNSET {
            let p = prev[cur] as usize;
            if cur >= n0 {
                // forward arc p -> cur: uncapacitated
            } else {
                // backward arc cur <- (target p): bounded by existing flow
                let f = flow_by_target[p - n0][&(cur as u32)];
                delta = delta.min(f);
            }
            cur = p;
        }
        let origin = cur;
        debug_assert!(origin < n0 && remaining_supply[origin] > 0);
        delta = delta.min(remaining_supply[origin]);
        debug_assert!(delta > 0);

        let mut cur = sink;
        while prev[cur] != UNSET {
            let p = prev[cur] as usize;
            if cur >= n0 {
                *flow_by_target[cur - n0].entry(p as u32).or_insert(0) += delta;
            } else {
                let j = p - n0;
                let f = flow_by_target[j].get_mut(&(cur as u32)).unwrap();
                *f -= delta;
                if *f == 0 {
                    flow_by_target[j].remove(&(cur as u32));
                }
            }
            cur = p;
        }
        remaining_supply[origin] -= delta;
        remaining_demand[best_j] -= delta;
        remaining_total -= delta;
    }

    let mut flows = Vec::new();
    for (j, row) in flow_by_target.iter().enumerate() {
        for (&i, &f) in row {
            debug_assert!(f > 0);
            flows.push((i as usize, j, f));
        }
    }
    flows.sort_unstable();
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow_cost(flows: &[(usize, usize, i64)], cost: &[f64], n1: usize) -> f64 {
        flows.iter().map(|(i, j, f)| cost[i * n1 + j] * *f as f64).sum()
    }

    #[test]
    fn forced_singleton() {
        let flows = min_cost_transport(&[5], &[5], &[3.0]).unwrap();
        assert_eq!(flows, vec![(0, 0, 5)]);
    }

    #[test]
    fn two_by_two_prefers_cheap_diagonal() {
        // Diagonal costs 1, off-diagonal costs 10.
        let cost = vec![1.0, 10.0, 10.0, 1.0];
        let flows = min_cost_transport(&[3, 3], &[3, 3], &cost).unwrap();
        assert_eq!(flows, vec![(0, 0, 3), (1, 1, 3)]);
    }

    #[test]
    fn requires_rerouting_through_residual_arcs() {
        // Supplies force a non-greedy split: the cheapest arc for source 0 is
        // target 0, but demand there must be shared with source 1 whose only
        // cheap arc is also target 0.
        let cost = vec![
            0.0, 1.0, //
            0.0, 5.0,
        ];
        let flows = min_cost_transport(&[4, 4], &[4, 4], &cost).unwrap();
        let total = flow_cost(&flows, &cost, 2);
        // Optimum: source 1 takes all of target 0 (cost 0), source 0 sends
        // everything to target 1 (cost 4).
        assert_eq!(total, 4.0);
    }

    #[test]
    fn matches_exhaustive_three_by_three() {
        // Brute-force all integral flows for a small instance and compare.
        let supplies = [2i64, 1, 3];
        let demands = [3i64, 2, 1];
        let cost = vec![4.0, 2.0, 5.0, 1.0, 7.0, 3.0, 6.0, 2.0, 1.0];

        fn enumerate(
            cell: usize,
            row_rem: &mut [i64],
            col_rem: &mut [i64],
            cost: &[f64],
            acc: f64,
            best: &mut f64,
        ) {
            let n1 = col_rem.len();
            if cell == row_rem.len() * n1 {
                if row_rem.iter().all(|r| *r == 0) {
                    *best = best.min(acc);
                }
                return;
            }
            let (i, j) = (cell / n1, cell % n1);
            let max_q = row_rem[i].min(col_rem[j]);
            for q in 0..=max_q {
                row_rem[i] -= q;
                col_rem[j] -= q;
                enumerate(cell + 1, row_rem, col_rem, cost, acc + q as f64 * cost[i * n1 + j], best);
                row_rem[i] += q;
                col_rem[j] += q;
            }
        }

        let mut best = f64::INFINITY;
        enumerate(
            0,
            &mut supplies.to_vec(),
            &mut demands.to_vec(),
            &cost,
            0.0,
            &mut best,
        );

        let flows = min_cost_transport(&supplies, &demands, &cost).unwrap();
        let total = flow_cost(&flows, &cost, 3);
        assert!((total - best).abs() < 1e-12, "{total} vs {best}");
        // Marginals are exact.
        let mut rows = [0i64; 3];
        let mut cols = [0i64; 3];
        for (i, j, f) in &flows {
            rows[*i] += f;
            cols[*j] += f;
        }
        assert_eq!(rows, supplies);
        assert_eq!(cols, demands);
    }

    #[test]
    fn rejects_unbalanced_units() {
        assert!(min_cost_transport(&[1], &[2], &[0.0]).is_err());
    }
}
