use std::collections::VecDeque;

use super::LayerAdj;
use crate::dataset::{by_dist_then_id, DistanceCounter, VectorSet};
use crate::error::{invalid, Result};
use crate::graph::ProximityGraph;
use crate::params::BuildParams;

/// Nodes reachable from `start` by following out-edges.
pub fn reachable_from(adj: &[Vec<u32>], start: u32) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    spread(adj, start, &mut seen);
    seen
}

fn spread(adj: &[Vec<u32>], start: u32, seen: &mut [bool]) {
    let mut queue = VecDeque::from([start]);
    seen[start as usize] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u as usize] {
            if !seen[v as usize] {
                seen[v as usize] = true;
                queue.push_back(v);
            }
        }
    }
}

/// Repeatedly takes the lowest-id unreached node and links to it from its
/// nearest reached node, preferring nodes below `max_degree`. Returns the
/// number of edges added.
pub(crate) fn link_unreached(
    adj: &mut LayerAdj,
    data: &VectorSet,
    entry: u32,
    max_degree: Option<usize>,
    counter: &DistanceCounter,
) -> usize {
    let n = adj.ids.len();
    let mut reached = reachable_from(&adj.ids, entry);
    let mut added = 0;
    let mut next = 0;
    loop {
        while next < n && reached[next] {
            next += 1;
        }
        if next == n {
            return added;
        }
        let x = next as u32;
        let mut best_open: Option<(f32, u32)> = None;
        let mut best_any: Option<(f32, u32)> = None;
        for r in (0..n as u32).filter(|&r| reached[r as usize]) {
            let d = data.sq_dist_ids(x, r, counter);
            let closer = |b: Option<(f32, u32)>| b.is_none_or(|b| by_dist_then_id((d, r), b).is_lt());
            if closer(best_any) {
                best_any = Some((d, r));
            }
            let open = max_degree.is_none_or(|cap| adj.ids[r as usize].len() < cap);
            if open && closer(best_open) {
                best_open = Some((d, r));
            }
        }
        let (d, r) = best_open.or(best_any).expect("entry is always reached");
        adj.ids[r as usize].push(x);
        adj.dists[r as usize].push(d);
        added += 1;
        spread(&adj.ids, x, &mut reached);
    }
}

/// Makes every node of a flat graph reachable from its entry point,
/// respecting the graph's degree limit where some reached node has room.
/// Returns the number of edges added.
pub fn ensure_connectivity(g: &mut ProximityGraph, data: &VectorSet, counter: &DistanceCounter) -> Result<usize> {
    if g.max_layer() != 0 {
        return invalid("connectivity repair needs a flat graph");
    }
    if g.len() != data.len() {
        return invalid(format!("graph has {} nodes, dataset {}", g.len(), data.len()));
    }
    let cap = match g.params() {
        BuildParams::Vamana(p) => Some(p.m),
        BuildParams::Nsg(p) => Some(p.m),
        BuildParams::Hnsw(p) => Some(p.degree_cap(0)),
    };
    let base = g.base_layer_mut();
    let mut adj = LayerAdj {
        dists: base.iter().map(|l| vec![f32::NAN; l.len()]).collect(),
        ids: std::mem::take(base),
    };
    let entry = g.entry_point();
    let added = link_unreached(&mut adj, data, entry, cap, counter);
    *g.base_layer_mut() = adj.ids;
    g.validate()?;
    Ok(added)
}
