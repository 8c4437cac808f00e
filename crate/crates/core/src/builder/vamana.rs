use std::collections::HashMap;

use super::connectivity::link_unreached;
use super::knng::build_initial_knng;
use super::random::random_neighbors;
use super::{construction_search, BuildOptions, LayerAdj, Work};
use crate::dataset::VectorSet;
use crate::error::Result;
use crate::graph::{DistanceCache, ProximityGraph, SearchScratch};
use crate::params::{BuildParams, NsgParams, VamanaParams};
use crate::prune::{mprune, PrunedNeighbors};

/// Graph indices ordered by ascending `alpha`, ties by position, so that
/// each consecutive prune of a node may reuse the one before it.
fn alpha_order(alphas: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&a, &b| alphas[a].total_cmp(&alphas[b]));
    order
}

/// Single pass over nodes in id order starting from a random regular graph.
/// The entry is the node nearest the centroid.
pub(super) fn build(
    data: &VectorSet,
    params: &[VamanaParams],
    opts: &BuildOptions,
) -> Result<(Vec<ProximityGraph>, Vec<Work>)> {
    let n = data.len();
    let mut works: Vec<Work> = params.iter().map(|_| Work::new(opts.record_pairs)).collect();
    let entry = works[0].timed(|w| data.medoid_of_centroid(&w.connect));
    let mut adjs: Vec<LayerAdj> = Vec::with_capacity(params.len());
    for (p, w) in params.iter().zip(works.iter_mut()) {
        adjs.push(w.timed(|_| {
            let mut a = LayerAdj::new(n);
            for u in 0..n as u32 {
                let ids = random_neighbors(opts.seed, u, n, p.m);
                a.dists[u as usize] = vec![f32::NAN; ids.len()];
                a.ids[u as usize] = ids;
            }
            a
        }));
    }
    let order = alpha_order(&params.iter().map(|p| p.alpha).collect::<Vec<_>>());
    let mut cache = DistanceCache::new(n);
    let mut scratch = SearchScratch::new(n);

    for u in 0..n as u32 {
        cache.begin(Some(u), n);
        let mut prev: Option<(PrunedNeighbors, f64)> = None;
        for &i in &order {
            let p = params[i];
            let adj = &mut adjs[i];
            let pn = works[i].timed(|w| -> Result<PrunedNeighbors> {
                let shared = opts.share_search.then_some(&mut cache);
                let c = construction_search(&adj.ids, data, u, entry, p.l, shared, &mut scratch, &w.search)?;
                let reuse = if opts.reuse_prune {
                    prev.as_ref().map(|(pn, a)| (pn, *a))
                } else {
                    None
                };
                let pn = mprune(data, &c, p.m, p.alpha, reuse, &w.prune)?;
                adj.set(u, &pn);
                for &(v, sq) in &pn.entries {
                    adj.link_back(data, v, u, sq, p.m, p.alpha, &w.connect)?;
                }
                Ok(pn)
            })?;
            prev = Some((pn, p.alpha));
        }
    }

    let graphs = params
        .iter()
        .zip(adjs)
        .map(|(p, a)| ProximityGraph::flat(BuildParams::Vamana(*p), data.dim(), a.ids, entry))
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, works))
}

/// Searches a fixed initial KNNG per graph (one KNNG per distinct `K`),
/// prunes with `alpha = 1`, adds reverse edges, then repairs reachability
/// from the entry.
pub(super) fn build_nsg(
    data: &VectorSet,
    params: &[NsgParams],
    opts: &BuildOptions,
) -> Result<(Vec<ProximityGraph>, Vec<Work>, usize)> {
    let n = data.len();
    let mut works: Vec<Work> = params.iter().map(|_| Work::new(opts.record_pairs)).collect();
    let entry = works[0].timed(|w| data.medoid_of_centroid(&w.connect));
    let mut knngs: HashMap<usize, Vec<Vec<u32>>> = HashMap::new();
    for (p, w) in params.iter().zip(works.iter_mut()) {
        if !knngs.contains_key(&p.k) {
            let g = w.timed(|w| build_initial_knng(data, p.k, opts.seed, opts.knng, &w.connect))?;
            knngs.insert(p.k, g.adjacency());
        }
    }
    let knng_builds = knngs.len();
    let mut outs: Vec<LayerAdj> = params.iter().map(|_| LayerAdj::new(n)).collect();
    let mut cache = DistanceCache::new(n);
    let mut scratch = SearchScratch::new(n);

    for u in 0..n as u32 {
        cache.begin(Some(u), n);
        let mut prev: Option<PrunedNeighbors> = None;
        for (i, p) in params.iter().enumerate() {
            let base = &knngs[&p.k];
            let out = &mut outs[i];
            let pn = works[i].timed(|w| -> Result<PrunedNeighbors> {
                let shared = opts.share_search.then_some(&mut cache);
                let c = construction_search(base, data, u, entry, p.l, shared, &mut scratch, &w.search)?;
                let reuse = if opts.reuse_prune {
                    prev.as_ref().map(|pn| (pn, 1.0))
                } else {
                    None
                };
                let pn = mprune(data, &c, p.m, 1.0, reuse, &w.prune)?;
                out.set(u, &pn);
                Ok(pn)
            })?;
            prev = Some(pn);
        }
    }

    let mut graphs = Vec::with_capacity(params.len());
    for ((p, mut out), w) in params.iter().zip(outs).zip(works.iter_mut()) {
        w.timed(|w| -> Result<()> {
            let forward: Vec<Vec<(u32, f32)>> = (0..n)
                .map(|u| out.ids[u].iter().copied().zip(out.dists[u].iter().copied()).collect())
                .collect();
            for (u, list) in forward.iter().enumerate() {
                for &(v, sq) in list {
                    out.link_back(data, v, u as u32, sq, p.m, 1.0, &w.connect)?;
                }
            }
            link_unreached(&mut out, data, entry, Some(p.m), &w.connect);
            Ok(())
        })?;
        graphs.push(ProximityGraph::flat(BuildParams::Nsg(*p), data.dim(), out.ids, entry)?);
    }
    Ok((graphs, works, knng_builds))
}
