use super::random::{level_from_uniform, node_uniform};
use super::{construction_search, BuildOptions, LayerAdj, Work};
use crate::dataset::VectorSet;
use crate::error::Result;
use crate::graph::{DistanceCache, ProximityGraph, SearchScratch};
use crate::params::{BuildParams, HnswParams};
use crate::prune::{mprune, PrunedNeighbors};

struct State {
    p: HnswParams,
    layers: Vec<LayerAdj>,
    levels: Vec<u8>,
    ep: u32,
    top: usize,
    work: Work,
}

/// Inserts nodes in id order into every graph. A node's uniform draw is
/// shared, so its level differs across graphs only through `M`. Node 0 is
/// the initial entry point; the entry moves to a node only after that node
/// is fully inserted.
pub(super) fn build(
    data: &VectorSet,
    params: &[HnswParams],
    opts: &BuildOptions,
) -> Result<(Vec<ProximityGraph>, Vec<Work>)> {
    let n = data.len();
    let mut states: Vec<State> = params
        .iter()
        .map(|&p| State {
            p,
            layers: vec![LayerAdj::new(n)],
            levels: vec![0; n],
            ep: 0,
            top: 0,
            work: Work::new(opts.record_pairs),
        })
        .collect();
    let mut cache = DistanceCache::new(n);
    let mut scratch = SearchScratch::new(n);
    // last prune of the current node on each layer, across the batch
    let mut prev: Vec<Option<PrunedNeighbors>> = Vec::new();

    for u in 0..n as u32 {
        let draw = node_uniform(opts.seed, u);
        cache.begin(Some(u), n);
        prev.clear();
        for st in states.iter_mut() {
            let l = level_from_uniform(draw, st.p.m);
            st.levels[u as usize] = u8::try_from(l).expect("level fits in u8");
            while st.layers.len() <= l {
                st.layers.push(LayerAdj::new(n));
            }
            if u == 0 {
                st.top = l;
                continue;
            }
            if prev.len() <= l {
                prev.resize(l + 1, None);
            }
            let State {
                p,
                layers,
                ep,
                top,
                work,
                ..
            } = st;
            let (p, top) = (*p, *top);
            work.timed(|work| -> Result<()> {
                let mut shared = opts.share_search.then_some(&mut cache);
                let mut cur = *ep;
                for j in (l + 1..=top).rev() {
                    let c = construction_search(
                        &layers[j].ids,
                        data,
                        u,
                        cur,
                        1,
                        shared.as_deref_mut(),
                        &mut scratch,
                        &work.search,
                    )?;
                    cur = c.entries()[0].0;
                }
                for j in (0..=l.min(top)).rev() {
                    let c = construction_search(
                        &layers[j].ids,
                        data,
                        u,
                        cur,
                        p.efc,
                        shared.as_deref_mut(),
                        &mut scratch,
                        &work.search,
                    )?;
                    let reuse = if opts.reuse_prune {
                        prev[j].as_ref().map(|pn| (pn, 1.0))
                    } else {
                        None
                    };
                    let pn = mprune(data, &c, p.m, 1.0, reuse, &work.prune)?;
                    layers[j].set(u, &pn);
                    let cap = p.degree_cap(j);
                    for &(v, sq) in &pn.entries {
                        layers[j].link_back(data, v, u, sq, cap, 1.0, &work.connect)?;
                    }
                    cur = c.entries()[0].0;
                    prev[j] = Some(pn);
                }
                Ok(())
            })?;
            if l > top {
                st.top = l;
                st.ep = u;
            }
        }
    }

    let mut graphs = Vec::with_capacity(states.len());
    let mut works = Vec::with_capacity(states.len());
    for st in states {
        let layers = st.layers.into_iter().map(|a| a.ids).collect();
        graphs.push(ProximityGraph::new(
            BuildParams::Hnsw(st.p),
            data.dim(),
            st.levels,
            layers,
            st.ep,
        )?);
        works.push(st.work);
    }
    Ok((graphs, works))
}
