//! Graph construction, one parameter set at a time or many at once.
//!
//! A batch build inserts every node into all of its graphs before moving to
//! the next node, so the distances from that node computed by one graph's
//! search can be served to the others from a shared cache, and each prune can
//! reuse the pair checks settled by the previous prune of the same node.
//! Neither shortcut changes any output: every graph is identical to the one
//! a single build with the same seed produces.

mod connectivity;
mod hnsw;
mod knng;
pub mod random;
mod vamana;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{DistanceCounter, VectorSet};
use crate::error::{invalid, Result};
use crate::graph::{search_layer, Cached, Direct, DistanceCache, ProximityGraph, Query, SearchScratch};
use crate::params::{BuildParams, HnswParams, IndexKind, NsgParams, VamanaParams};
use crate::prune::{prune, CandidateSet, PrunedNeighbors};

pub use connectivity::{ensure_connectivity, reachable_from};
pub use knng::{build_initial_knng, Knng};
pub use random::assign_layer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnngMode {
    Exact,
    NnDescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    pub seed: u64,
    /// Serve repeated `δ(u, ·)` across the batch from a per-node cache.
    pub share_search: bool,
    /// Skip pair checks already settled by the previous prune of a node.
    pub reuse_prune: bool,
    pub knng: KnngMode,
    /// Log every evaluated vector pair (small datasets only).
    pub record_pairs: bool,
}

impl BuildOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            share_search: true,
            reuse_prune: true,
            knng: KnngMode::NnDescent,
            record_pairs: false,
        }
    }

    /// No sharing: what an independent single build does.
    pub fn independent(seed: u64) -> Self {
        Self {
            share_search: false,
            reuse_prune: false,
            ..Self::new(seed)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    pub nodes: usize,
    pub edges: usize,
    pub avg_degree: f64,
}

/// Cost and shape of one built graph. Distance counts are split by phase:
/// candidate search, neighbour pruning, and connection work (reverse edges,
/// entry selection, initial graph, connectivity repair).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub kind: IndexKind,
    pub params: serde_json::Value,
    pub seed: u64,
    pub dist_total: u64,
    pub dist_search: u64,
    pub dist_prune: u64,
    pub dist_connect: u64,
    pub wall_ms: f64,
    pub avg_degree: f64,
    pub layers: Vec<LayerStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub m: usize,
    pub dist_total: u64,
    pub dist_search: u64,
    pub dist_prune: u64,
    pub dist_connect: u64,
    pub wall_ms: f64,
    /// Initial KNNG constructions performed (NSG only).
    pub knng_builds: usize,
    pub share_search: bool,
    pub reuse_prune: bool,
    /// Distinct vector pairs evaluated, when pair logging was on.
    pub distinct_pairs: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct BatchBuild {
    pub graphs: Vec<ProximityGraph>,
    pub reports: Vec<BuildReport>,
    pub summary: BatchSummary,
    pub pairs: Option<HashSet<(u32, u32)>>,
}

/// Per-graph phase counters and accumulated wall time.
pub(crate) struct Work {
    pub search: DistanceCounter,
    pub prune: DistanceCounter,
    pub connect: DistanceCounter,
    pub wall: Duration,
}

impl Work {
    fn new(record_pairs: bool) -> Self {
        let c = || {
            if record_pairs {
                DistanceCounter::with_pair_log()
            } else {
                DistanceCounter::new()
            }
        };
        Self {
            search: c(),
            prune: c(),
            connect: c(),
            wall: Duration::ZERO,
        }
    }

    /// Runs `f` and charges its wall time to this graph.
    pub fn timed<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        let t = Instant::now();
        let out = f(self);
        self.wall += t.elapsed();
        out
    }

    fn report(&self, g: &ProximityGraph, seed: u64) -> BuildReport {
        let layers = (0..=g.max_layer())
            .map(|j| {
                let nodes = (0..g.len() as u32).filter(|&u| g.level(u) >= j).count();
                let edges = g.layer(j).iter().map(Vec::len).sum();
                LayerStats {
                    layer: j,
                    nodes,
                    edges,
                    avg_degree: g.avg_degree(j),
                }
            })
            .collect();
        let (s, p, c) = (self.search.get(), self.prune.get(), self.connect.get());
        BuildReport {
            kind: g.kind(),
            params: g.params().to_json_inner(),
            seed,
            dist_total: s + p + c,
            dist_search: s,
            dist_prune: p,
            dist_connect: c,
            wall_ms: self.wall.as_secs_f64() * 1e3,
            avg_degree: g.avg_degree(0),
            layers,
        }
    }

    fn pairs_into(&self, out: &mut HashSet<(u32, u32)>) {
        for c in [&self.search, &self.prune, &self.connect] {
            if let Some(p) = c.pairs() {
                out.extend(p);
            }
        }
    }
}

/// Adjacency of one layer under construction, with `δ²(u, v)` kept beside
/// each edge. NaN marks a distance not computed yet.
#[derive(Clone, Debug)]
pub(crate) struct LayerAdj {
    pub ids: Vec<Vec<u32>>,
    pub dists: Vec<Vec<f32>>,
}

impl LayerAdj {
    pub fn new(n: usize) -> Self {
        Self {
            ids: vec![Vec::new(); n],
            dists: vec![Vec::new(); n],
        }
    }

    pub fn set(&mut self, u: u32, pn: &PrunedNeighbors) {
        let u = u as usize;
        self.ids[u] = pn.entries.iter().map(|e| e.0).collect();
        self.dists[u] = pn.entries.iter().map(|e| e.1).collect();
    }

    /// Adds `v -> u`; when that overflows `cap`, re-prunes `v`'s list.
    #[allow(clippy::too_many_arguments)]
    pub fn link_back(
        &mut self,
        data: &VectorSet,
        v: u32,
        u: u32,
        sq: f32,
        cap: usize,
        alpha: f64,
        counter: &DistanceCounter,
    ) -> Result<()> {
        let vi = v as usize;
        if self.ids[vi].contains(&u) {
            return Ok(());
        }
        if self.ids[vi].len() < cap {
            self.ids[vi].push(u);
            self.dists[vi].push(sq);
            return Ok(());
        }
        for (w, d) in self.ids[vi].iter().zip(self.dists[vi].iter_mut()) {
            if d.is_nan() {
                *d = data.sq_dist_ids(v, *w, counter);
            }
        }
        let mut entries: Vec<(u32, f32)> = self.ids[vi]
            .iter()
            .copied()
            .zip(self.dists[vi].iter().copied())
            .collect();
        entries.push((u, sq));
        let pn = prune(data, &CandidateSet::from_unsorted(v, entries), cap, alpha, counter)?;
        self.set(v, &pn);
        Ok(())
    }
}

/// Beam search for construction, through the shared cache when given.
/// Returns the final pool minus the query point itself.
#[allow(clippy::too_many_arguments)]
pub(crate) fn construction_search(
    adj: &[Vec<u32>],
    data: &VectorSet,
    u: u32,
    ep: u32,
    ef: usize,
    cache: Option<&mut DistanceCache>,
    scratch: &mut SearchScratch,
    counter: &DistanceCounter,
) -> Result<CandidateSet> {
    let direct = Direct {
        data,
        query: Query::point(data, u),
        counter,
    };
    match cache {
        Some(cache) => {
            debug_assert_eq!(cache.source(), Some(u));
            search_layer(adj, ep, ef, scratch, &mut Cached { direct, cache });
        }
        None => search_layer(adj, ep, ef, scratch, &mut { direct }),
    }
    let entries = scratch
        .pool()
        .iter()
        .filter(|e| e.id != u)
        .map(|e| (e.id, e.sq))
        .collect();
    CandidateSet::new(u, entries)
}

fn finish(
    data_len: usize,
    graphs: Vec<ProximityGraph>,
    works: Vec<Work>,
    opts: &BuildOptions,
    knng_builds: usize,
    started: Instant,
) -> BatchBuild {
    debug_assert!(graphs.iter().all(|g| g.len() == data_len));
    let reports: Vec<BuildReport> = graphs
        .iter()
        .zip(&works)
        .map(|(g, w)| w.report(g, opts.seed))
        .collect();
    let pairs = opts.record_pairs.then(|| {
        let mut all = HashSet::new();
        for w in &works {
            w.pairs_into(&mut all);
        }
        all
    });
    let sum = |f: fn(&BuildReport) -> u64| reports.iter().map(f).sum();
    let summary = BatchSummary {
        m: graphs.len(),
        dist_total: sum(|r| r.dist_total),
        dist_search: sum(|r| r.dist_search),
        dist_prune: sum(|r| r.dist_prune),
        dist_connect: sum(|r| r.dist_connect),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        knng_builds,
        share_search: opts.share_search,
        reuse_prune: opts.reuse_prune,
        distinct_pairs: pairs.as_ref().map(|p| p.len() as u64),
    };
    BatchBuild {
        graphs,
        reports,
        summary,
        pairs,
    }
}

pub fn build_multi_hnsw(data: &VectorSet, params: &[HnswParams], opts: &BuildOptions) -> Result<BatchBuild> {
    check_batch(params.len())?;
    for p in params {
        p.validate()?;
    }
    let started = Instant::now();
    let (graphs, works) = hnsw::build(data, params, opts)?;
    Ok(finish(data.len(), graphs, works, opts, 0, started))
}

pub fn build_multi_vamana(
    data: &VectorSet,
    params: &[VamanaParams],
    opts: &BuildOptions,
) -> Result<BatchBuild> {
    check_batch(params.len())?;
    for p in params {
        p.validate()?;
    }
    let started = Instant::now();
    let (graphs, works) = vamana::build(data, params, opts)?;
    Ok(finish(data.len(), graphs, works, opts, 0, started))
}

pub fn build_multi_nsg(data: &VectorSet, params: &[NsgParams], opts: &BuildOptions) -> Result<BatchBuild> {
    check_batch(params.len())?;
    for p in params {
        p.validate()?;
        if p.k >= data.len() {
            return invalid(format!("NSG K ({}) must be below n ({})", p.k, data.len()));
        }
    }
    let started = Instant::now();
    let (graphs, works, knng_builds) = vamana::build_nsg(data, params, opts)?;
    Ok(finish(data.len(), graphs, works, opts, knng_builds, started))
}

fn check_batch(m: usize) -> Result<()> {
    if m == 0 {
        return invalid("a batch needs at least one parameter set");
    }
    Ok(())
}

/// Builds every parameter set of one kind in a single batch.
pub fn build_multi(data: &VectorSet, params: &[BuildParams], opts: &BuildOptions) -> Result<BatchBuild> {
    check_batch(params.len())?;
    let kind = params[0].kind();
    if params.iter().any(|p| p.kind() != kind) {
        return invalid("all parameter sets in a batch must be of the same index kind");
    }
    macro_rules! collect {
        ($variant:ident) => {
            params
                .iter()
                .map(|p| match p {
                    BuildParams::$variant(x) => *x,
                    _ => unreachable!("kinds checked above"),
                })
                .collect::<Vec<_>>()
        };
    }
    match kind {
        IndexKind::Hnsw => build_multi_hnsw(data, &collect!(Hnsw), opts),
        IndexKind::Vamana => build_multi_vamana(data, &collect!(Vamana), opts),
        IndexKind::Nsg => build_multi_nsg(data, &collect!(Nsg), opts),
    }
}

/// One independent build.
pub fn build_single(
    data: &VectorSet,
    params: &BuildParams,
    seed: u64,
    knng: KnngMode,
) -> Result<(ProximityGraph, BuildReport)> {
    let opts = BuildOptions {
        knng,
        ..BuildOptions::independent(seed)
    };
    let mut b = build_multi(data, std::slice::from_ref(params), &opts)?;
    Ok((b.graphs.remove(0), b.reports.remove(0)))
}

/// The same parameter sets built one after another with no sharing; the
/// baseline a batch build is compared against.
pub fn build_sequential(data: &VectorSet, params: &[BuildParams], opts: &BuildOptions) -> Result<BatchBuild> {
    check_batch(params.len())?;
    let single = BuildOptions {
        share_search: false,
        reuse_prune: false,
        ..*opts
    };
    let started = Instant::now();
    let mut graphs = Vec::new();
    let mut reports = Vec::new();
    let mut pair_total = opts.record_pairs.then_some(0u64);
    let mut knng_builds = 0;
    for p in params {
        let b = build_multi(data, std::slice::from_ref(p), &single)?;
        knng_builds += b.summary.knng_builds;
        if let (Some(t), Some(d)) = (pair_total.as_mut(), b.summary.distinct_pairs) {
            *t += d;
        }
        graphs.extend(b.graphs);
        reports.extend(b.reports);
    }
    let sum = |f: fn(&BuildReport) -> u64| reports.iter().map(f).sum();
    let summary = BatchSummary {
        m: graphs.len(),
        dist_total: sum(|r| r.dist_total),
        dist_search: sum(|r| r.dist_search),
        dist_prune: sum(|r| r.dist_prune),
        dist_connect: sum(|r| r.dist_connect),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        knng_builds,
        share_search: false,
        reuse_prune: false,
        // sum of each build's own distinct pairs
        distinct_pairs: pair_total,
    };
    Ok(BatchBuild {
        graphs,
        reports,
        summary,
        pairs: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_split, gen_synthetic, GroundTruth, SyntheticKind};
    use super::reachable_from as reachable;

    fn data(n: usize, seed: u64) -> VectorSet {
        gen_synthetic(n, 8, seed, SyntheticKind::Gaussian).unwrap()
    }

    fn batches() -> Vec<Vec<BuildParams>> {
        vec![
            vec![
                BuildParams::Hnsw(HnswParams::new(8, 40)),
                BuildParams::Hnsw(HnswParams::new(10, 40)),
                BuildParams::Hnsw(HnswParams::new(8, 60)),
            ],
            vec![
                BuildParams::Vamana(VamanaParams::new(40, 12, 1.2)),
                BuildParams::Vamana(VamanaParams::new(40, 12, 1.0)),
                BuildParams::Vamana(VamanaParams::new(50, 16, 1.1)),
            ],
            vec![
                BuildParams::Nsg(NsgParams::new(10, 40, 12)),
                BuildParams::Nsg(NsgParams::new(10, 50, 16)),
                BuildParams::Nsg(NsgParams::new(12, 40, 12)),
            ],
        ]
    }

    #[test]
    fn batch_equals_single_builds() {
        let d = data(600, 1);
        for batch in batches() {
            let b = build_multi(&d, &batch, &BuildOptions::new(7)).unwrap();
            for (g, p) in b.graphs.iter().zip(&batch) {
                let (single, _) = build_single(&d, p, 7, KnngMode::NnDescent).unwrap();
                assert_eq!(g.to_bytes(), single.to_bytes(), "{p:?}");
            }
            let seq = build_sequential(&d, &batch, &BuildOptions::new(7)).unwrap();
            assert!(b.summary.dist_total < seq.summary.dist_total, "{batch:?}");
            assert!(b.summary.dist_search < seq.summary.dist_search);
        }
    }

    #[test]
    fn identical_params_give_identical_graphs() {
        let d = data(300, 2);
        for batch in batches() {
            let twice = vec![batch[0], batch[0]];
            let b = build_multi(&d, &twice, &BuildOptions::new(3)).unwrap();
            assert_eq!(b.graphs[0], b.graphs[1]);
            // second search is served entirely from the cache
            assert_eq!(b.reports[1].dist_search, 0, "{:?}", batch[0]);
        }
    }

    #[test]
    fn degree_caps_and_levels() {
        let d = data(800, 3);
        for batch in batches() {
            let b = build_multi(&d, &batch, &BuildOptions::new(1)).unwrap();
            for g in &b.graphs {
                for j in 0..=g.max_layer() {
                    let cap = match g.params() {
                        BuildParams::Hnsw(p) => p.degree_cap(j),
                        BuildParams::Vamana(p) => p.m,
                        BuildParams::Nsg(p) => p.m,
                    };
                    assert!(g.layer(j).iter().all(|l| l.len() <= cap), "{:?} layer {j}", g.params());
                }
            }
            if let BuildParams::Hnsw(_) = batch[0] {
                // same M, same levels
                for u in 0..800 {
                    assert_eq!(b.graphs[0].level(u), b.graphs[2].level(u));
                    assert_eq!(b.graphs[0].level(u), assign_layer(u, 1, 8));
                }
            }
        }
    }

    #[test]
    fn nsg_shares_knng_and_is_connected() {
        let d = data(500, 4);
        let batch = &batches()[2];
        let b = build_multi(&d, batch, &BuildOptions::new(5)).unwrap();
        assert_eq!(b.summary.knng_builds, 2);
        for g in &b.graphs {
            assert!(reachable(g.layer(0), g.entry_point()).iter().all(|&r| r));
        }
        let seq = build_sequential(&d, batch, &BuildOptions::new(5)).unwrap();
        assert_eq!(seq.summary.knng_builds, 3);
    }

    #[test]
    fn built_graphs_are_searchable() {
        let (base, queries) = gen_split(1000, 50, 8, 9, SyntheticKind::Gaussian).unwrap();
        let truth = GroundTruth::compute(&base, &queries, 10, &DistanceCounter::new()).unwrap();
        for batch in batches() {
            let (g, report) = build_single(&base, &batch[2], 2, KnngMode::NnDescent).unwrap();
            assert_eq!(report.dist_total, report.dist_search + report.dist_prune + report.dist_connect);
            let mut scratch = SearchScratch::new(base.len());
            let c = DistanceCounter::new();
            let mut hits = 0.0;
            for (qi, q) in queries.iter().enumerate() {
                let res = g.search(&base, q, 10, 100, &mut scratch, &c).unwrap();
                let ids: Vec<u32> = res.iter().map(|x| x.id).collect();
                hits += crate::dataset::recall_at_k(&ids, truth.ids(qi).as_slice(), 10).unwrap();
            }
            let recall = hits / queries.len() as f64;
            assert!(recall >= 0.9, "{:?} recall {recall}", batch[2]);
        }
    }

    #[test]
    fn pair_logging_counts_distinct_pairs() {
        let d = data(200, 6);
        let batch = &batches()[1];
        let opts = BuildOptions {
            record_pairs: true,
            ..BuildOptions::new(1)
        };
        let b = build_multi(&d, batch, &opts).unwrap();
        let pairs = b.summary.distinct_pairs.unwrap();
        assert!(pairs > 0 && pairs <= b.summary.dist_total);
        let seq = build_sequential(&d, batch, &opts).unwrap();
        assert!(seq.summary.distinct_pairs.unwrap() > pairs);
    }

    #[test]
    fn rejects_empty_or_mixed_batches() {
        let d = data(50, 1);
        let opts = BuildOptions::new(0);
        assert!(build_multi(&d, &[], &opts).is_err());
        let b = batches();
        assert!(build_multi(&d, &[b[0][0], b[1][0]], &opts).is_err());
        assert!(build_multi(&d, &[BuildParams::Nsg(NsgParams::new(50, 10, 4))], &opts).is_err());
    }
}
