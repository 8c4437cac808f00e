//! Beam search over one graph layer, with and without a shared distance cache.

use crate::dataset::{by_dist_then_id, DistanceCounter, Neighbor, VectorSet};
use crate::error::{invalid, Error, Result};

/// A pool member: id, squared distance to the query, and whether its
/// out-neighbours have been scanned.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoolEntry {
    pub id: u32,
    pub sq: f32,
    pub expanded: bool,
}

/// Epoch-stamped membership set over `0..n`; clearing is O(1).
#[derive(Clone, Debug, Default)]
pub struct VisitedSet {
    stamps: Vec<u32>,
    epoch: u32,
}

impl VisitedSet {
    pub fn new(n: usize) -> Self {
        Self {
            stamps: vec![0; n],
            epoch: 0,
        }
    }

    /// Starts a fresh, empty set over `n` ids.
    pub fn reset(&mut self, n: usize) {
        if self.stamps.len() < n {
            self.stamps.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamps.fill(0);
            self.epoch = 1;
        }
    }

    /// Inserts `id`; returns false if it was already present.
    #[inline]
    pub fn insert(&mut self, id: u32) -> bool {
        let s = &mut self.stamps[id as usize];
        if *s == self.epoch {
            false
        } else {
            *s = self.epoch;
            true
        }
    }

    #[inline]
    pub fn contains(&self, id: u32) -> bool {
        self.stamps.get(id as usize) == Some(&self.epoch)
    }
}

/// Per-source-point memo of squared distances `δ(u, v)` for every `v`.
///
/// Entries are valid only under the current epoch, so moving to the next
/// source point is O(1). A valid entry always holds exactly what the kernel
/// returns for `(source, v)`.
#[derive(Clone, Debug, Default)]
pub struct DistanceCache {
    values: Vec<f32>,
    stamps: Vec<u32>,
    epoch: u32,
    source: Option<u32>,
}

impl DistanceCache {
    pub fn new(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            stamps: vec![0; n],
            epoch: 0,
            source: None,
        }
    }

    /// Invalidates every entry and tags the cache with a new source point.
    pub fn begin(&mut self, source: Option<u32>, n: usize) {
        if self.values.len() < n {
            self.values.resize(n, 0.0);
            self.stamps.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamps.fill(0);
            self.epoch = 1;
        }
        self.source = source;
    }

    pub fn source(&self) -> Option<u32> {
        self.source
    }

    #[inline]
    pub fn get(&self, v: u32) -> Option<f32> {
        let i = v as usize;
        (self.stamps.get(i) == Some(&self.epoch) && self.epoch != 0).then(|| self.values[i])
    }

    #[inline]
    pub fn put(&mut self, v: u32, sq: f32) {
        let i = v as usize;
        self.values[i] = sq;
        self.stamps[i] = self.epoch;
    }

    pub fn valid_entries(&self) -> usize {
        if self.epoch == 0 {
            return 0;
        }
        self.stamps.iter().filter(|s| **s == self.epoch).count()
    }
}

/// The query side of a search: a vector, plus its id when it is itself a
/// dataset point (as during construction).
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub vector: &'a [f32],
    pub id: Option<u32>,
}

impl<'a> Query<'a> {
    pub fn point(data: &'a VectorSet, id: u32) -> Self {
        Self {
            vector: data.get(id),
            id: Some(id),
        }
    }

    pub fn external(vector: &'a [f32]) -> Self {
        Self { vector, id: None }
    }
}

/// Where a search gets `δ(q, v)` from.
pub(crate) trait DistanceSource {
    fn distance(&mut self, v: u32) -> f32;
}

pub(crate) struct Direct<'a> {
    pub data: &'a VectorSet,
    pub query: Query<'a>,
    pub counter: &'a DistanceCounter,
}

impl DistanceSource for Direct<'_> {
    #[inline]
    fn distance(&mut self, v: u32) -> f32 {
        match self.query.id {
            Some(q) => self.data.sq_dist_ids(q, v, self.counter),
            None => self.data.sq_dist_to(self.query.vector, v, self.counter),
        }
    }
}

pub(crate) struct Cached<'a, 'c> {
    pub direct: Direct<'a>,
    pub cache: &'c mut DistanceCache,
}

impl DistanceSource for Cached<'_, '_> {
    #[inline]
    fn distance(&mut self, v: u32) -> f32 {
        if let Some(d) = self.cache.get(v) {
            return d;
        }
        let d = self.direct.distance(v);
        self.cache.put(v, d);
        d
    }
}

/// Reusable buffers for one worker's searches.
#[derive(Clone, Debug, Default)]
pub struct SearchScratch {
    pub(crate) visited: VisitedSet,
    pub(crate) pool: Vec<PoolEntry>,
}

impl SearchScratch {
    pub fn new(n: usize) -> Self {
        Self {
            visited: VisitedSet::new(n),
            pool: Vec::new(),
        }
    }

    /// The pool left behind by the last search, sorted by (distance, id).
    pub fn pool(&self) -> &[PoolEntry] {
        &self.pool
    }
}

#[inline]
fn before(a: &PoolEntry, sq: f32, id: u32) -> bool {
    by_dist_then_id((a.sq, a.id), (sq, id)).is_lt()
}

/// Greedy beam search: repeatedly expand the closest unexpanded pool entry,
/// keep the `ef` closest, stop when every pool entry is expanded. The final
/// pool is left in `scratch.pool`.
pub(crate) fn search_layer<S: DistanceSource>(
    adj: &[Vec<u32>],
    ep: u32,
    ef: usize,
    scratch: &mut SearchScratch,
    src: &mut S,
) {
    let SearchScratch { visited, pool } = scratch;
    visited.reset(adj.len());
    pool.clear();
    visited.insert(ep);
    pool.push(PoolEntry {
        id: ep,
        sq: src.distance(ep),
        expanded: false,
    });
    let mut i = 0;
    while i < pool.len() {
        pool[i].expanded = true;
        let u = pool[i].id;
        let mut lowest = usize::MAX;
        for &v in &adj[u as usize] {
            if !visited.insert(v) {
                continue;
            }
            let sq = src.distance(v);
            if pool.len() >= ef && !before_entry(sq, v, &pool[pool.len() - 1]) {
                continue;
            }
            let pos = pool.partition_point(|e| before(e, sq, v));
            pool.insert(
                pos,
                PoolEntry {
                    id: v,
                    sq,
                    expanded: false,
                },
            );
            if pool.len() > ef {
                pool.pop();
            }
            lowest = lowest.min(pos);
        }
        i = if lowest <= i { lowest } else { i + 1 };
        while i < pool.len() && pool[i].expanded {
            i += 1;
        }
    }
}

#[inline]
fn before_entry(sq: f32, id: u32, e: &PoolEntry) -> bool {
    by_dist_then_id((sq, id), (e.sq, e.id)).is_lt()
}

fn check_args(adj: &[Vec<u32>], k: usize, ep: u32, ef: usize) -> Result<()> {
    if adj.is_empty() {
        return Err(Error::Empty("graph has no nodes"));
    }
    if k == 0 {
        return invalid("k must be positive");
    }
    if ef < k {
        return invalid(format!("ef ({ef}) must be >= k ({k})"));
    }
    if ep as usize >= adj.len() {
        return invalid(format!("entry point {ep} outside graph of {} nodes", adj.len()));
    }
    Ok(())
}

fn top_k(pool: &[PoolEntry], k: usize) -> Vec<Neighbor> {
    pool.iter()
        .take(k)
        .map(|e| Neighbor {
            id: e.id,
            dist: e.sq.sqrt(),
        })
        .collect()
}

/// Beam search on one layer; returns up to `k` results ascending by
/// distance. Every candidate's distance is computed at most once per call.
pub fn kanns(
    adj: &[Vec<u32>],
    data: &VectorSet,
    query: Query<'_>,
    k: usize,
    ep: u32,
    ef: usize,
    scratch: &mut SearchScratch,
    counter: &DistanceCounter,
) -> Result<Vec<Neighbor>> {
    check_args(adj, k, ep, ef)?;
    let mut src = Direct {
        data,
        query,
        counter,
    };
    search_layer(adj, ep, ef, scratch, &mut src);
    Ok(top_k(&scratch.pool, k))
}

/// [`kanns`] reading distances from `cache` when present and recording every
/// computed one into it. The result is identical to [`kanns`]; only the
/// counter differs.
#[allow(clippy::too_many_arguments)]
pub fn mkanns(
    adj: &[Vec<u32>],
    data: &VectorSet,
    query: Query<'_>,
    k: usize,
    ep: u32,
    ef: usize,
    cache: &mut DistanceCache,
    scratch: &mut SearchScratch,
    counter: &DistanceCounter,
) -> Result<Vec<Neighbor>> {
    check_args(adj, k, ep, ef)?;
    if cache.source() != query.id {
        return invalid("distance cache belongs to a different source point");
    }
    let mut src = Cached {
        direct: Direct {
            data,
            query,
            counter,
        },
        cache,
    };
    search_layer(adj, ep, ef, scratch, &mut src);
    Ok(top_k(&scratch.pool, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{brute_force_knn, gen_synthetic, SyntheticKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, deg: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
        (0..n)
            .map(|u| {
                let mut out: Vec<u32> = Vec::new();
                while out.len() < deg.min(n - 1) {
                    let v = rng.random_range(0..n as u32);
                    if v as usize != u && !out.contains(&v) {
                        out.push(v);
                    }
                }
                out
            })
            .collect()
    }

    #[test]
    fn no_edges_returns_entry_only() {
        let data = gen_synthetic(5, 2, 1, SyntheticKind::Uniform).unwrap();
        let adj = vec![Vec::new(); 5];
        let c = DistanceCounter::new();
        let mut s = SearchScratch::new(5);
        let got = kanns(&adj, &data, Query::external(&[0.5, 0.5]), 1, 3, 4, &mut s, &c).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, 3);
        assert_eq!(c.get(), 1);
    }

    #[test]
    fn complete_graph_equals_brute_force() {
        let data = gen_synthetic(10, 3, 5, SyntheticKind::Gaussian).unwrap();
        let adj: Vec<Vec<u32>> = (0..10u32)
            .map(|u| (0..10u32).filter(|&v| v != u).collect())
            .collect();
        let mut s = SearchScratch::new(10);
        let q = [0.1f32, -0.2, 0.3];
        for k in 1..=10 {
            let got = kanns(&adj, &data, Query::external(&q), k, 0, 10, &mut s, &DistanceCounter::new())
                .unwrap();
            let want = brute_force_knn(&data, &q, k, &DistanceCounter::new()).unwrap();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn argument_errors() {
        let data = gen_synthetic(3, 2, 1, SyntheticKind::Uniform).unwrap();
        let adj = vec![Vec::new(); 3];
        let c = DistanceCounter::new();
        let mut s = SearchScratch::new(3);
        let q = Query::external(&[0.0, 0.0]);
        assert!(kanns(&adj, &data, q, 5, 0, 4, &mut s, &c).is_err());
        assert!(kanns(&adj, &data, q, 1, 9, 4, &mut s, &c).is_err());
        assert!(kanns(&[], &data, q, 1, 0, 4, &mut s, &c).is_err());
    }

    #[test]
    fn cold_cache_matches_plain_search_and_counter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = gen_synthetic(300, 8, 2, SyntheticKind::Gaussian).unwrap();
        let adj = random_graph(300, 6, &mut rng);
        let mut s = SearchScratch::new(300);
        let mut cache = DistanceCache::new(300);
        for u in 0..30u32 {
            let q = Query::point(&data, u);
            let (c1, c2) = (DistanceCounter::new(), DistanceCounter::new());
            let a = kanns(&adj, &data, q, 10, 7, 20, &mut s, &c1).unwrap();
            cache.begin(Some(u), 300);
            let b = mkanns(&adj, &data, q, 10, 7, 20, &mut cache, &mut s, &c2).unwrap();
            assert_eq!(a, b);
            assert_eq!(c1.get(), c2.get());
            // fully warm: nothing recomputed
            let full = DistanceCounter::new();
            cache.begin(Some(u), 300);
            for v in 0..300 {
                cache.put(v, data.sq_dist_ids(u, v, &full));
            }
            let c3 = DistanceCounter::new();
            let b2 = mkanns(&adj, &data, q, 10, 7, 20, &mut cache, &mut s, &c3).unwrap();
            assert_eq!(a, b2);
            assert_eq!(c3.get(), 0);
        }
    }

    #[test]
    fn cache_from_other_source_is_refused() {
        let data = gen_synthetic(4, 2, 1, SyntheticKind::Uniform).unwrap();
        let adj = vec![Vec::new(); 4];
        let mut cache = DistanceCache::new(4);
        cache.begin(Some(1), 4);
        let mut s = SearchScratch::new(4);
        let r = mkanns(
            &adj,
            &data,
            Query::point(&data, 2),
            1,
            0,
            1,
            &mut cache,
            &mut s,
            &DistanceCounter::new(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn shared_cache_saves_work_on_overlapping_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = gen_synthetic(500, 8, 4, SyntheticKind::Gaussian).unwrap();
        let g1 = random_graph(500, 10, &mut rng);
        // g2 keeps 7 of every 10 edges and rewires the rest
        let g2: Vec<Vec<u32>> = g1
            .iter()
            .enumerate()
            .map(|(u, l)| {
                let mut out: Vec<u32> = l[..7].to_vec();
                while out.len() < 10 {
                    let v = rng.random_range(0..500u32);
                    if v as usize != u && !out.contains(&v) {
                        out.push(v);
                    }
                }
                out
            })
            .collect();
        let mut s = SearchScratch::new(500);
        let mut cache = DistanceCache::new(500);
        for u in 0..20u32 {
            let q = Query::point(&data, u);
            cache.begin(Some(u), 500);
            mkanns(&g1, &data, q, 10, 0, 40, &mut cache, &mut s, &DistanceCounter::new()).unwrap();
            let warm = DistanceCounter::new();
            mkanns(&g2, &data, q, 10, 0, 40, &mut cache, &mut s, &warm).unwrap();
            let cold = DistanceCounter::new();
            kanns(&g2, &data, q, 10, 0, 40, &mut s, &cold).unwrap();
            assert!(warm.get() < cold.get(), "{} vs {}", warm.get(), cold.get());
        }
    }

    #[test]
    fn counter_equals_visited_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = gen_synthetic(200, 4, 3, SyntheticKind::Uniform).unwrap();
        let adj = random_graph(200, 5, &mut rng);
        let mut s = SearchScratch::new(200);
        let c = DistanceCounter::new();
        kanns(&adj, &data, Query::external(&[0.5; 4]), 5, 0, 16, &mut s, &c).unwrap();
        let visited = (0..200u32).filter(|&v| s.visited.contains(v)).count();
        assert_eq!(c.get() as usize, visited);
        assert!(s.pool().iter().all(|e| e.expanded));
        assert!(s.pool().len() <= 16);
    }
}
