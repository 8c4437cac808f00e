use std::path::Path;

use rayon::prelude::*;

use super::{by_dist_then_id, io, DistanceCounter, Neighbor, VectorSet};
use crate::error::{Error, Result};

/// Depth at which ground truth is computed and persisted.
pub const DEFAULT_TRUTH_DEPTH: usize = 100;

/// Exact `k` nearest neighbours of `q` in `set`, ascending by distance with
/// ties broken by ascending id. Costs exactly `set.len()` evaluations.
pub fn brute_force_knn(
    set: &VectorSet,
    q: &[f32],
    k: usize,
    counter: &DistanceCounter,
) -> Result<Vec<Neighbor>> {
    if q.len() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            actual: q.len(),
        });
    }
    if k == 0 || k > set.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be within 1..={}",
            set.len()
        )));
    }
    let mut all: Vec<(f32, u32)> = (0..set.len() as u32)
        .map(|id| (set.sq_dist_to(q, id, counter), id))
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| by_dist_then_id(*a, *b));
        all.truncate(k);
    }
    all.sort_unstable_by(|a, b| by_dist_then_id(*a, *b));
    Ok(all
        .into_iter()
        .map(|(sq, id)| Neighbor { id, dist: sq.sqrt() })
        .collect())
}

/// `|first-k(result) ∩ first-k(truth)| / k`.
pub fn recall_at_k(result: &[u32], truth: &[u32], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if truth.len() < k {
        return Err(Error::InvalidArgument(format!(
            "ground truth has {} entries, need at least {k}",
            truth.len()
        )));
    }
    let truth = &truth[..k];
    let hits = result
        .iter()
        .take(k)
        .enumerate()
        .filter(|(i, id)| truth.contains(id) && !result[..*i].contains(id))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Per-query exact neighbour lists.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    lists: Vec<Vec<Neighbor>>,
}

impl GroundTruth {
    /// Computes the `depth` nearest neighbours of every query, in parallel
    /// across queries. `depth` is clamped to the dataset size.
    pub fn compute(
        set: &VectorSet,
        queries: &VectorSet,
        depth: usize,
        counter: &DistanceCounter,
    ) -> Result<Self> {
        let depth = depth.min(set.len());
        let lists = queries
            .iter()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|q| brute_force_knn(set, q, depth, counter))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lists })
    }

    pub fn from_lists(lists: Vec<Vec<Neighbor>>) -> Self {
        Self { lists }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Shortest list length over all queries.
    pub fn depth(&self) -> usize {
        self.lists.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn list(&self, query: usize) -> &[Neighbor] {
        &self.lists[query]
    }

    pub fn ids(&self, query: usize) -> Vec<u32> {
        self.lists[query].iter().map(|n| n.id).collect()
    }

    /// Writes ids as ivecs and distances as a parallel fvecs file.
    pub fn save(&self, ids_path: &Path, dists_path: &Path) -> Result<()> {
        let ids: Vec<Vec<i32>> = self
            .lists
            .iter()
            .map(|l| l.iter().map(|n| n.id as i32).collect())
            .collect();
        let dists: Vec<Vec<f32>> = self
            .lists
            .iter()
            .map(|l| l.iter().map(|n| n.dist).collect())
            .collect();
        io::write_ivecs(ids_path, &ids)?;
        io::write_fvecs_rows(dists_path, &dists)
    }

    /// Loads ids, and distances when a parallel file is given (otherwise
    /// distances are NaN).
    pub fn load(ids_path: &Path, dists_path: Option<&Path>) -> Result<Self> {
        let ids = io::load_ivecs(ids_path)?;
        let dists = match dists_path {
            Some(p) => Some(io::read_fvecs(p)?),
            None => None,
        };
        if let Some(d) = &dists {
            let same_shape =
                d.len() == ids.len() && d.iter().zip(&ids).all(|(a, b)| a.len() == b.len());
            if !same_shape {
                return Err(Error::InvalidArgument(
                    "distance file does not match id file shape".into(),
                ));
            }
        }
        let lists = ids
            .into_iter()
            .enumerate()
            .map(|(q, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, id)| Neighbor {
                        id,
                        dist: dists.as_ref().map_or(f32::NAN, |d| d[q][j]),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { lists })
    }
}
