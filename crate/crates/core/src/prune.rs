//! Neighbour diversification: the relative-neighbourhood prune and its
//! consecutive variant that skips pair checks already settled by the
//! previous prune of the same node.

use std::collections::HashSet;

use crate::dataset::{by_dist_then_id, DistanceCounter, VectorSet};
use crate::error::{invalid, Result};

/// Candidates for node `owner`, sorted ascending by `(distance, id)`.
/// Distances are squared Euclidean to the owner.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    owner: u32,
    entries: Vec<(u32, f32)>,
}

impl CandidateSet {
    /// Wraps an already sorted list, rejecting unsorted input, duplicates
    /// and the owner itself.
    pub fn new(owner: u32, entries: Vec<(u32, f32)>) -> Result<Self> {
        for (i, &(id, sq)) in entries.iter().enumerate() {
            if id == owner {
                return invalid(format!("candidate set of {owner} contains its owner"));
            }
            if !sq.is_finite() {
                return invalid(format!("candidate {id} has non-finite distance"));
            }
            if i > 0 {
                let (pid, psq) = entries[i - 1];
                if !by_dist_then_id((psq, pid), (sq, id)).is_lt() {
                    return invalid(format!("candidate set of {owner} is not sorted at {i}"));
                }
            }
        }
        let ids: HashSet<u32> = entries.iter().map(|e| e.0).collect();
        if ids.len() != entries.len() {
            return invalid(format!("candidate set of {owner} has duplicate ids"));
        }
        Ok(Self { owner, entries })
    }

    /// Sorts, drops the owner and keeps the first occurrence of each id.
    pub fn from_unsorted(owner: u32, mut entries: Vec<(u32, f32)>) -> Self {
        entries.retain(|e| e.0 != owner);
        entries.sort_by(|a, b| by_dist_then_id((a.1, a.0), (b.1, b.0)));
        let mut seen = HashSet::with_capacity(entries.len());
        entries.retain(|e| seen.insert(e.0));
        Self { owner, entries }
    }

    pub fn owner(&self) -> u32 {
        self.owner
    }

    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `r` candidates.
    pub fn prefix(&self, r: usize) -> Self {
        Self {
            owner: self.owner,
            entries: self.entries[..r.min(self.entries.len())].to_vec(),
        }
    }
}

/// Output of a prune: kept candidates in ascending distance order.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedNeighbors {
    pub owner: u32,
    pub entries: Vec<(u32, f32)>,
}

impl PrunedNeighbors {
    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_subset_of(&self, other: &PrunedNeighbors) -> bool {
        self.entries.iter().all(|e| other.entries.iter().any(|o| o.0 == e.0))
    }
}

fn check_params(m: usize, alpha: f64) -> Result<()> {
    if m == 0 {
        return invalid("prune degree limit must be positive");
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return invalid(format!("prune alpha must be >= 1, got {alpha}"));
    }
    Ok(())
}

/// `alpha * d(v, w) < d(u, v)` on squared distances.
#[inline]
fn dominated(alpha2: f64, sq_vw: f32, sq_uv: f32) -> bool {
    alpha2 * f64::from(sq_vw) < f64::from(sq_uv)
}

fn run(
    data: &VectorSet,
    cands: &CandidateSet,
    m: usize,
    alpha: f64,
    skip: Option<&HashSet<u32>>,
    counter: &DistanceCounter,
) -> PrunedNeighbors {
    let alpha2 = alpha * alpha;
    let mut kept: Vec<(u32, f32)> = Vec::with_capacity(m);
    for &(v, sq_uv) in &cands.entries {
        if kept.len() >= m {
            break;
        }
        let v_prev = skip.is_some_and(|s| s.contains(&v));
        let diverse = kept.iter().all(|&(w, _)| {
            if v_prev && skip.is_some_and(|s| s.contains(&w)) {
                return true;
            }
            !dominated(alpha2, data.sq_dist_ids(v, w, counter), sq_uv)
        });
        if diverse {
            kept.push((v, sq_uv));
        }
    }
    let out = PrunedNeighbors {
        owner: cands.owner,
        entries: kept,
    };
    debug_assert!(is_diverse(data, &out, alpha), "prune output violates diversity");
    out
}

/// Checks the diversity postcondition without touching any counter.
pub fn is_diverse(data: &VectorSet, pn: &PrunedNeighbors, alpha: f64) -> bool {
    let alpha2 = alpha * alpha;
    pn.entries.iter().enumerate().all(|(i, &(v, sq_uv))| {
        pn.entries[..i].iter().all(|&(w, _)| {
            let sq_vw = crate::dataset::squared_l2(data.get(v), data.get(w));
            !dominated(alpha2, sq_vw, sq_uv)
        })
    })
}

/// Scans candidates in ascending distance and keeps `v` unless an already
/// kept `w` has `alpha * d(v, w) < d(u, v)`; stops once `m` are kept. Each
/// pair distance is tallied on `counter`.
pub fn prune(
    data: &VectorSet,
    cands: &CandidateSet,
    m: usize,
    alpha: f64,
    counter: &DistanceCounter,
) -> Result<PrunedNeighbors> {
    check_params(m, alpha)?;
    Ok(run(data, cands, m, alpha, None, counter))
}

/// [`prune`] that reuses the previous prune of the same owner: when both `v`
/// and `w` survived `prev` (pruned with `prev_alpha`), the pair check is
/// skipped. The skip is only sound for `alpha >= prev_alpha`; otherwise every
/// pair is checked. The output always equals [`prune`]'s.
pub fn mprune(
    data: &VectorSet,
    cands: &CandidateSet,
    m: usize,
    alpha: f64,
    prev: Option<(&PrunedNeighbors, f64)>,
    counter: &DistanceCounter,
) -> Result<PrunedNeighbors> {
    check_params(m, alpha)?;
    let skip = match prev {
        Some((p, _)) if p.owner != cands.owner => {
            return invalid(format!(
                "previous prune belongs to {}, not {}",
                p.owner, cands.owner
            ))
        }
        Some((p, prev_alpha)) if alpha >= prev_alpha && p.len() >= 2 => {
            Some(p.entries.iter().map(|e| e.0).collect::<HashSet<u32>>())
        }
        _ => None,
    };
    Ok(run(data, cands, m, alpha, skip.as_ref(), counter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::squared_l2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cands_for(data: &VectorSet, owner: u32) -> CandidateSet {
        let entries = (0..data.len() as u32)
            .map(|v| (v, squared_l2(data.get(owner), data.get(v))))
            .collect();
        CandidateSet::from_unsorted(owner, entries)
    }

    fn hand_set() -> VectorSet {
        VectorSet::from_rows(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.1, 0.1],
            vec![0.0, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn hand_example() {
        let data = hand_set();
        let c = cands_for(&data, 0);
        let pn = prune(&data, &c, 3, 1.0, &DistanceCounter::new()).unwrap();
        assert_eq!(pn.ids(), vec![1, 3]);
        let one = prune(&data, &c, 1, 1.0, &DistanceCounter::new()).unwrap();
        assert_eq!(one.ids(), vec![1]);
        let single = c.prefix(1);
        assert_eq!(prune(&data, &single, 5, 1.3, &DistanceCounter::new()).unwrap().ids(), vec![1]);
    }

    #[test]
    fn equality_is_not_domination() {
        let data = VectorSet::from_rows(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let c = cands_for(&data, 0);
        // alpha = 2: 2 * d(2,1) = 2 == d(0,2) = 2 -> kept
        let pn = prune(&data, &c, 3, 2.0, &DistanceCounter::new()).unwrap();
        assert_eq!(pn.ids(), vec![1, 2]);
        let pn = prune(&data, &c, 3, 1.0, &DistanceCounter::new()).unwrap();
        assert_eq!(pn.ids(), vec![1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CandidateSet::new(0, vec![(1, 2.0), (2, 1.0)]).is_err());
        assert!(CandidateSet::new(0, vec![(0, 1.0)]).is_err());
        assert!(CandidateSet::new(0, vec![(1, 1.0), (1, 1.0)]).is_err());
        assert!(CandidateSet::new(0, vec![(2, 1.0), (1, 1.0)]).is_err());
        assert!(CandidateSet::new(0, vec![(1, 1.0), (2, 1.0)]).is_ok());
        let data = hand_set();
        let c = cands_for(&data, 0);
        assert!(prune(&data, &c, 0, 1.0, &DistanceCounter::new()).is_err());
        assert!(prune(&data, &c, 2, 0.5, &DistanceCounter::new()).is_err());
        let other = PrunedNeighbors {
            owner: 1,
            entries: vec![],
        };
        assert!(mprune(&data, &c, 2, 1.0, Some((&other, 1.0)), &DistanceCounter::new()).is_err());
    }

    #[test]
    fn repeated_prune_reuses_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f32>> = (0..60).map(|_| vec![rng.random(), rng.random()]).collect();
        let data = VectorSet::from_rows(rows).unwrap();
        let c = cands_for(&data, 0);
        let c1 = DistanceCounter::new();
        let first = prune(&data, &c, 8, 1.2, &c1).unwrap();
        assert!(first.len() >= 2);
        let c2 = DistanceCounter::new();
        let again = mprune(&data, &c, 8, 1.2, Some((&first, 1.2)), &c2).unwrap();
        assert_eq!(again, first);
        assert!(c2.get() < c1.get());
        // no previous prune: same as prune, same count
        let c3 = DistanceCounter::new();
        assert_eq!(mprune(&data, &c, 8, 1.2, None, &c3).unwrap(), first);
        assert_eq!(c3.get(), c1.get());
    }

    #[test]
    fn descending_alpha_falls_back_to_full_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f32>> = (0..60).map(|_| vec![rng.random(), rng.random()]).collect();
        let data = VectorSet::from_rows(rows).unwrap();
        let c = cands_for(&data, 3);
        let loose = prune(&data, &c, 16, 1.5, &DistanceCounter::new()).unwrap();
        let full = DistanceCounter::new();
        let tight = prune(&data, &c, 16, 1.0, &full).unwrap();
        let reuse = DistanceCounter::new();
        assert_eq!(mprune(&data, &c, 16, 1.0, Some((&loose, 1.5)), &reuse).unwrap(), tight);
        assert_eq!(reuse.get(), full.get());
    }
}
