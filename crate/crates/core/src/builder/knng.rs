use rand::seq::SliceRandom;

use super::random::{knng_stream, sample_distinct};
use super::KnngMode;
use crate::dataset::{by_dist_then_id, DistanceCounter, VectorSet};
use crate::error::{invalid, Result};

/// Fraction of the current new-flagged entries sampled per round.
const SAMPLE_RATE: f64 = 0.5;
const MAX_ROUNDS: usize = 10;
/// Stop once a round changes fewer than this fraction of `n * K` entries.
const CONVERGENCE: f64 = 0.001;

/// A K-nearest-neighbour graph: per node, `K` (id, squared distance) pairs
/// ascending by `(distance, id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Knng {
    pub k: usize,
    pub lists: Vec<Vec<(u32, f32)>>,
}

impl Knng {
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        self.lists.iter().map(|l| l.iter().map(|e| e.0).collect()).collect()
    }

    /// Mean fraction of `exact`'s lists recovered.
    pub fn recall_against(&self, exact: &Knng) -> f64 {
        let hits: usize = self
            .lists
            .iter()
            .zip(&exact.lists)
            .map(|(a, b)| a.iter().filter(|x| b.iter().any(|y| y.0 == x.0)).count())
            .sum();
        let total: usize = exact.lists.iter().map(Vec::len).sum();
        hits as f64 / total as f64
    }
}

pub fn build_initial_knng(
    data: &VectorSet,
    k: usize,
    seed: u64,
    mode: KnngMode,
    counter: &DistanceCounter,
) -> Result<Knng> {
    let n = data.len();
    if k == 0 || k >= n {
        return invalid(format!("KNNG degree must be in 1..{n}, got {k}"));
    }
    let lists = match mode {
        KnngMode::Exact => exact(data, k, counter),
        KnngMode::NnDescent => nn_descent(data, k, seed, counter),
    };
    Ok(Knng { k, lists })
}

fn exact(data: &VectorSet, k: usize, counter: &DistanceCounter) -> Vec<Vec<(u32, f32)>> {
    let n = data.len() as u32;
    (0..n)
        .map(|u| {
            let mut all: Vec<(u32, f32)> = (0..n)
                .filter(|&v| v != u)
                .map(|v| (v, data.sq_dist_ids(u, v, counter)))
                .collect();
            all.sort_by(|a, b| by_dist_then_id((a.1, a.0), (b.1, b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

#[derive(Clone, Copy)]
struct Entry {
    id: u32,
    sq: f32,
    new: bool,
}

/// Inserts `(id, sq)` if it beats the current worst; returns whether the list
/// changed.
fn try_insert(list: &mut Vec<Entry>, k: usize, id: u32, sq: f32) -> bool {
    if list.len() >= k {
        let worst = list[list.len() - 1];
        if !by_dist_then_id((sq, id), (worst.sq, worst.id)).is_lt() {
            return false;
        }
    }
    if list.iter().any(|e| e.id == id) {
        return false;
    }
    let pos = list.partition_point(|e| by_dist_then_id((e.sq, e.id), (sq, id)).is_lt());
    list.insert(pos, Entry { id, sq, new: true });
    list.truncate(k);
    true
}

/// Local-join refinement from a random graph. Sequential, so the result is
/// a pure function of the seed.
fn nn_descent(data: &VectorSet, k: usize, seed: u64, counter: &DistanceCounter) -> Vec<Vec<(u32, f32)>> {
    let n = data.len();
    let mut lists: Vec<Vec<Entry>> = (0..n as u32)
        .map(|u| {
            let mut rng = knng_stream(seed, u);
            let mut l: Vec<Entry> = sample_distinct(&mut rng, u, n, k)
                .into_iter()
                .map(|v| Entry {
                    id: v,
                    sq: data.sq_dist_ids(u, v, counter),
                    new: true,
                })
                .collect();
            l.sort_by(|a, b| by_dist_then_id((a.sq, a.id), (b.sq, b.id)));
            l
        })
        .collect();
    let mut rng = knng_stream(seed, u32::MAX);
    let sample = ((k as f64 * SAMPLE_RATE).ceil() as usize).max(1);
    let mut new_fwd: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut old_fwd: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut new_rev: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut old_rev: Vec<Vec<u32>> = vec![Vec::new(); n];

    for _ in 0..MAX_ROUNDS {
        for u in 0..n {
            new_fwd[u].clear();
            old_fwd[u].clear();
            new_rev[u].clear();
            old_rev[u].clear();
        }
        for (u, list) in lists.iter_mut().enumerate() {
            let mut fresh: Vec<usize> = (0..list.len()).filter(|&i| list[i].new).collect();
            fresh.shuffle(&mut rng);
            fresh.truncate(sample);
            for &i in &fresh {
                list[i].new = false;
                new_fwd[u].push(list[i].id);
            }
            for e in list.iter() {
                if !e.new && !new_fwd[u].contains(&e.id) {
                    old_fwd[u].push(e.id);
                }
            }
        }
        for u in 0..n {
            for &v in &new_fwd[u] {
                new_rev[v as usize].push(u as u32);
            }
            for &v in &old_fwd[u] {
                old_rev[v as usize].push(u as u32);
            }
        }
        let mut updates = 0usize;
        for u in 0..n {
            for rev in [&mut new_rev[u], &mut old_rev[u]] {
                if rev.len() > sample {
                    rev.shuffle(&mut rng);
                    rev.truncate(sample);
                }
            }
            let mut new: Vec<u32> = new_fwd[u].clone();
            for &v in &new_rev[u] {
                if !new.contains(&v) {
                    new.push(v);
                }
            }
            let mut old: Vec<u32> = old_fwd[u].clone();
            for &v in &old_rev[u] {
                if !old.contains(&v) && !new.contains(&v) {
                    old.push(v);
                }
            }
            for (i, &a) in new.iter().enumerate() {
                let partners = new[i + 1..].iter().chain(old.iter());
                for &b in partners {
                    if a == b {
                        continue;
                    }
                    let d = data.sq_dist_ids(a, b, counter);
                    updates += usize::from(try_insert(&mut lists[a as usize], k, b, d));
                    updates += usize::from(try_insert(&mut lists[b as usize], k, a, d));
                }
            }
        }
        if (updates as f64) < CONVERGENCE * (n * k) as f64 {
            break;
        }
    }
    lists
        .into_iter()
        .map(|l| l.into_iter().map(|e| (e.id, e.sq)).collect())
        .collect()
}
