//! Seed-derived random streams. Each purpose gets its own ChaCha key and each
//! node its own stream, so a node's draws never depend on batch size, build
//! order, or how many draws other nodes consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEVEL: u64 = 0x6c65_7665_6c00_0001;
const INITIAL_EDGES: u64 = 0x6564_6765_7300_0002;
const KNNG: u64 = 0x6b6e_6e67_0000_0003;

fn stream(seed: u64, purpose: u64, node: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose);
    rng.set_stream(node);
    rng
}

/// Uniform draw in `(0, 1]` for `node`'s layer assignment.
pub fn node_uniform(seed: u64, node: u32) -> f64 {
    1.0 - stream(seed, LEVEL, u64::from(node)).random::<f64>()
}

/// `floor(-ln(u) / ln(m))`, the geometric layer law with multiplier `1/ln m`.
pub fn level_from_uniform(u: f64, m: usize) -> usize {
    debug_assert!(u > 0.0 && u <= 1.0 && m >= 2);
    (-u.ln() / (m as f64).ln()).floor() as usize
}

/// Top layer of `node` in an HNSW graph with degree parameter `m`.
pub fn assign_layer(node: u32, seed: u64, m: usize) -> usize {
    level_from_uniform(node_uniform(seed, node), m)
}

/// The first `count` distinct ids in `node`'s random neighbour stream,
/// excluding `node`. A shorter request is always a prefix of a longer one.
pub fn random_neighbors(seed: u64, node: u32, n: usize, count: usize) -> Vec<u32> {
    sample_distinct(&mut stream(seed, INITIAL_EDGES, u64::from(node)), node, n, count)
}

/// Per-node stream for approximate KNNG construction.
pub(crate) fn knng_stream(seed: u64, node: u32) -> ChaCha8Rng {
    stream(seed, KNNG, u64::from(node))
}

pub(crate) fn sample_distinct(rng: &mut ChaCha8Rng, exclude: u32, n: usize, count: usize) -> Vec<u32> {
    let count = count.min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(count);
    // rejection sampling keeps shorter requests prefixes of longer ones
    while out.len() < count {
        let v = rng.random_range(0..n as u32);
        if v != exclude && !out.contains(&v) {
            out.push(v);
        }
    }
    out
}
