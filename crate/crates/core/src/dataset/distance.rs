use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};

/// Dimension above which the kernel accumulates in `f64`.
pub const WIDE_ACCUMULATOR_DIM: usize = 256;

/// Squared Euclidean distance. Symmetric bit-for-bit: each term is computed
/// as `(a - b)^2` which is exact under operand exchange.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() > WIDE_ACCUMULATOR_DIM {
        return a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let d = f64::from(*x) - f64::from(*y);
                d * d
            })
            .sum::<f64>() as f32;
    }
    let mut lanes = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            let d = x[i] - y[i];
            lanes[i] += d * d;
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    let head = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
    head + tail
}

/// Euclidean distance between `u` and `v`, counted once on `counter`.
pub fn euclidean(u: &[f32], v: &[f32], counter: &DistanceCounter) -> Result<f32> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    counter.tally();
    Ok(squared_l2(u, v).sqrt())
}

/// Tally of full distance evaluations.
///
/// Increments are atomic so one counter can be shared by concurrent workers.
/// When created with [`DistanceCounter::with_pair_log`], every id-addressed
/// evaluation also records the unordered vector pair, which is how exact
/// shared-pair ratios are measured on small datasets.
#[derive(Debug, Default)]
pub struct DistanceCounter {
    count: AtomicU64,
    pairs: Option<Mutex<HashSet<(u32, u32)>>>,
}

impl DistanceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_pair_log() -> Self {
        Self {
            count: AtomicU64::new(0),
            pairs: Some(Mutex::new(HashSet::new())),
        }
    }

    #[inline]
    pub fn get(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    #[inline]
    pub fn tally(&self) {
        self.count.fetch_add(1, Ordering::Relaxed);
    }

    #[inline]
    pub fn add(&self, n: u64) {
        self.count.fetch_add(n, Ordering::Relaxed);
    }

    /// Counts one evaluation between dataset points `a` and `b`.
    #[inline]
    pub fn tally_pair(&self, a: u32, b: u32) {
        self.tally();
        if let Some(log) = &self.pairs {
            let key = if a <= b { (a, b) } else { (b, a) };
            log.lock().expect("pair log poisoned").insert(key);
        }
    }

    pub fn logs_pairs(&self) -> bool {
        self.pairs.is_some()
    }

    /// Snapshot of the recorded pair set, if pair logging is enabled.
    pub fn pairs(&self) -> Option<HashSet<(u32, u32)>> {
        self.pairs
            .as_ref()
            .map(|log| log.lock().expect("pair log poisoned").clone())
    }
}
