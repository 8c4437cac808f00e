//! Vector storage, dataset I/O and synthesis, the instrumented distance
//! kernel, and the brute-force ground-truth oracle.

mod distance;
pub mod io;
mod synth;
mod truth;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distance::{euclidean, squared_l2, DistanceCounter, WIDE_ACCUMULATOR_DIM};
pub use synth::{gen_split, gen_synthetic, SyntheticKind};
pub use truth::{brute_force_knn, recall_at_k, GroundTruth, DEFAULT_TRUTH_DEPTH};

/// A dataset point id paired with its (true, not squared) Euclidean distance
/// to some query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    pub dist: f32,
}

/// Orders by distance, then by ascending id.
#[inline]
pub fn by_dist_then_id(a: (f32, u32), b: (f32, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Dense `dim`-dimensional `f32` vectors addressed by id `0..len()`.
///
/// Immutable after construction; share freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSet {
    dim: usize,
    data: Vec<f32>,
}

impl VectorSet {
    /// Builds a set from a flat row-major buffer.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::Empty("vector set has no vectors"));
        }
        if data.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "buffer of {} floats is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite component in vector {}",
                pos / dim
            )));
        }
        if data.len() / dim > u32::MAX as usize {
            return Err(Error::InvalidArgument("too many vectors for u32 ids".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Empty("vector set has no vectors"));
        };
        let dim = first.len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    /// Squared distance between two stored points, counted on `counter`.
    #[inline]
    pub fn sq_dist_ids(&self, a: u32, b: u32, counter: &DistanceCounter) -> f32 {
        counter.tally_pair(a, b);
        squared_l2(self.get(a), self.get(b))
    }

    /// Squared distance from an arbitrary vector to a stored point.
    #[inline]
    pub fn sq_dist_to(&self, q: &[f32], b: u32, counter: &DistanceCounter) -> f32 {
        counter.tally();
        squared_l2(q, self.get(b))
    }

    pub fn centroid(&self) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for v in self.iter() {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += f64::from(*x);
            }
        }
        let n = self.len() as f64;
        acc.into_iter().map(|a| (a / n) as f32).collect()
    }

    /// The stored point nearest to the arithmetic mean (ties to lower id).
    /// Costs `len()` counted evaluations.
    pub fn medoid_of_centroid(&self, counter: &DistanceCounter) -> u32 {
        let c = self.centroid();
        let mut best = (f32::INFINITY, 0u32);
        for id in 0..self.len() as u32 {
            let d = self.sq_dist_to(&c, id, counter);
            if by_dist_then_id((d, id), best) == Ordering::Less {
                best = (d, id);
            }
        }
        best.1
    }
}
