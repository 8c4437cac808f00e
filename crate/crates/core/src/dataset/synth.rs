use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::VectorSet;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SyntheticKind {
    /// Components uniform in `[0, 1)`.
    Uniform,
    /// Components standard normal.
    Gaussian,
    /// Centres uniform in `[-10, 10)^d`, points are a centre plus unit
    /// Gaussian noise.
    Clustered { centers: usize },
}

struct Generator {
    rng: ChaCha8Rng,
    dim: usize,
    kind: SyntheticKind,
    centers: Vec<Vec<f32>>,
}

impl Generator {
    fn new(dim: usize, seed: u64, kind: SyntheticKind) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = match kind {
            SyntheticKind::Clustered { centers: 0 } => {
                return invalid("clustered data needs at least one centre")
            }
            SyntheticKind::Clustered { centers } => (0..centers)
                .map(|_| (0..dim).map(|_| rng.random_range(-10.0f32..10.0)).collect())
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            rng,
            dim,
            kind,
            centers,
        })
    }

    fn fill(&mut self, n: usize, out: &mut Vec<f32>) {
        for _ in 0..n {
            match self.kind {
                SyntheticKind::Uniform => {
                    out.extend((0..self.dim).map(|_| self.rng.random::<f32>()));
                }
                SyntheticKind::Gaussian => {
                    out.extend(
                        (0..self.dim).map(|_| -> f32 { StandardNormal.sample(&mut self.rng) }),
                    );
                }
                SyntheticKind::Clustered { .. } => {
                    let c = self.rng.random_range(0..self.centers.len());
                    for j in 0..self.dim {
                        let noise: f32 = StandardNormal.sample(&mut self.rng);
                        out.push(self.centers[c][j] + noise);
                    }
                }
            }
        }
    }
}

/// Deterministic synthetic dataset for fixed `(n, d, seed, kind)`.
pub fn gen_synthetic(n: usize, d: usize, seed: u64, kind: SyntheticKind) -> Result<VectorSet> {
    if n == 0 || d == 0 {
        return invalid("n and d must be at least 1");
    }
    let mut g = Generator::new(d, seed, kind)?;
    let mut data = Vec::with_capacity(n * d);
    g.fill(n, &mut data);
    VectorSet::new(d, data)
}

/// Base set and a query set drawn from the same distribution. The base set
/// equals `gen_synthetic(n_base, d, seed, kind)`.
pub fn gen_split(
    n_base: usize,
    n_query: usize,
    d: usize,
    seed: u64,
    kind: SyntheticKind,
) -> Result<(VectorSet, VectorSet)> {
    if n_base == 0 || n_query == 0 || d == 0 {
        return invalid("n_base, n_query and d must be at least 1");
    }
    let mut g = Generator::new(d, seed, kind)?;
    let mut base = Vec::with_capacity(n_base * d);
    g.fill(n_base, &mut base);
    let mut queries = Vec::with_capacity(n_query * d);
    g.fill(n_query, &mut queries);
    Ok((VectorSet::new(d, base)?, VectorSet::new(d, queries)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::squared_l2;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_synthetic(10, 4, 7, SyntheticKind::Uniform).unwrap();
        let b = gen_synthetic(10, 4, 7, SyntheticKind::Uniform).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(10, 4, 8, SyntheticKind::Uniform).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_means_near_zero() {
        let s = gen_synthetic(1000, 16, 1, SyntheticKind::Gaussian).unwrap();
        for j in 0..16 {
            let mean: f64 = s.iter().map(|v| f64::from(v[j])).sum::<f64>() / 1000.0;
            assert!(mean.abs() < 0.1, "dim {j} mean {mean}");
        }
    }

    #[test]
    fn split_base_matches_plain_generation() {
        let (base, q) = gen_split(50, 5, 3, 9, SyntheticKind::Clustered { centers: 3 }).unwrap();
        assert_eq!(base, gen_synthetic(50, 3, 9, SyntheticKind::Clustered { centers: 3 }).unwrap());
        assert_eq!(q.len(), 5);
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(gen_synthetic(0, 4, 1, SyntheticKind::Uniform).is_err());
        assert!(gen_synthetic(4, 0, 1, SyntheticKind::Uniform).is_err());
        assert!(gen_synthetic(4, 2, 1, SyntheticKind::Clustered { centers: 0 }).is_err());
    }

    /// Lloyd's k-means with several deterministic restarts; the restart with
    /// the lowest inertia wins.
    fn kmeans(points: &[Vec<f32>], k: usize, restarts: u64) -> Vec<usize> {
        let mut best: Option<(f32, Vec<usize>)> = None;
        for r in 0..restarts {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + r);
            let mut centers: Vec<Vec<f32>> = (0..k)
                .map(|_| points[rng.random_range(0..points.len())].clone())
                .collect();
            let mut assign = vec![0usize; points.len()];
            for _ in 0..100 {
                for (i, p) in points.iter().enumerate() {
                    assign[i] = (0..k)
                        .min_by(|&a, &b| {
                            squared_l2(p, &centers[a]).total_cmp(&squared_l2(p, &centers[b]))
                        })
                        .unwrap();
                }
                for (c, center) in centers.iter_mut().enumerate() {
                    let members: Vec<&Vec<f32>> = points
                        .iter()
                        .zip(&assign)
                        .filter(|(_, a)| **a == c)
                        .map(|(p, _)| p)
                        .collect();
                    if members.is_empty() {
                        continue;
                    }
                    for j in 0..center.len() {
                        center[j] =
                            members.iter().map(|m| m[j]).sum::<f32>() / members.len() as f32;
                    }
                }
            }
            let inertia: f32 = points
                .iter()
                .zip(&assign)
                .map(|(p, &a)| squared_l2(p, &centers[a]))
                .sum();
            if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
                best = Some((inertia, assign));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn clustered_data_is_recoverable_by_kmeans() {
        // regenerate labels alongside the data with the generator internals
        let kind = SyntheticKind::Clustered { centers: 4 };
        let mut g = Generator::new(2, 3, kind).unwrap();
        let mut labels = Vec::new();
        let mut points = Vec::new();
        for _ in 0..100 {
            let c = g.rng.random_range(0..g.centers.len());
            let p: Vec<f32> = (0..2)
                .map(|j| {
                    let noise: f32 = StandardNormal.sample(&mut g.rng);
                    g.centers[c][j] + noise
                })
                .collect();
            labels.push(c);
            points.push(p);
        }
        let set = gen_synthetic(100, 2, 3, kind).unwrap();
        assert_eq!(set, VectorSet::from_rows(points.clone()).unwrap());

        let assign = kmeans(&points, 4, 10);
        // purity: each found cluster votes for its majority true label
        let mut correct = 0;
        for c in 0..4 {
            let mut votes = [0usize; 4];
            for (a, l) in assign.iter().zip(&labels) {
                if *a == c {
                    votes[*l] += 1;
                }
            }
            correct += votes.iter().max().unwrap();
        }
        assert!(correct >= 90, "purity {correct}/100");
    }
}
