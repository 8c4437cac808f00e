//! Batch expected hypervolume improvement by joint Monte Carlo, and the
//! recommenders built on it.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::gp::{Gp, GpConfig};
use super::pareto::{hv_sweep, normalize, pareto_front};
use super::space::{ParamPoint, ParamSpace};
use super::Observation;
use crate::error::{invalid, Error, Result};

pub const DEFAULT_MC_SAMPLES: usize = 128;
pub const DEFAULT_POOL_SIZE: usize = 512;
/// Reference point in normalized objective space.
pub const REFERENCE: (f64, f64) = (0.0, 0.0);

/// Joint posterior over a set of points, per objective (qps, recall).
#[derive(Clone, Debug)]
pub struct JointPosterior {
    pub mean: [DVector<f64>; 2],
    pub cov: [DMatrix<f64>; 2],
}

pub trait Surrogate {
    fn joint(&self, xs: &[Vec<f64>]) -> JointPosterior;
}

/// Independent GPs on the normalized qps and recall objectives.
#[derive(Clone, Debug)]
pub struct GpSurrogate {
    pub qps: Gp,
    pub recall: Gp,
}

impl GpSurrogate {
    pub fn fit(x: &[Vec<f64>], y: &[(f64, f64)], cfg: &GpConfig) -> Result<Self> {
        if x.len() < 2 {
            return invalid(format!("surrogate needs at least two observations, got {}", x.len()));
        }
        let q: Vec<f64> = y.iter().map(|p| p.0).collect();
        let r: Vec<f64> = y.iter().map(|p| p.1).collect();
        let recall_cfg = GpConfig {
            seed: cfg.seed ^ 0x5eed_0f_2ec0,
            ..cfg.clone()
        };
        Ok(Self {
            qps: Gp::fit(x, &q, cfg)?,
            recall: Gp::fit(x, &r, &recall_cfg)?,
        })
    }
}

impl Surrogate for GpSurrogate {
    fn joint(&self, xs: &[Vec<f64>]) -> JointPosterior {
        let (mq, cq) = self.qps.joint(xs);
        let (mr, cr) = self.recall.joint(xs);
        JointPosterior {
            mean: [mq, mr],
            cov: [cq, cr],
        }
    }
}

const PIVOT_EPS: f64 = 1e-12;

/// Posterior samples of a growing batch drawn from a fixed universe of
/// candidates. Sample `s` of the member at position `j` always uses the same
/// standard normals, and the Cholesky rows of earlier members never change,
/// so adding a member leaves the earlier members' samples untouched.
struct BatchSampler<'a> {
    post: &'a JointPosterior,
    n_samples: usize,
    rng: ChaCha8Rng,
    /// `normals[j][s]` for batch position `j`, one per objective.
    normals: Vec<Vec<[f64; 2]>>,
    members: Vec<usize>,
    /// Lower-triangular factor rows of the members' covariance, per objective.
    rows: [Vec<Vec<f64>>; 2],
    samples: Vec<Vec<(f64, f64)>>,
    front: Vec<(f64, f64)>,
    r: (f64, f64),
    base: f64,
}

struct Trial {
    rows: [Vec<f64>; 2],
    values: Vec<(f64, f64)>,
}

impl<'a> BatchSampler<'a> {
    fn new(post: &'a JointPosterior, front: &[(f64, f64)], r: (f64, f64), n_samples: usize, seed: u64) -> Self {
        Self {
            post,
            n_samples,
            rng: ChaCha8Rng::seed_from_u64(seed),
            normals: Vec::new(),
            members: Vec::new(),
            rows: [Vec::new(), Vec::new()],
            samples: vec![Vec::new(); n_samples],
            front: front.to_vec(),
            r,
            base: hv_sweep(front.iter().copied(), r),
        }
    }

    fn ensure_normals(&mut self) {
        while self.normals.len() <= self.members.len() {
            let z = (0..self.n_samples)
                .map(|_| [self.rng.sample(StandardNormal), self.rng.sample(StandardNormal)])
                .collect();
            self.normals.push(z);
        }
    }

    /// Factor row of candidate `c` appended after the current members.
    fn factor_row(&self, obj: usize, c: usize) -> Vec<f64> {
        let cov = &self.post.cov[obj];
        let rows = &self.rows[obj];
        let j = self.members.len();
        let mut row = vec![0.0; j + 1];
        for i in 0..j {
            let lii = rows[i][i];
            if lii > PIVOT_EPS {
                let s: f64 = (0..i).map(|k| row[k] * rows[i][k]).sum();
                row[i] = (cov[(c, self.members[i])] - s) / lii;
            }
        }
        let d = cov[(c, c)] - row[..j].iter().map(|x| x * x).sum::<f64>();
        row[j] = d.max(0.0).sqrt();
        row
    }

    fn trial(&self, c: usize) -> Trial {
        let j = self.members.len();
        let rows = [self.factor_row(0, c), self.factor_row(1, c)];
        let values = (0..self.n_samples)
            .map(|s| {
                let draw = |obj: usize| {
                    let z: f64 = (0..=j).map(|k| rows[obj][k] * self.normals[k][s][obj]).sum();
                    self.post.mean[obj][c] + z
                };
                (draw(0), draw(1))
            })
            .collect();
        Trial { rows, values }
    }

    fn gain_with(&self, extra: Option<&[(f64, f64)]>) -> f64 {
        let total: f64 = (0..self.n_samples)
            .map(|s| {
                let pts = self.front.iter().chain(&self.samples[s]).copied();
                let hv = match extra {
                    Some(e) => hv_sweep(pts.chain(std::iter::once(e[s])), self.r),
                    None => hv_sweep(pts, self.r),
                };
                (hv - self.base).max(0.0)
            })
            .sum();
        total / self.n_samples as f64
    }

    fn commit(&mut self, c: usize, t: Trial) {
        let [rq, rr] = t.rows;
        self.rows[0].push(rq);
        self.rows[1].push(rr);
        for (s, v) in t.values.into_iter().enumerate() {
            self.samples[s].push(v);
        }
        self.members.push(c);
    }

    fn value(&self) -> f64 {
        self.gain_with(None)
    }
}

/// Monte-Carlo estimate of the expected hypervolume improvement of adding
/// all of `candidates` (scaled points) to `front` at once.
pub fn mehvi(
    candidates: &[Vec<f64>],
    surrogate: &dyn Surrogate,
    front: &[(f64, f64)],
    r: (f64, f64),
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples == 0 {
        return invalid("mEHVI needs at least one sample");
    }
    if candidates.is_empty() {
        return Ok(0.0);
    }
    let post = surrogate.joint(candidates);
    let mut sampler = BatchSampler::new(&post, front, r, n_samples, seed);
    for c in 0..candidates.len() {
        sampler.ensure_normals();
        let t = sampler.trial(c);
        sampler.commit(c, t);
    }
    Ok(sampler.value())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecommendConfig {
    pub pool_size: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub gp: GpConfig,
}

impl RecommendConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            pool_size: DEFAULT_POOL_SIZE,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed,
            gp: GpConfig {
                seed,
                ..GpConfig::default()
            },
        }
    }
}

fn key(p: &ParamPoint) -> Vec<u64> {
    p.values.iter().map(|v| v.to_bits()).collect()
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut inv = 1.0 / b;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base as u64) as f64 * inv;
        i /= base as u64;
        inv /= b;
    }
    out
}

/// Randomly shifted Halton points, decoded to the grid, deduplicated, with
/// already observed settings removed.
fn candidate_pool<R: Rng>(
    space: &ParamSpace,
    size: usize,
    rng: &mut R,
    observed: &HashSet<Vec<u64>>,
) -> Result<Vec<ParamPoint>> {
    let p = space.dim();
    if p > PRIMES.len() {
        return invalid(format!("quasi-random pool supports at most {} dimensions", PRIMES.len()));
    }
    let shift: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
    let mut seen = observed.clone();
    let mut pool = Vec::new();
    for i in 1..=size as u64 {
        let x: Vec<f64> = (0..p)
            .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
            .collect();
        let pt = space.decode(&x);
        if seen.insert(key(&pt)) {
            pool.push(pt);
        }
    }
    Ok(pool)
}

/// Latin-hypercube batch decoded to the grid, avoiding observed settings and
/// within-batch repeats (topped up by uniform draws).
fn space_filling<R: Rng>(
    space: &ParamSpace,
    m: usize,
    rng: &mut R,
    observed: &HashSet<Vec<u64>>,
) -> Result<Vec<ParamPoint>> {
    let p = space.dim();
    let perms: Vec<Vec<usize>> = (0..p)
        .map(|_| {
            let mut v: Vec<usize> = (0..m).collect();
            v.shuffle(rng);
            v
        })
        .collect();
    let mut seen = observed.clone();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let x: Vec<f64> = (0..p)
            .map(|d| (perms[d][i] as f64 + rng.random::<f64>()) / m as f64)
            .collect();
        let mut pt = space.decode(&x);
        let mut tries = 0;
        while !seen.insert(key(&pt)) {
            tries += 1;
            if tries > 1000 {
                return invalid("parameter grid has too few unobserved settings for the batch");
            }
            pt = space.random_point(rng);
        }
        out.push(pt);
    }
    Ok(out)
}

/// Uniform grid draws, independent across dimensions.
pub fn random_search_batch<R: Rng>(space: &ParamSpace, m: usize, rng: &mut R) -> Vec<ParamPoint> {
    (0..m).map(|_| space.random_point(rng)).collect()
}

/// Normalized objectives of `obs` against their own front, and that front.
pub(crate) fn normalized(obs: &[Observation]) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let raw: Vec<(f64, f64)> = obs.iter().map(Observation::objectives).collect();
    let front_raw: Vec<(f64, f64)> = pareto_front(&raw).into_iter().map(|i| raw[i]).collect();
    let y = raw
        .iter()
        .map(|&o| normalize(o, &front_raw))
        .collect::<Result<Vec<_>>>()?;
    let front = pareto_front(&y).into_iter().map(|i| y[i]).collect();
    Ok((y, front))
}

/// Next batch of `m` distinct, unobserved settings. With fewer than `2p`
/// observations the batch is space-filling; otherwise it is grown greedily
/// from a quasi-random pool by joint mEHVI. When no pool point improves the
/// estimate, the point with the largest posterior variance given the batch
/// so far is taken instead.
pub fn recommend_batch(
    space: &ParamSpace,
    obs: &[Observation],
    m: usize,
    cfg: &RecommendConfig,
) -> Result<Vec<ParamPoint>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if m > cfg.pool_size {
        return invalid(format!("batch size {m} exceeds the candidate pool size {}", cfg.pool_size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let observed: HashSet<Vec<u64>> = obs.iter().map(|o| key(&o.params)).collect();
    if obs.len() < 2 * space.dim() {
        return space_filling(space, m, &mut rng, &observed);
    }
    let (y, front) = normalized(obs)?;
    let x: Vec<Vec<f64>> = obs.iter().map(|o| o.params.scaled.clone()).collect();
    let surrogate = GpSurrogate::fit(&x, &y, &cfg.gp)?;
    let pool = candidate_pool(space, cfg.pool_size, &mut rng, &observed)?;
    if pool.len() < m {
        return invalid(format!(
            "only {} distinct unobserved pool points for a batch of {m}",
            pool.len()
        ));
    }
    let xs: Vec<Vec<f64>> = pool.iter().map(|p| p.scaled.clone()).collect();
    let post = surrogate.joint(&xs);
    let chosen = greedy(&post, &front, m, cfg.mc_samples, cfg.seed ^ 0x3c_a11e)?;
    Ok(chosen.into_iter().map(|i| pool[i].clone()).collect())
}

fn greedy(post: &JointPosterior, front: &[(f64, f64)], m: usize, n_samples: usize, seed: u64) -> Result<Vec<usize>> {
    if n_samples == 0 {
        return invalid("mEHVI needs at least one sample");
    }
    let n = post.mean[0].len();
    let mut sampler = BatchSampler::new(post, front, REFERENCE, n_samples, seed);
    let mut taken = vec![false; n];
    for _ in 0..m {
        sampler.ensure_normals();
        let now = sampler.value();
        let scored: Vec<(usize, f64, f64)> = (0..n)
            .into_par_iter()
            .filter(|&c| !taken[c])
            .map(|c| {
                let t = sampler.trial(c);
                let j = sampler.members.len();
                let var = t.rows[0][j].powi(2) + t.rows[1][j].powi(2);
                (c, sampler.gain_with(Some(&t.values)) - now, var)
            })
            .collect();
        let best = scored
            .iter()
            .copied()
            .fold(None::<(usize, f64, f64)>, |acc, x| match acc {
                Some(a) if a.1 >= x.1 => Some(a),
                _ => Some(x),
            })
            .ok_or(Error::Empty("candidate pool"))?;
        let pick = if best.1 > 0.0 {
            best.0
        } else {
            scored
                .iter()
                .copied()
                .fold(None::<(usize, f64, f64)>, |acc, x| match acc {
                    Some(a) if a.2 >= x.2 => Some(a),
                    _ => Some(x),
                })
                .map(|x| x.0)
                .expect("non-empty")
        };
        let t = sampler.trial(pick);
        sampler.commit(pick, t);
        taken[pick] = true;
    }
    Ok(sampler.members)
}
