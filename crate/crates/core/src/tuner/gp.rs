//! Gaussian-process regression with an ARD Matérn-5/2 kernel, hyperparameters
//! fit by multi-start gradient ascent on the log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
/// Lower bound on the noise variance (standardized units).
pub const NOISE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GpConfig {
    /// Random restarts in addition to the default start.
    pub restarts: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 4,
            iterations: 120,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Log-scale hyperparameters: signal variance, one length scale per input
/// dimension, noise variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyper {
    pub log_sf2: f64,
    pub log_ls: Vec<f64>,
    pub log_sn2: f64,
}

impl Hyper {
    fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.log_sf2];
        v.extend(&self.log_ls);
        v.push(self.log_sn2);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        Self {
            log_sf2: v[0],
            log_ls: v[1..v.len() - 1].to_vec(),
            log_sn2: v[v.len() - 1],
        }
    }

    fn bounds(p: usize) -> Vec<(f64, f64)> {
        let mut b = vec![(1e-3f64.ln(), 100f64.ln())];
        b.extend(std::iter::repeat_n((0.01f64.ln(), 20f64.ln()), p));
        b.push((NOISE_FLOOR.ln(), 1f64.ln()));
        b
    }
}

fn matern(r: f64, sf2: f64) -> f64 {
    let s = SQRT5 * r;
    sf2 * (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn scaled_dist(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Debug)]
pub struct Gp {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    hyper: Hyper,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    lml: f64,
}

struct Fit {
    lml: f64,
    grad: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Log marginal likelihood and its gradient in the log hyperparameters.
fn evaluate(x: &[Vec<f64>], y: &DVector<f64>, h: &Hyper) -> Option<Fit> {
    let n = x.len();
    let p = h.log_ls.len();
    let sf2 = h.log_sf2.exp();
    let sn2 = h.log_sn2.exp();
    let ls: Vec<f64> = h.log_ls.iter().map(|l| l.exp()).collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = matern(scaled_dist(&x[i], &x[j], &ls), sf2);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let kf = k.clone();
    for i in 0..n {
        k[(i, i)] += sn2;
    }
    let chol = Cholesky::new(k)?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let w = &alpha * alpha.transpose() - chol.inverse();
    let mut grad = vec![0.0; p + 2];
    for i in 0..n {
        for j in 0..n {
            let wij = w[(i, j)];
            grad[0] += wij * kf[(i, j)];
            if i != j {
                let r = scaled_dist(&x[i], &x[j], &ls);
                let s = SQRT5 * r;
                let common = sf2 * 5.0 / 3.0 * (1.0 + s) * (-s).exp();
                for d in 0..p {
                    let diff = x[i][d] - x[j][d];
                    grad[1 + d] += wij * common * diff * diff / (ls[d] * ls[d]);
                }
            } else {
                grad[p + 1] += wij * sn2;
            }
        }
    }
    for g in grad.iter_mut() {
        *g *= 0.5;
    }
    Some(Fit { lml, grad, chol, alpha })
}

/// Projected Adam ascent from `start`; returns the best point visited.
fn ascend(x: &[Vec<f64>], y: &DVector<f64>, start: Vec<f64>, cfg: &GpConfig) -> Option<(Vec<f64>, Fit)> {
    let bounds = Hyper::bounds(x[0].len());
    let clamp = |v: &mut Vec<f64>| {
        for (t, (lo, hi)) in v.iter_mut().zip(&bounds) {
            *t = t.clamp(*lo, *hi);
        }
    };
    let mut theta = start;
    clamp(&mut theta);
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut best: Option<(Vec<f64>, Fit)> = None;
    for t in 1..=cfg.iterations {
        let Some(fit) = evaluate(x, y, &Hyper::from_vec(&theta)) else {
            break;
        };
        let step: Vec<f64> = fit
            .grad
            .iter()
            .enumerate()
            .map(|(i, g)| {
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mh = m[i] / (1.0 - b1.powi(t as i32));
                let vh = v[i] / (1.0 - b2.powi(t as i32));
                cfg.learning_rate * mh / (vh.sqrt() + eps)
            })
            .collect();
        if best.as_ref().is_none_or(|(_, b)| fit.lml > b.lml) {
            best = Some((theta.clone(), fit));
        }
        for (t, s) in theta.iter_mut().zip(step) {
            *t += s;
        }
        clamp(&mut theta);
    }
    best
}

impl Gp {
    /// Fits to inputs `x` (rows in `[0, 1]^p`) and targets `y`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return invalid("GP needs equally many inputs and targets, at least one");
        }
        let p = x[0].len();
        if p == 0 || x.iter().any(|r| r.len() != p) {
            return invalid("GP inputs must share a positive dimension");
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite GP target".into()));
        }
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let y_std = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));

        let default = Hyper {
            log_sf2: 0.0,
            log_ls: vec![0.5f64.ln(); p],
            log_sn2: 1e-3f64.ln(),
        };
        let mut starts = vec![default.to_vec()];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bounds = Hyper::bounds(p);
        for _ in 0..cfg.restarts {
            starts.push(bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect());
        }
        let mut best: Option<(Vec<f64>, Fit)> = None;
        for s in starts {
            if let Some((theta, fit)) = ascend(x, &ys, s, cfg) {
                if best.as_ref().is_none_or(|(_, b)| fit.lml > b.lml) {
                    best = Some((theta, fit));
                }
            }
        }
        let (theta, fit) = best.ok_or_else(|| Error::Numerical("GP kernel matrix is not positive definite".into()))?;
        Ok(Self {
            x: x.to_vec(),
            y_mean,
            y_std,
            hyper: Hyper::from_vec(&theta),
            chol: fit.chol,
            alpha: fit.alpha,
            lml: fit.lml,
        })
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Fitted noise variance in target units.
    pub fn noise_variance(&self) -> f64 {
        self.hyper.log_sn2.exp() * self.y_std * self.y_std
    }

    fn cross(&self, xs: &[Vec<f64>]) -> DMatrix<f64> {
        let sf2 = self.hyper.log_sf2.exp();
        let ls: Vec<f64> = self.hyper.log_ls.iter().map(|l| l.exp()).collect();
        DMatrix::from_fn(self.x.len(), xs.len(), |i, j| matern(scaled_dist(&self.x[i], &xs[j], &ls), sf2))
    }

    /// Joint posterior of the latent function at `xs`: mean vector and
    /// covariance matrix, in target units.
    pub fn joint(&self, xs: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let sf2 = self.hyper.log_sf2.exp();
        let ls: Vec<f64> = self.hyper.log_ls.iter().map(|l| l.exp()).collect();
        let ks = self.cross(xs);
        let v = self
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("cholesky factor is invertible");
        // entry-wise dots keep each entry independent of the other points in
        // `xs`, so a prefix of `xs` gets bit-identical moments
        let s2 = self.y_std * self.y_std;
        let mean = DVector::from_fn(xs.len(), |j, _| ks.column(j).dot(&self.alpha) * self.y_std + self.y_mean);
        let mut cov = DMatrix::from_fn(xs.len(), xs.len(), |i, j| {
            (matern(scaled_dist(&xs[i], &xs[j], &ls), sf2) - v.column(i).dot(&v.column(j))) * s2
        });
        for i in 0..xs.len() {
            cov[(i, i)] = cov[(i, i)].max(0.0);
        }
        (mean, cov)
    }

    /// Marginal posterior mean and variance at each point.
    pub fn predict(&self, xs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let (m, c) = self.joint(xs);
        (m.iter().copied().collect(), c.diagonal().iter().copied().collect())
    }
}
