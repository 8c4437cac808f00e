//! Batch multi-objective Bayesian tuning of construction parameters,
//! maximizing (qps, recall).

mod evaluator;
pub mod gp;
mod mehvi;
mod pareto;
mod space;
pub mod synthetic;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{TargetSummary, TARGET_RECALLS};
use crate::error::{invalid, Error, Result};

pub use evaluator::{GraphEvaluator, QpsMode};
pub use gp::{Gp, GpConfig};
pub use mehvi::{
    mehvi, random_search_batch, recommend_batch, GpSurrogate, JointPosterior, RecommendConfig, Surrogate,
    DEFAULT_MC_SAMPLES, DEFAULT_POOL_SIZE, REFERENCE,
};
pub use pareto::{balanced_index, dominates, hypervolume_2d, normalize, pareto_front};
pub use space::{ParamDim, ParamPoint, ParamSpace};

/// Recall values are floored to this before normalization.
pub const RECALL_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recommender {
    Mehvi,
    Random,
}

impl std::str::FromStr for Recommender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mehvi" => Ok(Recommender::Mehvi),
            "random" => Ok(Recommender::Random),
            _ => invalid(format!("unknown recommender {s:?} (expected mehvi or random)")),
        }
    }
}

/// Outcome of evaluating one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub qps: f64,
    pub recall: f64,
    pub dist_build: u64,
    /// Per-target operating points, when the evaluator sweeps a search knob.
    pub targets: Vec<TargetSummary>,
}

pub trait Evaluator {
    /// Measures every point of `batch`, in order.
    fn evaluate(&mut self, space: &ParamSpace, batch: &[ParamPoint]) -> Result<Vec<Measurement>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub iter: usize,
    pub params: ParamPoint,
    pub qps: f64,
    pub recall: f64,
    pub dist_build: u64,
    pub targets: Vec<TargetSummary>,
}

impl Observation {
    /// `(qps, recall)` with recall floored.
    pub fn objectives(&self) -> (f64, f64) {
        (self.qps, self.recall.max(RECALL_FLOOR))
    }

    /// QPS at `target` recall: from the per-target sweep when present, else
    /// the observation itself if it reaches the target.
    pub fn qps_at(&self, target: f64) -> Option<f64> {
        match self.targets.iter().find(|t| t.target == target) {
            Some(t) => t.qps,
            None => (self.recall >= target).then_some(self.qps),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub budget: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub recommender: Recommender,
    pub pool_size: usize,
    pub mc_samples: usize,
}

impl TuneConfig {
    pub fn new(budget: usize, batch_size: usize, seed: u64, recommender: Recommender) -> Self {
        Self {
            budget,
            batch_size,
            seed,
            recommender,
            pool_size: DEFAULT_POOL_SIZE,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

/// One line of the tuning log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub params: serde_json::Value,
    pub qps: f64,
    pub recall: f64,
    pub dist_build: u64,
    pub dist_cum: u64,
    pub wall_ms_cum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub index: usize,
    pub iter: usize,
    pub params: serde_json::Value,
    pub qps: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetBest {
    pub target: f64,
    pub index: Option<usize>,
    pub params: Option<serde_json::Value>,
    pub qps: Option<f64>,
}

/// Wall time split between recommending candidates and estimating them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSplit {
    pub recommend_ms: f64,
    pub estimate_ms: f64,
    pub wall_ms: f64,
    pub estimate_share: f64,
    pub dist_build_total: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub recommender: Recommender,
    pub budget: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub iterations: usize,
    pub observations: usize,
    /// The balanced front member all objectives are divided by.
    pub normalizer: (f64, f64),
    pub reference: (f64, f64),
    pub front: Vec<FrontMember>,
    /// Normalized hypervolume after each iteration, all under the final
    /// normalization.
    pub hv_trace: Vec<f64>,
    pub best_per_target: Vec<TargetBest>,
    pub cost: CostSplit,
}

#[derive(Clone, Debug)]
pub struct TunerState {
    pub space: ParamSpace,
    pub observations: Vec<Observation>,
    pub seed: u64,
    pub batch_size: usize,
    pub budget: usize,
    pub iterations: usize,
}

impl TunerState {
    pub fn remaining(&self) -> usize {
        self.budget - self.observations.len()
    }

    /// Indices of the non-dominated observations.
    pub fn front(&self) -> Vec<usize> {
        pareto_front(&self.objectives())
    }

    pub fn objectives(&self) -> Vec<(f64, f64)> {
        self.observations.iter().map(Observation::objectives).collect()
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs recommend/estimate rounds of `batch_size` until `budget`
/// observations exist (the last round may be smaller). `on_record` sees each
/// observation as it is appended.
pub fn tune<E: Evaluator>(
    space: &ParamSpace,
    evaluator: &mut E,
    cfg: &TuneConfig,
    mut on_record: impl FnMut(&LogRecord) -> Result<()>,
) -> Result<(TunerState, TuneReport)> {
    space.validate()?;
    if cfg.batch_size == 0 {
        return invalid("batch size must be positive");
    }
    if cfg.budget < cfg.batch_size {
        return invalid(format!(
            "budget ({}) is smaller than the batch size ({})",
            cfg.budget, cfg.batch_size
        ));
    }
    let mut state = TunerState {
        space: space.clone(),
        observations: Vec::with_capacity(cfg.budget),
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        budget: cfg.budget,
        iterations: 0,
    };
    let mut random_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = Instant::now();
    let (mut recommend_ms, mut estimate_ms) = (0.0, 0.0);
    let mut dist_cum = 0u64;
    let mut sizes = Vec::new();
    while state.remaining() > 0 {
        let m = cfg.batch_size.min(state.remaining());
        let iter = state.iterations;
        let t = Instant::now();
        let batch = match cfg.recommender {
            Recommender::Random => random_search_batch(space, m, &mut random_rng),
            Recommender::Mehvi => {
                let seed = cfg.seed ^ (iter as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let rc = RecommendConfig {
                    pool_size: cfg.pool_size,
                    mc_samples: cfg.mc_samples,
                    ..RecommendConfig::new(seed)
                };
                recommend_batch(space, &state.observations, m, &rc)?
            }
        };
        recommend_ms += ms(t);
        let t = Instant::now();
        let measured = evaluator.evaluate(space, &batch)?;
        estimate_ms += ms(t);
        if measured.len() != batch.len() {
            return Err(Error::Numerical(format!(
                "evaluator returned {} measurements for {} points",
                measured.len(),
                batch.len()
            )));
        }
        for (params, meas) in batch.into_iter().zip(measured) {
            if !(meas.qps.is_finite() && meas.qps > 0.0) {
                return Err(Error::Numerical(format!("non-positive qps {}", meas.qps)));
            }
            if !meas.recall.is_finite() {
                return Err(Error::Numerical("non-finite recall".into()));
            }
            dist_cum += meas.dist_build;
            on_record(&LogRecord {
                iter,
                params: space.describe(&params),
                qps: meas.qps,
                recall: meas.recall,
                dist_build: meas.dist_build,
                dist_cum,
                wall_ms_cum: ms(start),
            })?;
            state.observations.push(Observation {
                iter,
                params,
                qps: meas.qps,
                recall: meas.recall,
                dist_build: meas.dist_build,
                targets: meas.targets,
            });
        }
        sizes.push(state.observations.len());
        state.iterations += 1;
    }
    let wall_ms = ms(start);
    let report = summarize(&state, cfg, &sizes, recommend_ms, estimate_ms, wall_ms, dist_cum)?;
    Ok((state, report))
}

fn summarize(
    state: &TunerState,
    cfg: &TuneConfig,
    sizes: &[usize],
    recommend_ms: f64,
    estimate_ms: f64,
    wall_ms: f64,
    dist_build_total: u64,
) -> Result<TuneReport> {
    let obs = &state.observations;
    let raw = state.objectives();
    let front_idx = pareto_front(&raw);
    let front_raw: Vec<(f64, f64)> = front_idx.iter().map(|&i| raw[i]).collect();
    let normalizer = front_raw[balanced_index(&front_raw)?];
    let y = raw
        .iter()
        .map(|&o| normalize(o, &front_raw))
        .collect::<Result<Vec<_>>>()?;
    let hv_trace = sizes
        .iter()
        .map(|&n| {
            let f: Vec<(f64, f64)> = pareto_front(&y[..n]).into_iter().map(|i| y[i]).collect();
            hypervolume_2d(&f, REFERENCE)
        })
        .collect::<Result<Vec<_>>>()?;
    let front = front_idx
        .iter()
        .map(|&i| FrontMember {
            index: i,
            iter: obs[i].iter,
            params: state.space.describe(&obs[i].params),
            qps: obs[i].qps,
            recall: obs[i].recall,
        })
        .collect();
    let best_per_target = TARGET_RECALLS
        .iter()
        .map(|&target| {
            let best = obs
                .iter()
                .enumerate()
                .filter_map(|(i, o)| o.qps_at(target).map(|q| (i, q)))
                .fold(None::<(usize, f64)>, |acc, x| match acc {
                    Some(a) if a.1 >= x.1 => Some(a),
                    _ => Some(x),
                });
            TargetBest {
                target,
                index: best.map(|b| b.0),
                params: best.map(|b| state.space.describe(&obs[b.0].params)),
                qps: best.map(|b| b.1),
            }
        })
        .collect();
    Ok(TuneReport {
        recommender: cfg.recommender,
        budget: cfg.budget,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        iterations: state.iterations,
        observations: obs.len(),
        normalizer,
        reference: REFERENCE,
        front,
        hv_trace,
        best_per_target,
        cost: CostSplit {
            recommend_ms,
            estimate_ms,
            wall_ms,
            estimate_share: estimate_ms / wall_ms.max(1e-9),
            dist_build_total,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::synthetic::{self, SyntheticEvaluator};
    use super::*;

    fn run(cfg: &TuneConfig) -> (TunerState, TuneReport, Vec<LogRecord>) {
        let mut log = Vec::new();
        let (s, r) = tune(&synthetic::space(), &mut SyntheticEvaluator, cfg, |rec| {
            log.push(rec.clone());
            Ok(())
        })
        .unwrap();
        (s, r, log)
    }

    #[test]
    fn minimal_loop() {
        let (s, r, log) = run(&TuneConfig::new(1, 1, 0, Recommender::Random));
        assert_eq!(s.observations.len(), 1);
        assert_eq!(log.len(), 1);
        assert_eq!(r.front.len(), 1);
        assert_eq!(r.front[0].index, 0);
        assert_eq!(r.normalizer, s.observations[0].objectives());
        assert_eq!(r.hv_trace, vec![1.0]);
    }

    #[test]
    fn iteration_arithmetic_and_ragged_tail() {
        let (s, r, _) = run(&TuneConfig::new(20, 10, 1, Recommender::Random));
        assert_eq!((s.iterations, s.observations.len()), (2, 20));
        let (s, r2, log) = run(&TuneConfig::new(12, 5, 1, Recommender::Mehvi));
        assert_eq!((s.iterations, s.observations.len()), (3, 12));
        assert_eq!(log.iter().map(|l| l.iter).collect::<Vec<_>>(), [&[0usize; 5][..], &[1; 5], &[2; 2]].concat());
        for rep in [r, r2] {
            assert!(rep.hv_trace.windows(2).all(|w| w[1] >= w[0]));
        }
        assert!(tune(
            &synthetic::space(),
            &mut SyntheticEvaluator,
            &TuneConfig::new(4, 5, 0, Recommender::Random),
            |_| Ok(())
        )
        .is_err());
    }

    #[test]
    fn mehvi_loop_is_deterministic_and_avoids_repeats() {
        let cfg = TuneConfig {
            pool_size: 128,
            mc_samples: 32,
            ..TuneConfig::new(15, 5, 7, Recommender::Mehvi)
        };
        let (a, ra, _) = run(&cfg);
        let (b, rb, _) = run(&cfg);
        assert_eq!(a.observations, b.observations);
        assert_eq!(ra.hv_trace, rb.hv_trace);
        let mut keys: Vec<Vec<u64>> = a
            .observations
            .iter()
            .map(|o| o.params.values.iter().map(|v| v.to_bits()).collect())
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 15);
    }

    #[test]
    fn best_per_target_uses_reaching_observations() {
        let (s, r, _) = run(&TuneConfig::new(10, 5, 3, Recommender::Random));
        for tb in &r.best_per_target {
            if let Some(i) = tb.index {
                assert!(s.observations[i].recall >= tb.target);
                assert!(s
                    .observations
                    .iter()
                    .filter(|o| o.recall >= tb.target)
                    .all(|o| o.qps <= tb.qps.unwrap()));
            }
        }
    }
}
