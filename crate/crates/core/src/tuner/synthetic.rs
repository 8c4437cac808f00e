//! A smooth two-parameter, two-objective test problem standing in for
//! graph builds when exercising the tuner.

use super::pareto::{hv_sweep, pareto_front};
use super::space::{ParamDim, ParamPoint, ParamSpace};
use super::{Evaluator, Measurement};
use crate::error::Result;

/// First objective, maximal (1.0) at `(0, 0.3)`.
pub fn f1(x: &[f64]) -> f64 {
    (-2.0 * x[0]).exp() * (1.0 - 0.5 * (x[1] - 0.3).powi(2))
}

/// Second objective, maximal at `(1, 0.7)`.
pub fn f2(x: &[f64]) -> f64 {
    (1.0 - (-3.0 * x[0]).exp()) * (1.0 - 0.5 * (x[1] - 0.7).powi(2)) + 0.01
}

pub const F1_MAX: f64 = 1.0;

pub fn f2_max() -> f64 {
    1.0 - (-3.0f64).exp() + 0.01
}

/// `[0, 1]^2` on a 0.01 grid.
pub fn space() -> ParamSpace {
    ParamSpace::new(
        None,
        vec![ParamDim::new("x0", 0.0, 1.0, 0.01), ParamDim::new("x1", 0.0, 1.0, 0.01)],
    )
    .expect("valid space")
}

/// Reports `f1` as qps and `f2` as recall.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticEvaluator;

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&mut self, _space: &ParamSpace, batch: &[ParamPoint]) -> Result<Vec<Measurement>> {
        Ok(batch
            .iter()
            .map(|p| Measurement {
                qps: f1(&p.values),
                recall: f2(&p.values),
                dist_build: 0,
                targets: Vec::new(),
            })
            .collect())
    }
}

/// Hypervolume of `points` scaled by the objectives' true maxima, reference
/// at the origin. Comparable across runs, unlike the tuner's own
/// front-relative normalization.
pub fn normalized_hypervolume(points: &[(f64, f64)]) -> f64 {
    let scaled: Vec<(f64, f64)> = points.iter().map(|p| (p.0 / F1_MAX, p.1 / f2_max())).collect();
    let front = pareto_front(&scaled);
    hv_sweep(front.into_iter().map(|i| scaled[i]), (0.0, 0.0))
}
