use serde::{Deserialize, Serialize};

use super::space::{ParamPoint, ParamSpace};
use super::{Evaluator, Measurement};
use crate::bench::{eval_graph, EvalReport, EvalRow, TargetSummary};
use crate::builder::{build_multi, BuildOptions};
use crate::dataset::{GroundTruth, VectorSet};
use crate::error::{invalid, Result};

/// How the qps objective is obtained from an evaluation sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QpsMode {
    /// Measured single-threaded queries per second.
    Wall,
    /// `1e6 / distance evaluations per query`; machine-independent and
    /// reproducible.
    Proxy,
}

impl std::str::FromStr for QpsMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(QpsMode::Wall),
            "proxy" => Ok(QpsMode::Proxy),
            _ => invalid(format!("unknown qps mode {s:?} (expected wall or proxy)")),
        }
    }
}

impl QpsMode {
    fn qps(self, row: &EvalRow) -> f64 {
        match self {
            QpsMode::Wall => row.qps,
            QpsMode::Proxy => 1e6 / row.dist_per_query.max(1.0),
        }
    }
}

/// Builds each batch with the batch builder and scores every graph at the
/// operating point of `target_recall`.
pub struct GraphEvaluator<'a> {
    pub data: &'a VectorSet,
    pub queries: &'a VectorSet,
    pub truth: &'a GroundTruth,
    pub k: usize,
    pub ef_grid: Vec<usize>,
    pub target_recall: f64,
    pub qps_mode: QpsMode,
    pub build: BuildOptions,
}

impl GraphEvaluator<'_> {
    fn measure(&self, ev: &EvalReport, dist_build: u64) -> Measurement {
        let op = ev.operating_point(self.target_recall);
        let targets = ev
            .targets
            .iter()
            .map(|t| {
                let row = t.ef.and_then(|ef| ev.rows.iter().find(|r| r.ef == ef));
                TargetSummary {
                    qps: row.map(|r| self.qps_mode.qps(r)),
                    ..t.clone()
                }
            })
            .collect();
        Measurement {
            qps: self.qps_mode.qps(op),
            recall: op.recall,
            dist_build,
            targets,
        }
    }
}

impl Evaluator for GraphEvaluator<'_> {
    fn evaluate(&mut self, space: &ParamSpace, batch: &[ParamPoint]) -> Result<Vec<Measurement>> {
        let params = batch
            .iter()
            .map(|p| space.build_params(p))
            .collect::<Result<Vec<_>>>()?;
        let built = build_multi(self.data, &params, &self.build)?;
        built
            .graphs
            .iter()
            .zip(&built.reports)
            .map(|(g, rep)| {
                let ev = eval_graph(g, self.data, self.queries, self.truth, self.k, &self.ef_grid)?;
                Ok(self.measure(&ev, rep.dist_total))
            })
            .collect()
    }
}
