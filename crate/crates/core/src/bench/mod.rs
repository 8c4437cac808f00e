//! Recall/QPS measurement over an `ef` sweep and batch-versus-sequential
//! repetition diagnostics.

mod repetition;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{recall_at_k, DistanceCounter, GroundTruth, VectorSet};
use crate::error::{invalid, Result};
use crate::graph::{ProximityGraph, SearchScratch};

pub use repetition::{repetition_report, RepetitionReport, EXACT_PAIR_LIMIT};

pub const TARGET_RECALLS: [f64; 3] = [0.9, 0.95, 0.99];

/// Queries run untimed before each timed sweep row.
const WARMUP_QUERIES: usize = 100;

/// `{k, 20, 40, 80, 120, 160, 200, 300, 400}`, dropping values below `k`.
pub fn default_ef_grid(k: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [k, 20, 40, 80, 120, 160, 200, 300, 400]
        .into_iter()
        .filter(|&ef| ef >= k)
        .collect();
    grid.sort_unstable();
    grid.dedup();
    grid
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub ef: usize,
    pub recall: f64,
    pub qps: f64,
    pub dist_per_query: f64,
}

/// Cheapest sweep row reaching a target recall; all `None` when unreached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub target: f64,
    pub ef: Option<usize>,
    pub qps: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub queries: usize,
    pub rows: Vec<EvalRow>,
    pub targets: Vec<TargetSummary>,
}

impl EvalReport {
    /// The row at the smallest `ef` reaching `target`, else the row with the
    /// highest recall (largest `ef` on ties).
    pub fn operating_point(&self, target: f64) -> &EvalRow {
        self.rows
            .iter()
            .find(|r| r.recall >= target)
            .or_else(|| {
                self.rows
                    .iter()
                    .max_by(|a, b| a.recall.total_cmp(&b.recall))
            })
            .expect("reports always have rows")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::Error::InvalidArgument(format!("csv: {other:?}")),
    }
}

/// Sweeps `ef_grid`, measuring mean recall@k against `truth`, single-threaded
/// QPS (after an untimed warm-up), and mean distance evaluations per query.
pub fn eval_graph(
    g: &ProximityGraph,
    data: &VectorSet,
    queries: &VectorSet,
    truth: &GroundTruth,
    k: usize,
    ef_grid: &[usize],
) -> Result<EvalReport> {
    if ef_grid.is_empty() {
        return invalid("ef grid is empty");
    }
    if ef_grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("ef grid must be strictly ascending");
    }
    if ef_grid[0] < k {
        return invalid(format!("smallest ef ({}) is below k ({k})", ef_grid[0]));
    }
    if truth.len() != queries.len() {
        return invalid(format!(
            "ground truth covers {} queries, query set has {}",
            truth.len(),
            queries.len()
        ));
    }
    if truth.depth() < k {
        return invalid(format!("ground truth depth {} is below k ({k})", truth.depth()));
    }
    if g.len() != data.len() {
        return invalid(format!("graph has {} nodes, dataset {}", g.len(), data.len()));
    }
    let nq = queries.len();
    let mut scratch = SearchScratch::new(data.len());
    let truth_ids: Vec<Vec<u32>> = (0..nq).map(|q| truth.ids(q)).collect();
    let mut rows = Vec::with_capacity(ef_grid.len());
    for &ef in ef_grid {
        let idle = DistanceCounter::new();
        for q in queries.iter().take(WARMUP_QUERIES) {
            g.search(data, q, k, ef, &mut scratch, &idle)?;
        }
        let counter = DistanceCounter::new();
        let mut results = Vec::with_capacity(nq);
        let t = Instant::now();
        for q in queries.iter() {
            results.push(g.search(data, q, k, ef, &mut scratch, &counter)?);
        }
        let secs = t.elapsed().as_secs_f64();
        let mut recall = 0.0;
        for (res, want) in results.iter().zip(&truth_ids) {
            let ids: Vec<u32> = res.iter().map(|x| x.id).collect();
            recall += recall_at_k(&ids, want, k)?;
        }
        rows.push(EvalRow {
            ef,
            recall: recall / nq as f64,
            qps: nq as f64 / secs.max(1e-9),
            dist_per_query: counter.get() as f64 / nq as f64,
        });
    }
    let targets = TARGET_RECALLS
        .iter()
        .map(|&target| {
            let hit = rows.iter().find(|r| r.recall >= target);
            TargetSummary {
                target,
                ef: hit.map(|r| r.ef),
                qps: hit.map(|r| r.qps),
                recall: hit.map(|r| r.recall),
            }
        })
        .collect();
    Ok(EvalReport {
        k,
        queries: nq,
        rows,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_single, KnngMode};
    use crate::dataset::{gen_split, SyntheticKind};
    use crate::params::{BuildParams, HnswParams};

    #[test]
    fn ef_grid_defaults() {
        assert_eq!(default_ef_grid(10), vec![10, 20, 40, 80, 120, 160, 200, 300, 400]);
        assert_eq!(default_ef_grid(50), vec![50, 80, 120, 160, 200, 300, 400]);
    }

    #[test]
    fn sweep_is_deterministic_in_recall_and_monotone() {
        let (base, queries) = gen_split(800, 40, 8, 1, SyntheticKind::Gaussian).unwrap();
        let truth = GroundTruth::compute(&base, &queries, 10, &DistanceCounter::new()).unwrap();
        let (g, _) = build_single(&base, &BuildParams::Hnsw(HnswParams::new(8, 40)), 1, KnngMode::Exact).unwrap();
        let grid = [10, 20, 40, 80, 800];
        let a = eval_graph(&g, &base, &queries, &truth, 10, &grid).unwrap();
        let b = eval_graph(&g, &base, &queries, &truth, 10, &grid).unwrap();
        let recalls = |r: &EvalReport| r.rows.iter().map(|x| x.recall).collect::<Vec<_>>();
        assert_eq!(recalls(&a), recalls(&b));
        assert!(a.rows.windows(2).all(|w| w[1].recall >= w[0].recall - 1e-12));
        assert_eq!(a.rows.last().unwrap().recall, 1.0);
        assert_eq!(a.targets.len(), 3);
        assert!(a.targets[2].ef.is_some());
        assert!(a.operating_point(0.99).recall >= 0.99);
        assert!(eval_graph(&g, &base, &queries, &truth, 10, &[]).is_err());
        assert!(eval_graph(&g, &base, &queries, &truth, 10, &[5, 20]).is_err());
        assert!(eval_graph(&g, &base, &queries, &truth, 10, &[40, 20]).is_err());
    }

    #[test]
    fn operating_point_falls_back_to_best_recall() {
        let row = |ef, recall| EvalRow {
            ef,
            recall,
            qps: 1.0,
            dist_per_query: 1.0,
        };
        let r = EvalReport {
            k: 1,
            queries: 1,
            rows: vec![row(1, 0.5), row(2, 0.8), row(3, 0.8)],
            targets: vec![],
        };
        assert_eq!(r.operating_point(0.7).ef, 2);
        assert_eq!(r.operating_point(0.9).ef, 3);
    }
}
