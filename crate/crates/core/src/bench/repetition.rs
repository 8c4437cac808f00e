use serde::{Deserialize, Serialize};

use crate::builder::{build_multi, build_sequential, BatchBuild, BuildOptions, KnngMode};
use crate::dataset::VectorSet;
use crate::error::{invalid, Result};
use crate::params::{BuildParams, IndexKind};

/// Largest dataset for which exact pair sets are materialized.
pub const EXACT_PAIR_LIMIT: usize = 2000;

/// One sharing configuration of the batch builder against the sequential
/// baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub share_search: bool,
    pub reuse_prune: bool,
    pub dist_total: u64,
    pub rdc: f64,
    pub wall_ms: f64,
    pub rtc: f64,
}

/// Distance and time totals of a batch build relative to building the same
/// parameter sets one by one. `rdc` is batch/sequential distance count, `rtc`
/// the same ratio for wall time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub kind: IndexKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub dist_batch_total: u64,
    pub dist_sequential_total: u64,
    pub rdc: f64,
    pub rdc_search: f64,
    pub rdc_prune: f64,
    pub rdc_connect: f64,
    pub wall_batch_ms: f64,
    pub wall_sequential_ms: f64,
    pub rtc: f64,
    /// Share of the sequential builds' distinct-pair evaluations that repeat
    /// a pair another build in the batch also evaluates (exact mode only).
    pub shared_pair_ratio: Option<f64>,
    pub ablation: Vec<AblationRow>,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        if a == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a as f64 / b as f64
    }
}

/// Builds `params` once as a batch and once sequentially and compares their
/// costs. With `exact_pairs`, every evaluated pair is logged (needs
/// `n <= EXACT_PAIR_LIMIT`). With `ablation`, the batch is also built with
/// each sharing mechanism alone.
pub fn repetition_report(
    data: &VectorSet,
    params: &[BuildParams],
    seed: u64,
    knng: KnngMode,
    exact_pairs: bool,
    ablation: bool,
) -> Result<RepetitionReport> {
    if params.len() < 2 {
        return invalid("a repetition report needs at least two parameter sets");
    }
    if exact_pairs && data.len() > EXACT_PAIR_LIMIT {
        return invalid(format!(
            "exact pair sets are limited to {EXACT_PAIR_LIMIT} points, dataset has {}",
            data.len()
        ));
    }
    let opts = BuildOptions {
        knng,
        record_pairs: exact_pairs,
        ..BuildOptions::new(seed)
    };
    let batch = build_multi(data, params, &opts)?;
    let seq = build_sequential(data, params, &opts)?;
    let (b, s) = (&batch.summary, &seq.summary);
    let shared_pair_ratio = match (b.distinct_pairs, s.distinct_pairs) {
        (Some(union), Some(sum)) if sum > 0 => Some(1.0 - union as f64 / sum as f64),
        _ => None,
    };
    let row = |bb: &BatchBuild| AblationRow {
        share_search: bb.summary.share_search,
        reuse_prune: bb.summary.reuse_prune,
        dist_total: bb.summary.dist_total,
        rdc: ratio(bb.summary.dist_total, s.dist_total),
        wall_ms: bb.summary.wall_ms,
        rtc: bb.summary.wall_ms / s.wall_ms.max(1e-9),
    };
    let mut rows = vec![row(&seq), row(&batch)];
    if ablation {
        for (share_search, reuse_prune) in [(true, false), (false, true)] {
            let o = BuildOptions {
                share_search,
                reuse_prune,
                record_pairs: false,
                ..opts
            };
            rows.push(row(&build_multi(data, params, &o)?));
        }
    }
    Ok(RepetitionReport {
        kind: params[0].kind(),
        m: params.len(),
        n: data.len(),
        seed,
        dist_batch_total: b.dist_total,
        dist_sequential_total: s.dist_total,
        rdc: ratio(b.dist_total, s.dist_total),
        rdc_search: ratio(b.dist_search, s.dist_search),
        rdc_prune: ratio(b.dist_prune, s.dist_prune),
        rdc_connect: ratio(b.dist_connect, s.dist_connect),
        wall_batch_ms: b.wall_ms,
        wall_sequential_ms: s.wall_ms,
        rtc: b.wall_ms / s.wall_ms.max(1e-9),
        shared_pair_ratio,
        ablation: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticKind};
    use crate::params::{HnswParams, VamanaParams};

    #[test]
    fn identical_pair_halves_search_cost() {
        let data = gen_synthetic(500, 8, 1, SyntheticKind::Gaussian).unwrap();
        let p = BuildParams::Hnsw(HnswParams::new(8, 40));
        let r = repetition_report(&data, &[p, p], 3, KnngMode::Exact, true, false).unwrap();
        // the second build's searches are served entirely from the cache, and
        // the cache also spares the first build's repeats across layers
        assert!(r.rdc_search <= 0.5);
        assert!(r.rdc < 1.0);
        let shared = r.shared_pair_ratio.unwrap();
        assert!((shared - 0.5).abs() < 1e-12, "{shared}");
        assert_eq!(r.ablation.len(), 2);
    }

    #[test]
    fn neighbouring_params_share_work() {
        let data = gen_synthetic(500, 8, 2, SyntheticKind::Gaussian).unwrap();
        let ps: Vec<BuildParams> = [1.0, 1.1, 1.2]
            .iter()
            .map(|&a| BuildParams::Vamana(VamanaParams::new(40, 12, a)))
            .collect();
        let r = repetition_report(&data, &ps, 1, KnngMode::Exact, false, true).unwrap();
        assert!(r.rdc < 1.0 && r.rdc > 0.0);
        assert!(r.rdc_search < 1.0);
        assert!(r.shared_pair_ratio.is_none());
        assert_eq!(r.ablation.len(), 4);
        // each mechanism alone saves less than both together
        assert!(r.ablation[2].dist_total >= r.dist_batch_total);
        assert!(r.ablation[3].dist_total >= r.dist_batch_total);
        assert!(repetition_report(&data, &ps[..1], 1, KnngMode::Exact, false, false).is_err());
    }
}
