//! Two-objective Pareto bookkeeping, both objectives maximized.

use crate::error::{invalid, Error, Result};

/// `a` dominates `b`: no worse in both, strictly better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1)
}

/// Indices of the non-dominated points, ascending. Exact duplicates do not
/// dominate each other, so all copies of a front point are kept.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[b].1.total_cmp(&points[a].1))
    });
    let mut keep = Vec::new();
    let mut best_y = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let x = points[order[i]].0;
        let group_y = points[order[i]].1;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == x {
            let y = points[order[j]].1;
            if y == group_y && group_y > best_y {
                keep.push(order[j]);
            }
            j += 1;
        }
        best_y = best_y.max(group_y);
        i = j;
    }
    keep.sort_unstable();
    keep
}

/// Area dominated by `points` and bounded below by `r`. Every point must be
/// at least `r` in both coordinates.
pub fn hypervolume_2d(points: &[(f64, f64)], r: (f64, f64)) -> Result<f64> {
    if let Some(p) = points.iter().find(|p| !(p.0 >= r.0 && p.1 >= r.1)) {
        return invalid(format!("point {p:?} does not dominate the reference {r:?}"));
    }
    Ok(hv_sweep(points.iter().copied(), r))
}

/// Sweep by descending first coordinate; points not beyond `r` in both
/// coordinates add nothing.
pub(crate) fn hv_sweep(points: impl Iterator<Item = (f64, f64)>, r: (f64, f64)) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.filter(|p| p.0 > r.0 && p.1 > r.1).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut top = r.1;
    for (x, y) in pts {
        if y > top {
            area += (x - r.0) * (y - top);
            top = y;
        }
    }
    area
}

/// Index of the most balanced front member: the one minimizing
/// `|qps / qps_max - recall / recall_max|`, earliest on ties.
pub fn balanced_index(front: &[(f64, f64)]) -> Result<usize> {
    if front.is_empty() {
        return Err(Error::Empty("front is empty"));
    }
    let qmax = front.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let rmax = front.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(qmax > 0.0 && rmax > 0.0) {
        return Err(Error::Numerical("front maxima must be positive".into()));
    }
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (i, p) in front.iter().enumerate() {
        let gap = (p.0 / qmax - p.1 / rmax).abs();
        if gap < best_gap {
            best = i;
            best_gap = gap;
        }
    }
    Ok(best)
}

/// Divides an observation by the most balanced member of `front`.
pub fn normalize(obs: (f64, f64), front: &[(f64, f64)]) -> Result<(f64, f64)> {
    let b = front[balanced_index(front)?];
    if b.0 <= 0.0 || b.1 <= 0.0 {
        return Err(Error::Numerical(format!("balanced member {b:?} has a zero objective")));
    }
    Ok((obs.0 / b.0, obs.1 / b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn front_basics() {
        assert_eq!(pareto_front(&[(1.0, 1.0)]), vec![0]);
        assert_eq!(pareto_front(&[(1.0, 1.0), (2.0, 2.0)]), vec![1]);
        assert_eq!(pareto_front(&[(1.0, 2.0), (2.0, 1.0), (1.0, 1.0)]), vec![0, 1]);
        assert_eq!(pareto_front(&[(1.0, 2.0), (1.0, 2.0)]), vec![0, 1]);
        assert_eq!(pareto_front(&[(1.0, 2.0), (1.0, 1.0), (2.0, 2.0)]), vec![2]);
        assert!(pareto_front(&[]).is_empty());
    }

    #[test]
    fn hypervolume_basics() {
        let r = (0.0, 0.0);
        assert_eq!(hypervolume_2d(&[], r).unwrap(), 0.0);
        assert_eq!(hypervolume_2d(&[(1.0, 1.0)], r).unwrap(), 1.0);
        assert_eq!(hypervolume_2d(&[(1.0, 2.0), (2.0, 1.0)], r).unwrap(), 3.0);
        // dominated points add nothing
        assert_eq!(hypervolume_2d(&[(1.0, 2.0), (2.0, 1.0), (0.5, 0.5)], r).unwrap(), 3.0);
        assert!(hypervolume_2d(&[(-1.0, 1.0)], r).is_err());
    }

    #[test]
    fn balanced_member_and_ties() {
        let front = [(100.0, 0.5), (50.0, 1.0)];
        // both members are 0.5 away from balance; the earlier one wins
        assert_eq!(balanced_index(&front).unwrap(), 0);
        assert_eq!(normalize((100.0, 0.5), &front).unwrap(), (1.0, 1.0));
        assert_eq!(normalize((50.0, 1.0), &front).unwrap(), (0.5, 2.0));
        let scaled: Vec<(f64, f64)> = front.iter().map(|p| (p.0 * 2.0, p.1)).collect();
        assert_eq!(normalize((200.0, 0.5), &scaled).unwrap(), (1.0, 1.0));
        assert!(normalize((1.0, 1.0), &[]).is_err());
        // an exactly balanced member is selected outright
        let front = [(10.0, 0.2), (4.0, 1.0), (8.0, 0.8)];
        assert_eq!(balanced_index(&front).unwrap(), 2);
    }
}
