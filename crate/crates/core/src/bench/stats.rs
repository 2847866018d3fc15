//! Aggregates over timing samples.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{Experiment, ResultRow};
use crate::policy::EngineMode;

/// Median of a sample; the mean of the two middle values when the length
/// is even. `None` for an empty sample.
pub fn median(values: &[u64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2] as f64),
        _ => Some((v[n / 2 - 1] as f64 + v[n / 2] as f64) / 2.0),
    }
}

/// Nearest-rank percentile, `pct` in (0, 100].
pub fn percentile(values: &[u64], pct: f64) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((pct / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Ranks starting at 1, ties get the mean of the ranks they span.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). `None` when fewer
/// than two points or either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Nondecreasing, except that up to `allowed` steps may drop by at most
/// `tolerance` (relative to the previous value).
pub fn nondecreasing_within(values: &[f64], tolerance: f64, allowed: usize) -> bool {
    let mut inversions = 0;
    for w in values.windows(2) {
        if w[1] < w[0] {
            if w[1] < w[0] * (1.0 - tolerance) {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= allowed
}

/// One measurement point: everything in a row except the trial number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PointKey {
    pub experiment: Experiment,
    pub levels: usize,
    pub branches: usize,
    pub conflict_size: usize,
}

impl PointKey {
    pub fn of(row: &ResultRow) -> Self {
        Self {
            experiment: row.experiment,
            levels: row.levels,
            branches: row.branches,
            conflict_size: row.conflict_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub model: EngineMode,
    pub point: PointKey,
    pub trials: usize,
    pub min_ns: u64,
    pub median_ns: f64,
    pub mean_ns: f64,
    pub p95_ns: u64,
    pub max_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Speedup {
    pub point: PointKey,
    /// unified median / baseline median
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Summary {
    /// Sorted by point, then model.
    pub points: Vec<PointSummary>,
    pub speedups: Vec<Speedup>,
}

impl Summary {
    pub fn median(&self, model: EngineMode, point: PointKey) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.model == model && p.point == point)
            .map(|p| p.median_ns)
    }

    pub fn for_model(&self, model: EngineMode) -> impl Iterator<Item = &PointSummary> {
        self.points.iter().filter(move |p| p.model == model)
    }

    pub fn speedup(&self, point: PointKey) -> Option<f64> {
        self.speedups
            .iter()
            .find(|s| s.point == point)
            .map(|s| s.ratio)
    }
}

pub fn summarize(rows: &[ResultRow]) -> Summary {
    let mut groups: BTreeMap<(PointKey, EngineMode), Vec<u64>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((PointKey::of(row), row.model))
            .or_default()
            .push(row.eval_time_ns);
    }
    let points: Vec<PointSummary> = groups
        .iter()
        .map(|(&(point, model), v)| PointSummary {
            model,
            point,
            trials: v.len(),
            min_ns: *v.iter().min().expect("nonempty group"),
            median_ns: median(v).expect("nonempty group"),
            mean_ns: v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64,
            p95_ns: percentile(v, 95.0).expect("nonempty group"),
            max_ns: *v.iter().max().expect("nonempty group"),
        })
        .collect();
    let mut speedups = Vec::new();
    for p in points.iter().filter(|p| p.model == EngineMode::Unified) {
        if let Some(b) = points
            .iter()
            .find(|b| b.model == EngineMode::BaselineConjunction && b.point == p.point)
        {
            speedups.push(Speedup {
                point: p.point,
                ratio: p.median_ns / b.median_ns,
            });
        }
    }
    Summary { points, speedups }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_medians() {
        assert_eq!(median(&[7]), Some(7.0));
        assert_eq!(median(&[3, 1, 2]), Some(2.0));
        assert_eq!(median(&[4, 1, 2, 3]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 95.0), Some(95));
        assert_eq!(percentile(&[5], 95.0), Some(5));
        assert_eq!(percentile(&[1, 2, 3], 95.0), Some(3));
    }

    #[test]
    fn spearman_known_values() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 6.0, 8.0, 100.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // textbook example with d^2 sum = 2: 1 - 6*2/(5*24) = 0.9
        let rho = spearman(&x, &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap();
        assert!((rho - 0.9).abs() < 1e-12);
        assert_eq!(spearman(&x, &[1.0; 5]), None);
    }

    #[test]
    fn tolerance_on_inversions() {
        assert!(nondecreasing_within(&[1.0, 2.0, 2.0, 3.0], 0.05, 0));
        assert!(nondecreasing_within(&[100.0, 97.0, 120.0], 0.05, 1));
        assert!(!nondecreasing_within(&[100.0, 97.0, 120.0, 119.0], 0.05, 1));
        assert!(!nondecreasing_within(&[100.0, 90.0], 0.05, 1));
    }

    proptest! {
        #[test]
        fn median_is_between_min_and_max(v in prop::collection::vec(1u64..1_000_000, 1..50)) {
            let m = median(&v).unwrap();
            prop_assert!(m >= *v.iter().min().unwrap() as f64);
            prop_assert!(m <= *v.iter().max().unwrap() as f64);
        }

        #[test]
        fn spearman_ignores_monotone_transforms(v in prop::collection::vec(0.0f64..1e6, 3..30)) {
            let x: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
            let cubed: Vec<f64> = v.iter().map(|a| a * a * a + 1.0).collect();
            prop_assert_eq!(spearman(&x, &v), spearman(&x, &cubed));
        }
    }
}
