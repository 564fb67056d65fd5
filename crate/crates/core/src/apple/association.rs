//! Consistent source labels across subarrays and slots before any prior can tell them apart.

use crate::aoa::AoaPosterior;
use crate::geometry::wrap_angle;

fn angular_distance(a: &AoaPosterior, b: &AoaPosterior) -> f64 {
    wrap_angle(a.aoa.x.mean - b.aoa.x.mean).abs() + wrap_angle(a.aoa.y.mean - b.aoa.y.mean).abs()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// `result[i]` is the column matched to row `i` under minimal total cost.
///
/// Exhaustive for up to seven rows, greedy beyond.
pub fn assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n <= 7 {
        let mut best = (f64::INFINITY, (0..n).collect::<Vec<_>>());
        // permutations() is deterministic, so ties resolve identically on every run
        for p in permutations(n) {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            if c < best.0 {
                best = (c, p);
            }
        }
        return best.1;
    }
    let mut taken = vec![false; n];
    let mut out = vec![0; n];
    for (i, row) in cost.iter().enumerate() {
        let j = (0..n)
            .filter(|&j| !taken[j])
            .min_by(|&a, &b| row[a].total_cmp(&row[b]))
            .expect("free column");
        taken[j] = true;
        out[i] = j;
    }
    out
}

/// Reorders every `(m, t)` component list so index `k` refers to the same MS everywhere.
///
/// `posteriors[(m - 1) * slots + t]`. The anchor's first slot is labelled by
/// descending gain magnitude, its other slots follow by angular proximity, and
/// every other subarray follows the anchor in the same slot.
pub(crate) fn align_labels(posteriors: &mut [Vec<AoaPosterior>], anchor: usize, subarrays: usize, slots: usize) {
    let idx = |m: usize, t: usize| (m - 1) * slots + t;
    let reorder = |list: &mut Vec<AoaPosterior>, reference: &[AoaPosterior]| {
        let cost: Vec<Vec<f64>> = reference
            .iter()
            .map(|r| list.iter().map(|c| angular_distance(r, c)).collect())
            .collect();
        let pick = assignment(&cost);
        *list = pick.iter().map(|&j| list[j]).collect();
    };
    let first = &mut posteriors[idx(anchor, 0)];
    first.sort_by(|a, b| b.coeff_mean.norm().total_cmp(&a.coeff_mean.norm()));
    let labelled = first.clone();
    for t in 1..slots {
        reorder(&mut posteriors[idx(anchor, t)], &labelled);
    }
    for t in 0..slots {
        let reference = posteriors[idx(anchor, t)].clone();
        for m in (1..=subarrays).filter(|&m| m != anchor) {
            reorder(&mut posteriors[idx(m, t)], &reference);
        }
    }
}
