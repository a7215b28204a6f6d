//! Mutual information between cluster presence and frame labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MI in nats between two binary variables observed jointly.
pub fn binary_mi(x: &[bool], y: &[bool]) -> f64 {
    let n = x.len().min(y.len());
    if n == 0 {
        return 0.0;
    }
    let mut joint = [[0usize; 2]; 2];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize][b as usize] += 1;
    }
    let nf = n as f64;
    let px = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let c = joint[a][b];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / nf;
            mi += pxy * (pxy / ((px[a] as f64 / nf) * (py[b] as f64 / nf))).ln();
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEntry {
    pub cluster: usize,
    pub frame: usize,
    pub mi: f64,
}

/// Full cluster x frame MI table. `counts[d][k]` is the number of chains of
/// document `d` in cluster `k`; presence means a count above zero.
pub fn mutual_information(counts: &[Vec<usize>], labels: &[usize], n_frames: usize) -> Result<Vec<Vec<f64>>> {
    if counts.len() != labels.len() {
        return Err(Error::Precondition(format!("{} count vectors for {} labels", counts.len(), labels.len())));
    }
    let k = counts.first().map_or(0, Vec::len);
    if let Some(bad) = counts.iter().find(|c| c.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, got: bad.len() });
    }
    if let Some(&f) = labels.iter().find(|&&f| f >= n_frames) {
        return Err(Error::Precondition(format!("frame {f} outside {n_frames} frames")));
    }
    let indicators: Vec<Vec<bool>> = (0..n_frames).map(|f| labels.iter().map(|&l| l == f).collect()).collect();
    Ok((0..k)
        .map(|c| {
            let presence: Vec<bool> = counts.iter().map(|v| v[c] > 0).collect();
            indicators.iter().map(|y| binary_mi(&presence, y)).collect()
        })
        .collect())
}

/// For each frame, the `n` clusters with highest MI, descending. Ties keep the
/// lower cluster id first.
pub fn top_clusters_per_frame(table: &[Vec<f64>], n_frames: usize, n: usize) -> Vec<Vec<MiEntry>> {
    (0..n_frames)
        .map(|f| {
            let mut entries: Vec<MiEntry> = table
                .iter()
                .enumerate()
                .map(|(cluster, row)| MiEntry { cluster, frame: f, mi: row.get(f).copied().unwrap_or(0.0) })
                .collect();
            entries.sort_by(|a, b| b.mi.total_cmp(&a.mi).then(a.cluster.cmp(&b.cluster)));
            entries.truncate(n);
            entries
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_balanced_variables_give_ln2() {
        let x = [true, false, true, false];
        assert!((binary_mi(&x, &x) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn independent_variables_give_zero() {
        let x = [true, true, false, false];
        let y = [true, false, true, false];
        assert!(binary_mi(&x, &y).abs() < 1e-12);
    }

    #[test]
    fn constant_variable_gives_zero() {
        assert_eq!(binary_mi(&[true; 5], &[true, false, true, false, true]), 0.0);
    }

    #[test]
    fn table_and_ranking() {
        let counts = vec![vec![2, 0], vec![1, 0], vec![0, 3], vec![0, 1]];
        let labels = [0, 0, 1, 1];
        let t = mutual_information(&counts, &labels, 2).unwrap();
        assert!((t[0][0] - std::f64::consts::LN_2).abs() < 1e-12);
        let top = top_clusters_per_frame(&t, 2, 1);
        assert_eq!(top[0][0].cluster, 0);
        // equal MI for frame 1: lower id wins
        assert_eq!(top[1][0].cluster, 0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let x: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let a = binary_mi(&x, &y);
            prop_assert!((a - binary_mi(&y, &x)).abs() < 1e-12);
            prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&a));
        }
    }
}
