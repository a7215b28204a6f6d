//! Krippendorff's alpha for nominal data, reported on a 0-100 scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Items x annotators grid; `None` marks a missing rating.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    pub rows: Vec<Vec<Option<usize>>>,
}

impl AnnotationMatrix {
    pub fn new(rows: Vec<Vec<Option<usize>>>) -> Self {
        AnnotationMatrix { rows }
    }

    /// Builds a grid from per-annotator columns of equal length.
    pub fn from_columns(columns: &[Vec<Option<usize>>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let rows = (0..n).map(|i| columns.iter().map(|c| c.get(i).copied().flatten()).collect()).collect();
        AnnotationMatrix { rows }
    }

    pub fn annotators(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn column(&self, annotator: usize) -> Vec<Option<usize>> {
        self.rows.iter().map(|r| r.get(annotator).copied().flatten()).collect()
    }

    /// Same grid with annotator columns reordered by `order`.
    pub fn permute_annotators(&self, order: &[usize]) -> Self {
        AnnotationMatrix {
            rows: self.rows.iter().map(|r| order.iter().map(|&a| r.get(a).copied().flatten()).collect()).collect(),
        }
    }
}

/// Nominal alpha `1 - D_o / D_e`, times 100. Items with fewer than two
/// ratings are ignored. When every pairable value is identical, alpha is
/// 100 (no disagreement anywhere).
pub fn krippendorff_alpha(matrix: &AnnotationMatrix) -> Result<f64> {
    if matrix.annotators() < 2 {
        return Err(Error::Precondition("alpha needs at least two annotators".into()));
    }
    // coincidence matrix o[c][k]
    let mut coincidence: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pairable_units = 0usize;
    for row in &matrix.rows {
        let values: Vec<usize> = row.iter().flatten().copied().collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a, b)).or_default() += w;
                }
            }
        }
    }
    if pairable_units == 0 {
        return Err(Error::Precondition("no item has two or more ratings".into()));
    }
    let mut marginals: BTreeMap<usize, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidence {
        *marginals.entry(c).or_default() += o;
    }
    let n: f64 = marginals.values().sum();
    let observed: f64 = coincidence.iter().filter(|((c, k), _)| c != k).map(|(_, o)| o).sum();
    let expected_pairs: f64 = {
        let total_sq: f64 = marginals.values().sum::<f64>().powi(2);
        let diag: f64 = marginals.values().map(|v| v * v).sum();
        total_sq - diag
    };
    if expected_pairs == 0.0 {
        return if observed == 0.0 { Ok(100.0) } else { Err(Error::UndefinedAgreement) };
    }
    let d_o = observed / n;
    let d_e = expected_pairs / (n * (n - 1.0));
    Ok(100.0 * (1.0 - d_o / d_e))
}
