//! Word-intrusion style test for cluster coherence: two chains from the
//! core of one cluster plus one chain from elsewhere.

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::alpha::{krippendorff_alpha, AnnotationMatrix};
use crate::clustering::{rank_by_centroid_distance, ClusterModel};
use crate::error::{Error, Result};
use crate::rng;

pub const CANDIDATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionItem {
    pub item_id: String,
    pub candidates: Vec<String>,
    /// Indices of the candidate chains in the clustered collection.
    pub members: Vec<usize>,
    pub intruder_position: usize,
    pub source_cluster: usize,
    pub intruder_cluster: usize,
}

/// What annotators see: no positions or cluster ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlindedItem {
    pub item_id: String,
    pub candidates: Vec<String>,
}

impl IntrusionItem {
    pub fn blinded(&self) -> BlindedItem {
        BlindedItem { item_id: self.item_id.clone(), candidates: self.candidates.clone() }
    }
}

/// Builds `n_items` items. A source cluster is drawn uniformly among
/// clusters whose top fraction holds at least two members; two distinct
/// members are drawn from that top set and the intruder from a uniformly
/// drawn different non-empty cluster.
pub fn intrusion_generate(
    model: &ClusterModel,
    vectors: &[Vec<f64>],
    sentences: &[String],
    n_items: usize,
    top_fraction: f64,
    seed: u64,
) -> Result<Vec<IntrusionItem>> {
    if sentences.len() != model.assignments.len() || vectors.len() != sentences.len() {
        return Err(Error::Precondition("sentences, vectors and assignments differ in length".into()));
    }
    let sizes = model.sizes();
    let non_empty: Vec<usize> = (0..model.k).filter(|&c| sizes[c] > 0).collect();
    let mut tops: Vec<(usize, Vec<usize>)> = Vec::new();
    for &c in &non_empty {
        let ranked = rank_by_centroid_distance(model, vectors, c, top_fraction)?;
        if ranked.top_count >= 2 && non_empty.len() >= 2 {
            tops.push((c, ranked.top().iter().map(|p| p.0).collect()));
        }
    }
    if tops.is_empty() {
        return Err(Error::NoEligibleCluster);
    }
    let mut r = rng::seeded(seed);
    let mut items = Vec::with_capacity(n_items);
    for n in 0..n_items {
        let (source, top) = tops.choose(&mut r).ok_or(Error::NoEligibleCluster)?;
        let pair: Vec<usize> = top.choose_multiple(&mut r, 2).copied().collect();
        let others: Vec<usize> = non_empty.iter().copied().filter(|c| c != source).collect();
        let intruder_cluster = *others.choose(&mut r).ok_or(Error::NoEligibleCluster)?;
        let intruder = *model.members(intruder_cluster).choose(&mut r).ok_or(Error::EmptyCluster(intruder_cluster))?;
        let mut members = vec![pair[0], pair[1], intruder];
        members.shuffle(&mut r);
        let intruder_position = members.iter().position(|&m| m == intruder).unwrap_or(0);
        items.push(IntrusionItem {
            item_id: format!("item-{n:04}"),
            candidates: members.iter().map(|&m| sentences[m].clone()).collect(),
            members,
            intruder_position,
            source_cluster: *source,
            intruder_cluster,
        });
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionScore {
    /// Percentage of items whose final label is the intruder.
    pub accuracy: f64,
    /// Agreement of the two primary annotators, 0-100.
    pub alpha: f64,
    pub items: usize,
    pub agreed: usize,
    pub resolved_by_third: usize,
    /// Conflicts with no third-annotator choice; counted as misses.
    pub unresolved: usize,
}

/// `annotations` has one row per item and one column per primary
/// annotator; `resolved` holds optional third-annotator choices.
pub fn intrusion_score(
    items: &[IntrusionItem],
    annotations: &AnnotationMatrix,
    resolved: Option<&[Option<usize>]>,
) -> Result<IntrusionScore> {
    if annotations.rows.len() != items.len() {
        return Err(Error::Precondition(format!(
            "{} annotation rows for {} items",
            annotations.rows.len(),
            items.len()
        )));
    }
    let all_choices = annotations.rows.iter().flatten().flatten().chain(resolved.into_iter().flatten().flatten());
    if let Some(bad) = all_choices.into_iter().find(|&&c| c >= CANDIDATES) {
        return Err(Error::Precondition(format!("choice {bad} is not a candidate position")));
    }
    let mut score = IntrusionScore {
        accuracy: 0.0,
        alpha: 0.0,
        items: items.len(),
        agreed: 0,
        resolved_by_third: 0,
        unresolved: 0,
    };
    let mut hits = 0usize;
    for (i, (item, row)) in items.iter().zip(&annotations.rows).enumerate() {
        let given: Vec<usize> = row.iter().flatten().copied().collect();
        let third = resolved.and_then(|r| r.get(i).copied().flatten());
        let last = if given.windows(2).all(|w| w[0] == w[1]) && !given.is_empty() {
            score.agreed += 1;
            Some(given[0])
        } else if let Some(t) = third {
            score.resolved_by_third += 1;
            Some(t)
        } else {
            score.unresolved += 1;
            None
        };
        if last == Some(item.intruder_position) {
            hits += 1;
        }
    }
    score.accuracy = if items.is_empty() { 0.0 } else { 100.0 * hits as f64 / items.len() as f64 };
    score.alpha = krippendorff_alpha(annotations)?;
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{kmeans, KMeansConfig};
    use rand::Rng as _;

    fn two_clusters() -> (ClusterModel, Vec<Vec<f64>>, Vec<String>) {
        let vectors: Vec<Vec<f64>> = (0..16).map(|i| vec![if i < 8 { 0.0 } else { 10.0 }, i as f64 * 0.01]).collect();
        let model = kmeans(&vectors, 2, 1, &KMeansConfig::default()).unwrap();
        let sentences = (0..16).map(|i| format!("sentence {i}")).collect();
        (model, vectors, sentences)
    }

    #[test]
    fn items_are_reproducible_and_valid() {
        let (m, v, s) = two_clusters();
        let a = intrusion_generate(&m, &v, &s, 10, 0.25, 42).unwrap();
        assert_eq!(a, intrusion_generate(&m, &v, &s, 10, 0.25, 42).unwrap());
        for item in &a {
            assert_eq!(item.candidates.len(), 3);
            assert_ne!(item.source_cluster, item.intruder_cluster);
            let top: Vec<usize> = rank_by_centroid_distance(&m, &v, item.source_cluster, 0.25)
                .unwrap()
                .top()
                .iter()
                .map(|p| p.0)
                .collect();
            assert_eq!(top.len(), 2);
            for (pos, &member) in item.members.iter().enumerate() {
                if pos == item.intruder_position {
                    assert_eq!(m.assignments[member], item.intruder_cluster);
                } else {
                    assert!(top.contains(&member));
                }
            }
        }
    }

    #[test]
    fn no_eligible_cluster() {
        let v: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 * 10.0]).collect();
        let m = kmeans(&v, 3, 1, &KMeansConfig::default()).unwrap();
        let s: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        assert!(matches!(intrusion_generate(&m, &v, &s, 1, 0.25, 0), Err(Error::NoEligibleCluster)));
    }

    #[test]
    fn perfect_annotators() {
        let (m, v, s) = two_clusters();
        let items = intrusion_generate(&m, &v, &s, 20, 0.25, 1).unwrap();
        let grid = AnnotationMatrix::new(items.iter().map(|i| vec![Some(i.intruder_position); 2]).collect());
        let sc = intrusion_score(&items, &grid, None).unwrap();
        assert_eq!((sc.accuracy, sc.alpha), (100.0, 100.0));
    }

    #[test]
    fn third_annotator_resolves_conflicts() {
        let (m, v, s) = two_clusters();
        let items = intrusion_generate(&m, &v, &s, 2, 0.25, 3).unwrap();
        let wrong = |p: usize| (p + 1) % 3;
        let grid = AnnotationMatrix::new(vec![
            vec![Some(items[0].intruder_position), Some(wrong(items[0].intruder_position))],
            vec![Some(items[1].intruder_position), Some(wrong(items[1].intruder_position))],
        ]);
        let third = [Some(items[0].intruder_position), None];
        let sc = intrusion_score(&items, &grid, Some(&third)).unwrap();
        assert_eq!((sc.resolved_by_third, sc.unresolved), (1, 1));
        assert_eq!(sc.accuracy, 50.0);
        let bad = AnnotationMatrix::new(vec![vec![Some(3), Some(0)], vec![Some(0), Some(0)]]);
        assert!(intrusion_score(&items, &bad, None).is_err());
    }

    #[test]
    fn random_annotators_score_near_chance() {
        let (m, v, s) = two_clusters();
        let items = intrusion_generate(&m, &v, &s, 1000, 0.25, 42).unwrap();
        let mut r = rng::seeded(42);
        let grid =
            AnnotationMatrix::new(items.iter().map(|_| (0..2).map(|_| Some(r.random_range(0..3))).collect()).collect());
        let third: Vec<Option<usize>> = items.iter().map(|_| Some(r.random_range(0..3))).collect();
        let sc = intrusion_score(&items, &grid, Some(&third)).unwrap();
        assert!((sc.accuracy - 100.0 / 3.0).abs() <= 5.0, "{}", sc.accuracy);
        assert!(sc.alpha.abs() <= 3.0, "{}", sc.alpha);
    }
}
