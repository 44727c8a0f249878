//! Scoring detections against ground-truth annotations.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Detection, GroundTruthAnnotation, ProbabilityVolume};
use crate::postprocess::{extract_unchecked, validate_thresholds, DetectionParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Closest admissible pairs first.
    #[default]
    Greedy,
    /// Maximum number of matched pairs.
    MaxCardinality,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchParams {
    pub max_centroid_distance_um: f64,
    /// When an annotation carries voxels, also require the detection to share
    /// at least one of them.
    pub require_overlap: bool,
    #[serde(default)]
    pub strategy: MatchStrategy,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            max_centroid_distance_um: 0.3,
            require_overlap: false,
            strategy: MatchStrategy::Greedy,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub detection_id: usize,
    pub annotation_id: i64,
    pub distance_um: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// 1.0 when there are no detections; see `precision_undefined`.
    pub precision: f64,
    pub precision_undefined: bool,
    /// 1.0 when there is no ground truth; see `recall_undefined`.
    pub recall: f64,
    pub recall_undefined: bool,
    pub matched: Vec<MatchedPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pr_curve: Vec<PrPoint>,
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Admissible `(distance, detection index, annotation index)` pairs.
fn candidates(
    dets: &[Detection],
    gt: &[GroundTruthAnnotation],
    params: &MatchParams,
) -> Vec<(f64, usize, usize)> {
    let overlap_sets: Vec<Option<HashSet<[usize; 3]>>> = gt
        .iter()
        .map(|a| {
            a.voxels
                .as_ref()
                .filter(|_| params.require_overlap)
                .map(|v| v.iter().copied().collect())
        })
        .collect();
    let mut out = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, a) in gt.iter().enumerate() {
            let dist = distance(d.centroid_um, a.centroid_um);
            if dist > params.max_centroid_distance_um {
                continue;
            }
            if let Some(set) = &overlap_sets[j] {
                if !d.voxels.iter().any(|v| set.contains(v)) {
                    continue;
                }
            }
            out.push((dist, i, j));
        }
    }
    out
}

/// One-to-one matching of detections to annotations at a single threshold.
pub fn match_detections(
    dets: &[Detection],
    gt: &[GroundTruthAnnotation],
    params: &MatchParams,
) -> EvaluationReport {
    let mut cands = candidates(dets, gt, params);
    // Ties broken by ids, never by input position.
    cands.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(dets[a.1].id.cmp(&dets[b.1].id))
            .then(gt[a.2].id.cmp(&gt[b.2].id))
    });
    let pairs = match params.strategy {
        MatchStrategy::Greedy => greedy(&cands, dets.len(), gt.len()),
        MatchStrategy::MaxCardinality => max_cardinality(&cands, dets.len(), gt.len()),
    };

    let mut matched: Vec<MatchedPair> = pairs
        .into_iter()
        .map(|(dist, i, j)| MatchedPair {
            detection_id: dets[i].id,
            annotation_id: gt[j].id,
            distance_um: dist,
        })
        .collect();
    matched.sort_by(|a, b| {
        a.detection_id
            .cmp(&b.detection_id)
            .then(a.annotation_id.cmp(&b.annotation_id))
    });

    let tp = matched.len();
    let fp = dets.len() - tp;
    let fn_ = gt.len() - tp;
    let (precision, precision_undefined) = ratio_or_one(tp, tp + fp);
    let (recall, recall_undefined) = ratio_or_one(tp, tp + fn_);
    EvaluationReport {
        threshold: None,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        precision,
        precision_undefined,
        recall,
        recall_undefined,
        matched,
        pr_curve: Vec::new(),
    }
}

fn ratio_or_one(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn greedy(cands: &[(f64, usize, usize)], n_det: usize, n_gt: usize) -> Vec<(f64, usize, usize)> {
    let mut det_used = vec![false; n_det];
    let mut gt_used = vec![false; n_gt];
    let mut out = Vec::new();
    for &(d, i, j) in cands {
        if !det_used[i] && !gt_used[j] {
            det_used[i] = true;
            gt_used[j] = true;
            out.push((d, i, j));
        }
    }
    out
}

// Kuhn's augmenting paths; adjacency lists are in ascending-distance order so
// closer partners are tried first.
fn max_cardinality(
    cands: &[(f64, usize, usize)],
    n_det: usize,
    n_gt: usize,
) -> Vec<(f64, usize, usize)> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_det];
    for &(d, i, j) in cands {
        adj[i].push((j, d));
    }
    let mut gt_owner: Vec<Option<usize>> = vec![None; n_gt];

    fn augment(
        i: usize,
        adj: &[Vec<(usize, f64)>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for &(j, _) in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].map_or(true, |k| augment(k, adj, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }

    for i in 0..n_det {
        let mut seen = vec![false; n_gt];
        augment(i, &adj, &mut seen, &mut gt_owner);
    }
    gt_owner
        .iter()
        .enumerate()
        .filter_map(|(j, o)| {
            o.map(|i| {
                let d = adj[i].iter().find(|(jj, _)| *jj == j).map(|(_, d)| *d).unwrap();
                (d, i, j)
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub detections: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub precision_undefined: bool,
    pub recall: f64,
}

/// Precision and recall at each threshold.
pub fn pr_curve(
    p: &ProbabilityVolume,
    gt: &[GroundTruthAnnotation],
    thresholds: &[f64],
    det_params: &DetectionParams,
    match_params: &MatchParams,
) -> Result<Vec<PrPoint>> {
    validate_thresholds(thresholds)?;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let dets = extract_unchecked(p, &det_params.with_threshold(t));
            let r = match_detections(&dets, gt, match_params);
            PrPoint {
                threshold: t,
                detections: dets.len(),
                true_positives: r.true_positives,
                precision: r.precision,
                precision_undefined: r.precision_undefined,
                recall: r.recall,
            }
        })
        .collect())
}

/// The point where the precision and recall curves cross: smallest
/// `|P − R|` among thresholds that produced detections, ties going to the
/// larger `min(P, R)` and then the lower threshold.
pub fn pr_intersection(curve: &[PrPoint]) -> Option<PrPoint> {
    curve
        .iter()
        .filter(|p| !p.precision_undefined)
        .min_by(|a, b| {
            let gap = |p: &PrPoint| (p.precision - p.recall).abs();
            let floor = |p: &PrPoint| p.precision.min(p.recall);
            gap(a)
                .total_cmp(&gap(b))
                .then(floor(b).total_cmp(&floor(a)))
                .then(a.threshold.total_cmp(&b.threshold))
        })
        .copied()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationRatio {
    pub numerator: String,
    pub denominator: String,
    /// `+∞` when the denominator is zero, NaN when both are.
    pub ratio: f64,
    pub undefined: bool,
}

/// Every ordered pairwise ratio of detection counts, sorted by name.
pub fn population_ratio(counts: &BTreeMap<String, usize>) -> Vec<PopulationRatio> {
    let mut out = Vec::new();
    for (a, &na) in counts {
        for (b, &nb) in counts {
            if a == b {
                continue;
            }
            let ratio = if nb == 0 {
                if na == 0 {
                    f64::NAN
                } else {
                    f64::INFINITY
                }
            } else {
                na as f64 / nb as f64
            };
            out.push(PopulationRatio {
                numerator: a.clone(),
                denominator: b.clone(),
                ratio,
                undefined: nb == 0,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Label;

    fn det(id: usize, c: [f64; 3]) -> Detection {
        Detection {
            id,
            voxels: vec![],
            centroid_um: c,
            peak_probability: 0.9,
            mean_probability: 0.8,
            volume_um3: 0.01,
        }
    }

    fn ann(id: i64, c: [f64; 3]) -> GroundTruthAnnotation {
        GroundTruthAnnotation {
            id,
            label: Label::Excitatory,
            centroid_um: c,
            voxels: None,
        }
    }

    #[test]
    fn no_detections() {
        let gt: Vec<_> = (0..5).map(|i| ann(i, [i as f64, 0.0, 0.0])).collect();
        let r = match_detections(&[], &gt, &MatchParams::default());
        assert_eq!(r.precision, 1.0);
        assert!(r.precision_undefined);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.false_negatives, 5);
    }

    #[test]
    fn exact_hit() {
        let r = match_detections(
            &[det(1, [1.0, 1.0, 0.5])],
            &[ann(3, [1.0, 1.0, 0.5])],
            &MatchParams::default(),
        );
        assert_eq!((r.precision, r.recall), (1.0, 1.0));
        assert_eq!(r.matched[0].annotation_id, 3);
    }

    #[test]
    fn one_near_one_far() {
        let r = match_detections(
            &[det(1, [1.1, 1.0, 0.5]), det(2, [3.0, 1.0, 0.5])],
            &[ann(1, [1.0, 1.0, 0.5])],
            &MatchParams::default(),
        );
        assert_eq!((r.true_positives, r.false_positives, r.false_negatives), (1, 1, 0));
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
        assert_eq!(r.matched[0].detection_id, 1);
    }

    #[test]
    fn greedy_and_max_cardinality_differ_on_chain() {
        // det 1 is closest to gt 1 but also reaches gt 2; det 2 only reaches gt 1.
        let dets = [det(1, [0.0, 0.0, 0.0]), det(2, [-0.25, 0.0, 0.0])];
        let gt = [ann(1, [0.02, 0.0, 0.0]), ann(2, [0.2, 0.0, 0.0])];
        let greedy = match_detections(&dets, &gt, &MatchParams::default());
        assert_eq!(greedy.true_positives, 1);
        let best = match_detections(
            &dets,
            &gt,
            &MatchParams {
                strategy: MatchStrategy::MaxCardinality,
                ..MatchParams::default()
            },
        );
        assert_eq!(best.true_positives, 2);
    }

    #[test]
    fn overlap_requirement() {
        let mut d = det(1, [0.0; 3]);
        d.voxels = vec![[0, 0, 0]];
        let mut a = ann(1, [0.0; 3]);
        a.voxels = Some(vec![[5, 5, 5]]);
        let strict = MatchParams {
            require_overlap: true,
            ..MatchParams::default()
        };
        assert_eq!(match_detections(&[d.clone()], &[a.clone()], &strict).true_positives, 0);
        assert_eq!(
            match_detections(&[d], &[a], &MatchParams::default()).true_positives,
            1
        );
    }

    #[test]
    fn intersection_prefers_balanced_point() {
        let pt = |t, p, r| PrPoint {
            threshold: t,
            detections: 1,
            true_positives: 1,
            precision: p,
            precision_undefined: false,
            recall: r,
        };
        let curve = [pt(0.1, 0.5, 1.0), pt(0.5, 0.92, 0.93), pt(0.9, 1.0, 0.3)];
        assert_eq!(pr_intersection(&curve).unwrap().threshold, 0.5);
        assert!(pr_intersection(&[]).is_none());
    }

    #[test]
    fn ratios() {
        let mut counts = BTreeMap::new();
        counts.insert("excitatory".to_string(), 2_326_692);
        counts.insert("inhibitory".to_string(), 252_833);
        let r = population_ratio(&counts);
        let e_over_i = r.iter().find(|r| r.numerator == "excitatory").unwrap();
        assert!((e_over_i.ratio - 9.2).abs() < 0.01);

        let mut counts = BTreeMap::new();
        counts.insert("a".to_string(), 7);
        counts.insert("b".to_string(), 7);
        assert!(population_ratio(&counts).iter().all(|r| r.ratio == 1.0));

        let mut counts = BTreeMap::new();
        counts.insert("a".to_string(), 3);
        counts.insert("b".to_string(), 0);
        let r = population_ratio(&counts);
        let a_over_b = r.iter().find(|r| r.numerator == "a").unwrap();
        assert!(a_over_b.ratio.is_infinite() && a_over_b.undefined);
    }
}
