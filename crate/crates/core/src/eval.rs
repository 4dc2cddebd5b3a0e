//! Ranking metrics: per-type AP, MAP, pooled GAP and truncated G@k.
//!
//! Rankings sort by descending score, then ascending entity id, then
//! ascending type id, so every metric is a pure function of its input set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};
use crate::kb::{EntityId, TypeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub entity: EntityId,
    pub type_id: TypeId,
    pub score: f64,
    pub label: bool,
}

fn ranking_order(a: &Prediction, b: &Prediction) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.entity.cmp(&b.entity))
        .then(a.type_id.cmp(&b.type_id))
}

/// Sorts predictions into ranking order. NaN scores and repeated pairs are input errors.
pub fn rank_predictions(preds: &[Prediction]) -> Result<Vec<Prediction>> {
    if let Some(p) = preds.iter().find(|p| p.score.is_nan()) {
        return Err(KbcError::Input(format!("NaN score for ({}, {})", p.entity, p.type_id)));
    }
    let mut seen = HashSet::with_capacity(preds.len());
    if let Some(p) = preds.iter().find(|p| !seen.insert((p.entity, p.type_id))) {
        return Err(KbcError::Input(format!("duplicate prediction for ({}, {})", p.entity, p.type_id)));
    }
    let mut out = preds.to_vec();
    out.par_sort_unstable_by(ranking_order);
    Ok(out)
}

/// AP of an already ranked label list; `None` when there is no positive.
pub fn average_precision(ranked_labels: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &label) in ranked_labels.iter().enumerate() {
        if label {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

fn labels(ranked: &[Prediction]) -> Vec<bool> {
    ranked.iter().map(|p| p.label).collect()
}

/// AP of every type that has at least one positive.
pub fn per_type_average_precision(preds: &[Prediction]) -> Result<BTreeMap<TypeId, f64>> {
    let mut groups: BTreeMap<TypeId, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        groups.entry(p.type_id).or_default().push(*p);
    }
    let groups: Vec<(TypeId, Vec<Prediction>)> = groups.into_iter().collect();
    let aps: Vec<(TypeId, Option<f64>)> = groups
        .par_iter()
        .map(|(t, g)| Ok((*t, average_precision(&labels(&rank_predictions(g)?)))))
        .collect::<Result<_>>()?;
    Ok(aps.into_iter().filter_map(|(t, ap)| ap.map(|ap| (t, ap))).collect())
}

/// Unweighted mean of per-type APs; `None` when no type has a positive.
pub fn mean_average_precision(preds: &[Prediction]) -> Result<Option<f64>> {
    let aps = per_type_average_precision(preds)?;
    Ok(mean_of(&aps))
}

fn mean_of(aps: &BTreeMap<TypeId, f64>) -> Option<f64> {
    (!aps.is_empty()).then(|| aps.values().sum::<f64>() / aps.len() as f64)
}

/// AP of the single ranking pooled over all types.
pub fn global_average_precision(preds: &[Prediction]) -> Result<Option<f64>> {
    Ok(average_precision(&labels(&rank_predictions(preds)?)))
}

/// Normalizer for G@k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GakNorm {
    /// Positives inside the top k.
    #[default]
    Window,
    /// `min(k, total positives)`.
    Global,
}

impl FromStr for GakNorm {
    type Err = KbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window" => Ok(GakNorm::Window),
            "global" => Ok(GakNorm::Global),
            _ => Err(KbcError::Usage(format!("unknown G@k normalization `{s}` (window|global)"))),
        }
    }
}

/// AP of the top `k` of an already ranked label list.
pub fn ap_at_k(ranked_labels: &[bool], k: usize, norm: GakNorm) -> f64 {
    let window = &ranked_labels[..k.min(ranked_labels.len())];
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &label) in window.iter().enumerate() {
        if label {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    let denom = match norm {
        GakNorm::Window => hits,
        GakNorm::Global => k.min(ranked_labels.iter().filter(|&&l| l).count()),
    };
    if denom == 0 {
        0.0
    } else {
        sum / denom as f64
    }
}

/// GAP restricted to the top `k` pooled predictions.
pub fn gap_at_k(preds: &[Prediction], k: usize, norm: GakNorm) -> Result<f64> {
    if k == 0 {
        return Err(KbcError::Usage("G@k needs k >= 1".into()));
    }
    Ok(ap_at_k(&labels(&rank_predictions(preds)?), k, norm))
}

/// A requested metric, written `map`, `gap` or `g@K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Map,
    Gap,
    GapAt(usize),
}

impl FromStr for Metric {
    type Err = KbcError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "map" => Ok(Metric::Map),
            "gap" => Ok(Metric::Gap),
            _ => match s.strip_prefix("g@").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Ok(Metric::GapAt(k)),
                _ => Err(KbcError::Usage(format!("unknown metric `{s}` (map, gap, g@K)"))),
            },
        }
    }
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
    let mut out: Vec<Metric> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(KbcError::Usage("no metrics requested".into()));
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub predictions: usize,
    pub positives: usize,
    pub types: usize,
    pub types_with_positives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: Option<f64>,
    pub gap: Option<f64>,
    pub g_at_k: BTreeMap<usize, f64>,
    pub per_type_ap: BTreeMap<TypeId, f64>,
    pub counts: EvalCounts,
}

/// Computes the requested metrics. Per-type APs are always reported.
pub fn evaluate(preds: &[Prediction], metrics: &[Metric], norm: GakNorm) -> Result<EvalReport> {
    let ranked = labels(&rank_predictions(preds)?);
    let per_type_ap = per_type_average_precision(preds)?;
    let types: HashSet<TypeId> = preds.iter().map(|p| p.type_id).collect();
    let mut report = EvalReport {
        map: None,
        gap: None,
        g_at_k: BTreeMap::new(),
        counts: EvalCounts {
            predictions: preds.len(),
            positives: ranked.iter().filter(|&&l| l).count(),
            types: types.len(),
            types_with_positives: per_type_ap.len(),
        },
        per_type_ap,
    };
    for m in metrics {
        match *m {
            Metric::Map => report.map = mean_of(&report.per_type_ap),
            Metric::Gap => report.gap = average_precision(&ranked),
            Metric::GapAt(k) => {
                report.g_at_k.insert(k, ap_at_k(&ranked, k, norm));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(e: u32, t: u32, score: f64, label: bool) -> Prediction {
        Prediction {
            entity: EntityId(e),
            type_id: TypeId(t),
            score,
            label,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true, false]), Some(1.0));
        assert_eq!(average_precision(&[false, true]), Some(0.5));
        assert!(close(average_precision(&[true, false, true]).unwrap(), (1.0 + 2.0 / 3.0) / 2.0));
        assert_eq!(average_precision(&[false, false]), None);
        assert_eq!(average_precision(&[]), None);
    }

    #[test]
    fn ranking_examples() {
        let r = rank_predictions(&[pred(0, 0, 0.2, false), pred(1, 0, 0.9, true)]).unwrap();
        assert_eq!(r[0].entity, EntityId(1));
        let r = rank_predictions(&[pred(5, 0, 1.0, false), pred(2, 1, 1.0, false), pred(2, 0, 1.0, false)]).unwrap();
        let order: Vec<(u32, u32)> = r.iter().map(|p| (p.entity.0, p.type_id.0)).collect();
        assert_eq!(order, vec![(2, 0), (2, 1), (5, 0)]);
        assert!(rank_predictions(&[]).unwrap().is_empty());
        assert!(matches!(rank_predictions(&[pred(0, 0, f64::NAN, true)]), Err(KbcError::Input(_))));
        assert!(rank_predictions(&[pred(0, 0, 1.0, true), pred(0, 0, 2.0, false)]).is_err());
    }

    #[test]
    fn map_is_unweighted() {
        let preds = vec![
            pred(0, 0, 0.9, true),
            pred(1, 0, 0.1, false),
            pred(0, 1, 0.9, false),
            pred(1, 1, 0.5, true),
            pred(2, 1, 0.4, false),
            pred(3, 1, 0.3, false),
            pred(4, 1, 0.2, false),
        ];
        assert_eq!(mean_average_precision(&preds).unwrap(), Some(0.75));
        assert_eq!(mean_average_precision(&[pred(0, 0, 1.0, false)]).unwrap(), None);
    }

    #[test]
    fn gap_pools_across_types() {
        let mut preds = vec![
            pred(0, 0, 0.9, true),
            pred(1, 0, 0.8, false),
            pred(2, 1, 0.7, false),
            pred(3, 1, 0.6, true),
        ];
        assert!(close(global_average_precision(&preds).unwrap().unwrap(), 0.75));
        assert!(close(mean_average_precision(&preds).unwrap().unwrap(), 0.75));
        for p in preds.iter_mut().filter(|p| p.type_id == TypeId(1)) {
            p.score += 1.0;
        }
        // pooled [0, 1, 1, 0]
        assert!(close(global_average_precision(&preds).unwrap().unwrap(), (0.5 + 2.0 / 3.0) / 2.0));
        assert!(close(mean_average_precision(&preds).unwrap().unwrap(), 0.75));
    }

    #[test]
    fn reversed_ranking_closed_form() {
        let (p, n) = (4usize, 7usize);
        let mut labels = vec![false; n];
        labels.extend(vec![true; p]);
        let expected: f64 = (1..=p).map(|j| j as f64 / (n + j) as f64).sum::<f64>() / p as f64;
        assert!(close(average_precision(&labels).unwrap(), expected));
    }

    #[test]
    fn gap_at_k_examples() {
        assert_eq!(ap_at_k(&[true, true, false], 2, GakNorm::Window), 1.0);
        assert_eq!(ap_at_k(&[true, false, true, false], 2, GakNorm::Window), 1.0);
        assert_eq!(ap_at_k(&[true, false, true, false], 2, GakNorm::Global), 0.5);
        assert_eq!(ap_at_k(&[false, false, true], 2, GakNorm::Window), 0.0);
        let labels = [false, true, true, false, true];
        assert_eq!(ap_at_k(&labels, 100, GakNorm::Window), average_precision(&labels).unwrap());
        assert!(gap_at_k(&[], 0, GakNorm::Window).is_err());
    }

    #[test]
    fn metric_parsing() {
        assert_eq!(
            parse_metrics("map,gap,g@1000,G@10").unwrap(),
            vec![Metric::Map, Metric::Gap, Metric::GapAt(10), Metric::GapAt(1000)]
        );
        assert!(parse_metrics("g@0").is_err());
        assert!(parse_metrics("mrr").is_err());
        assert!("sideways".parse::<GakNorm>().is_err());
    }

    #[test]
    fn report_counts() {
        let preds = vec![pred(0, 0, 0.9, true), pred(1, 0, 0.8, false), pred(0, 1, 0.1, false)];
        let r = evaluate(&preds, &[Metric::Map, Metric::Gap, Metric::GapAt(1)], GakNorm::Window).unwrap();
        assert_eq!(r.map, Some(1.0));
        assert_eq!(r.gap, Some(1.0));
        assert_eq!(r.g_at_k[&1], 1.0);
        assert_eq!(
            r.counts,
            EvalCounts {
                predictions: 3,
                positives: 1,
                types: 2,
                types_with_positives: 1
            }
        );
    }

    fn brute_ap(labels: &[bool]) -> Option<f64> {
        let total = labels.iter().filter(|&&l| l).count();
        if total == 0 {
            return None;
        }
        let mut sum = 0.0;
        for i in 0..labels.len() {
            if labels[i] {
                let above = labels[..=i].iter().filter(|&&l| l).count();
                sum += above as f64 / (i + 1) as f64;
            }
        }
        Some(sum / total as f64)
    }

    proptest! {
        #[test]
        fn ap_bounds_and_perfect(labels in proptest::collection::vec(any::<bool>(), 0..60)) {
            let ap = average_precision(&labels);
            prop_assert_eq!(ap.is_some(), labels.iter().any(|&l| l));
            if let Some(ap) = ap {
                prop_assert!((0.0..=1.0).contains(&ap));
                let first_neg = labels.iter().position(|&l| !l).unwrap_or(labels.len());
                let perfect = labels[first_neg..].iter().all(|&l| !l);
                prop_assert_eq!(ap == 1.0, perfect);
                prop_assert!((ap - brute_ap(&labels).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_transform_invariance(scores in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 1..40)) {
            let preds: Vec<Prediction> = scores.iter().enumerate().map(|(i, &(s, l))| pred(i as u32, (i % 3) as u32, s, l)).collect();
            let gap = global_average_precision(&preds).unwrap();
            let map = mean_average_precision(&preds).unwrap();
            for f in [|x: f64| 2.0 * x + 7.0, |x: f64| x.exp()] {
                let moved: Vec<Prediction> = preds.iter().map(|p| Prediction { score: f(p.score), ..*p }).collect();
                prop_assert_eq!(global_average_precision(&moved).unwrap(), gap);
                prop_assert_eq!(mean_average_precision(&moved).unwrap(), map);
            }
        }

        #[test]
        fn map_is_mean_of_per_type(scores in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..50)) {
            let preds: Vec<Prediction> = scores.iter().enumerate().map(|(i, &(s, l))| pred(i as u32, (i % 4) as u32, s, l)).collect();
            let per = per_type_average_precision(&preds).unwrap();
            let mean = if per.is_empty() { None } else { Some(per.values().sum::<f64>() / per.len() as f64) };
            prop_assert_eq!(mean_average_precision(&preds).unwrap(), mean);
        }

        #[test]
        fn unbounded_window_equals_gap(scores in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..50)) {
            let preds: Vec<Prediction> = scores.iter().enumerate().map(|(i, &(s, l))| pred(i as u32, 0, s, l)).collect();
            let gak = gap_at_k(&preds, usize::MAX, GakNorm::Window).unwrap();
            prop_assert_eq!(gak, global_average_precision(&preds).unwrap().unwrap_or(0.0));
        }
    }
}
