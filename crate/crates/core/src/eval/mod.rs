//! One-pass evaluation: overlap and center-error metrics, curves, and
//! per-attribute breakdowns.

mod compare;
mod run;

pub use compare::{compare, CompareRow, CompareTable, COLUMNS};
pub use run::{run_model, write_predictions, write_reports, ModelRun};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::data::Attribute;
use crate::error::{Error, Result};

pub const SUCCESS_STEPS: usize = 20;
pub const PRECISION_MAX_PX: usize = 50;
pub const PRECISION_REPORT_PX: usize = 20;
pub const NORM_PRECISION_THRESHOLD: f64 = 0.2;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b && a.area() > 0.0 {
        return 1.0;
    }
    let iw = (a.right().min(b.right()) - a.left().max(b.left())).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.top().max(b.top())).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Center location error in pixels.
pub fn cle(a: &BBox, b: &BBox) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}

/// Center error with the x offset measured in ground-truth widths and the y
/// offset in ground-truth heights.
pub fn norm_cle(pred: &BBox, gt: &BBox) -> f64 {
    ((pred.cx - gt.cx) / gt.w).hypot((pred.cy - gt.cy) / gt.h)
}

/// `0, 0.05, ..., 1`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=SUCCESS_STEPS).map(|i| i as f64 / SUCCESS_STEPS as f64).collect()
}

/// Predictions and ground truth of one tracked sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedSequence {
    pub name: String,
    pub attributes: BTreeSet<Attribute>,
    pub predictions: Vec<BBox>,
    pub ground_truth: Vec<BBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frames: usize,
    /// Fraction of frames whose overlap clears each of [`success_thresholds`].
    pub success_curve: Vec<f64>,
    pub success_auc: f64,
    /// Fraction of frames with center error `<= t` px for `t = 0..=50`.
    pub precision_curve: Vec<f64>,
    pub precision_at_20: f64,
    pub norm_precision: f64,
}

impl Metrics {
    /// Pools every frame of `seqs`. A frame succeeds at threshold `t` when its
    /// overlap exceeds `t`, or is exactly 1.
    pub fn pooled<'a>(seqs: impl IntoIterator<Item = &'a TrackedSequence>) -> Result<Metrics> {
        let mut overlaps = Vec::new();
        let mut errors = Vec::new();
        let mut norm_errors = Vec::new();
        for s in seqs {
            if s.predictions.len() != s.ground_truth.len() {
                return Err(Error::Sequence {
                    name: s.name.clone(),
                    msg: format!("{} predictions for {} ground-truth frames", s.predictions.len(), s.ground_truth.len()),
                });
            }
            for (p, g) in s.predictions.iter().zip(&s.ground_truth) {
                overlaps.push(iou(p, g));
                errors.push(cle(p, g));
                norm_errors.push(norm_cle(p, g));
            }
        }
        let n = overlaps.len();
        if n == 0 {
            return Err(Error::domain("evaluate", "no frames to evaluate"));
        }
        let frac = |count: usize| count as f64 / n as f64;
        let success_curve: Vec<f64> = success_thresholds()
            .into_iter()
            .map(|t| frac(overlaps.iter().filter(|&&o| o > t || o >= 1.0).count()))
            .collect();
        let last = success_curve.len() - 1;
        let inner: f64 = success_curve[1..last].iter().sum();
        let success_auc = (0.5 * (success_curve[0] + success_curve[last]) + inner) / SUCCESS_STEPS as f64;
        let precision_curve: Vec<f64> = (0..=PRECISION_MAX_PX)
            .map(|t| frac(errors.iter().filter(|&&e| e <= t as f64).count()))
            .collect();
        Ok(Metrics {
            frames: n,
            success_auc,
            precision_at_20: precision_curve[PRECISION_REPORT_PX],
            success_curve,
            precision_curve,
            norm_precision: frac(norm_errors.iter().filter(|&&e| e <= NORM_PRECISION_THRESHOLD).count()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_attribute: BTreeMap<Attribute, Metrics>,
    pub fps: f64,
}

/// Metrics over all frames, and over the sequences carrying each attribute.
///
/// With `only`, sequences carrying none of the listed attributes are left
/// out and the breakdown covers just those attributes.
pub fn evaluate(seqs: &[TrackedSequence], fps: f64, only: Option<&[Attribute]>) -> Result<EvalReport> {
    let wanted: BTreeSet<Attribute> = match only {
        Some(list) => list.iter().copied().collect(),
        None => seqs.iter().flat_map(|s| s.attributes.iter().copied()).collect(),
    };
    let selected: Vec<&TrackedSequence> = seqs
        .iter()
        .filter(|s| only.is_none() || !s.attributes.is_disjoint(&wanted))
        .collect();
    if selected.is_empty() {
        return Err(Error::config(
            "attributes",
            "no evaluation sequence carries any of the requested attributes",
        ));
    }
    let overall = Metrics::pooled(selected.iter().copied())?;
    let mut per_attribute = BTreeMap::new();
    for a in wanted {
        let subset: Vec<&TrackedSequence> = selected.iter().copied().filter(|s| s.attributes.contains(&a)).collect();
        if !subset.is_empty() {
            per_attribute.insert(a, Metrics::pooled(subset)?);
        }
    }
    Ok(EvalReport {
        overall,
        per_attribute,
        fps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracked(name: &str, attrs: &[Attribute], pred: Vec<BBox>, gt: Vec<BBox>) -> TrackedSequence {
        TrackedSequence {
            name: name.into(),
            attributes: attrs.iter().copied().collect(),
            predictions: pred,
            ground_truth: gt,
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::from_xywh(0.0, 0.0, 2.0, 2.0);
        let b = BBox::from_xywh(1.0, 1.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b), iou(&b, &a));
        assert_eq!(iou(&a, &BBox::from_xywh(5.0, 5.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn center_errors() {
        let a = BBox::new(0.0, 0.0, 4.0, 2.0);
        let b = BBox::new(3.0, 4.0, 4.0, 2.0);
        assert_eq!(cle(&a, &b), 5.0);
        assert_eq!(cle(&a, &b), cle(&b, &a));
        assert_eq!(cle(&a, &a), 0.0);
        assert_eq!(norm_cle(&BBox::new(4.0, 0.0, 1.0, 1.0), &a), 1.0);
        assert_eq!(norm_cle(&a.scale(3.0), &b.scale(3.0)), norm_cle(&a, &b));
    }

    #[test]
    fn perfect_and_hopeless_tracking() {
        let gt: Vec<BBox> = (0..10).map(|i| BBox::new(20.0 + i as f64, 30.0, 10.0, 12.0)).collect();
        let perfect = Metrics::pooled([&tracked("a", &[Attribute::Occlusion], gt.clone(), gt.clone())]).unwrap();
        assert_eq!(perfect.success_auc, 1.0);
        assert_eq!(perfect.precision_at_20, 1.0);
        assert_eq!(perfect.norm_precision, 1.0);

        let far = vec![BBox::new(500.0, 500.0, 10.0, 12.0); 10];
        let lost = Metrics::pooled([&tracked("a", &[Attribute::Occlusion], far, gt)]).unwrap();
        assert_eq!(lost.success_auc, 0.0);
        assert_eq!(lost.precision_at_20, 0.0);
    }

    #[test]
    fn half_overlapping_frames_give_half() {
        let g = BBox::new(10.0, 10.0, 4.0, 4.0);
        let s = tracked("a", &[Attribute::Occlusion], vec![g, BBox::new(90.0, 90.0, 4.0, 4.0)], vec![g, g]);
        let m = Metrics::pooled([&s]).unwrap();
        for v in &m.success_curve {
            assert_eq!(*v, 0.5);
        }
        assert!((m.success_auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn curves_are_monotone() {
        let gt: Vec<BBox> = (0..30).map(|i| BBox::new(50.0, 50.0, 10.0 + i as f64, 10.0)).collect();
        let pred: Vec<BBox> = (0..30).map(|i| BBox::new(50.0 + i as f64, 48.0, 12.0, 9.0)).collect();
        let m = Metrics::pooled([&tracked("a", &[Attribute::Occlusion], pred, gt)]).unwrap();
        assert!(m.success_curve.windows(2).all(|w| w[0] >= w[1]));
        assert!(m.precision_curve.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn length_mismatch_names_the_sequence() {
        let g = BBox::new(10.0, 10.0, 4.0, 4.0);
        let err = Metrics::pooled([&tracked("seq_0007", &[Attribute::Occlusion], vec![g], vec![g, g])]).unwrap_err();
        assert!(err.to_string().contains("seq_0007"));
    }

    #[test]
    fn attribute_filter_restricts_sequences() {
        let g = BBox::new(10.0, 10.0, 4.0, 4.0);
        let far = BBox::new(90.0, 90.0, 4.0, 4.0);
        let seqs = [
            tracked("a", &[Attribute::Occlusion], vec![g, g], vec![g, g]),
            tracked("b", &[Attribute::FastMotion], vec![far, far], vec![g, g]),
        ];
        let all = evaluate(&seqs, 1.0, None).unwrap();
        assert_eq!(all.overall.frames, 4);
        assert_eq!(all.per_attribute.len(), 2);
        assert_eq!(all.per_attribute[&Attribute::FastMotion].success_auc, 0.0);
        let occ = evaluate(&seqs, 1.0, Some(&[Attribute::Occlusion])).unwrap();
        assert_eq!(occ.overall.success_auc, 1.0);
        assert_eq!(occ.per_attribute.keys().copied().collect::<Vec<_>>(), [Attribute::Occlusion]);
        assert!(evaluate(&seqs, 1.0, Some(&[Attribute::LowResolution])).is_err());
    }
}
