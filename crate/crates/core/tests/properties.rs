use mlkd::eval::{iou, Metrics, TrackedSequence};
use mlkd::mutual::{find_peaks, persuasive_value};
use mlkd::tracker::{decode_box, TrackerModel};
use mlkd::{BBox, Tensor};
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = BBox> {
    (0.0..128.0f64, 0.0..128.0f64, 1.0..60.0f64, 1.0..60.0f64).prop_map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h))
}

fn grid(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn forward_shapes_hold_for_any_input(seed in 0u64..1000, z in grid(3 * 32 * 32), x in grid(3 * 64 * 64)) {
        let model = TrackerModel::new(seed);
        let z = Tensor::new(&[3, 32, 32], z).unwrap().map(|v| (v + 3.0) / 6.0);
        let x = Tensor::new(&[3, 64, 64], x).unwrap().map(|v| (v + 3.0) / 6.0);
        let out = model.forward(&z, &x).unwrap();
        prop_assert_eq!(out.corr.shape(), &[32, 9, 9]);
        prop_assert_eq!(out.cls.shape(), &[2, 9, 9]);
        prop_assert_eq!(out.reg.shape(), &[4, 9, 9]);
        prop_assert!(out.cls.all_finite() && out.reg.all_finite());
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in boxes(), b in boxes()) {
        let (x, y) = (iou(&a, &b), iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn decoded_boxes_stay_in_the_window(cls in grid(2 * 81), reg in grid(4 * 81)) {
        let cls = Tensor::new(&[2, 9, 9], cls).unwrap();
        let reg = Tensor::new(&[4, 9, 9], reg).unwrap();
        let b = decode_box(&reg, &cls).unwrap();
        prop_assert!(b.left() >= -1e-9 && b.top() >= -1e-9);
        prop_assert!(b.right() <= 64.0 + 1e-9 && b.bottom() <= 64.0 + 1e-9);
    }

    #[test]
    fn peaks_are_descending_and_ratio_at_least_one(map in prop::collection::vec(0.0..1.0f64, 81)) {
        let peaks = find_peaks(&Tensor::new(&[9, 9], map).unwrap()).unwrap();
        prop_assert!(peaks.windows(2).all(|w| w[0] >= w[1]));
        let p = persuasive_value(&peaks);
        prop_assert!(peaks.is_empty() || p >= 1.0);
    }

    #[test]
    fn success_auc_tracks_mean_overlap(pairs in prop::collection::vec((boxes(), boxes()), 1..60)) {
        let seq = TrackedSequence {
            name: "p".into(),
            attributes: Default::default(),
            predictions: pairs.iter().map(|p| p.0).collect(),
            ground_truth: pairs.iter().map(|p| p.1).collect(),
        };
        let m = Metrics::pooled([&seq]).unwrap();
        let mean = pairs.iter().map(|(a, b)| iou(a, b)).sum::<f64>() / pairs.len() as f64;
        prop_assert!((m.success_auc - mean).abs() <= 0.025 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.precision_at_20));
    }
}
