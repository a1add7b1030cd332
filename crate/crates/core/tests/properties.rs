//! Property tests for the layer primitives and the metric suite.

use adlocus_core::mask::{BinaryMask, ProbMask};
use adlocus_core::metrics::{confusion, threshold_sweep, ConfusionCounts};
use adlocus_core::ops::{
    conv2d_forward, maxpool2_forward, relu_forward, sigmoid_forward, upsample2_forward,
};
use adlocus_core::reference::{confusion_naive, conv2d_naive, metrics_naive};
use adlocus_core::tensor::Tensor;
use proptest::prelude::*;

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let len: usize = shape.iter().product();
    proptest::collection::vec(-2.0f64..2.0, len)
        .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
}

fn binary_mask_strategy(h: usize, w: usize) -> impl Strategy<Value = BinaryMask<f64>> {
    proptest::collection::vec(proptest::bool::ANY, h * w).prop_map(move |bits| {
        let data = bits.into_iter().map(f64::from).collect();
        BinaryMask::new(Tensor::new(vec![1, h, w], data).unwrap()).unwrap()
    })
}

fn prob_mask_strategy(h: usize, w: usize) -> impl Strategy<Value = ProbMask<f64>> {
    proptest::collection::vec(0.001f64..0.999, h * w).prop_map(move |data| {
        ProbMask::new(Tensor::new(vec![1, h, w], data).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_matches_naive_quadruple_loop(
        input in tensor_strategy(vec![2, 5, 5]),
        weights in tensor_strategy(vec![3, 2, 3, 3]),
        bias in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let bias_t = Tensor::new(vec![3], bias.clone()).unwrap();
        let fast = conv2d_forward(&input, &weights, &bias_t).unwrap();
        let naive = conv2d_naive(&input, &weights, &bias);
        prop_assert_eq!(fast.shape(), naive.shape());
        for (a, b) in fast.data().iter().zip(naive.data()) {
            prop_assert!((a - b).abs() < 1e-12, "fast {} vs naive {}", a, b);
        }
    }

    #[test]
    fn forward_ops_preserve_finiteness(input in tensor_strategy(vec![2, 4, 6])) {
        prop_assert!(relu_forward(&input).all_finite());
        let sig = sigmoid_forward(&input);
        prop_assert!(sig.all_finite());
        prop_assert!(sig.data().iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!(maxpool2_forward(&input).unwrap().0.all_finite());
        prop_assert!(upsample2_forward(&input).unwrap().all_finite());
    }

    #[test]
    fn pool_then_upsample_is_identity_on_constants(v in -5.0f64..5.0) {
        let input = Tensor::full(&[2, 6, 8], v);
        let (pooled, _) = maxpool2_forward(&input).unwrap();
        prop_assert_eq!(upsample2_forward(&pooled).unwrap(), input);
    }

    #[test]
    fn accuracy_equals_pixel_accuracy_for_two_classes(
        n00 in 0u64..5000, n01 in 0u64..5000, n10 in 0u64..5000, n11 in 1u64..5000,
    ) {
        let c = ConfusionCounts::from_matrix([[n00, n01], [n10, n11]]);
        prop_assert_eq!(c.accuracy(), c.pixel_accuracy());
    }

    #[test]
    fn confusion_and_metrics_match_naive_references(
        pred in binary_mask_strategy(8, 8),
        truth in binary_mask_strategy(8, 8),
    ) {
        let c = confusion(&pred, &truth).unwrap();
        let naive = confusion_naive(pred.values().data(), truth.values().data());
        prop_assert_eq!(c.matrix(), naive);

        let m = metrics_naive(naive);
        prop_assert!((c.pixel_accuracy() - m.pa).abs() < 1e-12);
        prop_assert!((c.mean_accuracy() - m.ma).abs() < 1e-12);
        prop_assert!((c.mean_iou() - m.miou).abs() < 1e-12);
        prop_assert!((c.fw_iou() - m.fwiou).abs() < 1e-12);
        prop_assert!((c.accuracy() - m.accuracy).abs() < 1e-12);
        let (fpr, tpr) = c.fpr_tpr();
        prop_assert!((fpr - m.fpr).abs() < 1e-12);
        prop_assert!((tpr - m.tpr).abs() < 1e-12);
    }

    #[test]
    fn metrics_live_in_unit_interval_and_peak_only_at_equality(
        pred in binary_mask_strategy(6, 6),
        truth in binary_mask_strategy(6, 6),
    ) {
        let c = confusion(&pred, &truth).unwrap();
        let (fpr, tpr) = c.fpr_tpr();
        for v in [c.pixel_accuracy(), c.mean_accuracy(), c.mean_iou(), c.fw_iou(), c.accuracy(), fpr, tpr] {
            prop_assert!((0.0..=1.0).contains(&v), "metric {} out of range", v);
        }
        let both_present = c.class_total(0) > 0 && c.class_total(1) > 0;
        if both_present {
            let equal = pred.values() == truth.values();
            let all_one = c.pixel_accuracy() == 1.0
                && c.mean_accuracy() == 1.0
                && c.mean_iou() == 1.0
                && c.fw_iou() == 1.0;
            prop_assert_eq!(equal, all_one);
        }
    }

    #[test]
    fn fw_iou_equals_mean_iou_at_balanced_class_frequencies(
        n00 in 0u64..1000, n11 in 0u64..1000, shift in 0u64..500,
    ) {
        // construct t_0 == t_1 by giving both classes the same total
        let t = n00.max(n11) + shift + 1;
        let c = ConfusionCounts::from_matrix([[n00, t - n00], [t - n11, n11]]);
        prop_assert_eq!(c.class_total(0), c.class_total(1));
        prop_assert!((c.fw_iou() - c.mean_iou()).abs() < 1e-12);
    }

    #[test]
    fn sweep_rates_are_monotone_non_increasing(
        probs in proptest::collection::vec(prob_mask_strategy(4, 4), 1..4),
        seed_truths in proptest::collection::vec(binary_mask_strategy(4, 4), 4),
    ) {
        let truths: Vec<_> = seed_truths.into_iter().take(probs.len()).collect();
        prop_assume!(truths.len() == probs.len());
        let points = threshold_sweep(&probs, &truths).unwrap();
        prop_assert_eq!(points.len(), 21);
        for w in points.windows(2) {
            prop_assert!(w[1].fpr <= w[0].fpr + 1e-15);
            prop_assert!(w[1].tpr <= w[0].tpr + 1e-15);
        }
    }
}

#[test]
fn full_model_shape_algebra_returns_to_input_size() {
    use adlocus_core::model::{build_model, forward, ModelConfig};
    let params = build_model::<f64>(&ModelConfig::default()).unwrap();
    let image = Tensor::full(&[3, 200, 200], 0.25);
    let prob = forward(&params, &image).unwrap();
    assert_eq!(prob.values().shape(), &[1, 200, 200]);
    assert!(prob.values().data().iter().all(|&v| v > 0.0 && v < 1.0));
}
