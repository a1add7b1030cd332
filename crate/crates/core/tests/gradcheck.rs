//! Gradient checks: every backward pass against 64-bit central finite
//! differences of its forward, away from max-pool ties and ReLU kinks.

use adlocus_core::model::{backward, build_model, forward_trace, ModelConfig, ModelParams};
use adlocus_core::ops::{
    bce_loss, conv2d_backward, conv2d_forward, maxpool2_backward, maxpool2_forward, relu_backward,
    relu_forward, sigmoid_backward, sigmoid_forward, upsample2_backward, upsample2_forward,
};
use adlocus_core::reference::{finite_difference_gradient, grads_agree};
use adlocus_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Random tensor with every value at least `margin` away from 0, so ReLU
/// kinks and sign flips cannot corrupt the finite-difference probe.
fn random_tensor_off_kink(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let mag = rng.gen_range(margin..1.0);
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar projection `sum(out * probe)` turns a tensor-valued op into a
/// function finite differences can probe; its analytic input gradient is the
/// backward pass applied to `probe`.
fn projection(out: &Tensor<f64>, probe: &Tensor<f64>) -> f64 {
    out.data()
        .iter()
        .zip(probe.data())
        .map(|(a, b)| a * b)
        .sum()
}

#[test]
fn conv2d_input_weight_and_bias_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..4 {
        let input = random_tensor(&mut rng, &[2, 5, 6]);
        let weights = random_tensor(&mut rng, &[3, 2, 3, 3]);
        let bias = random_tensor(&mut rng, &[3]);
        let probe = random_tensor(&mut rng, &[3, 5, 6]);

        let grad = conv2d_backward(&input, &weights, &probe).unwrap();

        let fd_input = finite_difference_gradient(
            |x| projection(&conv2d_forward(x, &weights, &bias).unwrap(), &probe),
            &input,
        );
        grads_agree(grad.input_grad.data(), &fd_input, TOL).unwrap();

        let fd_weights = finite_difference_gradient(
            |w| projection(&conv2d_forward(&input, w, &bias).unwrap(), &probe),
            &weights,
        );
        grads_agree(grad.param_grads[0].data(), &fd_weights, TOL).unwrap();

        let fd_bias = finite_difference_gradient(
            |b| projection(&conv2d_forward(&input, &weights, b).unwrap(), &probe),
            &bias,
        );
        grads_agree(grad.param_grads[1].data(), &fd_bias, TOL).unwrap();
    }
}

#[test]
fn single_pixel_conv_weight_gradient_is_input_times_upstream() {
    // 1x1 spatial input: only the center tap overlaps, so d_w collapses to
    // input * upstream at that tap.
    let input = Tensor::new(vec![1, 1, 1], vec![2.5]).unwrap();
    let weights = Tensor::zeros(&[1, 1, 3, 3]);
    let upstream = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
    let grad = conv2d_backward(&input, &weights, &upstream).unwrap();
    let dw = grad.param_grads[0].data();
    for (k, &v) in dw.iter().enumerate() {
        if k == 4 {
            assert_eq!(v, 2.5 * 3.0);
        } else {
            assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn maxpool_gradient_matches_finite_differences_away_from_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..4 {
        // distinct-valued windows: draw without replacement from a grid
        let mut values: Vec<f64> = (0..2 * 6 * 6).map(|i| i as f64 * 0.01).collect();
        for i in (1..values.len()).rev() {
            let j = rng.gen_range(0..=i);
            values.swap(i, j);
        }
        let input = Tensor::new(vec![2, 6, 6], values).unwrap();
        let probe = random_tensor(&mut rng, &[2, 3, 3]);

        let (_, indices) = maxpool2_forward(&input).unwrap();
        let grad = maxpool2_backward(&indices, &probe).unwrap();

        let fd = finite_difference_gradient(
            |x| projection(&maxpool2_forward(x).unwrap().0, &probe),
            &input,
        );
        grads_agree(grad.input_grad.data(), &fd, TOL).unwrap();
    }
}

#[test]
fn upsample_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let input = random_tensor(&mut rng, &[2, 3, 4]);
    let probe = random_tensor(&mut rng, &[2, 6, 8]);

    let grad = upsample2_backward(&probe).unwrap();
    let fd = finite_difference_gradient(
        |x| projection(&upsample2_forward(x).unwrap(), &probe),
        &input,
    );
    grads_agree(grad.input_grad.data(), &fd, TOL).unwrap();
}

#[test]
fn relu_gradient_matches_finite_differences_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let input = random_tensor_off_kink(&mut rng, &[2, 4, 4], 1e-3);
    let probe = random_tensor(&mut rng, &[2, 4, 4]);

    let grad = relu_backward(&input, &probe).unwrap();
    let fd = finite_difference_gradient(|x| projection(&relu_forward(x), &probe), &input);
    grads_agree(grad.input_grad.data(), &fd, TOL).unwrap();
}

#[test]
fn sigmoid_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let input = random_tensor(&mut rng, &[1, 4, 5]);
    let probe = random_tensor(&mut rng, &[1, 4, 5]);

    let y = sigmoid_forward(&input);
    let grad = sigmoid_backward(&y, &probe).unwrap();
    let fd = finite_difference_gradient(|x| projection(&sigmoid_forward(x), &probe), &input);
    grads_agree(grad.input_grad.data(), &fd, TOL).unwrap();
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let prob_data: Vec<f64> = (0..16).map(|_| rng.gen_range(0.05..0.95)).collect();
    let prob = Tensor::new(vec![1, 4, 4], prob_data).unwrap();
    let target_data: Vec<f64> = (0..16).map(|_| f64::from(rng.gen::<bool>())).collect();
    let target = Tensor::new(vec![1, 4, 4], target_data).unwrap();

    let (_, grad) = bce_loss(&prob, &target).unwrap();
    let fd = finite_difference_gradient(|p| bce_loss(p, &target).unwrap().0, &prob);
    grads_agree(grad.data(), &fd, TOL).unwrap();
}

/// End-to-end check on a reduced model through the same code path as the
/// full one: loss(params) probed by finite differences in every parameter.
#[test]
fn end_to_end_model_gradient_matches_finite_differences() {
    let config = ModelConfig {
        input_size: (16, 16),
        input_channels: 3,
        encoder_channels: vec![4, 8],
        decoder_channels: vec![4, 1],
        seed: 99,
    };
    let params: ModelParams<f64> = build_model(&config).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let image = Tensor::new(
        vec![3, 16, 16],
        (0..3 * 256).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let target = Tensor::new(
        vec![1, 16, 16],
        (0..256).map(|_| f64::from(rng.gen::<bool>())).collect(),
    )
    .unwrap();

    let (prob, trace) = forward_trace(&params, &image).unwrap();
    let (_, loss_grad) = bce_loss(prob.values(), &target).unwrap();
    let analytic = backward(&params, &trace, &loss_grad).unwrap();

    let loss_for = |p: &ModelParams<f64>| -> f64 {
        let (prob, _) = forward_trace(p, &image).unwrap();
        bce_loss(prob.values(), &target).unwrap().0
    };

    for (k, (dw, db)) in analytic.iter().enumerate() {
        for (tensor_idx, (analytic_grad, len)) in
            [(dw, dw.len()), (db, db.len())].iter().enumerate()
        {
            // probe a deterministic subset; full FD over every weight is slow
            let stride = (len / 12).max(1);
            for j in (0..*len).step_by(stride) {
                let mut perturbed = params.clone();
                let h = 1e-5;
                let slot = |p: &mut ModelParams<f64>, v: f64| {
                    let layer = &mut p.layers_mut()[k];
                    let t = if tensor_idx == 0 {
                        &mut layer.weights
                    } else {
                        &mut layer.bias
                    };
                    t.data_mut()[j] += v;
                };
                slot(&mut perturbed, h);
                let plus = loss_for(&perturbed);
                slot(&mut perturbed, -2.0 * h);
                let minus = loss_for(&perturbed);
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic_grad.data()[j];
                let scale = (a.abs() + numeric.abs()).max(1.0);
                assert!(
                    (a - numeric).abs() <= TOL * scale,
                    "layer {k} tensor {tensor_idx} elem {j}: analytic {a}, numeric {numeric}"
                );
            }
        }
    }
}
