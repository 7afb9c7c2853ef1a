use mvlidarnet::nn::{
    argmax_channels, batchnorm_relu, conv2d, cross_entropy, deconv2d, focal_loss, l1_loss,
    softmax_channels, BatchNorm, Conv2d, Deconv2d, LossConfig, Tensor,
};
use mvlidarnet_testkit::fixtures::{random_tensor, random_vec};
use mvlidarnet_testkit::nn::{conv2d_ref, deconv2d_ref, finite_difference, relative_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv2d_matches_direct_sum(
        seed in any::<u64>(),
        in_d in 1usize..=8,
        out_d in 1usize..=8,
        h in 1usize..=16,
        w in 1usize..=16,
        k in prop::sample::select(vec![1usize, 3]),
        stride in 1usize..=2,
        bias in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_tensor(&mut rng, (in_d, h, w), 1.0);
        let conv = Conv2d::new(
            out_d, in_d, k, stride,
            random_vec(&mut rng, out_d * in_d * k * k, 1.0),
            bias.then(|| random_vec(&mut rng, out_d, 1.0)),
        ).unwrap();
        let fast = conv2d(&input, &conv).unwrap();
        prop_assert!(max_abs_diff(&fast, &conv2d_ref(&input, &conv)) <= 1e-5);
    }

    #[test]
    fn deconv2d_matches_scatter(
        seed in any::<u64>(),
        in_d in 1usize..=8,
        out_d in 1usize..=8,
        h in 1usize..=16,
        w in 1usize..=16,
        bias in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = random_tensor(&mut rng, (in_d, h, w), 1.0);
        let deconv = Deconv2d::new(
            out_d, in_d,
            random_vec(&mut rng, in_d * out_d * 4, 1.0),
            bias.then(|| random_vec(&mut rng, out_d, 1.0)),
        ).unwrap();
        let fast = deconv2d(&input, &deconv).unwrap();
        prop_assert!(max_abs_diff(&fast, &deconv2d_ref(&input, &deconv)) <= 1e-5);
    }

    #[test]
    fn softmax_sums_to_one_and_ignores_shifts(
        seed in any::<u64>(),
        d in 1usize..=8,
        shift in -50f32..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_tensor(&mut rng, (d, 5, 7), 10.0);
        let p = softmax_channels(&logits);
        for y in 0..5 {
            for x in 0..7 {
                prop_assert!((p.pixel(y, x).iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
        let shifted = Tensor::from_vec(
            logits.shape(),
            logits.data().iter().map(|v| v + shift).collect(),
        ).unwrap();
        let q = softmax_channels(&shifted);
        prop_assert!(max_abs_diff(&p, &q) <= 1e-5);
        prop_assert_eq!(argmax_channels(&logits), argmax_channels(&shifted));
    }
}

const H: f64 = 1e-3;
const REL_TOL: f64 = 1e-3;
// Gradients smaller than this are compared in absolute terms.
const FLOOR: f64 = 1e-6;

fn labels_and_mask(rng: &mut ChaCha8Rng, classes: usize, plane: usize) -> (Vec<u32>, Vec<bool>) {
    let target = (0..plane)
        .map(|_| rng.gen_range(0..classes as u32))
        .collect();
    let mut mask: Vec<bool> = (0..plane).map(|_| rng.gen_bool(0.7)).collect();
    mask[0] = true;
    (target, mask)
}

fn assert_gradient(analytic: &Tensor, numeric: &[f64], what: &str) {
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric).enumerate() {
        let e = relative_error(a as f64, n, FLOOR);
        assert!(
            e <= REL_TOL,
            "{what}: element {i} analytic {a} numeric {n} (rel {e})"
        );
    }
}

#[test]
fn cross_entropy_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let d = rng.gen_range(2..=7);
        let (h, w) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let logits = random_tensor(&mut rng, (d, h, w), 3.0);
        let (target, mask) = labels_and_mask(&mut rng, d, h * w);
        let (_, grad) = cross_entropy(&logits, &target, &mask).unwrap();
        let numeric =
            finite_difference(&logits, H, |t| cross_entropy(t, &target, &mask).unwrap().0);
        assert_gradient(&grad, &numeric, "cross entropy");
    }
}

#[test]
fn focal_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..20 {
        let d = rng.gen_range(2..=4);
        let (h, w) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let logits = random_tensor(&mut rng, (d, h, w), 3.0);
        let (target, mask) = labels_and_mask(&mut rng, d, h * w);
        let cfg = LossConfig {
            focal_gamma: [2.0, 0.5, 1.0, 3.0][case % 4],
            focal_alpha: rng.gen_range(0.1..1.0),
            ..LossConfig::default()
        };
        let (_, grad) = focal_loss(&logits, &target, &mask, &cfg).unwrap();
        let numeric = finite_difference(&logits, H, |t| {
            focal_loss(t, &target, &mask, &cfg).unwrap().0
        });
        assert_gradient(&grad, &numeric, "focal");
    }
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let d = rng.gen_range(1..=6);
        let (h, w) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let pred = random_tensor(&mut rng, (d, h, w), 2.0);
        // Residuals are kept at least 10h away from the kink at zero.
        let target_data = pred
            .data()
            .iter()
            .map(|&p| {
                let r: f32 = rng.gen_range(0.01..1.0);
                if rng.gen_bool(0.5) {
                    p + r
                } else {
                    p - r
                }
            })
            .collect();
        let target = Tensor::from_vec(pred.shape(), target_data).unwrap();
        let (_, mask) = labels_and_mask(&mut rng, 1, h * w);
        let (_, grad) = l1_loss(&pred, &target, &mask).unwrap();
        let numeric = finite_difference(&pred, H, |t| l1_loss(t, &target, &mask).unwrap().0);
        assert_gradient(&grad, &numeric, "l1");
    }
}

#[test]
fn batchnorm_relu_matches_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random_tensor(&mut rng, (3, 4, 4), 2.0);
    let bn = BatchNorm::new(
        vec![1.0, 2.0, -0.5],
        vec![0.0, -1.0, 0.25],
        vec![0.5, 0.0, -0.25],
        vec![1.0, 4.0, 0.01],
    )
    .unwrap();
    let y = batchnorm_relu(x.clone(), &bn).unwrap();
    for c in 0..3 {
        for (a, b) in x.channel(c).iter().zip(y.channel(c)) {
            let expected = (bn.gamma[c] as f64 * (*a as f64 - bn.mean[c] as f64)
                / (bn.var[c] as f64 + 1e-5).sqrt()
                + bn.beta[c] as f64)
                .max(0.0);
            assert!((expected - *b as f64).abs() < 1e-5);
        }
    }
}

#[test]
fn layers_are_bit_identical_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let input = random_tensor(&mut rng, (8, 16, 16), 1.0);
    let conv = Conv2d::new(8, 8, 3, 2, random_vec(&mut rng, 8 * 8 * 9, 1.0), None).unwrap();
    let deconv = Deconv2d::new(4, 8, random_vec(&mut rng, 8 * 4 * 4, 1.0), None).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    conv2d(&input, &conv).unwrap(),
                    deconv2d(&input, &deconv).unwrap(),
                )
            })
    };
    assert_eq!(run(1), run(4));
}
