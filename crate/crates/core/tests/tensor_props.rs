use firemu::tensor::{adam_step, conv2d, conv2d_transpose, transpose_output_size, AdamConfig, AdamState, Tensor};
use firemu::Tensor32;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor32 {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// <conv(x), y> = <x, convT(y)> for the same weights.
    #[test]
    fn transposed_conv_is_the_adjoint(
        seed in any::<u64>(),
        n in 1usize..3,
        c_in in 1usize..5,
        c_out in 1usize..5,
        k in 1usize..6,
        stride in 1usize..4,
        pad_frac in 0.0f64..1.0,
        out_h in 1usize..9,
        out_w in 1usize..9,
    ) {
        let pad = ((k - 1) as f64 * pad_frac) as usize / 2;
        // input sizes whose forward conv covers them exactly
        let h = transpose_output_size(out_h, k, stride, pad).unwrap();
        let w = transpose_output_size(out_w, k, stride, pad).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, c_in, h, w], &mut rng);
        let wt = random(&[c_out, c_in, k, k], &mut rng);
        let y = random(&[n, c_out, out_h, out_w], &mut rng);
        let ax = conv2d(&x, &wt, None, stride, pad).unwrap();
        prop_assert_eq!(ax.shape(), y.shape());
        let aty = conv2d_transpose(&y, &wt, None, stride, pad).unwrap();
        prop_assert_eq!(aty.shape(), x.shape());
        let (lhs, rhs) = (ax.dot(&y).unwrap(), x.dot(&aty).unwrap());
        let scale = lhs.abs().max(rhs.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-4 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn adam_moves_against_the_gradient(g in prop::collection::vec(-10.0f32..10.0, 1..20)) {
        let mut p = vec![0.0f32; g.len()];
        let mut st = AdamState::new(g.len(), AdamConfig::default());
        adam_step(&mut p, &g, &mut st).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            prop_assert!(pi * gi <= 0.0);
            // first step has magnitude lr (up to eps) for any nonzero gradient
            if gi.abs() > 1e-3 {
                prop_assert!((pi.abs() - 1e-3).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn strided_pair_round_trips_sizes() {
    for h in [8usize, 16, 64, 256, 320] {
        let x = Tensor32::zeros(&[1, 2, h, h]);
        let w = Tensor32::zeros(&[3, 2, 4, 4]);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3, h / 2, h / 2]);
        let back = conv2d_transpose(&y, &w, None, 2, 1).unwrap();
        assert_eq!(back.shape(), x.shape());
    }
}
