use firemu::dataset::generate_run;
use firemu::emulator::{build_model, ModelConfig, SampleLoss};
use firemu::firesim::SimConfig;
use firemu::preprocess::{crop_sample, FuelEncoding};
use firemu::tensor::cases::{LayerCase, LayerKind};
use firemu::tensor::{grad_check, CoordSelection, Differentiable, GradCheckConfig, GradCheckReport, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(kind: LayerKind, seed: u64) -> GradCheckReport {
    let (c, p) = LayerCase::new(kind, seed).unwrap();
    grad_check(&c, &p, &GradCheckConfig::default()).unwrap()
}

macro_rules! layer_tests {
    ($($name:ident => $layer:expr),* $(,)?) => {$(
        #[test]
        fn $name() {
            for seed in 0..3 {
                let r = check($layer, seed);
                assert!(r.passed, "seed {seed}\n{r}");
                assert!(r.checked > 0);
            }
        }
    )*};
}

layer_tests! {
    conv_3x3_gradients => LayerKind::Conv3,
    strided_conv_gradients => LayerKind::Strided,
    transposed_conv_gradients => LayerKind::Transposed,
    pointwise_conv_gradients => LayerKind::Pointwise,
    channel_scaling_gradients => LayerKind::Scale,
    relu_gradients => LayerKind::Relu,
    elementwise_gradients => LayerKind::Product,
    log_ratio_gradients => LayerKind::LogRatio,
}

#[test]
fn full_model_loss_gradient_in_double_precision() {
    let run = generate_run(21, 64, 64, 8, &SimConfig::default()).unwrap();
    let sample = run.sample(3, 2, FuelEncoding::default()).unwrap();
    let sample = crop_sample(&sample, 32, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let config = ModelConfig::default();
    let params = build_model(&config, 5).unwrap().cast::<f64>();
    let loss = SampleLoss { config: &config, sample: &sample, tau: 1e-6 };
    let cfg = GradCheckConfig { coords: CoordSelection::PerSegment(64), ..Default::default() };
    let r = grad_check(&loss, &params, &cfg).unwrap();
    assert!(r.passed, "{r}");
    assert!(r.checked >= 200, "{r}");
}

#[test]
fn corrupted_layer_is_caught() {
    // a wrong gradient must be detected by the same configuration
    let (c, p) = LayerCase::new(LayerKind::Strided, 9).unwrap();
    let mut g = Graph::new(&p);
    let out = c.build(&mut g).unwrap();
    let (_, mut grad) = g.backward(out).unwrap();
    let s = p.segment("test.w").unwrap();
    grad[s.offset] *= 1.01;
    let r = firemu::tensor::grad_check_against(&c, &p, &grad, &GradCheckConfig::default()).unwrap();
    assert!(!r.passed);
}
