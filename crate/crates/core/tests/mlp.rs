use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgnn_core::mlp::{apply_hard_bc, forward_jet, init_parameters, Affine, NetworkSpec};

fn spec() -> NetworkSpec {
    let coords = [Affine::unit(0.0, 10.0), Affine::unit(0.0, 1020.0), Affine::unit(0.0, 1020.0)];
    NetworkSpec::new(10, vec![40, 40, 40, 40], coords, Vec::new())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hard_ends_hold_exactly(seed in any::<u64>(), t in 0.0..10.0f64, y in 0.0..1020.0f64, scale in 0.1..20.0f64) {
        let spec = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = init_parameters(&spec, &mut rng);
        for v in p.values.iter_mut() {
            *v = *v * scale + rng.random_range(-1.0..1.0);
        }
        let mut input = vec![t, 0.0, y];
        input.extend((0..10).map(|_| rng.random_range(-3.0..3.0)));
        for (x, want) in [(0.0, 202.0), (1020.0, 200.0)] {
            input[1] = x;
            let raw = forward_jet(&spec, &p, &input).unwrap();
            let h = apply_hard_bc(&raw, x, 202.0, 200.0, 0.0, 1020.0).unwrap();
            prop_assert_eq!(h.value, want);
            prop_assert_eq!(h.dt, 0.0);
            prop_assert_eq!(h.dy, 0.0);
        }
    }
}

#[test]
fn hard_ends_survive_unnormalized_domains() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coords = [Affine::unit(0.0, 1.0), Affine::unit(-3.7, 11.2), Affine::unit(0.0, 1.0)];
    let spec = NetworkSpec::new(2, vec![8], coords, Vec::new());
    let p = init_parameters(&spec, &mut rng);
    for &(x, want) in &[(-3.7, 1.5), (11.2, -0.25)] {
        let raw = forward_jet(&spec, &p, &[0.3, x, 0.5, 0.1, -0.2]).unwrap();
        let h = apply_hard_bc(&raw, x, 1.5, -0.25, -3.7, 14.9).unwrap();
        assert!((h.value - want).abs() <= 1e-15 * want.abs().max(1.0));
    }
}
