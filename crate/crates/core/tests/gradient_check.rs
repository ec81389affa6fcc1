use proptest::prelude::*;
use proptest::test_runner::RngSeed;

use stratgrad::mlp::{init_params, loss, loss_and_grad, Activation, MlpShape};

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..4).prop_flat_map(|hidden| {
        (2usize..6, 2usize..5).prop_map(move |(d, c)| {
            let mut sizes = vec![d];
            sizes.extend(&hidden);
            sizes.push(c);
            sizes
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        rng_seed: RngSeed::Fixed(0),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn backprop_matches_central_differences(
        sizes in shape(),
        tanh in any::<bool>(),
        seed in any::<u64>(),
        lambda in 0.0..0.1f64,
        xs in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 6), 1..5),
    ) {
        let act = if tanh { Activation::Tanh } else { Activation::Sigmoid };
        let shape = MlpShape::new(sizes.clone()).unwrap();
        let mut params = init_params(&shape, act, seed);
        let (d, c) = (sizes[0], *sizes.last().unwrap());
        let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(k, x)| (&x[..d], k % c)).collect();
        let (_, grad) = loss_and_grad(&params, &batch, lambda).unwrap();
        let h = 1e-5;
        for k in 0..grad.as_slice().len() {
            let orig = params.as_slice()[k];
            params.as_mut_slice()[k] = orig + h;
            let up = loss(&params, &batch, lambda).unwrap();
            params.as_mut_slice()[k] = orig - h;
            let down = loss(&params, &batch, lambda).unwrap();
            params.as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.as_slice()[k];
            // relative tolerance plus the absolute round-off of a central difference at this step
            let allowed = 1e-5 * numeric.abs().max(analytic.abs()) + 1e-9;
            prop_assert!(
                (numeric - analytic).abs() < allowed,
                "parameter {}: numeric {} analytic {}",
                k,
                numeric,
                analytic
            );
        }
    }
}
