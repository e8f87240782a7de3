use proptest::prelude::*;

use msgarch_core::ffbs::{
    antithetic_uniforms, backward_antithetic_sample, backward_sample, conditional_antithetic_sample,
    forward_filter, permuted_displacement, proposal_logdensity, sample_path,
};
use msgarch_core::model::{exact_path_posterior, simulate_dgp};
use msgarch_core::samplers::{mtm_update, mtmis_update};
use msgarch_core::{
    AuxKind, ChainState, MctmWeights, ModelParams, ObservationSeries, RandomStream, RegimeParams,
    SamplerKind, StatePath, StateSampler, TransitionMatrix, VarianceInit,
};

fn params(r: [[f64; 4]; 2], p11: f64, p22: f64) -> ModelParams {
    ModelParams::new(
        r.iter().map(|v| RegimeParams::new(v[0], v[1], v[2], v[3])).collect(),
        TransitionMatrix::two_state(p11, p22).unwrap(),
    )
    .unwrap()
}

fn index(path: &StatePath) -> usize {
    path.as_slice().iter().fold(0, |a, s| a * 2 + s)
}

fn small_problem(t: usize, seed: u64) -> (ModelParams, ObservationSeries, VarianceInit) {
    let theta = params([[0.2, 0.5, 0.3, 0.4], [-0.3, 2.0, 0.1, 0.5]], 0.8, 0.7);
    let y = simulate_dgp(&theta, t, seed).unwrap().y;
    let init = VarianceInit::from_sample_variance(&y).unwrap();
    (theta, y, init)
}

fn regime_strategy() -> impl Strategy<Value = [f64; 4]> {
    (-1.0..1.0f64, 0.05..3.0f64, 0.0..0.6f64, 0.0..0.6f64).prop_map(|(m, g, a, b)| [m, g, a, b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filtered_probabilities_are_normalized(
        r1 in regime_strategy(),
        r2 in regime_strategy(),
        p11 in 0.01..0.99f64,
        p22 in 0.01..0.99f64,
        seed in 0u64..1000,
        aux_idx in 0usize..5,
    ) {
        let theta = params([r1, r2], p11, p22);
        let y = simulate_dgp(&theta, 40, seed).unwrap().y;
        let init = VarianceInit::from_sample_variance(&y).unwrap();
        let fo = forward_filter(&y, &theta, AuxKind::ALL[aux_idx], init).unwrap();
        prop_assert!(fo.log_marginal().is_finite());
        for t in 0..fo.len() {
            let f: f64 = fo.filtered(t).iter().sum();
            let p: f64 = fo.predictive(t).iter().sum();
            prop_assert!((f - 1.0).abs() < 1e-12);
            prop_assert!((p - 1.0).abs() < 1e-12);
            prop_assert!(fo.regime_variances(t).iter().all(|v| *v > 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn sampled_log_q_matches_density(seed in 0u64..500, aux_idx in 0usize..5) {
        let (theta, y, init) = small_problem(30, seed);
        let fo = forward_filter(&y, &theta, AuxKind::ALL[aux_idx], init).unwrap();
        let mut rng = RandomStream::new(seed, 1);
        let s = sample_path(&fo, &theta.transition, &mut rng).unwrap();
        let q = proposal_logdensity(&s.path, &fo, &theta.transition).unwrap();
        prop_assert!((q - s.log_q).abs() < 1e-10);
    }

    #[test]
    fn displacement_stays_in_unit_interval(r1 in 0.0..1.0f64, k in 2usize..4, seed in 0u64..100) {
        let perm = RandomStream::new(seed, 0).permutation(k);
        let r = permuted_displacement(k, r1, &perm).unwrap();
        prop_assert_eq!(r.len(), k);
        prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((r[perm.iter().position(|p| *p == 0).unwrap()] - r1).abs() < 1e-15);
    }

    #[test]
    fn conditional_antithetic_keeps_fixed_slot(seed in 0u64..200, k in 2usize..4) {
        let (theta, y, init) = small_problem(12, seed);
        let fo = forward_filter(&y, &theta, AuxKind::Klaassen, init).unwrap();
        let mut rng = RandomStream::new(seed, 2);
        let fixed = sample_path(&fo, &theta.transition, &mut rng).unwrap();
        let slot = rng.index(k);
        let out = conditional_antithetic_sample(&fo, &theta.transition, k, slot, &fixed.path, &mut rng)
            .unwrap();
        prop_assert_eq!(out.len(), k);
        prop_assert_eq!(&out[slot].path, &fixed.path);
        prop_assert!((out[slot].log_q - fixed.log_q).abs() < 1e-10);
    }
}

#[test]
fn unsupported_trial_counts_are_rejected() {
    assert!(permuted_displacement(4, 0.3, &[0, 1, 2, 3]).is_err());
    assert!(permuted_displacement(1, 0.3, &[0]).is_err());
    let mut rng = RandomStream::new(1, 0);
    assert!(antithetic_uniforms(4, 5, &mut rng).is_err());
    let s = StateSampler::new(SamplerKind::Mctm, 4, AuxKind::Klaassen);
    assert!(s.validate().is_err());
    let cumulative3 = StateSampler {
        mctm_weights: Some(MctmWeights::Cumulative),
        ..StateSampler::new(SamplerKind::Mctm, 3, AuxKind::Klaassen)
    };
    assert!(cumulative3.validate().is_err());
}

#[test]
fn antithetic_trials_keep_the_backward_sampling_law() {
    let (theta, y, init) = small_problem(3, 21);
    let fo = forward_filter(&y, &theta, AuxKind::Gray, init).unwrap();
    let law: Vec<f64> = msgarch_core::model::enumerate_paths(2, 3)
        .unwrap()
        .iter()
        .map(|p| proposal_logdensity(p, &fo, &theta.transition).unwrap().exp())
        .collect();
    let mut rng = RandomStream::new(22, 0);
    let n = 100_000;
    for k in [2usize, 3] {
        let mut counts = vec![vec![0usize; 8]; k];
        for _ in 0..n {
            let trials = backward_antithetic_sample(&fo, &theta.transition, k, &mut rng).unwrap();
            for (j, s) in trials.iter().enumerate() {
                counts[j][index(&s.path)] += 1;
            }
        }
        for c in &counts {
            for (hits, q) in c.iter().zip(&law) {
                let se = (q * (1.0 - q) / n as f64).sqrt();
                assert!((*hits as f64 / n as f64 - q).abs() < 4.0 * se, "k {k}: {c:?} vs {law:?}");
            }
        }
    }
}

#[test]
fn backward_sample_is_monotone_in_the_uniforms() {
    let (theta, y, init) = small_problem(20, 3);
    let fo = forward_filter(&y, &theta, AuxKind::Klaassen, init).unwrap();
    let zeros = backward_sample(&fo, &theta.transition, &[0.0; 20]).unwrap();
    let ones = backward_sample(&fo, &theta.transition, &[1.0; 20]).unwrap();
    assert!(zeros.path.as_slice().iter().all(|s| *s == 0));
    assert!(ones.path.as_slice().iter().all(|s| *s == 1));
    assert!(backward_sample(&fo, &theta.transition, &[0.5; 19]).is_err());
}

#[test]
fn single_trial_mtm_and_mtmis_agree() {
    let (theta, y, init) = small_problem(25, 8);
    let fo = forward_filter(&y, &theta, AuxKind::Klaassen, init).unwrap();
    let start = StatePath::constant(25, 0, 2).unwrap();
    let mut a = ChainState {
        theta: theta.clone(),
        path: start.clone(),
        init,
        rng: RandomStream::new(9, 0),
    };
    let mut b = a.clone();
    for _ in 0..200 {
        let ra = mtm_update(&mut a, &y, &fo, 1).unwrap();
        let rb = mtmis_update(&mut b, &y, &fo, 1).unwrap();
        assert_eq!(ra.accepted, rb.accepted);
        assert_eq!(a.path, b.path);
    }
}

// Extensions beyond two trials, checked against the enumerated posterior.
#[test]
fn three_trial_samplers_preserve_the_posterior() {
    let (theta, y, init) = small_problem(3, 12);
    let exact = exact_path_posterior(&y, &theta, init).unwrap();
    let samplers = [
        StateSampler::new(SamplerKind::Mtm, 3, AuxKind::Dueker),
        StateSampler::new(SamplerKind::Mtmis, 3, AuxKind::KlaassenSimple),
        StateSampler::new(SamplerKind::Mctm, 3, AuxKind::Klaassen),
        StateSampler {
            mctm_weights: Some(MctmWeights::Individual),
            ..StateSampler::new(SamplerKind::Mctm, 2, AuxKind::Basic)
        },
    ];
    let n = 60_000;
    for (i, s) in samplers.iter().enumerate() {
        let mut chain = ChainState {
            theta: theta.clone(),
            path: StatePath::constant(3, 1, 2).unwrap(),
            init,
            rng: RandomStream::new(40, i as u64),
        };
        let mut counts = [0usize; 8];
        for _ in 0..n {
            s.update(&mut chain, &y).unwrap();
            counts[index(&chain.path)] += 1;
        }
        for ((_, p), c) in exact.iter().zip(&counts) {
            // iid standard error with a wide multiplier.
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 6.0 * se, "{s:?}: {counts:?}");
        }
    }
}
