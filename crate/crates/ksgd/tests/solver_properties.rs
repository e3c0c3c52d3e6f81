//! Property tests for the solver state machine and its helpers.

use ksgd::baselines::{batch_least_squares, SgdSchedule};
use ksgd::linalg::{rel_spectral_error, spectral_norm_sym, sym_eigenvalues};
use ksgd::models::{haar_features, mrs, WaveletConfig};
use ksgd::solver::{inverse_covariance_oracle, KsgdState, Observation};
use ksgd::tuning::{phi_clamp, soft_threshold_forget, AdaptiveParams, TuningStrategy};
use nalgebra::DVector;
use proptest::prelude::*;

fn stream_strategy(
    max_dim: usize,
    max_len: usize,
) -> impl Strategy<Value = (usize, Vec<(Vec<f64>, f64, f64)>)> {
    (1..=max_dim).prop_flat_map(move |n| {
        let step = (
            prop::collection::vec(-2.0..2.0f64, n),
            -2.0..2.0f64,
            // log-uniform noise scale over six decades
            (-3.0..3.0f64).prop_map(|e| 10f64.powf(e)),
        );
        (Just(n), prop::collection::vec(step, 1..=max_len))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn recursion_matches_direct_inversion((n, steps) in stream_strategy(6, 40)) {
        let mut state = KsgdState::new(n).unwrap();
        let mut seen = Vec::new();
        let mut scales = Vec::new();
        for (x, y, g2) in steps {
            let obs = Observation::new(DVector::from_vec(x), y).unwrap();
            state.step_in_place(&obs, g2).unwrap();
            seen.push(obs);
            scales.push(g2);
        }
        let oracle = inverse_covariance_oracle(n, &seen, &scales).unwrap();
        prop_assert!(rel_spectral_error(state.cov(), &oracle) <= 1e-8);
    }

    #[test]
    fn scaling_matrix_stays_spd_with_shrinking_spectrum((n, steps) in stream_strategy(6, 40)) {
        let mut state = KsgdState::new(n).unwrap();
        let mut prev_max = 1.0f64;
        for (x, y, g2) in steps {
            let obs = Observation::new(DVector::from_vec(x), y).unwrap();
            state.step_in_place(&obs, g2).unwrap();

            let asym = 0.5 * (state.cov() - state.cov().transpose());
            prop_assert!(
                spectral_norm_sym(&asym) <= 1e-10 * spectral_norm_sym(state.cov())
            );

            let eigs = sym_eigenvalues(state.cov());
            let min = eigs[0];
            let max = eigs[eigs.len() - 1];
            prop_assert!(min > 0.0, "lost positive definiteness: {min}");
            prop_assert!(max <= 1.0 + 1e-12, "eigenvalue above identity start: {max}");
            // smallest eigenvalue of the inverse is nondecreasing, i.e. the
            // largest eigenvalue of the matrix never grows
            prop_assert!(max <= prev_max * (1.0 + 1e-12));
            prev_max = max;
        }
    }

    #[test]
    fn noiseless_error_is_scaled_initial_error(
        (n, steps) in stream_strategy(5, 30),
        beta_seed in prop::collection::vec(-2.0..2.0f64, 10),
        init_seed in prop::collection::vec(-2.0..2.0f64, 10),
    ) {
        let beta_star = DVector::from_vec(beta_seed[..n].to_vec());
        let beta0 = DVector::from_vec(init_seed[..n].to_vec());
        let mut state = KsgdState::with_beta(beta0.clone()).unwrap();
        for (x, _, g2) in steps {
            let x = DVector::from_vec(x);
            let y = beta_star.dot(&x);
            state.step_in_place(&Observation { x, y }, g2).unwrap();
        }
        let predicted = state.cov() * (&beta0 - &beta_star);
        let actual = state.beta() - &beta_star;
        for i in 0..n {
            prop_assert!((predicted[i] - actual[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_feature_rows_are_neutral(
        (n, steps) in stream_strategy(4, 20),
        zero_y in -5.0..5.0f64,
    ) {
        let mut with_zeros = KsgdState::new(n).unwrap();
        let mut without = KsgdState::new(n).unwrap();
        for (x, y, g2) in steps {
            let obs = Observation::new(DVector::from_vec(x), y).unwrap();
            let zero = Observation {
                x: DVector::zeros(n),
                y: zero_y,
            };
            with_zeros.step_in_place(&zero, g2).unwrap();
            with_zeros.step_in_place(&obs, g2).unwrap();
            without.step_in_place(&obs, g2).unwrap();
        }
        prop_assert_eq!(with_zeros.beta(), without.beta());
        prop_assert_eq!(with_zeros.cov(), without.cov());
    }

    #[test]
    fn adaptive_scale_respects_its_bounds(
        lower_exp in -3.0..0.0f64,
        width_exp in 0.0..6.0f64,
        threshold in -5.0..20.0f64,
        delay in 0.0..3.0f64,
        inputs in prop::collection::vec(((-1e6..1e6f64), (0.0..50.0f64)), 1..80),
    ) {
        let lower = 10f64.powf(lower_exp);
        let upper = lower * 10f64.powf(width_exp);
        let params = AdaptiveParams::new(lower, upper, threshold, delay).unwrap();
        let mut strategy = TuningStrategy::adaptive(params);
        for (k, (residual, trace)) in inputs.into_iter().enumerate() {
            let g2 = strategy
                .next_gamma2(k as u64, trace, Some(residual))
                .unwrap();
            prop_assert!(g2 >= lower && g2 <= upper);
            if let TuningStrategy::AdaptiveSoftThreshold(p) = &strategy {
                if !p.active {
                    prop_assert_eq!(g2, upper);
                }
            }
        }
    }

    #[test]
    fn forgetting_factor_is_monotone_and_bounded(
        t1 in -1e3..1e3f64,
        gap in 0.0..1e3f64,
        pivot in -100.0..100.0f64,
    ) {
        let f1 = soft_threshold_forget(t1, pivot);
        let f2 = soft_threshold_forget(t1 + gap, pivot);
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert!((0.0..=1.0).contains(&f2));
        prop_assert!(f2 <= f1);
    }

    #[test]
    fn clamp_lands_in_interval_and_is_idempotent(
        x in -1e9..1e9f64,
        lower in 0.001..10.0f64,
        width in 0.0..100.0f64,
    ) {
        let upper = lower + width;
        let c = phi_clamp(x, lower, upper).unwrap();
        prop_assert!(c >= lower && c <= upper);
        prop_assert_eq!(phi_clamp(c, lower, upper).unwrap(), c);
    }

    #[test]
    fn wavelet_features_are_signs_of_the_right_length(
        raw in prop::collection::vec(0.0..=1.0f64, 1..6),
        res_seed in prop::collection::vec(1u32..8, 6),
        intercept in any::<bool>(),
    ) {
        let resolutions = res_seed[..raw.len()].to_vec();
        let cfg = WaveletConfig::new(resolutions.clone(), intercept).unwrap();
        let f = haar_features(&raw, &cfg).unwrap();
        let expected = usize::from(intercept)
            + resolutions.iter().map(|&r| r as usize).sum::<usize>();
        prop_assert_eq!(f.len(), expected);
        prop_assert_eq!(cfg.output_dim(), expected);
        for &v in f.iter() {
            prop_assert!(v == 1.0 || v == -1.0);
        }
        if intercept {
            prop_assert_eq!(f[0], 1.0);
        }
    }

    #[test]
    fn learning_rate_is_nonnegative_and_decays_after_the_plateau(
        p in 0.01..=1.0f64,
        c1 in 0.0..2.0f64,
        c2 in 0.0..1e4f64,
        c3 in 0.0..2.0f64,
        k in 1u64..100_000,
    ) {
        let sched = SgdSchedule::new(p, c1, c2, c3).unwrap();
        let eta = sched.eta(k);
        prop_assert!(eta >= 0.0 && eta.is_finite());
        if (k as f64) <= c2 {
            prop_assert_eq!(eta, c1);
        } else {
            prop_assert!(sched.eta(k + 1) <= eta);
        }
    }

    #[test]
    fn least_squares_beats_perturbations(
        (n, steps) in stream_strategy(4, 30),
        direction_seed in prop::collection::vec(-1.0..1.0f64, 4),
        scale in 0.001..0.5f64,
    ) {
        // need more rows than columns for a meaningful fit
        prop_assume!(steps.len() >= n + 2);
        let data: Vec<Observation> = steps
            .into_iter()
            .map(|(x, y, _)| Observation::new(DVector::from_vec(x), y).unwrap())
            .collect();
        let fit = batch_least_squares(data.iter().cloned().map(Ok)).unwrap();
        let best = mrs(&fit.beta, &data).unwrap();
        let mut direction = DVector::from_vec(direction_seed[..n].to_vec());
        if direction.norm() == 0.0 {
            direction[0] = 1.0;
        }
        let perturbed = &fit.beta + direction * scale;
        prop_assert!(best <= mrs(&perturbed, &data).unwrap() + 1e-12);
    }
}
