use bellfrac_core::bell::{
    bundled, chsh_horodecki, chsh_horodecki_max, correlation_matrix, parse_inequality, serialize_inequality, Relabeling,
};
use bellfrac_core::entanglement::concurrence2;
use bellfrac_core::expdata::{mix_counts, synthetic_dataset};
use bellfrac_core::fits;
use bellfrac_core::nlfrac::{pv_from_distribution, pv_threshold_sensitivity, sample_settings, ViolationSamples};
use bellfrac_core::qstate::{apply_local_unitaries, basis_state, haar_unitary, random_bloch_vector, werner_like};
use bellfrac_core::rng::{substream, Purpose};
use bellfrac_core::{behavior_from_state, evaluate, BellInequality, DensityMatrix, PvEstimate};
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_state(n_qubits: usize, seed: u64) -> DensityMatrix {
    let mut rng = substream(seed, Purpose::Custom(11), n_qubits as u64);
    let dim = 1 << n_qubits;
    let g = DMatrix::from_fn(dim, dim, |_, _| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(n_qubits, m.unscale(tr)).unwrap()
}

fn integer_inequality(n: usize, coeffs: &[i8], bound: u8) -> Option<BellInequality> {
    let c: Vec<f64> = coeffs.iter().take(1 << (2 * n)).map(|&x| x as f64).collect();
    BellInequality::new(n, c, bound as f64 + 1.0, "random").ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quantum_behaviors_are_normalized_and_nonsignaling(n in 2usize..=3, seed: u64, k: u64) {
        let rho = random_state(n, seed);
        let b = behavior_from_state(&rho, &sample_settings(seed, k, n)).unwrap();
        prop_assert!(b.normalization_error() < 1e-12);
        prop_assert!(b.signaling_error() < 1e-12);
    }

    #[test]
    fn evaluation_is_affine_in_the_behavior(seed: u64, lambda in 0.0f64..=1.0) {
        let ineq = bundled("svetlichny").unwrap();
        let m = sample_settings(seed, 0, 3);
        let b1 = behavior_from_state(&random_state(3, seed), &m).unwrap();
        let b2 = behavior_from_state(&random_state(3, seed ^ 1), &m).unwrap();
        let mixed = evaluate(&ineq, &b1.mix(&b2, lambda).unwrap()).unwrap();
        let split = lambda * evaluate(&ineq, &b1).unwrap() + (1.0 - lambda) * evaluate(&ineq, &b2).unwrap();
        prop_assert!((mixed - split).abs() < 1e-12);
    }

    #[test]
    fn full_correlation_values_scale_with_visibility(
        theta in 0.01f64..=std::f64::consts::FRAC_PI_4, v in 0.0f64..=1.0, seed: u64, name in 0usize..2,
    ) {
        let ineq = bundled(["svetlichny", "mermin"][name]).unwrap().normalized();
        let m = sample_settings(seed, 0, 3);
        let pure = behavior_from_state(&werner_like(theta, 1.0, 3).unwrap(), &m).unwrap();
        let noisy = behavior_from_state(&werner_like(theta, v, 3).unwrap(), &m).unwrap();
        prop_assert!((evaluate(&ineq, &noisy).unwrap() - v * evaluate(&ineq, &pure).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn relabeling_preserves_values(n in 2usize..=3, seed: u64, coeffs in prop::collection::vec(-3i8..=3, 64), bound in 0u8..5) {
        prop_assume!(coeffs.iter().take(1 << (2 * n)).any(|&c| c != 0));
        let ineq = integer_inequality(n, &coeffs, bound).unwrap();
        let b = behavior_from_state(&random_state(n, seed), &sample_settings(seed, 1, n)).unwrap();
        let gens = Relabeling::generators(n);
        let mut rng = substream(seed, Purpose::Custom(12), 0);
        let (mut moved_ineq, mut moved_b) = (ineq.clone(), b.clone());
        for _ in 0..rng.random_range(1..12) {
            let g = &gens[rng.random_range(0..gens.len())];
            moved_ineq = moved_ineq.relabeled(g).unwrap();
            moved_b = g.apply_behavior(&moved_b).unwrap();
        }
        let moved = evaluate(&moved_ineq, &moved_b).unwrap();
        prop_assert!((moved - evaluate(&ineq, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn chsh_values_never_exceed_the_horodecki_maximum(seed: u64) {
        let rho = random_state(2, seed);
        let r = correlation_matrix(&rho).unwrap();
        let mut rng = substream(seed, Purpose::Custom(13), 0);
        let [a0, a1, b0, b1] = std::array::from_fn(|_| random_bloch_vector(&mut rng));
        prop_assert!(chsh_horodecki(&r, &a0, &a1, &b0, &b1) <= chsh_horodecki_max(&r) + 1e-12);
    }

    #[test]
    fn concurrence_is_local_unitary_invariant(seed: u64) {
        let rho = random_state(2, seed).mix(&werner_like(0.3, 1.0, 2).unwrap(), 0.3).unwrap();
        let mut rng = substream(seed, Purpose::LocalUnitaries, 0);
        let us = [haar_unitary(&mut rng), haar_unitary(&mut rng)];
        let rotated = apply_local_unitaries(&rho, &us).unwrap();
        prop_assert!((concurrence2(&rotated).unwrap() - concurrence2(&rho).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn inequality_text_round_trips(n in 2usize..=3, coeffs in prop::collection::vec(-9i8..=9, 64), bound in 0u8..20) {
        prop_assume!(coeffs.iter().take(1 << (2 * n)).any(|&c| c != 0));
        let ineq = integer_inequality(n, &coeffs, bound).unwrap();
        let text = serialize_inequality(&ineq);
        let back = parse_inequality(&text).unwrap();
        prop_assert_eq!(&back, &ineq);
        prop_assert_eq!(serialize_inequality(&back), text);
    }

    #[test]
    fn distribution_thresholds_are_monotone(values in prop::collection::vec(0.0f64..1.6, 1..200), v1 in 0.05f64..=1.0, v2 in 0.05f64..=1.0, eps in 0.0f64..0.1) {
        let s = ViolationSamples { values, state_tag: "t".into(), seed: 0, set_tag: "x".into() };
        let (lo, hi) = (v1.min(v2), v1.max(v2));
        prop_assert!(pv_from_distribution(&s, lo).unwrap() <= pv_from_distribution(&s, hi).unwrap());
        let p = pv_from_distribution(&s, hi).unwrap();
        let (a, b) = pv_threshold_sensitivity(&s, hi, eps).unwrap();
        prop_assert!(a <= p && p <= b);
    }

    #[test]
    fn count_mixing_is_affine(seed in 0u64..1000, vc in 0.0f64..=1.0) {
        let state = synthetic_dataset(&random_state(3, seed), 2, seed, 1000.0, "s").unwrap();
        let basis: Vec<_> = (0..8)
            .map(|k| synthetic_dataset(&basis_state(&format!("{k:03b}")).unwrap().projector(), 2, seed, 1000.0, "b").unwrap())
            .collect();
        let one = mix_counts(&state, &basis, 1.0).unwrap();
        let zero = mix_counts(&state, &basis, 0.0).unwrap();
        let mixed = mix_counts(&state, &basis, vc).unwrap();
        for ((m, a), b) in mixed.records.iter().zip(&one.records).zip(&zero.records) {
            for k in 0..8 {
                prop_assert!((m.counts[k] - (vc * a.counts[k] + (1.0 - vc) * b.counts[k])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn concurrence_fits_stay_in_unit_interval(pv in 0.0f64..100.0) {
        for f in [fits::c_lower_2q, fits::c_mems_fit, fits::c_phn3_fit, fits::c_gme_pure3_fit, fits::c_gme_45_fit, fits::c_gme_35_fit] {
            let c = f(pv).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn estimate_json_round_trips(violations in 0u64..1000, extra in 1u64..1000) {
        let e = PvEstimate::from_counts(violations, violations + extra, "set;lower-bound");
        prop_assert_eq!(PvEstimate::from_json(&e.to_json()).unwrap(), e);
    }
}
