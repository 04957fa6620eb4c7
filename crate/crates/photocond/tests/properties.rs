//! Property tests for the numeric primitives, state constructors and the
//! partition identities of the conditional maps.

use num_bigint::BigUint;
use proptest::prelude::*;

use photocond::add::{self, PdcParams};
use photocond::detectors::DetectorModel;
use photocond::numerics::{laguerre, log_binomial, log_factorial, NeumaierSum};
use photocond::states::{
    coherent_distribution, fock_distribution, thermal_distribution,
    FieldStateSpec,
};
use photocond::subtract::{self, BeamSplitterParams};

fn big_factorial(n: u64) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for i in 2..=n {
        acc *= i;
    }
    acc
}

fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 53 {
        let v: u64 = x.try_into().expect("fits u64");
        return (v as f64).ln();
    }
    let shift = bits - 53;
    let mant: u64 = (x >> shift).try_into().expect("53-bit mantissa");
    (mant as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn binomials_match_big_integer_arithmetic(n in 0u64..=500, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let big = big_factorial(n) / (big_factorial(k) * big_factorial(n - k));
        let expected = big_ln(&big);
        // |delta ln| <= 1e-12 is relative error <= ~1e-12 on the value.
        prop_assert!((log_binomial(n, k).ln() - expected).abs() <= 1e-12);
    }

    #[test]
    fn factorials_match_big_integer_arithmetic(n in 0u64..=3000) {
        let expected = big_ln(&big_factorial(n));
        let got = log_factorial(n);
        prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    #[test]
    fn laguerre_matches_the_explicit_series(n in 0u32..=50, x in -50.0f64..=0.0) {
        // L_n(x) = sum_k C(n,k) (-x)^k / k!; all terms positive for x <= 0,
        // so the compensated sum is an independent full-precision route.
        let mut series = NeumaierSum::new();
        let mut term = 1.0;
        for k in 0..=n as u64 {
            if k > 0 {
                term *= (n as u64 - k + 1) as f64 / k as f64 * (-x) / k as f64;
            }
            series.add(term);
        }
        let got = laguerre(n, x).unwrap();
        let expected = series.value();
        prop_assert!(
            (got - expected).abs() <= 1e-10 * expected.abs().max(1.0),
            "L_{}({}) = {} vs {}", n, x, got, expected
        );
    }

    #[test]
    fn laguerre_generating_function(t in -0.5f64..=0.5, x in -10.0f64..=0.0) {
        let mut sum = NeumaierSum::new();
        let mut seq = photocond::numerics::LaguerreSequence::new(x);
        let mut t_pow = 1.0;
        for _ in 0..=200u32 {
            sum.add(seq.next_value().unwrap() * t_pow);
            t_pow *= t;
        }
        let expected = (1.0 - t).recip() * (-x * t / (1.0 - t)).exp();
        prop_assert!(
            (sum.value() - expected).abs() <= 1e-10 * expected.abs().max(1.0),
            "sum = {} vs {}", sum.value(), expected
        );
    }

    #[test]
    fn constructed_distributions_satisfy_their_invariants(
        kind in 0usize..4,
        a in 0.01f64..=40.0,
        b in 0.01f64..=10.0,
        eps_exp in 8.0f64..=14.0,
    ) {
        let epsilon = 10f64.powf(-eps_exp);
        let spec = match kind {
            0 => FieldStateSpec::Coherent { mean: a },
            1 => FieldStateSpec::Thermal { mean: a },
            2 => FieldStateSpec::MixedLight { coherent_mean: a, thermal_mean: b },
            _ => FieldStateSpec::Fock { m: (a as u32).min(30) },
        };
        let dist = spec.build(epsilon).unwrap();
        prop_assert!(dist.probs().iter().all(|&p| p >= 0.0));
        prop_assert!(dist.tail_bound() <= epsilon);
        let total: f64 = dist.probs().iter().sum::<f64>() + dist.tail_bound();
        prop_assert!((total - 1.0).abs() <= 1e-12, "total = {total}");
        // Thermal and coherent constructors reproduce their defining mean;
        // the mixed-light running-sum cutoff only bounds the missing mean
        // mass by the cutoff itself.
        let mean = dist.mean();
        let expected = spec.total_mean();
        let budget = match spec {
            FieldStateSpec::Thermal { .. } | FieldStateSpec::Coherent { .. } => {
                10.0 * epsilon * (1.0 + expected)
            }
            _ => 10.0 * epsilon * (1.0 + expected + dist.cutoff() as f64),
        };
        prop_assert!((mean - expected).abs() <= budget, "mean {mean} vs {expected}");
    }

    #[test]
    fn subtraction_outcomes_partition_unity(
        kind in 0usize..3,
        n0 in 0.05f64..=8.0,
        reflectivity in 0.01f64..=0.9,
    ) {
        let dist = match kind {
            0 => thermal_distribution(n0, 1e-13).unwrap(),
            1 => coherent_distribution(n0, 1e-13).unwrap(),
            _ => fock_distribution((n0 * 3.0) as u32),
        };
        let bs = BeamSplitterParams::from_reflectivity(reflectivity).unwrap();
        let parts = subtract::resolving_click_probabilities(&dist, &bs);
        let total: f64 = parts.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-10, "total = {total}");
    }

    #[test]
    fn addition_outcomes_partition_unity(
        kind in 0usize..3,
        n0 in 0.05f64..=8.0,
        gain in 0.01f64..=0.6,
    ) {
        let dist = match kind {
            0 => thermal_distribution(n0, 1e-13).unwrap(),
            1 => coherent_distribution(n0, 1e-13).unwrap(),
            _ => fock_distribution((n0 * 3.0) as u32),
        };
        let pdc = PdcParams::from_gain(gain).unwrap();
        // Enough thresholds that the remaining negative-binomial mass is
        // far below the tolerance.
        let parts = add::resolving_click_probabilities(&dist, &pdc, 600);
        let total: f64 = parts.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-10, "total = {total}");
    }

    #[test]
    fn nonresolving_subtraction_sums_resolving_outcomes(
        n0 in 0.1f64..=4.0,
        reflectivity in 0.01f64..=0.5,
        k in 1u32..=3,
    ) {
        let dist = thermal_distribution(n0, 1e-13).unwrap();
        let bs = BeamSplitterParams::from_reflectivity(reflectivity).unwrap();
        let nonres = subtract::subtract_exact(
            &dist, &bs, &DetectorModel::nonresolving(k).unwrap()).unwrap();
        let mut summed = vec![0.0; nonres.weights().len()];
        let mut p_total = 0.0;
        for j in k..=dist.cutoff() as u32 {
            let res = subtract::subtract_exact(
                &dist, &bs, &DetectorModel::resolving(j).unwrap()).unwrap();
            p_total += res.probability();
            for (slot, &w) in summed.iter_mut().zip(res.weights()) {
                *slot += w;
            }
        }
        prop_assert!((nonres.probability() - p_total).abs()
            <= 1e-12 * nonres.probability());
        for (&got, &want) in nonres.weights().iter().zip(&summed) {
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-280));
        }
    }

    #[test]
    fn coherent_posteriors_ignore_the_detector(
        n0 in 0.2f64..=4.0,
        reflectivity in 0.01f64..=0.3,
        k in 1u32..=3,
    ) {
        let dist = coherent_distribution(n0, 1e-14).unwrap();
        let bs = BeamSplitterParams::from_reflectivity(reflectivity).unwrap();
        let reference = coherent_distribution(n0 * bs.transmittivity(), 1e-14).unwrap();
        for d in [
            DetectorModel::resolving(k).unwrap(),
            DetectorModel::nonresolving(k).unwrap(),
        ] {
            let record = subtract::subtract_exact(&dist, &bs, &d).unwrap();
            let common = record.posterior().cutoff().min(reference.cutoff());
            for n in 0..=common {
                prop_assert!(
                    (record.posterior().prob(n) - reference.prob(n)).abs() <= 1e-10,
                    "{d}, n = {n}"
                );
            }
        }
    }
}
