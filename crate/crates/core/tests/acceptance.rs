//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its number. Tolerances and thresholds are pinned in code.

use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use greedy_beta::density::{
    acim, acim_truncated, birkhoff_histogram, closed_class_weights, parry_density, phi,
    transfer_apply, transfer_residual, truncated_class_weights, DensityMode, PhiMode,
};
use greedy_beta::intervals::{check_kappa_bounds, fib, golden_kappa_formula, kappa_table};
use greedy_beta::system::{classify_support, golden_system, DigitSet};
use greedy_beta::tower::{build_tower, check_measure_preservation, return_times};
use greedy_beta::{Error, GreedySystem, Scalar, SupportCase};

fn golden() -> GreedySystem {
    golden_system()
}

fn int(n: i64) -> Scalar {
    Scalar::from_int(n)
}

fn ratio(n: i64, d: i64) -> Scalar {
    Scalar::from_ratio(n, d)
}

fn tiny(num: i64, pow10: u32) -> Scalar {
    Scalar::from_big_rational(BigRational::new(
        BigInt::from(num),
        BigInt::from(10u64).pow(pow10),
    ))
}

fn fig_b() -> GreedySystem {
    GreedySystem::new(
        &Scalar::one() + &Scalar::sqrt_of(2).unwrap(),
        vec![int(0), int(1), int(3)],
    )
    .unwrap()
}

fn fig_c() -> GreedySystem {
    GreedySystem::new(Scalar::sqrt_of(7).unwrap(), vec![int(0), int(3), int(7)]).unwrap()
}

fn fig_a() -> GreedySystem {
    GreedySystem::new(Scalar::sqrt_of(3).unwrap(), vec![int(0), int(1), int(3)]).unwrap()
}

#[test]
fn acceptance_01_golden_orbit_fixtures() {
    let start = Instant::now();
    let sys = golden();
    let beta = sys.beta();

    let orbit = sys.orbit(&Scalar::one(), 100).unwrap();
    assert_eq!(orbit.preperiod, Some(0));
    assert_eq!(orbit.period, Some(6));
    let expected = [
        Scalar::one(),
        beta.clone(),
        beta.pow_int(2).unwrap(),
        beta.pow_int(-3).unwrap(),
        beta.pow_int(-2).unwrap(),
        beta.pow_int(-1).unwrap(),
        Scalar::one(),
    ];
    assert_eq!(orbit.values.len(), expected.len());
    for (v, e) in orbit.values.iter().zip(&expected) {
        assert_eq!(v, e);
    }

    let second = &(&int(3) * beta) - &int(4);
    let orbit2 = sys.orbit(&second, 100).unwrap();
    assert_eq!(orbit2.preperiod, Some(3));
    assert_eq!(orbit2.period, Some(6));
    assert_eq!(orbit2.values[1], &int(3) - beta);
    assert_eq!(orbit2.values[2], &(&int(2) * beta) - &Scalar::one());
    assert_eq!(orbit2.values[3], beta.pow_int(-1).unwrap());

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("acceptance 01 golden orbit fixtures: PASS");
}

#[test]
fn acceptance_02_golden_density_bracket() {
    let sys = golden();
    let beta = sys.beta();
    let result = phi(&sys, PhiMode::Closed).unwrap();
    assert_eq!(result.mode, DensityMode::Closed);

    let indicator = &result.indicator;
    assert_eq!(indicator.base, Scalar::one());
    assert_eq!(indicator.support_end, int(3));

    let pow = |k: i64| beta.pow_int(k).unwrap();
    let mut expected = vec![
        (&(&int(3) * beta) - &int(4), pow(-1)),
        (&int(3) - beta, pow(-2)),
        (&(&int(2) * beta) - &Scalar::one(), pow(-3)),
        (Scalar::one(), Scalar::one()),
        (beta.clone(), pow(-1)),
        (pow(2), pow(-2)),
        (pow(-3), pow(-3)),
        (pow(-2), pow(-4)),
        (pow(-1), pow(-3)),
    ];
    expected.sort_by(|a, b| a.0.cmp_total(&b.0));
    assert_eq!(indicator.terms.len(), expected.len());
    for ((end, weight), (e_end, e_weight)) in indicator.terms.iter().zip(&expected) {
        assert_eq!(end, e_end);
        assert_eq!(weight, e_weight);
    }
    // Ten indicator terms in total: the base plus the nine above.
    assert_eq!(indicator.terms.len() + 1, 10);
    println!("acceptance 02 golden density bracket: PASS");
}

#[test]
fn acceptance_03_golden_normalizer() {
    let sys = golden();
    let beta = sys.beta();
    let result = phi(&sys, PhiMode::Closed).unwrap();
    let integral = result.indicator.integral().unwrap();
    let first_form = &int(58) - &(&int(31) * beta);
    let second_form = (&int(27) - &(&int(4) * beta))
        .try_div(&beta.pow_int(2).unwrap())
        .unwrap();
    assert_eq!(integral, first_form);
    assert_eq!(integral, second_form);

    // The reported density carries the normalizer note and the exact
    // scalar in its serialized form.
    let a = acim(&sys).unwrap();
    assert_eq!(a.normalizer, first_form);
    assert!(a.notes.iter().any(|n| n.contains("normalizing constant")));
    let json = serde_json::to_value(&a).unwrap();
    assert!(json["notes"].as_array().is_some_and(|n| !n.is_empty()));
    assert_eq!(json["normalizer"]["d"], 5);
    println!("acceptance 03 golden normalizer: PASS");
}

#[test]
fn acceptance_04_transfer_fixed_point() {
    // Figure 1(d): exact zero residual.
    let start = Instant::now();
    let sys = golden();
    let a = acim(&sys).unwrap();
    assert_eq!(a.mode, DensityMode::Closed);
    let residual = transfer_residual(&sys, &a.density).unwrap();
    assert!(residual.is_zero());
    assert!(start.elapsed().as_secs_f64() < 10.0);

    // Figures 1(a)-(c): truncated mode, residual ≤ 2·tail ≤ 1e-9.
    let budget = tiny(1, 10); // unnormalized tail target 1e-10
    let threshold = tiny(1, 9);
    for (name, sys) in [("a", fig_a()), ("b", fig_b()), ("c", fig_c())] {
        let start = Instant::now();
        let a = acim_truncated(&sys, &budget).unwrap();
        assert!(matches!(a.mode, DensityMode::Truncated { .. }), "fig {name}");
        let residual = transfer_residual(&sys, &a.density).unwrap();
        let bound = &int(2) * &a.tail_sup_normalized;
        assert!(
            residual.le(&bound),
            "fig {name}: residual {} > bound {}",
            residual.to_decimal(15),
            bound.to_decimal(15)
        );
        assert!(
            bound.le(&threshold),
            "fig {name}: bound {} > 1e-9",
            bound.to_decimal(15)
        );
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 10.0, "fig {name} took {elapsed:?}");
    }
    println!("acceptance 04 transfer fixed point: PASS");
}

#[test]
fn acceptance_05_kappa_table() {
    let sys = golden();
    let table = kappa_table(&sys, 18).unwrap();
    assert_eq!(table[0].kappa, 2);
    for row in &table[1..] {
        assert_eq!(
            BigUint::from(row.kappa),
            golden_kappa_formula(row.n),
            "κ({})",
            row.n
        );
    }
    // Spot values of the window formula itself.
    assert_eq!(golden_kappa_formula(4), fib(3) + fib(1));
    assert_eq!(golden_kappa_formula(7), fib(4) + fib(2));
    println!("acceptance 05 kappa table: PASS");
}

#[test]
fn acceptance_06_height_sum() {
    let sys = golden();
    // Closed form: the total height of rectangles whose x-interval is
    // [0, 1) equals 3, i.e. the aggregated weight of the class 1 is 1.
    let cw = closed_class_weights(&sys).unwrap();
    let w1 = cw.weight_of(&Scalar::one()).unwrap();
    let total_height = &int(3) * w1;
    assert_eq!(total_height, int(3));

    // Truncated partial sums at N = 30 lie within 2^16·3/β³⁰ of 3.
    let tw = truncated_class_weights(&sys, 30).unwrap();
    let partial = &int(3) * tw.weight_of(&Scalar::one()).unwrap();
    let diff = &int(3) - &partial;
    assert!(diff.sign() >= 0);
    let bound = (&int(1 << 16) * &int(3))
        .try_div(&sys.beta().pow_int(30).unwrap())
        .unwrap();
    assert!(diff.le(&bound));
    println!("acceptance 06 height sum: PASS");
}

/// Samples an exact quadratic β in (1, 3) and a rational digit pair in
/// the strict classification window.
fn sample_main_case(rng: &mut ChaCha8Rng) -> GreedySystem {
    loop {
        let d = [2i64, 3, 5, 7][rng.random_range(0..4usize)];
        let q = Scalar::from_ratio(rng.random_range(1..5i64), rng.random_range(2..14i64));
        let sqrt_d = Scalar::sqrt_of(d).unwrap();
        let irr = &q * &sqrt_d;
        let p = Scalar::from_ratio(rng.random_range(0..20i64), 10);
        let beta = &p + &irr;
        if !(beta.gt(&ratio(101, 100)) && beta.lt(&ratio(299, 100))) {
            continue;
        }
        let a1 = Scalar::from_ratio(rng.random_range(1..40i64), rng.random_range(1..8i64));
        // Window for a₂/a₁: (max{β−1,1}, min{2,β}).
        let lo = if beta.gt(&int(2)) {
            &beta - &Scalar::one()
        } else {
            Scalar::one()
        };
        let hi = if beta.gt(&int(2)) { int(2) } else { beta.clone() };
        let lo_f = lo.to_f64();
        let hi_f = hi.to_f64();
        let u: f64 = rng.random();
        let rho_f = lo_f + (0.15 + 0.7 * u) * (hi_f - lo_f);
        let rho = Scalar::from_ratio((rho_f * 10000.0).round() as i64, 10000);
        // Verify the strict window exactly; resample on boundary hits.
        if !(rho.gt(&lo) && rho.lt(&hi)) {
            continue;
        }
        let a2 = &a1 * &rho;
        let Ok(sys) = GreedySystem::new(beta, vec![Scalar::zero(), a1, a2]) else {
            continue;
        };
        if sys.support_case() == SupportCase::MainCase && !sys.degenerate_boundary() {
            return sys;
        }
    }
}

#[test]
fn acceptance_07_bounds_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(20260809);
    for trial in 0..100 {
        let sys = sample_main_case(&mut rng);
        let report = check_kappa_bounds(&sys, 15).unwrap();
        assert!(
            report.all_ok(),
            "trial {trial}: β = {}, digits {:?}: {report:?}",
            sys.beta().to_decimal(12),
            sys.digit_set().digits()
        );
        let lemmas = sys.verify_lemmas().unwrap();
        assert!(
            lemmas.all_passed(),
            "trial {trial}: lemma failure: {lemmas:?}"
        );
    }
    println!("acceptance 07 bounds suite: PASS");
}

#[test]
fn acceptance_08_support_classification() {
    let cases: [(&str, Scalar, [i64; 3], SupportCase, Scalar); 4] = [
        (
            "a",
            Scalar::sqrt_of(3).unwrap(),
            [0, 1, 3],
            SupportCase::IsoClassical,
            int(1),
        ),
        (
            "b",
            &Scalar::one() + &Scalar::sqrt_of(2).unwrap(),
            [0, 1, 3],
            SupportCase::BigSecondGap,
            int(2),
        ),
        (
            "c",
            Scalar::sqrt_of(7).unwrap(),
            [0, 3, 7],
            SupportCase::BigSecondGap,
            int(4),
        ),
        ("d", Scalar::golden(), [0, 3, 4], SupportCase::MainCase, int(3)),
    ];
    for (name, beta, digits, expected_case, expected_s) in cases {
        let ds = DigitSet::new(digits.iter().map(|&n| int(n)).collect()).unwrap();
        let (case, s) = classify_support(&beta, &ds).unwrap();
        assert_eq!(case, expected_case, "figure {name}");
        assert_eq!(s, expected_s, "figure {name}");
    }
    println!("acceptance 08 support classification: PASS");
}

#[test]
fn acceptance_09_tower_conservation() {
    let sys = golden();
    let tower = build_tower(&sys, 12).unwrap();
    let report = check_measure_preservation(&tower, 12).unwrap();
    assert!(report.all_ok(), "{report:?}");

    let closed = tower.lambda_closed.clone().expect("closed form");
    let beta = sys.beta();
    let expected = &int(3) * &(&int(58) - &(&int(31) * beta));
    assert_eq!(closed, expected);
    assert!(tower.lambda_truncated.le(&closed));
    let hi = tower.lambda_truncated.try_add(&tower.tail_bound).unwrap();
    assert!(closed.le(&hi));
    println!("acceptance 09 tower conservation: PASS");
}

#[test]
fn acceptance_10_return_times() {
    let sys = golden();
    let tower = build_tower(&sys, 40).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1093);
    let mut checked = 0usize;
    let mut deep = 0usize;
    for _ in 0..1000 {
        let num = rng.random_range(0..3 * 4096i64);
        let x = ratio(num, 4096);
        let expected = return_times(&sys, &x, 1).unwrap()[0];
        match tower.return_to_base(&x, &Scalar::zero()) {
            Ok((steps, _)) => {
                assert_eq!(steps, expected, "x = {num}/4096");
                checked += 1;
            }
            Err(Error::DepthExceeded { .. }) => deep += 1,
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    assert!(checked >= 995, "only {checked} compared, {deep} too deep");

    // Independence of the second coordinate on sampled pairs.
    for k in 0..50i64 {
        let x = ratio(3 * k + 1, 64);
        if !x.lt(sys.support_end()) {
            break;
        }
        let (r_a, _) = tower.return_to_base(&x, &ratio(1, 9)).unwrap();
        let (r_b, _) = tower.return_to_base(&x, &ratio(8, 3)).unwrap();
        assert_eq!(r_a, r_b);
    }
    println!("acceptance 10 return times: PASS");
}

#[test]
fn acceptance_11_parry_oracle() {
    let beta = Scalar::golden();
    let classical = GreedySystem::classical(beta.clone()).unwrap();
    let a = acim(&classical).unwrap();
    assert_eq!(a.mode, DensityMode::Closed);

    // Two-step oracle: weights 1 on [0,1) and 1/β on [0,1/β),
    // normalizer 3 − β.
    let parry = parry_density(&beta).unwrap();
    assert!(a.density.sup_distance(&parry.density).unwrap().is_zero());
    let norm = &int(3) - &beta;
    assert_eq!(parry.normalizer, norm);
    let lo = a.density.value_at(&ratio(1, 2)).unwrap();
    assert_eq!(*lo, beta.try_div(&norm).unwrap());
    let residual = transfer_residual(&classical, &a.density).unwrap();
    assert!(residual.is_zero());

    // Integer β = 2: uniform density.
    let two = GreedySystem::classical(int(2)).unwrap();
    let a2 = acim(&two).unwrap();
    assert_eq!(a2.density.values(), &[Scalar::one()]);
    let lf = transfer_apply(&two, &a2.density).unwrap();
    assert!(lf.sup_distance(&a2.density).unwrap().is_zero());
    println!("acceptance 11 parry oracle: PASS");
}

#[test]
fn acceptance_12_birkhoff_statistics() {
    let start = Instant::now();
    let sys = golden();
    for seed in [11u64, 222, 3333] {
        let result = birkhoff_histogram(&sys, None, 1_000_000, 64, seed).unwrap();
        assert!(
            result.l1_distance < 0.02,
            "seed {seed}: L1 = {}",
            result.l1_distance
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("acceptance 12 birkhoff statistics: PASS");
}
