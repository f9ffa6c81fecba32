//! Property tests for the scalar field and the greedy expansion laws.

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use greedy_beta::exactnum::QuadExt;
use greedy_beta::system::{evaluate_word, golden_system};
use greedy_beta::{GreedySystem, Scalar};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn quad_strategy() -> impl Strategy<Value = QuadExt> {
    (
        -50i64..50,
        1i64..20,
        -50i64..50,
        1i64..20,
        prop::sample::select(vec![0i64, 2, 3, 5, 7]),
    )
        .prop_map(|(pn, pd, qn, qd, d)| QuadExt::new(rat(pn, pd), rat(qn, qd), d).unwrap())
}

/// Parses the output of `to_decimal` back into an exact rational.
fn parse_decimal(s: &str) -> BigRational {
    let negative = s.starts_with('-');
    let body = s.trim_start_matches('-');
    let (int_part, frac_part) = body.split_once('.').unwrap();
    let k = frac_part.len() as u32;
    let scale = BigInt::from(10u32).pow(k);
    let num: BigInt = format!("{int_part}{frac_part}").parse().unwrap();
    let v = BigRational::new(num, scale);
    if negative {
        -v
    } else {
        v
    }
}

proptest! {
    #[test]
    fn field_axioms(a in quad_strategy(), b in quad_strategy(), c in quad_strategy()) {
        // Force a common radicand by reusing a's.
        let d = a.radicand() as i64;
        let b = QuadExt::new(b.rational_part().clone(), b.radical_part().clone(), d).unwrap();
        let c = QuadExt::new(c.rational_part().clone(), c.radical_part().clone(), d).unwrap();

        let ab_c = a.try_add(&b).unwrap().try_add(&c).unwrap();
        let a_bc = a.try_add(&b.try_add(&c).unwrap()).unwrap();
        prop_assert_eq!(ab_c, a_bc);

        let lhs = a.try_mul(&b.try_mul(&c).unwrap()).unwrap();
        let rhs = a.try_mul(&b).unwrap().try_mul(&c).unwrap();
        prop_assert_eq!(lhs, rhs);

        let dist_l = a.try_mul(&b.try_add(&c).unwrap()).unwrap();
        let dist_r = a.try_mul(&b).unwrap().try_add(&a.try_mul(&c).unwrap()).unwrap();
        prop_assert_eq!(dist_l, dist_r);

        if !a.is_zero() {
            let inv = QuadExt::one().try_div(&a).unwrap();
            prop_assert_eq!(a.try_mul(&inv).unwrap(), QuadExt::one());
        }
    }

    #[test]
    fn power_additivity(x in quad_strategy(), a in -6i64..7, b in -6i64..7) {
        prop_assume!(!x.is_zero());
        let lhs = x.pow_int(a + b).unwrap();
        let rhs = x.pow_int(a).unwrap().try_mul(&x.pow_int(b).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn canonicalization_idempotent(x in quad_strategy()) {
        let rebuilt = QuadExt::new(
            x.rational_part().clone(),
            x.radical_part().clone(),
            x.radicand() as i64,
        )
        .unwrap();
        prop_assert_eq!(&rebuilt, &x);
        prop_assert_eq!(rebuilt.to_decimal(30), x.to_decimal(30));
    }

    #[test]
    fn compare_agrees_with_long_decimals(x in quad_strategy(), y in quad_strategy()) {
        let d = x.radicand() as i64;
        let y = QuadExt::new(y.rational_part().clone(), y.radical_part().clone(), d).unwrap();
        let diff = x.try_sub(&y).unwrap();
        // |x − y| > 10^-100 ⇒ 200-digit decimals order identically.
        let tiny = QuadExt::new(
            BigRational::new(BigInt::from(1), BigInt::from(10u32).pow(100)),
            rat(0, 1),
            0,
        )
        .unwrap();
        let abs = if diff.sign() < 0 { diff.neg_value() } else { diff };
        if abs.try_cmp(&tiny).unwrap() == std::cmp::Ordering::Greater {
            let dx = parse_decimal(&x.to_decimal(200));
            let dy = parse_decimal(&y.to_decimal(200));
            prop_assert_eq!(dx.cmp(&dy), x.try_cmp(&y).unwrap());
        }
    }

    #[test]
    fn decimal_is_correctly_rounded(x in quad_strategy(), digits in 1usize..40) {
        let printed = parse_decimal(&x.to_decimal(digits));
        let err = x
            .try_sub(&QuadExt::new(printed, rat(0, 1), 0).unwrap())
            .unwrap();
        let abs = if err.sign() < 0 { err.neg_value() } else { err };
        let half_ulp = QuadExt::new(
            BigRational::new(BigInt::from(1), BigInt::from(2) * BigInt::from(10u32).pow(digits as u32)),
            rat(0, 1),
            0,
        )
        .unwrap();
        prop_assert!(abs.try_cmp(&half_ulp).unwrap() != std::cmp::Ordering::Greater);
    }
}

fn figure_systems() -> Vec<GreedySystem> {
    let int = Scalar::from_int;
    vec![
        GreedySystem::new(Scalar::sqrt_of(3).unwrap(), vec![int(0), int(1), int(3)]).unwrap(),
        GreedySystem::new(
            &Scalar::one() + &Scalar::sqrt_of(2).unwrap(),
            vec![int(0), int(1), int(3)],
        )
        .unwrap(),
        GreedySystem::new(Scalar::sqrt_of(7).unwrap(), vec![int(0), int(3), int(7)]).unwrap(),
        golden_system(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_identity_and_maximality(num in 0i64..256, which in 0usize..4, n in 1usize..10) {
        let sys = &figure_systems()[which];
        let x = Scalar::from_ratio(num, 64);
        prop_assume!(x.lt(sys.support_end()));

        // x = Σ bᵢ/βⁱ + Tⁿx/βⁿ exactly.
        let word = sys.expand(&x, n).unwrap();
        let partial = evaluate_word(sys.beta(), &word, None).unwrap();
        let mut tn = x.clone();
        for _ in 0..n {
            tn = sys.step(&tn).unwrap();
        }
        let back = &partial + &tn.try_div(&sys.beta().pow_int(n as i64).unwrap()).unwrap();
        prop_assert_eq!(back, x.clone());

        // Maximality: bumping any digit to a larger one overshoots x.
        let digits = sys.digit_set().digits();
        let mut prefix = Scalar::zero();
        let mut power = Scalar::one();
        let beta_inv = sys.beta().recip().unwrap();
        for symbol in &word.symbols {
            power = &power * &beta_inv;
            for larger in digits.iter().filter(|a| a.gt(symbol)) {
                let bumped = &(&prefix + &(larger * &power));
                prop_assert!(bumped.gt(&x));
            }
            prefix = &prefix + &(symbol * &power);
        }
    }

    #[test]
    fn fullness_iff_full_length(which in 0usize..4, seed in 0u64..1000) {
        use greedy_beta::intervals::{refine_to, word_interval};
        let sys = &figure_systems()[which];
        let refinement = refine_to(sys, 7).unwrap();
        let mut all: Vec<_> = refinement
            .levels
            .iter()
            .flat_map(|l| l.b.iter().chain(l.full.iter()))
            .collect();
        prop_assume!(!all.is_empty());
        let pick = (seed as usize) % all.len();
        let fi = all.swap_remove(pick);
        // Recompute independently from the word.
        let again = word_interval(sys, &fi.word).unwrap();
        prop_assert_eq!(again.full, fi.full);
        let len = again.right.try_sub(&again.left).unwrap();
        let lifted = len
            .try_mul(&sys.beta().pow_int(fi.word.len() as i64).unwrap())
            .unwrap();
        if fi.full {
            prop_assert_eq!(&lifted, sys.support_end());
        } else {
            prop_assert!(lifted.lt(sys.support_end()));
        }
    }
}
