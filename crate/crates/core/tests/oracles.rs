//! Independent oracles: closed forms computed by hand or by a second route.

use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use quasiwalk::boundary::{cylinder_measure, kernel_weights, martingale_sigma, radon_nikodym, stationarity_exact};
use quasiwalk::harmonic::{biharmonic_approx, distortion, CesaroSampler};
use quasiwalk::montecarlo::{ks_statistic, Moments};
use quasiwalk::{Alphabet, ExactMeasure, FiniteMeasure, GroupElement, Measure, Quasimorphism, Rational, Scalar};
use statrs::distribution::{ContinuousCDF, Normal};

fn f2() -> Alphabet {
    Alphabet::free(2)
}

fn word(a: &Alphabet, text: &str) -> GroupElement {
    a.parse(text).unwrap()
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn simple_walk_powers_are_binomial() {
    let z = Alphabet::free_abelian(1);
    let mu = ExactMeasure::nearest_neighbor(z.clone());
    let n = 9;
    let powers = mu.convolve_power(n, 0.0, 1 << 20).unwrap();
    for k in 0..=n as u64 {
        let g = z.power(&z.generator(0), 2 * k as i64 - n as i64);
        let expected = Rational::new((binomial(n as u64, k) as i64).into(), (1i64 << n).into());
        assert_eq!(powers.weight(&g), expected, "k = {k}");
    }
    assert_eq!(powers.total_mass(), Rational::one());
}

#[test]
fn brooks_counts_by_hand() {
    let a = f2();
    let phi = Quasimorphism::brooks(a.clone(), &word(&a, "a b"), None).unwrap();
    for (text, value) in [
        ("e", 0.0),
        ("a b", 1.0),
        ("b^-1 a^-1", -1.0),
        ("a b a b", 2.0),
        ("a b a", 1.0),
        ("a b b^-1", 0.0),
        ("b a", 0.0),
        ("a b a^-1 b^-1", 1.0),
        ("b^-1 a^-1 a b", 0.0),
    ] {
        assert_eq!(phi.eval(&word(&a, text)), value, "{text}");
    }
}

#[test]
fn homogenized_brooks_on_powers() {
    let a = f2();
    let phi = Quasimorphism::brooks(a.clone(), &word(&a, "a b"), None).unwrap();
    let hat = phi.homogenize_limit().unwrap();
    // (ab)^n contains n copies of ab, (ba)^n only n - 1.
    assert!((hat.eval(&word(&a, "a b")) - 1.0).abs() < 1e-9);
    assert!((hat.eval(&word(&a, "b a")) - 1.0).abs() < 1e-9);
    assert!(hat.eval(&word(&a, "a")).abs() < 1e-9);
    assert!((hat.eval(&word(&a, "a b a b")) - 2.0).abs() < 1e-9);
}

#[test]
fn biased_walk_drift_is_exact() {
    let z = Alphabet::free_abelian(1);
    let t = z.generator(0);
    let mu = ExactMeasure::new(z.clone(), vec![(t.clone(), Rational::new(3.into(), 4.into())), (t.inverse(), Rational::new(1.into(), 4.into()))]).unwrap();
    let phi = Quasimorphism::hom(z, vec![1.0]).unwrap();
    let powers = mu.powers(12, 0.0, 1 << 20).unwrap();
    let d = distortion(&phi, &powers).unwrap();
    for (n, a) in d.a.iter().enumerate() {
        assert_eq!(*a, n as f64 / 2.0);
    }
    assert_eq!(d.ell, 0.5);
    assert_eq!(d.max_subadditivity_gap(), 0.0);
}

#[test]
fn residual_identity_is_exact_in_rationals() {
    let a = f2();
    let phi = Quasimorphism::brooks(a.clone(), &word(&a, "a b"), Some(1.0)).unwrap();
    let (hat, _) = phi.homogenize(4).unwrap();
    let eval = a.enumerate_ball(2, 1000).unwrap();
    let exact = biharmonic_approx(&hat, &ExactMeasure::nearest_neighbor(a.clone()), 5, &eval, 0.0, 1 << 22).unwrap();
    let float = biharmonic_approx(&hat, &Measure::nearest_neighbor(a.clone()), 5, &eval, 0.0, 1 << 22).unwrap();
    let bound = exact.residual_bound();
    for (r, s) in exact.residuals().unwrap().iter().zip(float.residuals().unwrap()) {
        assert_eq!(Some(&r.right), r.predicted_right.as_ref(), "g = {}", a.format(&r.g));
        assert!(r.right.abs().to_f64_value() <= bound);
        assert!((r.right.to_f64_value() - s.right).abs() < 1e-9);
        assert!((r.left.to_f64_value() - s.left).abs() < 1e-9);
    }
}

#[test]
fn ks_of_exact_quantiles() {
    let normal = Normal::new(0.0, 2.0).unwrap();
    let n = 500;
    let xs: Vec<f64> = (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
    let ks = ks_statistic(&xs, 2.0).unwrap();
    // inverse_cdf is accurate to about 1e-10
    assert!((ks - 0.5 / n as f64).abs() < 1e-9, "{ks}");
}

#[test]
fn simple_walk_martingale_variance_is_one() {
    let z = Alphabet::free_abelian(1);
    let mu = Measure::nearest_neighbor(z.clone());
    let phi = Quasimorphism::hom(z, vec![1.0]).unwrap();
    let cesaro = CesaroSampler::exact_for_hom(phi, mu).unwrap();
    let report = martingale_sigma(&cesaro, 16, 400, 0.0, 5).unwrap();
    assert!((report.sigma2_hat - 1.0).abs() < 1e-12);
    assert_eq!(report.sigma2_se, 0.0);
}

#[test]
fn cylinders_partition_the_boundary() {
    let a = f2();
    for len in 1..=4 {
        let total: Rational = a
            .enumerate_ball(len, 10_000)
            .unwrap()
            .iter()
            .filter(|w| w.len() == len)
            .map(|w| cylinder_measure(2, w))
            .fold(Rational::zero(), |acc, m| acc + m);
        assert_eq!(total, Rational::one(), "length {len}");
    }
}

#[test]
fn stationarity_detects_the_wrong_measure() {
    let a = f2();
    let uniform = ExactMeasure::nearest_neighbor(a.clone());
    let lopsided = ExactMeasure::new(
        a.clone(),
        ["a", "a^-1", "b", "b^-1"]
            .iter()
            .zip([1, 1, 1, 3])
            .map(|(t, w)| (word(&a, t), Rational::new(w.into(), 6.into())))
            .collect(),
    )
    .unwrap();
    let mut worst = Rational::zero();
    for w in a.enumerate_ball(3, 1000).unwrap() {
        assert_eq!(stationarity_exact(&uniform, &w).unwrap(), Rational::zero());
        let r = stationarity_exact(&lopsided, &w).unwrap().abs();
        if r > worst {
            worst = r;
        }
    }
    assert!(worst > Rational::zero());
}

#[test]
fn radon_nikodym_integrates_to_one() {
    let a = f2();
    let len = 5;
    let cylinders: Vec<GroupElement> = a.enumerate_ball(len, 10_000).unwrap().into_iter().filter(|w| w.len() == len).collect();
    for h in a.enumerate_ball(2, 100).unwrap() {
        let total: f64 = cylinders
            .iter()
            .map(|w| radon_nikodym(2, &h, w) * cylinder_measure(2, w).to_f64_value())
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "h = {}: {total}", a.format(&h));
    }
}

#[test]
fn kernel_weights_are_a_decreasing_distribution() {
    let w = kernel_weights(64);
    assert_eq!(w.len(), 63);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w.windows(2).all(|p| p[0] > p[1]));
}

fn any_word(max_len: usize) -> impl Strategy<Value = Vec<(usize, bool)>> {
    proptest::collection::vec((0usize..2, any::<bool>()), 0..max_len)
}

fn build(a: &Alphabet, raw: &[(usize, bool)]) -> GroupElement {
    raw.iter().fold(a.identity(), |g, &(i, inv)| {
        let s = a.generator(i);
        g.mul(&if inv { s.inverse() } else { s })
    })
}

proptest! {
    #[test]
    fn free_group_axioms(x in any_word(12), y in any_word(12), z in any_word(12)) {
        let a = f2();
        let (g, h, k) = (build(&a, &x), build(&a, &y), build(&a, &z));
        prop_assert_eq!(g.mul(&h).mul(&k), g.mul(&h.mul(&k)));
        prop_assert!(g.mul(&g.inverse()).is_identity());
        prop_assert!(g.mul(&h).len() <= g.len() + h.len());
        prop_assert_eq!(a.parse(&a.format(&g)).unwrap(), g);
    }

    #[test]
    fn brooks_defect_is_at_most_one(x in any_word(16), y in any_word(16)) {
        let a = f2();
        let phi = Quasimorphism::brooks(a.clone(), &word(&a, "a b"), None).unwrap();
        let (g, h) = (build(&a, &x), build(&a, &y));
        prop_assert!(phi.differential(&g, &h).abs() <= 1.0);
        prop_assert_eq!(phi.eval(&g.inverse()), -phi.eval(&g));
    }

    #[test]
    fn convolution_is_associative(seed in 0u64..1000) {
        let a = f2();
        let pick = |k: u64| -> ExactMeasure {
            let g = build(&a, &[((k % 2) as usize, k.is_multiple_of(3)), (((k / 2) % 2) as usize, k.is_multiple_of(5))]);
            ExactMeasure::new(a.clone(), vec![(g, Rational::new(1.into(), 2.into())), (a.identity(), Rational::new(1.into(), 2.into()))]).unwrap()
        };
        let (p, q, r) = (pick(seed), pick(seed / 7 + 1), pick(seed / 11 + 2));
        let left = p.convolve(&q).unwrap().convolve(&r).unwrap();
        let right = p.convolve(&q.convolve(&r).unwrap()).unwrap();
        prop_assert_eq!(left.entries(), right.entries());
    }

    #[test]
    fn moments_merge_matches_pooling(xs in proptest::collection::vec(-10.0f64..10.0, 2..50), split in 0usize..50) {
        let cut = split.min(xs.len());
        let pooled = Moments::of(xs.iter().copied());
        let merged = Moments::of(xs[..cut].iter().copied()).merge(&Moments::of(xs[cut..].iter().copied()));
        prop_assert!((pooled.mean() - merged.mean()).abs() < 1e-12);
        prop_assert!((pooled.variance() - merged.variance()).abs() < 1e-9);
    }
}

#[test]
fn generic_measure_casts_agree() {
    let a = f2();
    let exact = ExactMeasure::nearest_neighbor(a.clone());
    let float: FiniteMeasure<f64> = exact.cast();
    let p = exact.convolve_power(4, 0.0, 1 << 20).unwrap();
    let q = float.convolve_power(4, 0.0, 1 << 20).unwrap();
    for (g, w) in p.entries() {
        assert!((w.to_f64_value() - q.weight(g)).abs() < 1e-15);
    }
}
