// SPDX-License-Identifier: MIT OR Apache-2.0

//! Streaming statistics against direct two-pass formulas.

use circuitscope::stats::{cohens_d, consistency, median, WelfordAccumulator};
use proptest::prelude::*;

fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn direct_d(clean: &[f64], ablated: &[f64]) -> f64 {
    let (mc, vc) = two_pass(clean);
    let (ma, va) = two_pass(ablated);
    let (n1, n2) = (clean.len() as f64, ablated.len() as f64);
    let s = (((n1 - 1.0) * vc + (n2 - 1.0) * va) / (n1 + n2 - 2.0)).sqrt();
    if s == 0.0 {
        if ma == mc {
            0.0
        } else {
            f64::INFINITY.copysign(ma - mc)
        }
    } else {
        (ma - mc) / s
    }
}

fn samples() -> impl Strategy<Value = Vec<f64>> {
    (2usize..200, -1e3f64..1e3, 1e-3f64..1e2).prop_flat_map(|(n, loc, scale)| {
        prop::collection::vec(-1.0f64..1.0, n).prop_map(move |v| v.into_iter().map(|u| loc + scale * u).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn streaming_matches_two_pass(xs in samples()) {
        let acc: WelfordAccumulator = xs.iter().copied().collect();
        let (mean, var) = two_pass(&xs);
        prop_assert!(rel_close(acc.mean, mean, 1e-10));
        prop_assert!(rel_close(acc.variance().unwrap(), var, 1e-10));
    }

    #[test]
    fn merge_is_split_invariant(xs in samples(), cut in 0.0f64..1.0) {
        let k = ((xs.len() as f64) * cut) as usize;
        let a: WelfordAccumulator = xs[..k].iter().copied().collect();
        let b: WelfordAccumulator = xs[k..].iter().copied().collect();
        let merged = a.merge(&b);
        let (mean, var) = two_pass(&xs);
        prop_assert_eq!(merged.count, xs.len() as u64);
        prop_assert!(rel_close(merged.mean, mean, 1e-10));
        prop_assert!(rel_close(merged.variance().unwrap(), var, 1e-10));
    }

    #[test]
    fn cohens_d_matches_formula(clean in samples(), ablated in samples()) {
        let c: WelfordAccumulator = clean.iter().copied().collect();
        let a: WelfordAccumulator = ablated.iter().copied().collect();
        let d = cohens_d(&c, &a).unwrap();
        let oracle = direct_d(&clean, &ablated);
        prop_assert!((d - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{} vs {}", d, oracle);
    }

    #[test]
    fn cohens_d_is_antisymmetric(clean in samples(), ablated in samples()) {
        let c: WelfordAccumulator = clean.iter().copied().collect();
        let a: WelfordAccumulator = ablated.iter().copied().collect();
        prop_assert_eq!(cohens_d(&c, &a).unwrap(), -cohens_d(&a, &c).unwrap());
    }

    #[test]
    fn consistency_counts_majority_sign(deltas in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 2.0]), 1..60)) {
        let pos = deltas.iter().filter(|&&d| d > 0.0).count();
        let neg = deltas.iter().filter(|&&d| d < 0.0).count();
        let expected = pos.max(neg) as f64 / deltas.len() as f64;
        prop_assert_eq!(consistency(&deltas).unwrap(), expected);
    }
}

#[test]
fn zero_variance_sentinels() {
    let flat = |v: f64| -> WelfordAccumulator { [v; 5].into_iter().collect() };
    assert_eq!(cohens_d(&flat(1.0), &flat(1.0)).unwrap(), 0.0);
    assert_eq!(cohens_d(&flat(1.0), &flat(3.0)).unwrap(), f64::INFINITY);
    assert_eq!(cohens_d(&flat(3.0), &flat(1.0)).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn single_sample_groups_are_rejected() {
    let one: WelfordAccumulator = [1.0].into_iter().collect();
    let two: WelfordAccumulator = [1.0, 2.0].into_iter().collect();
    assert!(cohens_d(&one, &two).is_err());
    assert!(consistency(&[]).is_err());
}

#[test]
fn median_skips_non_finite() {
    assert_eq!(median([3.0, f64::INFINITY, 1.0, 2.0]), Some(2.0));
    assert_eq!(median([1.0, 4.0]), Some(2.5));
    assert_eq!(median([f64::NAN]), None);
}
