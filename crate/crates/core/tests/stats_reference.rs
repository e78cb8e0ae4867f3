//! Statistics kernel against frozen scipy results and the statrs Student t
//! distribution.

use planexplain_core::stats::{one_sample_t, paired_t, symmetry_check, t_cdf, t_two_sided_p};
use proptest::prelude::*;
use serde::Deserialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Deserialize)]
struct Paired {
    x: Vec<f64>,
    y: Vec<f64>,
    t: f64,
    p: f64,
    df: usize,
}

#[derive(Deserialize)]
struct OneSample {
    x: Vec<f64>,
    mu0: f64,
    t: f64,
    p: f64,
    df: usize,
}

#[derive(Deserialize)]
struct Skew {
    x: Vec<f64>,
    g1: f64,
}

#[derive(Deserialize)]
struct Fixtures {
    paired: Vec<Paired>,
    one_sample: Vec<OneSample>,
    skewness: Vec<Skew>,
}

fn fixtures() -> Fixtures {
    serde_json::from_str(include_str!("fixtures/stats_reference.json")).unwrap()
}

#[test]
fn paired_matches_scipy() {
    for f in fixtures().paired {
        let r = paired_t(&f.x, &f.y).unwrap();
        assert_eq!(r.df, f.df);
        assert!((r.t - f.t).abs() < 1e-6, "t {} vs {}", r.t, f.t);
        assert!((r.p - f.p).abs() < 1e-6, "p {} vs {}", r.p, f.p);
    }
}

#[test]
fn one_sample_matches_scipy() {
    for f in fixtures().one_sample {
        let r = one_sample_t(&f.x, f.mu0).unwrap();
        assert_eq!(r.df, f.df);
        assert!((r.t - f.t).abs() < 1e-6, "t {} vs {}", r.t, f.t);
        assert!((r.p - f.p).abs() < 1e-6, "p {} vs {}", r.p, f.p);
    }
}

#[test]
fn skewness_matches_scipy() {
    for f in fixtures().skewness {
        let s = symmetry_check(&f.x).unwrap();
        assert!((s.skewness - f.g1).abs() < 1e-9, "{} vs {}", s.skewness, f.g1);
        assert_eq!(s.asymmetric, f.g1.abs() > 1.0);
    }
}

#[test]
fn df_for_153_pairs() {
    let x: Vec<f64> = (0..153).map(|i| (i * 7 % 13) as f64).collect();
    let y: Vec<f64> = (0..153).map(|i| (i * 5 % 11) as f64).collect();
    assert_eq!(paired_t(&x, &y).unwrap().df, 152);
    assert_eq!(one_sample_t(&x, 3.0).unwrap().df, 152);
}

#[test]
fn cdf_grid_against_statrs() {
    for df in [1.0, 2.0, 3.5, 10.0, 30.0, 152.0, 1000.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for i in -80..=80 {
            let t = i as f64 * 0.25;
            assert!((t_cdf(t, df) - dist.cdf(t)).abs() < 1e-9, "df {df} t {t}");
            let p = 2.0 * dist.cdf(-t.abs());
            assert!((t_two_sided_p(t, df) - p).abs() < 1e-9, "df {df} t {t}");
        }
    }
}

fn sample(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, n)
}

proptest! {
    #[test]
    fn swapping_arguments_negates_t((x, y) in (3usize..40).prop_flat_map(|n| (sample(n..n + 1), sample(n..n + 1)))) {
        let (Ok(a), Ok(b)) = (paired_t(&x, &y), paired_t(&y, &x)) else { return Ok(()); };
        prop_assert!((a.t + b.t).abs() < 1e-9 * a.t.abs().max(1.0));
        prop_assert!((a.p - b.p).abs() < 1e-12);
    }

    #[test]
    fn common_shift_leaves_paired_t_unchanged(
        (x, y) in (3usize..40).prop_flat_map(|n| (sample(n..n + 1), sample(n..n + 1))),
        c in -1000.0f64..1000.0,
    ) {
        let (Ok(a), Ok(b)) = (
            paired_t(&x, &y),
            paired_t(&x.iter().map(|v| v + c).collect::<Vec<_>>(), &y.iter().map(|v| v + c).collect::<Vec<_>>()),
        ) else { return Ok(()); };
        prop_assert!((a.t - b.t).abs() < 1e-6 * a.t.abs().max(1.0));
    }

    #[test]
    fn p_decreases_with_abs_t(t1 in 0.0f64..30.0, dt in 0.0f64..10.0, df in 1.0f64..300.0) {
        let p1 = t_two_sided_p(t1, df);
        let p2 = t_two_sided_p(t1 + dt, df);
        prop_assert!(p2 <= p1 + 1e-15);
        prop_assert!((0.0..=1.0).contains(&p1));
    }
}
