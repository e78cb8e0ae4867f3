//! Flesch Reading Ease on a frozen passage corpus, checked against an
//! independent implementation of the same vowel-group formula.

use planexplain_core::evalmetrics::{fres, FRES_CEILING};

const FIXTURES: &str = include_str!("fixtures/fres_reference.tsv");

/// (textstat score, vowel-group score, passage)
fn fixtures() -> Vec<(f64, f64, &'static str)> {
    FIXTURES
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut cols = l.splitn(3, '\t');
            let mut num = || cols.next().unwrap().parse::<f64>().unwrap();
            let (a, b) = (num(), num());
            (a, b, cols.next().unwrap())
        })
        .collect()
}

#[test]
fn matches_independent_formula() {
    let fx = fixtures();
    assert_eq!(fx.len(), 10);
    for (_, expected, text) in fx {
        let got = fres(text).unwrap();
        assert!((got - expected).abs() < 1e-8, "{got} vs {expected} for {text:?}");
    }
}

#[test]
fn ceiling() {
    assert!((FRES_CEILING - 121.22).abs() < 1e-6);
    assert!((fres("Go. Run. Sit. Eat.").unwrap() - FRES_CEILING).abs() < 1e-6);
    for (_, _, text) in fixtures() {
        assert!(fres(text).unwrap() <= FRES_CEILING + 1e-9);
    }
}
