//! Student t tests, skewness diagnostics and the method-comparison summary
//! table.
//!
//! The t distribution is evaluated through the regularized incomplete beta
//! function, `P(|T| > t) = I_{v/(v+t^2)}(v/2, 1/2)`, with the continued
//! fraction evaluated by the modified Lentz method.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::narrative::Specificity;

const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` for `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// CDF of Student's t.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * t_two_sided_p(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (N - 1 denominator).
fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

fn t_test(x: &[f64], mu0: f64) -> Result<StatTestResult> {
    let n = x.len();
    let sd = sample_sd(x);
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let t = (mean(x) - mu0) / (sd / (n as f64).sqrt());
    let df = n - 1;
    Ok(StatTestResult {
        t,
        df,
        p: t_two_sided_p(t, df as f64),
    })
}

pub fn paired_t(x: &[f64], y: &[f64]) -> Result<StatTestResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("paired t needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::NoDifference);
    }
    t_test(&d, 0.0)
}

pub fn one_sample_t(x: &[f64], mu0: f64) -> Result<StatTestResult> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument("one-sample t needs at least 2 values".into()));
    }
    t_test(x, mu0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub skewness: f64,
    pub asymmetric: bool,
}

/// Adjusted Fisher–Pearson skewness `G1`; `|G1| > 1` is flagged.
pub fn symmetry_check(d: &[f64]) -> Result<SymmetryCheck> {
    let n = d.len();
    if n < 3 {
        return Err(Error::InvalidArgument("skewness needs at least 3 values".into()));
    }
    let m = mean(d);
    let m2 = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let m3 = d.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n as f64;
    let g1 = m3 / m2.powf(1.5);
    let nf = n as f64;
    let skewness = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    Ok(SymmetryCheck {
        skewness,
        asymmetric: skewness.abs() > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Ontology narratives as retrieved.
    Baseline,
    /// First refined explanation.
    Refined,
    /// Explanation after the "make it shorter" follow-up.
    Interactive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Refined => "refined",
            Method::Interactive => "interactive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NWords,
    Fres,
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::NWords, Metric::Fres, Metric::Cosine];

    fn heading(self) -> &'static str {
        match self {
            Metric::NWords => "N_w",
            Metric::Fres => "R_fres",
            Metric::Cosine => "S_cs",
        }
    }
}

/// Per-pair metric values of one method at one specificity level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub pair_id: String,
    pub n_words: f64,
    pub fres: f64,
    /// Absent for the baseline (a narrative is not compared with itself).
    pub cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRuns {
    pub method: Method,
    pub rows: Vec<PairMetrics>,
}

/// Everything `build_summary` needs for one specificity level: a reference
/// method and the treatment compared against it on the same pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRuns {
    pub specificity: Specificity,
    pub reference: MethodRuns,
    pub treatment: MethodRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCell {
    pub method: Method,
    pub specificity: Specificity,
    pub metric: Metric,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCell {
    pub specificity: Specificity,
    pub metric: Metric,
    pub test: String,
    pub t: Option<f64>,
    pub df: Option<usize>,
    pub p: Option<f64>,
    /// Why no statistic could be computed, e.g. "no difference".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skewness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub pairs: usize,
    pub mu0: f64,
    pub cells: Vec<MeanCell>,
    pub tests: Vec<TestCell>,
}

fn column(rows: &[PairMetrics], metric: Metric) -> Option<Vec<f64>> {
    rows.iter()
        .map(|r| match metric {
            Metric::NWords => Some(r.n_words),
            Metric::Fres => Some(r.fres),
            Metric::Cosine => r.cosine,
        })
        .collect()
}

fn test_cell(
    specificity: Specificity,
    metric: Metric,
    test: &str,
    res: Result<StatTestResult>,
    skew_of: &[f64],
) -> Result<TestCell> {
    let skewness = symmetry_check(skew_of).ok().map(|s| s.skewness);
    match res {
        Ok(r) => Ok(TestCell {
            specificity,
            metric,
            test: test.into(),
            t: Some(r.t),
            df: Some(r.df),
            p: Some(r.p),
            note: None,
            skewness,
        }),
        Err(Error::NoDifference) => Ok(TestCell {
            specificity,
            metric,
            test: test.into(),
            t: None,
            df: None,
            p: None,
            note: Some("no difference".into()),
            skewness,
        }),
        Err(Error::ZeroVariance) => Ok(TestCell {
            specificity,
            metric,
            test: test.into(),
            t: None,
            df: None,
            p: None,
            note: Some("zero variance".into()),
            skewness,
        }),
        Err(e) => Err(e),
    }
}

/// Means per (method, level, metric), paired t (reference minus treatment) on
/// length and readability, one-sample t (against `mu0`) on the treatment's
/// similarity.
pub fn build_summary(levels: &[LevelRuns], mu0: f64) -> Result<SummaryTable> {
    if !mu0.is_finite() {
        return Err(Error::InvalidArgument("mu0 must be finite".into()));
    }
    let mut cells = Vec::new();
    let mut tests = Vec::new();
    let mut pairs = None;
    for lv in levels {
        let ids = |rows: &[PairMetrics]| rows.iter().map(|r| r.pair_id.clone()).collect::<Vec<_>>();
        let (reference, treatment) = (&lv.reference.rows, &lv.treatment.rows);
        if ids(reference) != ids(treatment) {
            return Err(Error::InvalidArgument(format!(
                "{} and {} pair sets differ at specificity {}",
                lv.reference.method.name(),
                lv.treatment.method.name(),
                lv.specificity
            )));
        }
        if reference.is_empty() {
            return Err(Error::InvalidArgument(format!("no pairs at specificity {}", lv.specificity)));
        }
        match pairs {
            None => pairs = Some(reference.len()),
            Some(p) if p != reference.len() => {
                return Err(Error::InvalidArgument("levels cover different pair sets".into()))
            }
            _ => {}
        }
        for (method, rows) in [(lv.reference.method, reference), (lv.treatment.method, treatment)] {
            for metric in Metric::ALL {
                if let Some(col) = column(rows, metric) {
                    cells.push(MeanCell {
                        method,
                        specificity: lv.specificity,
                        metric,
                        mean: mean(&col),
                    });
                }
            }
        }
        for metric in [Metric::NWords, Metric::Fres] {
            let x = column(reference, metric).expect("always present");
            let y = column(treatment, metric).expect("always present");
            let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            tests.push(test_cell(lv.specificity, metric, "paired_t", paired_t(&x, &y), &d)?);
        }
        let sims = column(treatment, Metric::Cosine).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{} runs at specificity {} lack similarity values",
                lv.treatment.method.name(),
                lv.specificity
            ))
        })?;
        tests.push(test_cell(
            lv.specificity,
            Metric::Cosine,
            "one_sample_t",
            one_sample_t(&sims, mu0),
            &sims,
        )?);
    }
    Ok(SummaryTable {
        pairs: pairs.unwrap_or(0),
        mu0,
        cells,
        tests,
    })
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "< .001".into()
    } else {
        format!("{p:.3}")
    }
}

impl SummaryTable {
    pub fn mean(&self, method: Method, specificity: Specificity, metric: Metric) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.specificity == specificity && c.metric == metric)
            .map(|c| c.mean)
    }

    pub fn test(&self, specificity: Specificity, metric: Metric) -> Option<&TestCell> {
        self.tests
            .iter()
            .find(|c| c.specificity == specificity && c.metric == metric)
    }

    /// Aligned plain-text rendering: a means grid and a tests grid.
    pub fn render_text(&self) -> String {
        let mut levels: Vec<Specificity> = self.cells.iter().map(|c| c.specificity).collect();
        levels.sort();
        levels.dedup();
        let mut out = String::new();
        let _ = writeln!(out, "Average results over {} pairs", self.pairs);
        let _ = writeln!(
            out,
            "{:<12} {:<12} {:>10} {:>10} {:>10}",
            "Method", "Specificity", "N_w", "R_fres", "S_cs"
        );
        let mut grouped: BTreeMap<(Method, Specificity), [Option<f64>; 3]> = BTreeMap::new();
        for c in &self.cells {
            let slot = Metric::ALL.iter().position(|m| *m == c.metric).unwrap();
            grouped.entry((c.method, c.specificity)).or_default()[slot] = Some(c.mean);
        }
        for ((method, spec), vals) in &grouped {
            let name = method.name();
            let f = |v: Option<f64>, prec: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"));
            let _ = writeln!(
                out,
                "{:<12} {:<12} {:>10} {:>10} {:>10}",
                name,
                spec.to_string(),
                f(vals[0], 1),
                f(vals[1], 2),
                f(vals[2], 3)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<12} {:<8} {:<13} {:>10} {:>6} {:>8} {:>8}",
            "Specificity", "Metric", "Test", "t", "df", "p", "skew"
        );
        for level in levels {
            for metric in Metric::ALL {
                let Some(c) = self.test(level, metric) else { continue };
                let (t, df, p) = match (c.t, c.df, c.p) {
                    (Some(t), Some(df), Some(p)) => (format!("{t:.3}"), df.to_string(), fmt_p(p)),
                    _ => (c.note.clone().unwrap_or_default(), "-".into(), "-".into()),
                };
                let skew = c.skewness.map_or_else(|| "-".to_string(), |s| format!("{s:.2}"));
                let _ = writeln!(
                    out,
                    "{:<12} {:<8} {:<13} {:>10} {:>6} {:>8} {:>8}",
                    level.to_string(),
                    metric.heading(),
                    c.test,
                    t,
                    df,
                    p,
                    skew
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn t_cdf_symmetry_and_limits() {
        assert!((t_cdf(0.0, 7.0) - 0.5).abs() < 1e-15);
        for t in [0.3, 1.0, 2.5] {
            assert!((t_cdf(t, 4.0) + t_cdf(-t, 4.0) - 1.0).abs() < 1e-12);
        }
        // df = 1 is Cauchy
        assert!((t_cdf(1.0, 1.0) - 0.75).abs() < 1e-10);
        assert_eq!(t_two_sided_p(0.0, 10.0), 1.0);
    }

    #[test]
    fn zero_difference_is_error() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(paired_t(&x, &x), Err(Error::NoDifference)));
        assert!(paired_t(&x, &x[..2]).is_err());
    }

    #[test]
    fn one_sample_centered_and_constant() {
        let r = one_sample_t(&[-1.0, 0.0, 1.0, 2.0, 3.0], 1.0).unwrap();
        assert!(r.t.abs() < 1e-15);
        assert!((r.p - 1.0).abs() < 1e-12);
        assert_eq!(r.df, 4);
        assert!(matches!(one_sample_t(&[2.0, 2.0, 2.0], 1.0), Err(Error::ZeroVariance)));
    }

    #[test]
    fn df_for_153_pairs() {
        let x: Vec<f64> = (0..153).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..153).map(|i| (i * i % 17) as f64).collect();
        assert_eq!(paired_t(&x, &y).unwrap().df, 152);
    }

    #[test]
    fn skewness() {
        let s = symmetry_check(&[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(s.skewness.abs() < 1e-9 && !s.asymmetric);
        // direct evaluation: m = 2.5, m2 = 18.75, m3 = 93.75, g1 = 93.75 / 18.75^1.5,
        // G1 = g1 * sqrt(12) / 2 = 2.0
        let s = symmetry_check(&[0.0, 0.0, 0.0, 10.0]).unwrap();
        assert!((s.skewness - 2.0).abs() < 1e-12, "{}", s.skewness);
        assert!(s.asymmetric);
        assert!(symmetry_check(&[1.0, 1.0, 1.0]).is_err());
        assert!(symmetry_check(&[1.0, 2.0]).is_err());
    }

    fn rows(vals: &[(f64, f64, Option<f64>)]) -> Vec<PairMetrics> {
        vals.iter()
            .enumerate()
            .map(|(i, &(n, f, c))| PairMetrics {
                pair_id: format!("p{i}"),
                n_words: n,
                fres: f,
                cosine: c,
            })
            .collect()
    }

    #[test]
    fn identical_methods_give_no_difference_cell() {
        let base = rows(&[(10.0, 50.0, None), (12.0, 55.0, None), (9.0, 40.0, None)]);
        let refined = rows(&[(10.0, 50.0, Some(0.8)), (12.0, 55.0, Some(0.7)), (9.0, 40.0, Some(0.9))]);
        let table = build_summary(
            &[LevelRuns {
                specificity: Specificity::ONE,
                reference: MethodRuns { method: Method::Baseline, rows: base },
                treatment: MethodRuns { method: Method::Refined, rows: refined },
            }],
            0.5,
        )
        .unwrap();
        let cell = table.test(Specificity::ONE, Metric::NWords).unwrap();
        assert_eq!(cell.note.as_deref(), Some("no difference"));
        assert!(table.render_text().contains("no difference"));
        let sim = table.test(Specificity::ONE, Metric::Cosine).unwrap();
        assert_eq!(sim.df, Some(2));
    }

    #[test]
    fn mismatched_pairs_rejected() {
        let base = rows(&[(10.0, 50.0, None), (12.0, 55.0, None)]);
        let mut refined = rows(&[(8.0, 60.0, Some(0.8)), (9.0, 65.0, Some(0.7))]);
        refined[1].pair_id = "other".into();
        assert!(build_summary(
            &[LevelRuns {
                specificity: Specificity::TWO,
                reference: MethodRuns { method: Method::Baseline, rows: base },
                treatment: MethodRuns { method: Method::Refined, rows: refined },
            }],
            0.5
        )
        .is_err());
    }
}
