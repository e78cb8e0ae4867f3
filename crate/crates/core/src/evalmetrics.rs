//! Explanation quality metrics: length, Flesch Reading Ease and count-vector
//! cosine similarity after stop-word removal.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest score reachable: one one-syllable word per sentence.
pub const FRES_CEILING: f64 = 206.835 - 1.015 - 84.6;

const BUNDLED_STOPWORDS: &str = include_str!("../resources/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_words: usize,
    pub fres: f64,
    pub cosine: Option<f64>,
}

fn is_word(run: &str) -> bool {
    run.chars().any(char::is_alphanumeric)
}

/// Whitespace-separated runs containing at least one letter or digit.
pub fn word_count(t: &str) -> usize {
    t.split_whitespace().filter(|r| is_word(r)).count()
}

/// Sentence count: terminators (`.`, `!`, `?`) followed by whitespace or the
/// end of text close a sentence when it contains a word. At least one.
pub fn sentence_count(t: &str) -> usize {
    let chars: Vec<char> = t.chars().collect();
    let mut count = 0;
    let mut has_word = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            has_word = true;
        }
        if matches!(c, '.' | '!' | '?') {
            let next = chars.get(i + 1);
            let closes = next.is_none_or(|n| n.is_whitespace());
            if closes && has_word {
                count += 1;
                has_word = false;
            }
        }
    }
    if has_word {
        count += 1;
    }
    count.max(1)
}

/// Vowel-group syllable estimate. Tokens containing a digit count as one.
pub fn syllables(word: &str) -> usize {
    if word.chars().any(|c| c.is_ascii_digit()) {
        return 1;
    }
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    if letters.is_empty() {
        return 1;
    }
    let vowel = |c: char| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
    let mut groups = 0;
    let mut prev = false;
    for &c in &letters {
        let v = vowel(c);
        if v && !prev {
            groups += 1;
        }
        prev = v;
    }
    if letters.last() == Some(&'e') && groups > 1 {
        groups -= 1;
    }
    groups.max(1)
}

pub fn fres(t: &str) -> Result<f64> {
    let words: Vec<&str> = t.split_whitespace().filter(|r| is_word(r)).collect();
    if words.is_empty() {
        return Err(Error::InvalidArgument("text has no words".into()));
    }
    let n_words = words.len() as f64;
    let n_syll: usize = words.iter().map(|w| syllables(w)).sum();
    let n_sent = sentence_count(t) as f64;
    Ok(206.835 - 1.015 * (n_words / n_sent) - 84.6 * (n_syll as f64 / n_words))
}

/// Frozen stop-word list.
#[derive(Debug, Clone)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn parse(text: &str) -> Self {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The list shipped with the crate.
    pub fn bundled() -> &'static StopWords {
        static LIST: OnceLock<StopWords> = OnceLock::new();
        LIST.get_or_init(|| StopWords::parse(BUNDLED_STOPWORDS))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercased alphanumeric tokens; a `.` or `,` between two digits stays
/// inside the token so `28.20` is one token.
pub fn tokenize(t: &str) -> Vec<String> {
    let chars: Vec<char> = t.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for i in 0..chars.len() {
        let c = chars[i];
        let joins_digits = matches!(c, '.' | ',')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
            && !cur.is_empty();
        if c.is_alphanumeric() || joins_digits {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

pub fn count_vector(t: &str, stop: &StopWords) -> BTreeMap<String, usize> {
    let mut v = BTreeMap::new();
    for tok in tokenize(t) {
        if !stop.contains(&tok) {
            *v.entry(tok).or_insert(0) += 1;
        }
    }
    v
}

pub fn cosine_similarity(a: &str, b: &str) -> Result<f64> {
    cosine_similarity_with(a, b, StopWords::bundled())
}

pub fn cosine_similarity_with(a: &str, b: &str, stop: &StopWords) -> Result<f64> {
    let va = count_vector(a, stop);
    let vb = count_vector(b, stop);
    if va.is_empty() && vb.is_empty() {
        return Err(Error::InvalidArgument(
            "both texts are empty after stop-word filtering".into(),
        ));
    }
    if va.is_empty() || vb.is_empty() {
        return Ok(0.0);
    }
    let dot: f64 = va
        .iter()
        .filter_map(|(k, x)| vb.get(k).map(|y| (*x * *y) as f64))
        .fold(0.0, |acc, v| acc + v);
    let norm = |v: &BTreeMap<String, usize>| v.values().map(|x| (*x * *x) as f64).sum::<f64>().sqrt();
    Ok((dot / (norm(&va) * norm(&vb))).clamp(0.0, 1.0))
}

pub fn report(narrative: &str, explanation: &str) -> Result<MetricsReport> {
    report_with(narrative, explanation, StopWords::bundled())
}

pub fn report_with(narrative: &str, explanation: &str, stop: &StopWords) -> Result<MetricsReport> {
    let n_words = word_count(explanation);
    if n_words == 0 {
        return Err(Error::InvalidArgument("explanation has no words".into()));
    }
    Ok(MetricsReport {
        n_words,
        fres: fres(explanation)?,
        cosine: Some(cosine_similarity_with(narrative, explanation, stop)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_counts() {
        assert_eq!(word_count("Plan X is cheaper."), 4);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("a -- b ;"), 2);
        assert_eq!(word_count("It runs in 28.20 units"), 5);
    }

    #[test]
    fn fres_examples() {
        assert!((fres("Go. Run. Sit.").unwrap() - 121.22).abs() < 1e-9);
        assert!((fres("The cat sat on the mat.").unwrap() - 116.145).abs() < 1e-9);
        assert!(fres("").is_err());
        assert!(fres(" ... ").is_err());
    }

    #[test]
    fn syllable_heuristic() {
        assert_eq!(syllables("cat"), 1);
        assert_eq!(syllables("make"), 1);
        assert_eq!(syllables("the"), 1);
        assert_eq!(syllables("cheaper"), 2);
        assert_eq!(syllables("makespan"), 3);
        assert_eq!(syllables("28.20"), 1);
        assert_eq!(syllables("'Plan"), 1);
    }

    #[test]
    fn sentences() {
        assert_eq!(sentence_count("One. Two! Three?"), 3);
        assert_eq!(sentence_count("Value '28.20' here."), 1);
        assert_eq!(sentence_count("no terminator"), 1);
        assert_eq!(sentence_count("Wait... what"), 2);
    }

    #[test]
    fn cosine_examples() {
        let x = "the robot inspected twelve cases";
        assert!((cosine_similarity(x, x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity("apples oranges", "trucks boats").unwrap(), 0.0);
        assert!(cosine_similarity("apples oranges", "trucks boats").unwrap().is_sign_positive());
        let c = cosine_similarity("plan x cheaper faster", "plan x cheaper slower").unwrap();
        assert!((c - 0.75).abs() < 1e-12);
        assert!(cosine_similarity("the and of", "is a").is_err());
    }

    #[test]
    fn tokens_keep_decimals() {
        assert_eq!(tokenize("Has value '28.20'; while 3."), vec!["has", "value", "28.20", "while", "3"]);
        assert_eq!(tokenize("Plan Y's 40.35 units"), vec!["plan", "y", "s", "40.35", "units"]);
    }

    #[test]
    fn report_errors_on_empty_explanation() {
        assert!(report("x", "").is_err());
        let r = report("Plan X is cheaper.", "Plan X is cheaper.").unwrap();
        assert_eq!(r.n_words, 4);
        assert!((r.cosine.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bundled_list_is_loaded() {
        let s = StopWords::bundled();
        assert_eq!(s.len(), 127);
        assert!(s.contains("the") && s.contains("while") && !s.contains("plan"));
    }
}
