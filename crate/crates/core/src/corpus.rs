//! Vocabularies and the three controlled corpora.
//!
//! LS draws real words uniformly from a vocabulary; RS generates
//! pseudowords whose lengths follow the LS length distribution and whose
//! characters mix letters, digits, and punctuation 6:3:1; MS samples from
//! the two with ratio `r : 1-r`. Every sample is a pure function of
//! `(inputs, seed, index)` so streams can be generated out of order.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

/// Punctuation marks available to the synthesizer. Also the punctuation
/// category of RS pseudoword characters.
pub const PUNCTUATION: [char; 6] = ['.', ',', '\'', '-', '!', '?'];

/// Chance that a rendered word receives an inserted punctuation mark.
pub const PUNCTUATION_RATE: f64 = 0.10;

/// RS character-category probabilities: letters, digits, punctuation.
pub const RS_CATEGORY_MIX: [f64; 3] = [0.6, 0.3, 0.1];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty input word")]
    EmptyInput,
    #[error("word {0:?} normalizes to the empty string")]
    AllPunctuation(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("length histogram is empty")]
    EmptyLengthHistogram,
    #[error("ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error("total_count must be positive")]
    ZeroCount,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercase and strip punctuation. Errors on empty input and on words
/// that are nothing but punctuation; idempotent on its own output.
pub fn normalize_word(raw: &str) -> Result<String, CorpusError> {
    if raw.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let out = normalize_lossy(raw);
    if out.is_empty() {
        return Err(CorpusError::AllPunctuation(raw.to_string()));
    }
    Ok(out)
}

/// [`normalize_word`] without the error cases; comparison helper that maps
/// all-punctuation input to the empty string.
pub fn normalize_lossy(raw: &str) -> String {
    raw.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Ls,
    Rs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Upper,
    Lower,
    Title,
}

pub const CASE_KINDS: [CaseKind; 3] = [CaseKind::Upper, CaseKind::Lower, CaseKind::Title];

/// One synthesized word instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSample {
    pub text: String,
    pub normalized: String,
    pub corpus_kind: CorpusKind,
    pub case_kind: CaseKind,
}

impl WordSample {
    fn new(text: String, corpus_kind: CorpusKind, case_kind: CaseKind) -> Option<Self> {
        let normalized = normalize_lossy(&text);
        if normalized.is_empty() {
            return None;
        }
        Some(WordSample {
            text,
            normalized,
            corpus_kind,
            case_kind,
        })
    }
}

fn case_render(base: &str, case: CaseKind) -> String {
    match case {
        CaseKind::Upper => base.to_uppercase(),
        CaseKind::Lower => base.to_string(),
        CaseKind::Title => {
            let mut cs = base.chars();
            match cs.next() {
                Some(first) => first.to_uppercase().chain(cs).collect(),
                None => String::new(),
            }
        }
    }
}

/// The three case variants of a normalized word: all-upper, all-lower,
/// first-letter-capitalized. Always three samples even when variants
/// coincide textually.
pub fn expand_case_variants(word: &str, corpus_kind: CorpusKind) -> [WordSample; 3] {
    CASE_KINDS.map(|case| {
        WordSample::new(case_render(word, case), corpus_kind, case)
            .expect("normalized word cannot become empty under case change")
    })
}

/// With probability [`PUNCTUATION_RATE`], prepend or append (uniform) one
/// mark from [`PUNCTUATION`]; the normalized form never changes.
pub fn inject_punctuation(sample: WordSample, rng: &mut impl Rng) -> WordSample {
    if rng.gen::<f64>() >= PUNCTUATION_RATE {
        return sample;
    }
    let mark = PUNCTUATION[rng.gen_range(0..PUNCTUATION.len())];
    let append: bool = rng.gen();
    let text = if append {
        format!("{}{}", sample.text, mark)
    } else {
        format!("{}{}", mark, sample.text)
    };
    WordSample {
        text,
        ..sample
    }
}

/// Normalized, deduplicated word set; membership defines the in-vocabulary
/// side of an evaluation split.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    words: BTreeSet<String>,
    sorted: Vec<String>,
    pub source_tag: String,
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I, source_tag: &str) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        let mut any_input = false;
        for w in words {
            any_input = true;
            set.insert(normalize_word(w.as_ref())?);
        }
        if any_input && set.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        let sorted = set.iter().cloned().collect();
        Ok(Vocabulary {
            words: set,
            sorted,
            source_tag: source_tag.to_string(),
        })
    }

    /// One word per line; blank lines are skipped.
    pub fn from_reader(r: impl BufRead, source_tag: &str) -> Result<Self, CorpusError> {
        let mut words = Vec::new();
        for line in r.lines() {
            let line = line?;
            let w = line.trim();
            if !w.is_empty() {
                words.push(w.to_string());
            }
        }
        Self::from_words(words, source_tag)
    }

    pub fn from_path(path: &std::path::Path, source_tag: &str) -> Result<Self, CorpusError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f), source_tag)
    }

    /// Export in the word-list format: one normalized word per line.
    pub fn export(&self, mut w: impl Write) -> Result<(), CorpusError> {
        for word in &self.sorted {
            writeln!(w, "{word}")?;
        }
        Ok(())
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.words.contains(normalized)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn word_at(&self, i: usize) -> &str {
        &self.sorted[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.sorted.iter().map(String::as_str)
    }
}

const BUNDLED_WORDS: &str = include_str!("../assets/words.txt");

fn bundled_split() -> (Vec<&'static str>, Vec<&'static str>) {
    let mut train = Vec::new();
    let mut reserve = Vec::new();
    for (i, w) in BUNDLED_WORDS.lines().filter(|l| !l.is_empty()).enumerate() {
        // every 4th word is held out, interleaved so both lists span the
        // alphabet
        if i % 4 == 3 {
            reserve.push(w);
        } else {
            train.push(w);
        }
    }
    (train, reserve)
}

/// The 1500-word training vocabulary bundled with the crate.
pub fn bundled_train_vocabulary() -> Vocabulary {
    let (train, _) = bundled_split();
    Vocabulary::from_words(train, "bundled-train").expect("bundled list is valid")
}

/// The 500 held-out words used to build out-of-vocabulary test sets.
pub fn bundled_reserve_vocabulary() -> Vocabulary {
    let (_, reserve) = bundled_split();
    Vocabulary::from_words(reserve, "bundled-reserve").expect("bundled list is valid")
}

/// Index-addressable infinite sample stream.
pub trait SampleSource: Sync {
    fn sample_at(&self, index: u64) -> WordSample;
}

/// LexiconSynth: uniform draws from a vocabulary, three case variants per
/// drawn word (consecutive indices), independent punctuation per variant.
pub struct LsCorpus {
    vocab: Vocabulary,
    seed: u64,
}

impl LsCorpus {
    pub fn new(vocab: Vocabulary, seed: u64) -> Result<Self, CorpusError> {
        if vocab.is_empty() {
            return Err(CorpusError::EmptyVocabulary);
        }
        Ok(LsCorpus { vocab, seed })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }
}

impl SampleSource for LsCorpus {
    fn sample_at(&self, index: u64) -> WordSample {
        let group = index / 3;
        let variant = (index % 3) as usize;
        let mut word_rng = stream_rng(self.seed, "ls-word", group);
        let word = self.vocab.word_at(word_rng.gen_range(0..self.vocab.len()));
        let sample = expand_case_variants(word, CorpusKind::Ls)[variant].clone();
        let mut punct_rng = stream_rng(self.seed, "ls-punct", index);
        inject_punctuation(sample, &mut punct_rng)
    }
}

pub fn sample_ls_corpus(
    vocab: &Vocabulary,
    n: u64,
    seed: u64,
) -> Result<Vec<WordSample>, CorpusError> {
    let corpus = LsCorpus::new(vocab.clone(), seed)?;
    Ok((0..n).map(|i| corpus.sample_at(i)).collect())
}

/// Empirical word-length distribution, built from the normalized forms of
/// an LS stream.
#[derive(Clone, Debug, Default)]
pub struct LengthHistogram {
    counts: Vec<(usize, u64)>,
    total: u64,
}

impl LengthHistogram {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for l in lengths {
            *map.entry(l).or_insert(0u64) += 1;
        }
        let counts: Vec<(usize, u64)> = map.into_iter().collect();
        let total = counts.iter().map(|(_, c)| c).sum();
        LengthHistogram { counts, total }
    }

    pub fn from_samples(samples: &[WordSample]) -> Self {
        Self::from_lengths(samples.iter().map(|s| s.normalized.chars().count()))
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn bins(&self) -> &[(usize, u64)] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let mut target = rng.gen_range(0..self.total);
        for &(len, c) in &self.counts {
            if target < c {
                return len;
            }
            target -= c;
        }
        unreachable!("histogram total covers all bins")
    }
}

/// RandomSynth: pseudowords with lengths from an LS histogram and
/// characters drawn 6:3:1 from letters/digits/punctuation, uniform within
/// category.
pub struct RsCorpus {
    hist: LengthHistogram,
    seed: u64,
}

impl RsCorpus {
    pub fn new(hist: LengthHistogram, seed: u64) -> Result<Self, CorpusError> {
        if hist.is_empty() {
            return Err(CorpusError::EmptyLengthHistogram);
        }
        Ok(RsCorpus { hist, seed })
    }

    fn pseudoword(&self, group: u64) -> String {
        let mut rng = stream_rng(self.seed, "rs-word", group);
        loop {
            let len = self.hist.draw(&mut rng);
            let mut word = String::with_capacity(len);
            for _ in 0..len {
                let cat = rng.gen::<f64>();
                let ch = if cat < RS_CATEGORY_MIX[0] {
                    (b'a' + rng.gen_range(0..26u8)) as char
                } else if cat < RS_CATEGORY_MIX[0] + RS_CATEGORY_MIX[1] {
                    (b'0' + rng.gen_range(0..10u8)) as char
                } else {
                    PUNCTUATION[rng.gen_range(0..PUNCTUATION.len())]
                };
                word.push(ch);
            }
            // an all-punctuation pseudoword has no normalized form; redraw
            if word.chars().any(|c| !c.is_ascii_punctuation()) {
                return word;
            }
        }
    }
}

impl SampleSource for RsCorpus {
    fn sample_at(&self, index: u64) -> WordSample {
        let group = index / 3;
        let variant = (index % 3) as usize;
        let base = self.pseudoword(group);
        let case = CASE_KINDS[variant];
        WordSample::new(case_render(&base, case), CorpusKind::Rs, case)
            .expect("pseudoword contains a non-punctuation character")
    }
}

pub fn sample_rs_corpus(
    hist: &LengthHistogram,
    n: u64,
    seed: u64,
) -> Result<Vec<WordSample>, CorpusError> {
    let corpus = RsCorpus::new(hist.clone(), seed)?;
    Ok((0..n).map(|i| corpus.sample_at(i)).collect())
}

/// MixedSynth parameters: RS fraction, stream length, seed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorpusMixSpec {
    pub ratio_r: f64,
    pub total_count: u64,
    pub seed: u64,
}

impl CorpusMixSpec {
    pub fn new(ratio_r: f64, total_count: u64, seed: u64) -> Result<Self, CorpusError> {
        if !(0.0..=1.0).contains(&ratio_r) || !ratio_r.is_finite() {
            return Err(CorpusError::BadRatio(ratio_r));
        }
        if total_count == 0 {
            return Err(CorpusError::ZeroCount);
        }
        Ok(CorpusMixSpec {
            ratio_r,
            total_count,
            seed,
        })
    }
}

/// Each sample independently comes from RS with probability `r`, else LS.
pub fn mix_corpora(
    rs: &dyn SampleSource,
    ls: &dyn SampleSource,
    spec: &CorpusMixSpec,
) -> Vec<WordSample> {
    (0..spec.total_count)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, "mix", i);
            if rng.gen::<f64>() < spec.ratio_r {
                rs.sample_at(i)
            } else {
                ls.sample_at(i)
            }
        })
        .collect()
}

/// Exhaustive, disjoint partition of labeled items by vocabulary
/// membership of the normalized label.
#[derive(Clone, Debug)]
pub struct EvalSplit<T> {
    pub in_vocab: Vec<T>,
    pub out_vocab: Vec<T>,
}

pub fn split_eval<T>(
    items: Vec<T>,
    vocab: &Vocabulary,
    label: impl Fn(&T) -> &str,
) -> EvalSplit<T> {
    let mut split = EvalSplit {
        in_vocab: Vec::new(),
        out_vocab: Vec::new(),
    };
    for item in items {
        if vocab.contains(&normalize_lossy(label(&item))) {
            split.in_vocab.push(item);
        } else {
            split.out_vocab.push(item);
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_word("Off!").unwrap(), "off");
        assert_eq!(normalize_word("SALAD").unwrap(), "salad");
        assert_eq!(normalize_word("don't").unwrap(), "dont");
    }

    #[test]
    fn normalize_rejects_empty_and_punctuation_only() {
        assert!(matches!(normalize_word(""), Err(CorpusError::EmptyInput)));
        assert!(matches!(
            normalize_word("!?."),
            Err(CorpusError::AllPunctuation(_))
        ));
    }

    #[test]
    fn case_variants_examples() {
        let v = expand_case_variants("salad", CorpusKind::Ls);
        assert_eq!(
            v.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            ["SALAD", "salad", "Salad"]
        );
        assert!(v.iter().all(|s| s.normalized == "salad"));

        let single = expand_case_variants("a", CorpusKind::Ls);
        assert_eq!(
            single.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            ["A", "a", "A"]
        );
        assert_eq!(single.len(), 3);

        let digits = expand_case_variants("b2", CorpusKind::Ls);
        assert_eq!(
            digits.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            ["B2", "b2", "B2"]
        );
    }

    #[test]
    fn punctuation_rate_close_to_ten_percent() {
        let vocab = Vocabulary::from_words(["salad"], "t").unwrap();
        let samples = sample_ls_corpus(&vocab, 12000, 99).unwrap();
        let hits = samples
            .iter()
            .filter(|s| s.text.chars().any(|c| c.is_ascii_punctuation()))
            .count();
        let rate = hits as f64 / samples.len() as f64;
        assert!((rate - PUNCTUATION_RATE).abs() <= 0.01, "rate {rate}");
        assert!(samples.iter().all(|s| s.normalized == "salad"));
    }

    #[test]
    fn ls_membership_and_determinism() {
        let vocab = Vocabulary::from_words(["cat", "dog", "bird"], "t").unwrap();
        let a = sample_ls_corpus(&vocab, 300, 5).unwrap();
        let b = sample_ls_corpus(&vocab, 300, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| vocab.contains(&s.normalized)));
        assert!(sample_ls_corpus(&vocab, 0, 5).unwrap().is_empty());
        let single = Vocabulary::from_words(["a"], "t").unwrap();
        let three = sample_ls_corpus(&single, 3, 1).unwrap();
        assert!(three.iter().all(|s| s.normalized == "a"));
    }

    #[test]
    fn ls_groups_emit_three_case_variants() {
        let vocab = bundled_train_vocabulary();
        let samples = sample_ls_corpus(&vocab, 300, 17).unwrap();
        for group in samples.chunks(3) {
            assert_eq!(group[0].case_kind, CaseKind::Upper);
            assert_eq!(group[1].case_kind, CaseKind::Lower);
            assert_eq!(group[2].case_kind, CaseKind::Title);
            assert_eq!(group[0].normalized, group[1].normalized);
            assert_eq!(group[1].normalized, group[2].normalized);
        }
    }

    #[test]
    fn ls_word_draws_uniform_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let words: Vec<String> = (0..100).map(|i| format!("w{i:03}x")).collect();
        let vocab = Vocabulary::from_words(&words, "t").unwrap();
        let samples = sample_ls_corpus(&vocab, 30000, 41).unwrap();
        // word draws happen at group granularity; count one per group
        let mut counts = std::collections::HashMap::new();
        for s in samples.iter().step_by(3) {
            *counts.entry(s.normalized.clone()).or_insert(0u64) += 1;
        }
        let n = 10000.0;
        let expected = n / 100.0;
        let stat: f64 = words
            .iter()
            .map(|w| {
                let norm = normalize_lossy(w);
                let o = *counts.get(&norm).unwrap_or(&0) as f64;
                (o - expected).powi(2) / expected
            })
            .sum();
        let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(stat);
        assert!(p > 0.01, "chi2 {stat}, p {p}");
    }

    #[test]
    fn rs_category_mix_and_letter_uniformity() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let vocab = bundled_train_vocabulary();
        let ls = sample_ls_corpus(&vocab, 6000, 7).unwrap();
        let hist = LengthHistogram::from_samples(&ls);
        let rs = sample_rs_corpus(&hist, 60000, 13).unwrap();

        let mut letters = 0u64;
        let mut digits = 0u64;
        let mut punct = 0u64;
        let mut letter_counts = [0u64; 26];
        let mut total = 0u64;
        for s in rs.iter().step_by(3) {
            for c in s.text.chars() {
                total += 1;
                if c.is_ascii_alphabetic() {
                    letters += 1;
                    letter_counts[(c.to_ascii_lowercase() as u8 - b'a') as usize] += 1;
                } else if c.is_ascii_digit() {
                    digits += 1;
                } else {
                    punct += 1;
                }
            }
        }
        assert!(total > 100_000, "need at least 1e5 characters, got {total}");
        let t = total as f64;
        assert!((letters as f64 / t - 0.6).abs() <= 0.01);
        assert!((digits as f64 / t - 0.3).abs() <= 0.01);
        assert!((punct as f64 / t - 0.1).abs() <= 0.01);

        let expected = letters as f64 / 26.0;
        let stat: f64 = letter_counts
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - ChiSquared::new(25.0).unwrap().cdf(stat);
        assert!(p > 0.01, "letter chi2 {stat}, p {p}");
    }

    #[test]
    fn rs_lengths_match_input_histogram() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let vocab = bundled_train_vocabulary();
        let ls = sample_ls_corpus(&vocab, 9000, 3).unwrap();
        let hist = LengthHistogram::from_samples(&ls);
        let rs = sample_rs_corpus(&hist, 30000, 29).unwrap();
        let out = LengthHistogram::from_lengths(
            rs.iter().step_by(3).map(|s| s.text.chars().count()),
        );
        let n_out = out.total() as f64;
        let mut stat = 0.0;
        let mut dof = 0.0;
        for &(len, c) in hist.bins() {
            let p = c as f64 / hist.total() as f64;
            let e = p * n_out;
            if e < 5.0 {
                continue; // skip sparse bins per the usual chi-square rule
            }
            let o = out
                .bins()
                .iter()
                .find(|(l, _)| *l == len)
                .map_or(0, |(_, c)| *c) as f64;
            stat += (o - e).powi(2) / e;
            dof += 1.0;
        }
        let p = 1.0 - ChiSquared::new(dof - 1.0).unwrap().cdf(stat);
        assert!(p > 0.01, "length chi2 {stat}, dof {dof}, p {p}");
    }

    #[test]
    fn mix_ratio_extremes_and_midpoint() {
        let vocab = bundled_train_vocabulary();
        let ls_samples = sample_ls_corpus(&vocab, 3000, 7).unwrap();
        let hist = LengthHistogram::from_samples(&ls_samples);
        let ls = LsCorpus::new(vocab, 7).unwrap();
        let rs = RsCorpus::new(hist, 13).unwrap();

        let all_ls = mix_corpora(&rs, &ls, &CorpusMixSpec::new(0.0, 500, 3).unwrap());
        assert!(all_ls.iter().all(|s| s.corpus_kind == CorpusKind::Ls));
        let all_rs = mix_corpora(&rs, &ls, &CorpusMixSpec::new(1.0, 500, 3).unwrap());
        assert!(all_rs.iter().all(|s| s.corpus_kind == CorpusKind::Rs));

        let half = mix_corpora(&rs, &ls, &CorpusMixSpec::new(0.5, 20000, 3).unwrap());
        let frac = half
            .iter()
            .filter(|s| s.corpus_kind == CorpusKind::Rs)
            .count() as f64
            / half.len() as f64;
        assert!((frac - 0.5).abs() <= 0.02, "rs fraction {frac}");
    }

    #[test]
    fn split_eval_examples() {
        let vocab = Vocabulary::from_words(["cat"], "t").unwrap();
        let split = split_eval(vec!["Cat", "dog"], &vocab, |s| s);
        assert_eq!(split.in_vocab, vec!["Cat"]);
        assert_eq!(split.out_vocab, vec!["dog"]);

        let empty = Vocabulary::from_words(Vec::<&str>::new(), "t").unwrap();
        let split = split_eval(vec!["a", "b"], &empty, |s| s);
        assert!(split.in_vocab.is_empty());
        assert_eq!(split.out_vocab.len(), 2);
    }

    #[test]
    fn split_eval_benchmark_analogue_counts() {
        // 3000 labels of which exactly 1354 are vocabulary hits
        let vocab = Vocabulary::from_words(["hit"], "t").unwrap();
        let labels: Vec<String> = (0..3000)
            .map(|i| {
                if i < 1354 {
                    "Hit".to_string()
                } else {
                    format!("miss{i}")
                }
            })
            .collect();
        let split = split_eval(labels, &vocab, |s| s.as_str());
        assert_eq!(split.in_vocab.len(), 1354);
        assert_eq!(split.out_vocab.len(), 1646);
    }

    #[test]
    fn bundled_vocabularies_are_disjoint_and_sized() {
        let train = bundled_train_vocabulary();
        let reserve = bundled_reserve_vocabulary();
        assert_eq!(train.len(), 1500);
        assert_eq!(reserve.len(), 500);
        assert!(reserve.iter().all(|w| !train.contains(w)));
        assert!(train
            .iter()
            .all(|w| w.len() >= 2 && w.len() <= 7 && w.chars().all(|c| c.is_ascii_lowercase())));
    }

    proptest! {
        #[test]
        fn normalize_idempotent(s in "\\PC{1,24}") {
            if let Ok(once) = normalize_word(&s) {
                prop_assert_eq!(normalize_word(&once).unwrap(), once);
            }
        }

        #[test]
        fn split_partitions_everything(
            labels in proptest::collection::vec("[a-z]{1,6}", 1..60),
            vocab_words in proptest::collection::btree_set("[a-z]{1,6}", 1..20),
        ) {
            let vocab = Vocabulary::from_words(vocab_words.iter(), "t").unwrap();
            let n = labels.len();
            let split = split_eval(labels, &vocab, |s| s.as_str());
            prop_assert_eq!(split.in_vocab.len() + split.out_vocab.len(), n);
            prop_assert!(split.in_vocab.iter().all(|l| vocab.contains(&normalize_lossy(l))));
            prop_assert!(split.out_vocab.iter().all(|l| !vocab.contains(&normalize_lossy(l))));
        }
    }
}
