//! Orthographic normalization, corpus merging and corpus statistics.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },
    #[error("rule table line {line}: {message}")]
    RuleTable { line: usize, message: String },
    #[error("authentic {0} count is zero")]
    ZeroDenominator(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRule {
    pub pattern: String,
    /// Characters that must follow the match; `None` matches anywhere.
    pub right_context: Option<String>,
    pub replacement: String,
    pub priority: i32,
}

impl RewriteRule {
    fn matches_at(&self, chars: &[char], at: usize) -> bool {
        let p: Vec<char> = self.pattern.chars().collect();
        if at + p.len() > chars.len() || chars[at..at + p.len()] != p[..] {
            return false;
        }
        match &self.right_context {
            None => true,
            Some(set) => chars.get(at + p.len()).is_some_and(|c| set.contains(*c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationRuleSet {
    /// Sorted by priority; ties keep table order.
    rules: Vec<RewriteRule>,
    pub lowercase: bool,
    pub strip_diacritics: bool,
    pub collapse_double_consonants: bool,
}

impl Default for NormalizationRuleSet {
    /// The shipped rule table.
    fn default() -> Self {
        Self::parse(crate::data::NORMALIZATION_RULES).expect("shipped rule table parses")
    }
}

impl NormalizationRuleSet {
    pub fn new(mut rules: Vec<RewriteRule>) -> Self {
        rules.sort_by_key(|r| r.priority);
        Self {
            rules,
            lowercase: true,
            strip_diacritics: true,
            collapse_double_consonants: true,
        }
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    /// Reads a rule table: `pattern\tcontext\treplacement\tpriority` rows,
    /// `@flag true|false` lines, `#` comments and an optional header row.
    pub fn parse(src: &str) -> Result<Self, CorpusError> {
        let mut set = Self::new(Vec::new());
        let mut rules = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| CorpusError::RuleTable { line, message };
            let text = raw.trim_end_matches('\r');
            if text.trim().is_empty() || text.trim_start().starts_with('#') {
                continue;
            }
            if let Some(flag) = text.strip_prefix('@') {
                let mut parts = flag.split_whitespace();
                let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next())
                else {
                    return Err(err(format!("malformed flag `{text}`")));
                };
                let value = match value {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    v => return Err(err(format!("flag value `{v}` is not a boolean"))),
                };
                match name {
                    "lowercase" => set.lowercase = value,
                    "strip_diacritics" => set.strip_diacritics = value,
                    "collapse_double_consonants" => set.collapse_double_consonants = value,
                    other => return Err(err(format!("unknown flag `{other}`"))),
                }
                continue;
            }
            let cols: Vec<&str> = text.split('\t').collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            }
            if cols[0] == "pattern" {
                continue;
            }
            if cols[0].is_empty() {
                return Err(err("empty pattern".into()));
            }
            let priority = cols[3]
                .trim()
                .parse()
                .map_err(|_| err(format!("priority `{}` is not an integer", cols[3])))?;
            rules.push(RewriteRule {
                pattern: cols[0].to_string(),
                right_context: match cols[1] {
                    "" | "-" => None,
                    c => Some(c.to_string()),
                },
                replacement: cols[2].to_string(),
                priority,
            });
        }
        rules.sort_by_key(|r| r.priority);
        set.rules = rules;
        Ok(set)
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'A' | 'E' | 'I' | 'O' | 'U')
}

fn rewrite_pass(chars: &[char], rules: &[RewriteRule]) -> Vec<char> {
    let mut out = Vec::with_capacity(chars.len());
    let mut at = 0;
    'scan: while at < chars.len() {
        for r in rules {
            if r.matches_at(chars, at) {
                out.extend(r.replacement.chars());
                at += r.pattern.chars().count();
                continue 'scan;
            }
        }
        out.push(chars[at]);
        at += 1;
    }
    out
}

fn collapse(chars: &[char]) -> Vec<char> {
    let mut out: Vec<char> = Vec::with_capacity(chars.len());
    for &c in chars {
        if c.is_alphabetic() && !is_vowel(c) && out.last() == Some(&c) {
            continue;
        }
        out.push(c);
    }
    out
}

/// Unifies spelling: control characters and BOMs removed, lowercased,
/// diacritics stripped, rewrite rules applied, doubled consonants collapsed.
///
/// Rules and collapsing are repeated until the text stops changing, so the
/// result is a fixed point.
pub fn normalize(text: &str, rules: &NormalizationRuleSet) -> String {
    let mut s: String = text
        .chars()
        .filter_map(|c| match c {
            '\u{feff}' => None,
            '\t' => Some(' '),
            '\n' => Some('\n'),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect();
    if rules.lowercase {
        s = s.to_lowercase();
    }
    if rules.strip_diacritics {
        s = s.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect();
    }
    let mut chars: Vec<char> = s.chars().collect();
    loop {
        let mut next = rewrite_pass(&chars, &rules.rules);
        if rules.collapse_double_consonants {
            next = collapse(&next);
        }
        if next == chars {
            break;
        }
        chars = next;
    }
    chars.into_iter().collect()
}

/// [`normalize`] for raw bytes.
pub fn normalize_bytes(bytes: &[u8], rules: &NormalizationRuleSet) -> Result<String, CorpusError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CorpusError::Utf8 {
        line: 1 + bytes[..e.valid_up_to()]
            .iter()
            .filter(|b| **b == b'\n')
            .count(),
    })?;
    Ok(normalize(text, rules))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Non-empty input streams.
    pub documents: u64,
    pub sentences: u64,
    pub tokens: u64,
    /// Distinct case-folded tokens.
    pub types: u64,
}

impl CorpusStats {
    pub fn tokens_per_sentence(&self) -> f64 {
        if self.sentences == 0 {
            0.0
        } else {
            self.tokens as f64 / self.sentences as f64
        }
    }

    /// `sentences tokens types tokens/sentence`.
    pub fn row(&self) -> String {
        format!(
            "{} {} {} {:.2}",
            self.sentences,
            self.tokens,
            self.types,
            self.tokens_per_sentence()
        )
    }

    pub fn table(&self, label: &str) -> String {
        format!(
            "{:<12} {:>10} {:>10} {:>12} {:>10} {:>8}\n{:<12} {:>10} {:>10} {:>12} {:>10} {:>8.2}\n",
            "corpus", "documents", "sentences", "tokens", "types", "tok/sent",
            label, self.documents, self.sentences, self.tokens, self.types, self.tokens_per_sentence()
        )
    }

    /// Single-line JSON record.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }

    pub fn from_record(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.row())
    }
}

/// Mergeable statistics over one or more streams.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    documents: u64,
    sentences: u64,
    tokens: u64,
    types: HashSet<String>,
    open: bool,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one sentence of the current stream. Blank lines are ignored and a
    /// sentence-final period is dropped before whitespace tokenization.
    pub fn add_sentence(&mut self, line: &str) {
        let line = line.trim();
        let line = line.strip_suffix('.').unwrap_or(line);
        if line.trim().is_empty() {
            return;
        }
        if !self.open {
            self.open = true;
            self.documents += 1;
        }
        self.sentences += 1;
        for tok in line.split_whitespace() {
            self.tokens += 1;
            self.types.insert(tok.to_lowercase());
        }
    }

    /// Starts a new stream; the next sentence opens a new document.
    pub fn end_document(&mut self) {
        self.open = false;
    }

    /// Combines two accumulators as if their streams were read in sequence.
    pub fn merge(mut self, other: StatsAccumulator) -> StatsAccumulator {
        self.documents += other.documents;
        self.sentences += other.sentences;
        self.tokens += other.tokens;
        self.types.extend(other.types);
        self.open = false;
        self
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            documents: self.documents,
            sentences: self.sentences,
            tokens: self.tokens,
            types: self.types.len() as u64,
        }
    }
}

fn read_lines<R: BufRead>(
    mut reader: R,
    mut f: impl FnMut(&str) -> Result<(), CorpusError>,
) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        line += 1;
        let text = std::str::from_utf8(&buf).map_err(|_| CorpusError::Utf8 { line })?;
        f(text.trim_end_matches(['\n', '\r']))?;
    }
}

/// Statistics of a one-sentence-per-line stream.
pub fn compute_stats<R: BufRead>(reader: R) -> Result<CorpusStats, CorpusError> {
    let mut acc = StatsAccumulator::new();
    read_lines(reader, |l| {
        acc.add_sentence(l);
        Ok(())
    })?;
    Ok(acc.stats())
}

pub fn stats_of_str(text: &str) -> CorpusStats {
    let mut acc = StatsAccumulator::new();
    text.lines().for_each(|l| acc.add_sentence(l));
    acc.stats()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStats {
    pub authentic: CorpusStats,
    pub artificial: CorpusStats,
    pub merged: CorpusStats,
}

/// Writes the normalized authentic sentences followed by the normalized
/// artificial ones, one per line, and returns statistics of the output.
pub fn merge_corpora<A: BufRead, B: BufRead, W: Write>(
    authentic: A,
    artificial: B,
    rules: &NormalizationRuleSet,
    mut out: W,
) -> Result<MergeStats, CorpusError> {
    let one = |reader: &mut dyn BufRead, out: &mut W| -> Result<StatsAccumulator, CorpusError> {
        let mut acc = StatsAccumulator::new();
        read_lines(reader, |l| {
            let n = normalize(l, rules);
            if !n.trim().is_empty() {
                writeln!(out, "{n}")?;
                acc.add_sentence(&n);
            }
            Ok(())
        })?;
        Ok(acc)
    };
    let mut authentic = authentic;
    let mut artificial = artificial;
    let a = one(&mut authentic, &mut out)?;
    let b = one(&mut artificial, &mut out)?;
    out.flush()?;
    let (sa, sb) = (a.stats(), b.stats());
    Ok(MergeStats {
        authentic: sa,
        artificial: sb,
        merged: a.merge(b).stats(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationRatios {
    pub rho_tokens: f64,
    pub rho_sentences: f64,
}

impl fmt::Display for AugmentationRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rho_tokens {:.1}% rho_sentences {:.1}%",
            100.0 * self.rho_tokens,
            100.0 * self.rho_sentences
        )
    }
}

/// Size of the artificial corpus relative to the authentic one.
pub fn augmentation_ratios(
    authentic: &CorpusStats,
    artificial: &CorpusStats,
) -> Result<AugmentationRatios, CorpusError> {
    if authentic.tokens == 0 {
        return Err(CorpusError::ZeroDenominator("token"));
    }
    if authentic.sentences == 0 {
        return Err(CorpusError::ZeroDenominator("sentence"));
    }
    Ok(AugmentationRatios {
        rho_tokens: artificial.tokens as f64 / authentic.tokens as f64,
        rho_sentences: artificial.sentences as f64 / authentic.sentences as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(s: &str) -> String {
        normalize(s, &NormalizationRuleSet::default())
    }

    #[test]
    fn shipped_rules() {
        assert_eq!(norm("Axcan"), "axkan");
        assert_eq!(norm("chihua"), "chiwa");
        assert_eq!(norm("kalli"), "kali");
        assert_eq!(norm("Axcan kalli"), "axkan kali");
        assert_eq!(norm("cemanahuac"), "semanawak");
        assert_eq!(norm("quetzalli"), "ketzali");
        assert_eq!(norm("\u{feff}Tlahtōlli\u{7}"), "tlahtoli");
    }

    #[test]
    fn rule_table_errors() {
        assert!(matches!(
            NormalizationRuleSet::parse("c\t-\tk\n"),
            Err(CorpusError::RuleTable { line: 1, .. })
        ));
        assert!(NormalizationRuleSet::parse("@shout true\n").is_err());
        assert!(NormalizationRuleSet::parse("c\t-\tk\tfirst\n").is_err());
        let r = NormalizationRuleSet::parse("@lowercase false\nb\t-\tv\t2\na\t-\tb\t1\n").unwrap();
        assert!(!r.lowercase);
        assert_eq!(r.rules()[0].pattern, "a");
        assert_eq!(normalize("Ab", &r), "Av");
    }

    #[test]
    fn malformed_utf8() {
        let rules = NormalizationRuleSet::default();
        assert!(matches!(
            normalize_bytes(b"ok\n\xff", &rules),
            Err(CorpusError::Utf8 { line: 2 })
        ));
        assert!(matches!(
            compute_stats(&b"a b\n\xfe\n"[..]),
            Err(CorpusError::Utf8 { line: 2 })
        ));
    }

    #[test]
    fn stats_basics() {
        let s = stats_of_str("Ni kwa.\n\nni Kwa tlaxkali.\n");
        assert_eq!((s.documents, s.sentences, s.tokens, s.types), (1, 2, 5, 3));
        assert_eq!(s.row(), "2 5 3 2.50");
        let empty = stats_of_str("");
        assert_eq!(empty.row(), "0 0 0 0.00");
        assert_eq!(empty.documents, 0);
        assert_eq!(CorpusStats::from_record(&s.to_record()).unwrap(), s);
    }

    #[test]
    fn merging() {
        let rules = NormalizationRuleSet::default();
        let mut out = Vec::new();
        let m = merge_corpora(&b"Axcan kalli\n"[..], &b""[..], &rules, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "axkan kali\n");
        assert_eq!(m.merged, m.authentic);
        let mut out = Vec::new();
        let m = merge_corpora(&b"se\n"[..], &b"ome\n"[..], &rules, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "se\nome\n");
        assert_eq!(m.merged.sentences, 2);
        assert_eq!(m.merged.documents, 2);
    }

    #[test]
    fn ratios() {
        let stats = |tokens, sentences| CorpusStats {
            documents: 1,
            sentences,
            tokens,
            types: 1,
        };
        let r =
            augmentation_ratios(&stats(6_630_000, 417_000), &stats(4_600_000, 809_000)).unwrap();
        assert!((0.69..0.70).contains(&r.rho_tokens));
        assert!((1.93..1.95).contains(&r.rho_sentences));
        let same = augmentation_ratios(&stats(5, 2), &stats(5, 2)).unwrap();
        assert_eq!(same.to_string(), "rho_tokens 100.0% rho_sentences 100.0%");
        assert!(augmentation_ratios(&stats(0, 2), &stats(5, 2)).is_err());
        assert!(augmentation_ratios(&stats(3, 0), &stats(5, 2)).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "[a-zA-ZáéíóúāēīōūÁ chuqkwlt.,\u{feff}\t]{0,40}") {
            let once = norm(&s);
            prop_assert_eq!(norm(&once), once);
        }

        #[test]
        fn normalize_never_grows(s in "[a-zA-Z chuqkwlt]{0,40}") {
            prop_assert!(norm(&s).len() <= s.len());
        }

        #[test]
        fn stats_are_additive(
            a in proptest::collection::vec("[a-z]{1,4}( [a-z]{1,4}){0,5}", 0..8),
            b in proptest::collection::vec("[a-z]{1,4}( [a-z]{1,4}){0,5}", 0..8),
        ) {
            let (ta, tb) = (a.join("\n"), b.join("\n"));
            let both = stats_of_str(&format!("{ta}\n{tb}"));
            let (sa, sb) = (stats_of_str(&ta), stats_of_str(&tb));
            prop_assert_eq!(both.tokens, sa.tokens + sb.tokens);
            prop_assert_eq!(both.sentences, sa.sentences + sb.sentences);
            prop_assert!(both.types <= both.tokens);
        }

        #[test]
        fn accumulator_merge_matches_sequential_read(
            a in proptest::collection::vec("[a-cA-C]{1,3}( [a-c]{1,3}){0,3}", 1..6),
            b in proptest::collection::vec("[a-cA-C]{1,3}( [a-c]{1,3}){0,3}", 1..6),
        ) {
            let mut seq = StatsAccumulator::new();
            let mut left = StatsAccumulator::new();
            let mut right = StatsAccumulator::new();
            for l in &a { seq.add_sentence(l); left.add_sentence(l); }
            seq.end_document();
            for l in &b { seq.add_sentence(l); right.add_sentence(l); }
            prop_assert_eq!(left.merge(right).stats(), seq.stats());
        }
    }
}
