//! Semantic acceptability filters applied to generated sentences.

use std::collections::HashSet;

use thiserror::Error;

use crate::grammar::{GeneratedSentence, LexicalUse};
use crate::lexicon::{Animacy, Category, KnowledgeBase};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("no animacy tag for {category} `{surface}`")]
    Untagged { category: String, surface: String },
    #[error("unknown filter `{0}` (known: animacy, no_repeat)")]
    UnknownFilter(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterVerdict {
    pub accepted: bool,
    /// Name of the first filter that refused the sentence.
    pub rejecting_filter: Option<String>,
    pub reason: String,
}

impl FilterVerdict {
    pub fn accept() -> Self {
        Self {
            accepted: true,
            rejecting_filter: None,
            reason: String::new(),
        }
    }

    pub fn reject(filter: &str, reason: impl Into<String>) -> Self {
        Self {
            accepted: false,
            rejecting_filter: Some(filter.to_string()),
            reason: reason.into(),
        }
    }
}

pub trait SentenceFilter: Send + Sync {
    fn name(&self) -> &str;
    fn check(
        &self,
        sentence: &GeneratedSentence,
        kb: &KnowledgeBase,
    ) -> Result<FilterVerdict, FilterError>;
}

/// Rejects a sentence when a noun and a verb in it have incompatible
/// animacy tags.
#[derive(Debug, Default, Clone, Copy)]
pub struct AnimacyFilter;

fn animacy_of(
    u: &LexicalUse,
    category: Category,
    kb: &KnowledgeBase,
) -> Result<Animacy, FilterError> {
    u.animacy
        .or_else(|| kb.find(category, &u.surface).map(|e| e.animacy))
        .ok_or_else(|| FilterError::Untagged {
            category: u.category.clone(),
            surface: u.surface.clone(),
        })
}

impl SentenceFilter for AnimacyFilter {
    fn name(&self) -> &str {
        "animacy"
    }

    fn check(
        &self,
        sentence: &GeneratedSentence,
        kb: &KnowledgeBase,
    ) -> Result<FilterVerdict, FilterError> {
        let realized = |c: Category| {
            sentence
                .lexical_uses
                .iter()
                .filter(move |u| u.is(c) && !u.surface.is_empty())
        };
        for noun in realized(Category::Noun) {
            let a = animacy_of(noun, Category::Noun, kb)?;
            for verb in realized(Category::Verb) {
                let b = animacy_of(verb, Category::Verb, kb)?;
                if !a.compatible(b) {
                    return Ok(FilterVerdict::reject(
                        self.name(),
                        format!(
                            "{} noun `{}` with {} verb `{}`",
                            a, noun.surface, b, verb.surface
                        ),
                    ));
                }
            }
        }
        Ok(FilterVerdict::accept())
    }
}

/// Rejects a sentence that uses the same noun twice.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoRepeatFilter;

impl SentenceFilter for NoRepeatFilter {
    fn name(&self) -> &str {
        "no_repeat"
    }

    fn check(
        &self,
        sentence: &GeneratedSentence,
        _kb: &KnowledgeBase,
    ) -> Result<FilterVerdict, FilterError> {
        let mut seen = HashSet::new();
        for u in sentence
            .lexical_uses
            .iter()
            .filter(|u| u.is(Category::Noun))
        {
            if !u.surface.is_empty() && !seen.insert(u.surface.as_str()) {
                return Ok(FilterVerdict::reject(
                    self.name(),
                    format!("noun `{}` repeated", u.surface),
                ));
            }
        }
        Ok(FilterVerdict::accept())
    }
}

/// Conjunction of filters, checked in order; the first rejection wins.
#[derive(Default)]
pub struct FilterPipeline {
    filters: Vec<Box<dyn SentenceFilter>>,
}

impl FilterPipeline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, filter: impl SentenceFilter + 'static) -> Self {
        self.filters.push(Box::new(filter));
        self
    }

    pub fn push(&mut self, filter: Box<dyn SentenceFilter>) {
        self.filters.push(filter);
    }

    /// Builds a pipeline from filter names (`animacy`, `no_repeat`).
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, FilterError> {
        let mut p = Self::new();
        for name in names {
            match name.as_ref() {
                "animacy" => p.push(Box::new(AnimacyFilter)),
                "no_repeat" | "no-repeat" => p.push(Box::new(NoRepeatFilter)),
                other => return Err(FilterError::UnknownFilter(other.to_string())),
            }
        }
        Ok(p)
    }

    /// Both shipped filters.
    pub fn standard() -> Self {
        Self::new().with(AnimacyFilter).with(NoRepeatFilter)
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.filters.iter().map(|f| f.name()).collect()
    }

    pub fn apply(
        &self,
        sentence: &GeneratedSentence,
        kb: &KnowledgeBase,
    ) -> Result<FilterVerdict, FilterError> {
        for f in &self.filters {
            let v = f.check(sentence, kb)?;
            if !v.accepted {
                return Ok(v);
            }
        }
        Ok(FilterVerdict::accept())
    }
}

impl std::fmt::Debug for FilterPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

/// Accepted sentences and rejected ones with their verdicts.
pub type Partition<'s> = (
    Vec<&'s GeneratedSentence>,
    Vec<(&'s GeneratedSentence, FilterVerdict)>,
);

/// Splits `sentences` into accepted sentences and rejection verdicts.
pub fn apply_pipeline<'s>(
    pipeline: &FilterPipeline,
    sentences: &'s [GeneratedSentence],
    kb: &KnowledgeBase,
) -> Result<Partition<'s>, FilterError> {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for s in sentences {
        let v = pipeline.apply(s, kb)?;
        if v.accepted {
            accepted.push(s);
        } else {
            rejected.push((s, v));
        }
    }
    Ok((accepted, rejected))
}

/// Header of the rejection log.
pub const REJECTION_HEADER: &str = "sentence\tfilter\treason";

/// One tab-separated rejection log line (no newline).
pub fn rejection_record(sentence: &GeneratedSentence, verdict: &FilterVerdict) -> String {
    let clean = |s: &str| s.replace(['\t', '\n'], " ");
    format!(
        "{}\t{}\t{}",
        clean(&sentence.text),
        verdict.rejecting_filter.as_deref().unwrap_or("-"),
        clean(&verdict.reason)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::load_kb;

    fn kb() -> KnowledgeBase {
        load_kb(
            "surface\tcategory\tanimacy\tgloss\n\
             tatzin\tn\tanimate\tfather\n\
             mihkailwitl\tn\tinanimate\tday of the dead\n\
             miki\tv\tanimate\tdie\n\
             ixpoliwi\tv\tboth\tget lost\n",
        )
        .unwrap()
    }

    fn sentence(words: &[(&str, &str)]) -> GeneratedSentence {
        GeneratedSentence {
            text: words.iter().map(|w| w.1).collect::<Vec<_>>().join(" "),
            tokens: words.iter().map(|w| w.1.to_string()).collect(),
            derivation: vec![],
            lexical_uses: words
                .iter()
                .map(|(c, s)| LexicalUse {
                    category: c.to_string(),
                    surface: s.to_string(),
                    animacy: None,
                })
                .collect(),
        }
    }

    #[test]
    fn animacy_pairs() {
        let kb = kb();
        let f = AnimacyFilter;
        assert!(
            f.check(&sentence(&[("n", "tatzin"), ("v", "miki")]), &kb)
                .unwrap()
                .accepted
        );
        let v = f
            .check(&sentence(&[("n", "mihkailwitl"), ("v", "miki")]), &kb)
            .unwrap();
        assert!(!v.accepted);
        assert_eq!(v.rejecting_filter.as_deref(), Some("animacy"));
        assert!(
            f.check(&sentence(&[("n", "mihkailwitl"), ("v", "ixpoliwi")]), &kb)
                .unwrap()
                .accepted
        );
    }

    #[test]
    fn untagged_word_is_an_error() {
        let err = AnimacyFilter
            .check(&sentence(&[("n", "kali"), ("v", "miki")]), &kb())
            .unwrap_err();
        assert!(matches!(err, FilterError::Untagged { .. }));
    }

    #[test]
    fn no_repeat() {
        let kb = kb();
        assert!(
            !NoRepeatFilter
                .check(
                    &sentence(&[("n", "tatzin"), ("v", "miki"), ("n", "tatzin")]),
                    &kb
                )
                .unwrap()
                .accepted
        );
        assert!(
            NoRepeatFilter
                .check(&sentence(&[("n", "tatzin"), ("n", "mihkailwitl")]), &kb)
                .unwrap()
                .accepted
        );
    }

    #[test]
    fn pipeline_is_a_conjunction() {
        let kb = kb();
        let p = FilterPipeline::from_names(&["no_repeat", "animacy"]).unwrap();
        let s = sentence(&[("n", "mihkailwitl"), ("v", "miki"), ("n", "mihkailwitl")]);
        let v = p.apply(&s, &kb).unwrap();
        assert_eq!(v.rejecting_filter.as_deref(), Some("no_repeat"));
        assert!(FilterPipeline::new().apply(&s, &kb).unwrap().accepted);
        assert!(matches!(
            FilterPipeline::from_names(&["spelling"]),
            Err(FilterError::UnknownFilter(_))
        ));
        let line = rejection_record(&s, &v);
        assert_eq!(line.split('\t').count(), 3);
        assert!(line.starts_with("mihkailwitl miki mihkailwitl\tno_repeat\t"));
    }
}
