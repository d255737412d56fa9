//! Non-recursive context-free micro-grammar: data model, rule-file parser,
//! validation and the generation engine (expansion, enumeration, symbolic
//! counting and sampling).

mod engine;
mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::FilterError;
use crate::lexicon::{Animacy, Category};

pub use engine::{
    count_symbolic, enumerate, enumerate_into, expand, expand_from, sample, sample_with,
    CountReport, RuleTally, SampleOptions, Selection, SentenceSink, SinkError,
};
pub use parse::{parse_grammar, ParseError};
pub use validate::{validate_grammar, Diagnostic, DiagnosticKind};

/// How an element attaches to the element realized before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JoinOp {
    /// One space.
    Space,
    /// No separator (morpheme fusion, `+` in rule files).
    Concat,
    /// The element was elided and realizes to nothing.
    Null,
}

impl JoinOp {
    /// Joins crossed by an elided element merge: a space anywhere wins and
    /// `Null` is neutral.
    pub fn combine(self, other: JoinOp) -> JoinOp {
        match (self, other) {
            (JoinOp::Space, _) | (_, JoinOp::Space) => JoinOp::Space,
            (JoinOp::Concat, _) | (_, JoinOp::Concat) => JoinOp::Concat,
            _ => JoinOp::Null,
        }
    }
}

/// Person index attached to an occurrence of a person-indexed nonterminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PersonIndex {
    /// A variable such as `i`, ranging over the rule's domain.
    Var(String),
    /// A literal person, 1-based (`PV_3`).
    Fixed(u8),
}

impl fmt::Display for PersonIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PersonIndex::Var(v) => f.write_str(v),
            PersonIndex::Fixed(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Symbol {
    NonTerminal(String),
    /// Surface lexeme; the empty string is the vide alternative.
    Terminal(String),
}

impl Symbol {
    pub fn is_vide(&self) -> bool {
        matches!(self, Symbol::Terminal(s) if s.is_empty())
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::NonTerminal(n) => f.write_str(n),
            Symbol::Terminal(t) if t.is_empty() => f.write_str("vide"),
            Symbol::Terminal(t) => f.write_str(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleElement {
    pub symbol: Symbol,
    /// Join to the previous element. For the first element of a rule this is
    /// absorbed into the join of the element being expanded.
    pub join: JoinOp,
    pub person_index: Option<PersonIndex>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductionRule {
    /// `LHS.k`, numbered in document order after group expansion.
    pub id: String,
    pub lhs: String,
    pub rhs: Vec<RuleElement>,
    /// Value domain of each index variable (defaults to every person of the
    /// indexed nonterminal).
    pub domains: BTreeMap<String, Vec<u8>>,
    /// Equality constraints `a = b` between index variables.
    pub constraints: Vec<(String, String)>,
}

impl ProductionRule {
    /// Variables used by the rhs, in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for e in &self.rhs {
            if let Some(PersonIndex::Var(v)) = &e.person_index {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
        }
        out
    }
}

impl fmt::Display for ProductionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ->", self.lhs)?;
        for (i, e) in self.rhs.iter().enumerate() {
            match (i, e.join) {
                (0, _) => f.write_str(" ")?,
                (_, JoinOp::Concat) => f.write_str("+")?,
                _ => f.write_str(" ")?,
            }
            write!(f, "{}", e.symbol)?;
            if let Some(ix) = &e.person_index {
                write!(f, "_{ix}")?;
            }
        }
        for (a, b) in &self.constraints {
            write!(f, "; {a}={b}")?;
        }
        Ok(())
    }
}

/// A parsed micro-grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub start: String,
    /// Every name that appears on a left-hand side or in a directive.
    pub nonterminals: BTreeSet<String>,
    pub rules: Vec<ProductionRule>,
    /// Preterminal categories defined inline by terminal alternatives.
    pub alternatives: BTreeMap<String, Vec<String>>,
    /// Nonterminals whose alternatives come from the knowledge base.
    pub lexical: BTreeSet<String>,
    /// Nonterminals whose alternatives are ordered by grammatical person.
    pub person_indexed: BTreeSet<String>,
}

impl Grammar {
    pub fn rule(&self, id: &str) -> Option<&ProductionRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn rules_for<'g>(&'g self, lhs: &'g str) -> impl Iterator<Item = &'g ProductionRule> + 'g {
        self.rules.iter().filter(move |r| r.lhs == lhs)
    }

    pub fn start_rules(&self) -> impl Iterator<Item = &ProductionRule> {
        self.rules_for(&self.start)
    }

    /// The printed rules of the shipped grammar, every category bound to the
    /// knowledge base.
    pub fn bundled() -> Grammar {
        parse_grammar(crate::data::GRAMMAR).expect("bundled grammar parses")
    }

    /// The printed rules with the printed inline marker alternatives; only
    /// `n` and `v` come from a knowledge base.
    pub fn bundled_inline() -> Grammar {
        parse_grammar(crate::data::GRAMMAR_INLINE).expect("bundled grammar parses")
    }

    /// The printed rules plus object-noun shapes.
    pub fn bundled_extended() -> Grammar {
        parse_grammar(crate::data::GRAMMAR_EXTENDED).expect("bundled grammar parses")
    }
}

/// One choice point in a derivation, in preorder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivationStep {
    /// A production rule was chosen for `lhs`, with every index variable bound.
    Rule {
        lhs: String,
        id: String,
        assignment: Vec<(String, u8)>,
    },
    /// Alternative `index` (0-based, document order) of a preterminal.
    Terminal { nonterminal: String, index: usize },
}

/// A realized preterminal: the category name it was drawn from, its surface
/// form and, for knowledge-base categories, its animacy tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalUse {
    pub category: String,
    pub surface: String,
    pub animacy: Option<Animacy>,
}

impl LexicalUse {
    pub fn is(&self, category: Category) -> bool {
        self.category == category.name()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSentence {
    pub text: String,
    pub tokens: Vec<String>,
    pub derivation: Vec<DerivationStep>,
    pub lexical_uses: Vec<LexicalUse>,
}

impl GeneratedSentence {
    /// Capitalized with a final period, the way example sentences are quoted.
    pub fn display(&self) -> String {
        let mut chars = self.text.chars();
        match chars.next() {
            Some(first) => format!("{}{}.", first.to_uppercase(), chars.as_str()),
            None => String::new(),
        }
    }

    /// Selections that replay this sentence through [`expand`].
    pub fn replay(&self) -> Vec<Selection> {
        self.derivation.iter().map(Selection::from).collect()
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("invalid grammar:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error("recursion detected: {}", .0.join(" -> "))]
    Recursion(Vec<String>),
    #[error("count overflows 64 bits")]
    Overflow,
    #[error("unknown nonterminal `{0}`")]
    UnknownNonTerminal(String),
    #[error("constraint {left}={right} violated: {left}={left_value}, {right}={right_value}")]
    ConstraintViolation {
        left: String,
        right: String,
        left_value: u8,
        right_value: u8,
    },
    #[error("index {var}={value} is outside its domain in rule {rule}")]
    OutOfDomain {
        rule: String,
        var: String,
        value: u8,
    },
    #[error("`{surface}` is not an alternative of {nonterminal}")]
    UnknownForm {
        nonterminal: String,
        surface: String,
    },
    #[error("alternative #{index} does not exist for {nonterminal}")]
    NoSuchAlternative { nonterminal: String, index: usize },
    #[error("rule `{rule}` does not expand {nonterminal}")]
    WrongRule { nonterminal: String, rule: String },
    #[error("selection {found} does not fit choice point {nonterminal}")]
    SelectionMismatch { nonterminal: String, found: String },
    #[error("ran out of selections at choice point {0}")]
    MissingSelection(String),
    #[error("{0} selections left over after the derivation completed")]
    ExtraSelections(usize),
    #[error("no sentence accepted after {0} attempts")]
    SampleExhausted(usize),
    #[error("nothing to sample: the grammar derives no sentence")]
    EmptyLanguage,
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("sink failed: {0}")]
    Sink(SinkError),
}
