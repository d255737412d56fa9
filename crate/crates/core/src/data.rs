//! Data files compiled into the crate.

pub const KNOWLEDGE_BASE: &str = include_str!("../data/kb/knowledge_base.tsv");
pub const PHRASE_LEXICON: &str = include_str!("../data/kb/phrase_lexicon.tsv");
pub const GRAMMAR: &str = include_str!("../data/grammars/micro.cfg");
pub const GRAMMAR_INLINE: &str = include_str!("../data/grammars/micro-inline.cfg");
pub const GRAMMAR_EXTENDED: &str = include_str!("../data/grammars/micro-extended.cfg");
pub const NORMALIZATION_RULES: &str = include_str!("../data/rules/default.tsv");
pub const TASK_REFERENCES: &str = include_str!("../data/task/references.txt");
pub const TASK_CANDIDATES: &str = include_str!("../data/task/candidates.txt");
pub const TASK_SUITE: &str = include_str!("../data/task/suite.tsv");
