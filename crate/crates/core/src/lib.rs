//! Generation, filtering and evaluation toolkit for a non-recursive Nawatl
//! micro-grammar.
//!
//! * [`grammar`]: rule-file parser, validation, expansion, enumeration,
//!   symbolic counting and sampling.
//! * [`lexicon`]: the tagged knowledge base supplying lexical categories.
//! * [`filter`]: semantic acceptability filters over generated sentences.
//! * [`corpus`]: orthographic normalization, corpus merging and statistics.
//! * [`similarity`]: embedding-based ranking and Kendall's tau scoring.

pub mod corpus;
pub mod data;
pub mod filter;
pub mod grammar;
pub mod lexicon;
pub mod similarity;
