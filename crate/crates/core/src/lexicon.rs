//! Tagged knowledge base binding lexical categories to surface forms.
//!
//! The on-disk format is a UTF-8 TSV file with a mandatory header row
//! `surface  category  animacy  gloss`. Lines starting with `#` are comments.
//! The empty ("vide") alternative is written as `∅` and loaded as the empty
//! string.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved surface token for the empty alternative.
pub const VIDE_TOKEN: &str = "∅";

const HEADER: [&str; 4] = ["surface", "category", "animacy", "gloss"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("knowledge base is empty")]
    Empty,
    #[error("line {line}: expected header `surface\\tcategory\\tanimacy\\tgloss`")]
    MissingHeader { line: usize },
    #[error("line {line}: expected 4 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: unknown category `{name}`")]
    UnknownCategory { line: usize, name: String },
    #[error("unknown category `{0}`")]
    NoSuchCategory(String),
    #[error("line {line}: unknown animacy tag `{tag}`")]
    BadAnimacy { line: usize, tag: String },
    #[error("line {line}: `{surface}` ({category}) needs an animacy tag")]
    MissingAnimacy {
        line: usize,
        surface: String,
        category: Category,
    },
    #[error("line {line}: marker `{surface}` ({category}) cannot carry animacy `{animacy}`")]
    MarkerAnimacy {
        line: usize,
        surface: String,
        category: Category,
        animacy: Animacy,
    },
    #[error(
        "line {line}: surface form `{surface}` must be a single non-empty token (use `∅` for vide)"
    )]
    BadSurface { line: usize, surface: String },
    #[error("line {line}: duplicate entry `{surface}` ({category})")]
    Duplicate {
        line: usize,
        surface: String,
        category: Category,
    },
}

/// Grammatical category of a lexical entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Noun,
    Verb,
    Adj,
    AdvT,
    AdvQ,
    Art,
    Pos,
    Pp,
    Pv,
    Neg,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Noun,
        Category::Verb,
        Category::Adj,
        Category::AdvT,
        Category::AdvQ,
        Category::Art,
        Category::Pos,
        Category::Pp,
        Category::Pv,
        Category::Neg,
    ];

    /// Name used in knowledge-base files and as the grammar nonterminal.
    pub fn name(self) -> &'static str {
        match self {
            Category::Noun => "n",
            Category::Verb => "v",
            Category::Adj => "ADJ",
            Category::AdvT => "ADV_T",
            Category::AdvQ => "ADV_Q",
            Category::Art => "ART",
            Category::Pos => "POS",
            Category::Pp => "PP",
            Category::Pv => "PV",
            Category::Neg => "NEG",
        }
    }

    /// Nouns and verbs carry a real animacy tag; markers are fixed to `Both`.
    pub fn is_content(self) -> bool {
        matches!(self, Category::Noun | Category::Verb)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LexiconError::NoSuchCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Animacy {
    Animate,
    Inanimate,
    Both,
}

impl Animacy {
    /// Two tags are compatible when they match or either side is `Both`.
    pub fn compatible(self, other: Animacy) -> bool {
        self == Animacy::Both || other == Animacy::Both || self == other
    }

    fn tag(self) -> &'static str {
        match self {
            Animacy::Animate => "animate",
            Animacy::Inanimate => "inanimate",
            Animacy::Both => "both",
        }
    }
}

impl fmt::Display for Animacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexicalEntry {
    /// Surface form; empty for the vide alternative.
    pub surface: String,
    pub category: Category,
    pub animacy: Animacy,
    pub gloss: String,
}

impl LexicalEntry {
    pub fn is_vide(&self) -> bool {
        self.surface.is_empty()
    }
}

/// Immutable, validated set of lexical entries in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    entries: Vec<LexicalEntry>,
    by_category: [Vec<usize>; 10],
}

impl KnowledgeBase {
    /// Builds a knowledge base from entries, enforcing the same invariants as
    /// [`load_kb`]. Line numbers in errors are 1-based entry positions.
    pub fn from_entries(entries: Vec<LexicalEntry>) -> Result<Self, LexiconError> {
        if entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        let mut seen = HashSet::new();
        let mut by_category: [Vec<usize>; 10] = Default::default();
        for (i, e) in entries.iter().enumerate() {
            let line = i + 1;
            check_surface(&e.surface, line)?;
            if !e.category.is_content() && e.animacy != Animacy::Both {
                return Err(LexiconError::MarkerAnimacy {
                    line,
                    surface: e.surface.clone(),
                    category: e.category,
                    animacy: e.animacy,
                });
            }
            if !seen.insert((e.surface.as_str(), e.category)) {
                return Err(LexiconError::Duplicate {
                    line,
                    surface: e.surface.clone(),
                    category: e.category,
                });
            }
            by_category[e.category.slot()].push(i);
        }
        Ok(Self {
            entries,
            by_category,
        })
    }

    pub fn entries(&self) -> &[LexicalEntry] {
        &self.entries
    }

    /// Entries of one category in document order.
    pub fn category(&self, category: Category) -> impl Iterator<Item = &LexicalEntry> + '_ {
        self.by_category[category.slot()]
            .iter()
            .map(move |&i| &self.entries[i])
    }

    pub fn cardinality(&self, category: Category) -> usize {
        self.by_category[category.slot()].len()
    }

    /// Looks up an entry by surface form within a category.
    pub fn find(&self, category: Category, surface: &str) -> Option<&LexicalEntry> {
        self.category(category).find(|e| e.surface == surface)
    }

    /// Serializes to the TSV format accepted by [`load_kb`].
    pub fn render(&self) -> String {
        let mut out = HEADER.join("\t");
        out.push('\n');
        for e in &self.entries {
            let surface = if e.is_vide() { VIDE_TOKEN } else { &e.surface };
            let animacy = if e.category.is_content() {
                e.animacy.tag()
            } else {
                "-"
            };
            out.push_str(&format!(
                "{surface}\t{}\t{animacy}\t{}\n",
                e.category, e.gloss
            ));
        }
        out
    }
}

fn check_surface(surface: &str, line: usize) -> Result<(), LexiconError> {
    if surface.chars().any(char::is_whitespace) || surface == VIDE_TOKEN {
        return Err(LexiconError::BadSurface {
            line,
            surface: surface.to_string(),
        });
    }
    Ok(())
}

/// Parses and validates a knowledge-base TSV document.
pub fn load_kb(source: &str) -> Result<KnowledgeBase, LexiconError> {
    let source = source.strip_prefix('\u{feff}').unwrap_or(source);
    let mut header_seen = false;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if !header_seen {
            if cols.len() != 4 || cols.iter().zip(HEADER).any(|(c, h)| c.trim() != h) {
                return Err(LexiconError::MissingHeader { line });
            }
            header_seen = true;
            continue;
        }
        if cols.len() != 4 {
            return Err(LexiconError::Columns {
                line,
                found: cols.len(),
            });
        }
        let surface_col = cols[0].trim();
        let category: Category =
            cols[1]
                .trim()
                .parse()
                .map_err(|_| LexiconError::UnknownCategory {
                    line,
                    name: cols[1].trim().to_string(),
                })?;
        let surface = if surface_col == VIDE_TOKEN {
            String::new()
        } else if surface_col.is_empty() {
            return Err(LexiconError::BadSurface {
                line,
                surface: String::new(),
            });
        } else {
            check_surface(surface_col, line)?;
            surface_col.to_string()
        };

        let tag = cols[2].trim();
        let animacy = match tag {
            "animate" => Some(Animacy::Animate),
            "inanimate" => Some(Animacy::Inanimate),
            "both" => Some(Animacy::Both),
            "-" | "" => None,
            other => {
                return Err(LexiconError::BadAnimacy {
                    line,
                    tag: other.to_string(),
                })
            }
        };
        let animacy = match (category.is_content(), animacy) {
            (true, Some(a)) => a,
            (true, None) => {
                return Err(LexiconError::MissingAnimacy {
                    line,
                    surface,
                    category,
                })
            }
            (false, None | Some(Animacy::Both)) => Animacy::Both,
            (false, Some(a)) => {
                return Err(LexiconError::MarkerAnimacy {
                    line,
                    surface,
                    category,
                    animacy: a,
                })
            }
        };

        if !seen.insert((surface.clone(), category)) {
            return Err(LexiconError::Duplicate {
                line,
                surface,
                category,
            });
        }
        entries.push(LexicalEntry {
            surface,
            category,
            animacy,
            gloss: cols[3].trim().to_string(),
        });
    }

    if entries.is_empty() {
        return Err(LexiconError::Empty);
    }
    KnowledgeBase::from_entries(entries)
}

/// Document-ordered entries of the category named `name`.
pub fn entries_for<'k>(
    kb: &'k KnowledgeBase,
    name: &str,
) -> Result<Vec<&'k LexicalEntry>, LexiconError> {
    let category: Category = name.parse()?;
    Ok(kb.category(category).collect())
}

/// The knowledge base shipped with the crate.
pub fn bundled() -> KnowledgeBase {
    load_kb(crate::data::KNOWLEDGE_BASE).expect("bundled knowledge base is valid")
}
