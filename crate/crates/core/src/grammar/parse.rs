//! Reader for the plain-text rule format.
//!
//! ```text
//! @start P
//! @lexicon n v
//! P -> ADV_T (N|V)
//! N -> ADJ (ART_|POS)+n
//! V -> PP_i NEG PV_j+v ADV_Q; i,j=1,2,3; i=j
//! NEG -> amo|axkeman|vide     # comment
//! ```

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{Grammar, JoinOp, PersonIndex, ProductionRule, RuleElement, Symbol};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
enum Item {
    Word(String),
    Join(JoinOp),
    Group(Vec<Vec<Item>>),
}

struct RuleLine<'a> {
    line: usize,
    lhs: String,
    body: &'a str,
    tail: Vec<&'a str>,
}

/// Parses a grammar file. Structural problems that the format can express
/// (undefined symbols, recursion, bad constraints) are left to
/// [`super::validate_grammar`].
pub fn parse_grammar(source: &str) -> Result<Grammar, ParseError> {
    let mut start = None;
    let mut lexical = BTreeSet::new();
    let mut person_indexed = BTreeSet::new();
    let mut nonterminals = BTreeSet::new();
    let mut lines = Vec::new();

    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(directive) = text.strip_prefix('@') {
            let mut words = directive.split_whitespace();
            let name = words.next().unwrap_or("");
            let args: Vec<String> = words.map(str::to_string).collect();
            match name {
                "start" => match args.as_slice() {
                    [s] => start = Some(s.clone()),
                    _ => return Err(err(line, "@start takes exactly one name")),
                },
                "lexicon" => {
                    nonterminals.extend(args.iter().cloned());
                    lexical.extend(args);
                }
                "indexed" => {
                    nonterminals.extend(args.iter().cloned());
                    person_indexed.extend(args);
                }
                other => return Err(err(line, format!("unknown directive @{other}"))),
            }
            continue;
        }

        let (head, body) = text
            .split_once("->")
            .or_else(|| text.split_once('→'))
            .ok_or_else(|| err(line, "expected `LHS -> RHS`"))?;
        let head = head.trim();
        if head.is_empty() || head.contains(char::is_whitespace) {
            return Err(err(line, format!("bad left-hand side `{head}`")));
        }
        let lhs = match split_index(head) {
            Some((name, PersonIndex::Var(_))) => {
                person_indexed.insert(name.to_string());
                name.to_string()
            }
            _ => head.to_string(),
        };
        nonterminals.insert(lhs.clone());
        let mut parts = body.split(';');
        let body = parts.next().unwrap_or("");
        lines.push(RuleLine {
            line,
            lhs,
            body,
            tail: parts.collect(),
        });
    }

    let resolver = Resolver {
        declared: &nonterminals,
        indexed: &person_indexed,
    };
    let mut rules: Vec<ProductionRule> = Vec::new();
    let mut alternatives: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut rule_counts: BTreeMap<String, usize> = BTreeMap::new();

    for rl in &lines {
        let top = parse_alternatives(rl.body, rl.line)?;
        let (domains, constraints) = parse_tail(&rl.tail, rl.line)?;

        let terminals: Option<Vec<String>> = top
            .iter()
            .map(|alt| match alt.as_slice() {
                [Item::Word(w)] => match resolver.resolve(w, rl.line) {
                    Ok(Resolved {
                        symbol: Symbol::Terminal(t),
                        index: None,
                        before: None,
                        after: None,
                    }) => Some(t),
                    _ => None,
                },
                _ => None,
            })
            .collect();

        match terminals {
            Some(ts) if domains.is_empty() && constraints.is_empty() && !ts.is_empty() => {
                alternatives.entry(rl.lhs.clone()).or_default().extend(ts);
            }
            _ => {
                for alt in top {
                    for seq in flatten_groups(&alt) {
                        let rhs = build_elements(&seq, &resolver, rl.line)?;
                        let k = rule_counts.entry(rl.lhs.clone()).or_insert(0);
                        *k += 1;
                        rules.push(ProductionRule {
                            id: format!("{}.{}", rl.lhs, k),
                            lhs: rl.lhs.clone(),
                            rhs,
                            domains: domains.clone(),
                            constraints: constraints.clone(),
                        });
                    }
                }
            }
        }
    }

    let start = match start {
        Some(s) => s,
        None => lines
            .first()
            .map(|l| l.lhs.clone())
            .ok_or_else(|| err(0, "grammar has no rules"))?,
    };

    Ok(Grammar {
        start,
        nonterminals,
        rules,
        alternatives,
        lexical,
        person_indexed,
    })
}

/// `NAME_x` with `x` a lowercase letter or a number.
fn split_index(word: &str) -> Option<(&str, PersonIndex)> {
    let (name, suffix) = word.rsplit_once('_')?;
    if name.is_empty() || suffix.is_empty() {
        return None;
    }
    if let Ok(k) = suffix.parse::<u8>() {
        return Some((name, PersonIndex::Fixed(k)));
    }
    let mut chars = suffix.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_lowercase() => Some((name, PersonIndex::Var(suffix.into()))),
        _ => None,
    }
}

struct Resolver<'a> {
    declared: &'a BTreeSet<String>,
    indexed: &'a BTreeSet<String>,
}

struct Resolved {
    symbol: Symbol,
    index: Option<PersonIndex>,
    before: Option<JoinOp>,
    after: Option<JoinOp>,
}

impl Resolver<'_> {
    fn resolve(&self, word: &str, line: usize) -> Result<Resolved, ParseError> {
        let mut word = word;
        let mut before = None;
        let mut after = None;
        if word.len() > 1 && word.starts_with('_') && !self.declared.contains(word) {
            before = Some(JoinOp::Space);
            word = &word[1..];
        }
        if self.declared.contains(word) {
            return Ok(Resolved {
                symbol: Symbol::NonTerminal(word.to_string()),
                index: None,
                before,
                after,
            });
        }
        if let Some(stripped) = word.strip_suffix('_') {
            if stripped.is_empty() {
                return Err(err(line, "stray `_`"));
            }
            after = Some(JoinOp::Space);
            word = stripped;
            if self.declared.contains(word) {
                return Ok(Resolved {
                    symbol: Symbol::NonTerminal(word.to_string()),
                    index: None,
                    before,
                    after,
                });
            }
        }
        if let Some((name, ix)) = split_index(word) {
            if self.indexed.contains(name) || self.declared.contains(name) {
                return Ok(Resolved {
                    symbol: Symbol::NonTerminal(name.to_string()),
                    index: Some(ix),
                    before,
                    after,
                });
            }
        }
        let symbol = if word == "vide" || word == "∅" {
            Symbol::Terminal(String::new())
        } else if word.chars().any(|c| c.is_ascii_uppercase()) {
            // Undeclared category name; reported by validation.
            Symbol::NonTerminal(word.to_string())
        } else {
            Symbol::Terminal(word.to_string())
        };
        Ok(Resolved {
            symbol,
            index: None,
            before,
            after,
        })
    }
}

fn parse_alternatives(body: &str, line: usize) -> Result<Vec<Vec<Item>>, ParseError> {
    let chars: Vec<char> = body.chars().collect();
    let mut pos = 0;
    let alts = parse_seq_list(&chars, &mut pos, line, false)?;
    if pos != chars.len() {
        return Err(err(line, "unbalanced `)`"));
    }
    Ok(alts)
}

fn parse_seq_list(
    chars: &[char],
    pos: &mut usize,
    line: usize,
    nested: bool,
) -> Result<Vec<Vec<Item>>, ParseError> {
    let mut alts = vec![Vec::new()];
    let mut word = String::new();
    let flush = |word: &mut String, alts: &mut Vec<Vec<Item>>| {
        if !word.is_empty() {
            let w = std::mem::take(word);
            if w == "_" {
                alts.last_mut().unwrap().push(Item::Join(JoinOp::Space));
            } else {
                alts.last_mut().unwrap().push(Item::Word(w));
            }
        }
    };
    while *pos < chars.len() {
        let c = chars[*pos];
        *pos += 1;
        match c {
            '(' => {
                flush(&mut word, &mut alts);
                let inner = parse_seq_list(chars, pos, line, true)?;
                alts.last_mut().unwrap().push(Item::Group(inner));
            }
            ')' => {
                flush(&mut word, &mut alts);
                if !nested {
                    *pos -= 1;
                }
                return Ok(alts);
            }
            '|' => {
                flush(&mut word, &mut alts);
                alts.push(Vec::new());
            }
            '+' | '⊕' => {
                flush(&mut word, &mut alts);
                alts.last_mut().unwrap().push(Item::Join(JoinOp::Concat));
            }
            c if c.is_whitespace() => flush(&mut word, &mut alts),
            c => word.push(c),
        }
    }
    flush(&mut word, &mut alts);
    if nested {
        return Err(err(line, "unclosed `(`"));
    }
    Ok(alts)
}

/// Expands groups into every branch combination, in document order.
fn flatten_groups(seq: &[Item]) -> Vec<Vec<Item>> {
    let mut out: Vec<Vec<Item>> = vec![Vec::new()];
    for item in seq {
        match item {
            Item::Group(branches) => {
                let expanded: Vec<Vec<Item>> =
                    branches.iter().flat_map(|b| flatten_groups(b)).collect();
                out = out
                    .into_iter()
                    .flat_map(|prefix| {
                        expanded.iter().map(move |branch| {
                            let mut s = prefix.clone();
                            s.extend(branch.iter().cloned());
                            s
                        })
                    })
                    .collect();
            }
            other => {
                for s in &mut out {
                    s.push(other.clone());
                }
            }
        }
    }
    out
}

fn build_elements(
    seq: &[Item],
    resolver: &Resolver<'_>,
    line: usize,
) -> Result<Vec<RuleElement>, ParseError> {
    let mut out: Vec<RuleElement> = Vec::new();
    let mut pending: Option<JoinOp> = None;
    for item in seq {
        match item {
            Item::Join(op) => pending = Some(pending.map_or(*op, |p| p.combine(*op))),
            Item::Word(w) => {
                let r = resolver.resolve(w, line)?;
                if let Some(b) = r.before {
                    pending = Some(pending.map_or(b, |p| p.combine(b)));
                }
                let join = match (out.is_empty(), pending) {
                    _ if r.symbol.is_vide() => JoinOp::Null,
                    (_, Some(j)) => j,
                    (true, None) => JoinOp::Concat,
                    (false, None) => JoinOp::Space,
                };
                out.push(RuleElement {
                    symbol: r.symbol,
                    join,
                    person_index: r.index,
                });
                pending = r.after;
            }
            Item::Group(_) => unreachable!("groups are flattened first"),
        }
    }
    Ok(out)
}

type Domains = BTreeMap<String, Vec<u8>>;

fn parse_tail(tail: &[&str], line: usize) -> Result<(Domains, Vec<(String, String)>), ParseError> {
    let mut domains = BTreeMap::new();
    let mut constraints = Vec::new();
    for seg in tail {
        let seg = seg.trim();
        if seg.is_empty() {
            continue;
        }
        let sides: Vec<&str> = seg.split('=').map(str::trim).collect();
        if sides.len() < 2 || sides.iter().any(|s| s.is_empty()) {
            return Err(err(line, format!("bad constraint `{seg}`")));
        }
        let values: Option<Vec<u8>> = sides[sides.len() - 1]
            .split(',')
            .map(|v| v.trim().parse().ok())
            .collect();
        match values {
            Some(values) if sides.len() == 2 => {
                for var in sides[0].split(',').map(str::trim) {
                    if !is_var(var) {
                        return Err(err(line, format!("bad index variable `{var}`")));
                    }
                    domains.insert(var.to_string(), values.clone());
                }
            }
            _ => {
                for pair in sides.windows(2) {
                    if !is_var(pair[0]) || !is_var(pair[1]) {
                        return Err(err(line, format!("bad constraint `{seg}`")));
                    }
                    constraints.push((pair[0].to_string(), pair[1].to_string()));
                }
            }
        }
    }
    Ok((domains, constraints))
}

fn is_var(s: &str) -> bool {
    let mut c = s.chars();
    matches!((c.next(), c.next()), (Some(ch), None) if ch.is_ascii_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nt(name: &str, join: JoinOp) -> RuleElement {
        RuleElement {
            symbol: Symbol::NonTerminal(name.into()),
            join,
            person_index: None,
        }
    }

    #[test]
    fn group_with_space_marker_and_concat() {
        let g = parse_grammar("@lexicon n\nN -> ADJ (ART_|POS)+n\nADJ -> a\nART -> b\nPOS -> c\n")
            .unwrap();
        assert_eq!(g.rules.len(), 2);
        assert_eq!(g.rules[0].id, "N.1");
        assert_eq!(
            g.rules[0].rhs,
            vec![
                nt("ADJ", JoinOp::Concat),
                nt("ART", JoinOp::Space),
                nt("n", JoinOp::Space)
            ]
        );
        assert_eq!(g.rules[1].id, "N.2");
        assert_eq!(
            g.rules[1].rhs,
            vec![
                nt("ADJ", JoinOp::Concat),
                nt("POS", JoinOp::Space),
                nt("n", JoinOp::Concat)
            ]
        );
    }

    #[test]
    fn indices_and_constraints() {
        let g = parse_grammar(
            "V -> PP_i NEG PV_j+v; i,j=1,2,3; i=j\nPP_i -> na|ta|ya\nPV_j -> ni|ti|vide\nNEG -> amo\n@lexicon v\n",
        )
        .unwrap();
        let r = &g.rules[0];
        assert_eq!(r.rhs[0].person_index, Some(PersonIndex::Var("i".into())));
        assert_eq!(r.rhs[2].person_index, Some(PersonIndex::Var("j".into())));
        assert_eq!(r.rhs[3].join, JoinOp::Concat);
        assert_eq!(r.domains["i"], vec![1, 2, 3]);
        assert_eq!(r.constraints, vec![("i".to_string(), "j".to_string())]);
        assert_eq!(g.alternatives["PV"], vec!["ni", "ti", ""]);
        assert!(g.person_indexed.contains("PP"));
    }

    #[test]
    fn fixed_index_and_underscore_names() {
        let g = parse_grammar(
            "@indexed PV\nV -> ADV_T PV_3+v\nADV_T -> x\nPV -> a|b|vide\n@lexicon v\n",
        )
        .unwrap();
        let r = &g.rules[0];
        assert_eq!(r.rhs[0].symbol, Symbol::NonTerminal("ADV_T".into()));
        assert_eq!(r.rhs[1].person_index, Some(PersonIndex::Fixed(3)));
    }

    #[test]
    fn bundled_grammars_parse() {
        let g = Grammar::bundled_inline();
        assert_eq!(g.start, "P");
        let ids: Vec<_> = g.rules.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["P.1", "P.2", "N.1", "N.2", "V.1", "V.2"]);
        assert_eq!(g.alternatives["ADV_T"], vec!["naman", "axcan", "axan", ""]);
        assert_eq!(Grammar::bundled().rules.len(), 6);
        assert_eq!(Grammar::bundled_extended().rules.len(), 9);
    }

    #[test]
    fn syntax_errors() {
        assert!(parse_grammar("P ADV_T\n").is_err());
        assert!(parse_grammar("P -> (A|B\n").is_err());
        assert!(parse_grammar("P -> A)\n").is_err());
        assert!(parse_grammar("@bogus x\nP -> a\n").is_err());
        assert!(parse_grammar("P -> A; i=\n").is_err());
        assert!(parse_grammar("# nothing\n").is_err());
    }

    #[test]
    fn rule_display_is_readable() {
        let g = Grammar::bundled_inline();
        assert_eq!(g.rules[4].to_string(), "V -> N NEG PV_3+v ADV_Q");
    }
}
