//! Test oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use microgrammar::grammar::{Grammar, PersonIndex, Symbol};
use microgrammar::lexicon::{Category, KnowledgeBase, LexicalEntry};
use rand::seq::SliceRandom;
use rand::Rng;

/// Derivation counts found by rewriting sentential forms leftmost-first,
/// with no memoization or product formulas.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub total: u64,
    pub per_rule: BTreeMap<String, u64>,
    /// Concatenated terminals of every derivation, spaces removed.
    pub yields: HashMap<String, u64>,
}

#[derive(Clone, Debug)]
enum Item {
    Nt(String),
    Word(String),
}

fn alternatives(g: &Grammar, kb: &KnowledgeBase, nt: &str) -> Option<Vec<String>> {
    if let Some(a) = g.alternatives.get(nt) {
        return Some(a.clone());
    }
    if g.lexical.contains(nt) {
        let c: Category = nt.parse().unwrap();
        return Some(kb.category(c).map(|e| e.surface.clone()).collect());
    }
    None
}

pub fn brute_force(g: &Grammar, kb: &KnowledgeBase) -> Tally {
    let mut tally = Tally::default();
    for r in &g.rules {
        tally.per_rule.insert(r.id.clone(), 0);
    }
    let mut used = Vec::new();
    rewrite(
        g,
        kb,
        vec![Item::Nt(g.start.clone())],
        &mut used,
        &mut tally,
    );
    tally
}

fn rewrite(
    g: &Grammar,
    kb: &KnowledgeBase,
    form: Vec<Item>,
    used: &mut Vec<String>,
    tally: &mut Tally,
) {
    let Some(at) = form.iter().position(|i| matches!(i, Item::Nt(_))) else {
        tally.total += 1;
        let mut rules = used.clone();
        rules.sort();
        rules.dedup();
        for r in rules {
            *tally.per_rule.get_mut(&r).unwrap() += 1;
        }
        let text: String = form
            .iter()
            .map(|i| match i {
                Item::Word(w) => w.as_str(),
                Item::Nt(_) => unreachable!(),
            })
            .collect();
        *tally.yields.entry(text).or_default() += 1;
        return;
    };
    let Item::Nt(nt) = &form[at] else {
        unreachable!()
    };
    if let Some(alts) = alternatives(g, kb, nt) {
        for a in alts {
            let mut next = form.clone();
            next[at] = Item::Word(a);
            rewrite(g, kb, next, used, tally);
        }
        return;
    }
    for rule in g.rules.iter().filter(|r| &r.lhs == nt) {
        let vars = rule.variables();
        for values in assignments(g, kb, rule, &vars) {
            let mut body = Vec::new();
            for e in &rule.rhs {
                body.push(match (&e.symbol, &e.person_index) {
                    (Symbol::Terminal(t), _) => Item::Word(t.clone()),
                    (Symbol::NonTerminal(n), None) => Item::Nt(n.clone()),
                    (Symbol::NonTerminal(n), Some(ix)) => {
                        let k = match ix {
                            PersonIndex::Fixed(k) => *k,
                            PersonIndex::Var(v) => {
                                values[vars.iter().position(|x| x == v).unwrap()]
                            }
                        };
                        Item::Word(alternatives(g, kb, n).unwrap()[k as usize - 1].clone())
                    }
                });
            }
            let mut next = form[..at].to_vec();
            next.extend(body);
            next.extend_from_slice(&form[at + 1..]);
            used.push(rule.id.clone());
            rewrite(g, kb, next, used, tally);
            used.pop();
        }
    }
}

fn assignments(
    g: &Grammar,
    kb: &KnowledgeBase,
    rule: &microgrammar::grammar::ProductionRule,
    vars: &[&str],
) -> Vec<Vec<u8>> {
    let domain = |v: &str| -> Vec<u8> {
        if let Some(d) = rule.domains.get(v) {
            return d.clone();
        }
        let n = rule
            .rhs
            .iter()
            .filter(|e| e.person_index == Some(PersonIndex::Var(v.to_string())))
            .map(|e| match &e.symbol {
                Symbol::NonTerminal(n) => alternatives(g, kb, n).unwrap().len(),
                Symbol::Terminal(_) => unreachable!(),
            })
            .min()
            .unwrap();
        (1..=n as u8).collect()
    };
    let mut out: Vec<Vec<u8>> = vec![vec![]];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                domain(v).into_iter().map(move |x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out.retain(|vals| {
        rule.constraints.iter().all(|(a, b)| {
            let pos = |x: &String| vars.iter().position(|v| v == x).unwrap();
            vals[pos(a)] == vals[pos(b)]
        })
    });
    out
}

/// A random sub-lexicon of `kb`: each category keeps a random subset of its
/// entries, nouns and verbs possibly none. Person-indexed categories keep
/// all of theirs so fixed indices stay in range.
pub fn reduced_kb<R: Rng>(kb: &KnowledgeBase, rng: &mut R, max_content: usize) -> KnowledgeBase {
    let mut entries: Vec<LexicalEntry> = Vec::new();
    for c in Category::ALL {
        let all: Vec<&LexicalEntry> = kb.category(c).collect();
        let keep = match c {
            Category::Pp | Category::Pv | Category::Pos => all.len(),
            Category::Noun | Category::Verb => rng.gen_range(0..=max_content.min(all.len())),
            _ => rng.gen_range(1..=all.len()),
        };
        let mut chosen: Vec<&LexicalEntry> = all.choose_multiple(rng, keep).copied().collect();
        chosen.sort_by_key(|e| all.iter().position(|x| std::ptr::eq(*x, *e)));
        entries.extend(chosen.into_iter().cloned());
    }
    KnowledgeBase::from_entries(entries).unwrap()
}
