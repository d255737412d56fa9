use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Grammar, PersonIndex, Symbol};
use crate::lexicon::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    UnknownStart,
    Undefined,
    ConflictingDefinition,
    UnknownLexicalCategory,
    EmptyRhs,
    Recursion,
    IndexOnUnindexed,
    IndexedNotPreterminal,
    IndexOutOfRange,
    ConstraintVariable,
}

impl DiagnosticKind {
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticKind::UnknownStart => "unknown start",
            DiagnosticKind::Undefined => "undefined nonterminal",
            DiagnosticKind::ConflictingDefinition => "conflicting definition",
            DiagnosticKind::UnknownLexicalCategory => "unknown lexical category",
            DiagnosticKind::EmptyRhs => "empty right-hand side",
            DiagnosticKind::Recursion => "recursion detected",
            DiagnosticKind::IndexOnUnindexed => "index on unindexed nonterminal",
            DiagnosticKind::IndexedNotPreterminal => "indexed nonterminal is not a preterminal",
            DiagnosticKind::IndexOutOfRange => "person index out of range",
            DiagnosticKind::ConstraintVariable => "bad constraint variable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Offending symbol or rule id.
    pub subject: String,
    pub detail: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.subject)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

fn diag(kind: DiagnosticKind, subject: impl Into<String>, detail: impl Into<String>) -> Diagnostic {
    Diagnostic {
        kind,
        subject: subject.into(),
        detail: detail.into(),
    }
}

/// Checks every structural invariant of `g`; an empty list means valid.
pub fn validate_grammar(g: &Grammar) -> Vec<Diagnostic> {
    use DiagnosticKind::*;
    let mut out = Vec::new();

    let has_rules: BTreeSet<&str> = g.rules.iter().map(|r| r.lhs.as_str()).collect();
    let defined = |name: &str| {
        has_rules.contains(name) || g.alternatives.contains_key(name) || g.lexical.contains(name)
    };

    if !defined(&g.start) {
        out.push(diag(
            UnknownStart,
            &g.start,
            "no rule, alternative list or lexical binding",
        ));
    }

    for name in &g.lexical {
        if name.parse::<Category>().is_err() {
            out.push(diag(
                UnknownLexicalCategory,
                name,
                "not a knowledge-base category",
            ));
        }
    }
    for name in &g.nonterminals {
        let kinds = [
            has_rules.contains(name.as_str()),
            g.alternatives.contains_key(name),
            g.lexical.contains(name),
        ];
        if kinds.iter().filter(|k| **k).count() > 1 {
            out.push(diag(
                ConflictingDefinition,
                name,
                "defined by more than one of rules, alternatives, lexicon",
            ));
        }
        if g.person_indexed.contains(name) && has_rules.contains(name.as_str()) {
            out.push(diag(
                IndexedNotPreterminal,
                name,
                "person-indexed symbols must be preterminals",
            ));
        }
    }

    let mut undefined_seen = BTreeSet::new();
    for rule in &g.rules {
        if rule.rhs.is_empty() {
            out.push(diag(EmptyRhs, &rule.id, ""));
        }
        let used_vars = rule.variables();
        for el in &rule.rhs {
            let Symbol::NonTerminal(name) = &el.symbol else {
                continue;
            };
            if !defined(name) && undefined_seen.insert(name.clone()) {
                out.push(diag(Undefined, name, format!("used in {}", rule.id)));
            }
            let Some(ix) = &el.person_index else { continue };
            if !g.person_indexed.contains(name) {
                out.push(diag(IndexOnUnindexed, &rule.id, format!("{name}_{ix}")));
                continue;
            }
            let persons = g.alternatives.get(name).map(Vec::len);
            let check = |k: u8| k >= 1 && persons.is_none_or(|n| (k as usize) <= n);
            match ix {
                PersonIndex::Fixed(k) if !check(*k) => {
                    out.push(diag(IndexOutOfRange, &rule.id, format!("{name}_{k}")));
                }
                PersonIndex::Var(v) => {
                    if let Some(dom) = rule.domains.get(v) {
                        if let Some(bad) = dom.iter().find(|k| !check(**k)) {
                            out.push(diag(
                                IndexOutOfRange,
                                &rule.id,
                                format!("{v}={bad} for {name}"),
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        for (a, b) in &rule.constraints {
            for v in [a, b] {
                if !used_vars.contains(&v.as_str()) {
                    out.push(diag(
                        ConstraintVariable,
                        &rule.id,
                        format!("`{v}` indexes no element"),
                    ));
                }
            }
            if a == b {
                out.push(diag(
                    ConstraintVariable,
                    &rule.id,
                    format!("`{a}={b}` relates one element"),
                ));
            }
        }
    }

    for cycle in find_cycles(g) {
        out.push(diag(Recursion, &cycle[0], cycle.join(" -> ")));
    }
    out
}

/// Nonterminal dependency graph in document order.
pub(super) fn dependency_graph(g: &Grammar) -> BTreeMap<&str, Vec<&str>> {
    let mut graph: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for rule in &g.rules {
        let deps = graph.entry(rule.lhs.as_str()).or_default();
        for el in &rule.rhs {
            if let Symbol::NonTerminal(n) = &el.symbol {
                if !deps.contains(&n.as_str()) {
                    deps.push(n);
                }
            }
        }
    }
    graph
}

/// One cycle path (first node repeated at the end) per back edge.
pub(super) fn find_cycles(g: &Grammar) -> Vec<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        node: &'a str,
        graph: &BTreeMap<&'a str, Vec<&'a str>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
        cycles: &mut Vec<Vec<String>>,
    ) {
        marks.insert(node, Mark::Open);
        path.push(node);
        for &next in graph.get(node).into_iter().flatten() {
            match marks.get(next) {
                Some(Mark::Open) => {
                    let from = path.iter().position(|n| *n == next).unwrap_or(0);
                    let mut cycle: Vec<String> =
                        path[from..].iter().map(|s| s.to_string()).collect();
                    cycle.push(next.to_string());
                    cycles.push(cycle);
                }
                Some(Mark::Done) => {}
                None => visit(next, graph, marks, path, cycles),
            }
        }
        path.pop();
        marks.insert(node, Mark::Done);
    }

    let graph = dependency_graph(g);
    let mut marks = BTreeMap::new();
    let mut cycles = Vec::new();
    let roots = std::iter::once(g.start.as_str()).chain(g.rules.iter().map(|r| r.lhs.as_str()));
    for root in roots {
        if !marks.contains_key(root) {
            visit(root, &graph, &mut marks, &mut Vec::new(), &mut cycles);
        }
    }
    cycles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    fn kinds(src: &str) -> Vec<DiagnosticKind> {
        validate_grammar(&parse_grammar(src).unwrap())
            .into_iter()
            .map(|d| d.kind)
            .collect()
    }

    #[test]
    fn shipped_grammars_are_valid() {
        for g in [
            Grammar::bundled(),
            Grammar::bundled_inline(),
            Grammar::bundled_extended(),
        ] {
            assert_eq!(validate_grammar(&g), vec![]);
        }
    }

    #[test]
    fn unknown_start() {
        let d = validate_grammar(&parse_grammar("@start P\nQ -> a b\n").unwrap());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::UnknownStart);
        assert!(d[0].to_string().starts_with("unknown start: P"));
    }

    #[test]
    fn self_loop_is_recursion() {
        let d = validate_grammar(&parse_grammar("N -> N\n").unwrap());
        assert_eq!(d.len(), 1);
        assert!(d[0].to_string().contains("recursion detected"));
        assert_eq!(d[0].detail, "N -> N");
    }

    #[test]
    fn indirect_recursion() {
        assert_eq!(
            kinds("P -> A x\nA -> B y\nB -> P z\n"),
            vec![DiagnosticKind::Recursion]
        );
    }

    #[test]
    fn undefined_and_conflicts() {
        assert_eq!(kinds("P -> FOO bar\n"), vec![DiagnosticKind::Undefined]);
        assert_eq!(
            kinds("@lexicon n\nP -> n\nn -> a|b\n"),
            vec![DiagnosticKind::ConflictingDefinition]
        );
        assert_eq!(
            kinds("@lexicon q\nP -> q\n"),
            vec![DiagnosticKind::UnknownLexicalCategory]
        );
        assert_eq!(kinds("P -> \n"), vec![DiagnosticKind::EmptyRhs]);
    }

    #[test]
    fn index_checks() {
        assert_eq!(
            kinds("@indexed PP\nP -> PP_4\nPP -> a|b|c\n"),
            vec![DiagnosticKind::IndexOutOfRange]
        );
        assert_eq!(
            kinds("P -> PP_i X_j; i=j\nPP_i -> a|b\nX -> c|d\n"),
            vec![DiagnosticKind::IndexOnUnindexed]
        );
        assert_eq!(
            kinds("P -> PP_i PP_j; i=k\nPP_i -> a|b\n"),
            vec![DiagnosticKind::ConstraintVariable]
        );
        assert_eq!(
            kinds("P -> PP_i; i=1,5\nPP_i -> a|b\n"),
            vec![DiagnosticKind::IndexOutOfRange]
        );
    }
}
