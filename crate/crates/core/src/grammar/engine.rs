use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::validate::{validate_grammar, Diagnostic, DiagnosticKind};
use super::{
    DerivationStep, GeneratedSentence, Grammar, GrammarError, JoinOp, LexicalUse, PersonIndex,
    Symbol,
};
use crate::filter::{FilterPipeline, FilterVerdict};
use crate::lexicon::{Animacy, Category, KnowledgeBase};

pub type SinkError = Box<dyn std::error::Error + Send + Sync>;

/// Receives enumerated sentences.
pub trait SentenceSink {
    fn accept(&mut self, sentence: &GeneratedSentence) -> Result<(), SinkError>;

    /// Called for sentences rejected by the filter pipeline.
    fn reject(
        &mut self,
        _sentence: &GeneratedSentence,
        _verdict: &FilterVerdict,
    ) -> Result<(), SinkError> {
        Ok(())
    }
}

impl<F> SentenceSink for F
where
    F: FnMut(&GeneratedSentence) -> Result<(), SinkError>,
{
    fn accept(&mut self, sentence: &GeneratedSentence) -> Result<(), SinkError> {
        self(sentence)
    }
}

/// Sentence counts for a grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountReport {
    /// Number of distinct derivations from the start symbol.
    pub raw_count: u64,
    /// Derivations accepted by the filter pipeline, when one was applied.
    pub filtered_count: Option<u64>,
    /// Per rule, the derivations that use the rule at least once, in
    /// document order.
    pub per_rule: Vec<RuleTally>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTally {
    pub rule: String,
    pub raw: u64,
    pub filtered: Option<u64>,
}

impl CountReport {
    pub fn rule(&self, id: &str) -> Option<&RuleTally> {
        self.per_rule.iter().find(|t| t.rule == id)
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("raw_count: {}\n", self.raw_count);
        if let Some(f) = self.filtered_count {
            out.push_str(&format!("filtered_count: {f}\n"));
        }
        for t in &self.per_rule {
            match t.filtered {
                Some(f) => out.push_str(&format!("rule {}: {} (filtered {f})\n", t.rule, t.raw)),
                None => out.push_str(&format!("rule {}: {}\n", t.rule, t.raw)),
            }
        }
        out
    }

    /// Single-line JSON record.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("count report serializes")
    }

    pub fn from_record(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

/// An explicit choice for one choice point of [`expand`], in preorder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Choose a production rule. Without an assignment, each variable-indexed
    /// element becomes a choice point of its own and binds its variable.
    Rule {
        id: String,
        assignment: Option<Vec<(String, u8)>>,
    },
    /// Alternative by 0-based position.
    Index(usize),
    /// Alternative by surface form; `vide`, `∅` and `""` select the empty one.
    Surface(String),
}

impl Selection {
    pub fn rule(id: &str) -> Self {
        Selection::Rule {
            id: id.to_string(),
            assignment: None,
        }
    }

    pub fn surface(s: &str) -> Self {
        Selection::Surface(s.to_string())
    }
}

impl From<&DerivationStep> for Selection {
    fn from(step: &DerivationStep) -> Self {
        match step {
            DerivationStep::Rule { id, assignment, .. } => Selection::Rule {
                id: id.clone(),
                assignment: Some(assignment.clone()),
            },
            DerivationStep::Terminal { index, .. } => Selection::Index(*index),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleOptions {
    /// Draws allowed per requested sentence before giving up.
    pub max_attempts: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            max_attempts: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Term<'a> {
    surface: &'a str,
    animacy: Option<Animacy>,
}

enum Def<'a> {
    Rules(Vec<usize>),
    Terminals(Vec<Term<'a>>),
}

struct Nt<'a> {
    name: &'a str,
    def: Def<'a>,
}

#[derive(Debug, Clone, Copy)]
enum Target<'a> {
    Nt(usize),
    Term(&'a str),
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Free,
    Fixed(u8),
    Var(usize),
}

struct Elem<'a> {
    target: Target<'a>,
    join: JoinOp,
    slot: Slot,
}

struct Rule<'a> {
    id: &'a str,
    lhs: usize,
    elems: Vec<Elem<'a>>,
    vars: Vec<&'a str>,
    domains: Vec<Vec<u8>>,
    constraints: Vec<(usize, usize)>,
    /// Every constraint-satisfying assignment, in lexicographic order.
    assignments: Vec<Vec<u8>>,
}

impl Rule<'_> {
    fn satisfies(&self, values: &[Option<u8>]) -> Result<(), GrammarError> {
        for &(a, b) in &self.constraints {
            if let (Some(x), Some(y)) = (values[a], values[b]) {
                if x != y {
                    return Err(GrammarError::ConstraintViolation {
                        left: self.vars[a].to_string(),
                        right: self.vars[b].to_string(),
                        left_value: x,
                        right_value: y,
                    });
                }
            }
        }
        Ok(())
    }
}

/// A grammar compiled against one knowledge base.
struct Engine<'a> {
    nts: Vec<Nt<'a>>,
    rules: Vec<Rule<'a>>,
    by_name: HashMap<&'a str, usize>,
    start: usize,
}

impl<'a> Engine<'a> {
    fn new(g: &'a Grammar, kb: &'a KnowledgeBase) -> Result<Self, GrammarError> {
        let diags = validate_grammar(g);
        if !diags.is_empty() {
            if let Some(d) = diags.iter().find(|d| d.kind == DiagnosticKind::Recursion) {
                return Err(GrammarError::Recursion(
                    d.detail.split(" -> ").map(str::to_string).collect(),
                ));
            }
            return Err(GrammarError::Invalid(diags));
        }

        let mut names: Vec<&'a str> = g.nonterminals.iter().map(String::as_str).collect();
        for r in &g.rules {
            for e in &r.rhs {
                if let Symbol::NonTerminal(n) = &e.symbol {
                    if !names.contains(&n.as_str()) {
                        names.push(n);
                    }
                }
            }
        }
        let by_name: HashMap<&'a str, usize> =
            names.iter().enumerate().map(|(i, n)| (*n, i)).collect();

        let mut nts: Vec<Nt<'a>> = names
            .iter()
            .map(|&name| {
                let def = if let Some(alts) = g.alternatives.get(name) {
                    Def::Terminals(
                        alts.iter()
                            .map(|s| Term {
                                surface: s,
                                animacy: None,
                            })
                            .collect(),
                    )
                } else if g.lexical.contains(name) {
                    let cat: Category = name.parse().expect("validated category");
                    Def::Terminals(
                        kb.category(cat)
                            .map(|e| Term {
                                surface: &e.surface,
                                animacy: Some(e.animacy),
                            })
                            .collect(),
                    )
                } else {
                    Def::Rules(Vec::new())
                };
                Nt { name, def }
            })
            .collect();

        let mut rules = Vec::with_capacity(g.rules.len());
        let mut bad = Vec::new();
        for (ri, r) in g.rules.iter().enumerate() {
            let lhs = by_name[r.lhs.as_str()];
            if let Def::Rules(list) = &mut nts[lhs].def {
                list.push(ri);
            }
            let vars = r.variables();
            let persons = |nt: usize| match &nts[nt].def {
                Def::Terminals(ts) => ts.len(),
                Def::Rules(_) => 0,
            };
            let mut elems = Vec::with_capacity(r.rhs.len());
            for e in &r.rhs {
                let target = match &e.symbol {
                    Symbol::NonTerminal(n) => Target::Nt(by_name[n.as_str()]),
                    Symbol::Terminal(t) => Target::Term(t),
                };
                let slot = match &e.person_index {
                    None => Slot::Free,
                    Some(PersonIndex::Fixed(k)) => Slot::Fixed(*k),
                    Some(PersonIndex::Var(v)) => {
                        Slot::Var(vars.iter().position(|x| x == v).expect("collected"))
                    }
                };
                if let (Target::Nt(nt), Slot::Fixed(k)) = (target, slot) {
                    if k as usize > persons(nt) {
                        bad.push(out_of_range(&r.id, format!("{}_{k}", nts[nt].name)));
                    }
                }
                elems.push(Elem {
                    target,
                    join: e.join,
                    slot,
                });
            }
            let mut domains = Vec::with_capacity(vars.len());
            for (vi, v) in vars.iter().enumerate() {
                let limit = elems
                    .iter()
                    .filter_map(|e| match (e.target, e.slot) {
                        (Target::Nt(nt), Slot::Var(x)) if x == vi => Some(persons(nt)),
                        _ => None,
                    })
                    .min()
                    .unwrap_or(0);
                let dom: Vec<u8> = match r.domains.get(*v) {
                    Some(d) => d.clone(),
                    None => (1..=limit.min(u8::MAX as usize) as u8).collect(),
                };
                if let Some(k) = dom.iter().find(|k| **k as usize > limit || **k == 0) {
                    bad.push(out_of_range(&r.id, format!("{v}={k}")));
                }
                domains.push(dom);
            }
            let constraints = r
                .constraints
                .iter()
                .map(|(a, b)| {
                    let pos = |x: &String| vars.iter().position(|v| v == x).expect("validated");
                    (pos(a), pos(b))
                })
                .collect();
            let mut rule = Rule {
                id: &r.id,
                lhs,
                elems,
                vars,
                domains,
                constraints,
                assignments: Vec::new(),
            };
            rule.assignments = assignments(&rule);
            rules.push(rule);
        }
        if !bad.is_empty() {
            return Err(GrammarError::Invalid(bad));
        }

        let start = by_name[g.start.as_str()];
        Ok(Self {
            nts,
            rules,
            by_name,
            start,
        })
    }

    fn lookup(&self, name: &str) -> Result<usize, GrammarError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| GrammarError::UnknownNonTerminal(name.to_string()))
    }

    // ---- counting ----

    fn count_nt(
        &self,
        nt: usize,
        memo: &mut [Option<u64>],
        disabled: Option<usize>,
    ) -> Result<u64, GrammarError> {
        if let Some(c) = memo[nt] {
            return Ok(c);
        }
        let c = match &self.nts[nt].def {
            Def::Terminals(ts) => ts.len() as u64,
            Def::Rules(rs) => {
                let mut total = 0u64;
                for &r in rs {
                    if Some(r) == disabled {
                        continue;
                    }
                    let c = self.count_rule(r, memo, disabled)?;
                    let n = self.rules[r].assignments.len() as u64;
                    let c = c.checked_mul(n).ok_or(GrammarError::Overflow)?;
                    total = total.checked_add(c).ok_or(GrammarError::Overflow)?;
                }
                total
            }
        };
        memo[nt] = Some(c);
        Ok(c)
    }

    /// Derivations below one (rule, assignment) pair; the same for every
    /// assignment since bound preterminals have a single alternative.
    fn count_rule(
        &self,
        r: usize,
        memo: &mut [Option<u64>],
        disabled: Option<usize>,
    ) -> Result<u64, GrammarError> {
        let mut product = 1u64;
        for e in &self.rules[r].elems {
            let c = match (e.target, e.slot) {
                (Target::Term(_), _) => 1,
                (Target::Nt(nt), Slot::Free) => self.count_nt(nt, memo, disabled)?,
                (Target::Nt(_), _) => 1,
            };
            product = product.checked_mul(c).ok_or(GrammarError::Overflow)?;
        }
        Ok(product)
    }

    fn counts(&self, disabled: Option<usize>) -> Result<Vec<Option<u64>>, GrammarError> {
        let mut memo = vec![None; self.nts.len()];
        self.count_nt(self.start, &mut memo, disabled)?;
        Ok(memo)
    }

    fn count_report(&self) -> Result<CountReport, GrammarError> {
        let raw = self.counts(None)?[self.start].unwrap_or(0);
        let mut per_rule = Vec::with_capacity(self.rules.len());
        for (ri, r) in self.rules.iter().enumerate() {
            let without = self.counts(Some(ri))?[self.start].unwrap_or(0);
            per_rule.push(RuleTally {
                rule: r.id.to_string(),
                raw: raw - without,
                filtered: None,
            });
        }
        Ok(CountReport {
            raw_count: raw,
            filtered_count: None,
            per_rule,
        })
    }

    // ---- enumeration ----

    fn enumerate(
        &self,
        kb: &KnowledgeBase,
        filters: &FilterPipeline,
        sink: &mut dyn SentenceSink,
    ) -> Result<CountReport, GrammarError> {
        let mut walk = Walk {
            stack: vec![Frame {
                target: Target::Nt(self.start),
                join: JoinOp::Null,
                fixed: None,
            }],
            pieces: Vec::new(),
            steps: Vec::new(),
            uses: Vec::new(),
            rule_depth: vec![0; self.rules.len()],
            raw: 0,
            accepted: 0,
            raw_by_rule: vec![0; self.rules.len()],
            accepted_by_rule: vec![0; self.rules.len()],
        };
        let filtering = !filters.is_empty();
        self.walk(&mut walk, &mut |w: &mut Walk<'_>| {
            w.raw += 1;
            let sentence = self.sentence(&w.pieces, &w.steps, &w.uses);
            let verdict = filters.apply(&sentence, kb)?;
            for (ri, depth) in w.rule_depth.iter().enumerate() {
                if *depth > 0 {
                    w.raw_by_rule[ri] += 1;
                    if verdict.accepted {
                        w.accepted_by_rule[ri] += 1;
                    }
                }
            }
            if verdict.accepted {
                w.accepted += 1;
                sink.accept(&sentence).map_err(GrammarError::Sink)
            } else {
                sink.reject(&sentence, &verdict).map_err(GrammarError::Sink)
            }
        })?;

        Ok(CountReport {
            raw_count: walk.raw,
            filtered_count: filtering.then_some(walk.accepted),
            per_rule: self
                .rules
                .iter()
                .enumerate()
                .map(|(ri, r)| RuleTally {
                    rule: r.id.to_string(),
                    raw: walk.raw_by_rule[ri],
                    filtered: filtering.then_some(walk.accepted_by_rule[ri]),
                })
                .collect(),
        })
    }

    /// Depth-first over all derivations; the leftmost choice varies slowest.
    fn walk(
        &self,
        w: &mut Walk<'a>,
        leaf: &mut dyn FnMut(&mut Walk<'a>) -> Result<(), GrammarError>,
    ) -> Result<(), GrammarError> {
        let Some(frame) = w.stack.pop() else {
            return leaf(w);
        };
        let result = self.walk_frame(frame, w, leaf);
        w.stack.push(frame);
        result
    }

    fn walk_frame(
        &self,
        frame: Frame<'a>,
        w: &mut Walk<'a>,
        leaf: &mut dyn FnMut(&mut Walk<'a>) -> Result<(), GrammarError>,
    ) -> Result<(), GrammarError> {
        let nt = match frame.target {
            Target::Term(s) => {
                w.pieces.push((s, frame.join));
                let r = self.walk(w, leaf);
                w.pieces.pop();
                return r;
            }
            Target::Nt(nt) => nt,
        };
        match &self.nts[nt].def {
            Def::Terminals(ts) => {
                let range = match frame.fixed {
                    Some(k) => (k as usize - 1)..(k as usize),
                    None => 0..ts.len(),
                };
                for o in range {
                    w.pieces.push((ts[o].surface, frame.join));
                    w.uses.push((nt, o));
                    if frame.fixed.is_none() {
                        w.steps.push(StepRef::Term(nt, o));
                    }
                    let r = self.walk(w, leaf);
                    if frame.fixed.is_none() {
                        w.steps.pop();
                    }
                    w.uses.pop();
                    w.pieces.pop();
                    r?;
                }
            }
            Def::Rules(rs) => {
                for &ri in rs {
                    let rule = &self.rules[ri];
                    for (ai, values) in rule.assignments.iter().enumerate() {
                        w.steps.push(StepRef::Rule(ri, ai));
                        w.rule_depth[ri] += 1;
                        let base = w.stack.len();
                        for (k, e) in rule.elems.iter().enumerate().rev() {
                            let join = if k == 0 {
                                frame.join.combine(e.join)
                            } else {
                                e.join
                            };
                            let fixed = match e.slot {
                                Slot::Free => None,
                                Slot::Fixed(v) => Some(v),
                                Slot::Var(x) => Some(values[x]),
                            };
                            w.stack.push(Frame {
                                target: e.target,
                                join,
                                fixed,
                            });
                        }
                        let r = self.walk(w, leaf);
                        w.stack.truncate(base);
                        w.rule_depth[ri] -= 1;
                        w.steps.pop();
                        r?;
                    }
                }
            }
        }
        Ok(())
    }

    fn sentence(
        &self,
        pieces: &[(&str, JoinOp)],
        steps: &[StepRef],
        uses: &[(usize, usize)],
    ) -> GeneratedSentence {
        let text = render(pieces);
        let tokens = text
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        let derivation = steps
            .iter()
            .map(|s| match *s {
                StepRef::Rule(ri, ai) => {
                    let rule = &self.rules[ri];
                    DerivationStep::Rule {
                        lhs: self.nts[rule.lhs].name.to_string(),
                        id: rule.id.to_string(),
                        assignment: rule
                            .vars
                            .iter()
                            .zip(&rule.assignments[ai])
                            .map(|(v, k)| (v.to_string(), *k))
                            .collect(),
                    }
                }
                StepRef::Term(nt, o) => DerivationStep::Terminal {
                    nonterminal: self.nts[nt].name.to_string(),
                    index: o,
                },
            })
            .collect();
        let lexical_uses = uses
            .iter()
            .map(|&(nt, o)| {
                let Def::Terminals(ts) = &self.nts[nt].def else {
                    unreachable!("uses refer to preterminals")
                };
                LexicalUse {
                    category: self.nts[nt].name.to_string(),
                    surface: ts[o].surface.to_string(),
                    animacy: ts[o].animacy,
                }
            })
            .collect();
        GeneratedSentence {
            text,
            tokens,
            derivation,
            lexical_uses,
        }
    }

    // ---- single derivations (replay and sampling) ----

    fn derive(
        &self,
        from: usize,
        chooser: &mut dyn Chooser,
    ) -> Result<GeneratedSentence, GrammarError> {
        let mut d = Derivation::default();
        self.derive_nt(from, JoinOp::Null, None, chooser, &mut d)?;
        Ok(self.sentence(&d.pieces, &d.steps, &d.uses))
    }

    fn derive_nt(
        &self,
        nt: usize,
        join: JoinOp,
        fixed: Option<u8>,
        chooser: &mut dyn Chooser,
        d: &mut Derivation<'a>,
    ) -> Result<usize, GrammarError> {
        match &self.nts[nt].def {
            Def::Terminals(ts) => {
                let o = match fixed {
                    Some(k) => k as usize - 1,
                    None => {
                        let o = chooser.terminal(self, nt, ts.len())?;
                        d.steps.push(StepRef::Term(nt, o));
                        o
                    }
                };
                d.pieces.push((ts[o].surface, join));
                d.uses.push((nt, o));
                Ok(o)
            }
            Def::Rules(rs) => {
                let (ri, preset) = chooser.rule(self, nt, rs)?;
                let rule = &self.rules[ri];
                if rule.lhs != nt {
                    return Err(GrammarError::WrongRule {
                        nonterminal: self.nts[nt].name.to_string(),
                        rule: rule.id.to_string(),
                    });
                }
                let mut values: Vec<Option<u8>> = match preset {
                    Some(v) => v.into_iter().map(Some).collect(),
                    None => vec![None; rule.vars.len()],
                };
                for (x, v) in values.iter().enumerate() {
                    if let Some(v) = v {
                        if !rule.domains[x].contains(v) {
                            return Err(GrammarError::OutOfDomain {
                                rule: rule.id.to_string(),
                                var: rule.vars[x].to_string(),
                                value: *v,
                            });
                        }
                    }
                }
                rule.satisfies(&values)?;
                let step_at = d.steps.len();
                d.steps.push(StepRef::Rule(ri, usize::MAX));
                for (k, e) in rule.elems.iter().enumerate() {
                    let join = if k == 0 { join.combine(e.join) } else { e.join };
                    match (e.target, e.slot) {
                        (Target::Term(s), _) => d.pieces.push((s, join)),
                        (Target::Nt(child), Slot::Free) => {
                            self.derive_nt(child, join, None, chooser, d)?;
                        }
                        (Target::Nt(child), Slot::Fixed(v)) => {
                            self.derive_nt(child, join, Some(v), chooser, d)?;
                        }
                        (Target::Nt(child), Slot::Var(x)) => match values[x] {
                            Some(v) => {
                                self.derive_nt(child, join, Some(v), chooser, d)?;
                            }
                            None => {
                                // The choice binds the variable; it is not a
                                // choice point of the canonical derivation.
                                let mark = d.steps.len();
                                let o = self.derive_nt(child, join, None, chooser, d)?;
                                d.steps.truncate(mark);
                                let v = (o + 1) as u8;
                                if !rule.domains[x].contains(&v) {
                                    return Err(GrammarError::OutOfDomain {
                                        rule: rule.id.to_string(),
                                        var: rule.vars[x].to_string(),
                                        value: v,
                                    });
                                }
                                values[x] = Some(v);
                                rule.satisfies(&values)?;
                            }
                        },
                    }
                }
                let full: Vec<u8> = values
                    .iter()
                    .enumerate()
                    .map(|(x, v)| v.unwrap_or(rule.domains[x][0]))
                    .collect();
                let ai = rule
                    .assignments
                    .iter()
                    .position(|a| *a == full)
                    .expect("a satisfying assignment is enumerated");
                d.steps[step_at] = StepRef::Rule(ri, ai);
                Ok(0)
            }
        }
    }
}

fn out_of_range(rule: &str, detail: String) -> Diagnostic {
    Diagnostic {
        kind: DiagnosticKind::IndexOutOfRange,
        subject: rule.to_string(),
        detail,
    }
}

fn assignments(rule: &Rule<'_>) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut current = vec![0u8; rule.vars.len()];
    fn rec(rule: &Rule<'_>, x: usize, current: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if x == current.len() {
            let values: Vec<Option<u8>> = current.iter().copied().map(Some).collect();
            if rule.satisfies(&values).is_ok() {
                out.push(current.clone());
            }
            return;
        }
        for &v in &rule.domains[x] {
            current[x] = v;
            rec(rule, x + 1, current, out);
        }
    }
    rec(rule, 0, &mut current, &mut out);
    out
}

/// Joins realized pieces; elided pieces contribute only their join.
fn render(pieces: &[(&str, JoinOp)]) -> String {
    let mut out = String::new();
    let mut pending = JoinOp::Null;
    for &(text, join) in pieces {
        pending = pending.combine(join);
        if text.is_empty() {
            continue;
        }
        if !out.is_empty() && pending == JoinOp::Space {
            out.push(' ');
        }
        out.push_str(text);
        pending = JoinOp::Null;
    }
    out
}

#[derive(Debug, Clone, Copy)]
enum StepRef {
    Rule(usize, usize),
    Term(usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Frame<'a> {
    target: Target<'a>,
    join: JoinOp,
    fixed: Option<u8>,
}

struct Walk<'a> {
    stack: Vec<Frame<'a>>,
    pieces: Vec<(&'a str, JoinOp)>,
    steps: Vec<StepRef>,
    uses: Vec<(usize, usize)>,
    rule_depth: Vec<u32>,
    raw: u64,
    accepted: u64,
    raw_by_rule: Vec<u64>,
    accepted_by_rule: Vec<u64>,
}

#[derive(Default)]
struct Derivation<'a> {
    pieces: Vec<(&'a str, JoinOp)>,
    steps: Vec<StepRef>,
    uses: Vec<(usize, usize)>,
}

trait Chooser {
    /// Picks a rule among `candidates` (all rules of `nt`), optionally with a
    /// complete index assignment.
    fn rule(
        &mut self,
        engine: &Engine<'_>,
        nt: usize,
        candidates: &[usize],
    ) -> Result<(usize, Option<Vec<u8>>), GrammarError>;

    fn terminal(
        &mut self,
        engine: &Engine<'_>,
        nt: usize,
        options: usize,
    ) -> Result<usize, GrammarError>;
}

struct Replay<'s> {
    selections: std::slice::Iter<'s, Selection>,
}

impl Replay<'_> {
    fn next(&mut self, engine: &Engine<'_>, nt: usize) -> Result<&Selection, GrammarError> {
        self.selections
            .next()
            .ok_or_else(|| GrammarError::MissingSelection(engine.nts[nt].name.to_string()))
    }
}

impl Chooser for Replay<'_> {
    fn rule(
        &mut self,
        engine: &Engine<'_>,
        nt: usize,
        _candidates: &[usize],
    ) -> Result<(usize, Option<Vec<u8>>), GrammarError> {
        let name = engine.nts[nt].name;
        match self.next(engine, nt)? {
            Selection::Rule { id, assignment } => {
                let ri = engine
                    .rules
                    .iter()
                    .position(|r| r.id == id)
                    .ok_or_else(|| GrammarError::WrongRule {
                        nonterminal: name.to_string(),
                        rule: id.clone(),
                    })?;
                let rule = &engine.rules[ri];
                let preset = match assignment {
                    None => None,
                    Some(pairs) => {
                        let mut values = Vec::with_capacity(rule.vars.len());
                        for v in &rule.vars {
                            let value = pairs.iter().find(|(k, _)| k == v).map(|(_, x)| *x);
                            match value {
                                Some(x) => values.push(x),
                                None => {
                                    return Err(GrammarError::SelectionMismatch {
                                        nonterminal: name.to_string(),
                                        found: format!("{id} without a value for `{v}`"),
                                    })
                                }
                            }
                        }
                        Some(values)
                    }
                };
                Ok((ri, preset))
            }
            other => Err(GrammarError::SelectionMismatch {
                nonterminal: name.to_string(),
                found: format!("{other:?}"),
            }),
        }
    }

    fn terminal(
        &mut self,
        engine: &Engine<'_>,
        nt: usize,
        options: usize,
    ) -> Result<usize, GrammarError> {
        let name = engine.nts[nt].name;
        let Def::Terminals(ts) = &engine.nts[nt].def else {
            unreachable!("terminal choice on a preterminal")
        };
        match self.next(engine, nt)? {
            Selection::Index(i) if *i < options => Ok(*i),
            Selection::Index(i) => Err(GrammarError::NoSuchAlternative {
                nonterminal: name.to_string(),
                index: *i,
            }),
            Selection::Surface(s) => {
                let wanted = if s == "vide" || s == "∅" {
                    ""
                } else {
                    s.as_str()
                };
                ts.iter().position(|t| t.surface == wanted).ok_or_else(|| {
                    GrammarError::UnknownForm {
                        nonterminal: name.to_string(),
                        surface: s.clone(),
                    }
                })
            }
            other => Err(GrammarError::SelectionMismatch {
                nonterminal: name.to_string(),
                found: format!("{other:?}"),
            }),
        }
    }
}

/// Draws each choice with probability proportional to the number of
/// derivations below it, which makes complete derivations uniform.
struct Weighted<'m> {
    rng: ChaCha8Rng,
    memo: &'m [Option<u64>],
    rule_weights: &'m [Vec<u64>],
}

impl Chooser for Weighted<'_> {
    fn rule(
        &mut self,
        engine: &Engine<'_>,
        nt: usize,
        candidates: &[usize],
    ) -> Result<(usize, Option<Vec<u8>>), GrammarError> {
        let total = self.memo[nt].unwrap_or(0);
        if total == 0 {
            return Err(GrammarError::EmptyLanguage);
        }
        let mut pick = self.rng.gen_range(0..total);
        for &ri in candidates {
            for (ai, w) in self.rule_weights[ri].iter().enumerate() {
                if pick < *w {
                    return Ok((ri, Some(engine.rules[ri].assignments[ai].clone())));
                }
                pick -= w;
            }
        }
        unreachable!("weights sum to the nonterminal count")
    }

    fn terminal(
        &mut self,
        _engine: &Engine<'_>,
        _nt: usize,
        options: usize,
    ) -> Result<usize, GrammarError> {
        if options == 0 {
            return Err(GrammarError::EmptyLanguage);
        }
        Ok(self.rng.gen_range(0..options))
    }
}

/// Replays `selections` (one per choice point, preorder) from the start
/// symbol.
pub fn expand(
    g: &Grammar,
    kb: &KnowledgeBase,
    selections: &[Selection],
) -> Result<GeneratedSentence, GrammarError> {
    expand_from(g, kb, &g.start, selections)
}

/// Like [`expand`], starting from any nonterminal.
pub fn expand_from(
    g: &Grammar,
    kb: &KnowledgeBase,
    from: &str,
    selections: &[Selection],
) -> Result<GeneratedSentence, GrammarError> {
    let engine = Engine::new(g, kb)?;
    let from = engine.lookup(from)?;
    let mut replay = Replay {
        selections: selections.iter(),
    };
    let s = engine.derive(from, &mut replay)?;
    match replay.selections.len() {
        0 => Ok(s),
        n => Err(GrammarError::ExtraSelections(n)),
    }
}

/// Derivation counts computed from alternative cardinalities, without
/// generating sentences.
pub fn count_symbolic(g: &Grammar, kb: &KnowledgeBase) -> Result<CountReport, GrammarError> {
    Engine::new(g, kb)?.count_report()
}

/// Streams every derivation's sentence that passes `filters` to `sink`, in
/// document order.
pub fn enumerate<F>(
    g: &Grammar,
    kb: &KnowledgeBase,
    filters: &FilterPipeline,
    mut sink: F,
) -> Result<CountReport, GrammarError>
where
    F: FnMut(&GeneratedSentence) -> Result<(), SinkError>,
{
    enumerate_into(g, kb, filters, &mut sink)
}

/// [`enumerate`] with a sink that also sees rejected sentences.
pub fn enumerate_into(
    g: &Grammar,
    kb: &KnowledgeBase,
    filters: &FilterPipeline,
    sink: &mut dyn SentenceSink,
) -> Result<CountReport, GrammarError> {
    Engine::new(g, kb)?.enumerate(kb, filters, sink)
}

/// `count` sentences drawn uniformly over derivations, rejecting and redrawing
/// those the pipeline refuses. Deterministic for a given seed.
pub fn sample(
    g: &Grammar,
    kb: &KnowledgeBase,
    seed: u64,
    count: usize,
    filters: &FilterPipeline,
) -> Result<Vec<GeneratedSentence>, GrammarError> {
    sample_with(g, kb, seed, count, filters, &SampleOptions::default())
}

pub fn sample_with(
    g: &Grammar,
    kb: &KnowledgeBase,
    seed: u64,
    count: usize,
    filters: &FilterPipeline,
    options: &SampleOptions,
) -> Result<Vec<GeneratedSentence>, GrammarError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let engine = Engine::new(g, kb)?;
    let memo = engine.counts(None)?;
    if memo[engine.start] == Some(0) {
        return Err(GrammarError::EmptyLanguage);
    }
    let mut scratch = memo.clone();
    let mut rule_weights = Vec::with_capacity(engine.rules.len());
    for ri in 0..engine.rules.len() {
        let w = engine.count_rule(ri, &mut scratch, None)?;
        rule_weights.push(vec![w; engine.rules[ri].assignments.len()]);
    }
    let mut chooser = Weighted {
        rng: ChaCha8Rng::seed_from_u64(seed),
        memo: &scratch,
        rule_weights: &rule_weights,
    };
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut attempts = 0;
        loop {
            if attempts == options.max_attempts {
                return Err(GrammarError::SampleExhausted(attempts));
            }
            attempts += 1;
            let s = engine.derive(engine.start, &mut chooser)?;
            if filters.apply(&s, kb)?.accepted {
                out.push(s);
                break;
            }
        }
    }
    Ok(out)
}
