//! Sentence-level semantic similarity ranking scored with Kendall's tau.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize, NormalizationRuleSet};

/// Stopwords removed before embedding sentences.
pub const DEFAULT_STOPWORDS: [&str; 4] = ["iwan", "in", "tlen", "ipan"];

/// Candidates per ranking task.
pub const CANDIDATES: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("vector file: {0}")]
    Header(String),
    #[error("vector file line {line}: expected {expected} components, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector file line {line}: component `{value}` is not a finite number")]
    NonFinite { line: usize, value: String },
    #[error("vector file line {line}: duplicate word `{word}`")]
    Duplicate { line: usize, word: String },
    #[error("vector file declares {declared} words but contains {found}")]
    RowCount { declared: usize, found: usize },
    #[error("rankings differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("ranking of {0} items has no pairs")]
    TooShort(usize),
    #[error("ranking {0:?} repeats a value")]
    NotAPermutation(Vec<usize>),
    #[error("task suite line {line}: {message}")]
    Suite { line: usize, message: String },
    #[error("task `{task}`: {message}")]
    Task { task: String, message: String },
    #[error("no tasks to evaluate")]
    EmptySuite,
    #[error("leave-one-out needs at least one embedding table")]
    NoVariants,
    #[error("leave-one-out needs at least 2 tasks, found {0}")]
    TooFewTasks(usize),
}

/// Word vectors of one dimension, stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    /// Adds a vector. Returns `false` if the word is present or the vector
    /// has the wrong dimension or a non-finite component.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> bool {
        if vector.len() != self.dimension
            || vector.iter().any(|x| !x.is_finite())
            || self.index.contains_key(word)
        {
            return false;
        }
        self.index.insert(word.to_string(), self.index.len());
        self.data.extend_from_slice(vector);
        true
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        let i = *self.index.get(word)?;
        Some(&self.data[i * self.dimension..(i + 1) * self.dimension])
    }

    /// Every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            dimension: self.dimension,
            index: self.index.clone(),
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }
}

/// Reads the text vector format: a `count dimension` header, then one
/// `word v1 ... vd` line per word.
pub fn load_vectors(src: &str) -> Result<EmbeddingTable, SimilarityError> {
    let mut lines = src
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| SimilarityError::Header("empty input".into()))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let parse = |s: &str| s.parse::<usize>().ok();
    let (Some(count), Some(dimension)) = (
        nums.first().and_then(|s| parse(s)),
        nums.get(1).and_then(|s| parse(s)),
    ) else {
        return Err(SimilarityError::Header(format!(
            "expected `count dimension`, found `{header}`"
        )));
    };
    if nums.len() != 2 || dimension == 0 {
        return Err(SimilarityError::Header(format!(
            "expected `count dimension`, found `{header}`"
        )));
    }
    let mut table = EmbeddingTable::new(dimension);
    let mut row = Vec::with_capacity(dimension);
    for (i, l) in lines {
        let line = i + 1;
        let mut parts = l.split_whitespace();
        let word = parts.next().expect("non-blank line");
        row.clear();
        for p in parts {
            match p.parse::<f32>() {
                Ok(x) if x.is_finite() => row.push(x),
                _ => {
                    return Err(SimilarityError::NonFinite {
                        line,
                        value: p.to_string(),
                    })
                }
            }
        }
        if row.len() != dimension {
            return Err(SimilarityError::Dimension {
                line,
                expected: dimension,
                found: row.len(),
            });
        }
        if !table.insert(word, &row) {
            return Err(SimilarityError::Duplicate {
                line,
                word: word.to_string(),
            });
        }
    }
    if table.len() != count {
        return Err(SimilarityError::RowCount {
            declared: count,
            found: table.len(),
        });
    }
    Ok(table)
}

/// How sentences are turned into lookup tokens.
#[derive(Debug, Clone)]
pub struct EmbedOptions {
    pub stopwords: HashSet<String>,
    /// Orthographic rules applied to each token before lookup.
    pub orthography: Option<NormalizationRuleSet>,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            orthography: None,
        }
    }
}

impl EmbedOptions {
    pub fn with_stopwords<I: IntoIterator<Item = S>, S: Into<String>>(stopwords: I) -> Self {
        Self {
            stopwords: stopwords.into_iter().map(Into::into).collect(),
            orthography: None,
        }
    }

    fn token(&self, raw: &str) -> String {
        let t = raw
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        match &self.orthography {
            Some(rules) => normalize(&t, rules),
            None => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub vector: Vec<f64>,
    pub used: usize,
    pub out_of_vocabulary: usize,
    pub stopwords: usize,
}

impl SentenceEmbedding {
    pub fn is_zero(&self) -> bool {
        self.vector.iter().all(|x| *x == 0.0)
    }
}

/// Mean of the vectors of the sentence's in-vocabulary, non-stopword tokens;
/// zero when none qualifies.
pub fn sentence_embedding(
    sentence: &str,
    table: &EmbeddingTable,
    options: &EmbedOptions,
) -> SentenceEmbedding {
    let mut words = Vec::new();
    let (mut oov, mut stop) = (0, 0);
    for raw in sentence.split_whitespace() {
        let t = options.token(raw);
        if t.is_empty() {
            continue;
        }
        if options.stopwords.contains(&t) {
            stop += 1;
        } else if table.get(&t).is_some() {
            words.push(t);
        } else {
            oov += 1;
        }
    }
    // Summation order fixed by spelling so that token order cannot change
    // the rounding.
    words.sort_unstable();
    let mut vector = vec![0.0f64; table.dimension()];
    for w in &words {
        for (acc, x) in vector.iter_mut().zip(table.get(w).expect("checked")) {
            *acc += f64::from(*x);
        }
    }
    if !words.is_empty() {
        let n = words.len() as f64;
        vector.iter_mut().for_each(|x| *x /= n);
    }
    SentenceEmbedding {
        vector,
        used: words.len(),
        out_of_vocabulary: oov,
        stopwords: stop,
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTask {
    pub id: String,
    pub reference: String,
    pub candidates: Vec<String>,
    /// 1-based human rank of each candidate, in candidate order.
    pub human_ranking: Vec<usize>,
}

impl RankingTask {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        let err = |message: String| SimilarityError::Task {
            task: self.id.clone(),
            message,
        };
        if self.candidates.len() != CANDIDATES {
            return Err(err(format!(
                "expected {CANDIDATES} candidates, found {}",
                self.candidates.len()
            )));
        }
        let mut sorted = self.human_ranking.clone();
        sorted.sort_unstable();
        if sorted != (1..=self.candidates.len()).collect::<Vec<_>>() {
            return Err(err(format!(
                "human ranking {:?} is not a permutation of 1..=5",
                self.human_ranking
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Candidate indices, most similar first.
    pub order: Vec<usize>,
    /// 1-based model rank of each candidate, in candidate order.
    pub ranks: Vec<usize>,
    pub similarities: Vec<f64>,
    /// The reference embedding was zero; candidates keep their order.
    pub degenerate: bool,
}

/// Orders candidates by decreasing cosine similarity to the reference; ties
/// keep candidate order.
pub fn rank_candidates(
    task: &RankingTask,
    table: &EmbeddingTable,
    options: &EmbedOptions,
) -> Ranking {
    let reference = sentence_embedding(&task.reference, table, options);
    let similarities: Vec<f64> = task
        .candidates
        .iter()
        .map(|c| {
            cosine(
                &reference.vector,
                &sentence_embedding(c, table, options).vector,
            )
        })
        .collect();
    let mut order: Vec<usize> = (0..task.candidates.len()).collect();
    let degenerate = reference.is_zero();
    if !degenerate {
        order.sort_by(|&a, &b| similarities[b].total_cmp(&similarities[a]).then(a.cmp(&b)));
    }
    let mut ranks = vec![0; order.len()];
    for (pos, &c) in order.iter().enumerate() {
        ranks[c] = pos + 1;
    }
    Ranking {
        order,
        ranks,
        similarities,
        degenerate,
    }
}

/// Kendall's tau-a between two tie-free rankings of the same items, in
/// O(n log n).
pub fn kendall_tau(a: &[usize], b: &[usize]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::SizeMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(SimilarityError::TooShort(n));
    }
    for r in [a, b] {
        let mut s = r.to_vec();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(SimilarityError::NotAPermutation(r.to_vec()));
        }
    }
    let mut by_a: Vec<usize> = (0..n).collect();
    by_a.sort_unstable_by_key(|&i| a[i]);
    let mut seq: Vec<usize> = by_a.iter().map(|&i| b[i]).collect();
    let discordant = inversions(&mut seq, &mut vec![0; n]);
    let pairs = (n * (n - 1) / 2) as u64;
    Ok((pairs as f64 - 2.0 * discordant as f64) / pairs as f64)
}

/// Sorts `v` and returns its number of inversions.
fn inversions(v: &mut [usize], scratch: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        inversions(l, sl) + inversions(r, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            scratch[k] = v[i];
            i += 1;
        } else {
            scratch[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&scratch[..n]);
    count
}

#[derive(Debug, Clone)]
pub struct TaskSuite {
    pub tasks: Vec<RankingTask>,
    pub options: EmbedOptions,
}

impl TaskSuite {
    pub fn new(tasks: Vec<RankingTask>) -> Self {
        Self {
            tasks,
            options: EmbedOptions::default(),
        }
    }
}

/// Reads a task-suite TSV with header
/// `task_id role position human_rank sentence`. Candidate rows carry their
/// 1-based position and human rank; reference rows leave both as `-`.
pub fn load_suite(src: &str) -> Result<TaskSuite, SimilarityError> {
    #[derive(Default)]
    struct Partial {
        reference: Option<String>,
        candidates: BTreeMap<usize, (usize, String)>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial> = HashMap::new();
    let mut header_seen = false;
    for (i, l) in src.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| SimilarityError::Suite { line, message };
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split('\t').collect();
        if !header_seen {
            if cols != ["task_id", "role", "position", "human_rank", "sentence"] {
                return Err(err(
                    "missing header `task_id\\trole\\tposition\\thuman_rank\\tsentence`".into(),
                ));
            }
            header_seen = true;
            continue;
        }
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let id = cols[0].to_string();
        if !partial.contains_key(&id) {
            order.push(id.clone());
        }
        let task = partial.entry(id.clone()).or_default();
        match cols[1] {
            "reference" => {
                if task.reference.replace(cols[4].to_string()).is_some() {
                    return Err(err(format!("task `{id}` has two references")));
                }
            }
            "candidate" => {
                let num = |s: &str, what: &str| {
                    s.parse::<usize>()
                        .map_err(|_| err(format!("{what} `{s}` is not a positive integer")))
                };
                let pos = num(cols[2], "position")?;
                let rank = num(cols[3], "human rank")?;
                if task
                    .candidates
                    .insert(pos, (rank, cols[4].to_string()))
                    .is_some()
                {
                    return Err(err(format!("task `{id}` repeats candidate position {pos}")));
                }
            }
            other => {
                return Err(err(format!(
                    "role `{other}` is neither reference nor candidate"
                )))
            }
        }
    }
    if !header_seen {
        return Err(SimilarityError::Suite {
            line: 1,
            message: "empty task suite".into(),
        });
    }
    let mut tasks = Vec::with_capacity(order.len());
    for id in order {
        let p = partial.remove(&id).expect("recorded");
        let positions: Vec<usize> = p.candidates.keys().copied().collect();
        if positions != (1..=positions.len()).collect::<Vec<_>>() {
            return Err(SimilarityError::Task {
                task: id,
                message: format!("candidate positions {positions:?} are not 1..n"),
            });
        }
        let task = RankingTask {
            reference: p.reference.ok_or_else(|| SimilarityError::Task {
                task: id.clone(),
                message: "no reference sentence".into(),
            })?,
            candidates: p.candidates.values().map(|(_, s)| s.clone()).collect(),
            human_ranking: p.candidates.values().map(|(r, _)| *r).collect(),
            id,
        };
        task.validate()?;
        tasks.push(task);
    }
    Ok(TaskSuite::new(tasks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub tau: f64,
    pub model_ranking: Vec<usize>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub per_task: Vec<TaskResult>,
    pub mean_tau: f64,
}

impl TaskScore {
    /// Mean tau to 3 decimals.
    pub fn mean(&self) -> String {
        format!("{:.3}", self.mean_tau)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("task\ttau\tmodel_ranking\n");
        for t in &self.per_task {
            let ranks: Vec<String> = t.model_ranking.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{}\t{:.3}\t{}{}\n",
                t.task,
                t.tau,
                ranks.join(","),
                if t.degenerate {
                    "\t(degenerate reference)"
                } else {
                    ""
                }
            ));
        }
        out.push_str(&format!("mean_tau\t{}\n", self.mean()));
        out
    }

    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("score serializes")
    }

    pub fn from_record(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Ranks every task's candidates and scores the ranking against the human one.
pub fn evaluate_suite(
    suite: &TaskSuite,
    table: &EmbeddingTable,
) -> Result<TaskScore, SimilarityError> {
    if suite.tasks.is_empty() {
        return Err(SimilarityError::EmptySuite);
    }
    let mut per_task = Vec::with_capacity(suite.tasks.len());
    for task in &suite.tasks {
        task.validate()?;
        let r = rank_candidates(task, table, &suite.options);
        per_task.push(TaskResult {
            task: task.id.clone(),
            tau: kendall_tau(&task.human_ranking, &r.ranks)?,
            model_ranking: r.ranks,
            degenerate: r.degenerate,
        });
    }
    let taus: Vec<f64> = per_task.iter().map(|t| t.tau).collect();
    Ok(TaskScore {
        per_task,
        mean_tau: mean(&taus),
    })
}

/// Mean of `taus` with each element left out in turn.
pub fn leave_one_out_means(taus: &[f64]) -> Result<Vec<f64>, SimilarityError> {
    if taus.len() < 2 {
        return Err(SimilarityError::TooFewTasks(taus.len()));
    }
    let total: f64 = taus.iter().sum();
    let n = (taus.len() - 1) as f64;
    Ok(taus.iter().map(|t| (total - t) / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub full_mean: f64,
    pub subset_means: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutReport {
    pub variants: Vec<VariantReport>,
}

impl fmt::Display for LeaveOneOutReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variant\tfull\tloo_max\tloo_mean\tloo_spread")?;
        for v in &self.variants {
            writeln!(
                f,
                "{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
                v.name, v.full_mean, v.max, v.mean, v.spread
            )?;
        }
        Ok(())
    }
}

/// For each named table, the suite mean and the means over every subset
/// that omits one task.
pub fn leave_one_out_report(
    suite: &TaskSuite,
    variants: &[(&str, &EmbeddingTable)],
) -> Result<LeaveOneOutReport, SimilarityError> {
    if variants.is_empty() {
        return Err(SimilarityError::NoVariants);
    }
    let mut out = Vec::with_capacity(variants.len());
    for (name, table) in variants {
        let score = evaluate_suite(suite, table)?;
        let taus: Vec<f64> = score.per_task.iter().map(|t| t.tau).collect();
        let subset_means = leave_one_out_means(&taus)?;
        let max = subset_means
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let min = subset_means.iter().copied().fold(f64::INFINITY, f64::min);
        out.push(VariantReport {
            name: name.to_string(),
            full_mean: score.mean_tau,
            mean: mean(&subset_means),
            max,
            spread: max - min,
            subset_means,
        });
    }
    Ok(LeaveOneOutReport { variants: out })
}
