use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use microgrammar::corpus::{
    augmentation_ratios, compute_stats, merge_corpora, normalize_bytes, CorpusStats,
    NormalizationRuleSet,
};
use microgrammar::filter::{rejection_record, FilterPipeline, FilterVerdict, REJECTION_HEADER};
use microgrammar::grammar::{
    count_symbolic, enumerate_into, parse_grammar, sample, CountReport, GeneratedSentence, Grammar,
    SentenceSink, SinkError,
};
use microgrammar::lexicon::{self, KnowledgeBase};
use microgrammar::similarity::{
    evaluate_suite, leave_one_out_report, load_suite, load_vectors, EmbedOptions, EmbeddingTable,
};

/// Filtered count reported for the bundled grammar and lexicon.
const REFERENCE_COUNT: u64 = 807_093;

#[derive(Parser)]
#[command(
    name = "microgrammar",
    version,
    about = "Nawatl micro-grammar generation, corpus and evaluation tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate or sample sentences.
    Generate(GenerateArgs),
    /// Count derivations per rule without generating them.
    Count(CountArgs),
    /// Normalize spelling, one line at a time.
    Normalize(NormalizeArgs),
    /// Normalize and concatenate an authentic and an artificial corpus.
    Merge(MergeArgs),
    /// Sentence, token and type counts.
    Stats(StatsArgs),
    /// Score word vectors on a similarity ranking suite.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Text,
    /// Single-line JSON records.
    Machine,
}

#[derive(Args)]
struct Inputs {
    /// Grammar file (default: the bundled grammar).
    #[arg(long)]
    grammar: Option<PathBuf>,
    /// Knowledge base TSV (default: the bundled lexicon).
    #[arg(long)]
    kb: Option<PathBuf>,
}

impl Inputs {
    fn load(&self) -> Result<(Grammar, KnowledgeBase)> {
        let grammar = match &self.grammar {
            Some(p) => parse_grammar(&read(p)?).with_context(|| format!("{}", p.display()))?,
            None => Grammar::bundled(),
        };
        let kb = match &self.kb {
            Some(p) => lexicon::load_kb(&read(p)?).with_context(|| format!("{}", p.display()))?,
            None => lexicon::bundled(),
        };
        Ok((grammar, kb))
    }

    fn bundled(&self) -> bool {
        self.grammar.is_none() && self.kb.is_none()
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Comma-separated filters (animacy, no_repeat) or `none`.
    #[arg(long, default_value = "animacy,no_repeat")]
    filters: String,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Draw this many sentences at random instead of enumerating.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the derivation text without capital and final period.
    #[arg(long)]
    plain: bool,
    /// Drop sentences whose text was already written.
    #[arg(long)]
    dedup: bool,
    /// Write rejected sentences as TSV (sentence, filter, reason).
    #[arg(long)]
    rejections: Option<PathBuf>,
    /// Compare the filtered count with this figure (default with bundled
    /// inputs: 807093).
    #[arg(long)]
    reference_count: Option<u64>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Also enumerate with these filters to report filtered counts.
    #[arg(long)]
    filters: Option<String>,
    /// Cross-check the symbolic counts by enumeration.
    #[arg(long)]
    verify: bool,
    /// Largest raw count that `--verify` enumerates.
    #[arg(long, default_value_t = 2_000_000)]
    verify_bound: u64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct NormalizeArgs {
    /// Input file (default: standard input).
    input: Option<PathBuf>,
    /// Rule table (default: the shipped table).
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MergeArgs {
    authentic: PathBuf,
    artificial: PathBuf,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct StatsArgs {
    /// Corpus files, one sentence per line (default: standard input).
    files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct EvalArgs {
    /// Vector file; repeat to compare several tables.
    #[arg(long = "vectors", required = true)]
    vectors: Vec<PathBuf>,
    /// Task suite TSV (default: the bundled synthetic suite).
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Comma-separated stopwords, or `none`.
    #[arg(long)]
    stopwords: Option<String>,
    /// Apply the spelling rules to tokens before lookup.
    #[arg(long)]
    normalize_tokens: bool,
    /// Also report leave-one-task-out means per vector table.
    #[arg(long)]
    leave_one_out: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn rules(path: Option<&Path>) -> Result<NormalizationRuleSet> {
    match path {
        Some(p) => {
            NormalizationRuleSet::parse(&read(p)?).with_context(|| format!("{}", p.display()))
        }
        None => Ok(NormalizationRuleSet::default()),
    }
}

fn filters(spec: &str) -> Result<FilterPipeline> {
    if spec == "none" || spec.is_empty() {
        return Ok(FilterPipeline::new());
    }
    let names: Vec<&str> = spec.split(',').map(str::trim).collect();
    Ok(FilterPipeline::from_names(&names)?)
}

fn print_report(report: &CountReport, format: Format, to: &mut dyn Write) -> Result<()> {
    match format {
        Format::Text => write!(to, "{}", report.to_text())?,
        Format::Machine => writeln!(to, "{}", report.to_record())?,
    }
    Ok(())
}

fn reconciliation(filtered: u64, reference: u64) -> String {
    let delta = filtered as i64 - reference as i64;
    format!(
        "reference {reference}: filtered {filtered} is {:.3}x, delta {delta:+} ({:+.2}%)",
        filtered as f64 / reference as f64,
        100.0 * delta as f64 / reference as f64
    )
}

struct WriterSink<'w> {
    out: &'w mut dyn Write,
    plain: bool,
    seen: Option<HashSet<String>>,
    rejections: Option<Box<dyn Write>>,
    written: u64,
}

impl SentenceSink for WriterSink<'_> {
    fn accept(&mut self, s: &GeneratedSentence) -> Result<(), SinkError> {
        if let Some(seen) = &mut self.seen {
            if !seen.insert(s.text.clone()) {
                return Ok(());
            }
        }
        if self.plain {
            writeln!(self.out, "{}", s.text)?;
        } else {
            writeln!(self.out, "{}", s.display())?;
        }
        self.written += 1;
        Ok(())
    }

    fn reject(&mut self, s: &GeneratedSentence, verdict: &FilterVerdict) -> Result<(), SinkError> {
        if let Some(log) = &mut self.rejections {
            writeln!(log, "{}", rejection_record(s, verdict))?;
        }
        Ok(())
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let (g, kb) = args.inputs.load()?;
    let pipeline = filters(&args.filters)?;
    let mut out = output(args.out.as_deref())?;
    let mut rejections = match &args.rejections {
        Some(p) => {
            let mut w = output(Some(p))?;
            writeln!(w, "{REJECTION_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let mut err = io::stderr().lock();
    if let Some(n) = args.sample {
        let mut seen = HashSet::new();
        for s in sample(&g, &kb, args.seed, n, &pipeline)? {
            if args.dedup && !seen.insert(s.text.clone()) {
                continue;
            }
            writeln!(
                out,
                "{}",
                if args.plain {
                    s.text.clone()
                } else {
                    s.display()
                }
            )?;
        }
        out.flush()?;
        writeln!(err, "sampled {n} sentences (seed {})", args.seed)?;
        return Ok(());
    }
    let mut sink = WriterSink {
        out: &mut out,
        plain: args.plain,
        seen: args.dedup.then(HashSet::new),
        rejections: rejections.take(),
        written: 0,
    };
    let report = enumerate_into(&g, &kb, &pipeline, &mut sink)?;
    let written = sink.written;
    if let Some(mut log) = sink.rejections.take() {
        log.flush()?;
    }
    out.flush()?;
    print_report(&report, args.format, &mut err)?;
    if args.dedup {
        writeln!(err, "written after dedup: {written}")?;
    }
    let reference = args
        .reference_count
        .or(args.inputs.bundled().then_some(REFERENCE_COUNT));
    if let Some(r) = reference {
        let filtered = report.filtered_count.unwrap_or(report.raw_count);
        writeln!(err, "{}", reconciliation(filtered, r))?;
    }
    Ok(())
}

fn count(args: &CountArgs) -> Result<()> {
    let (g, kb) = args.inputs.load()?;
    let mut report = count_symbolic(&g, &kb)?;
    let mut out = io::stdout().lock();
    let pipeline = match &args.filters {
        Some(spec) => filters(spec)?,
        None => FilterPipeline::new(),
    };
    let enumerate_needed = !pipeline.is_empty() || args.verify;
    if enumerate_needed && report.raw_count > args.verify_bound {
        bail!(
            "raw count {} exceeds the enumeration bound {}; raise --verify-bound",
            report.raw_count,
            args.verify_bound
        );
    }
    let mut note = None;
    if enumerate_needed {
        let enumerated = enumerate_into(&g, &kb, &pipeline, &mut |_: &GeneratedSentence| Ok(()))?;
        if args.verify {
            let same = enumerated.raw_count == report.raw_count
                && enumerated
                    .per_rule
                    .iter()
                    .zip(&report.per_rule)
                    .all(|(a, b)| a.raw == b.raw);
            if !same {
                bail!(
                    "symbolic != enumerated: {} vs {}",
                    report.raw_count,
                    enumerated.raw_count
                );
            }
            note = Some("symbolic == enumerated");
        }
        if !pipeline.is_empty() {
            report.filtered_count = enumerated.filtered_count;
            for (t, e) in report.per_rule.iter_mut().zip(&enumerated.per_rule) {
                t.filtered = e.filtered;
            }
        }
    }
    print_report(&report, args.format, &mut out)?;
    if let Some(n) = note {
        writeln!(out, "{n}")?;
    }
    Ok(())
}

fn normalize_cmd(args: &NormalizeArgs) -> Result<()> {
    let rules = rules(args.rules.as_deref())?;
    let mut input: Box<dyn BufRead> = match &args.input {
        Some(p) => Box::new(open(p)?),
        None => Box::new(BufReader::new(io::stdin().lock())),
    };
    let mut out = output(args.out.as_deref())?;
    let mut buf = Vec::new();
    let mut line = 0;
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line += 1;
        let text = match buf.strip_suffix(b"\n") {
            Some(t) => t.strip_suffix(b"\r").unwrap_or(t),
            None => &buf[..],
        };
        let n = normalize_bytes(text, &rules)
            .map_err(|_| anyhow::anyhow!("line {line}: invalid UTF-8"))?;
        writeln!(out, "{n}")?;
    }
    out.flush()?;
    Ok(())
}

fn merge(args: &MergeArgs) -> Result<()> {
    let rules = rules(args.rules.as_deref())?;
    let out = output(args.out.as_deref())?;
    let stats = merge_corpora(open(&args.authentic)?, open(&args.artificial)?, &rules, out)?;
    let mut err = io::stderr().lock();
    match args.format {
        Format::Machine => writeln!(err, "{}", serde_json::to_string(&stats)?)?,
        Format::Text => {
            write!(err, "{}", stats.authentic.table("authentic"))?;
            write!(err, "{}", stats.artificial.table("artificial"))?;
            write!(err, "{}", stats.merged.table("merged"))?;
            if let Ok(r) = augmentation_ratios(&stats.authentic, &stats.artificial) {
                writeln!(err, "{r}")?;
            }
        }
    }
    Ok(())
}

fn stats_line(label: Option<&Path>, s: &CorpusStats, format: Format) -> String {
    match (format, label) {
        (Format::Machine, _) => s.to_record(),
        (Format::Text, None) => s.row(),
        (Format::Text, Some(p)) => format!("{}\t{}", p.display(), s.row()),
    }
}

fn stats(args: &StatsArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    if args.files.is_empty() {
        let mut text = Vec::new();
        io::stdin().lock().read_to_end(&mut text)?;
        let s = compute_stats(&text[..])?;
        writeln!(out, "{}", stats_line(None, &s, args.format))?;
        return Ok(());
    }
    let many = args.files.len() > 1;
    for p in &args.files {
        let s = compute_stats(open(p)?).with_context(|| format!("{}", p.display()))?;
        writeln!(
            out,
            "{}",
            stats_line(many.then_some(p.as_path()), &s, args.format)
        )?;
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let mut suite = match &args.suite {
        Some(p) => load_suite(&read(p)?).with_context(|| format!("{}", p.display()))?,
        None => load_suite(microgrammar::data::TASK_SUITE)?,
    };
    suite.options = match args.stopwords.as_deref() {
        None => EmbedOptions::default(),
        Some("none") | Some("") => EmbedOptions::with_stopwords(Vec::<String>::new()),
        Some(list) => EmbedOptions::with_stopwords(list.split(',').map(str::trim)),
    };
    if args.normalize_tokens {
        suite.options.orthography = Some(NormalizationRuleSet::default());
    }
    let tables: Vec<(String, EmbeddingTable)> = args
        .vectors
        .iter()
        .map(|p| {
            let t = load_vectors(&read(p)?).with_context(|| format!("{}", p.display()))?;
            Ok((p.display().to_string(), t))
        })
        .collect::<Result<_>>()?;
    let mut out = io::stdout().lock();
    for (name, table) in &tables {
        let score = evaluate_suite(&suite, table)?;
        match args.format {
            Format::Text => {
                if tables.len() > 1 {
                    writeln!(out, "# {name}")?;
                }
                write!(out, "{}", score.to_text())?;
            }
            Format::Machine => writeln!(out, "{}", score.to_record())?,
        }
    }
    if args.leave_one_out {
        let variants: Vec<(&str, &EmbeddingTable)> =
            tables.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let report = leave_one_out_report(&suite, &variants)?;
        match args.format {
            Format::Text => write!(out, "{report}")?,
            Format::Machine => writeln!(out, "{}", serde_json::to_string(&report)?)?,
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Count(a) => count(a),
        Command::Normalize(a) => normalize_cmd(a),
        Command::Merge(a) => merge(a),
        Command::Stats(a) => stats(a),
        Command::Eval(a) => eval(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reconciliation_note() {
        assert_eq!(
            reconciliation(688_716, REFERENCE_COUNT),
            "reference 807093: filtered 688716 is 0.853x, delta -118377 (-14.67%)"
        );
    }

    #[test]
    fn filter_specs() {
        assert!(filters("none").unwrap().is_empty());
        assert_eq!(
            filters("animacy, no_repeat").unwrap().names(),
            vec!["animacy", "no_repeat"]
        );
        assert!(filters("spelling").is_err());
    }
}
