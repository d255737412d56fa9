use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use microgrammar::grammar::CountReport;
use microgrammar::similarity::TaskScore;

const KB: &str = "surface\tcategory\tanimacy\tgloss
siwatl\tn\tanimate\twoman
elotl\tn\tinanimate\tcorn
kwa\tv\tanimate\teat
pia\tv\tboth\thave
aman\tADV_T\t-\tnow
miyak\tADV_Q\t-\ta lot
∅\tADV_Q\t-\tvide
weyi\tADJ\t-\tbig
se\tART\t-\tone
no\tPOS\t-\tmy
mo\tPOS\t-\tyour
i\tPOS\t-\this
na\tPP\t-\tI
ta\tPP\t-\tyou
ya\tPP\t-\the
ni\tPV\t-\tI
ti\tPV\t-\tyou
∅\tPV\t-\the
amo\tNEG\t-\tno
";

type Model = Box<dyn Fn(usize) -> usize>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_microgrammar"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8(b.to_vec()).unwrap()
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, content).unwrap();
    p
}

fn core_data(rel: &str) -> String {
    format!("{}/../core/data/{rel}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn generate_writes_filtered_sentences() {
    let dir = tempfile::tempdir().unwrap();
    let kb = write(dir.path(), "kb.tsv", KB);
    let out = dir.path().join("s.txt");
    let rej = dir.path().join("rejected.tsv");
    let o = run(&[
        "generate",
        "--grammar",
        &core_data("grammars/micro.cfg"),
        "--kb",
        kb.to_str().unwrap(),
        "--filters",
        "animacy,no_repeat",
        "--out",
        out.to_str().unwrap(),
        "--rejections",
        rej.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let err = text(&o.stderr);
    assert!(err.contains("raw_count: "), "{err}");
    assert!(err.contains("filtered_count: "), "{err}");
    assert!(!err.contains("reference"), "{err}");
    let written = fs::read_to_string(&out).unwrap();
    let filtered: usize = err
        .lines()
        .find_map(|l| l.strip_prefix("filtered_count: "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(written.lines().count(), filtered);
    assert!(written.lines().all(|l| l.ends_with('.')));
    assert!(!written.contains("elotl kwa"));
    let rejected = fs::read_to_string(&rej).unwrap();
    assert!(rejected.starts_with("sentence\tfilter\treason\n"));
    assert!(rejected
        .lines()
        .skip(1)
        .all(|l| l.split('\t').nth(1) == Some("animacy")));
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let o = run(&[
            "generate",
            "--sample",
            "100",
            "--seed",
            "7",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
    }
    let first = fs::read(&a).unwrap();
    assert_eq!(first, fs::read(&b).unwrap());
    assert_eq!(text(&first).lines().count(), 100);
}

#[test]
fn full_bundled_run_is_compared_with_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("all.txt");
    let o = run(&[
        "generate",
        "--format",
        "machine",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let err = text(&o.stderr);
    let mut lines = err.lines();
    let report = CountReport::from_record(lines.next().unwrap()).unwrap();
    assert_eq!(report.raw_count, 794_556);
    assert_eq!(report.filtered_count, Some(688_716));
    assert_eq!(
        lines.next().unwrap(),
        "reference 807093: filtered 688716 is 0.853x, delta -118377 (-14.67%)"
    );
}

#[test]
fn count_verifies_against_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let kb = write(dir.path(), "kb.tsv", KB);
    let o = run(&[
        "count",
        "--kb",
        kb.to_str().unwrap(),
        "--verify",
        "--filters",
        "animacy",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.lines().any(|l| l == "symbolic == enumerated"), "{out}");
    assert!(out.contains("filtered_count: "));

    let o = run(&["count", "--kb", kb.to_str().unwrap(), "--format", "machine"]);
    let line = text(&o.stdout);
    assert_eq!(line.lines().count(), 1);
    let r = CountReport::from_record(line.trim_end()).unwrap();
    assert_eq!(r.to_record(), line.trim_end());
}

#[test]
fn count_errors() {
    let dir = tempfile::tempdir().unwrap();
    let g = write(dir.path(), "rec.cfg", "@start P\nP -> A x\nA -> P\n");
    let o = run(&["count", "--grammar", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("recursion detected"));
    let o = run(&[
        "count",
        "--kb",
        dir.path().join("missing.tsv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stdout).is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["count", "--verify-bound", "many"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn stats_on_task_files() {
    let o = run(&["stats", &core_data("task/references.txt")]);
    assert_eq!(text(&o.stdout), "30 246 189 8.20\n");
    let o = run(&["stats", &core_data("task/candidates.txt")]);
    assert_eq!(text(&o.stdout), "150 1026 599 6.84\n");
    let o = run_stdin(&["stats"], b"");
    assert_eq!(text(&o.stdout), "0 0 0 0.00\n");
}

#[test]
fn normalize_with_rule_table() {
    let o = run_stdin(
        &["normalize", "--rules", &core_data("rules/default.tsv")],
        b"Axcan kalli\nchihua\n",
    );
    assert!(o.status.success());
    assert_eq!(text(&o.stdout), "axkan kali\nchiwa\n");
    let o = run_stdin(&["normalize"], b"ok\n\xff\xfe\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("line 2"));
}

#[test]
fn merge_with_empty_artificial_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.txt", "Axcan kalli\nNi kwa.\n");
    let b = write(dir.path(), "b.txt", "");
    let out = dir.path().join("m.txt");
    let o = run(&[
        "merge",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let normalized = run(&["normalize", a.to_str().unwrap()]);
    assert_eq!(fs::read(&out).unwrap(), normalized.stdout);
    assert!(text(&o.stderr).contains("merged"));
}

/// Vectors and a suite where candidate `k` of task `t` sits at an angle set
/// by `model_rank(human_rank)` from its reference.
fn eval_fixture(dir: &Path, model_rank: impl Fn(usize) -> usize) -> (PathBuf, PathBuf) {
    let humans = [[3, 1, 5, 2, 4], [1, 2, 3, 4, 5], [5, 4, 3, 2, 1]];
    let mut vectors = Vec::new();
    let mut suite = String::from("task_id\trole\tposition\thuman_rank\tsentence\n");
    for (t, ranks) in humans.iter().enumerate() {
        vectors.push(format!("ref{t} 1 0"));
        suite.push_str(&format!("t{t}\treference\t-\t-\tIwan ref{t}.\n"));
        for (k, &h) in ranks.iter().enumerate() {
            let angle = 0.3 * model_rank(h) as f64;
            vectors.push(format!("c{t}x{k} {} {}", angle.cos(), angle.sin()));
            suite.push_str(&format!("t{t}\tcandidate\t{}\t{h}\tc{t}x{k} in\n", k + 1));
        }
    }
    let v = write(
        dir,
        "vectors.txt",
        &format!("{} 2\n{}\n", vectors.len(), vectors.join("\n")),
    );
    let s = write(dir, "suite.tsv", &suite);
    (v, s)
}

#[test]
fn eval_fixture_suites() {
    let cases: [(Model, &str); 3] = [
        (Box::new(|h| h), "1.000"),
        (Box::new(|h| 6 - h), "-1.000"),
        (
            Box::new(|h| match h {
                4 => 5,
                5 => 4,
                h => h,
            }),
            "0.800",
        ),
    ];
    for (f, want) in cases {
        let dir = tempfile::tempdir().unwrap();
        let (v, s) = eval_fixture(dir.path(), f);
        let o = run(&[
            "eval",
            "--vectors",
            v.to_str().unwrap(),
            "--suite",
            s.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let out = text(&o.stdout);
        assert!(out.ends_with(&format!("mean_tau\t{want}\n")), "{out}");

        let o = run(&[
            "eval",
            "--vectors",
            v.to_str().unwrap(),
            "--suite",
            s.to_str().unwrap(),
            "--format",
            "machine",
            "--leave-one-out",
        ]);
        let out = text(&o.stdout);
        let score = TaskScore::from_record(out.lines().next().unwrap()).unwrap();
        assert_eq!(score.mean(), want);
        assert_eq!(score.per_task.len(), 3);
        assert!(out.lines().nth(1).unwrap().contains("\"spread\""));
    }
}

#[test]
fn eval_rejects_bad_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let v = write(dir.path(), "v.txt", "1 3\nkali 1 0\n");
    let o = run(&["eval", "--vectors", v.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("expected 3 components"));
}
