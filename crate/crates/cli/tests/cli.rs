use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gubm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gubm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const LOG: &str = r#"{"format":"gubm-log","version":1}
{"session_id":"s1","query_id":"q","rows":[3,3],"images":["a","b","c","d","e","f"],"events":[{"t_ms":10,"kind":"hover","row":0,"col":1},{"t_ms":20,"kind":"click","row":1,"col":2}]}
{"session_id":"s2","query_id":"q","rows":[3,3],"images":["a","b","c","d","e","f"],"events":[{"t_ms":5,"kind":"hover","row":1,"col":0}]}
{"session_id":"s3","query_id":"q","rows":[3,3],"images":["a","b","c","d","e","f"],"events":[]}
"#;

fn small_sim(dir: &Path) {
    fs::write(
        dir.join("sim.toml"),
        "queries = 2\nsessions_per_query = 40\nrows = 4\nseed = 5\npolicy = \"zshape\"\n\n[gamma]\ndown = 0.9\nup = 0.7\ndecay = 0.9\n",
    )
    .unwrap();
    let out = gubm(dir, &["simulate", "--config", "sim.toml", "--out", "log.jsonl"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let help = gubm(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    for cmd in ["simulate", "split", "train", "evaluate", "rerank", "analyze"] {
        assert!(stdout(&help).contains(cmd), "{cmd} missing from help");
        assert_eq!(code(&gubm(dir.path(), &[cmd, "--help"])), 0);
    }
    assert_eq!(code(&gubm(dir.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("log.jsonl"), LOG).unwrap();
    let cases: &[&[&str]] = &[
        &[],
        &["frobnicate"],
        &["train", "--log", "log.jsonl"],
        &["train", "--log", "log.jsonl", "--out", "p", "--split", "test"],
        &["train", "--log", "log.jsonl", "--out", "p", "--model", "dbn"],
        &["train", "--log", "log.jsonl", "--out", "p", "--direction", "diagonal"],
        &["train", "--log", "missing.jsonl", "--out", "p"],
        &["split", "--log", "log.jsonl", "--out", "m", "--ratio", "7-3"],
        &["analyze", "--log", "log.jsonl", "--stat", "gaze"],
        &["--workers", "0", "analyze", "--log", "log.jsonl", "--stat", "counts"],
    ];
    for args in cases {
        assert_eq!(code(&gubm(dir.path(), args)), 1, "{args:?}");
    }
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_kind = LOG.replace("\"click\"", "\"scroll\"");
    fs::write(dir.path().join("bad.jsonl"), bad_kind).unwrap();
    let out = gubm(dir.path(), &["analyze", "--log", "bad.jsonl", "--stat", "counts"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(dir.path().join("params"), "not a parameter file\n").unwrap();
    fs::write(dir.path().join("c"), "a\n").unwrap();
    let out = gubm(dir.path(), &["rerank", "--params", "params", "--query", "q", "--candidates", "c"]);
    assert_eq!(code(&out), 2);

    fs::write(dir.path().join("ann.txt"), "q a 3 1\n").unwrap();
    fs::write(
        dir.path().join("truth"),
        "#gubm-params v1\n#model\ttruth\nA\tq\ta\t5.00000000e-1\n",
    )
    .unwrap();
    let out = gubm(
        dir.path(),
        &["evaluate", "--params", "truth", "--metric", "ndcg", "--annotations", "ann.txt"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn evaluate_flag_requirements() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("truth"),
        "#gubm-params v1\n#model\ttruth\nA\tq\ta\t5.00000000e-1\n",
    )
    .unwrap();
    fs::write(dir.path().join("log.jsonl"), LOG).unwrap();
    let no_log = gubm(dir.path(), &["evaluate", "--params", "truth"]);
    assert_eq!(code(&no_log), 1);
    let no_ann = gubm(dir.path(), &["evaluate", "--params", "truth", "--metric", "ndcg"]);
    assert_eq!(code(&no_ann), 1);
    let truth_ppl = gubm(
        dir.path(),
        &["evaluate", "--params", "truth", "--log", "log.jsonl", "--min-sessions", "0"],
    );
    assert_eq!(code(&truth_ppl), 1);
}

#[test]
fn analyze_reports() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("log.jsonl"), LOG).unwrap();
    let counts = gubm(dir.path(), &["analyze", "--log", "log.jsonl", "--stat", "counts"]);
    assert_eq!(code(&counts), 0);
    let text = stdout(&counts);
    assert!(text.contains("sessions\t3\n"));
    assert!(text.contains("clicks\t1\n"));
    assert!(text.contains("hovers\t2\n"));
    assert!(text.contains("click_session_fraction\t0.333333\n"));

    let dirs = gubm(dir.path(), &["analyze", "--log", "log.jsonl", "--stat", "directions"]);
    assert!(stdout(&dirs).contains("down_fraction\t1.000000\n"));

    let dist = gubm(dir.path(), &["analyze", "--log", "log.jsonl", "--stat", "distances"]);
    assert_eq!(stdout(&dist), "interaction_distance\tfraction\n1\t1.000000\n");
}

#[test]
fn simulate_writes_log_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path());
    let log = fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 81);
    let truth = fs::read_to_string(dir.path().join("log.jsonl.truth")).unwrap();
    assert!(truth.starts_with("#gubm-params v1\n#model\ttruth\n"));
    assert!(truth.contains("#seed\t5\n"));

    fs::write(dir.path().join("bad.toml"), "queries = 2\ncolour = \"red\"\n").unwrap();
    let out = gubm(dir.path(), &["simulate", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn split_respects_ratio() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path());
    let out = gubm(dir.path(), &["split", "--log", "log.jsonl", "--out", "m.txt", "--seed", "9"]);
    assert_eq!(code(&out), 0);
    let manifest = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    let train = manifest.lines().filter(|l| l.starts_with("train\t")).count();
    let test = manifest.lines().filter(|l| l.starts_with("test\t")).count();
    assert_eq!((train, test), (56, 24));
}

#[test]
fn train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    small_sim(dir.path());
    let d = dir.path();
    assert_eq!(code(&gubm(d, &["split", "--log", "log.jsonl", "--out", "m.txt"])), 0);
    for (model, out) in [("gubm", "g.params"), ("gubm-c", "c.params"), ("ubm", "u.params")] {
        let r = gubm(
            d,
            &["train", "--log", "log.jsonl", "--manifest", "m.txt", "--model", model, "--iters", "5", "--out", out, "--trace", "t.tsv"],
        );
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        assert_eq!(fs::read_to_string(d.join("t.tsv")).unwrap().lines().count(), 7);
    }
    let g = fs::read_to_string(d.join("g.params")).unwrap();
    let c = fs::read_to_string(d.join("c.params")).unwrap();
    let u = fs::read_to_string(d.join("u.params")).unwrap();
    assert!(g.contains("#model\tgubm\n") && c.contains("#model\tgubm\n"));
    assert!(u.contains("#model\tubm\n") && u.contains("\nGU\t"));
    assert_ne!(g, c, "clicks-only training must see fewer signals");

    let r = gubm(
        d,
        &["evaluate", "--log", "log.jsonl", "--manifest", "m.txt", "--params", "g.params", "--summary", "s.json"],
    );
    assert_eq!(code(&r), 0);
    let report = stdout(&r);
    assert!(report.starts_with("rank\tsessions\tperplexity\n1\t24\t"));
    assert!(report.lines().last().unwrap().starts_with("overall\t\t"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["metric"], "perplexity");
    assert_eq!(summary["sessions"], 24);
    assert!(summary["overall"].as_f64().unwrap() >= 1.0);
}

#[test]
fn ndcg_and_rerank_follow_relevance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("p"),
        "#gubm-params v1\n#model\ttruth\nA\tq\ta\t2.00000000e-1\nA\tq\tb\t9.00000000e-1\nA\tq\tc\t5.00000000e-1\n",
    )
    .unwrap();
    fs::write(d.join("cands"), "a\nb\n\nc\nz\n").unwrap();
    let r = gubm(d, &["rerank", "--params", "p", "--query", "q", "--candidates", "cands"]);
    assert_eq!(code(&r), 0);
    // Unknown images score the default 0.5 and keep their input order among ties.
    assert_eq!(stdout(&r), "b\nc\nz\na\n");
    let r = gubm(d, &["rerank", "--params", "p", "--query", "q", "--candidates", "cands", "--scores"]);
    assert!(stdout(&r).starts_with("b\t9.00000000e-1\n"));

    fs::write(d.join("ann"), "q a 2 1\nq b 2 4\nq c 1 0\nr x 0 0\n").unwrap();
    let r = gubm(
        d,
        &["evaluate", "--params", "p", "--metric", "ndcg", "--annotations", "ann", "--depths", "1,3", "--summary", "n.json"],
    );
    assert_eq!(code(&r), 0);
    let text = stdout(&r);
    assert_eq!(
        text,
        "query\tndcg@1\tndcg@3\tdegenerate\nq\t1.000000\t1.000000\tfalse\nr\t0.000000\t0.000000\ttrue\nmean\t1.000000\t1.000000\tfalse\n"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("n.json")).unwrap()).unwrap();
    assert_eq!(summary["degenerate_queries"], 1);
}

#[test]
fn min_session_threshold_drops_small_queries() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("log.jsonl"), LOG).unwrap();
    // Three sessions fall below the default threshold of ten.
    let r = gubm(dir.path(), &["train", "--log", "log.jsonl", "--out", "p"]);
    assert_eq!(code(&r), 2);
    let r = gubm(dir.path(), &["train", "--log", "log.jsonl", "--out", "p", "--min-sessions", "1"]);
    assert_eq!(code(&r), 0);
}
