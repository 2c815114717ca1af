use std::io::Write;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riskgcn"))
}

fn run(args: &[&str], dir: &std::path::Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn battle_table_lists_ordered_entries_and_selection() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["battle-table", "5", "3", "--risky", "0.3"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| l.contains(" a=")).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].contains("a=0   d=3"));
    assert!(rows[7].contains("a=5   d=0"));
    assert!(rows[4].ends_with("<= selected"));

    let o = run(&["--format", "json", "battle-table", "2", "2", "--exact"], dir.path());
    let records: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 5);
    assert!(records[0]["exact"].is_string());
}

#[test]
fn missing_model_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["agent", "--model", "absent.bin"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));
    let o = run(&["tournament", "--agents", "agent,random", "-n", "1"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!run(&["frobnicate"], dir.path()).status.success());
    assert!(!run(&["tournament", "--agents", "random", "--nope"], dir.path())
        .status
        .success());
    assert!(!run(&["tournament", "--agents", "wizard", "-n", "1"], dir.path())
        .status
        .success());
    std::fs::write(dir.path().join("bad.toml"), "[search]\ntp = 1\n").unwrap();
    let o = run(&["--config", "bad.toml", "show-config"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn config_file_merges_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "[search]\nrisky = 0.6\n[rules]\nturn_cap = 50\n",
    )
    .unwrap();
    let o = run(&["--config", "c.toml", "show-config", "--turn-cap", "70"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("risky = 0.6"));
    assert!(text.contains("turn_cap = 70"));
}

#[test]
fn tournament_stats_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "tournament",
            "--agents",
            "aggressor,random,random,clusterer,turtle,random",
            "-n",
            "12",
            "--seed",
            "1",
            "--out",
            out,
        ]
    };
    assert!(run(&args("a.json"), dir.path()).status.success());
    assert!(run(&args("b.json"), dir.path()).status.success());
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    for agent in report["agents"].as_array().unwrap() {
        let total: f64 = agent["rank_probs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p.as_f64().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(agent["n"].as_u64().unwrap() > 0);
    }
}

#[test]
fn data_train_agent_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gen-data", "--out", "d.jsonl", "-n", "2", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // Write-once.
    assert!(!run(&["gen-data", "--out", "d.jsonl", "-n", "2"], dir.path())
        .status
        .success());

    let o = run(
        &[
            "--format", "json", "train", "--data", "d.jsonl", "--out", "m.bin", "--epochs", "1",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let kinds: Vec<String> = stdout(&o)
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["record"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(kinds, ["initial", "epoch", "model"]);

    let o = run(&["agent", "--model", "m.bin", "-n", "0", "--risky", "0.4"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("risky = 0.4"));

    let o = run(
        &[
            "play",
            "--agents",
            "agent,aggressor",
            "--model",
            "m.bin",
            "--node-budget",
            "200",
            "--turn-cap",
            "30",
            "--initial-armies",
            "40",
            "--log-out",
            "g.log",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["replay", "g.log"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("replayed"));
    let o = run(&["features", "--log", "g.log", "--entry", "3"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("global (72)"));
}

#[test]
fn human_gets_legality_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args([
            "play",
            "--agents",
            "human,random",
            "--seed",
            "3",
            "--initial-armies",
            "40",
        ])
        .current_dir(dir.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // A placement on territory 999 is illegal; then input ends.
    child.stdin.take().unwrap().write_all(b"0\n999 1\nhello\n").unwrap();
    let o = child.wait_with_output().unwrap();
    let text = stdout(&o);
    assert!(text.contains("you are P0"));
    assert!(text.contains("illegal:"), "{text}");
    assert!(!o.status.success(), "closed input aborts the match");
}
