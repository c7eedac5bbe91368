use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hyperchat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperchat")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_sim(names: &[&str], out: &Path) -> Output {
    let paths: Vec<String> = names.iter().map(|n| scenarios_dir().join(format!("{n}.json")).display().to_string()).collect();
    let mut args = vec!["sim", "run", "--seed", "1", "--jobs", "2", "--out", out.to_str().unwrap()];
    args.extend(paths.iter().map(String::as_str));
    hyperchat(&args)
}

#[test]
fn sim_run_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let o = run_sim(&["single_room", "propagation", "tie_break"], out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("ok")).count(), 3);

    let dir = out.path().join("propagation");
    let result: Value = serde_json::from_str(&fs::read_to_string(dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["winner"]["label"], "solar array");
    let trace = fs::read_to_string(dir.join("propagation.csv")).unwrap();
    assert!(trace.lines().filter(|l| l.contains("solar array")).count() >= 4);
    assert!(dir.join("propagation.events.jsonl").exists());
}

#[test]
fn sim_run_fails_on_unmet_expectation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s: Value = serde_json::from_str(&fs::read_to_string(scenarios_dir().join("single_room.json")).unwrap()).unwrap();
    s["name"] = "wrong_winner".into();
    s["expectations"] = serde_json::json!({"winner": "city loft"});
    let path = tmp.path().join("wrong_winner.json");
    fs::write(&path, s.to_string()).unwrap();
    let o = hyperchat(&["sim", "run", "--out", tmp.path().join("out").to_str().unwrap(), path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("FAIL  wrong_winner"));

    fs::write(&path, r#"{"name": "x", "roster": [], "script": [], "bogus": 1}"#).unwrap();
    let o = hyperchat(&["sim", "run", "--out", tmp.path().join("out").to_str().unwrap(), path.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn probe_reports_each_hop() {
    let o = hyperchat(&["sim", "probe", "--rooms", "4", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with("true")));

    assert!(!hyperchat(&["sim", "probe", "--rooms", "1"]).status.success());
}

#[test]
fn replay_and_offline_finalize() {
    let out = tempfile::tempdir().unwrap();
    assert!(run_sim(&["majority_b"], out.path()).status.success());
    let log = out.path().join("majority_b/majority_b.events.jsonl");
    let o = hyperchat(&["replay", log.to_str().unwrap()]);
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["phase"], "finalized");
    assert_eq!(summary["result"]["winner"]["label"], "option b");

    // Drop the finalized line and finish the session offline.
    let state = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.last().unwrap().contains("\"finalized\""));
    fs::write(state.path().join("majority_b.events.jsonl"), lines[..lines.len() - 1].join("\n") + "\n").unwrap();
    let o = hyperchat(&["finalize", "majority_b", "--state-dir", state.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(result["winner"]["label"], "option b");
    let o = hyperchat(&["replay", state.path().join("majority_b.events.jsonl").to_str().unwrap()]);
    assert!(o.status.success());

    let bad = state.path().join("bad.jsonl");
    fs::write(&bad, "{\"seq\": 5}\n").unwrap();
    assert!(!hyperchat(&["replay", bad.to_str().unwrap()]).status.success());
    assert!(!hyperchat(&["finalize", "missing", "--state-dir", state.path().to_str().unwrap()]).status.success());
}

#[test]
fn analyze_study_pair_with_survey() {
    let out = tempfile::tempdir().unwrap();
    assert!(run_sim(&["study_chat_48", "study_swarm_48"], out.path()).status.success());
    let survey = out.path().join("survey.csv");
    let mut csv = String::from("participant,question,answer\n");
    for i in 1..=48 {
        let answer = if i <= 32 { "swarm_by_a_little" } else { "chat_by_a_lot" };
        csv.push_str(&format!("p{i:02},preferred_structure,{answer}\n"));
    }
    fs::write(&survey, csv).unwrap();

    let report = out.path().join("report");
    let o = hyperchat(&[
        "analyze",
        "--chat",
        out.path().join("study_chat_48/study_chat_48.events.jsonl").to_str().unwrap(),
        "--swarm",
        out.path().join("study_swarm_48/study_swarm_48.events.jsonl").to_str().unwrap(),
        "--survey",
        survey.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = fs::read_to_string(report.join("report.md")).unwrap();
    assert!(md.contains("preferred_structure"));
    assert_eq!(md, stdout(&o));
    for t in ["participants", "contribution", "percentiles", "survey"] {
        assert!(report.join("tables").join(format!("{t}.csv")).exists(), "{t}");
    }
    let survey_table = fs::read_to_string(report.join("tables/survey.csv")).unwrap();
    assert!(survey_table.contains("0.0146"), "{survey_table}");
}

#[test]
fn study_generator_matches_bundled_files() {
    let out = tempfile::tempdir().unwrap();
    let o = hyperchat(&["sim", "study", "--seed", "2023", "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success());
    for name in ["study_chat_48.json", "study_swarm_48.json"] {
        let fresh = fs::read_to_string(out.path().join(name)).unwrap();
        let bundled = fs::read_to_string(scenarios_dir().join(name)).unwrap();
        assert_eq!(fresh, bundled, "{name}");
    }
}
