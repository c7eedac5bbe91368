use std::collections::BTreeSet;
use std::path::PathBuf;

use hyperchat_core::config::SessionConfig;
use hyperchat_core::ids::{ParticipantId, RoomId};
use hyperchat_core::lm::MockBackend;
use hyperchat_core::message::Author;
use hyperchat_core::partition::partition_population;
use hyperchat_core::session::log::{read_events, write_events};
use hyperchat_core::session::{EventPayload, Session, SessionState};
use hyperchat_core::sim::{check_expectations, oracle_outcome, run_scenario, study_pair, Expectations, Scenario, ScriptEntry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bundled() -> Vec<Scenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Scenario::load(p).unwrap()).collect()
}

fn assert_matches_oracle(s: &Scenario, seed: u64) {
    let out = run_scenario(s, seed).unwrap();
    let oracle = oracle_outcome(s);
    let universe: BTreeSet<String> = out.result.table.iter().map(|r| r.label.clone()).collect();
    for (item, total) in &oracle.totals {
        if *total != 0 {
            assert!(universe.contains(item), "{}: {item} missing from live catalog", s.name);
        }
    }
    for row in &out.result.table {
        let want = oracle.net(&row.label);
        assert!((row.net.get() - (want * 10_000.0).round() / 10_000.0).abs() < 1e-12, "{}: {} {} vs {want}", s.name, row.label, row.net.get());
    }
    assert_eq!(out.result.winner_label().map(str::to_string), oracle.winner_among(&universe), "{} seed {seed}", s.name);
}

#[test]
fn bundled_scenarios_meet_expectations_and_oracle() {
    let all = bundled();
    assert!(all.len() >= 6);
    for s in &all {
        for seed in 0..3 {
            let out = run_scenario(s, seed).unwrap();
            let failures = check_expectations(s, &out);
            assert!(failures.is_empty(), "{} seed {seed}: {failures:?}", s.name);
            assert_matches_oracle(s, seed);
        }
    }
}

#[test]
fn study_files_match_generator() {
    let (chat, swarm) = study_pair(2023);
    for s in [chat, swarm] {
        let on_disk = Scenario::load(&scenarios_dir().join(format!("{}.json", s.name))).unwrap();
        assert_eq!(on_disk, s, "regenerate with `hyperchat sim study`");
    }
}

#[test]
fn random_scenarios_match_oracle() {
    for seed in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..30);
        let roster: Vec<ParticipantId> = (0..n).map(|i| ParticipantId::new(format!("r{i}"))).collect();
        let mut script = Vec::new();
        for _ in 0..rng.gen_range(0..80) {
            let item = ["x", "y", "z"][rng.gen_range(0..3)];
            let s = rng.gen_range(1..=3);
            let body = match rng.gen_range(0..3) {
                0 => format!("PROPOSE({item}, {s})"),
                1 => format!("SUPPORT({item}, {s})"),
                _ => format!("OPPOSE({item}, {s})"),
            };
            // Distinct times keep script order unambiguous.
            script.push(ScriptEntry { at_ms: 0, participant: Some(roster[rng.gen_range(0..n)].clone()), agent_room: None, body });
        }
        let mut times: Vec<u64> = (0..script.len()).map(|i| i as u64 * 3_000 + rng.gen_range(0..2_000)).collect();
        times.sort_unstable();
        for (e, t) in script.iter_mut().zip(times) {
            e.at_ms = t.min(359_000);
        }
        let s = Scenario { name: format!("random-{seed}"), config: SessionConfig::default(), roster, script, expectations: Expectations::default() };
        assert_matches_oracle(&s, seed);
    }
}

#[test]
fn two_rooms_strong_minority_wins() {
    let roster: Vec<ParticipantId> = (0..10).map(|i| ParticipantId::new(format!("t{i}"))).collect();
    let cfg = SessionConfig { rng_seed: 5, ..Default::default() };
    let plan = partition_population(&roster, &cfg).unwrap();
    assert_eq!(plan.rooms.len(), 2);
    let script = roster
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let body = if plan.room_of(p) == Some(RoomId(0)) { "SUPPORT(a, 3)" } else { "SUPPORT(b, 1)" };
            ScriptEntry { at_ms: 1000 + i as u64 * 500, participant: Some(p.clone()), agent_room: None, body: body.into() }
        })
        .collect();
    let s = Scenario { name: "ab".into(), config: cfg, roster, script, expectations: Expectations::default() };
    let out = run_scenario(&s, 5).unwrap();
    let w = out.result.winner.as_ref().unwrap();
    assert_eq!(w.label, "a");
    assert_eq!(w.net.get(), 1.5);
    let b = out.result.table.iter().find(|r| r.label == "b").unwrap();
    assert_eq!(b.net.get(), 0.5);
}

#[test]
fn empty_script_has_no_winner() {
    let s = Scenario {
        name: "empty".into(),
        config: SessionConfig::default(),
        roster: (0..12).map(|i| ParticipantId::new(format!("e{i}"))).collect(),
        script: vec![],
        expectations: Expectations::default(),
    };
    let out = run_scenario(&s, 1).unwrap();
    assert!(out.result.winner.is_none());
    let again = run_scenario(&s, 1).unwrap();
    assert_eq!(out.event_log_jsonl(), again.event_log_jsonl());
}

#[test]
fn delivery_groups_match_plan() {
    let roster: Vec<ParticipantId> = (0..137).map(|i| ParticipantId::new(format!("d{i}"))).collect();
    let mut session = Session::create(SessionConfig { duration_s: 3600, rng_seed: 3, ..Default::default() }, 0).unwrap();
    for p in &roster {
        session.join(p.clone(), 0).unwrap();
    }
    let plan = session.start(0).unwrap().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..10_000u64 {
        let p = &roster[rng.gen_range(0..roster.len())];
        let (_, jobs) = session.post_message(p, "msg", i * 300).unwrap();
        session.run_inline(jobs, &MockBackend, i * 300);
    }
    for e in session.events() {
        let Some(m) = e.payload.chat_message() else { continue };
        match &m.author {
            Author::Participant(p) => assert_eq!(plan.room_of(p), Some(m.room)),
            Author::SurrogateAgent(r) | Author::ObserverAgent(r) => assert_eq!(*r, m.room),
        }
    }
}

#[test]
fn log_file_round_trip_replays() {
    let s = Scenario::load(&scenarios_dir().join("propagation.json")).unwrap();
    let out = run_scenario(&s, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.events.jsonl");
    write_events(&path, &out.event_log).unwrap();
    let back = read_events(&path).unwrap();
    assert_eq!(back, out.event_log);
    assert_eq!(SessionState::replay(&back).unwrap(), out.final_state);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().enumerate().all(|(i, l)| l.starts_with(&format!("{{\"seq\":{i},"))));
}

#[test]
fn resumed_session_continues_identically() {
    let s = Scenario::load(&scenarios_dir().join("single_room.json")).unwrap();
    let out = run_scenario(&s, 0).unwrap();
    let cut = out.event_log.iter().position(|e| matches!(e.payload, EventPayload::LabelsApplied { .. })).unwrap() + 1;
    let resumed = Session::from_events(out.event_log[..cut].to_vec()).unwrap();
    assert_eq!(resumed.state(), &SessionState::replay(&out.event_log[..cut]).unwrap());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = SessionConfig { question: "q".into(), duration_s: 120, observer_interval_s: (30, 40), rng_seed: 77, ..Default::default() };
    let text = serde_json::to_string(&cfg).unwrap();
    let back: SessionConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let s = Session::create(back, 0).unwrap();
    assert_eq!(s.config(), &cfg);
}
