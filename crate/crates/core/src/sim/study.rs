//! Desk-scale stand-in for the two-condition study: the same 48 synthetic
//! participants deliberate once in a single room and once as a swarm.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{SessionConfig, Structure};
use crate::ids::{ParticipantId, SessionId};
use crate::sim::scenario::{Expectations, Scenario, ScriptEntry};

pub const STUDY_POPULATION: usize = 48;

const QUESTION: &str = "Which occupation is most exposed to generative AI over the next five years?";
const ITEMS: [&str; 4] = ["customer support", "copywriting", "paralegal work", "translation"];
const CHATTER: [&str; 8] = [
    "good point",
    "not sure about that one",
    "I keep going back and forth on this",
    "what about the timeline though?",
    "agreed",
    "that seems too optimistic to me",
    "the tooling is already there for some of these",
    "hm",
];

fn body(rng: &mut ChaCha8Rng, leaning: usize) -> String {
    let roll: f64 = rng.gen();
    let item = if rng.gen_bool(0.7) { ITEMS[leaning] } else { ITEMS[rng.gen_range(0..ITEMS.len())] };
    let chatter = CHATTER[rng.gen_range(0..CHATTER.len())];
    if roll < 0.35 {
        chatter.to_string()
    } else if roll < 0.55 {
        format!("what about {item}? PROPOSE({item})")
    } else if roll < 0.85 {
        let s = rng.gen_range(1..=3);
        format!("{chatter}, I'd back {item} SUPPORT({item}, {s})")
    } else {
        let s = rng.gen_range(1..=3);
        format!("{item} is overrated OPPOSE({item}, {s})")
    }
}

fn script(rng: &mut ChaCha8Rng, roster: &[ParticipantId], rates: &[f64], leanings: &[usize], duration_ms: u64) -> Vec<ScriptEntry> {
    let mut out = Vec::new();
    for ((p, rate), leaning) in roster.iter().zip(rates).zip(leanings) {
        let count = (rate * duration_ms as f64 / 60_000.0).round() as usize;
        let mut times: Vec<u64> = (0..count).map(|_| rng.gen_range(1_000..duration_ms)).collect();
        times.sort_unstable();
        times.dedup();
        for at_ms in times {
            out.push(ScriptEntry { at_ms, participant: Some(p.clone()), agent_room: None, body: body(rng, *leaning) });
        }
    }
    out.sort_by(|a, b| a.at_ms.cmp(&b.at_ms).then_with(|| a.participant.cmp(&b.participant)));
    out
}

/// `(single_room, swarm)` scenarios over one shared roster.
pub fn study_pair(seed: u64) -> (Scenario, Scenario) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roster: Vec<ParticipantId> = (1..=STUDY_POPULATION).map(|i| ParticipantId::new(format!("p{i:02}"))).collect();
    // Heavy-tailed baseline activity, messages per minute.
    let base: Vec<f64> = (0..STUDY_POPULATION).map(|_| 0.15 + rng.gen::<f64>().powi(2) * 1.6).collect();
    let mut leanings: Vec<usize> = (0..STUDY_POPULATION).map(|i| i % ITEMS.len()).collect();
    leanings.shuffle(&mut rng);

    let config = |id: &str, structure| SessionConfig {
        session_id: SessionId::new(id),
        question: QUESTION.to_string(),
        structure,
        rng_seed: seed,
        ..SessionConfig::default()
    };
    let chat_cfg = config("study_chat_48", Structure::SingleRoom);
    let swarm_cfg = config("study_swarm_48", Structure::ConversationalSwarm);
    let duration = chat_cfg.duration_ms();

    // Quiet participants gain the most in small rooms.
    let swarm_rates: Vec<f64> = base.iter().map(|r| r * 1.15 + 0.25).collect();
    let chat_script = script(&mut rng, &roster, &base, &leanings, duration);
    let swarm_script = script(&mut rng, &roster, &swarm_rates, &leanings, duration);
    let chat = Scenario { name: "study_chat_48".into(), config: chat_cfg, roster: roster.clone(), script: chat_script, expectations: Expectations::default() };
    let swarm = Scenario { name: "study_swarm_48".into(), config: swarm_cfg, roster, script: swarm_script, expectations: Expectations::default() };
    (chat, swarm)
}
