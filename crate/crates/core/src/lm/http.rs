//! Chat-completion backend over HTTP.
//!
//! Requests are `{model, messages: [{role, content}], temperature}`. The reply
//! may be an OpenAI-style completion or raw text; either way one JSON object
//! is extracted (from a fenced block if present) and validated.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::catalog::SuggestionCatalog;
use crate::config::SurrogateMode;
use crate::ids::{MessageId, ParticipantId};
use crate::lm::prompts::{render, PromptSet};
use crate::lm::{
    DialogBlock, Evidence, LanguageModel, LmError, ObserverReport, PreferenceLabel, StanceEntry, StanceKind, Strength,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub temperature: f64,
}

impl HttpConfig {
    /// Reads `LM_ENDPOINT`, `LM_API_KEY`, `LM_MODEL` and optional `LM_TIMEOUT_S`.
    /// Returns `None` when no endpoint is configured.
    pub fn from_env() -> Option<HttpConfig> {
        let endpoint = std::env::var("LM_ENDPOINT").ok().filter(|s| !s.is_empty())?;
        let timeout = std::env::var("LM_TIMEOUT_S")
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .map_or(DEFAULT_TIMEOUT, Duration::from_secs);
        Some(HttpConfig {
            endpoint,
            api_key: std::env::var("LM_API_KEY").ok().filter(|s| !s.is_empty()),
            model: std::env::var("LM_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".to_string()),
            timeout,
            temperature: 0.0,
        })
    }
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChatMessage {
    role: String,
    content: String,
}

pub struct HttpBackend {
    config: HttpConfig,
    prompts: PromptSet,
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig, prompts: PromptSet) -> Self {
        HttpBackend { config, prompts, client: OnceLock::new() }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(self.config.timeout)
                .build()
                .expect("http client builds with static settings")
        })
    }

    fn complete(&self, prompt: String) -> Result<String, LmError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage { role: "system".into(), content: "You assist a group deliberation platform. Reply with JSON only.".into() },
                ChatMessage { role: "user".into(), content: prompt },
            ],
            temperature: self.config.temperature,
        };
        let mut req = self.client().post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LmError::Status(status.as_u16()));
        }
        let text = resp.text().map_err(classify)?;
        Ok(completion_text(&text))
    }
}

fn classify(err: reqwest::Error) -> LmError {
    if err.is_timeout() {
        LmError::Timeout
    } else {
        LmError::Transport(err.to_string())
    }
}

/// Pull the assistant content out of an OpenAI-style completion; any other
/// body is returned unchanged.
fn completion_text(body: &str) -> String {
    #[derive(Deserialize)]
    struct Completion {
        choices: Vec<Choice>,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: ChatMessage,
    }
    match serde_json::from_str::<Completion>(body) {
        Ok(c) if !c.choices.is_empty() => c.choices.into_iter().next().map(|c| c.message.content).unwrap_or_default(),
        _ => body.to_string(),
    }
}

/// The first JSON object in `text`: a fenced ```json block wins, otherwise
/// the first balanced `{...}`.
pub fn extract_json_object(text: &str) -> Option<&str> {
    if let Some(start) = text.find("```") {
        let after = &text[start + 3..];
        let after = after.strip_prefix("json").unwrap_or(after);
        if let Some(end) = after.find("```") {
            if let Some(obj) = balanced_object(&after[..end]) {
                return Some(obj);
            }
        }
    }
    balanced_object(text)
}

fn balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_object<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, LmError> {
    let obj = extract_json_object(text).ok_or_else(|| LmError::Malformed("no JSON object in reply".into()))?;
    serde_json::from_str(obj).map_err(|e| LmError::Malformed(e.to_string()))
}

#[derive(Debug, Deserialize)]
pub(crate) struct DistillReply {
    #[serde(default)]
    entries: Vec<RawEntry>,
    #[serde(default)]
    summary: String,
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    item: String,
    kind: String,
    conviction: i64,
    #[serde(default)]
    evidence: Vec<u64>,
}

#[derive(Debug, Deserialize)]
pub(crate) struct LabelReply {
    #[serde(default)]
    labels: Vec<RawLabel>,
}

#[derive(Debug, Deserialize)]
struct RawLabel {
    participant: String,
    item: String,
    strength: i64,
    #[serde(default)]
    evidence: Vec<u64>,
}

#[derive(Debug, Deserialize)]
struct PhraseReply {
    text: String,
}

pub(crate) fn report_from_reply(reply: DistillReply, block: &DialogBlock, catalog: &SuggestionCatalog) -> ObserverReport {
    let entries = reply
        .entries
        .into_iter()
        .filter_map(|raw| {
            let kind = match raw.kind.trim().to_ascii_lowercase().as_str() {
                "proposed" => StanceKind::Proposed,
                "supported" => StanceKind::Supported,
                "opposed" => StanceKind::Opposed,
                other => {
                    tracing::warn!(kind = other, "dropping entry with unknown stance kind");
                    return None;
                }
            };
            if !(-3..=3).contains(&raw.conviction) || raw.conviction == 0 || !kind.sign_ok(raw.conviction as i8) {
                tracing::warn!(item = %raw.item, conviction = raw.conviction, "dropping out-of-range stance entry");
                return None;
            }
            Some(StanceEntry {
                item: catalog.reference(&raw.item),
                kind,
                conviction: raw.conviction as i8,
                evidence: raw.evidence.into_iter().filter_map(|id| block.evidence(MessageId(id))).collect(),
            })
        })
        .collect();
    ObserverReport { room: block.room, cycle_index: block.cycle_index, entries, summary_text: reply.summary, degraded: false }
}

pub(crate) fn labels_from_reply(reply: LabelReply, block: &DialogBlock, catalog: &SuggestionCatalog) -> Vec<PreferenceLabel> {
    reply
        .labels
        .into_iter()
        .filter_map(|raw| {
            let Some(strength) = Strength::new(raw.strength) else {
                tracing::warn!(participant = %raw.participant, strength = raw.strength, "dropping out-of-range label");
                return None;
            };
            let participant = ParticipantId::new(raw.participant.trim());
            let evidence: Vec<Evidence> = raw.evidence.into_iter().filter_map(|id| block.evidence(MessageId(id))).collect();
            Some(PreferenceLabel {
                participant,
                item: catalog.reference(&raw.item),
                strength,
                at_ms: evidence.iter().map(|e| e.at_ms).max().unwrap_or(0),
                evidence,
            })
        })
        .collect()
}

fn relay_listing(report: &ObserverReport) -> String {
    report
        .entries
        .iter()
        .map(|e| format!("- {} ({:?}, conviction {:+})", e.item.label(), e.kind, e.conviction))
        .collect::<Vec<_>>()
        .join("\n")
}

impl LanguageModel for HttpBackend {
    fn distill(&self, block: &DialogBlock, catalog: &SuggestionCatalog, question: &str) -> Result<ObserverReport, LmError> {
        let vars = BTreeMap::from([
            ("question", question.to_string()),
            ("catalog", catalog.prompt_listing()),
            ("dialog", block.transcript()),
        ]);
        let reply: DistillReply = parse_object(&self.complete(render(&self.prompts.distill, &vars))?)?;
        Ok(report_from_reply(reply, block, catalog))
    }

    fn label(
        &self,
        block: &DialogBlock,
        catalog: &SuggestionCatalog,
        roster: &BTreeSet<ParticipantId>,
        question: &str,
    ) -> Result<Vec<PreferenceLabel>, LmError> {
        let vars = BTreeMap::from([
            ("question", question.to_string()),
            ("catalog", catalog.prompt_listing()),
            ("dialog", block.transcript()),
            ("roster", roster.iter().map(|p| p.as_str()).collect::<Vec<_>>().join(", ")),
        ]);
        let reply: LabelReply = parse_object(&self.complete(render(&self.prompts.label, &vars))?)?;
        Ok(labels_from_reply(reply, block, catalog))
    }

    fn phrase(&self, report: &ObserverReport, mode: SurrogateMode, source_room_name: &str) -> Result<String, LmError> {
        let instruction = match mode {
            SurrogateMode::Overt => format!("Relay them to your group, saying openly that you have been observing {source_room_name}."),
            SurrogateMode::Natural => "Express them in the first person as your own view, without mentioning the other group.".to_string(),
        };
        let vars = BTreeMap::from([
            ("source_room", source_room_name.to_string()),
            ("mode_instruction", instruction),
            ("dialog", relay_listing(report)),
        ]);
        let reply: PhraseReply = parse_object(&self.complete(render(&self.prompts.phrase, &vars))?)?;
        Ok(reply.text)
    }
}
