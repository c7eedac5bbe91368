//! Post-session survey responses: CSV ingestion and the in-favor binomial test.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::stats::{binomial_test, Tail};
use crate::ids::ParticipantId;

/// The three questions asked after the swarm session.
pub const QUESTIONS: [&str; 3] = ["preferred_structure", "felt_heard", "better_justifications"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurveyAnswer {
    ChatByALot,
    ChatByALittle,
    NoPreference,
    SwarmByALittle,
    SwarmByALot,
}

impl SurveyAnswer {
    pub const ALL: [SurveyAnswer; 5] = [
        SurveyAnswer::ChatByALot,
        SurveyAnswer::ChatByALittle,
        SurveyAnswer::NoPreference,
        SurveyAnswer::SwarmByALittle,
        SurveyAnswer::SwarmByALot,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SurveyAnswer::ChatByALot => "chat_by_a_lot",
            SurveyAnswer::ChatByALittle => "chat_by_a_little",
            SurveyAnswer::NoPreference => "no_preference",
            SurveyAnswer::SwarmByALittle => "swarm_by_a_little",
            SurveyAnswer::SwarmByALot => "swarm_by_a_lot",
        }
    }

    pub fn favors_swarm(self) -> bool {
        matches!(self, SurveyAnswer::SwarmByALittle | SurveyAnswer::SwarmByALot)
    }
}

impl std::str::FromStr for SurveyAnswer {
    type Err = SurveyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SurveyAnswer::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| SurveyError::BadAnswer(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant: ParticipantId,
    pub question: String,
    pub answer: SurveyAnswer,
}

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("unknown answer {0:?}")]
    BadAnswer(String),
    #[error("empty field {0}")]
    EmptyField(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One answer per (participant, question); later submissions overwrite.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SurveySet {
    answers: BTreeMap<(ParticipantId, String), SurveyAnswer>,
}

impl SurveySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, r: SurveyResponse) -> Result<(), SurveyError> {
        if r.participant.as_str().is_empty() {
            return Err(SurveyError::EmptyField("participant"));
        }
        if r.question.is_empty() {
            return Err(SurveyError::EmptyField("question"));
        }
        self.answers.insert((r.participant, r.question), r.answer);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn responses(&self) -> impl Iterator<Item = SurveyResponse> + '_ {
        self.answers.iter().map(|((p, q), a)| SurveyResponse { participant: p.clone(), question: q.clone(), answer: *a })
    }

    pub fn read_csv(reader: impl Read) -> Result<SurveySet, SurveyError> {
        let mut set = SurveySet::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for row in rdr.deserialize::<SurveyResponse>() {
            set.insert(row?)?;
        }
        Ok(set)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<(), SurveyError> {
        let mut w = csv::Writer::from_writer(writer);
        for r in self.responses() {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn summaries(&self) -> Vec<QuestionSummary> {
        let mut by_q: BTreeMap<&str, Vec<SurveyAnswer>> = BTreeMap::new();
        for ((_, q), a) in &self.answers {
            by_q.entry(q.as_str()).or_default().push(*a);
        }
        by_q.into_iter().map(|(q, answers)| QuestionSummary::of(q, &answers)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionSummary {
    pub question: String,
    pub n: u64,
    pub counts: BTreeMap<SurveyAnswer, u64>,
    pub in_favor: u64,
    /// One-sided `P(X >= in_favor)` under a fair coin.
    pub p_value: f64,
}

impl QuestionSummary {
    pub fn of(question: &str, answers: &[SurveyAnswer]) -> QuestionSummary {
        let mut counts: BTreeMap<SurveyAnswer, u64> = SurveyAnswer::ALL.iter().map(|a| (*a, 0)).collect();
        for a in answers {
            *counts.entry(*a).or_default() += 1;
        }
        let n = answers.len() as u64;
        let in_favor = answers.iter().filter(|a| a.favors_swarm()).count() as u64;
        let p_value = binomial_test(in_favor, n, 0.5, Tail::Greater).expect("k <= n");
        QuestionSummary { question: question.to_string(), n, counts, in_favor, p_value }
    }

    pub fn fraction(&self, answer: SurveyAnswer) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.counts.get(&answer).copied().unwrap_or(0) as f64 / self.n as f64
    }
}
