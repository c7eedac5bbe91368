//! Two-condition comparison report: contribution tables, tests and survey.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::contribution::{contribution_stats, ContributionError, ContributionStats, RateSummary};
use crate::analytics::stats::{format_pct, paired_t_test, relative_change, PairedT};
use crate::analytics::survey::{QuestionSummary, SurveyAnswer, SurveySet};
use crate::session::event::{Event, EventPayload};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{condition} transcript: {source}")]
    Transcript { condition: &'static str, source: ContributionError },
    #[error("{0} transcript has no session_created event")]
    NoConfig(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: &'static str,
    pub chat: RateSummary,
    pub swarm: RateSummary,
    pub relative_change: f64,
    /// Change in contribution ratio, chat relative to swarm.
    pub ratio_change: Option<f64>,
    /// Paired over participants present in both sessions.
    pub paired: Option<PairedT>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub chat: ContributionStats,
    pub swarm: ContributionStats,
    pub metrics: Vec<MetricComparison>,
    pub survey: Option<Vec<QuestionSummary>>,
}

fn window_s(events: &[Event], condition: &'static str) -> Result<f64, ReportError> {
    events
        .iter()
        .find_map(|e| match &e.payload {
            EventPayload::SessionCreated { config } => Some(config.duration_s as f64),
            _ => None,
        })
        .ok_or(ReportError::NoConfig(condition))
}

pub fn report(chat: &[Event], swarm: &[Event], survey: Option<&SurveySet>) -> Result<Report, ReportError> {
    let chat_stats = contribution_stats(chat, window_s(chat, "chat")?)
        .map_err(|source| ReportError::Transcript { condition: "chat", source })?;
    let swarm_stats = contribution_stats(swarm, window_s(swarm, "swarm")?)
        .map_err(|source| ReportError::Transcript { condition: "swarm", source })?;

    let paired_ids: Vec<_> = chat_stats.per_participant.keys().filter(|p| swarm_stats.per_participant.contains_key(*p)).collect();
    let compare = |metric: &'static str, pick: fn(&ContributionStats) -> &RateSummary, rate: fn(&crate::analytics::contribution::ParticipantRates) -> f64| {
        let a: Vec<f64> = paired_ids.iter().map(|p| rate(&chat_stats.per_participant[*p])).collect();
        let b: Vec<f64> = paired_ids.iter().map(|p| rate(&swarm_stats.per_participant[*p])).collect();
        let (c, s) = (pick(&chat_stats).clone(), pick(&swarm_stats).clone());
        MetricComparison {
            metric,
            relative_change: relative_change(c.mean, s.mean),
            ratio_change: c.contribution_ratio.zip(s.contribution_ratio).map(|(rc, rs)| relative_change(rs, rc)),
            paired: paired_t_test(&a, &b).ok(),
            chat: c,
            swarm: s,
        }
    };
    let metrics = vec![
        compare("messages_per_minute", |s| &s.messages_per_minute, |r| r.messages_per_minute),
        compare("characters_per_minute", |s| &s.characters_per_minute, |r| r.characters_per_minute),
    ];
    Ok(Report { chat: chat_stats, swarm: swarm_stats, metrics, survey: survey.map(SurveySet::summaries) })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

impl Report {
    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Deliberation report\n\n");
        let _ = writeln!(md, "Participants: chat {}, swarm {}.\n", self.chat.per_participant.len(), self.swarm.per_participant.len());
        md.push_str("## Contribution per participant\n\n");
        md.push_str("| metric | chat mean | chat var | swarm mean | swarm var | change | t | p | df |\n");
        md.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for m in &self.metrics {
            let (t, p, df) = match &m.paired {
                Some(pt) => (format!("{:.3}", pt.t), format!("{:.3e}", pt.p), pt.df.to_string()),
                None => ("n/a".into(), "n/a".into(), "n/a".into()),
            };
            let _ = writeln!(
                md,
                "| {} | {:.3} | {} | {:.3} | {} | {} | {} | {} | {} |",
                m.metric,
                m.chat.mean,
                opt(m.chat.variance, 3),
                m.swarm.mean,
                opt(m.swarm.variance, 3),
                format_pct(m.relative_change),
                t,
                p,
                df
            );
        }
        md.push_str("\nVariance is the sample variance. t-tests are paired by participant id and two-sided.\n");
        md.push_str("\n## 10th and 90th percentiles\n\n");
        md.push_str("| metric | condition | p10 | p90 | contribution ratio |\n|---|---|---|---|---|\n");
        for m in &self.metrics {
            for (cond, s) in [("chat", &m.chat), ("swarm", &m.swarm)] {
                let _ = writeln!(md, "| {} | {} | {:.3} | {:.3} | {} |", m.metric, cond, s.p10, s.p90, opt(s.contribution_ratio, 2));
            }
            if let Some(rc) = m.ratio_change {
                let _ = writeln!(md, "\nChat contribution ratio vs swarm ({}): {}\n", m.metric, format_pct(rc));
            }
        }
        if let Some(survey) = &self.survey {
            md.push_str("\n## Survey\n\n| question | n | in favor | no preference | opposed | p (one-sided) |\n|---|---|---|---|---|---|\n");
            for q in survey {
                let opposed = q.fraction(SurveyAnswer::ChatByALot) + q.fraction(SurveyAnswer::ChatByALittle);
                let _ = writeln!(
                    md,
                    "| {} | {} | {:.0}% | {:.0}% | {:.0}% | {:.4} |",
                    q.question,
                    q.n,
                    100.0 * q.in_favor as f64 / q.n.max(1) as f64,
                    100.0 * q.fraction(SurveyAnswer::NoPreference),
                    100.0 * opposed,
                    q.p_value
                );
            }
        }
        md
    }

    /// CSV tables keyed by file stem.
    pub fn tables(&self) -> Result<Vec<(&'static str, String)>, ReportError> {
        let mut out = Vec::new();

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["condition", "participant", "messages", "characters", "messages_per_minute", "characters_per_minute"])?;
        for (cond, stats) in [("chat", &self.chat), ("swarm", &self.swarm)] {
            for (p, r) in &stats.per_participant {
                w.write_record([
                    cond.to_string(),
                    p.to_string(),
                    r.messages.to_string(),
                    r.characters.to_string(),
                    format!("{:.6}", r.messages_per_minute),
                    format!("{:.6}", r.characters_per_minute),
                ])?;
            }
        }
        out.push(("participants", into_string(w)?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "chat_mean", "chat_variance", "swarm_mean", "swarm_variance", "relative_change", "t", "p", "df"])?;
        for m in &self.metrics {
            w.write_record([
                m.metric.to_string(),
                format!("{:.6}", m.chat.mean),
                opt(m.chat.variance, 6),
                format!("{:.6}", m.swarm.mean),
                opt(m.swarm.variance, 6),
                format!("{:.6}", m.relative_change),
                opt(m.paired.map(|p| p.t), 6),
                opt(m.paired.map(|p| p.p), 9),
                m.paired.map_or("n/a".into(), |p| p.df.to_string()),
            ])?;
        }
        out.push(("contribution", into_string(w)?));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "condition", "p10", "p90", "contribution_ratio"])?;
        for m in &self.metrics {
            for (cond, s) in [("chat", &m.chat), ("swarm", &m.swarm)] {
                w.write_record([m.metric.to_string(), cond.to_string(), format!("{:.6}", s.p10), format!("{:.6}", s.p90), opt(s.contribution_ratio, 6)])?;
            }
        }
        out.push(("percentiles", into_string(w)?));

        if let Some(survey) = &self.survey {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["question".to_string(), "n".to_string()];
            header.extend(SurveyAnswer::ALL.iter().map(|a| a.as_str().to_string()));
            header.extend(["in_favor".to_string(), "p_value".to_string()]);
            w.write_record(&header)?;
            for q in survey {
                let mut row = vec![q.question.clone(), q.n.to_string()];
                row.extend(SurveyAnswer::ALL.iter().map(|a| q.counts[a].to_string()));
                row.extend([q.in_favor.to_string(), format!("{:.9}", q.p_value)]);
                w.write_record(&row)?;
            }
            out.push(("survey", into_string(w)?));
        }
        Ok(out)
    }

    /// Write `report.md` and `tables/*.csv` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), ReportError> {
        fs::create_dir_all(dir.join("tables"))?;
        fs::write(dir.join("report.md"), self.to_markdown())?;
        for (name, body) in self.tables()? {
            fs::write(dir.join("tables").join(format!("{name}.csv")), body)?;
        }
        Ok(())
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}
