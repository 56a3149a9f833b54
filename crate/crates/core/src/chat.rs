//! Coaching chat grounded in the session's analyses and earlier messages.
//!
//! The context is packed deterministically into a character budget:
//! preamble, the latest report in full, template summaries of older
//! reports (newest first), then as many of the newest messages as fit.
//! Messages are never split.

use chrono::Utc;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;

use crate::coach::AnalysisReport;
use crate::providers::request::{ChatRequest, ChatTurn};
use crate::providers::{ProviderChain, ProviderError, ProviderRequest};
use crate::store::{ChatMessage, Role, Stage, Store, StoreError};

pub const DEFAULT_BUDGET_CHARS: usize = 24_000;
const SEPARATOR: &str = "\n\n";

pub const PREAMBLE: &str = "You are a presentation coach helping a speaker rehearse. \
Ground every answer in the analyses below and in the conversation so far. \
Lead with sincere encouragement, then structure advice as Observation (what you noticed), \
Impact (why it matters to the audience) and Suggestion (one concrete next step). \
Keep answers short and specific to this speaker's recordings.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncludedReport {
    pub report_id: String,
    pub verbatim: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatContext {
    pub system_preamble: String,
    /// Most recent first.
    pub included_reports: Vec<IncludedReport>,
    /// Chronological.
    pub included_messages: Vec<ChatMessage>,
    pub budget_chars: usize,
}

fn chars(s: &str) -> usize {
    s.chars().count()
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

fn message_block(m: &ChatMessage) -> String {
    let who = match m.role {
        Role::User => "User",
        Role::Coach => "Coach",
    };
    format!("{who}: {}", m.content)
}

/// Full text of a report as given to the coach.
pub fn render_report(r: &AnalysisReport) -> String {
    let mut out = format!(
        "Latest analysis ({}):\n",
        r.created_at.format("%Y-%m-%d %H:%M UTC")
    );
    let range = r.inputs.slide_range();
    out.push_str(&format!("Slides {}-{}\n", range.from_index, range.to_index));
    if let Some(m) = &r.metrics {
        out.push_str(&format!("Metrics: {}\n", m.summary_line()));
    }
    if let Some(f) = &r.feedback {
        out.push_str(&format!(
            "Encouragement: {}\nObservation: {}\nImpact: {}\nSuggestion: {}\n",
            f.encouragement(),
            f.observation(),
            f.impact(),
            f.suggestion()
        ));
    }
    for n in &r.audience_notes {
        out.push_str(&format!(
            "Audience ({}): engagement {:?}, comprehension {:?}. {}",
            n.audience_profile, n.engagement, n.comprehension, n.reaction_summary
        ));
        if !n.confusion_points.is_empty() {
            out.push_str(&format!(" Confused by: {}.", n.confusion_points.join("; ")));
        }
        out.push('\n');
    }
    if let Some(raw) = &r.raw_analysis {
        out.push_str(&format!("Detailed analysis: {raw}\n"));
    }
    if let Some(f) = &r.failure {
        out.push_str(&format!(
            "Analysis incomplete at {}: {}\n",
            f.stage, f.message
        ));
    }
    out.trim_end().to_string()
}

/// Metrics and suggestion only.
pub fn summarize_report(r: &AnalysisReport) -> String {
    let mut out = format!(
        "Earlier analysis ({}):",
        r.created_at.format("%Y-%m-%d %H:%M UTC")
    );
    if let Some(m) = &r.metrics {
        out.push_str(&format!(" {}.", m.summary_line()));
    }
    match &r.feedback {
        Some(f) => out.push_str(&format!(" Suggestion: {}", f.suggestion())),
        None => out.push_str(" No feedback was produced."),
    }
    out
}

impl ChatContext {
    fn blocks(&self) -> Vec<String> {
        let mut b = vec![self.system_preamble.clone()];
        b.extend(self.included_reports.iter().map(|r| r.text.clone()));
        b.extend(self.included_messages.iter().map(message_block));
        b
    }

    pub fn render(&self) -> String {
        self.blocks().join(SEPARATOR)
    }

    pub fn char_len(&self) -> usize {
        chars(&self.render())
    }

    /// System text carries the preamble and reports; earlier messages
    /// become turns, followed by `user_text`.
    pub fn to_request(&self, user_text: &str) -> ChatRequest {
        let mut system = vec![self.system_preamble.clone()];
        system.extend(self.included_reports.iter().map(|r| r.text.clone()));
        let mut messages: Vec<ChatTurn> = self
            .included_messages
            .iter()
            .map(|m| ChatTurn {
                role: match m.role {
                    Role::User => "user".into(),
                    Role::Coach => "assistant".into(),
                },
                content: m.content.clone(),
            })
            .collect();
        messages.push(ChatTurn {
            role: "user".into(),
            content: user_text.into(),
        });
        ChatRequest {
            system: system.join(SEPARATOR),
            messages,
        }
    }
}

/// `reports` are chronological; `history` is the stored chat so far.
pub fn build_chat_context(
    history: &[ChatMessage],
    reports: &[AnalysisReport],
    budget_chars: usize,
) -> ChatContext {
    let mut used = 0usize;
    let fits = |block_len: usize, used: &mut usize| -> bool {
        let cost = block_len + if *used == 0 { 0 } else { chars(SEPARATOR) };
        if *used + cost <= budget_chars {
            *used += cost;
            true
        } else {
            false
        }
    };

    let preamble = truncate_chars(PREAMBLE, budget_chars);
    fits(chars(&preamble), &mut used);

    let mut included_reports = Vec::new();
    let mut newest_first = reports.iter().rev();
    if let Some(latest) = newest_first.next() {
        let mut text = render_report(latest);
        let room = budget_chars.saturating_sub(used + chars(SEPARATOR));
        if chars(&text) > room {
            text = truncate_chars(&text, room);
        }
        if !text.is_empty() && fits(chars(&text), &mut used) {
            included_reports.push(IncludedReport {
                report_id: latest.id.clone(),
                verbatim: true,
                text,
            });
        }
    }
    for r in newest_first {
        let text = summarize_report(r);
        if !fits(chars(&text), &mut used) {
            break;
        }
        included_reports.push(IncludedReport {
            report_id: r.id.clone(),
            verbatim: false,
            text,
        });
    }

    let mut included_messages = Vec::new();
    for m in history.iter().rev() {
        if !fits(chars(&message_block(m)), &mut used) {
            break;
        }
        included_messages.push(m.clone());
    }
    included_messages.reverse();

    ChatContext {
        system_preamble: preamble,
        included_reports,
        included_messages,
        budget_chars,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("message is empty")]
    Empty,
    #[error("chat is available in the coaching stage; session is in {0}")]
    WrongStage(Stage),
    #[error("a coach reply is already pending for this session")]
    Busy,
    #[error("coach reply failed: {source}")]
    Delivery {
        /// The stored user message, marked as undelivered.
        message: ChatMessage,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One pending reply per session.
#[derive(Clone, Default)]
pub struct ChatGate {
    pending: Arc<Mutex<HashSet<String>>>,
}

pub struct ChatPermit {
    gate: ChatGate,
    session_id: String,
}

impl Drop for ChatPermit {
    fn drop(&mut self) {
        self.gate.pending.lock().remove(&self.session_id);
    }
}

impl ChatGate {
    pub fn try_acquire(&self, session_id: &str) -> Option<ChatPermit> {
        self.pending
            .lock()
            .insert(session_id.to_string())
            .then(|| ChatPermit {
                gate: self.clone(),
                session_id: session_id.to_string(),
            })
    }
}

pub fn load_reports(store: &Store, session_id: &str) -> Result<Vec<AnalysisReport>, StoreError> {
    let session = store.load_session(session_id)?;
    session
        .analysis_refs
        .iter()
        .map(|a| store.blobs().get_json(&a.record))
        .collect()
}

/// Sends `user_text` to the coach. On success both messages are appended
/// in one write; on provider failure only the user message is stored,
/// marked undelivered.
pub async fn send_message(
    store: &Store,
    chain: &ProviderChain,
    gate: &ChatGate,
    session_id: &str,
    user_text: &str,
    budget_chars: usize,
) -> Result<ChatMessage, ChatError> {
    let text = user_text.trim();
    if text.is_empty() {
        return Err(ChatError::Empty);
    }
    let session = store.load_session(session_id)?;
    if session.stage != Stage::Coaching {
        return Err(ChatError::WrongStage(session.stage));
    }
    let _permit = gate.try_acquire(session_id).ok_or(ChatError::Busy)?;
    let reports = load_reports(store, session_id)?;
    let ctx = build_chat_context(&session.chat_history, &reports, budget_chars);
    let sent_at = Utc::now();
    let request = ProviderRequest::Chat(ctx.to_request(text));
    match chain.invoke(&request).await {
        Ok(outcome) => {
            let reply = outcome.payload.into_text().unwrap_or_default();
            let reply = reply.trim();
            if reply.is_empty() {
                let mut failed = ChatMessage::user(text, sent_at);
                failed.delivery_failed = true;
                store.append_chat(session_id, vec![failed.clone()])?;
                return Err(ChatError::Delivery {
                    message: failed,
                    source: ProviderError::UnexpectedPayload {
                        capability: chain.capability(),
                        expected: "text",
                        got: "empty text",
                    },
                });
            }
            let mut coach = ChatMessage::coach(reply, Utc::now());
            // The reply is linked to the newest report it was given.
            coach.linked_analysis = ctx.included_reports.first().map(|r| r.report_id.clone());
            let saved =
                store.append_chat(session_id, vec![ChatMessage::user(text, sent_at), coach])?;
            Ok(saved.chat_history.last().cloned().expect("just appended"))
        }
        Err(source) => {
            let mut failed = ChatMessage::user(text, sent_at);
            failed.delivery_failed = true;
            let saved = store.append_chat(session_id, vec![failed])?;
            Err(ChatError::Delivery {
                message: saved.chat_history.last().cloned().expect("just appended"),
                source,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn msg(i: usize, len: usize) -> ChatMessage {
        let ts = Utc.timestamp_opt(1_700_000_000 + i as i64, 0).unwrap();
        let content = format!("{i}:{}", "x".repeat(len));
        if i % 2 == 0 {
            ChatMessage::user(content, ts)
        } else {
            ChatMessage::coach(content, ts)
        }
    }

    #[test]
    fn empty_history_is_preamble_only() {
        let c = build_chat_context(&[], &[], DEFAULT_BUDGET_CHARS);
        assert_eq!(c.render(), PREAMBLE);
        assert!(c.included_reports.is_empty() && c.included_messages.is_empty());
    }

    #[test]
    fn newest_messages_win_and_are_chronological() {
        let history: Vec<_> = (0..200).map(|i| msg(i, 100)).collect();
        let c = build_chat_context(&history, &[], 2000);
        assert!(c.char_len() <= 2000);
        let first = c.included_messages.first().unwrap().content.clone();
        let last = c.included_messages.last().unwrap().content.clone();
        assert!(last.starts_with("199:"));
        assert!(c
            .included_messages
            .windows(2)
            .all(|w| w[0].timestamp <= w[1].timestamp));
        // the next older message would not have fitted
        let k = history.iter().position(|m| m.content == first).unwrap();
        let extra = chars(&message_block(&history[k - 1])) + 2;
        assert!(c.char_len() + extra > 2000);
    }

    #[test]
    fn tiny_budget_never_overflows() {
        for budget in [0, 1, 10, 100, PREAMBLE.len() + 5] {
            let history: Vec<_> = (0..5).map(|i| msg(i, 3)).collect();
            assert!(build_chat_context(&history, &[], budget).char_len() <= budget);
        }
    }

    #[test]
    fn gate_allows_one_pending_reply() {
        let g = ChatGate::default();
        let p = g.try_acquire("s").unwrap();
        assert!(g.try_acquire("s").is_none());
        assert!(g.try_acquire("t").is_some());
        drop(p);
        assert!(g.try_acquire("s").is_some());
    }
}
