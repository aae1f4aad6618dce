//! The repeat-detection memory game: session schedules, participant logs,
//! round validation, per-sound memorability/confusability scores and their
//! split-half reliability.

mod plan;
mod reliability;
mod scores;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use plan::{plan_session, PlanConfig, Role, SessionPlan, Slot, WorkerHistory};
pub use reliability::{half_rank_correlation, split_rank_reliability, Reliability};
pub use scores::{read_scores_csv, score_sounds, write_scores_csv, SoundScore, SoundScores, LAST_POSITIONS};

/// Strict lower bound on the vigilance hit rate of an accepted round.
pub const MIN_VIGILANCE: f64 = 0.6;
/// Strict upper bound on the false-alarm rate of an accepted round.
pub const MAX_FALSE_POSITIVE: f64 = 0.4;

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("plan infeasible: {0}")]
    PlanInfeasible(String),
    #[error("worker already played {rounds} rounds")]
    WorkerExhausted { rounds: usize },
    #[error("log does not match plan: {0}")]
    LogMismatch(String),
    #[error("cannot split: {0}")]
    NotSplittable(String),
    #[error("scores file: {0}")]
    Scores(String),
}

/// What one participant did during one round.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub worker_id: String,
    pub clicks: BTreeSet<usize>,
    #[serde(default)]
    pub latencies_ms: BTreeMap<usize, u64>,
    pub completed: bool,
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>, worker_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            worker_id: worker_id.into(),
            ..Default::default()
        }
    }

    /// Records a click; returns false if the position was already clicked.
    pub fn click(&mut self, position: usize, latency_ms: Option<u64>) -> bool {
        let fresh = self.clicks.insert(position);
        if fresh {
            if let Some(l) = latency_ms {
                self.latencies_ms.insert(position, l);
            }
        }
        fresh
    }
}

/// A played round: the schedule and the participant's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Game {
    pub plan: SessionPlan,
    pub log: SessionLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub vigilance_score: f64,
    pub false_positive_rate: f64,
    pub accepted: bool,
    /// Clicks on repeated sounds (vigilance and target second presentations).
    pub hits: usize,
    /// Clicks on first presentations.
    pub false_alarms: usize,
}

impl ValidationResult {
    /// Score shown to the participant: hits minus false alarms, floored at 0.
    pub fn display_score(&self) -> i64 {
        (self.hits as i64 - self.false_alarms as i64).max(0)
    }
}

pub fn is_accepted(vigilance_score: f64, false_positive_rate: f64) -> bool {
    vigilance_score > MIN_VIGILANCE && false_positive_rate < MAX_FALSE_POSITIVE
}

pub fn validate_session(plan: &SessionPlan, log: &SessionLog) -> Result<ValidationResult, ExperimentError> {
    if plan.session_id != log.session_id {
        return Err(ExperimentError::LogMismatch(format!(
            "log session {} vs plan {}",
            log.session_id, plan.session_id
        )));
    }
    if let Some(&bad) = log.clicks.iter().find(|&&p| p >= plan.len()) {
        return Err(ExperimentError::LogMismatch(format!(
            "click at position {bad} beyond plan length {}",
            plan.len()
        )));
    }
    let (mut vig_total, mut vig_hit) = (0usize, 0usize);
    let (mut first_total, mut first_clicked) = (0usize, 0usize);
    let mut hits = 0;
    for slot in &plan.slots {
        let clicked = log.clicks.contains(&slot.position);
        if slot.role == Role::VigilanceSecond {
            vig_total += 1;
            vig_hit += clicked as usize;
        }
        if slot.role.is_first_presentation() {
            first_total += 1;
            first_clicked += clicked as usize;
        }
        if slot.role.is_repeat() && clicked {
            hits += 1;
        }
    }
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let vigilance_score = rate(vig_hit, vig_total);
    let false_positive_rate = rate(first_clicked, first_total);
    Ok(ValidationResult {
        vigilance_score,
        false_positive_rate,
        accepted: is_accepted(vigilance_score, false_positive_rate),
        hits,
        false_alarms: first_clicked,
    })
}

/// Games whose round passes validation.
pub fn accepted_games(games: &[Game]) -> Vec<Game> {
    games
        .iter()
        .filter(|g| validate_session(&g.plan, &g.log).map(|v| v.accepted).unwrap_or(false))
        .cloned()
        .collect()
}
