//! Append-only JSONL event log and the state machine that replays it.
//! The live service and offline replay share [`Replay::apply`], so every
//! score can be recomputed from the log alone.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{validate_session, Game, SessionLog, SessionPlan, ValidationResult};

/// Nominal spacing of simulated clip starts.
pub const CLIP_MS: i64 = 5_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionStarted { worker_id: String, plan: SessionPlan },
    ClipStarted { position: usize },
    Click { position: usize, latency_ms: Option<u64> },
    SessionFinished { result: ValidationResult },
    SurveySubmitted { answers: serde_json::Value },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::SessionStarted { .. } => "session_started",
            Event::ClipStarted { .. } => "clip_started",
            Event::Click { .. } => "click",
            Event::SessionFinished { .. } => "session_finished",
            Event::SurveySubmitted { .. } => "survey_submitted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    /// UTC milliseconds.
    pub ts: i64,
    pub session_id: String,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("seq {seq} does not follow {previous}")]
    SeqRegression { seq: u64, previous: u64 },
    #[error("seq {seq}: unknown session {session_id}")]
    Orphan { seq: u64, session_id: String },
    #[error("seq {seq}: session {session_id} started twice")]
    DuplicateSession { seq: u64, session_id: String },
    #[error("seq {seq}: {message}")]
    InvalidTransition { seq: u64, message: String },
}

impl ReplayError {
    pub fn seq(&self) -> Option<u64> {
        match self {
            ReplayError::Parse { .. } => None,
            ReplayError::SeqRegression { seq, .. }
            | ReplayError::Orphan { seq, .. }
            | ReplayError::DuplicateSession { seq, .. }
            | ReplayError::InvalidTransition { seq, .. } => Some(*seq),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Finished,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub plan: SessionPlan,
    /// Next position to serve.
    pub cursor: usize,
    pub log: SessionLog,
    pub status: SessionStatus,
    pub result: Option<ValidationResult>,
    pub surveys: Vec<serde_json::Value>,
    pub last_ts: i64,
}

impl SessionState {
    pub fn new(plan: SessionPlan, worker_id: &str, ts: i64) -> Self {
        let log = SessionLog::new(plan.session_id.clone(), worker_id);
        Self {
            plan,
            cursor: 0,
            log,
            status: SessionStatus::Active,
            result: None,
            surveys: Vec::new(),
            last_ts: ts,
        }
    }

    pub fn game(&self) -> Game {
        Game {
            plan: self.plan.clone(),
            log: self.log.clone(),
        }
    }
}

/// Session states rebuilt from a sequence of events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    pub sessions: BTreeMap<String, SessionState>,
    pub last_seq: Option<u64>,
}

impl Replay {
    /// Checks `rec` against the current state and applies it. On error the
    /// state is left untouched.
    pub fn apply(&mut self, rec: &EventRecord) -> Result<(), ReplayError> {
        let seq = rec.seq;
        if let Some(previous) = self.last_seq {
            if seq <= previous {
                return Err(ReplayError::SeqRegression { seq, previous });
            }
        }
        let invalid = |message: String| ReplayError::InvalidTransition { seq, message };
        if let Event::SessionStarted { worker_id, plan } = &rec.event {
            if self.sessions.contains_key(&rec.session_id) {
                return Err(ReplayError::DuplicateSession {
                    seq,
                    session_id: rec.session_id.clone(),
                });
            }
            if plan.session_id != rec.session_id {
                return Err(invalid(format!("plan belongs to session {}", plan.session_id)));
            }
            self.sessions
                .insert(rec.session_id.clone(), SessionState::new(plan.clone(), worker_id, rec.ts));
            self.last_seq = Some(seq);
            return Ok(());
        }
        let state = self.sessions.get_mut(&rec.session_id).ok_or_else(|| ReplayError::Orphan {
            seq,
            session_id: rec.session_id.clone(),
        })?;
        let finished = state.status == SessionStatus::Finished;
        match &rec.event {
            Event::SessionStarted { .. } => unreachable!(),
            Event::ClipStarted { position } => {
                if finished {
                    return Err(invalid("clip after finish".into()));
                }
                if *position != state.cursor {
                    return Err(invalid(format!("clip {position} served with cursor at {}", state.cursor)));
                }
                if *position >= state.plan.len() {
                    return Err(invalid(format!("clip {position} beyond the plan")));
                }
                state.cursor += 1;
            }
            Event::Click { position, latency_ms } => {
                if finished {
                    return Err(invalid("click after finish".into()));
                }
                if *position >= state.cursor {
                    return Err(invalid(format!("click on unserved position {position}")));
                }
                state.log.click(*position, *latency_ms);
            }
            Event::SessionFinished { result } => {
                if finished {
                    return Err(invalid("session finished twice".into()));
                }
                if state.cursor < state.plan.len() {
                    return Err(invalid(format!("{} slot(s) unserved", state.plan.len() - state.cursor)));
                }
                let mut log = state.log.clone();
                log.completed = true;
                let recomputed = validate_session(&state.plan, &log).map_err(|e| invalid(e.to_string()))?;
                if &recomputed != result {
                    return Err(invalid("logged result differs from the recomputed one".into()));
                }
                state.log = log;
                state.result = Some(recomputed);
                state.status = SessionStatus::Finished;
            }
            Event::SurveySubmitted { answers } => state.surveys.push(answers.clone()),
        }
        state.last_ts = state.last_ts.max(rec.ts);
        self.last_seq = Some(seq);
        Ok(())
    }

    /// Active sessions idle for longer than `idle_ms` become abandoned.
    pub fn mark_abandoned(&mut self, now_ms: i64, idle_ms: i64) {
        for s in self.sessions.values_mut() {
            if s.status == SessionStatus::Active && now_ms - s.last_ts > idle_ms {
                s.status = SessionStatus::Abandoned;
            }
        }
    }

    /// Finished sessions as scoreable games, ordered by session id.
    pub fn finished_games(&self) -> Vec<Game> {
        self.sessions
            .values()
            .filter(|s| s.status == SessionStatus::Finished)
            .map(SessionState::game)
            .collect()
    }
}

pub fn replay_events<'a>(events: impl IntoIterator<Item = &'a EventRecord>) -> Result<Replay, ReplayError> {
    let mut replay = Replay::default();
    for rec in events {
        replay.apply(rec)?;
    }
    Ok(replay)
}

/// Parses a JSONL log. A final line without its newline is treated as a
/// write cut short and dropped.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<EventRecord>, ReplayError> {
    let mut out = Vec::new();
    let mut lines = reader.split(b'\n').enumerate().peekable();
    let buf_err = |line: usize, e: std::io::Error| ReplayError::Parse {
        line,
        message: e.to_string(),
    };
    while let Some((i, chunk)) = lines.next() {
        let bytes = chunk.map_err(|e| buf_err(i + 1, e))?;
        let text = String::from_utf8_lossy(&bytes);
        if text.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&text) {
            Ok(rec) => out.push(rec),
            Err(_) if lines.peek().is_none() => {
                log::warn!("ignoring truncated final event line {}", i + 1);
            }
            Err(e) => {
                return Err(ReplayError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Serializes events one per line and hands out sequence numbers.
pub struct EventWriter<W: Write> {
    out: W,
    next_seq: u64,
}

impl<W: Write> EventWriter<W> {
    pub fn new(out: W, next_seq: u64) -> Self {
        Self { out, next_seq }
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn record(&self, ts: i64, session_id: &str, event: Event) -> EventRecord {
        EventRecord {
            seq: self.next_seq,
            ts,
            session_id: session_id.to_string(),
            event,
        }
    }

    /// Writes `rec`, which must carry the next sequence number, and flushes.
    pub fn append(&mut self, rec: &EventRecord) -> std::io::Result<()> {
        assert_eq!(rec.seq, self.next_seq, "events must be appended in sequence");
        let mut line = serde_json::to_vec(rec).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.out.write_all(&line)?;
        self.out.flush()?;
        self.next_seq += 1;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// The event stream a live session would have produced for each game:
/// every clip served in order, clicks right after their clip, then finish.
pub fn games_to_events(games: &[Game], start_ts: i64) -> Vec<EventRecord> {
    let mut out = Vec::new();
    let mut seq = 0;
    let mut push = |ts: i64, session_id: &str, event: Event| {
        out.push(EventRecord {
            seq,
            ts,
            session_id: session_id.to_string(),
            event,
        });
        seq += 1;
    };
    for (g, game) in games.iter().enumerate() {
        let id = game.plan.session_id.as_str();
        let t0 = start_ts + g as i64 * (game.plan.len() as i64 + 1) * CLIP_MS;
        push(
            t0,
            id,
            Event::SessionStarted {
                worker_id: game.log.worker_id.clone(),
                plan: game.plan.clone(),
            },
        );
        for position in 0..game.plan.len() {
            let ts = t0 + position as i64 * CLIP_MS;
            push(ts, id, Event::ClipStarted { position });
            if game.log.clicks.contains(&position) {
                let latency_ms = game.log.latencies_ms.get(&position).copied();
                push(ts + latency_ms.unwrap_or(0) as i64, id, Event::Click { position, latency_ms });
            }
        }
        let mut log = game.log.clone();
        log.completed = true;
        if let Ok(result) = validate_session(&game.plan, &log) {
            push(t0 + game.plan.len() as i64 * CLIP_MS, id, Event::SessionFinished { result });
        }
    }
    out
}

pub fn write_events<W: Write>(events: &[EventRecord], out: W) -> std::io::Result<()> {
    let first = events.first().map_or(0, |e| e.seq);
    let mut w = EventWriter::new(std::io::BufWriter::new(out), first);
    for e in events {
        w.append(e)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{plan_session, PlanConfig, Role, WorkerHistory};

    fn game() -> Game {
        let pool: Vec<String> = (0..80).map(|i| format!("s{i}")).collect();
        let plan = plan_session(&pool, &WorkerHistory::default(), "g1", 4, &PlanConfig::default()).unwrap();
        let mut log = SessionLog::new("g1", "w1");
        for p in plan.positions_with(Role::VigilanceSecond) {
            log.click(p, Some(700));
        }
        log.click(1, None);
        Game { plan, log }
    }

    #[test]
    fn record_json_shape() {
        let rec = EventRecord {
            seq: 3,
            ts: 10,
            session_id: "a".into(),
            event: Event::Click {
                position: 4,
                latency_ms: Some(250),
            },
        };
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"seq": 3, "ts": 10, "session_id": "a", "kind": "click", "payload": {"position": 4, "latency_ms": 250}})
        );
        assert_eq!(serde_json::from_value::<EventRecord>(v).unwrap(), rec);
    }

    #[test]
    fn complete_session_replays_to_live_result() {
        let g = game();
        let events = games_to_events(std::slice::from_ref(&g), 0);
        let replay = replay_events(&events).unwrap();
        let state = &replay.sessions["g1"];
        assert_eq!(state.status, SessionStatus::Finished);
        let mut log = g.log.clone();
        log.completed = true;
        assert_eq!(state.result, Some(validate_session(&g.plan, &log).unwrap()));
        assert_eq!(state.log, log);
    }

    #[test]
    fn truncated_log_leaves_session_active() {
        let events = games_to_events(&[game()], 0);
        let replay = replay_events(&events[..10]).unwrap();
        let state = &replay.sessions["g1"];
        assert_eq!(state.status, SessionStatus::Active);
        assert!(state.cursor < state.plan.len());

        let mut bytes = Vec::new();
        write_events(&events[..10], &mut bytes).unwrap();
        let cut = bytes.len() - 5;
        assert_eq!(read_events(&bytes[..cut]).unwrap().len(), 9);
    }

    #[test]
    fn tampered_order_names_the_seq() {
        let mut events = games_to_events(&[game()], 0);
        events[4].seq = 5;
        events[5].seq = 4;
        let err = replay_events(&events).unwrap_err();
        assert_eq!(err.seq(), Some(4));
    }

    #[test]
    fn orphan_and_premature_finish_rejected() {
        let events = games_to_events(&[game()], 0);
        let mut orphan = events[1].clone();
        orphan.session_id = "nobody".into();
        assert!(matches!(replay_events([&events[0], &orphan]), Err(ReplayError::Orphan { seq: 1, .. })));

        let mut finish = events.last().unwrap().clone();
        finish.seq = 2;
        assert!(matches!(
            replay_events([&events[0], &events[1], &finish]),
            Err(ReplayError::InvalidTransition { seq: 2, .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_and_abandonment() {
        let events = games_to_events(&[game()], 1_000);
        let mut bytes = Vec::new();
        write_events(&events, &mut bytes).unwrap();
        assert_eq!(read_events(bytes.as_slice()).unwrap(), events);
        let mut replay = replay_events(&events[..3]).unwrap();
        replay.mark_abandoned(1_000_000, 60_000);
        assert_eq!(replay.sessions["g1"].status, SessionStatus::Abandoned);
    }

    #[test]
    fn simulated_log_survives_text_round_trip() {
        use crate::simulant::{simulate_games, SimulantProfile};
        // Rates like 13/47 only survive JSON when floats are parsed exactly.
        let pool: Vec<String> = (0..90).map(|i| format!("s{i:02}")).collect();
        let profile = SimulantProfile::planted(&pool, (0.2, 0.9), (0.0, 0.4), 0.9, 4);
        let games = simulate_games(&pool, &profile, 120, 4, &PlanConfig::default()).unwrap();
        let mut bytes = Vec::new();
        write_events(&games_to_events(&games, 0), &mut bytes).unwrap();
        let replay = replay_events(&read_events(bytes.as_slice()).unwrap()).unwrap();
        assert_eq!(replay.finished_games().len(), 120);
    }
}
