use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{validate_session, ExperimentError, Game, Role};

/// First presentations in this many final slots count towards confusability.
pub const LAST_POSITIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SoundScore {
    pub sound_id: String,
    /// Hit rate on second target presentations.
    pub m: Option<f64>,
    /// False-alarm rate on first presentations in the final slots.
    pub c10: Option<f64>,
    pub normalized: Option<f64>,
    pub n_target_appearances: usize,
    pub n_target_hits: usize,
    pub n_last10_appearances: usize,
    pub n_last10_clicks: usize,
}

impl SoundScore {
    fn finish(&mut self) {
        let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        self.m = rate(self.n_target_hits, self.n_target_appearances);
        self.c10 = rate(self.n_last10_clicks, self.n_last10_appearances);
        self.normalized = match (self.m, self.c10) {
            (Some(m), Some(c)) => Some(m - c),
            _ => None,
        };
    }
}

/// Per-sound scores keyed by sound id.
pub type SoundScores = BTreeMap<String, SoundScore>;

/// Aggregates memorability and confusability over the accepted rounds in
/// `games`; rounds that fail validation are skipped. Scores are exact
/// ratios of integer counts, so the result does not depend on game order.
pub fn score_sounds<'a>(games: impl IntoIterator<Item = &'a Game>) -> SoundScores {
    let mut scores = SoundScores::new();
    for game in games {
        if !validate_session(&game.plan, &game.log).is_ok_and(|v| v.accepted) {
            continue;
        }
        let cutoff = game.plan.len().saturating_sub(LAST_POSITIONS);
        for slot in &game.plan.slots {
            let clicked = game.log.clicks.contains(&slot.position);
            let in_tail = slot.position >= cutoff && slot.role.is_first_presentation();
            if slot.role != Role::TargetSecond && !in_tail {
                continue;
            }
            let entry = scores.entry(slot.sound_id.clone()).or_insert_with(|| SoundScore {
                sound_id: slot.sound_id.clone(),
                ..Default::default()
            });
            if slot.role == Role::TargetSecond {
                entry.n_target_appearances += 1;
                entry.n_target_hits += clicked as usize;
            }
            if in_tail {
                entry.n_last10_appearances += 1;
                entry.n_last10_clicks += clicked as usize;
            }
        }
    }
    scores.values_mut().for_each(SoundScore::finish);
    scores
}

const SCORE_HEADER: [&str; 8] = [
    "sound_id",
    "M",
    "C10",
    "normalized",
    "n_target_appearances",
    "n_target_hits",
    "n_last10_appearances",
    "n_last10_clicks",
];

pub fn write_scores_csv<W: Write>(scores: &SoundScores, writer: W) -> Result<(), ExperimentError> {
    let err = |e: csv::Error| ExperimentError::Scores(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SCORE_HEADER).map_err(err)?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x}"));
    for s in scores.values() {
        w.write_record([
            s.sound_id.clone(),
            fmt(s.m),
            fmt(s.c10),
            fmt(s.normalized),
            s.n_target_appearances.to_string(),
            s.n_target_hits.to_string(),
            s.n_last10_appearances.to_string(),
            s.n_last10_clicks.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| ExperimentError::Scores(e.to_string()))
}

/// Reads a scores CSV back; rates are recomputed from the counts.
pub fn read_scores_csv<R: Read>(reader: R) -> Result<SoundScores, ExperimentError> {
    let err = |e: csv::Error| ExperimentError::Scores(e.to_string());
    let mut r = csv::Reader::from_reader(reader);
    if r.headers().map_err(err)?.iter().ne(SCORE_HEADER) {
        return Err(ExperimentError::Scores("unexpected header".into()));
    }
    let mut out = SoundScores::new();
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        let count = |i: usize| {
            rec.get(i)
                .and_then(|c| c.parse::<usize>().ok())
                .ok_or_else(|| ExperimentError::Scores(format!("bad count in column {}", SCORE_HEADER[i])))
        };
        let mut s = SoundScore {
            sound_id: rec.get(0).unwrap_or("").to_string(),
            n_target_appearances: count(4)?,
            n_target_hits: count(5)?,
            n_last10_appearances: count(6)?,
            n_last10_clicks: count(7)?,
            ..Default::default()
        };
        s.finish();
        out.insert(s.sound_id.clone(), s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{SessionLog, SessionPlan, Slot};

    /// A hand-built 30-slot round: 20 vigilance pairs would not fit, so the
    /// round is made acceptable with 2 vigilance pairs only.
    fn game(id: &str, target: &str, tail_sound: &str, hit: bool, tail_click: bool) -> Game {
        let mut slots: Vec<Slot> = (0..30)
            .map(|p| Slot {
                position: p,
                sound_id: format!("{id}-f{p}"),
                role: Role::Filler,
            })
            .collect();
        let mut set = |p: usize, s: &str, role: Role| slots[p] = Slot { position: p, sound_id: s.into(), role };
        set(0, "v1", Role::VigilanceFirst);
        set(3, "v1", Role::VigilanceSecond);
        set(5, "v2", Role::VigilanceFirst);
        set(9, "v2", Role::VigilanceSecond);
        set(10, target, Role::TargetFirst);
        set(25, target, Role::TargetSecond);
        set(27, tail_sound, Role::Filler);
        let plan = SessionPlan { session_id: id.into(), slots, seed: 0 };
        let mut log = SessionLog::new(id, "w");
        log.click(3, None);
        log.click(9, None);
        if hit {
            log.click(25, None);
        }
        if tail_click {
            log.click(27, None);
        }
        Game { plan, log }
    }

    #[test]
    fn memorability_from_four_appearances() {
        let games: Vec<Game> = [true, true, false, true]
            .iter()
            .enumerate()
            .map(|(i, &hit)| game(&format!("g{i}"), "t", &format!("x{i}"), hit, false))
            .collect();
        let s = score_sounds(&games);
        assert_eq!(s["t"].m, Some(0.75));
        assert_eq!(s["t"].n_target_appearances, 4);
        assert_eq!(s["t"].c10, None);
        assert_eq!(s["t"].normalized, None);
    }

    #[test]
    fn confusability_and_normalized() {
        let mut games: Vec<Game> = (0..5)
            .map(|i| game(&format!("c{i}"), &format!("t{i}"), "z", true, i < 2))
            .collect();
        // "z" also a target 4 times, hit 3 times
        games.extend((0..4).map(|i| game(&format!("m{i}"), "z", &format!("y{i}"), i != 0, false)));
        let s = score_sounds(&games);
        assert_eq!(s["z"].c10, Some(0.4));
        assert_eq!(s["z"].n_last10_appearances, 5);
        assert_eq!(s["z"].m, Some(0.75));
        assert!((s["z"].normalized.unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn rejected_rounds_do_not_count() {
        let mut g = game("r", "t", "x", true, false);
        g.log.clicks.remove(&3);
        g.log.clicks.remove(&9);
        assert!(score_sounds(&[g]).is_empty());
    }

    #[test]
    fn order_invariant_and_csv_round_trip() {
        let games: Vec<Game> = (0..6)
            .map(|i| game(&format!("g{i}"), &format!("t{}", i % 2), "z", i % 3 == 0, i % 2 == 0))
            .collect();
        let a = score_sounds(&games);
        let mut rev = games.clone();
        rev.reverse();
        assert_eq!(a, score_sounds(&rev));
        let mut buf = Vec::new();
        write_scores_csv(&a, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("sound_id,M,C10,normalized,"));
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), a);
    }
}
