//! Synthetic participants with known per-sound click probabilities, used
//! as ground truth for the scoring, reliability and context pipelines.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::context_score;
use crate::experiment::{plan_session, ExperimentError, Game, PlanConfig, Role, SessionLog, WorkerHistory};

#[derive(Debug, Error, PartialEq)]
pub enum SimulantError {
    #[error("probability {name} = {value} for {sound} is outside [0, 1]")]
    Probability { sound: String, name: &'static str, value: f64 },
    #[error("sound {0} is in the pool but not in the profile")]
    Uncovered(String),
    #[error("context feature has no value for {0}")]
    MissingContextValue(String),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundParams {
    /// Probability of clicking the second presentation of a target.
    pub p_recall: f64,
    /// Probability of clicking any first presentation.
    pub p_confuse: f64,
}

/// Recall shifted through `σ(logit(p) + β·z)`, where `z` is the target's
/// context score on one feature over the `k` sounds before its first
/// presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSensitivity {
    pub feature: String,
    pub beta: f64,
    pub k: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulantProfile {
    pub sounds: BTreeMap<String, SoundParams>,
    pub p_vigilance: f64,
    pub context: Option<ContextSensitivity>,
}

impl SimulantProfile {
    /// Independent uniform draws of `p_recall` and `p_confuse` per sound.
    pub fn planted(pool: &[String], recall: (f64, f64), confuse: (f64, f64), p_vigilance: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sounds = pool
            .iter()
            .map(|id| {
                let p_recall = rng.gen_range(recall.0..=recall.1);
                let p_confuse = rng.gen_range(confuse.0..=confuse.1);
                (id.clone(), SoundParams { p_recall, p_confuse })
            })
            .collect();
        Self {
            sounds,
            p_vigilance,
            context: None,
        }
    }

    /// Attentive clickers whose clicks ignore sound identity: every
    /// vigilance repeat is caught, and any other slot is clicked with the
    /// same probability `p`.
    pub fn null(pool: &[String], p: f64) -> Self {
        Self::constant(pool, p, p, 1.0)
    }

    pub fn constant(pool: &[String], p_recall: f64, p_confuse: f64, p_vigilance: f64) -> Self {
        Self {
            sounds: pool
                .iter()
                .map(|id| (id.clone(), SoundParams { p_recall, p_confuse }))
                .collect(),
            p_vigilance,
            context: None,
        }
    }

    pub fn with_context(mut self, context: ContextSensitivity) -> Self {
        self.context = Some(context);
        self
    }

    pub fn validate(&self) -> Result<(), SimulantError> {
        let check = |sound: &str, name: &'static str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimulantError::Probability {
                    sound: sound.to_string(),
                    name,
                    value,
                })
            }
        };
        check("*", "p_vigilance", self.p_vigilance)?;
        for (id, s) in &self.sounds {
            check(id, "p_recall", s.p_recall)?;
            check(id, "p_confuse", s.p_confuse)?;
        }
        Ok(())
    }
}

/// Sound ids ordered by descending `p_recall − p_confuse`, ties by id.
pub fn planted_truth(profile: &SimulantProfile) -> Vec<String> {
    let mut ranked: Vec<(&String, f64)> = profile
        .sounds
        .iter()
        .map(|(id, s)| (id, s.p_recall - s.p_confuse))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().map(|(id, _)| id.clone()).collect()
}

/// splitmix64 finalizer, used to give every game its own stream.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn logit_shift(p: f64, shift: f64) -> f64 {
    if shift == 0.0 || p <= 0.0 || p >= 1.0 {
        return p;
    }
    let z = (p / (1.0 - p)).ln() + shift;
    1.0 / (1.0 + (-z).exp())
}

fn play(game_plan: &crate::experiment::SessionPlan, worker: &str, profile: &SimulantProfile, rng: &mut ChaCha8Rng) -> Result<SessionLog, SimulantError> {
    let mut log = SessionLog::new(game_plan.session_id.clone(), worker);
    let params = |id: &str| {
        profile
            .sounds
            .get(id)
            .copied()
            .ok_or_else(|| SimulantError::Uncovered(id.to_string()))
    };
    let mut first_at: BTreeMap<&str, usize> = BTreeMap::new();
    for slot in &game_plan.slots {
        let p = match slot.role {
            Role::VigilanceSecond => profile.p_vigilance,
            Role::TargetSecond => {
                let base = params(&slot.sound_id)?.p_recall;
                match (&profile.context, first_at.get(slot.sound_id.as_str())) {
                    (Some(ctx), Some(&first)) if first >= ctx.k => {
                        let value = |id: &str| {
                            ctx.values
                                .get(id)
                                .copied()
                                .ok_or_else(|| SimulantError::MissingContextValue(id.to_string()))
                        };
                        let target = value(&slot.sound_id)?;
                        let around = game_plan.slots[first - ctx.k..first]
                            .iter()
                            .map(|s| value(&s.sound_id))
                            .collect::<Result<Vec<f64>, _>>()?;
                        logit_shift(base, ctx.beta * context_score(target, &around).z)
                    }
                    _ => base,
                }
            }
            _ => {
                if slot.role == Role::TargetFirst {
                    first_at.insert(slot.sound_id.as_str(), slot.position);
                }
                params(&slot.sound_id)?.p_confuse
            }
        };
        if rng.gen_bool(p) {
            log.click(slot.position, None);
        }
    }
    log.completed = true;
    Ok(log)
}

/// Plays `n_games` rounds. Workers rotate, each playing up to the
/// per-worker round cap before a fresh one takes over; workers run in
/// parallel with seeds derived from `seed`, so the output is identical for
/// any thread count.
pub fn simulate_games(
    pool: &[String],
    profile: &SimulantProfile,
    n_games: usize,
    seed: u64,
    cfg: &PlanConfig,
) -> Result<Vec<Game>, SimulantError> {
    profile.validate()?;
    if let Some(missing) = pool.iter().find(|id| !profile.sounds.contains_key(*id)) {
        return Err(SimulantError::Uncovered(missing.clone()));
    }
    let rounds = cfg.max_rounds_per_worker.max(1);
    let n_workers = n_games.div_ceil(rounds);
    let per_worker: Result<Vec<Vec<Game>>, SimulantError> = (0..n_workers)
        .into_par_iter()
        .map(|w| {
            let worker = format!("sim-w{w:05}");
            let mut history = WorkerHistory::default();
            let mut games = Vec::with_capacity(rounds);
            for g in w * rounds..((w + 1) * rounds).min(n_games) {
                let session_id = format!("sim-{seed}-{g:06}");
                let plan = plan_session(pool, &history, &session_id, derive_seed(seed, 2 * g as u64), cfg)?;
                history.record(&plan);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2 * g as u64 + 1));
                let log = play(&plan, &worker, profile, &mut rng)?;
                games.push(Game { plan, log });
            }
            Ok(games)
        })
        .collect();
    Ok(per_worker?.into_iter().flatten().collect())
}

/// Games needed for every sound to be a target about `per_sound` times,
/// given the config's average number of target pairs per round.
pub fn games_for_target_count(n_sounds: usize, per_sound: usize, cfg: &PlanConfig) -> usize {
    let mean_targets = (cfg.min_target_pairs + cfg.max_target_pairs) as f64 / 2.0;
    ((n_sounds * per_sound) as f64 / mean_targets).ceil() as usize
}
