use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    TargetFirst,
    TargetSecond,
    VigilanceFirst,
    VigilanceSecond,
    Filler,
}

impl Role {
    /// Slots where a click is a false alarm.
    pub fn is_first_presentation(self) -> bool {
        matches!(self, Role::TargetFirst | Role::VigilanceFirst | Role::Filler)
    }

    pub fn is_repeat(self) -> bool {
        matches!(self, Role::TargetSecond | Role::VigilanceSecond)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub position: usize,
    pub sound_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub session_id: String,
    pub slots: Vec<Slot>,
    pub seed: u64,
}

impl SessionPlan {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn positions_with(&self, role: Role) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .filter(move |s| s.role == role)
            .map(|s| s.position)
    }

    pub fn target_ids(&self) -> Vec<&str> {
        self.slots
            .iter()
            .filter(|s| s.role == Role::TargetFirst)
            .map(|s| s.sound_id.as_str())
            .collect()
    }

    /// `(first, second)` positions of each target pair, in order of first
    /// presentation.
    pub fn target_pairs(&self) -> Vec<(usize, usize)> {
        self.slots
            .iter()
            .filter(|s| s.role == Role::TargetFirst)
            .filter_map(|first| {
                self.slots
                    .iter()
                    .find(|s| s.role == Role::TargetSecond && s.sound_id == first.sound_id)
                    .map(|second| (first.position, second.position))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Inclusive bounds on the number of slots.
    pub min_length: usize,
    pub max_length: usize,
    /// Inclusive bounds on the number of target pairs.
    pub min_target_pairs: usize,
    pub max_target_pairs: usize,
    pub vigilance_pairs: usize,
    /// Position delta between the two presentations of a target.
    pub target_delta: usize,
    /// Allowed position deltas for vigilance repeats.
    pub vigilance_deltas: Vec<usize>,
    pub max_rounds_per_worker: usize,
    pub min_pool: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            min_length: 68,
            max_length: 72,
            min_target_pairs: 1,
            max_target_pairs: 2,
            vigilance_pairs: 20,
            target_delta: 61,
            vigilance_deltas: vec![3, 4],
            max_rounds_per_worker: 8,
            min_pool: 70,
        }
    }
}

impl PlanConfig {
    pub fn with_length(mut self, length: usize) -> Self {
        self.min_length = length;
        self.max_length = length;
        self
    }

    pub fn with_target_pairs(mut self, n: usize) -> Self {
        self.min_target_pairs = n;
        self.max_target_pairs = n;
        self
    }
}

/// What a worker has already been through.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkerHistory {
    pub sessions: usize,
    pub prior_targets: BTreeSet<String>,
}

impl WorkerHistory {
    pub fn record(&mut self, plan: &SessionPlan) {
        self.sessions += 1;
        self.prior_targets
            .extend(plan.target_ids().into_iter().map(str::to_string));
    }
}

const MAX_LAYOUT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy)]
enum Pending {
    Free,
    Target(usize),
    Vigilance(usize),
}

/// Builds a randomized session schedule. The result depends only on the pool
/// order, the worker history, the seed and the config.
pub fn plan_session(
    pool: &[String],
    history: &WorkerHistory,
    session_id: &str,
    seed: u64,
    cfg: &PlanConfig,
) -> Result<SessionPlan, ExperimentError> {
    if history.sessions >= cfg.max_rounds_per_worker {
        return Err(ExperimentError::WorkerExhausted {
            rounds: history.sessions,
        });
    }
    let mut distinct: Vec<&String> = Vec::with_capacity(pool.len());
    let mut seen = std::collections::HashSet::new();
    for id in pool {
        if seen.insert(id) {
            distinct.push(id);
        }
    }
    if distinct.len() < cfg.min_pool.max(cfg.max_length) {
        return Err(ExperimentError::PlanInfeasible(format!(
            "pool has {} distinct sounds, need {}",
            distinct.len(),
            cfg.min_pool.max(cfg.max_length)
        )));
    }
    if cfg.min_length > cfg.max_length || cfg.min_target_pairs > cfg.max_target_pairs || cfg.vigilance_deltas.is_empty() {
        return Err(ExperimentError::PlanInfeasible("inconsistent plan config".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (layout, n_targets) = (0..MAX_LAYOUT_ATTEMPTS)
        .find_map(|_| try_layout(&mut rng, cfg))
        .ok_or_else(|| ExperimentError::PlanInfeasible("no layout satisfies the spacing rules".into()))?;

    let mut eligible: Vec<&String> = distinct
        .iter()
        .copied()
        .filter(|id| !history.prior_targets.contains(*id))
        .collect();
    if eligible.len() < n_targets {
        return Err(ExperimentError::PlanInfeasible(
            "worker has no unseen target candidates left".into(),
        ));
    }
    eligible.shuffle(&mut rng);
    let targets: Vec<&String> = eligible[..n_targets].to_vec();
    let mut others: Vec<&String> = distinct
        .iter()
        .copied()
        .filter(|id| !targets.contains(id))
        .collect();
    others.shuffle(&mut rng);
    let n_singles = layout.iter().filter(|p| matches!(p, Pending::Free)).count();
    let needed = cfg.vigilance_pairs + n_singles;
    if others.len() < needed {
        return Err(ExperimentError::PlanInfeasible(format!(
            "need {needed} non-target sounds, pool offers {}",
            others.len()
        )));
    }
    let (vigilance, fillers) = others[..needed].split_at(cfg.vigilance_pairs);

    let mut seen_pair = vec![false; n_targets];
    let mut seen_vig = vec![false; cfg.vigilance_pairs];
    let mut filler_iter = fillers.iter();
    let slots = layout
        .iter()
        .enumerate()
        .map(|(position, pending)| {
            let (sound, role) = match *pending {
                Pending::Target(k) => {
                    let role = if seen_pair[k] { Role::TargetSecond } else { Role::TargetFirst };
                    seen_pair[k] = true;
                    (targets[k], role)
                }
                Pending::Vigilance(k) => {
                    let role = if seen_vig[k] { Role::VigilanceSecond } else { Role::VigilanceFirst };
                    seen_vig[k] = true;
                    (vigilance[k], role)
                }
                Pending::Free => (*filler_iter.next().expect("filler count"), Role::Filler),
            };
            Slot {
                position,
                sound_id: sound.clone(),
                role,
            }
        })
        .collect();
    Ok(SessionPlan {
        session_id: session_id.to_string(),
        slots,
        seed,
    })
}

fn try_layout(rng: &mut ChaCha8Rng, cfg: &PlanConfig) -> Option<(Vec<Pending>, usize)> {
    let len = rng.gen_range(cfg.min_length..=cfg.max_length);
    let n_targets = rng.gen_range(cfg.min_target_pairs..=cfg.max_target_pairs);
    let mut layout = vec![Pending::Free; len];
    let free = |l: &[Pending], p: usize| matches!(l.get(p), Some(Pending::Free));

    for k in 0..n_targets {
        let candidates: Vec<usize> = (0..len.saturating_sub(cfg.target_delta))
            .filter(|&p| free(&layout, p) && free(&layout, p + cfg.target_delta))
            .collect();
        let &p = candidates.choose(rng)?;
        layout[p] = Pending::Target(k);
        layout[p + cfg.target_delta] = Pending::Target(k);
    }
    for k in 0..cfg.vigilance_pairs {
        let candidates: Vec<(usize, usize)> = (0..len)
            .flat_map(|p| cfg.vigilance_deltas.iter().map(move |&d| (p, p + d)))
            .filter(|&(a, b)| free(&layout, a) && free(&layout, b))
            .collect();
        let &(a, b) = candidates.choose(rng)?;
        layout[a] = Pending::Vigilance(k);
        layout[b] = Pending::Vigilance(k);
    }
    Some((layout, n_targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pool(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn deterministic_given_seed() {
        let p = pool(402);
        let h = WorkerHistory::default();
        let cfg = PlanConfig::default();
        let a = plan_session(&p, &h, "x", 7, &cfg).unwrap();
        let b = plan_session(&p, &h, "x", 7, &cfg).unwrap();
        assert_eq!(a, b);
        let c = plan_session(&p, &h, "x", 8, &cfg).unwrap();
        assert_ne!(a.slots, c.slots);
    }

    #[test]
    fn two_target_pairs_are_61_apart() {
        let cfg = PlanConfig::default().with_target_pairs(2);
        let plan = plan_session(&pool(402), &WorkerHistory::default(), "x", 3, &cfg).unwrap();
        let pairs = plan.target_pairs();
        assert_eq!(pairs.len(), 2);
        assert_eq!(plan.positions_with(Role::TargetSecond).count(), 2);
        for (a, b) in pairs {
            assert_eq!(b - a, 61);
        }
    }

    #[test]
    fn exhausted_worker_and_small_pool() {
        let h = WorkerHistory {
            sessions: 8,
            ..Default::default()
        };
        assert!(matches!(
            plan_session(&pool(402), &h, "x", 1, &PlanConfig::default()),
            Err(ExperimentError::WorkerExhausted { rounds: 8 })
        ));
        assert!(matches!(
            plan_session(&pool(60), &WorkerHistory::default(), "x", 1, &PlanConfig::default()),
            Err(ExperimentError::PlanInfeasible(_))
        ));
    }

    #[test]
    fn targets_avoid_prior_targets() {
        let p = pool(80);
        let mut h = WorkerHistory::default();
        for round in 0..8 {
            let plan = plan_session(&p, &h, "w", round, &PlanConfig::default()).unwrap();
            for t in plan.target_ids() {
                assert!(!h.prior_targets.contains(t));
            }
            h.record(&plan);
        }
        assert_eq!(h.sessions, 8);
    }

    #[test]
    fn role_counts() {
        for seed in 0..50 {
            let plan = plan_session(&pool(100), &WorkerHistory::default(), "x", seed, &PlanConfig::default()).unwrap();
            assert!((68..=72).contains(&plan.len()));
            assert_eq!(plan.positions_with(Role::VigilanceFirst).count(), 20);
            assert_eq!(plan.positions_with(Role::VigilanceSecond).count(), 20);
            let t = plan.positions_with(Role::TargetFirst).count();
            assert!((1..=2).contains(&t));
            for (i, s) in plan.slots.iter().enumerate() {
                assert_eq!(s.position, i);
            }
        }
    }
}
