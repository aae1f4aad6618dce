//! Python bindings: planning, validation, simulation, scoring, per-clip
//! features and importance analysis.

use std::collections::{BTreeMap, BTreeSet};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use soundmem_core::audio::AudioClip;
use soundmem_core::events::{games_to_events, read_events, replay_events, write_events};
use soundmem_core::experiment::{self as exp, Game, PlanConfig, WorkerHistory};
use soundmem_core::features::{extract_clip_features, feature_columns, FeatureConfig};
use soundmem_core::grid::Matrix;
use soundmem_core::simulant::{games_for_target_count, simulate_games, SimulantProfile};
use soundmem_core::stats::{self, Dataset, RegressorConfig, ShapleyConfig};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn role_name(role: exp::Role) -> String {
    serde_json::to_value(role)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

#[pyclass(name = "Slot", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySlot {
    #[pyo3(get)]
    position: usize,
    #[pyo3(get)]
    sound_id: String,
    #[pyo3(get)]
    role: String,
}

#[pymethods]
impl PySlot {
    fn __repr__(&self) -> String {
        format!("Slot({}, {:?}, {})", self.position, self.sound_id, self.role)
    }
}

/// A round schedule.
#[pyclass(name = "SessionPlan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySessionPlan {
    inner: exp::SessionPlan,
}

#[pymethods]
impl PySessionPlan {
    #[getter]
    fn session_id(&self) -> &str {
        &self.inner.session_id
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn slots(&self) -> Vec<PySlot> {
        self.inner
            .slots
            .iter()
            .map(|s| PySlot {
                position: s.position,
                sound_id: s.sound_id.clone(),
                role: role_name(s.role),
            })
            .collect()
    }

    fn target_ids(&self) -> Vec<String> {
        self.inner.target_ids().into_iter().map(str::to_string).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_error)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(value_error)?,
        })
    }
}

#[pyclass(name = "ValidationResult", frozen, skip_from_py_object)]
struct PyValidationResult {
    #[pyo3(get)]
    vigilance_score: f64,
    #[pyo3(get)]
    false_positive_rate: f64,
    #[pyo3(get)]
    accepted: bool,
    #[pyo3(get)]
    hits: usize,
    #[pyo3(get)]
    false_alarms: usize,
    #[pyo3(get)]
    display_score: i64,
}

#[pyclass(name = "SoundScore", frozen, skip_from_py_object)]
struct PySoundScore {
    #[pyo3(get)]
    sound_id: String,
    #[pyo3(get)]
    m: Option<f64>,
    #[pyo3(get)]
    c10: Option<f64>,
    #[pyo3(get)]
    normalized: Option<f64>,
    #[pyo3(get)]
    n_target_appearances: usize,
    #[pyo3(get)]
    n_last10_appearances: usize,
}

impl From<exp::SoundScore> for PySoundScore {
    fn from(s: exp::SoundScore) -> Self {
        Self {
            sound_id: s.sound_id,
            m: s.m,
            c10: s.c10,
            normalized: s.normalized,
            n_target_appearances: s.n_target_appearances,
            n_last10_appearances: s.n_last10_appearances,
        }
    }
}

/// Draws a schedule for a worker who has already played `rounds_played`
/// rounds with the given earlier targets.
#[pyfunction]
#[pyo3(signature = (pool, seed, session_id = "py", prior_targets = Vec::new(), rounds_played = 0))]
fn plan_session(pool: Vec<String>, seed: u64, session_id: &str, prior_targets: Vec<String>, rounds_played: usize) -> PyResult<PySessionPlan> {
    let history = WorkerHistory {
        sessions: rounds_played,
        prior_targets: prior_targets.into_iter().collect::<BTreeSet<_>>(),
    };
    let inner = exp::plan_session(&pool, &history, session_id, seed, &PlanConfig::default()).map_err(value_error)?;
    Ok(PySessionPlan { inner })
}

#[pyfunction]
fn validate_session(plan: &PySessionPlan, clicks: Vec<usize>) -> PyResult<PyValidationResult> {
    let mut log = exp::SessionLog::new(plan.inner.session_id.clone(), "py");
    for p in clicks {
        log.click(p, None);
    }
    log.completed = true;
    let r = exp::validate_session(&plan.inner, &log).map_err(value_error)?;
    Ok(PyValidationResult {
        vigilance_score: r.vigilance_score,
        false_positive_rate: r.false_positive_rate,
        accepted: r.accepted,
        hits: r.hits,
        false_alarms: r.false_alarms,
        display_score: r.display_score(),
    })
}

/// Simulated rounds as a JSONL event log, the same format the service writes.
#[pyfunction]
#[pyo3(signature = (pool, games_per_sound, seed, recall = (0.1, 0.9), confuse = (0.0, 0.4), p_vigilance = 0.95))]
fn simulate_events(
    py: Python<'_>,
    pool: Vec<String>,
    games_per_sound: usize,
    seed: u64,
    recall: (f64, f64),
    confuse: (f64, f64),
    p_vigilance: f64,
) -> PyResult<String> {
    py.detach(|| {
        let cfg = PlanConfig::default();
        let profile = SimulantProfile::planted(&pool, recall, confuse, p_vigilance, seed);
        let n = games_for_target_count(pool.len(), games_per_sound, &cfg);
        let games = simulate_games(&pool, &profile, n, seed, &cfg).map_err(value_error)?;
        let mut out = Vec::new();
        write_events(&games_to_events(&games, 0), &mut out).map_err(value_error)?;
        String::from_utf8(out).map_err(value_error)
    })
}

fn games_from_jsonl(text: &str) -> PyResult<Vec<Game>> {
    let records = read_events(text.as_bytes()).map_err(value_error)?;
    Ok(replay_events(&records).map_err(value_error)?.finished_games())
}

/// Per-sound scores from a JSONL event log.
#[pyfunction]
fn score_events(py: Python<'_>, events: &str) -> PyResult<BTreeMap<String, PySoundScore>> {
    let scores = py.detach(|| games_from_jsonl(events).map(|g| exp::score_sounds(&g)))?;
    Ok(scores.into_iter().map(|(k, v)| (k, v.into())).collect())
}

/// `(memorability ρ per split, confusability ρ per split)`.
#[pyfunction]
#[pyo3(signature = (events, n_splits = 25, seed = 0))]
fn split_reliability(py: Python<'_>, events: &str, n_splits: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    py.detach(|| {
        let games = games_from_jsonl(events)?;
        let r = exp::split_rank_reliability(&games, n_splits, seed).map_err(value_error)?;
        Ok((r.memorability, r.confusability))
    })
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    stats::try_spearman(&a, &b).map_err(value_error)
}

/// Low-level and salience features of one mono clip.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 44_100))]
fn clip_features(py: Python<'_>, samples: Vec<f64>, sample_rate: u32) -> PyResult<BTreeMap<String, f64>> {
    let cfg = FeatureConfig::default();
    let values = py.detach(|| extract_clip_features(&AudioClip::new("py", sample_rate, samples), &cfg)).map_err(value_error)?;
    Ok(feature_columns(&cfg).into_iter().map(|c| c.name).zip(values).collect())
}

/// Sampled Shapley importance, sorted by descending ΔR²; each entry is
/// `(feature, individual R², ΔR², evaluations)`.
#[pyfunction]
#[pyo3(signature = (x, y, names, iterations = 10_000, seed = 0, regressor = "ridge"))]
fn shapley_importance(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    names: Vec<String>,
    iterations: usize,
    seed: u64,
    regressor: &str,
) -> PyResult<Vec<(String, f64, f64, usize)>> {
    let regressor = match regressor {
        "ridge" => RegressorConfig::default(),
        "svr" => RegressorConfig::svr(),
        other => return Err(PyValueError::new_err(format!("unknown regressor {other}"))),
    };
    let p = names.len();
    if let Some(bad) = x.iter().position(|r| r.len() != p) {
        return Err(PyValueError::new_err(format!("row {bad} has {} values, expected {p}", x[bad].len())));
    }
    let matrix = Matrix::from_vec(x.len(), p, x.into_iter().flatten().collect());
    let ds = Dataset::new(names, matrix, y).map_err(value_error)?;
    let cfg = ShapleyConfig {
        iterations,
        seed,
        regressor,
        ..ShapleyConfig::default()
    };
    let report = py.detach(|| stats::shapley_importance(&ds, &cfg)).map_err(value_error)?;
    Ok(report
        .features
        .into_iter()
        .map(|f| (f.feature, f.individual_r2, f.shapley_delta_r2, f.n_evaluations))
        .collect())
}

#[pymodule]
fn soundmem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySlot>()?;
    m.add_class::<PySessionPlan>()?;
    m.add_class::<PyValidationResult>()?;
    m.add_class::<PySoundScore>()?;
    m.add_function(wrap_pyfunction!(plan_session, m)?)?;
    m.add_function(wrap_pyfunction!(validate_session, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_events, m)?)?;
    m.add_function(wrap_pyfunction!(score_events, m)?)?;
    m.add_function(wrap_pyfunction!(split_reliability, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(clip_features, m)?)?;
    m.add_function(wrap_pyfunction!(shapley_importance, m)?)?;
    Ok(())
}
