//! Auditory memorability toolkit: audio front-end, salience maps, acoustic
//! features, memory-game protocol and scoring, regression and importance
//! analysis, per-game context models, and simulated participants.

pub mod audio;
pub mod context;
pub mod events;
pub mod experiment;
pub mod features;
pub mod grid;
pub mod salience;
pub mod simulant;
pub mod stats;
pub mod synth;
