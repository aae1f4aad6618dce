//! Autocorrelation pitch tracking and pitch-contour diversity.

use std::collections::BTreeMap;

use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio::AudioClip;

pub const PITCH_FRAME: usize = 2048;
pub const PITCH_HOP: usize = 512;
pub const MIN_F0_HZ: f64 = 50.0;
pub const MAX_F0_HZ: f64 = 2000.0;
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Candidate peaks within this fraction of the best one count as the period;
/// the shortest such lag wins, which suppresses sub-octave errors.
const PEAK_TOLERANCE: f64 = 0.9;
const MIN_FRAME_RMS: f64 = 1e-4;

/// Per-frame f0 estimates in Hz; `None` marks unvoiced frames.
pub fn track_f0(clip: &AudioClip) -> Vec<Option<f64>> {
    let sr = clip.sample_rate as f64;
    let min_lag = (sr / MAX_F0_HZ).ceil() as usize;
    let max_lag = ((sr / MIN_F0_HZ).floor() as usize).min(PITCH_FRAME - 2);
    let x = &clip.samples;
    if x.len() < PITCH_FRAME || min_lag + 1 >= max_lag {
        return Vec::new();
    }
    let n_fft = (2 * PITCH_FRAME).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);
    let mut buf = vec![Complex::default(); n_fft];
    let mut prefix = vec![0.0; PITCH_FRAME + 1];

    let n_frames = 1 + (x.len() - PITCH_FRAME) / PITCH_HOP;
    (0..n_frames)
        .map(|t| {
            let frame = &x[t * PITCH_HOP..t * PITCH_HOP + PITCH_FRAME];
            for (i, v) in frame.iter().enumerate() {
                prefix[i + 1] = prefix[i] + v * v;
            }
            if (prefix[PITCH_FRAME] / PITCH_FRAME as f64).sqrt() < MIN_FRAME_RMS {
                return None;
            }
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0);
            }
            fwd.process(&mut buf);
            for c in buf.iter_mut() {
                *c = Complex::new(c.norm_sqr(), 0.0);
            }
            inv.process(&mut buf);
            let scale = 1.0 / n_fft as f64;
            // normalized cross-correlation between the frame head and its lagged tail
            let nacf = |lag: usize| -> f64 {
                let head = prefix[PITCH_FRAME - lag];
                let tail = prefix[PITCH_FRAME] - prefix[lag];
                let denom = (head * tail).sqrt();
                if denom > 0.0 {
                    buf[lag].re * scale / denom
                } else {
                    0.0
                }
            };
            let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(nacf).collect();
            pick_period(&r, min_lag - 1).map(|lag| sr / lag)
        })
        .collect()
}

/// Chooses the period (in samples, sub-sample refined) from a normalized
/// autocorrelation `r` whose index 0 corresponds to lag `offset`.
fn pick_period(r: &[f64], offset: usize) -> Option<f64> {
    let peaks: Vec<usize> = (1..r.len() - 1)
        .filter(|&i| r[i] > r[i - 1] && r[i] >= r[i + 1])
        .collect();
    let best = peaks.iter().map(|&i| r[i]).fold(f64::NEG_INFINITY, f64::max);
    if !(best >= VOICING_THRESHOLD) {
        return None;
    }
    let i = *peaks.iter().find(|&&i| r[i] >= PEAK_TOLERANCE * best)?;
    let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
    let curvature = a - 2.0 * b + c;
    let shift = if curvature < 0.0 {
        (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some((i + offset) as f64 + shift)
}

/// MIDI-style semitone index of a frequency.
pub fn semitone(f0: f64) -> i64 {
    (12.0 * (f0 / 440.0).log2() + 69.0).round() as i64
}

/// Shannon entropy (nats) of the semitone-quantized f0 over voiced frames.
/// Clips with no voiced frame score 0.
pub fn pitch_diversity(clip: &AudioClip) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for f0 in track_f0(clip).into_iter().flatten() {
        *counts.entry(semitone(f0)).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    -counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p.ln()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth as testsig;

    #[test]
    fn constant_tone_has_zero_diversity() {
        let clip = testsig::tone(440.0, 2.0, 0.5);
        let track = track_f0(&clip);
        assert!(track.iter().all(|f| f.is_some()));
        for f in track.into_iter().flatten() {
            assert!((f - 440.0).abs() < 2.0, "{f}");
        }
        assert_eq!(pitch_diversity(&clip), 0.0);
    }

    #[test]
    fn two_note_alternation_is_ln2() {
        let clip = testsig::alternation(&[440.0, 523.25], 1.0, 4);
        let d = pitch_diversity(&clip);
        assert!((d - std::f64::consts::LN_2).abs() < 0.1, "{d}");
    }

    #[test]
    fn noise_is_unvoiced() {
        let clip = testsig::white_noise(1.0, 0.5, 9);
        assert!(track_f0(&clip).iter().all(Option::is_none));
        assert_eq!(pitch_diversity(&clip), 0.0);
    }

    #[test]
    fn tracks_low_and_high_pitches() {
        for f in [80.0, 220.0, 1500.0] {
            let track = track_f0(&testsig::tone(f, 0.5, 0.5));
            let voiced: Vec<f64> = track.into_iter().flatten().collect();
            assert!(!voiced.is_empty());
            for v in voiced {
                assert_eq!(semitone(v), semitone(f), "{f} tracked as {v}");
            }
        }
    }

    #[test]
    fn semitone_reference() {
        assert_eq!(semitone(440.0), 69);
        assert_eq!(semitone(261.63), 60);
    }
}
