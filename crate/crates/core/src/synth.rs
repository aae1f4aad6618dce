//! Deterministic synthetic test signals at 44.1 kHz.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioClip, TARGET_SAMPLE_RATE};

const SR: f64 = TARGET_SAMPLE_RATE as f64;

fn n_samples(secs: f64) -> usize {
    (secs * SR).round() as usize
}

pub fn tone(freq: f64, secs: f64, amplitude: f64) -> AudioClip {
    chord_with_amplitude(&[freq], secs, amplitude, "tone")
}

/// Equal-amplitude sum of sines, each at `amplitude`.
pub fn chord(freqs: &[f64], secs: f64, amplitude: f64) -> AudioClip {
    chord_with_amplitude(freqs, secs, amplitude, "chord")
}

fn chord_with_amplitude(freqs: &[f64], secs: f64, amplitude: f64, id: &str) -> AudioClip {
    let samples = (0..n_samples(secs))
        .map(|i| {
            let t = i as f64 / SR;
            freqs
                .iter()
                .map(|f| amplitude * (2.0 * PI * f * t).sin())
                .sum()
        })
        .collect();
    AudioClip::new(id, TARGET_SAMPLE_RATE, samples)
}

/// Uniform white noise in `[-amplitude, amplitude]`.
pub fn white_noise(secs: f64, amplitude: f64, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n_samples(secs))
        .map(|_| rng.gen_range(-amplitude..=amplitude))
        .collect();
    AudioClip::new("noise", TARGET_SAMPLE_RATE, samples)
}

/// Unit impulses every `period_s` seconds.
pub fn click_train(secs: f64, period_s: f64) -> AudioClip {
    let period = n_samples(period_s).max(1);
    let samples = (0..n_samples(secs))
        .map(|i| if i % period == period / 2 { 0.9 } else { 0.0 })
        .collect();
    AudioClip::new("clicks", TARGET_SAMPLE_RATE, samples)
}

/// Silence followed by a sustained tone starting at `onset_s`.
pub fn onset(secs: f64, onset_s: f64) -> AudioClip {
    let start = n_samples(onset_s);
    let samples = (0..n_samples(secs))
        .map(|i| {
            if i < start {
                0.0
            } else {
                0.5 * (2.0 * PI * 660.0 * i as f64 / SR).sin()
            }
        })
        .collect();
    AudioClip::new("onset", TARGET_SAMPLE_RATE, samples)
}

/// Notes cycling through `freqs`, each held for `note_s`, `n_notes` in total.
pub fn alternation(freqs: &[f64], note_s: f64, n_notes: usize) -> AudioClip {
    let per = n_samples(note_s);
    let samples = (0..per * n_notes)
        .map(|i| {
            let f = freqs[(i / per) % freqs.len()];
            0.5 * (2.0 * PI * f * i as f64 / SR).sin()
        })
        .collect();
    AudioClip::new("alternation", TARGET_SAMPLE_RATE, samples)
}

/// Prepends `secs` of silence.
pub fn with_leading_silence(clip: &AudioClip, secs: f64) -> AudioClip {
    let pad = (secs * clip.sample_rate as f64).round() as usize;
    let mut samples = vec![0.0; pad];
    samples.extend_from_slice(&clip.samples);
    AudioClip::new(clip.id.clone(), clip.sample_rate, samples)
}

/// A varied clip (noise-modulated harmonic tone with a few hits) for
/// pipeline smoke tests, parameterised by `seed`.
pub fn texture(id: &str, secs: f64, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.gen_range(110.0..880.0);
    let noise_level = rng.gen_range(0.02..0.3);
    let n_partials = rng.gen_range(1..6);
    let hit_period = n_samples(rng.gen_range(0.2..1.0));
    let samples = (0..n_samples(secs))
        .map(|i| {
            let t = i as f64 / SR;
            let harmonic: f64 = (1..=n_partials)
                .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                .sum::<f64>()
                * 0.25;
            let hit = if i % hit_period < 200 { 0.3 } else { 0.0 };
            let noise = rng.gen_range(-1.0..1.0) * noise_level;
            (harmonic + noise * (1.0 + hit)).clamp(-1.0, 1.0)
        })
        .collect();
    AudioClip::new(id, TARGET_SAMPLE_RATE, samples)
}
