//! Psychoacoustic timbre scalars: Bark-band sharpness and Plomp–Levelt
//! roughness of the time-averaged spectrum.

use std::f64::consts::PI;

use crate::audio::{AudioClip, MagnitudeFft};

/// Long window so partials tens of Hz apart resolve into separate peaks.
pub const TIMBRE_WINDOW: usize = 8192;
pub const TIMBRE_HOP: usize = 4096;
pub const N_BARK_BANDS: usize = 24;
pub const N_ROUGHNESS_PEAKS: usize = 20;
/// Peaks more than 60 dB under the strongest are ignored.
const PEAK_FLOOR: f64 = 1e-3;
const SHARPNESS_SCALE: f64 = 0.11;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimbralStats {
    pub sharpness: f64,
    pub roughness: f64,
}

impl TimbralStats {
    pub fn fragment(&self) -> Vec<(&'static str, f64)> {
        vec![("sharpness", self.sharpness), ("roughness", self.roughness)]
    }
}

/// 4-term Blackman–Harris window (sidelobes near −92 dB).
fn blackman_harris(len: usize) -> Vec<f64> {
    const A: [f64; 4] = [0.35875, 0.48829, 0.14128, 0.01168];
    (0..len)
        .map(|n| {
            let x = 2.0 * PI * n as f64 / len as f64;
            A[0] - A[1] * x.cos() + A[2] * (2.0 * x).cos() - A[3] * (3.0 * x).cos()
        })
        .collect()
}

/// Critical-band rate in Bark.
pub fn bark(f: f64) -> f64 {
    13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan()
}

fn sharpness_weight(z: f64) -> f64 {
    if z <= 15.0 {
        1.0
    } else {
        (0.171 * (z - 15.0)).exp()
    }
}

/// Plomp–Levelt dissonance of two partials (Sethares parameterization).
pub fn plomp_levelt(f1: f64, a1: f64, f2: f64, a2: f64) -> f64 {
    let f_min = f1.min(f2);
    let s = 0.24 / (0.0207 * f_min + 18.96);
    let x = s * (f2 - f1).abs();
    a1.min(a2) * ((-3.5 * x).exp() - (-5.75 * x).exp())
}

/// Mean amplitude spectrum over frames, scaled so a sine of amplitude A
/// peaks near A.
fn average_spectrum(clip: &AudioClip) -> Vec<f64> {
    let window = blackman_harris(TIMBRE_WINDOW);
    let gain: f64 = window.iter().sum::<f64>() / 2.0;
    let mut fft = MagnitudeFft::new(window);
    let n_bins = TIMBRE_WINDOW / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut col = vec![0.0; n_bins];
    let n = clip.samples.len();
    let n_frames = if n <= TIMBRE_WINDOW {
        1
    } else {
        1 + (n - TIMBRE_WINDOW) / TIMBRE_HOP
    };
    for t in 0..n_frames {
        let start = t * TIMBRE_HOP;
        let end = (start + TIMBRE_WINDOW).min(n);
        fft.magnitudes(&clip.samples[start..end], &mut col);
        for (a, c) in acc.iter_mut().zip(&col) {
            *a += c;
        }
    }
    acc.iter_mut().for_each(|a| *a /= n_frames as f64 * gain);
    acc
}

pub fn timbral_stats(clip: &AudioClip) -> TimbralStats {
    let spectrum = average_spectrum(clip);
    let bin_hz = clip.sample_rate as f64 / TIMBRE_WINDOW as f64;

    let mut bands = [0.0f64; N_BARK_BANDS];
    for (k, m) in spectrum.iter().enumerate().skip(1) {
        let z = bark(k as f64 * bin_hz);
        let band = (z.floor() as usize).min(N_BARK_BANDS - 1);
        bands[band] += m * m;
    }
    let total: f64 = bands.iter().sum();
    if !(total > 0.0) {
        return TimbralStats::default();
    }
    let weighted: f64 = bands
        .iter()
        .enumerate()
        .map(|(b, e)| {
            let z = b as f64 + 0.5;
            e * sharpness_weight(z) * z
        })
        .sum();
    let sharpness = SHARPNESS_SCALE * weighted / total;

    let strongest = spectrum.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<(f64, f64)> = (2..spectrum.len() - 1)
        .filter(|&k| {
            spectrum[k] > spectrum[k - 1]
                && spectrum[k] >= spectrum[k + 1]
                && spectrum[k] >= PEAK_FLOOR * strongest
        })
        .map(|k| (k as f64 * bin_hz, spectrum[k]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    peaks.truncate(N_ROUGHNESS_PEAKS);
    let mut roughness = 0.0;
    for i in 0..peaks.len() {
        for j in i + 1..peaks.len() {
            roughness += plomp_levelt(peaks[i].0, peaks[i].1, peaks[j].0, peaks[j].1);
        }
    }
    TimbralStats {
        sharpness,
        roughness,
    }
}
