use crate::audio::Spectrogram;

/// Frames below this fraction of the loudest frame's energy do not compete
/// for the peak spread.
const PEAK_FRAME_ENERGY_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralStats {
    /// Energy-weighted mean of per-frame spectral spread, Hz.
    pub avg_spectral_spread: f64,
    pub peak_spectral_spread: f64,
    pub avg_spectral_skew: f64,
    /// Largest frame RMS (time-domain amplitude units).
    pub max_energy: f64,
    pub silent: bool,
}

impl SpectralStats {
    pub fn fragment(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("avg_spectral_spread", self.avg_spectral_spread),
            ("peak_spectral_spread", self.peak_spectral_spread),
            ("avg_spectral_skew", self.avg_spectral_skew),
            ("max_energy", self.max_energy),
        ]
    }
}

struct FrameMoments {
    energy: f64,
    spread: f64,
    skew: f64,
}

fn frame_moments(spec: &Spectrogram, t: usize) -> Option<FrameMoments> {
    let mut mass = 0.0;
    let mut first = 0.0;
    for k in 0..spec.n_bins() {
        let m = spec.values.get(k, t);
        let p = m * m;
        mass += p;
        first += p * spec.bin_frequency(k);
    }
    if !(mass > 0.0) {
        return None;
    }
    let centroid = first / mass;
    let (mut m2, mut m3) = (0.0, 0.0);
    for k in 0..spec.n_bins() {
        let m = spec.values.get(k, t);
        let p = m * m / mass;
        let d = spec.bin_frequency(k) - centroid;
        m2 += p * d * d;
        m3 += p * d * d * d;
    }
    let spread = m2.sqrt();
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    Some(FrameMoments {
        energy: mass,
        spread,
        skew,
    })
}

/// RMS of the analysed frame recovered from its one-sided Hann spectrum.
fn frame_rms(spec: &Spectrogram, t: usize) -> f64 {
    let n = spec.window_len as f64;
    let last = spec.n_bins() - 1;
    let mut sum = 0.0;
    for k in 0..=last {
        let m = spec.values.get(k, t);
        let w = if k == 0 || k == last { 1.0 } else { 2.0 };
        sum += w * m * m;
    }
    // periodic Hann: sum of squared weights is 3N/8
    (sum / (n * 3.0 * n / 8.0)).sqrt()
}

/// Spectral spread and skew treat each frame's normalized power spectrum as a
/// distribution over bin frequencies. Weighting by power rather than raw
/// magnitude keeps window sidelobe leakage from inflating the spread of a
/// pure tone past one bin.
pub fn spectral_stats(spec: &Spectrogram) -> SpectralStats {
    let frames: Vec<(usize, FrameMoments)> = (0..spec.n_frames())
        .filter_map(|t| frame_moments(spec, t).map(|m| (t, m)))
        .collect();
    let total_energy: f64 = frames.iter().map(|(_, m)| m.energy).sum();
    if frames.is_empty() || !(total_energy > 0.0) {
        return SpectralStats {
            silent: true,
            ..Default::default()
        };
    }
    let loudest = frames.iter().map(|(_, m)| m.energy).fold(0.0, f64::max);
    let avg_spread = frames.iter().map(|(_, m)| m.energy * m.spread).sum::<f64>() / total_energy;
    let avg_skew = frames.iter().map(|(_, m)| m.energy * m.skew).sum::<f64>() / total_energy;
    let peak_spread = frames
        .iter()
        .filter(|(_, m)| m.energy >= PEAK_FRAME_ENERGY_FRACTION * loudest)
        .map(|(_, m)| m.spread)
        .fold(0.0, f64::max);
    let max_energy = frames
        .iter()
        .map(|(t, _)| frame_rms(spec, *t))
        .fold(0.0, f64::max);
    SpectralStats {
        avg_spectral_spread: avg_spread,
        peak_spectral_spread: peak_spread,
        avg_spectral_skew: avg_skew,
        max_energy,
        silent: false,
    }
}
