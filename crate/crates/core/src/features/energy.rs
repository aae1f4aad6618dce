use crate::audio::Spectrogram;
use crate::grid::Matrix;

pub const BASS_HZ: (f64, f64) = (20.0, 250.0);
pub const MID_HZ: (f64, f64) = (250.0, 4000.0);
pub const TREBLE_LOW_HZ: f64 = 4000.0;
pub const HPSS_WIDTH: usize = 17;
const HPSS_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyStats {
    pub bass_ratio: f64,
    pub mid_ratio: f64,
    pub treble_ratio: f64,
    pub percussive_harmonic_ratio: f64,
    pub silent: bool,
}

impl EnergyStats {
    pub fn fragment(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("bass_ratio", self.bass_ratio),
            ("mid_ratio", self.mid_ratio),
            ("treble_ratio", self.treble_ratio),
            ("percussive_harmonic_ratio", self.percussive_harmonic_ratio),
        ]
    }
}

pub fn energy_and_hpss(spec: &Spectrogram) -> EnergyStats {
    let nyquist = spec.nyquist();
    let mut bands = [0.0f64; 3];
    for k in 0..spec.n_bins() {
        let f = spec.bin_frequency(k);
        let slot = if (BASS_HZ.0..BASS_HZ.1).contains(&f) {
            0
        } else if (MID_HZ.0..MID_HZ.1).contains(&f) {
            1
        } else if (TREBLE_LOW_HZ..=nyquist).contains(&f) {
            2
        } else {
            continue;
        };
        bands[slot] += spec.values.row(k).iter().map(|m| m * m).sum::<f64>();
    }
    let total: f64 = bands.iter().sum();
    if !(total > 0.0) {
        return EnergyStats {
            silent: true,
            ..Default::default()
        };
    }
    let (harmonic, percussive) = hpss_median(&spec.values, HPSS_WIDTH, HPSS_WIDTH);
    let h_energy: f64 = harmonic.as_slice().iter().map(|v| v * v).sum();
    let p_energy: f64 = percussive.as_slice().iter().map(|v| v * v).sum();
    EnergyStats {
        bass_ratio: bands[0] / total,
        mid_ratio: bands[1] / total,
        treble_ratio: bands[2] / total,
        percussive_harmonic_ratio: p_energy / (h_energy + HPSS_EPSILON),
        silent: false,
    }
}

/// Median-filter separation of a `[freq × time]` magnitude matrix: harmonic is
/// the median along time, percussive the median along frequency. Windows
/// shrink at the borders.
pub fn hpss_median(values: &Matrix, time_width: usize, freq_width: usize) -> (Matrix, Matrix) {
    let (rows, cols) = values.shape();
    let mut window = Vec::with_capacity(time_width.max(freq_width));
    let th = time_width / 2;
    let harmonic = Matrix::from_fn(rows, cols, |r, c| {
        let row = values.row(r);
        window.clear();
        window.extend_from_slice(&row[c.saturating_sub(th)..(c + th + 1).min(cols)]);
        median(&mut window)
    });
    let fh = freq_width / 2;
    let percussive = Matrix::from_fn(rows, cols, |r, c| {
        window.clear();
        window.extend((r.saturating_sub(fh)..(r + fh + 1).min(rows)).map(|k| values.get(k, c)));
        median(&mut window)
    });
    (harmonic, percussive)
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = v[mid];
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{stft_magnitude, AudioClip};
    use crate::synth as testsig;

    fn stats(clip: &AudioClip) -> EnergyStats {
        energy_and_hpss(&stft_magnitude(clip, 1024, 512).unwrap())
    }

    #[test]
    fn low_tone_is_bass() {
        let s = stats(&testsig::tone(100.0, 1.0, 0.5));
        assert!(s.bass_ratio > 0.95, "{s:?}");
        assert!((s.bass_ratio + s.mid_ratio + s.treble_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn white_noise_treble_matches_bandwidth_fraction() {
        let s = stats(&testsig::white_noise(2.0, 0.5, 5));
        let expected = (22_050.0 - 4000.0) / 22_030.0;
        assert!((s.treble_ratio - expected).abs() < 0.1 * expected, "{s:?}");
        assert!((s.bass_ratio + s.mid_ratio + s.treble_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clicks_are_percussive_tones_harmonic() {
        let clicks = stats(&testsig::click_train(2.0, 0.1));
        let tone = stats(&testsig::tone(440.0, 2.0, 0.5));
        assert!(clicks.percussive_harmonic_ratio > 1.0, "{clicks:?}");
        assert!(tone.percussive_harmonic_ratio < 1.0, "{tone:?}");
    }

    #[test]
    fn silence_sets_flag() {
        let s = stats(&AudioClip::new("s", 44_100, vec![0.0; 4096]));
        assert!(s.silent);
        assert_eq!(s.bass_ratio + s.mid_ratio + s.treble_ratio, 0.0);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
