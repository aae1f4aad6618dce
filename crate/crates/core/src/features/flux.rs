use crate::audio::Spectrogram;

/// Number of equal-length time blocks the flux mass is distributed over
/// before taking its entropy.
pub const FLUX_ENTROPY_BLOCKS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct BandFlux {
    pub avg_flux: f64,
    /// Entropy (nats) of the flux mass over time blocks.
    pub flux_entropy: f64,
}

/// Bin index ranges of `n_bands` log-spaced bands from the first non-DC bin
/// up to Nyquist.
pub fn log_band_ranges(spec: &Spectrogram, n_bands: usize) -> Vec<std::ops::Range<usize>> {
    let lo = spec.freq_bin_hz;
    let hi = spec.nyquist();
    let edges: Vec<f64> = (0..=n_bands)
        .map(|i| lo * (hi / lo).powf(i as f64 / n_bands as f64))
        .collect();
    let last_bin = spec.n_bins() - 1;
    (0..n_bands)
        .map(|b| {
            let start = (1..=last_bin)
                .find(|&k| spec.bin_frequency(k) >= edges[b] - 1e-9)
                .unwrap_or(last_bin + 1);
            let end = if b + 1 == n_bands {
                last_bin + 1
            } else {
                (1..=last_bin)
                    .find(|&k| spec.bin_frequency(k) >= edges[b + 1] - 1e-9)
                    .unwrap_or(last_bin + 1)
            };
            start..end.max(start)
        })
        .collect()
}

/// Positive spectral flux per frame transition, within one band.
pub fn band_flux_series(spec: &Spectrogram, band: std::ops::Range<usize>) -> Vec<f64> {
    (1..spec.n_frames())
        .map(|t| {
            band.clone()
                .map(|k| (spec.values.get(k, t) - spec.values.get(k, t - 1)).max(0.0))
                .sum()
        })
        .collect()
}

/// Shannon entropy of the flux mass distributed over equal time blocks.
/// An all-zero series has entropy 0.
pub fn block_entropy(series: &[f64], n_blocks: usize) -> f64 {
    let total: f64 = series.iter().sum();
    if series.is_empty() || !(total > 0.0) {
        return 0.0;
    }
    let mut blocks = vec![0.0; n_blocks];
    for (i, v) in series.iter().enumerate() {
        blocks[i * n_blocks / series.len()] += v;
    }
    -blocks
        .iter()
        .filter(|&&b| b > 0.0)
        .map(|b| {
            let p = b / total;
            p * p.ln()
        })
        .sum::<f64>()
}

pub fn subband_flux_stats(spec: &Spectrogram, n_bands: usize) -> Vec<BandFlux> {
    log_band_ranges(spec, n_bands)
        .into_iter()
        .map(|band| {
            let series = band_flux_series(spec, band);
            let avg_flux = if series.is_empty() {
                0.0
            } else {
                series.iter().sum::<f64>() / series.len() as f64
            };
            BandFlux {
                avg_flux,
                flux_entropy: block_entropy(&series, FLUX_ENTROPY_BLOCKS),
            }
        })
        .collect()
}

pub fn flux_feature_names(n_bands: usize) -> Vec<String> {
    (1..=n_bands)
        .flat_map(|b| [format!("avg_flux_band_{b}"), format!("flux_entropy_band_{b}")])
        .collect()
}
