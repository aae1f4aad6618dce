//! Time-frequency salience maps in the style of center-surround auditory
//! saliency models.
//!
//! Each of three channels (intensity, frequency contrast, temporal contrast)
//! is filtered from a log-compressed spectrogram, decomposed into a Gaussian
//! pyramid, differenced between center and surround scales, normalized with
//! peak promotion, and summed across scales at the output level.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::audio::Spectrogram;
use crate::grid::Matrix;

/// Inputs smaller than this along either axis are edge-padded.
pub const MIN_INPUT_SIZE: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SalienceError {
    #[error("invalid salience configuration: {0}")]
    Config(String),
    #[error("salience maps require a log-compressed spectrogram")]
    NotCompressed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalienceConfig {
    /// Number of 2× reductions above the base image; the pyramid holds
    /// `pyramid_levels + 1` images indexed `0..=pyramid_levels`.
    pub pyramid_levels: usize,
    pub center_levels: Vec<usize>,
    pub surround_deltas: Vec<usize>,
    /// Long-axis σ of the oriented kernels as a multiple of `surround_sigma`.
    pub elongation: f64,
    pub center_sigma: f64,
    pub surround_sigma: f64,
    /// σ of the odd derivative profile of the temporal kernel.
    pub temporal_sigma: f64,
    /// Pyramid level whose resolution the output maps use.
    pub output_level: usize,
}

impl Default for SalienceConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 6,
            center_levels: vec![2, 3],
            surround_deltas: vec![2, 3],
            elongation: 2.0,
            center_sigma: 1.0,
            surround_sigma: 4.0,
            temporal_sigma: 2.0,
            output_level: 2,
        }
    }
}

impl SalienceConfig {
    pub fn validate(&self) -> Result<(), SalienceError> {
        let max_c = self.center_levels.iter().copied().max();
        let max_d = self.surround_deltas.iter().copied().max();
        let (Some(max_c), Some(max_d)) = (max_c, max_d) else {
            return Err(SalienceError::Config(
                "center levels and surround deltas must be non-empty".into(),
            ));
        };
        if self.surround_deltas.contains(&0) {
            return Err(SalienceError::Config("surround delta must be positive".into()));
        }
        if max_c + max_d > self.pyramid_levels {
            return Err(SalienceError::Config(format!(
                "center {max_c} + delta {max_d} exceeds pyramid depth {}",
                self.pyramid_levels
            )));
        }
        if self.output_level > self.pyramid_levels {
            return Err(SalienceError::Config(format!(
                "output level {} beyond pyramid depth {}",
                self.output_level, self.pyramid_levels
            )));
        }
        if !(self.elongation >= 1.0) {
            return Err(SalienceError::Config("elongation must be >= 1".into()));
        }
        if !(self.center_sigma > 0.0 && self.surround_sigma > self.center_sigma) {
            return Err(SalienceError::Config(
                "need 0 < center_sigma < surround_sigma".into(),
            ));
        }
        if !(self.temporal_sigma > 0.0) {
            return Err(SalienceError::Config("temporal_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Three aligned conspicuity maps at the output-level resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SalienceMaps {
    pub intensity: Matrix,
    pub frequency: Matrix,
    pub temporal: Matrix,
    /// Hz spanned by one map row.
    pub row_hz: f64,
    /// Seconds spanned by one map column.
    pub col_s: f64,
}

impl SalienceMaps {
    pub fn channels(&self) -> [(&'static str, &Matrix); 3] {
        [
            ("intensity", &self.intensity),
            ("frequency", &self.frequency),
            ("temporal", &self.temporal),
        ]
    }
}

pub fn salience_maps(
    spec: &Spectrogram,
    cfg: &SalienceConfig,
) -> Result<SalienceMaps, SalienceError> {
    if !spec.log_compressed {
        return Err(SalienceError::NotCompressed);
    }
    let scale = 2f64.powi(cfg.output_level as i32);
    let [intensity, frequency, temporal] = salience_from_matrix(&spec.values, cfg)?;
    Ok(SalienceMaps {
        intensity,
        frequency,
        temporal,
        row_hz: spec.freq_bin_hz * scale,
        col_s: spec.frame_hop_s * scale,
    })
}

/// The three conspicuity maps for a `[freq × time]` matrix.
pub fn salience_from_matrix(
    input: &Matrix,
    cfg: &SalienceConfig,
) -> Result<[Matrix; 3], SalienceError> {
    cfg.validate()?;
    let input = input.pad_edge(MIN_INPUT_SIZE, MIN_INPUT_SIZE);
    // Differences below this are floating-point residue of exact cancellation.
    let tiny = 1e-9 * input.max_abs();
    let images = channel_images(&input, cfg);
    Ok(images.map(|img| conspicuity(&img, cfg, tiny)))
}

/// Channel images before pyramid decomposition: intensity, frequency, temporal.
pub fn channel_images(input: &Matrix, cfg: &SalienceConfig) -> [Matrix; 3] {
    let long_sigma = cfg.elongation * cfg.surround_sigma;
    let dog = dog_kernel(cfg.center_sigma, cfg.surround_sigma);
    let long = gaussian_kernel(long_sigma);
    let frequency = convolve_separable(input, &dog, &long);
    let odd = odd_kernel(cfg.temporal_sigma);
    let temporal = convolve_separable(input, &long, &odd).map(f64::abs);
    [input.clone(), frequency, temporal]
}

fn conspicuity(image: &Matrix, cfg: &SalienceConfig, tiny: f64) -> Matrix {
    let pyramid = gaussian_pyramid(image, cfg.pyramid_levels);
    let (out_r, out_c) = pyramid[cfg.output_level].shape();
    let mut acc = Matrix::zeros(out_r, out_c);
    for &c in &cfg.center_levels {
        for &d in &cfg.surround_deltas {
            let center = &pyramid[c];
            let surround = resize_bilinear(&pyramid[c + d], center.rows(), center.cols());
            let diff = Matrix::from_fn(center.rows(), center.cols(), |r, col| {
                (center.get(r, col) - surround.get(r, col)).abs()
            });
            let promoted = promote_peaks(&diff, tiny);
            let resized = resize_bilinear(&promoted, out_r, out_c);
            for (a, b) in acc.as_mut_slice().iter_mut().zip(resized.as_slice()) {
                *a += b;
            }
        }
    }
    acc
}

/// Scales to `[0, 1]` by the maximum, then multiplies by `(1 - mean)²` so maps
/// with a few strong peaks outweigh uniformly active ones.
pub fn promote_peaks(map: &Matrix, tiny: f64) -> Matrix {
    let max = map.max();
    if !(max > tiny) {
        return Matrix::zeros(map.rows(), map.cols());
    }
    let normalized = map.map(|v| v / max);
    let weight = (1.0 - normalized.mean()).powi(2);
    normalized.map(|v| v * weight)
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Zero-sum difference of unit-mass Gaussians, padded to the surround width.
pub fn dog_kernel(center_sigma: f64, surround_sigma: f64) -> Vec<f64> {
    let surround = gaussian_kernel(surround_sigma);
    let center = gaussian_kernel(center_sigma);
    let offset = (surround.len() - center.len()) / 2;
    let mut k: Vec<f64> = surround.iter().map(|v| -v).collect();
    for (i, v) in center.iter().enumerate() {
        k[offset + i] += v;
    }
    k
}

/// First-derivative-of-Gaussian profile, odd, with unit mass on each side.
pub fn odd_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| -(x as f64) * (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let half: f64 = k.iter().filter(|v| **v > 0.0).sum();
    k.iter_mut().for_each(|v| *v /= half);
    k
}

/// Correlates rows with `row_kernel` (frequency axis) and columns with
/// `col_kernel` (time axis), replicating edges.
pub fn convolve_separable(input: &Matrix, row_kernel: &[f64], col_kernel: &[f64]) -> Matrix {
    let (rows, cols) = input.shape();
    let tr = (col_kernel.len() / 2) as isize;
    let mut tmp = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let src = input.row(r);
        for c in 0..cols {
            let mut acc = 0.0;
            for (j, w) in col_kernel.iter().enumerate() {
                let idx = (c as isize + j as isize - tr).clamp(0, cols as isize - 1) as usize;
                acc += w * src[idx];
            }
            tmp.set(r, c, acc);
        }
    }
    let fr = (row_kernel.len() / 2) as isize;
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for (j, w) in row_kernel.iter().enumerate() {
            let src_r = (r as isize + j as isize - fr).clamp(0, rows as isize - 1) as usize;
            let src = tmp.row(src_r);
            let dst = &mut out.as_mut_slice()[r * cols..(r + 1) * cols];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

const REDUCE_KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Blur-and-decimate pyramid; level `l+1` has `ceil(n/2)` rows and columns.
pub fn gaussian_pyramid(base: &Matrix, levels: usize) -> Vec<Matrix> {
    let mut pyramid = Vec::with_capacity(levels + 1);
    pyramid.push(base.clone());
    for _ in 0..levels {
        let prev = pyramid.last().unwrap();
        let blurred = convolve_separable(prev, &REDUCE_KERNEL, &REDUCE_KERNEL);
        let rows = prev.rows().div_ceil(2);
        let cols = prev.cols().div_ceil(2);
        pyramid.push(Matrix::from_fn(rows, cols, |r, c| blurred.get(2 * r, 2 * c)));
    }
    pyramid
}

/// Bilinear resize using pixel-center alignment with clamped borders.
pub fn resize_bilinear(src: &Matrix, rows: usize, cols: usize) -> Matrix {
    if src.shape() == (rows, cols) {
        return src.clone();
    }
    let axis = |dst: usize, n_src: usize, n_dst: usize| -> (usize, usize, f64) {
        let pos = ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5)
            .clamp(0.0, (n_src - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, pos - i0 as f64)
    };
    let col_idx: Vec<_> = (0..cols).map(|c| axis(c, src.cols(), cols)).collect();
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let (r0, r1, fr) = axis(r, src.rows(), rows);
        for (c, &(c0, c1, fc)) in col_idx.iter().enumerate() {
            let top = src.get(r0, c0) * (1.0 - fc) + src.get(r0, c1) * fc;
            let bottom = src.get(r1, c0) * (1.0 - fc) + src.get(r1, c1) * fc;
            out.set(r, c, top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Weighted skewness of index positions. Zero total mass or zero variance
/// yields 0.
pub fn marginal_skewness(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    let mean = weights
        .iter()
        .enumerate()
        .map(|(i, w)| i as f64 * w)
        .sum::<f64>()
        / total;
    let (mut m2, mut m3) = (0.0, 0.0);
    for (i, w) in weights.iter().enumerate() {
        let d = i as f64 - mean;
        m2 += w * d * d;
        m3 += w * d * d * d;
    }
    m2 /= total;
    m3 /= total;
    if m2 <= 1e-300 {
        return 0.0;
    }
    m3 / m2.powf(1.5)
}

pub const SUMMARY_STATS: [&str; 6] = [
    "peak",
    "mean",
    "freq_skew",
    "time_skew",
    "peak_time_s",
    "peak_freq_hz",
];

/// Feature key for a channel statistic, e.g. `salience_frequency_peak`.
pub fn summary_key(channel: &str, stat: &str) -> String {
    format!("salience_{channel}_{stat}")
}

/// All 18 summary keys in their canonical order.
pub fn summary_keys() -> Vec<String> {
    ["intensity", "frequency", "temporal"]
        .iter()
        .flat_map(|ch| SUMMARY_STATS.iter().map(move |st| summary_key(ch, st)))
        .collect()
}

/// Six statistics per channel: peak, mean, skewness of the frequency and time
/// marginals, and the time (s) and frequency (Hz) of the peak.
pub fn salience_summary(maps: &SalienceMaps) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (name, map) in maps.channels() {
        let (rows, cols) = map.shape();
        let freq_marginal: Vec<f64> = (0..rows).map(|r| map.row(r).iter().sum()).collect();
        let time_marginal: Vec<f64> = (0..cols)
            .map(|c| (0..rows).map(|r| map.get(r, c)).sum())
            .collect();
        let peak = map.max().max(0.0);
        let (pr, pc) = if peak > 0.0 { map.argmax() } else { (0, 0) };
        let values = [
            peak,
            map.mean(),
            marginal_skewness(&freq_marginal),
            marginal_skewness(&time_marginal),
            pc as f64 * maps.col_s,
            pr as f64 * maps.row_hz,
        ];
        for (stat, v) in SUMMARY_STATS.iter().zip(values) {
            out.insert(summary_key(name, stat), v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_bad_configs_rejected() {
        SalienceConfig::default().validate().unwrap();
        let deep = SalienceConfig {
            pyramid_levels: 5,
            ..Default::default()
        };
        assert!(matches!(deep.validate(), Err(SalienceError::Config(_))));
        let empty = SalienceConfig {
            center_levels: vec![],
            ..Default::default()
        };
        assert!(empty.validate().is_err());
        let squat = SalienceConfig {
            elongation: 0.5,
            ..Default::default()
        };
        assert!(squat.validate().is_err());
    }

    #[test]
    fn kernels_are_normalized() {
        let g = gaussian_kernel(2.0);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let d = dog_kernel(1.0, 4.0);
        assert!(d.iter().sum::<f64>().abs() < 1e-12);
        assert!(d[d.len() / 2] > 0.0);
        let o = odd_kernel(2.0);
        assert!(o.iter().sum::<f64>().abs() < 1e-12);
        let n = o.len();
        for i in 0..n {
            assert!((o[i] + o[n - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn pyramid_sizes_halve_with_ceiling() {
        let p = gaussian_pyramid(&Matrix::zeros(65, 100), 3);
        let shapes: Vec<_> = p.iter().map(Matrix::shape).collect();
        assert_eq!(shapes, vec![(65, 100), (33, 50), (17, 25), (9, 13)]);
    }

    #[test]
    fn zero_summary_is_all_zero() {
        let z = Matrix::zeros(16, 16);
        let maps = SalienceMaps {
            intensity: z.clone(),
            frequency: z.clone(),
            temporal: z,
            row_hz: 10.0,
            col_s: 0.1,
        };
        let s = salience_summary(&maps);
        assert_eq!(s.len(), 18);
        assert!(s.values().all(|&v| v == 0.0));
        assert_eq!(s.keys().cloned().collect::<Vec<_>>().len(), summary_keys().len());
    }

    #[test]
    fn single_cell_summary() {
        let mut m = Matrix::zeros(8, 10);
        m.set(3, 7, 2.0);
        let maps = SalienceMaps {
            intensity: m.clone(),
            frequency: m.clone(),
            temporal: m,
            row_hz: 100.0,
            col_s: 0.5,
        };
        let s = salience_summary(&maps);
        assert_eq!(s["salience_intensity_peak"], 2.0);
        assert!((s["salience_intensity_mean"] - 2.0 / 80.0).abs() < 1e-15);
        assert_eq!(s["salience_temporal_peak_time_s"], 3.5);
        assert_eq!(s["salience_temporal_peak_freq_hz"], 300.0);
        // point mass: zero variance rule
        assert_eq!(s["salience_frequency_freq_skew"], 0.0);
    }

    #[test]
    fn mirrored_two_peak_map_has_zero_frequency_skew() {
        let mut m = Matrix::zeros(20, 12);
        m.set(4, 3, 1.0);
        m.set(15, 3, 1.0);
        m.set(6, 9, 0.3);
        m.set(13, 9, 0.3);
        let maps = SalienceMaps {
            intensity: m.clone(),
            frequency: m.clone(),
            temporal: m,
            row_hz: 1.0,
            col_s: 1.0,
        };
        let s = salience_summary(&maps);
        assert!(s["salience_frequency_freq_skew"].abs() < 1e-9);
    }

    #[test]
    fn skewness_sign() {
        // long right tail
        assert!(marginal_skewness(&[5.0, 3.0, 1.0, 0.0, 0.0, 1.0]) > 0.0);
        assert!(marginal_skewness(&[1.0, 0.0, 0.0, 1.0, 3.0, 5.0]) < 0.0);
    }

    #[test]
    fn rejects_uncompressed_input() {
        let spec = Spectrogram {
            values: Matrix::zeros(64, 64),
            freq_bin_hz: 43.0,
            frame_hop_s: 0.01,
            window_len: 1024,
            log_compressed: false,
        };
        assert_eq!(
            salience_maps(&spec, &SalienceConfig::default()).unwrap_err(),
            SalienceError::NotCompressed
        );
    }
}
