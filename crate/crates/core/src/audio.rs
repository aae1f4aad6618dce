//! Audio decoding and the magnitude-spectrogram front-end.
//!
//! Every downstream extractor consumes the [`Spectrogram`] produced here, so
//! the STFT parameters are fixed in one place: Hann window of 1024 samples,
//! hop 512, at 44.1 kHz.

use std::f64::consts::PI;
use std::io::{Cursor, Read, Write};
use std::sync::Arc;

use rustfft::{num_complex::Complex, Fft, FftPlanner};
use thiserror::Error;

use crate::grid::Matrix;

pub const TARGET_SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_WINDOW: usize = 1024;
pub const DEFAULT_HOP: usize = 512;
pub const LOG_EPSILON: f64 = 1e-10;
pub const DEFAULT_FLOOR_DB: f64 = -80.0;

const SPG_MAGIC: &[u8; 4] = b"SPG1";

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed audio file: {0}")]
    Decode(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("clip has {samples} samples, fewer than one {window}-sample window")]
    InsufficientAudio { samples: usize, window: usize },
    #[error("invalid STFT parameters: {0}")]
    InvalidParameters(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Decoded mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub id: String,
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, sample_rate: u32, samples: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            sample_rate,
            samples,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resample. Returns a clone when the rate already matches.
    pub fn resampled(&self, target_rate: u32) -> AudioClip {
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return self.clone();
        }
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let n_out = ((self.samples.len() as f64) / ratio).round().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..n_out)
            .map(|i| {
                let pos = i as f64 * ratio;
                let i0 = (pos.floor() as usize).min(last);
                let i1 = (i0 + 1).min(last);
                let frac = pos - i0 as f64;
                self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
            })
            .collect();
        AudioClip::new(self.id.clone(), target_rate, samples)
    }

    /// Encodes as 16-bit PCM mono WAV.
    pub fn to_wav_bytes(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut writer =
                hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav writer");
            for &s in &self.samples {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v).expect("in-memory write");
            }
            writer.finalize().expect("in-memory finalize");
        }
        cursor.into_inner()
    }
}

/// Decodes a RIFF/WAVE file (16/24-bit PCM or 32-bit float, 1–2 channels)
/// into a mono clip. Stereo is downmixed by channel mean.
pub fn decode_audio(id: impl Into<String>, bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound_error)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{} channels",
            spec.channels
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => collect_samples(reader.into_samples::<i16>(), |s| {
            s as f64 / 32768.0
        })?,
        (hound::SampleFormat::Int, 24) => collect_samples(reader.into_samples::<i32>(), |s| {
            s as f64 / 8_388_608.0
        })?,
        (hound::SampleFormat::Float, 32) => {
            collect_samples(reader.into_samples::<f32>(), |s| (s as f64).clamp(-1.0, 1.0))?
        }
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?}"
            )))
        }
    };
    let channels = spec.channels as usize;
    let samples: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if samples.is_empty() {
        return Err(AudioError::Decode("no audio frames".into()));
    }
    Ok(AudioClip::new(id, spec.sample_rate, samples))
}

fn collect_samples<T, I>(iter: I, scale: impl Fn(T) -> f64) -> Result<Vec<f64>, AudioError>
where
    I: Iterator<Item = hound::Result<T>>,
{
    iter.map(|s| s.map(&scale).map_err(map_hound_error)).collect()
}

fn map_hound_error(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => AudioError::UnsupportedFormat("codec not supported".into()),
        hound::Error::IoError(io) => AudioError::Decode(io.to_string()),
        other => AudioError::Decode(other.to_string()),
    }
}

/// Magnitude spectrogram, `values` is `[n_freq_bins × n_frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Matrix,
    pub freq_bin_hz: f64,
    pub frame_hop_s: f64,
    pub window_len: usize,
    pub log_compressed: bool,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.freq_bin_hz
    }

    pub fn sample_rate(&self) -> f64 {
        self.freq_bin_hz * self.window_len as f64
    }

    pub fn nyquist(&self) -> f64 {
        self.sample_rate() / 2.0
    }

    /// Writes the binary dump: `SPG1`, u32 rows, u32 cols, u32 flags (bit 0:
    /// log compressed), then row-major little-endian f32 values.
    pub fn write_spg<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SPG_MAGIC)?;
        w.write_all(&(self.values.rows() as u32).to_le_bytes())?;
        w.write_all(&(self.values.cols() as u32).to_le_bytes())?;
        w.write_all(&(self.log_compressed as u32).to_le_bytes())?;
        for &v in self.values.as_slice() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }
}

/// Matrix read back from an `SPG1` dump, with its log-compressed flag.
pub fn read_spg<R: Read>(mut r: R) -> Result<(Matrix, bool), AudioError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[0..4] != SPG_MAGIC {
        return Err(AudioError::Decode("bad SPG1 magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
    let (rows, cols, flags) = (word(4), word(8), word(12));
    let mut buf = vec![0u8; rows * cols * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok((Matrix::from_vec(rows, cols, data), flags & 1 == 1))
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Reusable forward real-input magnitude FFT with a fixed window.
pub(crate) struct MagnitudeFft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl MagnitudeFft {
    pub(crate) fn new(window: Vec<f64>) -> Self {
        let len = window.len();
        let fft = FftPlanner::new().plan_fft_forward(len);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            window,
            buf: vec![Complex::default(); len],
            scratch,
        }
    }

    /// Windowed magnitude of `frame` (zero-padded if short), bins `0..=len/2`.
    pub(crate) fn magnitudes(&mut self, frame: &[f64], out: &mut [f64]) {
        for (i, slot) in self.buf.iter_mut().enumerate() {
            let x = frame.get(i).copied().unwrap_or(0.0);
            *slot = Complex::new(x * self.window[i], 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.norm();
        }
    }
}

/// Hann-windowed STFT magnitudes. Frames start at 0 and advance by `hop`
/// without padding, so there are `1 + (len - window_len) / hop` of them.
pub fn stft_magnitude(
    clip: &AudioClip,
    window_len: usize,
    hop: usize,
) -> Result<Spectrogram, AudioError> {
    if !window_len.is_power_of_two() || window_len < 2 {
        return Err(AudioError::InvalidParameters(format!(
            "window length {window_len} is not a power of two"
        )));
    }
    if hop == 0 || hop > window_len {
        return Err(AudioError::InvalidParameters(format!(
            "hop {hop} outside 1..={window_len}"
        )));
    }
    let n = clip.samples.len();
    if n < window_len {
        return Err(AudioError::InsufficientAudio {
            samples: n,
            window: window_len,
        });
    }
    let n_bins = window_len / 2 + 1;
    let n_frames = 1 + (n - window_len) / hop;
    let mut fft = MagnitudeFft::new(hann_window(window_len));
    let mut column = vec![0.0; n_bins];
    let mut values = Matrix::zeros(n_bins, n_frames);
    for t in 0..n_frames {
        let start = t * hop;
        fft.magnitudes(&clip.samples[start..start + window_len], &mut column);
        for (k, &m) in column.iter().enumerate() {
            values.set(k, t, m);
        }
    }
    Ok(Spectrogram {
        values,
        freq_bin_hz: clip.sample_rate as f64 / window_len as f64,
        frame_hop_s: hop as f64 / clip.sample_rate as f64,
        window_len,
        log_compressed: false,
    })
}

/// `20·log10(max(v, 1e-10))`.
pub fn to_db(v: f64) -> f64 {
    20.0 * v.max(LOG_EPSILON).log10()
}

/// Converts magnitudes to dB, clamps below at `floor_db`, and min-max rescales
/// to `[0, 1]`. A constant matrix rescales to all zeros.
pub fn log_compress(spec: &Spectrogram, floor_db: f64) -> Spectrogram {
    let db = spec.values.map(|v| to_db(v).max(floor_db));
    let (lo, hi) = (db.min(), db.max());
    let range = hi - lo;
    let values = if range > 0.0 {
        db.map(|v| ((v - lo) / range).clamp(0.0, 1.0))
    } else {
        Matrix::zeros(db.rows(), db.cols())
    };
    Spectrogram {
        values,
        log_compressed: true,
        ..spec.clone()
    }
}
