//! Core frame, grid, and signal types shared across the modem and estimator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// OTFS frame parameters: an `M x N` delay-Doppler grid over bandwidth
/// `M * delta_f` with frame duration `N / delta_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Number of delay bins (M, also the subcarrier count).
    pub delay_bins: usize,
    /// Number of Doppler bins (N, also the time-slot count).
    pub doppler_bins: usize,
    /// Subcarrier spacing in Hz.
    pub delta_f: f64,
    /// Carrier frequency in Hz.
    pub carrier_hz: f64,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
}

impl FrameConfig {
    pub fn new(
        delay_bins: usize,
        doppler_bins: usize,
        delta_f: f64,
        carrier_hz: f64,
        cp_len: usize,
    ) -> Result<Self> {
        if delay_bins < 2 || doppler_bins < 2 {
            return Err(Error::InvalidArgument(
                "frame requires at least 2 delay and 2 Doppler bins".into(),
            ));
        }
        if delta_f <= 0.0 || carrier_hz <= 0.0 {
            return Err(Error::InvalidArgument(
                "delta_f and carrier frequency must be positive".into(),
            ));
        }
        Ok(Self {
            delay_bins,
            doppler_bins,
            delta_f,
            carrier_hz,
            cp_len,
        })
    }

    /// Signal bandwidth `B = M * delta_f`, equal to the sample rate.
    pub fn bandwidth(&self) -> f64 {
        self.delay_bins as f64 * self.delta_f
    }

    pub fn sample_rate(&self) -> f64 {
        self.bandwidth()
    }

    /// TF symbol duration `T = 1 / delta_f` in seconds.
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Samples per frame, excluding the cyclic prefix.
    pub fn frame_len(&self) -> usize {
        self.delay_bins * self.doppler_bins
    }

    /// Delay resolution `1 / B` in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / self.bandwidth()
    }

    /// Doppler resolution `B / (M N)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        self.bandwidth() / self.frame_len() as f64
    }
}

/// `M x N` complex delay-Doppler grid, indexed by (Doppler bin k, delay bin l).
#[derive(Debug, Clone, PartialEq)]
pub struct DDGrid {
    delay_bins: usize,
    doppler_bins: usize,
    /// Delay-major storage: entry (k, l) lives at `l * doppler_bins + k`.
    data: Vec<Complex64>,
}

impl DDGrid {
    pub fn zeros(delay_bins: usize, doppler_bins: usize) -> Self {
        Self {
            delay_bins,
            doppler_bins,
            data: vec![Complex64::ZERO; delay_bins * doppler_bins],
        }
    }

    pub fn from_data(delay_bins: usize, doppler_bins: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != delay_bins * doppler_bins {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {}x{} DD grid, got {}",
                delay_bins * doppler_bins,
                delay_bins,
                doppler_bins,
                data.len()
            )));
        }
        Ok(Self {
            delay_bins,
            doppler_bins,
            data,
        })
    }

    pub fn delay_bins(&self) -> usize {
        self.delay_bins
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_bins
    }

    #[inline]
    pub fn get(&self, doppler: usize, delay: usize) -> Complex64 {
        self.data[delay * self.doppler_bins + doppler]
    }

    #[inline]
    pub fn set(&mut self, doppler: usize, delay: usize, value: Complex64) {
        self.data[delay * self.doppler_bins + doppler] = value;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matches(&self, cfg: &FrameConfig) -> Result<()> {
        if self.delay_bins != cfg.delay_bins || self.doppler_bins != cfg.doppler_bins {
            return Err(Error::DimensionMismatch(format!(
                "grid is {}x{}, frame config expects {}x{}",
                self.delay_bins, self.doppler_bins, cfg.delay_bins, cfg.doppler_bins
            )));
        }
        Ok(())
    }

    /// Frobenius norm squared (total symbol energy).
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// `N x M` complex time-frequency grid, indexed by (time slot n, subcarrier m).
#[derive(Debug, Clone, PartialEq)]
pub struct TFGrid {
    doppler_bins: usize,
    delay_bins: usize,
    /// Row-major storage: entry (n, m) lives at `n * delay_bins + m`.
    data: Vec<Complex64>,
}

impl TFGrid {
    pub fn zeros(doppler_bins: usize, delay_bins: usize) -> Self {
        Self {
            doppler_bins,
            delay_bins,
            data: vec![Complex64::ZERO; doppler_bins * delay_bins],
        }
    }

    pub fn time_slots(&self) -> usize {
        self.doppler_bins
    }

    pub fn subcarriers(&self) -> usize {
        self.delay_bins
    }

    #[inline]
    pub fn get(&self, slot: usize, subcarrier: usize) -> Complex64 {
        self.data[slot * self.delay_bins + subcarrier]
    }

    #[inline]
    pub fn set(&mut self, slot: usize, subcarrier: usize, value: Complex64) {
        self.data[slot * self.delay_bins + subcarrier] = value;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matches(&self, cfg: &FrameConfig) -> Result<()> {
        if self.delay_bins != cfg.delay_bins || self.doppler_bins != cfg.doppler_bins {
            return Err(Error::DimensionMismatch(format!(
                "TF grid is {}x{}, frame config expects {}x{}",
                self.doppler_bins, self.delay_bins, cfg.doppler_bins, cfg.delay_bins
            )));
        }
        Ok(())
    }
}

/// Sampled baseband time signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Pilot placement: pilot symbol at `(k_p, l_p)` surrounded by a zero guard
/// region spanning `[k_p - k_max, k_p + k_max] x [l_p, l_p + l_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub k_p: usize,
    pub l_p: usize,
    pub k_max: usize,
    pub l_max: usize,
    pub pilot_amplitude: f64,
    pub data_power: f64,
}

impl PilotConfig {
    pub fn validate(&self, cfg: &FrameConfig) -> Result<()> {
        if self.k_p < self.k_max
            || self.k_p + self.k_max >= cfg.doppler_bins
            || self.l_p + self.l_max >= cfg.delay_bins
        {
            return Err(Error::GuardOutOfBounds);
        }
        if self.pilot_amplitude < 0.0 || self.data_power < 0.0 {
            return Err(Error::InvalidArgument(
                "pilot amplitude and data power must be nonnegative".into(),
            ));
        }
        if self.data_power > 0.0 && self.pilot_amplitude * self.pilot_amplitude < self.data_power {
            return Err(Error::InvalidArgument(
                "pilot power must be at least the per-symbol data power".into(),
            ));
        }
        Ok(())
    }

    /// True if `(k, l)` lies in the guard region (pilot cell included).
    pub fn in_guard(&self, k: usize, l: usize) -> bool {
        k + self.k_max >= self.k_p
            && k <= self.k_p + self.k_max
            && l >= self.l_p
            && l <= self.l_p + self.l_max
    }
}

/// Received guard region normalized by the pilot symbol, re-indexed so the
/// pilot sits at local Doppler offset 0, delay offset 0. Doppler offsets run
/// over `[-k_max, k_max]`, delay offsets over `[0, l_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPatch {
    k_max: usize,
    l_max: usize,
    /// Delay-major: offset (dk, dl) lives at `dl * (2*k_max+1) + (dk + k_max)`.
    data: Vec<Complex64>,
}

impl PilotPatch {
    pub fn zeros(k_max: usize, l_max: usize) -> Self {
        Self {
            k_max,
            l_max,
            data: vec![Complex64::ZERO; (2 * k_max + 1) * (l_max + 1)],
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn doppler_span(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn delay_span(&self) -> usize {
        self.l_max + 1
    }

    #[inline]
    fn index(&self, dk: i64, dl: usize) -> usize {
        debug_assert!(dk.unsigned_abs() as usize <= self.k_max && dl <= self.l_max);
        dl * self.doppler_span() + (dk + self.k_max as i64) as usize
    }

    #[inline]
    pub fn get(&self, dk: i64, dl: usize) -> Complex64 {
        self.data[self.index(dk, dl)]
    }

    #[inline]
    pub fn set(&mut self, dk: i64, dl: usize, value: Complex64) {
        let idx = self.index(dk, dl);
        self.data[idx] = value;
    }

    pub fn contains(&self, dk: i64, dl: i64) -> bool {
        dk.unsigned_abs() as usize <= self.k_max && dl >= 0 && dl as usize <= self.l_max
    }

    pub fn magnitude(&self, dk: i64, dl: usize) -> f64 {
        self.get(dk, dl).norm()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Iterator over (dk, dl, value).
    pub fn iter(&self) -> impl Iterator<Item = (i64, usize, Complex64)> + '_ {
        let span = self.doppler_span();
        let k_max = self.k_max as i64;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &v)| ((i % span) as i64 - k_max, i / span, v))
    }

    /// Scale every cell by a complex factor.
    pub fn scale(&mut self, factor: Complex64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn median_magnitude(&self) -> f64 {
        let mut mags: Vec<f64> = self.data.iter().map(|c| c.norm()).collect();
        mags.sort_by(|a, b| a.total_cmp(b));
        let n = mags.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            mags[n / 2]
        } else {
            0.5 * (mags[n / 2 - 1] + mags[n / 2])
        }
    }
}
