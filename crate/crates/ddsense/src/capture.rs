//! Frame synchronization: pseudorandom preamble, FFT cross-correlation over
//! long captures, constant-false-alarm-rate detection, and segmentation.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft;

/// Detected frame: sample index where the preamble begins and the
/// correlation magnitude at that lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameIndex {
    pub start: usize,
    pub score: f64,
}

/// Detection diagnostics alongside the accepted frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub frames: Vec<FrameIndex>,
    pub sigma: f64,
    pub threshold: f64,
}

/// Unit-power QPSK preamble, reproducible from the seed.
pub fn generate_preamble(len: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re = if rng.gen::<bool>() { scale } else { -scale };
            let im = if rng.gen::<bool>() { scale } else { -scale };
            Complex64::new(re, im)
        })
        .collect()
}

/// Cross-correlation magnitudes `|sum_n conj(t[n]) x[l+n]|` for lags
/// `0..=len(x)-len(t)`, computed block-wise with overlap-save FFTs.
pub fn correlate(signal: &[Complex64], template: &[Complex64]) -> Result<Vec<f64>> {
    let tlen = template.len();
    if tlen == 0 {
        return Err(Error::InvalidArgument("empty correlation template".into()));
    }
    if signal.len() < tlen {
        return Err(Error::InvalidArgument(
            "signal shorter than the template".into(),
        ));
    }
    let n_lags = signal.len() - tlen + 1;
    let fft_len = (8 * tlen).next_power_of_two().max(1 << 12);
    let step = fft_len - tlen + 1;

    let mut t_freq = template.to_vec();
    t_freq.resize(fft_len, Complex64::new(0.0, 0.0));
    fft::forward(&mut t_freq);

    let mut out = Vec::with_capacity(n_lags);
    let mut block = vec![Complex64::new(0.0, 0.0); fft_len];
    let mut start = 0;
    while start < n_lags {
        let avail = (signal.len() - start).min(fft_len);
        block[..avail].copy_from_slice(&signal[start..start + avail]);
        block[avail..].fill(Complex64::new(0.0, 0.0));
        fft::forward(&mut block);
        for (b, t) in block.iter_mut().zip(&t_freq) {
            *b *= t.conj();
        }
        fft::inverse_scaled(&mut block);
        let take = step.min(n_lags - start);
        out.extend(block[..take].iter().map(|c| c.norm()));
        start += step;
    }
    Ok(out)
}

/// Rayleigh noise scale from the median of the correlation magnitudes and
/// the threshold giving per-lag false-alarm probability `p_fa`.
pub fn cfar_threshold(corr: &[f64], p_fa: f64) -> Result<(f64, f64)> {
    if corr.is_empty() {
        return Err(Error::InvalidArgument("empty correlation".into()));
    }
    if !(0.0..1.0).contains(&p_fa) || p_fa == 0.0 {
        return Err(Error::InvalidArgument(
            "false-alarm probability must lie in (0, 1)".into(),
        ));
    }
    let mut sorted: Vec<f64> = corr.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let sigma = median / (2.0 * std::f64::consts::LN_2).sqrt();
    let threshold = sigma * (-2.0 * p_fa.ln()).sqrt();
    Ok((sigma, threshold))
}

/// Detect preamble starts in a capture. Peaks above the CFAR threshold are
/// accepted greedily by score; later candidates closer than
/// `min_separation` samples to an accepted peak are discarded.
pub fn detect_frames(
    signal: &[Complex64],
    preamble: &[Complex64],
    p_fa: f64,
    min_separation: usize,
) -> Result<DetectionReport> {
    if signal.is_empty() {
        return Ok(DetectionReport {
            frames: Vec::new(),
            sigma: 0.0,
            threshold: f64::INFINITY,
        });
    }
    let corr = correlate(signal, preamble)?;
    let (sigma, threshold) = cfar_threshold(&corr, p_fa)?;

    let mut candidates: Vec<FrameIndex> = corr
        .iter()
        .enumerate()
        .filter(|&(i, &v)| {
            v > threshold
                && (i == 0 || corr[i - 1] <= v)
                && (i + 1 == corr.len() || v > corr[i + 1])
        })
        .map(|(i, &v)| FrameIndex { start: i, score: v })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.start.cmp(&b.start))
    });

    let mut accepted: Vec<FrameIndex> = Vec::new();
    for c in candidates {
        if accepted
            .iter()
            .all(|a| a.start.abs_diff(c.start) >= min_separation)
        {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|f| f.start);
    Ok(DetectionReport {
        frames: accepted,
        sigma,
        threshold,
    })
}

/// Extract `frame_len` payload samples following each detected preamble;
/// frames truncated by the end of the capture are skipped.
pub fn segment_frames(
    signal: &[Complex64],
    frames: &[FrameIndex],
    preamble_len: usize,
    frame_len: usize,
) -> Vec<Vec<Complex64>> {
    frames
        .iter()
        .filter_map(|f| {
            let begin = f.start + preamble_len;
            let end = begin + frame_len;
            signal.get(begin..end).map(|s| s.to_vec())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn awgn(len: usize, sigma: f64, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, sigma / std::f64::consts::SQRT_2).unwrap();
        (0..len)
            .map(|_| Complex64::new(dist.sample(&mut rng), dist.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn preamble_is_unit_power_and_deterministic() {
        let p = generate_preamble(256, 7);
        assert_eq!(p, generate_preamble(256, 7));
        assert_ne!(p, generate_preamble(256, 8));
        for s in &p {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn correlate_matches_naive() {
        let x = awgn(700, 1.0, 1);
        let t = generate_preamble(64, 2);
        let fast = correlate(&x, &t).unwrap();
        assert_eq!(fast.len(), 700 - 64 + 1);
        for (l, &f) in fast.iter().enumerate() {
            let naive: Complex64 = t
                .iter()
                .enumerate()
                .map(|(n, tn)| tn.conj() * x[l + n])
                .sum();
            assert!((f - naive.norm()).abs() < 1e-9 * (1.0 + naive.norm()));
        }
    }

    #[test]
    fn correlate_peak_at_planted_offset() {
        let t = generate_preamble(128, 3);
        let mut x = awgn(4096, 0.1, 4);
        for (n, tn) in t.iter().enumerate() {
            x[1000 + n] += tn;
        }
        let corr = correlate(&x, &t).unwrap();
        let argmax = corr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 1000);
    }

    #[test]
    fn cfar_false_alarm_rate_near_nominal() {
        // Pure noise: the empirical exceedance rate should sit close to p_fa.
        let t = generate_preamble(64, 5);
        let x = awgn(400_000, 1.0, 6);
        let corr = correlate(&x, &t).unwrap();
        let p_fa = 1e-3;
        let (_, thr) = cfar_threshold(&corr, p_fa).unwrap();
        let hits = corr.iter().filter(|&&v| v > thr).count();
        let rate = hits as f64 / corr.len() as f64;
        assert!(
            rate > p_fa / 5.0 && rate < p_fa * 5.0,
            "false-alarm rate {rate} vs nominal {p_fa}"
        );
    }

    #[test]
    fn cfar_sigma_matches_noise_scale() {
        // |corr| over noise is Rayleigh with scale sigma_n * ||t||.
        let t = generate_preamble(64, 9);
        let x = awgn(200_000, 1.0, 10);
        let corr = correlate(&x, &t).unwrap();
        let (sigma, _) = cfar_threshold(&corr, 1e-3).unwrap();
        let expected = (64.0f64).sqrt() / std::f64::consts::SQRT_2;
        assert!(
            (sigma - expected).abs() < 0.05 * expected,
            "sigma {sigma} vs expected {expected}"
        );
    }

    #[test]
    fn detect_multiple_frames_with_separation() {
        let t = generate_preamble(128, 11);
        let mut x = awgn(20_000, 0.05, 12);
        let starts = [500usize, 5_000, 9_500, 14_000];
        for &s in &starts {
            for (n, tn) in t.iter().enumerate() {
                x[s + n] += tn * 2.0;
            }
        }
        let report = detect_frames(&x, &t, 1e-5, 1_000).unwrap();
        let found: Vec<usize> = report.frames.iter().map(|f| f.start).collect();
        assert_eq!(found.len(), starts.len(), "frames: {found:?}");
        for (&f, &s) in found.iter().zip(&starts) {
            assert!(f.abs_diff(s) <= 1, "found {f}, planted {s}");
        }
    }

    #[test]
    fn min_separation_suppresses_sidelobes() {
        let t = generate_preamble(128, 13);
        let mut x = awgn(8_000, 0.02, 14);
        for (n, tn) in t.iter().enumerate() {
            x[2_000 + n] += tn * 3.0;
        }
        let report = detect_frames(&x, &t, 1e-4, 500).unwrap();
        assert_eq!(report.frames.len(), 1);
        assert!(report.frames[0].start.abs_diff(2_000) <= 1);
    }

    #[test]
    fn segment_skips_truncated_frames() {
        let t = generate_preamble(16, 15);
        let mut x = awgn(1_000, 0.01, 16);
        for (n, tn) in t.iter().enumerate() {
            x[100 + n] += tn * 3.0;
            x[960 + n] += tn * 3.0; // payload would run past the capture
        }
        let report = detect_frames(&x, &t, 1e-4, 100).unwrap();
        let frames = segment_frames(&x, &report.frames, 16, 200);
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].len(), 200);
        assert_eq!(frames[0][0], x[100 + 16]);
    }

    #[test]
    fn preamble_autocorrelation_sidelobes() {
        // Peak-to-sidelobe ratio of the length-512 preamble is >= 10 dB.
        let t = generate_preamble(512, 21);
        let mut padded = vec![Complex64::new(0.0, 0.0); 512];
        padded.extend_from_slice(&t);
        padded.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(512));
        let corr = correlate(&padded, &t).unwrap();
        let peak = corr[512];
        let sidelobe = corr
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 512)
            .map(|(_, &v)| v)
            .fold(0.0f64, f64::max);
        let psl_db = 20.0 * (peak / sidelobe).log10();
        assert!(psl_db >= 10.0, "peak-to-sidelobe {psl_db:.1} dB");
    }

    #[test]
    fn empty_capture_gives_empty_index() {
        let t = generate_preamble(16, 22);
        let report = detect_frames(&[], &t, 1e-5, 10).unwrap();
        assert!(report.frames.is_empty());
    }

    #[test]
    fn detection_invariant_to_global_phase() {
        let t = generate_preamble(128, 23);
        let mut x = awgn(8_000, 0.05, 24);
        for (n, tn) in t.iter().enumerate() {
            x[3_000 + n] += tn * 2.0;
        }
        let rot = Complex64::from_polar(1.0, 1.234);
        let x_rot: Vec<Complex64> = x.iter().map(|s| s * rot).collect();
        let a = detect_frames(&x, &t, 1e-5, 500).unwrap();
        let b = detect_frames(&x_rot, &t, 1e-5, 500).unwrap();
        let sa: Vec<usize> = a.frames.iter().map(|f| f.start).collect();
        let sb: Vec<usize> = b.frames.iter().map(|f| f.start).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn rejects_bad_arguments() {
        let t = generate_preamble(16, 17);
        assert!(correlate(&t[..8], &t).is_err());
        assert!(correlate(&t, &[]).is_err());
        assert!(cfar_threshold(&[1.0], 0.0).is_err());
        assert!(cfar_threshold(&[1.0], 1.0).is_err());
        assert!(cfar_threshold(&[], 0.5).is_err());
    }
}
