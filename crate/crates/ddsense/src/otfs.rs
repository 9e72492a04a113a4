//! OTFS modulation and demodulation with rectangular pulse shaping.
//!
//! The chain is DD grid -> ISFFT -> TF grid -> per-slot inverse DFT ->
//! time samples (plus cyclic prefix), and its exact inverse on receive.
//! All four transforms are unitary, so frame energy is preserved end to end.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft;
use crate::types::{DDGrid, FrameConfig, PilotConfig, TFGrid, TimeSignal};

/// Inverse symplectic finite Fourier transform.
///
/// `X_tf[n,m] = (1/sqrt(MN)) sum_{k,l} X_dd[k,l] exp(-j2pi(ml/M - nk/N))`.
pub fn isfft(dd: &DDGrid, cfg: &FrameConfig) -> Result<TFGrid> {
    dd.matches(cfg)?;
    let m_bins = cfg.delay_bins;
    let n_bins = cfg.doppler_bins;
    let scale = 1.0 / ((m_bins * n_bins) as f64).sqrt();

    // Forward DFT along the delay axis: G[k,m] = sum_l X[k,l] e^{-j2pi ml/M}.
    let mut stage = vec![Complex64::ZERO; m_bins * n_bins];
    let mut row = vec![Complex64::ZERO; m_bins];
    for k in 0..n_bins {
        for l in 0..m_bins {
            row[l] = dd.get(k, l);
        }
        fft::forward(&mut row);
        for m in 0..m_bins {
            stage[k * m_bins + m] = row[m];
        }
    }

    // Unscaled inverse DFT along the Doppler axis: sum_k G[k,m] e^{+j2pi nk/N}.
    let mut tf = TFGrid::zeros(n_bins, m_bins);
    let mut col = vec![Complex64::ZERO; n_bins];
    for m in 0..m_bins {
        for k in 0..n_bins {
            col[k] = stage[k * m_bins + m];
        }
        fft::inverse(&mut col);
        for n in 0..n_bins {
            tf.set(n, m, col[n] * scale);
        }
    }
    Ok(tf)
}

/// Symplectic finite Fourier transform; exact inverse of [`isfft`].
pub fn sfft(tf: &TFGrid, cfg: &FrameConfig) -> Result<DDGrid> {
    tf.matches(cfg)?;
    let m_bins = cfg.delay_bins;
    let n_bins = cfg.doppler_bins;
    let scale = 1.0 / ((m_bins * n_bins) as f64).sqrt();

    // Forward DFT along the slot axis: G[k,m] = sum_n Y[n,m] e^{-j2pi nk/N}.
    let mut stage = vec![Complex64::ZERO; m_bins * n_bins];
    let mut col = vec![Complex64::ZERO; n_bins];
    for m in 0..m_bins {
        for n in 0..n_bins {
            col[n] = tf.get(n, m);
        }
        fft::forward(&mut col);
        for k in 0..n_bins {
            stage[k * m_bins + m] = col[k];
        }
    }

    // Unscaled inverse DFT along the subcarrier axis: sum_m G[k,m] e^{+j2pi ml/M}.
    let mut dd = DDGrid::zeros(m_bins, n_bins);
    let mut row = vec![Complex64::ZERO; m_bins];
    for k in 0..n_bins {
        row.copy_from_slice(&stage[k * m_bins..(k + 1) * m_bins]);
        fft::inverse(&mut row);
        for l in 0..m_bins {
            dd.set(k, l, row[l] * scale);
        }
    }
    Ok(dd)
}

/// Heisenberg transform with rectangular transmit pulses: each TF slot maps
/// to a unitary M-point inverse DFT block, and a cyclic prefix (copy of the
/// frame tail) is prepended.
pub fn heisenberg(tf: &TFGrid, cfg: &FrameConfig) -> Result<TimeSignal> {
    tf.matches(cfg)?;
    let m_bins = cfg.delay_bins;
    let n_bins = cfg.doppler_bins;
    let scale = 1.0 / (m_bins as f64).sqrt();

    let mut frame = Vec::with_capacity(cfg.frame_len());
    let mut block = vec![Complex64::ZERO; m_bins];
    for n in 0..n_bins {
        for m in 0..m_bins {
            block[m] = tf.get(n, m);
        }
        fft::inverse(&mut block);
        frame.extend(block.iter().map(|&v| v * scale));
    }

    let mut samples = Vec::with_capacity(cfg.cp_len + frame.len());
    samples.extend_from_slice(&frame[frame.len() - cfg.cp_len..]);
    samples.extend_from_slice(&frame);
    Ok(TimeSignal::new(samples, cfg.sample_rate()))
}

/// Discrete Wigner transform (matched filter with rectangular receive pulse):
/// per-slot unitary M-point forward DFT. Expects the cyclic prefix already
/// stripped, i.e. exactly `M * N` samples.
pub fn wigner(sig: &TimeSignal, cfg: &FrameConfig) -> Result<TFGrid> {
    if sig.len() != cfg.frame_len() {
        return Err(Error::DimensionMismatch(format!(
            "wigner expects {} CP-stripped samples, got {}",
            cfg.frame_len(),
            sig.len()
        )));
    }
    let m_bins = cfg.delay_bins;
    let n_bins = cfg.doppler_bins;
    let scale = 1.0 / (m_bins as f64).sqrt();

    let mut tf = TFGrid::zeros(n_bins, m_bins);
    let mut block = vec![Complex64::ZERO; m_bins];
    for n in 0..n_bins {
        block.copy_from_slice(&sig.samples[n * m_bins..(n + 1) * m_bins]);
        fft::forward(&mut block);
        for m in 0..m_bins {
            tf.set(n, m, block[m] * scale);
        }
    }
    Ok(tf)
}

/// Strip the cyclic prefix from a full transmit frame.
pub fn strip_cp(sig: &TimeSignal, cfg: &FrameConfig) -> Result<TimeSignal> {
    if sig.len() != cfg.frame_len() + cfg.cp_len {
        return Err(Error::DimensionMismatch(format!(
            "expected {} samples (frame + CP), got {}",
            cfg.frame_len() + cfg.cp_len,
            sig.len()
        )));
    }
    Ok(TimeSignal::new(
        sig.samples[cfg.cp_len..].to_vec(),
        sig.sample_rate,
    ))
}

/// Full OTFS modulation: ISFFT, Heisenberg transform, CP insertion.
pub fn modulate(dd: &DDGrid, cfg: &FrameConfig) -> Result<TimeSignal> {
    heisenberg(&isfft(dd, cfg)?, cfg)
}

/// Full OTFS demodulation: CP strip, Wigner transform, SFFT.
pub fn demodulate(sig: &TimeSignal, cfg: &FrameConfig) -> Result<DDGrid> {
    sfft(&wigner(&strip_cp(sig, cfg)?, cfg)?, cfg)
}

/// Build a pilot frame: pilot symbol at `(k_p, l_p)`, zeros over the guard
/// region, seeded unit-power QPSK data symbols (scaled by `data_power`)
/// everywhere else.
pub fn place_pilot(cfg: &FrameConfig, pc: &PilotConfig, payload_seed: u64) -> Result<DDGrid> {
    pc.validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(payload_seed);
    let amp = pc.data_power.sqrt() * std::f64::consts::FRAC_1_SQRT_2;
    let mut dd = DDGrid::zeros(cfg.delay_bins, cfg.doppler_bins);
    for k in 0..cfg.doppler_bins {
        for l in 0..cfg.delay_bins {
            if pc.in_guard(k, l) {
                continue;
            }
            let re = if rng.gen::<bool>() { amp } else { -amp };
            let im = if rng.gen::<bool>() { amp } else { -amp };
            dd.set(k, l, Complex64::new(re, im));
        }
    }
    dd.set(pc.k_p, pc.l_p, Complex64::new(pc.pilot_amplitude, 0.0));
    Ok(dd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg(m: usize, n: usize) -> FrameConfig {
        FrameConfig::new(m, n, 15e3, 5.6e9, 8).unwrap()
    }

    fn random_grid(m: usize, n: usize, seed: u64) -> DDGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dd = DDGrid::zeros(m, n);
        for k in 0..n {
            for l in 0..m {
                dd.set(
                    k,
                    l,
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                );
            }
        }
        dd
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    /// Independent brute-force ISFFT used as the oracle for the FFT path.
    fn isfft_naive(dd: &DDGrid, cfg: &FrameConfig) -> TFGrid {
        let (m_bins, n_bins) = (cfg.delay_bins, cfg.doppler_bins);
        let scale = 1.0 / ((m_bins * n_bins) as f64).sqrt();
        let mut tf = TFGrid::zeros(n_bins, m_bins);
        for n in 0..n_bins {
            for m in 0..m_bins {
                let mut acc = Complex64::ZERO;
                for k in 0..n_bins {
                    for l in 0..m_bins {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * (m as f64 * l as f64 / m_bins as f64
                                - n as f64 * k as f64 / n_bins as f64);
                        acc += dd.get(k, l) * Complex64::from_polar(1.0, phase);
                    }
                }
                tf.set(n, m, acc * scale);
            }
        }
        tf
    }

    #[test]
    fn isfft_matches_direct_double_sum() {
        let cfg = cfg(8, 6);
        let dd = random_grid(8, 6, 1);
        let fast = isfft(&dd, &cfg).unwrap();
        let slow = isfft_naive(&dd, &cfg);
        assert!(rel_err(fast.data(), slow.data()) < 1e-12);
    }

    #[test]
    fn isfft_of_zeros_is_zero() {
        let cfg = cfg(8, 8);
        let tf = isfft(&DDGrid::zeros(8, 8), &cfg).unwrap();
        assert!(tf.data().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn isfft_of_impulse_is_flat() {
        let cfg = cfg(8, 4);
        let mut dd = DDGrid::zeros(8, 4);
        dd.set(0, 0, Complex64::new(1.0, 0.0));
        let tf = isfft(&dd, &cfg).unwrap();
        let expect = 1.0 / (32f64).sqrt();
        for &v in tf.data() {
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn sfft_of_flat_grid_is_impulse() {
        let cfg = cfg(8, 4);
        let mut tf = TFGrid::zeros(4, 8);
        let val = 1.0 / (32f64).sqrt();
        for n in 0..4 {
            for m in 0..8 {
                tf.set(n, m, Complex64::new(val, 0.0));
            }
        }
        let dd = sfft(&tf, &cfg).unwrap();
        assert!((dd.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        let off: f64 = dd.data().iter().map(|c| c.norm_sqr()).sum::<f64>() - dd.get(0, 0).norm_sqr();
        assert!(off.abs() < 1e-20);
    }

    #[test]
    fn sfft_isfft_inverse_pair() {
        let cfg8 = cfg(8, 8);
        let dd = random_grid(8, 8, 2);
        let back = sfft(&isfft(&dd, &cfg8).unwrap(), &cfg8).unwrap();
        assert!(rel_err(back.data(), dd.data()) < 1e-12);

        let cfg164 = cfg(16, 4);
        let dd = random_grid(16, 4, 3);
        let tf = isfft(&dd, &cfg164).unwrap();
        let again = isfft(&sfft(&tf, &cfg164).unwrap(), &cfg164).unwrap();
        assert!(rel_err(again.data(), tf.data()) < 1e-12);
    }

    #[test]
    fn inverse_pair_all_sizes_2_to_64() {
        for &(m, n) in &[(2usize, 2usize), (3, 5), (7, 9), (12, 10), (31, 17), (64, 64)] {
            let c = cfg(m, n);
            let dd = random_grid(m, n, (m * 100 + n) as u64);
            let back = sfft(&isfft(&dd, &c).unwrap(), &c).unwrap();
            assert!(rel_err(back.data(), dd.data()) < 1e-12, "size {m}x{n}");
            let norm_in = dd.energy().sqrt();
            let norm_tf = isfft(&dd, &c).unwrap().data().iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm_in - norm_tf).abs() / norm_in < 1e-12, "norm {m}x{n}");
        }
    }

    #[test]
    fn heisenberg_zero_and_tone() {
        let c = cfg(8, 4);
        let sig = heisenberg(&TFGrid::zeros(4, 8), &c).unwrap();
        assert_eq!(sig.len(), 32 + 8);
        assert!(sig.energy() == 0.0);

        // Single tone on subcarrier m0 in slot 0 -> complex exponential block.
        let mut tf = TFGrid::zeros(4, 8);
        let m0 = 3;
        tf.set(0, m0, Complex64::new(1.0, 0.0));
        let sig = heisenberg(&tf, &c).unwrap();
        let body = &sig.samples[c.cp_len..];
        for i in 0..8 {
            let expect = Complex64::from_polar(
                1.0 / (8f64).sqrt(),
                2.0 * std::f64::consts::PI * m0 as f64 * i as f64 / 8.0,
            );
            assert!((body[i] - expect).norm() < 1e-14);
        }
        // Remaining slots are silent.
        assert!(body[8..].iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn wigner_heisenberg_round_trip() {
        let c = cfg(16, 8);
        let dd = random_grid(16, 8, 4);
        let tf = isfft(&dd, &c).unwrap();
        let sig = heisenberg(&tf, &c).unwrap();
        let back = wigner(&strip_cp(&sig, &c).unwrap(), &c).unwrap();
        assert!(rel_err(back.data(), tf.data()) < 1e-12);
    }

    #[test]
    fn modulate_demodulate_identity_and_energy() {
        let c = cfg(16, 16);
        let dd = random_grid(16, 16, 5);
        let sig = modulate(&dd, &c).unwrap();
        let back = demodulate(&sig, &c).unwrap();
        assert!(rel_err(back.data(), dd.data()) < 1e-10);
        let body_energy: f64 = sig.samples[c.cp_len..].iter().map(|v| v.norm_sqr()).sum();
        assert!((body_energy - dd.energy()).abs() / dd.energy() < 1e-10);

        let zero = modulate(&DDGrid::zeros(16, 16), &c).unwrap();
        assert!(zero.energy() == 0.0);
    }

    #[test]
    fn modulate_is_linear() {
        let c = cfg(8, 8);
        let x = random_grid(8, 8, 6);
        let y = random_grid(8, 8, 7);
        let (a, b) = (Complex64::new(0.7, -0.3), Complex64::new(-1.2, 0.4));
        let mut combo = DDGrid::zeros(8, 8);
        for k in 0..8 {
            for l in 0..8 {
                combo.set(k, l, a * x.get(k, l) + b * y.get(k, l));
            }
        }
        let lhs = modulate(&combo, &c).unwrap();
        let sx = modulate(&x, &c).unwrap();
        let sy = modulate(&y, &c).unwrap();
        let rhs: Vec<Complex64> = sx
            .samples
            .iter()
            .zip(&sy.samples)
            .map(|(u, v)| a * u + b * v)
            .collect();
        assert!(rel_err(&lhs.samples, &rhs) < 1e-12);
    }

    #[test]
    fn pilot_frame_guard_support() {
        let c = FrameConfig::new(64, 64, 15e3, 5.6e9, 16).unwrap();
        let pc = PilotConfig {
            k_p: 32,
            l_p: 32,
            k_max: 16,
            l_max: 16,
            pilot_amplitude: 31.6,
            data_power: 1.0,
        };
        let dd = place_pilot(&c, &pc, 42).unwrap();
        let mut nonzero_guard = 0;
        for k in 0..64 {
            for l in 0..64 {
                let v = dd.get(k, l);
                if pc.in_guard(k, l) {
                    if v.norm() > 0.0 {
                        nonzero_guard += 1;
                        assert_eq!((k, l), (32, 32));
                        assert!((v.re - 31.6).abs() < 1e-12 && v.im == 0.0);
                    }
                } else {
                    // QPSK data symbol of the configured power.
                    assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
                }
            }
        }
        assert_eq!(nonzero_guard, 1);
    }

    #[test]
    fn pilot_frame_degenerate_guard_and_determinism() {
        let c = cfg(16, 16);
        let pc = PilotConfig {
            k_p: 8,
            l_p: 8,
            k_max: 0,
            l_max: 0,
            pilot_amplitude: 4.0,
            data_power: 1.0,
        };
        let a = place_pilot(&c, &pc, 9).unwrap();
        let b = place_pilot(&c, &pc, 9).unwrap();
        assert_eq!(a, b);
        // Only the pilot cell is reserved.
        let zeros = a.data().iter().filter(|v| v.norm() == 0.0).count();
        assert_eq!(zeros, 0);
        assert!((a.get(8, 8).re - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pilot_guard_out_of_bounds_rejected() {
        let c = cfg(16, 16);
        let pc = PilotConfig {
            k_p: 2,
            l_p: 8,
            k_max: 4,
            l_max: 4,
            pilot_amplitude: 4.0,
            data_power: 1.0,
        };
        assert!(matches!(
            place_pilot(&c, &pc, 0),
            Err(Error::GuardOutOfBounds)
        ));
    }
}
