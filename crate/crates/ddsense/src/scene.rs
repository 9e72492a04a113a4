//! Bistatic sensing geometry: scene definition, forward measurement
//! synthesis with Gaussian errors, and the LoS/NLoS coupling-angle
//! diagnostic.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::PathEstimate;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sensing scenario: fixed receiver at the origin, a mobile transmitter
/// sampled at discrete instants, and one static target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub tx_positions: Vec<Vector2<f64>>,
    pub tx_velocities: Vec<Vector2<f64>>,
    pub target: Vector2<f64>,
    pub carrier_hz: f64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.tx_positions.len() != self.tx_velocities.len() {
            return Err(Error::DimensionMismatch(
                "tx position and velocity counts differ".into(),
            ));
        }
        if self.tx_positions.len() < 3 {
            return Err(Error::InsufficientMeasurements {
                got: self.tx_positions.len(),
                need: 3,
            });
        }
        if self.target.norm() == 0.0 {
            return Err(Error::DegenerateGeometry("target at the receiver".into()));
        }
        for s in &self.tx_positions {
            // Reject targets on the Tx-Rx segment (zero coupling angle).
            let theta = path_coupling_angle(s, &self.target, &Vector2::zeros());
            if theta < 1e-9 {
                return Err(Error::DegenerateGeometry(
                    "target lies on the Tx-Rx line".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn instants(&self) -> usize {
        self.tx_positions.len()
    }

    /// Straight-line constant-velocity transmitter trajectory sampled at
    /// `count` instants spaced `dt` seconds apart.
    pub fn straight_line(
        start: Vector2<f64>,
        velocity: Vector2<f64>,
        count: usize,
        dt: f64,
        target: Vector2<f64>,
        carrier_hz: f64,
    ) -> Self {
        let tx_positions = (0..count)
            .map(|i| start + velocity * (i as f64 * dt))
            .collect();
        Self {
            tx_positions,
            tx_velocities: vec![velocity; count],
            target,
            carrier_hz,
        }
    }
}

/// Per-instant sensing observation: bistatic range, its rate, the LoS range
/// rate, their standard deviations, and the transmitter position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingMeasurement {
    pub tx: Vector2<f64>,
    pub range: f64,
    pub range_rate: f64,
    pub los_rate: f64,
    pub sigma_range: f64,
    pub sigma_range_rate: f64,
    pub sigma_los_rate: f64,
}

/// Measurement noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSigmas {
    pub range: f64,
    pub range_rate: f64,
    pub los_rate: f64,
}

impl NoiseSigmas {
    pub const ZERO: Self = Self {
        range: 0.0,
        range_rate: 0.0,
        los_rate: 0.0,
    };
}

/// Bistatic NLoS path length `r = ||p - s|| + ||p||`.
pub fn nlos_range(target: &Vector2<f64>, tx: &Vector2<f64>) -> f64 {
    (target - tx).norm() + target.norm()
}

/// Radial velocity of the Tx along the Tx-to-target leg.
pub fn nlos_range_rate(
    target: &Vector2<f64>,
    tx: &Vector2<f64>,
    tx_velocity: &Vector2<f64>,
) -> Result<f64> {
    let leg = tx - target;
    let dist = leg.norm();
    if dist == 0.0 {
        return Err(Error::DegenerateGeometry("transmitter at the target".into()));
    }
    Ok(leg.dot(tx_velocity) / dist)
}

/// Radial velocity of the Tx along the LoS path to the receiver at the
/// origin.
pub fn los_range_rate(tx: &Vector2<f64>, tx_velocity: &Vector2<f64>) -> Result<f64> {
    let dist = tx.norm();
    if dist == 0.0 {
        return Err(Error::DegenerateGeometry(
            "transmitter at the receiver".into(),
        ));
    }
    Ok(tx.dot(tx_velocity) / dist)
}

/// Coupling angle at the Tx between the LoS and NLoS directions, clamped to
/// [0, pi/2].
pub fn path_coupling_angle(tx: &Vector2<f64>, target: &Vector2<f64>, rx: &Vector2<f64>) -> f64 {
    let st = (tx - rx).norm();
    let sp = (tx - target).norm();
    let pt = (target - rx).norm();
    if st == 0.0 || sp == 0.0 {
        return 0.0;
    }
    let cos = ((st * st + sp * sp - pt * pt) / (2.0 * sp * st)).clamp(0.0, 1.0);
    cos.acos().clamp(0.0, std::f64::consts::FRAC_PI_2)
}

/// Convert a sorted pair of path estimates (LoS first by delay) into a
/// sensing measurement: `r = c tau_nlos`, rates from the Doppler shifts via
/// `rate = -c nu / f_c`.
pub fn measurements_from_paths(
    estimates: &[PathEstimate],
    tx: Vector2<f64>,
    carrier_hz: f64,
    sigmas: &NoiseSigmas,
) -> Result<SensingMeasurement> {
    if estimates.len() < 2 {
        return Err(Error::InsufficientMeasurements {
            got: estimates.len(),
            need: 2,
        });
    }
    // Shorter delay is the direct path.
    let (los, nlos) = if estimates[0].tau_s <= estimates[1].tau_s {
        (&estimates[0], &estimates[1])
    } else {
        (&estimates[1], &estimates[0])
    };
    Ok(SensingMeasurement {
        tx,
        range: SPEED_OF_LIGHT * nlos.tau_s,
        range_rate: -SPEED_OF_LIGHT * nlos.doppler_hz / carrier_hz,
        los_rate: -SPEED_OF_LIGHT * los.doppler_hz / carrier_hz,
        sigma_range: sigmas.range,
        sigma_range_rate: sigmas.range_rate,
        sigma_los_rate: sigmas.los_rate,
    })
}

/// Noise-free measurements for every instant of the scene.
pub fn true_measurements(scene: &Scene, sigmas: &NoiseSigmas) -> Result<Vec<SensingMeasurement>> {
    scene.validate()?;
    scene
        .tx_positions
        .iter()
        .zip(&scene.tx_velocities)
        .map(|(s, v)| {
            Ok(SensingMeasurement {
                tx: *s,
                range: nlos_range(&scene.target, s),
                range_rate: nlos_range_rate(&scene.target, s, v)?,
                los_rate: los_range_rate(s, v)?,
                sigma_range: sigmas.range,
                sigma_range_rate: sigmas.range_rate,
                sigma_los_rate: sigmas.los_rate,
            })
        })
        .collect()
}

/// True measurements plus independent zero-mean Gaussian errors, seeded.
pub fn synthesize_measurements(
    scene: &Scene,
    sigmas: &NoiseSigmas,
    seed: u64,
) -> Result<Vec<SensingMeasurement>> {
    let mut out = true_measurements(scene, sigmas)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    for m in &mut out {
        m.range += sigmas.range * unit.sample(&mut rng);
        m.range_rate += sigmas.range_rate * unit.sample(&mut rng);
        m.los_rate += sigmas.los_rate * unit.sample(&mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nlos_range_three_four_five() {
        let s = Vector2::new(6.0, 8.0);
        let p = Vector2::new(3.0, 4.0);
        assert!((nlos_range(&p, &s) - 10.0).abs() < 1e-12);
        assert!((nlos_range(&s, &s) - s.norm()).abs() < 1e-12);
    }

    #[test]
    fn range_rate_orthogonal_and_parallel() {
        let p = Vector2::new(0.0, 0.0);
        let s = Vector2::new(10.0, 0.0);
        let perp = Vector2::new(0.0, 3.0);
        assert!(nlos_range_rate(&p, &s, &perp).unwrap().abs() < 1e-12);
        let along = Vector2::new(5.0, 0.0);
        assert!((nlos_range_rate(&p, &s, &along).unwrap() - 5.0).abs() < 1e-12);

        // Mirror cases for the LoS rate.
        assert!(los_range_rate(&s, &perp).unwrap().abs() < 1e-12);
        assert!((los_range_rate(&s, &along).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn range_rate_matches_finite_difference() {
        // Central difference of the leg length along a sampled trajectory.
        let p = Vector2::new(7.0, -3.0);
        let s0 = Vector2::new(20.0, 15.0);
        let v = Vector2::new(-4.0, 2.5);
        let h = 1e-6;
        let d = |t: f64| (s0 + v * t - p).norm();
        let fd = (d(h) - d(-h)) / (2.0 * h);
        let analytic = nlos_range_rate(&p, &s0, &v).unwrap();
        assert!((fd - analytic).abs() / analytic.abs() < 1e-6);

        let dl = |t: f64| (s0 + v * t).norm();
        let fd = (dl(h) - dl(-h)) / (2.0 * h);
        let analytic = los_range_rate(&s0, &v).unwrap();
        assert!((fd - analytic).abs() / analytic.abs() < 1e-6);
    }

    #[test]
    fn coupling_angle_extremes() {
        let t = Vector2::zeros();
        // Target on the Tx-Rx segment: zero angle.
        let s = Vector2::new(10.0, 0.0);
        let p = Vector2::new(4.0, 0.0);
        assert!(path_coupling_angle(&s, &p, &t) < 1e-9);

        // (s - p) perpendicular to (s - t): right angle.
        let p = Vector2::new(10.0, 5.0);
        let theta = path_coupling_angle(&s, &p, &t);
        assert!((theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

        // Random triangle against the direct vector-angle formula.
        let s = Vector2::new(13.0, -4.0);
        let p = Vector2::new(2.0, 9.0);
        let u = (t - s).normalize();
        let w = (p - s).normalize();
        let direct = u.dot(&w).clamp(-1.0, 1.0).acos();
        let theta = path_coupling_angle(&s, &p, &t);
        assert!((theta - direct.min(std::f64::consts::FRAC_PI_2)).abs() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz_rate_bounds() {
        let p = Vector2::new(5.0, 12.0);
        for i in 0..50 {
            let a = i as f64 * 0.7;
            let s = Vector2::new(30.0 * a.cos() + 40.0, 25.0 * a.sin() - 10.0);
            let v = Vector2::new(8.0 * (a * 1.3).sin(), 6.0 * (a * 0.9).cos());
            let r = nlos_range_rate(&p, &s, &v).unwrap();
            let d = los_range_rate(&s, &v).unwrap();
            assert!(r.abs() <= v.norm() + 1e-12);
            assert!(d.abs() <= v.norm() + 1e-12);
            assert!(nlos_range(&p, &s) >= s.norm() - 1e-12);
        }
    }

    #[test]
    fn synthesis_exact_and_deterministic() {
        let scene = Scene::straight_line(
            Vector2::new(40.0, -10.0),
            Vector2::new(-12.0, 9.0),
            4,
            0.25,
            Vector2::new(25.0, 30.0),
            5.6e9,
        );
        let exact = synthesize_measurements(&scene, &NoiseSigmas::ZERO, 1).unwrap();
        let truth = true_measurements(&scene, &NoiseSigmas::ZERO).unwrap();
        assert_eq!(exact, truth);

        let sig = NoiseSigmas {
            range: 0.3,
            range_rate: 0.1,
            los_rate: 0.1,
        };
        let a = synthesize_measurements(&scene, &sig, 42).unwrap();
        let b = synthesize_measurements(&scene, &sig, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, truth);
    }

    #[test]
    fn synthesis_variance_close_to_nominal() {
        let scene = Scene::straight_line(
            Vector2::new(40.0, -10.0),
            Vector2::new(-12.0, 9.0),
            3,
            0.25,
            Vector2::new(25.0, 30.0),
            5.6e9,
        );
        let truth = true_measurements(&scene, &NoiseSigmas::ZERO).unwrap();
        let sig = NoiseSigmas {
            range: 0.5,
            range_rate: 0.2,
            los_rate: 0.2,
        };
        let mut sum_sq = 0.0;
        let trials = 35_000; // ~1e5 range draws across 3 instants
        for seed in 0..trials {
            let m = synthesize_measurements(&scene, &sig, seed).unwrap();
            for (a, b) in m.iter().zip(&truth) {
                sum_sq += (a.range - b.range).powi(2);
            }
        }
        let var = sum_sq / (3 * trials) as f64;
        assert!((var - 0.25).abs() / 0.25 < 0.02, "var {var}");
    }

    #[test]
    fn doppler_to_rate_mapping() {
        use crate::estimator::PathEstimate;
        let mk = |tau_s: f64, doppler_hz: f64| PathEstimate {
            doppler_int: 0,
            delay_int: 0,
            kappa: 0.0,
            iota: 0.0,
            tau_s,
            doppler_hz,
            peak_magnitude: 1.0,
            flagged: false,
        };
        // Published resolutions: one Doppler bin at 5.6 GHz is 4.9 m/s, one
        // delay bin is 3.12 m.
        let los = mk(1e-9, 91.55);
        let nlos = mk(10.42e-9, 0.0);
        let m = measurements_from_paths(
            &[los, nlos],
            Vector2::new(1.0, 0.0),
            5.6e9,
            &NoiseSigmas::ZERO,
        )
        .unwrap();
        assert!((m.range - 3.12).abs() < 0.01);
        assert!((m.los_rate.abs() - 4.9).abs() < 0.01);
        assert!(m.range_rate.abs() < 1e-12);
    }
}
