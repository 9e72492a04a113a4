//! Monte Carlo sweep harness: full chain from scene geometry through OTFS
//! modulation, two-path channel, noise, path estimation, and localization
//! with all three solvers, aggregated per sweep point.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::Vector2;
use rayon::prelude::*;
use std::io::Write;

use ddsense::channel::{add_awgn, apply_channel, taps_from_physical, ChannelPath};
use ddsense::estimator::{estimate_paths_sic, DEFAULT_SIC_ITERATIONS};
use ddsense::locator::{
    baseline_init, estimate_velocity, locate, locate_dfp, locate_lm, DfpOptions, LmOptions,
    DEFAULT_EPS, DEFAULT_MAX_ITER,
};
use ddsense::otfs::{demodulate, modulate, place_pilot};
use ddsense::scene::{measurements_from_paths, true_measurements, NoiseSigmas, Scene, SPEED_OF_LIGHT};
use ddsense::types::{FrameConfig, PilotConfig};
use ddsense::Complex64;

use crate::config::{ExperimentConfig, SweepSection, SweepVariable};

/// Aggregates for one sweep point. Tap MSEs are in taps^2; position RMSE in
/// meters, velocity RMSE in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub snr_db: f64,
    pub trials: usize,
    pub failures: usize,
    pub mse_delay_los: f64,
    pub mse_delay_nlos: f64,
    pub mse_doppler_los: f64,
    pub mse_doppler_nlos: f64,
    pub rmse_pos_wls: f64,
    pub rmse_pos_lm: f64,
    pub rmse_pos_dfp: f64,
    pub rmse_vel_wls: f64,
    pub rmse_vel_lm: f64,
    pub rmse_vel_dfp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub points: Vec<SweepPoint>,
    /// Human-readable notes for skipped points.
    pub reports: Vec<String>,
}

struct TrialOutcome {
    tap_sq: [f64; 4], // delay LoS, delay NLoS, Doppler LoS, Doppler NLoS
    pos_sq: [f64; 3], // WLS, LM, DFP
    vel_sq: [f64; 3],
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Per-trial seed: independent streams per (master, point, trial).
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(point as u64 + 1)) ^ trial as u64)
}

/// The two propagation paths seen at one instant: direct Tx->Rx and the
/// Tx->target->Rx reflection, with Dopplers matching the radial rates.
pub fn instant_paths(
    scene: &Scene,
    instant: usize,
    los_gain: Complex64,
    nlos_gain: Complex64,
) -> Result<[ChannelPath; 2]> {
    let meas = true_measurements(scene, &NoiseSigmas::ZERO)?;
    let m = meas
        .get(instant)
        .ok_or_else(|| anyhow!("instant {instant} out of range"))?;
    let f_c = scene.carrier_hz;
    Ok([
        ChannelPath {
            gain: los_gain,
            delay_s: m.tx.norm() / SPEED_OF_LIGHT,
            doppler_hz: -m.los_rate * f_c / SPEED_OF_LIGHT,
        },
        ChannelPath {
            gain: nlos_gain,
            delay_s: m.range / SPEED_OF_LIGHT,
            doppler_hz: -m.range_rate * f_c / SPEED_OF_LIGHT,
        },
    ])
}

/// Check every instant's taps fit the CP and the pilot guard region.
fn check_feasible(scene: &Scene, frame: &FrameConfig, pilot: &PilotConfig) -> Result<()> {
    for i in 0..scene.instants() {
        let paths = instant_paths(scene, i, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))?;
        for p in &paths {
            let (lt, kt) = taps_from_physical(p.delay_s, p.doppler_hz, frame);
            if lt + 1.0 > pilot.l_max as f64 || lt > frame.cp_len as f64 {
                bail!("instant {i}: delay tap {lt:.2} outside guard/CP");
            }
            if kt.abs() + 1.0 > pilot.k_max as f64 {
                bail!("instant {i}: Doppler tap {kt:.2} outside guard");
            }
        }
    }
    Ok(())
}

/// One full simulation trial; returns per-trial squared errors.
fn run_trial(
    frame: &FrameConfig,
    pilot: &PilotConfig,
    scene: &Scene,
    base_sigmas: &NoiseSigmas,
    gains: (f64, f64),
    nlos_decay: f64,
    snr_db: f64,
    seed: u64,
) -> Result<TrialOutcome> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(splitmix64(seed));

    let grid = place_pilot(frame, pilot, splitmix64(seed ^ 0xA5A5))?;
    let tx_sig = modulate(&grid, frame)?;

    let mut tap_sq = [0.0f64; 4];
    let mut measurements = Vec::with_capacity(scene.instants());
    for i in 0..scene.instants() {
        let phases: (f64, f64) = (
            rng.gen::<f64>() * std::f64::consts::TAU,
            rng.gen::<f64>() * std::f64::consts::TAU,
        );
        let nlos_gain = gains.1 * nlos_decay.powi(i as i32);
        let paths = instant_paths(
            scene,
            i,
            Complex64::from_polar(gains.0, phases.0),
            Complex64::from_polar(nlos_gain, phases.1),
        )?;
        let rx_clean = apply_channel(&tx_sig, &paths, frame)?;
        let mean_power = rx_clean.energy() / rx_clean.len() as f64;
        let noise_power = mean_power * 10f64.powf(-snr_db / 10.0);
        let rx_sig = add_awgn(&rx_clean, noise_power, splitmix64(seed ^ (i as u64 + 1)));
        let rx_grid = demodulate(&rx_sig, frame)?;

        let ests = estimate_paths_sic(&rx_grid, pilot, frame, 2, DEFAULT_SIC_ITERATIONS)?;
        if !ests.complete || ests.paths.len() < 2 {
            bail!("instant {i}: fewer than two paths detected");
        }
        // Estimates and truth are both delay-sorted: LoS first.
        for (j, (est, truth)) in ests.paths.iter().zip(&paths).enumerate() {
            let (lt, kt) = taps_from_physical(truth.delay_s, truth.doppler_hz, frame);
            tap_sq[j] += (est.delay_tap() - lt).powi(2);
            tap_sq[2 + j] += (est.doppler_tap() - kt).powi(2);
        }
        // NLoS-derived quantities get noisier as that path weakens; the
        // recorded sigmas carry the relative scale into the WLS weights.
        let weight = gains.1 / nlos_gain;
        let sigmas = NoiseSigmas {
            range: base_sigmas.range * weight,
            range_rate: base_sigmas.range_rate * weight,
            los_rate: base_sigmas.los_rate,
        };
        measurements.push(measurements_from_paths(
            &ests.paths,
            scene.tx_positions[i],
            scene.carrier_hz,
            &sigmas,
        )?);
    }
    let n_inst = scene.instants() as f64;
    for v in &mut tap_sq {
        *v /= n_inst;
    }

    let wls = locate(&measurements, DEFAULT_EPS, DEFAULT_MAX_ITER)?;
    let init = baseline_init(&measurements);
    let lm = locate_lm(&measurements, init, &LmOptions::default())?;
    let dfp = locate_dfp(&measurements, init, &DfpOptions::default())?;

    let positions = [wls.position, lm, dfp];
    let pos_sq = [
        (positions[0] - scene.target).norm_squared(),
        (positions[1] - scene.target).norm_squared(),
        (positions[2] - scene.target).norm_squared(),
    ];

    let mut vel_sq = [0.0f64; 3];
    for (method, p_hat) in positions.iter().enumerate() {
        for (i, m) in measurements.iter().enumerate() {
            let est = estimate_velocity(p_hat, m)
                .with_context(|| format!("velocity solve failed at instant {i}"))?;
            vel_sq[method] += (est.velocity - scene.tx_velocities[i]).norm_squared();
        }
        vel_sq[method] /= n_inst;
    }

    Ok(TrialOutcome {
        tap_sq,
        pos_sq,
        vel_sq,
    })
}

/// Tx trajectory along the circular arc from which the Rx-target chord is
/// seen at a constant coupling angle `theta = acos(cos_theta)`; instants are
/// spaced by `speed * dt` of arc length, velocities tangential.
pub fn constant_cos_scene(
    cos_theta: f64,
    target: Vector2<f64>,
    instants: usize,
    dt: f64,
    speed: f64,
    carrier_hz: f64,
) -> Result<Scene> {
    if !(0.0..1.0).contains(&cos_theta) {
        bail!("cos_theta must lie in [0, 1)");
    }
    let theta = cos_theta.acos();
    let chord = target.norm();
    if chord == 0.0 {
        bail!("target coincides with the receiver");
    }
    let radius = chord / (2.0 * theta.sin());
    let mid = target / 2.0;
    let n_hat = Vector2::new(-target.y, target.x) / chord;
    let half = (radius * radius - chord * chord / 4.0).max(0.0).sqrt();
    let center = mid + n_hat * half;
    // The inscribed angle theta < pi/2 is seen from the major arc, whose
    // midpoint lies on the center's side of the chord.
    let u = if half > 1e-9 { (center - mid) / half } else { n_hat };
    let psi_mid = u.y.atan2(u.x);
    let dpsi = speed * dt / radius;

    let mut tx_positions = Vec::with_capacity(instants);
    let mut tx_velocities = Vec::with_capacity(instants);
    for i in 0..instants {
        let psi = psi_mid + (i as f64 - (instants as f64 - 1.0) / 2.0) * dpsi;
        tx_positions.push(center + radius * Vector2::new(psi.cos(), psi.sin()));
        tx_velocities.push(speed * Vector2::new(-psi.sin(), psi.cos()));
    }
    let scene = Scene {
        tx_positions,
        tx_velocities,
        target,
        carrier_hz,
    };
    scene.validate()?;
    Ok(scene)
}

/// Run the configured sweep. Infeasible points are skipped and reported;
/// identical configs and master seed give identical results.
pub fn run_sweep(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<SweepResult> {
    let sweep: &SweepSection = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [sweep] section"))?;
    sweep.validate()?;
    let frame = cfg.frame.to_frame()?;
    let pilot = cfg.pilot.to_pilot();
    pilot.validate(&frame)?;
    let master = seed_override.unwrap_or(sweep.master_seed);
    let gains = (cfg.scene.los_gain, cfg.scene.nlos_gain);
    // Recorded sigmas act as WLS weight priors; only ratios matter.
    let mut base_sigmas = cfg.scene.sigmas();
    if base_sigmas.range <= 0.0 {
        base_sigmas.range = 0.1;
    }
    if base_sigmas.range_rate <= 0.0 {
        base_sigmas.range_rate = 0.05;
    }
    if base_sigmas.los_rate <= 0.0 {
        base_sigmas.los_rate = 0.05;
    }

    let mut points = Vec::with_capacity(sweep.grid.len());
    let mut reports = Vec::new();
    for (pi, &value) in sweep.grid.iter().enumerate() {
        let (snr_db, scene) = match sweep.variable {
            SweepVariable::TxPowerDbm => {
                (value + sweep.snr_offset_db, cfg.scene.to_scene(frame.carrier_hz)?)
            }
            SweepVariable::CosTheta => (
                sweep.fixed_snr_db,
                constant_cos_scene(
                    value,
                    Vector2::new(cfg.scene.target[0], cfg.scene.target[1]),
                    cfg.scene.instants,
                    cfg.scene.dt,
                    sweep.arc_speed,
                    frame.carrier_hz,
                )?,
            ),
        };
        if let Err(e) = check_feasible(&scene, &frame, &pilot) {
            reports.push(format!("point {value}: skipped ({e})"));
            continue;
        }

        let outcomes: Vec<Result<TrialOutcome>> = (0..sweep.trials)
            .into_par_iter()
            .map(|t| {
                run_trial(
                    &frame,
                    &pilot,
                    &scene,
                    &base_sigmas,
                    gains,
                    cfg.scene.nlos_gain_decay,
                    snr_db,
                    trial_seed(master, pi, t),
                )
            })
            .collect();

        let mut ok = 0usize;
        let mut tap = [0.0f64; 4];
        let mut pos = [0.0f64; 3];
        let mut vel = [0.0f64; 3];
        for outcome in &outcomes {
            match outcome {
                Ok(o) => {
                    ok += 1;
                    for i in 0..4 {
                        tap[i] += o.tap_sq[i];
                    }
                    for i in 0..3 {
                        pos[i] += o.pos_sq[i];
                        vel[i] += o.vel_sq[i];
                    }
                }
                Err(_) => {}
            }
        }
        if ok == 0 {
            reports.push(format!("point {value}: all {} trials failed", sweep.trials));
            continue;
        }
        let n = ok as f64;
        points.push(SweepPoint {
            value,
            snr_db,
            trials: sweep.trials,
            failures: sweep.trials - ok,
            mse_delay_los: tap[0] / n,
            mse_delay_nlos: tap[1] / n,
            mse_doppler_los: tap[2] / n,
            mse_doppler_nlos: tap[3] / n,
            rmse_pos_wls: (pos[0] / n).sqrt(),
            rmse_pos_lm: (pos[1] / n).sqrt(),
            rmse_pos_dfp: (pos[2] / n).sqrt(),
            rmse_vel_wls: (vel[0] / n).sqrt(),
            rmse_vel_lm: (vel[1] / n).sqrt(),
            rmse_vel_dfp: (vel[2] / n).sqrt(),
        });
    }
    Ok(SweepResult {
        variable: sweep.variable,
        points,
        reports,
    })
}

pub const SWEEP_CSV_COLUMNS: &str = "value,snr_db,trials,failures,mse_delay_los,mse_delay_nlos,\
mse_doppler_los,mse_doppler_nlos,rmse_pos_wls,rmse_pos_lm,rmse_pos_dfp,\
rmse_vel_wls,rmse_vel_lm,rmse_vel_dfp";

/// Serialize a sweep result; shortest round-trip float formatting keeps the
/// output byte-identical for identical results.
pub fn write_sweep_csv<W: Write>(mut w: W, result: &SweepResult) -> Result<()> {
    writeln!(w, "# ddsense sweep v1")?;
    writeln!(
        w,
        "# variable={}",
        match result.variable {
            SweepVariable::TxPowerDbm => "tx_power_dbm",
            SweepVariable::CosTheta => "cos_theta",
        }
    )?;
    writeln!(w, "{SWEEP_CSV_COLUMNS}")?;
    for p in &result.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.value,
            p.snr_db,
            p.trials,
            p.failures,
            p.mse_delay_los,
            p.mse_delay_nlos,
            p.mse_doppler_los,
            p.mse_doppler_nlos,
            p.rmse_pos_wls,
            p.rmse_pos_lm,
            p.rmse_pos_dfp,
            p.rmse_vel_wls,
            p.rmse_vel_lm,
            p.rmse_vel_dfp
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SceneSection;
    use ddsense::scene::path_coupling_angle;

    #[test]
    fn constant_cos_scene_hits_requested_angle() {
        let target = Vector2::new(30.0, 25.0);
        for &c in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let scene = constant_cos_scene(c, target, 4, 0.5, 5.0, 5.6e9).unwrap();
            for s in &scene.tx_positions {
                let theta = path_coupling_angle(s, &target, &Vector2::zeros());
                assert!(
                    (theta.cos() - c).abs() < 1e-9,
                    "cos_theta {c}: got {}",
                    theta.cos()
                );
            }
        }
        assert!(constant_cos_scene(1.0, target, 4, 0.5, 5.0, 5.6e9).is_err());
    }

    #[test]
    fn trial_seed_streams_are_distinct() {
        let a = trial_seed(1, 0, 0);
        assert_eq!(a, trial_seed(1, 0, 0));
        assert_ne!(a, trial_seed(1, 0, 1));
        assert_ne!(a, trial_seed(1, 1, 0));
        assert_ne!(a, trial_seed(2, 0, 0));
    }

    #[test]
    fn instant_paths_match_geometry() {
        let scene = SceneSection::default().to_scene(5.6e9).unwrap();
        let unit = Complex64::new(1.0, 0.0);
        let paths = instant_paths(&scene, 0, unit, unit).unwrap();
        let s = scene.tx_positions[0];
        assert!((paths[0].delay_s * SPEED_OF_LIGHT - s.norm()).abs() < 1e-9);
        let bistatic = (scene.target - s).norm() + scene.target.norm();
        assert!((paths[1].delay_s * SPEED_OF_LIGHT - bistatic).abs() < 1e-9);
        assert!(paths[0].delay_s < paths[1].delay_s);
    }

    fn tiny_config(variable: SweepVariable, grid: Vec<f64>, trials: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.frame.delay_bins = 128;
        cfg.frame.doppler_bins = 128;
        cfg.pilot.k_p = 64;
        cfg.pilot.l_p = 50;
        cfg.sweep = Some(SweepSection {
            variable,
            grid,
            trials,
            master_seed: 7,
            snr_offset_db: 5.0,
            fixed_snr_db: 20.0,
            arc_speed: 5.0,
        });
        cfg
    }

    #[test]
    fn sweep_is_deterministic_and_noiseless_point_is_tight() {
        let cfg = tiny_config(SweepVariable::TxPowerDbm, vec![95.0], 2);
        let r1 = run_sweep(&cfg, None).unwrap();
        let r2 = run_sweep(&cfg, None).unwrap();
        assert_eq!(r1, r2);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sweep_csv(&mut a, &r1).unwrap();
        write_sweep_csv(&mut b, &r2).unwrap();
        assert_eq!(a, b);

        // 100 dB SNR behaves as noiseless: sub-millimeter position error.
        let p = &r1.points[0];
        assert_eq!(p.failures, 0);
        assert!(p.rmse_pos_wls < 1e-3, "rmse {}", p.rmse_pos_wls);

        let r3 = run_sweep(&cfg, Some(99)).unwrap();
        assert_ne!(r1, r3);
    }

    #[test]
    fn infeasible_point_is_reported_not_fatal() {
        let mut cfg = tiny_config(SweepVariable::TxPowerDbm, vec![10.0], 1);
        // Target so far away the bistatic delay tap exceeds the guard.
        cfg.scene.target = [3000.0, 2500.0];
        cfg.scene.tx_start = [5000.0, -1500.0];
        let r = run_sweep(&cfg, None).unwrap();
        assert!(r.points.is_empty());
        assert_eq!(r.reports.len(), 1);
        assert!(r.reports[0].contains("skipped"));
    }
}
