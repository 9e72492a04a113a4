//! TOML experiment configuration: frame/pilot/channel/scene/sweep/sync
//! sections, each optional so single-purpose subcommands only need the
//! blocks they use.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use ddsense::channel::ChannelPath;
use ddsense::scene::{NoiseSigmas, Scene};
use ddsense::types::{FrameConfig, PilotConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub delay_bins: usize,
    pub doppler_bins: usize,
    pub delta_f: f64,
    pub carrier_hz: f64,
    pub cp_len: usize,
}

impl Default for FrameSection {
    /// Desk-scale profile: 256x256 grid at 93.75 kHz spacing (24 MHz).
    fn default() -> Self {
        Self {
            delay_bins: 256,
            doppler_bins: 256,
            delta_f: 93.75e3,
            carrier_hz: 5.6e9,
            cp_len: 32,
        }
    }
}

impl FrameSection {
    pub fn to_frame(&self) -> Result<FrameConfig> {
        FrameConfig::new(
            self.delay_bins,
            self.doppler_bins,
            self.delta_f,
            self.carrier_hz,
            self.cp_len,
        )
        .context("invalid [frame] section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSection {
    pub k_p: usize,
    pub l_p: usize,
    pub k_max: usize,
    pub l_max: usize,
    #[serde(default = "default_pilot_amplitude")]
    pub pilot_amplitude: f64,
    #[serde(default)]
    pub data_power: f64,
}

fn default_pilot_amplitude() -> f64 {
    1.0
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            k_p: 128,
            l_p: 100,
            k_max: 16,
            l_max: 24,
            pilot_amplitude: 1.0,
            data_power: 0.0,
        }
    }
}

impl PilotSection {
    pub fn to_pilot(&self) -> PilotConfig {
        PilotConfig {
            k_p: self.k_p,
            l_p: self.l_p,
            k_max: self.k_max,
            l_max: self.l_max,
            pilot_amplitude: self.pilot_amplitude,
            data_power: self.data_power,
        }
    }
}

/// One propagation path: linear complex gain, delay in ns, Doppler in Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    pub gain_re: f64,
    #[serde(default)]
    pub gain_im: f64,
    pub delay_ns: f64,
    pub doppler_hz: f64,
}

impl PathSection {
    pub fn to_path(&self) -> ChannelPath {
        ChannelPath {
            gain: Complex64::new(self.gain_re, self.gain_im),
            delay_s: self.delay_ns * 1e-9,
            doppler_hz: self.doppler_hz,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub paths: Vec<PathSection>,
    /// Per-sample SNR in dB; omit for a noiseless channel.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub target: [f64; 2],
    /// Straight-line Tx trajectory (used when explicit instants are absent).
    #[serde(default = "default_tx_start")]
    pub tx_start: [f64; 2],
    #[serde(default = "default_tx_velocity")]
    pub tx_velocity: [f64; 2],
    #[serde(default = "default_instants")]
    pub instants: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Explicit per-instant Tx states; override the straight-line fields.
    pub tx_positions: Option<Vec<[f64; 2]>>,
    pub tx_velocities: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_los_gain")]
    pub los_gain: f64,
    #[serde(default = "default_nlos_gain")]
    pub nlos_gain: f64,
    /// Multiplicative NLoS gain factor per instant (path loss along the
    /// trajectory); 1.0 keeps all instants equally strong.
    #[serde(default = "default_nlos_gain_decay")]
    pub nlos_gain_decay: f64,
    #[serde(default)]
    pub sigma_range: f64,
    #[serde(default)]
    pub sigma_range_rate: f64,
    #[serde(default)]
    pub sigma_los_rate: f64,
}

fn default_tx_start() -> [f64; 2] {
    [20.0, -80.0]
}
fn default_tx_velocity() -> [f64; 2] {
    [-40.0, 40.0]
}
fn default_instants() -> usize {
    4
}
fn default_dt() -> f64 {
    1.0
}
fn default_los_gain() -> f64 {
    1.0
}
fn default_nlos_gain() -> f64 {
    0.7
}
fn default_nlos_gain_decay() -> f64 {
    0.7
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            target: [60.0, 50.0],
            tx_start: default_tx_start(),
            tx_velocity: default_tx_velocity(),
            instants: default_instants(),
            dt: default_dt(),
            tx_positions: None,
            tx_velocities: None,
            los_gain: default_los_gain(),
            nlos_gain: default_nlos_gain(),
            nlos_gain_decay: default_nlos_gain_decay(),
            sigma_range: 0.0,
            sigma_range_rate: 0.0,
            sigma_los_rate: 0.0,
        }
    }
}

impl SceneSection {
    pub fn to_scene(&self, carrier_hz: f64) -> Result<Scene> {
        let scene = match (&self.tx_positions, &self.tx_velocities) {
            (Some(p), Some(v)) => {
                if p.len() != v.len() {
                    bail!("tx_positions and tx_velocities lengths differ");
                }
                Scene {
                    tx_positions: p.iter().map(|q| Vector2::new(q[0], q[1])).collect(),
                    tx_velocities: v.iter().map(|q| Vector2::new(q[0], q[1])).collect(),
                    target: Vector2::new(self.target[0], self.target[1]),
                    carrier_hz,
                }
            }
            (None, None) => Scene::straight_line(
                Vector2::new(self.tx_start[0], self.tx_start[1]),
                Vector2::new(self.tx_velocity[0], self.tx_velocity[1]),
                self.instants,
                self.dt,
                Vector2::new(self.target[0], self.target[1]),
                carrier_hz,
            ),
            _ => bail!("tx_positions and tx_velocities must be given together"),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn sigmas(&self) -> NoiseSigmas {
        NoiseSigmas {
            range: self.sigma_range,
            range_rate: self.sigma_range_rate,
            los_rate: self.sigma_los_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Transmit power in dBm, mapped affinely to SNR via `snr_offset_db`.
    TxPowerDbm,
    /// Path coupling angle cosine at fixed SNR.
    CosTheta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// SNR(dB) = tx_power(dBm) + snr_offset_db for power sweeps.
    #[serde(default = "default_snr_offset")]
    pub snr_offset_db: f64,
    /// SNR used at every point of a cos-theta sweep.
    #[serde(default = "default_fixed_snr")]
    pub fixed_snr_db: f64,
    /// Tx speed along the constant-angle arc for cos-theta sweeps.
    #[serde(default = "default_arc_speed")]
    pub arc_speed: f64,
}

fn default_snr_offset() -> f64 {
    5.0
}
fn default_fixed_snr() -> f64 {
    20.0
}
fn default_arc_speed() -> f64 {
    16.0
}

impl SweepSection {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("sweep trials must be at least 1");
        }
        if self.grid.is_empty() {
            bail!("sweep grid must be nonempty");
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            bail!("sweep grid must be strictly increasing");
        }
        if self.variable == SweepVariable::CosTheta
            && self.grid.iter().any(|&c| !(0.0..1.0).contains(&c))
        {
            bail!("cos_theta grid values must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSection {
    #[serde(default = "default_preamble_len")]
    pub preamble_len: usize,
    #[serde(default)]
    pub preamble_seed: u64,
    #[serde(default = "default_p_fa")]
    pub p_fa: f64,
    /// Defaults to the frame length (CP included) when omitted.
    pub min_separation: Option<usize>,
}

fn default_preamble_len() -> usize {
    512
}
fn default_p_fa() -> f64 {
    1e-5
}

impl Default for SyncSection {
    fn default() -> Self {
        Self {
            preamble_len: default_preamble_len(),
            preamble_seed: 0,
            p_fa: default_p_fa(),
            min_separation: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub pilot: PilotSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub scene: SceneSection,
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub sync: SyncSection,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        if let Some(sweep) = &cfg.sweep {
            sweep.validate()?;
        }
        Ok(cfg)
    }
}
