use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ddsense::channel::{add_awgn, apply_channel};
use ddsense::estimator::{estimate_paths_sic, DEFAULT_SIC_ITERATIONS};
use ddsense::locator::{locate, DEFAULT_EPS, DEFAULT_MAX_ITER};
use ddsense::otfs::{demodulate, modulate, place_pilot};
use ddsense::types::TimeSignal;
use ddsense_cli::config::ExperimentConfig;
use ddsense_cli::measurements::read_measurement_csv;
use ddsense_cli::plot::emit_plots;
use ddsense_cli::sweep::{run_sweep, write_sweep_csv};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "DDSENSE_OUT_DIR";

#[derive(Parser)]
#[command(name = "ddsense", version, about = "Delay-Doppler sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override (payload, noise, or sweep master seed by context).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory; defaults inside $DDSENSE_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// DD grid (or configured pilot frame) to a time-domain f32iq file.
    Modulate {
        #[command(flatten)]
        common: Common,
        /// Input DD-grid CSV; omitted: generate the configured pilot frame.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Time-domain f32iq file back to a DD-grid CSV.
    Demodulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Pass a frame through the configured multipath channel plus noise.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Input DD-grid CSV; omitted: generate the configured pilot frame.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Estimate path delays/Dopplers from a received DD grid or capture.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Received DD-grid CSV, or a one-frame capture (f32iq).
        #[arg(long)]
        input: PathBuf,
        /// Number of paths to extract.
        #[arg(long, default_value_t = 2)]
        paths: usize,
    },
    /// Detect frame preambles in a capture; emits start indices and peaks.
    Frames {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Localize the target from a measurement CSV.
    Locate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Include first-stage solver diagnostics in the output.
        #[arg(long)]
        trace: bool,
    },
    /// Run the configured Monte Carlo sweep; writes CSV and SVG charts.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn out_path(common: &Common, default_name: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        dir.join(default_name)
    })
}

fn input_grid(
    input: &Option<PathBuf>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ddsense::DDGrid> {
    match input {
        Some(path) => ddsense::io::load_dd_grid_csv(path)
            .with_context(|| format!("cannot load DD grid {}", path.display())),
        None => {
            let frame = cfg.frame.to_frame()?;
            Ok(place_pilot(&frame, &cfg.pilot.to_pilot(), seed)?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Modulate { common, input } => {
            let cfg = load_config(&common)?;
            let frame = cfg.frame.to_frame()?;
            let grid = input_grid(&input, &cfg, common.seed.unwrap_or_default())?;
            grid.matches(&frame)?;
            let sig = modulate(&grid, &frame)?;
            let out = out_path(&common, "frame.f32iq");
            ddsense::io::save_f32iq(&out, &sig.samples)?;
            println!("wrote {} samples to {}", sig.len(), out.display());
        }
        Command::Demodulate { common, input } => {
            let cfg = load_config(&common)?;
            let frame = cfg.frame.to_frame()?;
            let samples = ddsense::io::read_capture(&input)?;
            let sig = TimeSignal::new(samples, frame.sample_rate());
            let grid = demodulate(&sig, &frame)?;
            let out = out_path(&common, "grid.csv");
            ddsense::io::save_dd_grid_csv(&out, &grid)?;
            println!("wrote {} to {}", "DD grid", out.display());
        }
        Command::Simulate { common, input } => {
            let cfg = load_config(&common)?;
            let frame = cfg.frame.to_frame()?;
            let seed = common.seed.unwrap_or_default();
            let grid = input_grid(&input, &cfg, seed)?;
            let sig = modulate(&grid, &frame)?;
            let paths: Vec<_> = cfg.channel.paths.iter().map(|p| p.to_path()).collect();
            if paths.is_empty() {
                bail!("config has no [[channel.paths]] entries");
            }
            let mut rx = apply_channel(&sig, &paths, &frame)?;
            if let Some(snr_db) = cfg.channel.snr_db {
                let noise = rx.energy() / rx.len() as f64 * 10f64.powf(-snr_db / 10.0);
                rx = add_awgn(&rx, noise, seed.wrapping_add(1));
            }
            let out = out_path(&common, "received.f32iq");
            ddsense::io::save_f32iq(&out, &rx.samples)?;
            println!("wrote {} samples to {}", rx.len(), out.display());
        }
        Command::Estimate {
            common,
            input,
            paths,
        } => {
            let cfg = load_config(&common)?;
            let frame = cfg.frame.to_frame()?;
            let is_csv = input
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let grid = if is_csv {
                ddsense::io::load_dd_grid_csv(&input)?
            } else {
                let samples = ddsense::io::read_capture(&input)?;
                demodulate(&TimeSignal::new(samples, frame.sample_rate()), &frame)?
            };
            let ests = estimate_paths_sic(
                &grid,
                &cfg.pilot.to_pilot(),
                &frame,
                paths,
                DEFAULT_SIC_ITERATIONS,
            )?;
            let out = out_path(&common, "paths.csv");
            let mut w = BufWriter::new(File::create(&out)?);
            writeln!(w, "# ddsense paths v1")?;
            writeln!(w, "path,k,l,kappa,iota,tau_ns,doppler_hz,magnitude")?;
            for (i, p) in ests.paths.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    i,
                    p.doppler_int,
                    p.delay_int,
                    p.kappa,
                    p.iota,
                    p.tau_s * 1e9,
                    p.doppler_hz,
                    p.peak_magnitude
                )?;
            }
            drop(w);
            if !ests.complete {
                eprintln!("warning: found fewer than {paths} paths");
            }
            println!("wrote {} paths to {}", ests.paths.len(), out.display());
        }
        Command::Frames { common, input } => {
            let cfg = load_config(&common)?;
            let samples = ddsense::io::read_capture(&input)?;
            let sync = &cfg.sync;
            let preamble =
                ddsense::capture::generate_preamble(sync.preamble_len, sync.preamble_seed);
            let frame = cfg.frame.to_frame()?;
            let min_sep = sync
                .min_separation
                .unwrap_or(frame.frame_len() + frame.cp_len);
            let report =
                ddsense::capture::detect_frames(&samples, &preamble, sync.p_fa, min_sep)?;
            let out = out_path(&common, "frames.csv");
            let mut w = BufWriter::new(File::create(&out)?);
            writeln!(w, "# ddsense frames v1 threshold={}", report.threshold)?;
            writeln!(w, "start,peak")?;
            for f in &report.frames {
                writeln!(w, "{},{}", f.start, f.score)?;
            }
            drop(w);
            println!("wrote {} frames to {}", report.frames.len(), out.display());
        }
        Command::Locate {
            common,
            input,
            trace,
        } => {
            let meas = read_measurement_csv(File::open(&input)?)?;
            let res = locate(&meas, DEFAULT_EPS, DEFAULT_MAX_ITER)?;
            let mut doc = serde_json::json!({
                "p_hat": [res.position.x, res.position.y],
                "loss": res.loss,
                "sign_choice": [res.sign_choice.0, res.sign_choice.1],
                "clamped": res.clamped,
                "velocities": res.velocities.iter().map(|v| serde_json::json!({
                    "v": [v.velocity.x, v.velocity.y],
                    "condition": v.condition,
                    "flagged": v.flagged,
                })).collect::<Vec<_>>(),
            });
            if trace {
                doc["coarse"] = serde_json::json!({
                    "z": [res.coarse.z[0], res.coarse.z[1], res.coarse.z[2]],
                    "iterations": res.coarse.iterations,
                    "converged": res.coarse.converged,
                });
            }
            let out = out_path(&common, "locate.json");
            if out
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
            {
                let mut w = BufWriter::new(File::create(&out)?);
                writeln!(w, "p_x,p_y,loss,clamped")?;
                writeln!(
                    w,
                    "{},{},{},{}",
                    res.position.x, res.position.y, res.loss, res.clamped
                )?;
            } else {
                std::fs::write(&out, serde_json::to_string_pretty(&doc)?)?;
            }
            println!(
                "p_hat = ({:.4}, {:.4}), loss = {:.3e}, written to {}",
                res.position.x,
                res.position.y,
                res.loss,
                out.display()
            );
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            if cfg.sweep.is_none() {
                bail!("config has no [sweep] section");
            }
            let out_dir = common
                .out
                .clone()
                .or_else(|| cfg.output_dir.clone())
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out_dir)?;
            let result = run_sweep(&cfg, common.seed)?;
            for line in &result.reports {
                eprintln!("note: {line}");
            }
            if result.points.is_empty() {
                bail!("sweep produced no points");
            }
            let csv_path = out_dir.join("sweep.csv");
            write_sweep_csv(BufWriter::new(File::create(&csv_path)?), &result)?;
            let plots = emit_plots(&result, &out_dir)?;
            println!("wrote {}", csv_path.display());
            for p in plots {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
