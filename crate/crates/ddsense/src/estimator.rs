//! Pilot-based off-grid channel estimation: integer tap peak search over the
//! guard region followed by fractional delay/Doppler refinement from
//! neighbor magnitude ratios.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{dd_response_model, physical_from_taps, ChannelPath};
use crate::error::{Error, Result};
use crate::types::{DDGrid, FrameConfig, PilotConfig, PilotPatch};

/// One estimated path. Integer taps are relative to the pilot position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEstimate {
    pub doppler_int: i64,
    pub delay_int: i64,
    pub kappa: f64,
    pub iota: f64,
    pub tau_s: f64,
    pub doppler_hz: f64,
    pub peak_magnitude: f64,
    /// Set when a fractional estimate had no usable neighbor and fell back
    /// to zero.
    pub flagged: bool,
}

impl PathEstimate {
    pub fn delay_tap(&self) -> f64 {
        self.delay_int as f64 + self.iota
    }

    pub fn doppler_tap(&self) -> f64 {
        self.doppler_int as f64 + self.kappa
    }
}

/// Result of [`estimate_paths`]: estimates sorted by delay ascending, plus a
/// completeness flag (false when fewer peaks than requested were found).
#[derive(Debug, Clone, PartialEq)]
pub struct PathEstimates {
    pub paths: Vec<PathEstimate>,
    pub complete: bool,
}

/// Normalize the received guard region by the pilot symbol and re-index it
/// with the pilot at the local origin.
pub fn extract_pilot_region(rx: &DDGrid, pc: &PilotConfig) -> Result<PilotPatch> {
    if pc.k_p < pc.k_max
        || pc.k_p + pc.k_max >= rx.doppler_bins()
        || pc.l_p + pc.l_max >= rx.delay_bins()
    {
        return Err(Error::GuardOutOfBounds);
    }
    if pc.pilot_amplitude <= 0.0 {
        return Err(Error::InvalidArgument("pilot amplitude must be positive".into()));
    }
    let mut patch = PilotPatch::zeros(pc.k_max, pc.l_max);
    for dl in 0..=pc.l_max {
        for dk in -(pc.k_max as i64)..=(pc.k_max as i64) {
            let k = (pc.k_p as i64 + dk) as usize;
            let l = pc.l_p + dl;
            patch.set(dk, dl, rx.get(k, l) / pc.pilot_amplitude);
        }
    }
    Ok(patch)
}

/// Strict local maxima of `|H|` over 3x3 neighborhoods, largest `count`
/// returned in descending magnitude order. Boundary cells compare only
/// against in-bounds neighbors. `min_peak_ratio`, when set, drops peaks below
/// that multiple of the patch median magnitude.
pub fn find_integer_taps(
    patch: &PilotPatch,
    count: usize,
    min_peak_ratio: Option<f64>,
) -> Result<PathEstimates> {
    if count == 0 {
        return Err(Error::InvalidArgument("path count must be at least 1".into()));
    }
    if patch.doppler_span() < 3 || patch.delay_span() < 3 {
        return Err(Error::DimensionMismatch(
            "peak search needs a patch of at least 3x3".into(),
        ));
    }
    let floor = min_peak_ratio.map(|r| r * patch.median_magnitude());

    let mut peaks: Vec<(i64, i64, f64)> = Vec::new();
    for (dk, dl, v) in patch.iter() {
        let mag = v.norm();
        if let Some(floor) = floor {
            if mag < floor {
                continue;
            }
        }
        let dl = dl as i64;
        let mut is_peak = mag > 0.0;
        'nbrs: for nk in -1..=1i64 {
            for nl in -1..=1i64 {
                if nk == 0 && nl == 0 {
                    continue;
                }
                let (qk, ql) = (dk + nk, dl + nl);
                if patch.contains(qk, ql) && patch.magnitude(qk, ql as usize) >= mag {
                    is_peak = false;
                    break 'nbrs;
                }
            }
        }
        if is_peak {
            peaks.push((dk, dl, mag));
        }
    }
    peaks.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let complete = peaks.len() >= count;
    peaks.truncate(count);

    let paths = peaks
        .into_iter()
        .map(|(dk, dl, mag)| PathEstimate {
            doppler_int: dk,
            delay_int: dl,
            kappa: 0.0,
            iota: 0.0,
            tau_s: 0.0,
            doppler_hz: 0.0,
            peak_magnitude: mag,
            flagged: false,
        })
        .collect();
    Ok(PathEstimates { paths, complete })
}

/// Fractional part from the ratio of the peak magnitude and its larger
/// axis neighbor; the result lies in [-0.5, 0.5]. Returns `(value, flagged)`
/// where `flagged` means no in-bounds neighbor existed.
fn fractional_from_neighbors(center: f64, plus: Option<f64>, minus: Option<f64>) -> (f64, bool) {
    // Ties break toward the +1 neighbor for reproducibility.
    let (dir, neighbor) = match (plus, minus) {
        (Some(p), Some(m)) => {
            if p >= m {
                (1.0, p)
            } else {
                (-1.0, m)
            }
        }
        (Some(p), None) => (1.0, p),
        (None, Some(m)) => (-1.0, m),
        (None, None) => return (0.0, true),
    };
    let denom = center + neighbor;
    if denom <= 0.0 {
        return (0.0, false);
    }
    ((dir * neighbor / denom).clamp(-0.5, 0.5), false)
}

/// Fractional Doppler tap at a detected peak `(k_j, l_j)` from the column
/// magnitudes at `l_j`.
pub fn estimate_fractional_doppler(patch: &PilotPatch, k_j: i64, l_j: usize) -> (f64, bool) {
    let center = patch.magnitude(k_j, l_j);
    let plus = patch
        .contains(k_j + 1, l_j as i64)
        .then(|| patch.magnitude(k_j + 1, l_j));
    let minus = patch
        .contains(k_j - 1, l_j as i64)
        .then(|| patch.magnitude(k_j - 1, l_j));
    fractional_from_neighbors(center, plus, minus)
}

/// Fractional delay tap at a detected peak, mirror of the Doppler case along
/// the delay axis.
pub fn estimate_fractional_delay(patch: &PilotPatch, k_j: i64, l_j: usize) -> (f64, bool) {
    let center = patch.magnitude(k_j, l_j);
    let plus = patch
        .contains(k_j, l_j as i64 + 1)
        .then(|| patch.magnitude(k_j, l_j + 1));
    let minus = patch
        .contains(k_j, l_j as i64 - 1)
        .then(|| patch.magnitude(k_j, l_j - 1));
    fractional_from_neighbors(center, plus, minus)
}

/// Full estimation pipeline: guard extraction, integer peak search,
/// fractional refinement, and conversion to physical delay/Doppler.
/// Estimates are sorted by delay ascending (shortest path first).
pub fn estimate_paths(
    rx: &DDGrid,
    pc: &PilotConfig,
    cfg: &FrameConfig,
    count: usize,
) -> Result<PathEstimates> {
    let patch = extract_pilot_region(rx, pc)?;
    let mut found = find_integer_taps(&patch, count, Some(DEFAULT_PEAK_RATIO))?;
    for est in &mut found.paths {
        let (kappa, kf) = estimate_fractional_doppler(&patch, est.doppler_int, est.delay_int as usize);
        let (iota, lf) = estimate_fractional_delay(&patch, est.doppler_int, est.delay_int as usize);
        est.kappa = kappa;
        est.iota = iota;
        est.flagged = kf || lf;
        let (tau, nu) = physical_from_taps(est.delay_tap(), est.doppler_tap(), cfg);
        est.tau_s = tau;
        est.doppler_hz = nu;
    }
    found
        .paths
        .sort_by(|a, b| a.tau_s.total_cmp(&b.tau_s));
    Ok(found)
}

/// Peaks below this multiple of the patch median magnitude are treated as
/// spurious noise peaks.
pub const DEFAULT_PEAK_RATIO: f64 = 6.0;

/// Default number of interference-cancellation sweeps in
/// [`estimate_paths_sic`].
pub const DEFAULT_SIC_ITERATIONS: usize = 3;

fn model_patch_for_taps(
    delay_tap: f64,
    doppler_tap: f64,
    cfg: &FrameConfig,
    pc: &PilotConfig,
) -> Result<PilotPatch> {
    let (tau_s, doppler_hz) = physical_from_taps(delay_tap, doppler_tap, cfg);
    dd_response_model(
        &ChannelPath {
            gain: Complex64::new(1.0, 0.0),
            delay_s: tau_s,
            doppler_hz,
        },
        cfg,
        pc,
    )
}

fn patch_dot(a: &PilotPatch, b: &PilotPatch) -> Complex64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// Joint LS fit of the complex path gains given unit-gain model patches.
fn fit_gains(models: &[PilotPatch], observed: &PilotPatch) -> Result<Vec<Complex64>> {
    let n = models.len();
    let mut gram = DMatrix::<Complex64>::zeros(n, n);
    let mut rhs = DVector::<Complex64>::zeros(n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = patch_dot(&models[i], &models[j]);
        }
        rhs[i] = patch_dot(&models[i], observed);
    }
    gram.lu()
        .solve(&rhs)
        .map(|g| g.iter().copied().collect())
        .ok_or_else(|| Error::Singular("path model Gram matrix is singular".into()))
}

/// Refine multi-path estimates by successive interference cancellation:
/// fit complex gains jointly, subtract every other path's modeled response,
/// and re-estimate each path's taps from the cleaned patch. Removes the
/// bias that the paths' spectral sidelobes induce on one another.
pub fn refine_paths_sic(
    patch: &PilotPatch,
    initial: &PathEstimates,
    cfg: &FrameConfig,
    pc: &PilotConfig,
    iterations: usize,
) -> Result<PathEstimates> {
    let mut refined = initial.clone();
    if refined.paths.len() < 2 || iterations == 0 {
        return Ok(refined);
    }
    let n = refined.paths.len();
    let k_lim = pc.k_max as i64;
    let l_lim = pc.l_max as i64;

    for _ in 0..iterations {
        let models: Vec<PilotPatch> = refined
            .paths
            .iter()
            .map(|p| model_patch_for_taps(p.delay_tap(), p.doppler_tap(), cfg, pc))
            .collect::<Result<_>>()?;
        let gains = match fit_gains(&models, patch) {
            Ok(g) => g,
            // Coincident paths: keep the uncancelled estimates.
            Err(_) => return Ok(refined),
        };

        for j in 0..n {
            let mut residual = patch.clone();
            for i in 0..n {
                if i == j {
                    continue;
                }
                for (dk, dl, v) in models[i].iter() {
                    residual.set(dk, dl, residual.get(dk, dl) - gains[i] * v);
                }
            }

            // Re-center the integer taps on the cleaned patch, then redo
            // the fractional fit there.
            let est = &mut refined.paths[j];
            let (mut bk, mut bl) = (est.doppler_int, est.delay_int);
            let mut best = residual.magnitude(bk, bl as usize);
            for dk in -1..=1i64 {
                for dl in -1..=1i64 {
                    let (k, l) = (est.doppler_int + dk, est.delay_int + dl);
                    if k.abs() <= k_lim && (0..=l_lim).contains(&l) {
                        let m = residual.magnitude(k, l as usize);
                        if m > best {
                            best = m;
                            bk = k;
                            bl = l;
                        }
                    }
                }
            }
            est.doppler_int = bk;
            est.delay_int = bl;
            est.peak_magnitude = best;
            let (kappa, kf) = estimate_fractional_doppler(&residual, bk, bl as usize);
            let (iota, lf) = estimate_fractional_delay(&residual, bk, bl as usize);
            est.kappa = kappa;
            est.iota = iota;
            est.flagged = kf || lf;
            let (tau, nu) = physical_from_taps(est.delay_tap(), est.doppler_tap(), cfg);
            est.tau_s = tau;
            est.doppler_hz = nu;
        }
    }
    refined.paths.sort_by(|a, b| a.tau_s.total_cmp(&b.tau_s));
    Ok(refined)
}

/// [`estimate_paths`] followed by [`refine_paths_sic`].
pub fn estimate_paths_sic(
    rx: &DDGrid,
    pc: &PilotConfig,
    cfg: &FrameConfig,
    count: usize,
    iterations: usize,
) -> Result<PathEstimates> {
    let patch = extract_pilot_region(rx, pc)?;
    let initial = estimate_paths(rx, pc, cfg, count)?;
    refine_paths_sic(&patch, &initial, cfg, pc, iterations)
}
