//! File formats: DD grids as CSV (one row per delay bin, `re,im` column
//! pairs over Doppler bins) and time-domain captures as "f32iq" raw
//! interleaved little-endian 32-bit-float IQ pairs or `re,im` CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::types::DDGrid;

/// Write a DD grid as CSV. Row `l` holds the `2N` values
/// `re(k=0),im(k=0),...,re(k=N-1),im(k=N-1)`; values use shortest
/// round-trip decimal formatting so writes are deterministic.
pub fn write_dd_grid_csv<W: Write>(mut w: W, grid: &DDGrid) -> Result<()> {
    writeln!(
        w,
        "# ddgrid v1 delay_bins={} doppler_bins={}",
        grid.delay_bins(), grid.doppler_bins()
    )?;
    let mut line = String::new();
    for l in 0..grid.delay_bins() {
        line.clear();
        for k in 0..grid.doppler_bins() {
            if k > 0 {
                line.push(',');
            }
            let v = grid.get(k, l);
            line.push_str(&format!("{},{}", v.re, v.im));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_dd_grid_csv(path: &Path, grid: &DDGrid) -> Result<()> {
    write_dd_grid_csv(BufWriter::new(File::create(path)?), grid)
}

/// Read a DD grid written by [`write_dd_grid_csv`]. The header comment is
/// optional; dimensions are otherwise inferred from the row/column counts.
pub fn read_dd_grid_csv<R: Read>(r: R) -> Result<DDGrid> {
    let reader = BufReader::new(r);
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() % 2 != 0 {
            return Err(Error::Parse(format!(
                "row {}: odd field count {}",
                rows.len(),
                fields.len()
            )));
        }
        let row: Vec<Complex64> = fields
            .chunks(2)
            .map(|p| -> Result<Complex64> {
                let re: f64 = p[0]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad value {:?}: {e}", p[0])))?;
                let im: f64 = p[1]
                    .trim()
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad value {:?}: {e}", p[1])))?;
                Ok(Complex64::new(re, im))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "row {}: expected {} Doppler bins, got {}",
                    rows.len(),
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty DD grid file".into()));
    }
    let (delay_bins, doppler_bins) = (rows.len(), rows[0].len());
    let mut grid = DDGrid::zeros(delay_bins, doppler_bins);
    for (l, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            grid.set(k, l, v);
        }
    }
    Ok(grid)
}

pub fn load_dd_grid_csv(path: &Path) -> Result<DDGrid> {
    read_dd_grid_csv(File::open(path)?)
}

/// Write interleaved little-endian float32 I,Q pairs.
pub fn write_f32iq<W: Write>(mut w: W, samples: &[Complex64]) -> Result<()> {
    for s in samples {
        w.write_all(&(s.re as f32).to_le_bytes())?;
        w.write_all(&(s.im as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn save_f32iq(path: &Path, samples: &[Complex64]) -> Result<()> {
    write_f32iq(BufWriter::new(File::create(path)?), samples)
}

/// Read interleaved little-endian float32 I,Q pairs.
pub fn read_f32iq<R: Read>(mut r: R) -> Result<Vec<Complex64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse(format!(
            "f32iq length {} is not a multiple of 8 bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| {
            Complex64::new(
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64,
            )
        })
        .collect())
}

/// Read a capture as CSV with `re,im` columns (comments and blank lines
/// ignored).
pub fn read_iq_csv<R: Read>(r: R) -> Result<Vec<Complex64>> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',');
        let (re, im) = (it.next(), it.next());
        let (Some(re), Some(im)) = (re, im) else {
            return Err(Error::Parse(format!("line {}: expected re,im", i + 1)));
        };
        if it.next().is_some() {
            return Err(Error::Parse(format!("line {}: too many fields", i + 1)));
        }
        out.push(Complex64::new(
            re.trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?,
            im.trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?,
        ));
    }
    Ok(out)
}

/// Load a capture, choosing the format from the file extension: `.csv`
/// parses `re,im` rows, anything else is treated as f32iq.
pub fn read_capture(path: &Path) -> Result<Vec<Complex64>> {
    let file = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => read_iq_csv(file),
        _ => read_f32iq(file),
    }
}
