//! Measurement CSV: one row per sensing instant with columns
//! `s_x,s_y,r_hat,r_dot_hat,d_dot_hat,sigma_r,sigma_rdot,sigma_ddot`.

use std::io::{BufRead, BufReader, Read, Write};

use anyhow::{bail, Context, Result};
use nalgebra::Vector2;

use ddsense::scene::SensingMeasurement;

pub const MEASUREMENT_CSV_COLUMNS: &str =
    "s_x,s_y,r_hat,r_dot_hat,d_dot_hat,sigma_r,sigma_rdot,sigma_ddot";

pub fn write_measurement_csv<W: Write>(mut w: W, meas: &[SensingMeasurement]) -> Result<()> {
    writeln!(w, "# ddsense measurements v1")?;
    writeln!(w, "{MEASUREMENT_CSV_COLUMNS}")?;
    for m in meas {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            m.tx.x,
            m.tx.y,
            m.range,
            m.range_rate,
            m.los_rate,
            m.sigma_range,
            m.sigma_range_rate,
            m.sigma_los_rate
        )?;
    }
    Ok(())
}

pub fn read_measurement_csv<R: Read>(r: R) -> Result<Vec<SensingMeasurement>> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("s_x") {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .with_context(|| format!("line {}: bad value {f:?}", ln + 1))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 8 {
            bail!("line {}: expected 8 columns, got {}", ln + 1, fields.len());
        }
        out.push(SensingMeasurement {
            tx: Vector2::new(fields[0], fields[1]),
            range: fields[2],
            range_rate: fields[3],
            los_rate: fields[4],
            sigma_range: fields[5],
            sigma_range_rate: fields[6],
            sigma_los_rate: fields[7],
        });
    }
    if out.is_empty() {
        bail!("no measurement rows found");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SensingMeasurement> {
        (0..3)
            .map(|i| SensingMeasurement {
                tx: Vector2::new(10.0 + i as f64, -2.0 * i as f64),
                range: 80.0 + i as f64,
                range_rate: -1.5,
                los_rate: 2.25,
                sigma_range: 0.1,
                sigma_range_rate: 0.05,
                sigma_los_rate: 0.05,
            })
            .collect()
    }

    #[test]
    fn round_trip() {
        let meas = sample();
        let mut buf = Vec::new();
        write_measurement_csv(&mut buf, &meas).unwrap();
        let back = read_measurement_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), meas.len());
        for (a, b) in back.iter().zip(&meas) {
            assert_eq!(a.tx, b.tx);
            assert_eq!(a.range, b.range);
            assert_eq!(a.sigma_los_rate, b.sigma_los_rate);
        }
    }

    #[test]
    fn rejects_malformed_rows() {
        assert!(read_measurement_csv(&b"1,2,3\n"[..]).is_err());
        assert!(read_measurement_csv(&b"a,b,c,d,e,f,g,h\n"[..]).is_err());
        assert!(read_measurement_csv(&b"# only comments\n"[..]).is_err());
    }
}
