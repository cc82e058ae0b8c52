//! Trajectory files.
//!
//! ```text
//! # esde-trajectory n_particles=30 dt=0.00001 save_interval=0.08 params=1a2b3c4d
//! 0     x1 y1 x2 y2 ...
//! 0.08  x1 y1 x2 y2 ...
//! ```
//!
//! The header is optional when reading, in which case the particle count
//! is inferred from the row width.

use std::fmt::Write as _;
use std::path::Path;

use super::{ParticleConfiguration, Trajectory};
use crate::error::{Error, Result};
use crate::table::{fmt_f64, header_fields, parse_floats, read_text, write_text};
use crate::Vec2;

const TAG: &str = "esde-trajectory";

pub fn trajectory_to_text(traj: &Trajectory) -> String {
    let n = traj.frames.first().map_or(0, |f| f.len());
    let params = traj
        .frames
        .first()
        .map_or("none", |f| f.params_ref.as_str());
    let mut out = format!(
        "# {TAG} n_particles={n} dt={} save_interval={} params={params}\n",
        fmt_f64(traj.dt),
        fmt_f64(traj.save_interval)
    );
    for frame in &traj.frames {
        out.push_str(&fmt_f64(frame.time));
        for r in &frame.positions {
            let _ = write!(out, " {} {}", fmt_f64(r.x), fmt_f64(r.y));
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_text(path, &trajectory_to_text(traj))
}

pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory> {
    let mut n_declared: Option<usize> = None;
    let mut dt = f64::NAN;
    let mut save_interval = f64::NAN;
    let mut params = String::from("external");
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if line.contains(TAG) {
                for (k, v) in header_fields(line) {
                    let bad = || Error::parse(path, format!("bad header value {k}={v}"));
                    match k.as_str() {
                        "n_particles" => n_declared = Some(v.parse().map_err(|_| bad())?),
                        "dt" => dt = v.parse().map_err(|_| bad())?,
                        "save_interval" => save_interval = v.parse().map_err(|_| bad())?,
                        "params" => params = v,
                        _ => {}
                    }
                }
            }
            continue;
        }
        let values =
            parse_floats(line).map_err(|e| Error::parse(path, format!("line {}: {e}", lineno + 1)))?;
        if values.len() < 3 || values.len() % 2 == 0 {
            return Err(Error::parse(
                path,
                format!("line {}: expected time followed by x/y pairs", lineno + 1),
            ));
        }
        let n = (values.len() - 1) / 2;
        match n_declared {
            Some(expected) if expected != n => {
                return Err(Error::parse(
                    path,
                    format!("line {}: {n} particles, header says {expected}", lineno + 1),
                ))
            }
            None => n_declared = Some(n),
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, format!("line {}: non-finite value", lineno + 1)));
        }
        let positions = values[1..]
            .chunks_exact(2)
            .map(|c| Vec2::new(c[0], c[1]))
            .collect();
        frames.push(ParticleConfiguration::new(positions, params.clone(), values[0]));
    }
    if frames.is_empty() {
        return Err(Error::parse(path, "no frames"));
    }
    if save_interval.is_nan() {
        save_interval = if frames.len() > 1 {
            frames[1].time - frames[0].time
        } else {
            0.0
        };
    }
    Ok(Trajectory {
        frames,
        save_interval,
        dt,
    })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let frames = (0..3)
            .map(|k| {
                ParticleConfiguration::new(
                    vec![Vec2::new(0.1 * k as f64, -1e-7), Vec2::new(3.3, 1.0 / 3.0)],
                    "abc",
                    k as f64 * 0.08,
                )
            })
            .collect();
        let traj = Trajectory {
            frames,
            save_interval: 0.08,
            dt: 1e-5,
        };
        let text = trajectory_to_text(&traj);
        assert!(text.starts_with("# esde-trajectory n_particles=2 dt=1e-5 save_interval=0.08 params=abc\n"));
        let back = parse_trajectory(&text, Path::new("t")).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn headerless_input_and_malformed_rows() {
        let t = parse_trajectory("0 1 2 3 4\n1 1 2 3 4\n", Path::new("t")).unwrap();
        assert_eq!(t.frames.len(), 2);
        assert_eq!(t.frames[0].len(), 2);
        assert_eq!(t.save_interval, 1.0);
        assert!(parse_trajectory("0 1 2 3\n", Path::new("t")).is_err());
        assert!(parse_trajectory("0 1 2\n0 1 2 3 4\n", Path::new("t")).is_err());
        assert!(parse_trajectory("# nothing\n", Path::new("t")).is_err());
        assert!(parse_trajectory("0 a 2\n", Path::new("t")).is_err());
    }
}
