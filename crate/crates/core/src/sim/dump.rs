//! Trajectory dump: one CSV row per sample.
//!
//! Columns: `time` (s), then `x0,y0,z0, …, x11,y11,z11` (m, node order of the
//! topology), then `yaw` (rad, relative to the episode start).

use std::io::{BufRead, Write};

use super::Vec3;
use crate::error::{Error, Result};

pub const TRAJECTORY_HEADER: &str = "time,x0,y0,z0,x1,y1,z1,x2,y2,z2,x3,y3,z3,x4,y4,z4,x5,y5,z5,\
x6,y6,z6,x7,y7,z7,x8,y8,z8,x9,y9,z9,x10,y10,z10,x11,y11,z11,yaw";

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub yaw: f64,
}

pub fn write_trajectory_csv<W: Write>(mut out: W, samples: &[TrajectorySample]) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for s in samples {
        write!(out, "{}", s.time)?;
        for p in &s.positions {
            write!(out, ",{},{},{}", p.x, p.y, p.z)?;
        }
        writeln!(out, ",{}", s.yaw)?;
    }
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<Vec<TrajectorySample>> {
    let path = std::path::PathBuf::from("<trajectory>");
    let bad = |line: usize, reason: String| Error::Csv {
        path: path.clone(),
        line,
        reason,
    };
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if i == 0 {
            if line != TRAJECTORY_HEADER {
                return Err(bad(1, "unexpected header".into()));
            }
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(i + 1, format!("{e}")))?;
        if fields.len() != 38 {
            return Err(bad(i + 1, format!("expected 38 fields, got {}", fields.len())));
        }
        samples.push(TrajectorySample {
            time: fields[0],
            positions: fields[1..37].chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
            yaw: fields[37],
        });
    }
    Ok(samples)
}
