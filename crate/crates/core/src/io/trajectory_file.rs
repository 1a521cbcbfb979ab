//! Pose-estimator output and ground-truth trajectories.
//!
//! ```text
//! sample <id>            # starts a sample
//! pose <12 numbers>      # one frame: row-major R then t, world→camera
//! pose -                 # frame the estimator could not register
//! sample <id> failed     # estimator produced nothing for this sample
//! ```
//!
//! Generated and ground-truth files are matched sample by sample, in order,
//! and must list the same ids.

use std::fmt::Write as _;
use std::path::Path;

use crate::camera::Extrinsics;
use crate::error::{Error, Result};
use crate::metrics::EstimatedTrajectory;

use super::pose_file::{format_extrinsics, parse_extrinsics};
use super::strip_comment;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub sample_id: String,
    /// Line of the `sample` record, for diagnostics.
    pub line: usize,
    pub failed: bool,
    pub frames: Vec<Option<Extrinsics<f64>>>,
}

pub fn parse_trajectory_file(text: &str) -> Result<Vec<TrajectoryRecord>> {
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        match fields[0] {
            "sample" => {
                let failed = match fields.len() {
                    2 => false,
                    3 if fields[2] == "failed" => true,
                    _ => return Err(Error::parse(line, "expected `sample <id> [failed]`")),
                };
                if out.iter().any(|r| r.sample_id == fields[1]) {
                    return Err(Error::parse(
                        line,
                        format!("sample {} listed twice", fields[1]),
                    ));
                }
                out.push(TrajectoryRecord {
                    sample_id: fields[1].to_string(),
                    line,
                    failed,
                    frames: Vec::new(),
                });
            }
            "pose" => {
                let rec = out
                    .last_mut()
                    .ok_or_else(|| Error::parse(line, "pose before any sample"))?;
                if rec.failed {
                    return Err(Error::parse(
                        line,
                        format!("sample {} is marked failed but lists poses", rec.sample_id),
                    ));
                }
                let pose = match fields.len() {
                    2 if fields[1] == "-" => None,
                    13 => Some(parse_extrinsics(&fields[1..], line)?),
                    n => {
                        return Err(Error::parse(
                            line,
                            format!("expected `pose -` or 12 numbers, found {} fields", n - 1),
                        ))
                    }
                };
                rec.frames.push(pose);
            }
            other => return Err(Error::parse(line, format!("unknown record `{other}`"))),
        }
    }
    Ok(out)
}

pub fn format_trajectory_file(records: &[TrajectoryRecord]) -> String {
    let mut s = String::new();
    for r in records {
        if r.failed {
            let _ = writeln!(s, "sample {} failed", r.sample_id);
            continue;
        }
        let _ = writeln!(s, "sample {}", r.sample_id);
        for f in &r.frames {
            match f {
                Some(e) => {
                    let _ = writeln!(s, "pose{}", format_extrinsics(e));
                }
                None => s.push_str("pose -\n"),
            }
        }
    }
    s
}

/// Estimator output. A failed sample, or one with no poses, has no frames.
pub fn estimated_from_records(records: Vec<TrajectoryRecord>) -> Vec<EstimatedTrajectory<f64>> {
    records
        .into_iter()
        .map(|r| EstimatedTrajectory::new(r.sample_id, r.frames))
        .collect()
}

/// Ground truth: every sample must be complete.
pub fn ground_truth_from_records(
    records: Vec<TrajectoryRecord>,
) -> Result<Vec<(String, Vec<Extrinsics<f64>>)>> {
    records
        .into_iter()
        .map(|r| {
            if r.failed || r.frames.is_empty() || r.frames.iter().any(Option::is_none) {
                return Err(Error::parse(
                    r.line,
                    format!("ground-truth sample {} must list every pose", r.sample_id),
                ));
            }
            let frames = r.frames.into_iter().flatten().collect();
            Ok((r.sample_id, frames))
        })
        .collect()
}

pub fn read_estimated(path: &Path) -> Result<Vec<EstimatedTrajectory<f64>>> {
    Ok(estimated_from_records(parse_trajectory_file(
        &std::fs::read_to_string(path)?,
    )?))
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<(String, Vec<Extrinsics<f64>>)>> {
    ground_truth_from_records(parse_trajectory_file(&std::fs::read_to_string(path)?)?)
}
