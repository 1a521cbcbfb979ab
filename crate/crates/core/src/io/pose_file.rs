//! Line-oriented camera pose files.
//!
//! ```text
//! # comment
//! view  <id> <fx> <fy> <cx> <cy> <width> <height>
//! neighbors <id> <left|-> <right|->
//! frame <id> <index> <r00> <r01> <r02> <r10> <r11> <r12> <r20> <r21> <r22> <t0> <t1> <t2>
//! ```
//!
//! Rotation is row-major and `(R, t)` maps world to camera coordinates.
//! A view must be declared before its frames. Values are f64.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::camera::{CameraPose, Extrinsics, Intrinsics, Neighbors, Rig};
use crate::error::{Error, Result};

use super::strip_comment;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseFile {
    /// Views in declaration order.
    pub views: Vec<String>,
    pub intrinsics: BTreeMap<String, Intrinsics<f64>>,
    pub neighbors: BTreeMap<String, Neighbors>,
    pub frames: BTreeMap<String, BTreeMap<usize, Extrinsics<f64>>>,
}

impl PoseFile {
    pub fn rig(&self) -> Result<Rig> {
        Rig::new(self.views.clone(), self.neighbors.clone())
    }

    fn intrinsics_of(&self, view: &str) -> Result<&Intrinsics<f64>> {
        self.intrinsics
            .get(view)
            .ok_or_else(|| Error::invalid(format!("unknown view {view}")))
    }

    /// All frames of `view`, ordered by frame index.
    pub fn trajectory(&self, view: &str) -> Result<Vec<CameraPose<f64>>> {
        let k = self.intrinsics_of(view)?;
        let frames = self
            .frames
            .get(view)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| Error::MissingPose(format!("{view} has no frames")))?;
        Ok(frames
            .iter()
            .map(|(&i, e)| CameraPose::new(k.clone(), e.clone(), i, view))
            .collect())
    }

    /// Pose of every view that has frame `index`.
    pub fn poses_at(&self, index: usize) -> BTreeMap<String, CameraPose<f64>> {
        self.frames
            .iter()
            .filter_map(|(v, f)| {
                let e = f.get(&index)?;
                let k = self.intrinsics.get(v)?;
                Some((
                    v.clone(),
                    CameraPose::new(k.clone(), e.clone(), index, v.as_str()),
                ))
            })
            .collect()
    }

    pub fn pose(&self, view: &str, index: usize) -> Result<CameraPose<f64>> {
        let k = self.intrinsics_of(view)?;
        let e = self
            .frames
            .get(view)
            .and_then(|f| f.get(&index))
            .ok_or_else(|| Error::MissingPose(format!("{view} frame {index}")))?;
        Ok(CameraPose::new(k.clone(), e.clone(), index, view))
    }
}

pub(crate) fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("expected a number, found `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("expected {what}, found `{tok}`")))
}

fn expect_fields(fields: &[&str], n: usize, line: usize, shape: &str) -> Result<()> {
    if fields.len() != n {
        return Err(Error::parse(
            line,
            format!("expected `{shape}` ({} fields), found {}", n, fields.len()),
        ));
    }
    Ok(())
}

/// Twelve numbers, row-major `R` then `t`, validated as a world→camera pose.
pub(crate) fn parse_extrinsics(tokens: &[&str], line: usize) -> Result<Extrinsics<f64>> {
    let v = tokens
        .iter()
        .map(|t| parse_f64(t, line))
        .collect::<Result<Vec<_>>>()?;
    let r = Matrix3::from_row_slice(&v[..9]);
    let t = Vector3::new(v[9], v[10], v[11]);
    Extrinsics::new(r, t).map_err(|e| Error::parse(line, e.to_string()))
}

pub(crate) fn format_extrinsics(e: &Extrinsics<f64>) -> String {
    let r = e.rotation();
    let t = e.translation();
    let mut s = String::new();
    for i in 0..3 {
        for j in 0..3 {
            let _ = write!(s, " {}", r[(i, j)]);
        }
    }
    for i in 0..3 {
        let _ = write!(s, " {}", t[i]);
    }
    s
}

pub fn parse_pose_file(text: &str) -> Result<PoseFile> {
    let mut pf = PoseFile::default();
    let mut neighbor_lines: Vec<(usize, String, Option<String>, Option<String>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        match fields[0] {
            "view" => {
                expect_fields(&fields, 8, line, "view <id> fx fy cx cy width height")?;
                let id = fields[1].to_string();
                if pf.intrinsics.contains_key(&id) {
                    return Err(Error::parse(line, format!("view {id} declared twice")));
                }
                let nums = fields[2..6]
                    .iter()
                    .map(|t| parse_f64(t, line))
                    .collect::<Result<Vec<_>>>()?;
                let w = parse_usize(fields[6], line, "an image width")?;
                let h = parse_usize(fields[7], line, "an image height")?;
                let k = Intrinsics::from_params(nums[0], nums[1], nums[2], nums[3], w, h)
                    .map_err(|e| Error::parse(line, e.to_string()))?;
                pf.views.push(id.clone());
                pf.intrinsics.insert(id.clone(), k);
                pf.frames.insert(id, BTreeMap::new());
            }
            "neighbors" => {
                expect_fields(&fields, 4, line, "neighbors <id> <left|-> <right|->")?;
                let opt = |s: &str| (s != "-").then(|| s.to_string());
                neighbor_lines.push((line, fields[1].to_string(), opt(fields[2]), opt(fields[3])));
            }
            "frame" => {
                expect_fields(&fields, 15, line, "frame <id> <index> r00..r22 t0 t1 t2")?;
                let id = fields[1];
                let index = parse_usize(fields[2], line, "a frame index")?;
                let e = parse_extrinsics(&fields[3..], line)?;
                let frames = pf
                    .frames
                    .get_mut(id)
                    .ok_or_else(|| Error::parse(line, format!("frame for undeclared view {id}")))?;
                if frames.insert(index, e).is_some() {
                    return Err(Error::parse(
                        line,
                        format!("frame {index} of view {id} given twice"),
                    ));
                }
            }
            other => {
                return Err(Error::parse(line, format!("unknown record `{other}`")));
            }
        }
    }

    for (line, view, left, right) in neighbor_lines {
        for name in [Some(&view), left.as_ref(), right.as_ref()]
            .into_iter()
            .flatten()
        {
            if !pf.intrinsics.contains_key(name) {
                return Err(Error::parse(line, format!("unknown view {name}")));
            }
        }
        if pf.neighbors.contains_key(&view) {
            return Err(Error::parse(
                line,
                format!("neighbors of {view} declared twice"),
            ));
        }
        pf.neighbors.insert(view, Neighbors { left, right });
    }
    pf.rig()?;
    Ok(pf)
}

pub fn read_pose_file(path: &Path) -> Result<PoseFile> {
    parse_pose_file(&std::fs::read_to_string(path)?)
}

/// Canonical text form; parsing it reproduces `pf` exactly.
pub fn format_pose_file(pf: &PoseFile) -> String {
    let mut s = String::new();
    for v in &pf.views {
        let k = pf.intrinsics[v].k();
        let i = &pf.intrinsics[v];
        let _ = writeln!(
            s,
            "view {v} {} {} {} {} {} {}",
            k[(0, 0)],
            k[(1, 1)],
            k[(0, 2)],
            k[(1, 2)],
            i.width(),
            i.height()
        );
    }
    for (v, n) in &pf.neighbors {
        let d = |o: &Option<String>| o.clone().unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "neighbors {v} {} {}", d(&n.left), d(&n.right));
    }
    for v in &pf.views {
        for (idx, e) in &pf.frames[v] {
            let _ = writeln!(s, "frame {v} {idx}{}", format_extrinsics(e));
        }
    }
    s
}
