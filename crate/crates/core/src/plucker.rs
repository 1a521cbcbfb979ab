//! Per-pixel plücker ray embeddings.
//!
//! Each pixel of an `h × w` grid is encoded by the ray leaving the optical
//! center through the pixel center: six channels `(d, c × d)` where `d` is the
//! unit direction in world coordinates and `c` the camera center. Channel
//! layout is `(frames, 6, h, w)`, row-major.

use nalgebra::Vector3;

use crate::camera::{normalize_trajectory, CameraPose};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const CHANNELS: usize = 6;

/// Dense `(frames, 6, h, w)` embedding plus the poses it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct PluckerTensor<T: Real> {
    data: Vec<T>,
    frames: usize,
    h: usize,
    w: usize,
    poses: Vec<CameraPose<T>>,
}

impl<T: Real> PluckerTensor<T> {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, CHANNELS, self.h, self.w]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Poses the rays were generated from (after any first-frame normalization).
    pub fn poses(&self) -> &[CameraPose<T>] {
        &self.poses
    }

    #[inline]
    fn index(&self, frame: usize, channel: usize, row: usize, col: usize) -> usize {
        ((frame * CHANNELS + channel) * self.h + row) * self.w + col
    }

    pub fn get(&self, frame: usize, channel: usize, row: usize, col: usize) -> T {
        self.data[self.index(frame, channel, row, col)]
    }

    pub fn direction(&self, frame: usize, row: usize, col: usize) -> Vector3<T> {
        Vector3::new(
            self.get(frame, 0, row, col),
            self.get(frame, 1, row, col),
            self.get(frame, 2, row, col),
        )
    }

    pub fn moment(&self, frame: usize, row: usize, col: usize) -> Vector3<T> {
        Vector3::new(
            self.get(frame, 3, row, col),
            self.get(frame, 4, row, col),
            self.get(frame, 5, row, col),
        )
    }

    /// One frame as a standalone tensor.
    pub fn frame(&self, frame: usize) -> PluckerTensor<T> {
        let n = CHANNELS * self.h * self.w;
        PluckerTensor {
            data: self.data[frame * n..(frame + 1) * n].to_vec(),
            frames: 1,
            h: self.h,
            w: self.w,
            poses: vec![self.poses[frame].clone()],
        }
    }
}

/// Ray `(d, m)` through the continuous target-grid position `(x, y)` of an
/// `h × w` grid. Pixel `(col, row)` has its center at `(col + ½, row + ½)`.
pub fn ray_through<T: Real>(
    pose: &CameraPose<T>,
    h: usize,
    w: usize,
    x: T,
    y: T,
) -> (Vector3<T>, Vector3<T>) {
    let intr = &pose.intrinsics;
    let sx = T::from_count(intr.width()) / T::from_count(w);
    let sy = T::from_count(intr.height()) / T::from_count(h);
    let center = pose.extrinsics.center();
    ray_from_native(pose, &center, x * sx, y * sy)
}

fn ray_from_native<T: Real>(
    pose: &CameraPose<T>,
    center: &Vector3<T>,
    u: T,
    v: T,
) -> (Vector3<T>, Vector3<T>) {
    let cam = pose.intrinsics.k_inv() * Vector3::new(u, v, T::one());
    let d = (pose.extrinsics.rotation().transpose() * cam).normalize();
    let m = center.cross(&d);
    (d, m)
}

fn fill_frame<T: Real>(pose: &CameraPose<T>, h: usize, w: usize, out: &mut [T]) {
    let plane = h * w;
    let center = pose.extrinsics.center();
    for row in 0..h {
        for col in 0..w {
            let px = pose.intrinsics.grid_center(h, w, col, row);
            let (d, m) = ray_from_native(pose, &center, px.x, px.y);
            let i = row * w + col;
            for c in 0..3 {
                out[c * plane + i] = d[c];
                out[(c + 3) * plane + i] = m[c];
            }
        }
    }
}

fn build<T: Real>(poses: Vec<CameraPose<T>>, h: usize, w: usize) -> Result<PluckerTensor<T>> {
    if h == 0 || w == 0 {
        return Err(Error::shape("grid dimensions must be positive"));
    }
    let n = CHANNELS * h * w;
    let mut data = vec![T::zero(); poses.len() * n];
    for (pose, chunk) in poses.iter().zip(data.chunks_mut(n)) {
        fill_frame(pose, h, w, chunk);
    }
    Ok(PluckerTensor {
        data,
        frames: poses.len(),
        h,
        w,
        poses,
    })
}

/// Single-frame embedding of `pose` on an `h × w` grid.
pub fn plucker_grid<T: Real>(pose: &CameraPose<T>, h: usize, w: usize) -> Result<PluckerTensor<T>> {
    build(vec![pose.clone()], h, w)
}

/// Embedding of one view's trajectory, optionally re-expressed relative to
/// the first frame so frame 0 is the identity camera.
pub fn plucker_trajectory<T: Real>(
    poses: &[CameraPose<T>],
    h: usize,
    w: usize,
    normalize_to_first: bool,
) -> Result<PluckerTensor<T>> {
    let first = poses.first().ok_or(Error::EmptyTrajectory)?;
    if let Some(p) = poses.iter().find(|p| p.view_id != first.view_id) {
        return Err(Error::invalid(format!(
            "mixed view ids in trajectory: {} and {}",
            first.view_id, p.view_id
        )));
    }
    let mut poses = poses.to_vec();
    if normalize_to_first {
        let ext: Vec<_> = poses.iter().map(|p| p.extrinsics.clone()).collect();
        for (p, e) in poses.iter_mut().zip(normalize_trajectory(&ext)?) {
            p.extrinsics = e;
        }
    }
    build(poses, h, w)
}

/// Chain of grid sizes where every level is the floor-half of the previous.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolutionPyramid {
    levels: Vec<(usize, usize)>,
}

impl ResolutionPyramid {
    pub fn new(levels: Vec<(usize, usize)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("pyramid needs at least one level"));
        }
        if levels.iter().any(|&(h, w)| h == 0 || w == 0) {
            return Err(Error::invalid("pyramid levels must be at least 1x1"));
        }
        for pair in levels.windows(2) {
            let ((h0, w0), (h1, w1)) = (pair[0], pair[1]);
            if (h1, w1) != (h0 / 2, w0 / 2) {
                return Err(Error::invalid(format!(
                    "pyramid level ({h1}, {w1}) is not the half of ({h0}, {w0})"
                )));
            }
        }
        Ok(Self { levels })
    }

    /// `count` levels starting at `(h, w)`, stopping early once a side would hit 0.
    pub fn halving(h: usize, w: usize, count: usize) -> Result<Self> {
        let mut levels = Vec::with_capacity(count);
        let (mut h, mut w) = (h, w);
        while levels.len() < count && h >= 1 && w >= 1 {
            levels.push((h, w));
            h /= 2;
            w /= 2;
        }
        Self::new(levels)
    }

    pub fn levels(&self) -> &[(usize, usize)] {
        &self.levels
    }
}

/// Recomputes the rays of `t` at every pyramid level.
///
/// Levels must be reachable from the source size by repeated floor-halving,
/// which keeps them on the source aspect ratio.
pub fn downsample_pyramid<T: Real>(
    t: &PluckerTensor<T>,
    levels: &ResolutionPyramid,
) -> Result<Vec<PluckerTensor<T>>> {
    let src = (t.h, t.w);
    let first = levels.levels[0];
    if first.0 > src.0 || first.1 > src.1 {
        return Err(Error::LevelLargerThanSource {
            level: first,
            source_dims: src,
        });
    }
    let mut reach = src;
    while reach != first {
        if reach.0 <= first.0 && reach.1 <= first.1 || reach.0 < 1 || reach.1 < 1 {
            return Err(Error::invalid(format!(
                "pyramid level {first:?} does not follow the aspect ratio of {src:?}"
            )));
        }
        reach = (reach.0 / 2, reach.1 / 2);
    }
    levels
        .levels
        .iter()
        .map(|&(h, w)| build(t.poses.clone(), h, w))
        .collect()
}
