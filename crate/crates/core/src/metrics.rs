//! Trajectory accuracy of generated videos, measured against ground truth
//! through a pose estimator that may fail on some samples.
//!
//! Per sample, both trajectories are expressed relative to their first frame.
//! Rotations are compared by geodesic angle; translations are the camera
//! centres of the normalized poses, stacked and scaled to unit L2 norm.
//! Per-sample errors are frame means. Sums over successful samples are
//! divided by the success rate, so a model whose outputs often defeat the
//! estimator is penalized.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::camera::{normalize_trajectory, Extrinsics};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Geodesic distance between two rotations, in radians, in `[0, π]`.
///
/// Evaluated as `atan2(sin θ, cos θ)` with `cos θ = (tr(R_gen R_gtᵀ) − 1)/2`
/// and `sin θ` from the skew part of the product. This is the arccos form
/// without its loss of precision near 0 and π, and it is exactly zero for
/// equal arguments because `R Rᵀ` is computed bit-symmetric.
pub fn rotation_geodesic<T: Real>(r_gen: &Matrix3<T>, r_gt: &Matrix3<T>) -> T {
    let m = r_gen * r_gt.transpose();
    let half = T::lit(0.5);
    let cos = ((m.trace() - T::one()) * half).clamp(-T::one(), T::one());
    let axis = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    let sin = (axis.norm() * half).min(T::one());
    sin.atan2(cos)
}

/// Estimator output for one generated video. `None` frames mean the
/// estimator could not register that frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedTrajectory<T: Real> {
    pub frames: Vec<Option<Extrinsics<T>>>,
    pub sample_id: String,
}

impl<T: Real> EstimatedTrajectory<T> {
    pub fn new(sample_id: impl Into<String>, frames: Vec<Option<Extrinsics<T>>>) -> Self {
        Self {
            frames,
            sample_id: sample_id.into(),
        }
    }

    pub fn failed(sample_id: impl Into<String>) -> Self {
        Self::new(sample_id, Vec::new())
    }

    pub fn succeeded(sample_id: impl Into<String>, frames: Vec<Extrinsics<T>>) -> Self {
        Self::new(sample_id, frames.into_iter().map(Some).collect())
    }

    /// A sample counts only if every frame was recovered; a partially
    /// registered trajectory cannot be normalized to its first frame reliably.
    pub fn is_success(&self) -> bool {
        !self.frames.is_empty() && self.frames.iter().all(Option::is_some)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryEvalReport<T: Real + Serialize> {
    /// Radians. `None` when no sample succeeded.
    pub rot_err: Option<T>,
    /// `None` when no successful sample had a usable translation.
    pub trans_err: Option<T>,
    pub success_rate: T,
    pub n_samples: usize,
    pub n_success: usize,
    pub warnings: Vec<String>,
}

/// Camera centres of the first-frame-normalized trajectory, scaled so the
/// stacked vector has unit norm. The flag is false when every centre is zero.
fn normalized_centers<T: Real>(poses: &[Extrinsics<T>]) -> Result<(Vec<Vector3<T>>, bool)> {
    let rel = normalize_trajectory(poses)?;
    let centers: Vec<Vector3<T>> = rel.iter().map(Extrinsics::center).collect();
    let norm = centers
        .iter()
        .fold(T::zero(), |acc, c| acc + c.norm_squared())
        .sqrt();
    if norm <= T::baseline_tolerance() {
        return Ok((centers.iter().map(|_| Vector3::zeros()).collect(), false));
    }
    Ok((centers.iter().map(|c| c / norm).collect(), true))
}

/// Per-sample (rotation, translation) errors, frame-averaged.
fn sample_errors<T: Real>(gen: &[Extrinsics<T>], gt: &[Extrinsics<T>]) -> Result<(T, Option<T>)> {
    let gen_rel = normalize_trajectory(gen)?;
    let gt_rel = normalize_trajectory(gt)?;
    let n = T::from_count(gt.len());
    let rot = gen_rel.iter().zip(&gt_rel).fold(T::zero(), |acc, (g, t)| {
        acc + rotation_geodesic(g.rotation(), t.rotation())
    }) / n;

    let (gt_c, gt_moves) = normalized_centers(gt)?;
    if !gt_moves {
        return Ok((rot, None));
    }
    let (gen_c, _) = normalized_centers(gen)?;
    let trans = gen_c
        .iter()
        .zip(&gt_c)
        .fold(T::zero(), |acc, (g, t)| acc + (g - t).norm())
        / n;
    Ok((rot, Some(trans)))
}

/// Success-rate weighted rotation and translation errors over a set of samples.
pub fn evaluate<T: Real + Serialize>(
    gen: &[EstimatedTrajectory<T>],
    gt: &[Vec<Extrinsics<T>>],
) -> Result<TrajectoryEvalReport<T>> {
    if gen.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    if gen.len() != gt.len() {
        return Err(Error::shape(format!(
            "{} estimated trajectories but {} ground-truth trajectories",
            gen.len(),
            gt.len()
        )));
    }

    let mut warnings = Vec::new();
    let mut n_success = 0usize;
    let mut rot_sum = T::zero();
    let mut trans_sum = T::zero();
    let mut trans_count = 0usize;

    for (g, t) in gen.iter().zip(gt) {
        if !g.is_success() {
            continue;
        }
        if g.frames.len() != t.len() {
            return Err(Error::shape(format!(
                "sample {}: {} estimated frames but {} ground-truth frames",
                g.sample_id,
                g.frames.len(),
                t.len()
            )));
        }
        let frames: Vec<Extrinsics<T>> = g.frames.iter().flatten().cloned().collect();
        let (rot, trans) = sample_errors(&frames, t)?;
        n_success += 1;
        rot_sum += rot;
        match trans {
            Some(e) => {
                trans_sum += e;
                trans_count += 1;
            }
            None => {
                let msg = format!(
                    "sample {}: ground truth has no camera displacement, translation error skipped",
                    g.sample_id
                );
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let n_samples = gen.len();
    let success_rate = T::from_count(n_success) / T::from_count(n_samples);
    if n_success == 0 {
        warnings.push("no sample was successfully estimated; errors undefined".to_string());
    }
    let rot_err = (n_success > 0).then(|| rot_sum / success_rate);
    let trans_err = (trans_count > 0).then(|| trans_sum / success_rate);
    for e in rot_err.iter().chain(trans_err.iter()) {
        if !e.is_finite() {
            return Err(Error::NonFinite("trajectory error".into()));
        }
    }
    Ok(TrajectoryEvalReport {
        rot_err,
        trans_err,
        success_rate,
        n_samples,
        n_success,
        warnings,
    })
}
