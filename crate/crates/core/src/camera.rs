//! Pinhole cameras, rigid poses and rig topology.
//!
//! Extrinsics follow the **world→camera** convention throughout the crate:
//!
//! ```text
//! x_cam = R · x_world + t
//! ```
//!
//! so the optical center in world coordinates is `-Rᵀ t` and the
//! camera→world rotation is `Rᵀ`. Datasets that ship camera→world poses
//! (nuScenes, most SLAM outputs) must be inverted before use, see
//! [`Extrinsics::from_camera_to_world`].

use std::collections::{BTreeMap, HashSet};

use nalgebra::{Matrix3, Point3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Cross-product matrix: `skew(v) · w == v × w`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

fn check_rotation<T: Real>(r: &Matrix3<T>) -> Result<()> {
    let tol = T::validation_tolerance();
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("rotation has non-finite entries"));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho > tol {
        return Err(Error::invalid(format!(
            "rotation not orthonormal: |RᵀR - I|_F = {:e}",
            ortho.as_f64()
        )));
    }
    let det = r.determinant();
    if (det - T::one()).abs() > tol {
        return Err(Error::invalid(format!(
            "rotation determinant {} != 1",
            det.as_f64()
        )));
    }
    Ok(())
}

/// Pinhole intrinsics at a native image resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Intrinsics<T: Real> {
    k: Matrix3<T>,
    k_inv: Matrix3<T>,
    width: usize,
    height: usize,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(k: Matrix3<T>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("intrinsics have non-finite entries"));
        }
        if k[(2, 2)] != T::one() {
            return Err(Error::invalid("intrinsics must have K[2][2] == 1"));
        }
        let (fx, fy, cx, cy) = (k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)]);
        if fx <= T::zero() || fy <= T::zero() {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if cx < T::zero()
            || cx > T::from_count(width)
            || cy < T::zero()
            || cy > T::from_count(height)
        {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                cx.as_f64(),
                cy.as_f64(),
                width,
                height
            )));
        }
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::invalid("intrinsics matrix is singular"))?;
        Ok(Self {
            k,
            k_inv,
            width,
            height,
        })
    }

    /// Zero-skew intrinsics from focal lengths and principal point.
    pub fn from_params(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        let z = T::zero();
        Self::new(
            Matrix3::new(fx, z, cx, z, fy, cy, z, z, T::one()),
            width,
            height,
        )
    }

    pub fn k(&self) -> &Matrix3<T> {
        &self.k
    }

    pub fn k_inv(&self) -> &Matrix3<T> {
        &self.k_inv
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `K` rescaled from the native resolution to an `h × w` target grid.
    pub fn scaled_k(&self, h: usize, w: usize) -> Matrix3<T> {
        let sx = T::from_count(w) / T::from_count(self.width);
        let sy = T::from_count(h) / T::from_count(self.height);
        let mut k = self.k;
        for c in 0..3 {
            k[(0, c)] *= sx;
            k[(1, c)] *= sy;
        }
        k
    }

    /// Native-resolution pixel coordinates of the center of target cell
    /// `(col, row)` on an `h × w` grid.
    pub fn grid_center(&self, h: usize, w: usize, col: usize, row: usize) -> Vector2<T> {
        let half = T::lit(0.5);
        let sx = T::from_count(self.width) / T::from_count(w);
        let sy = T::from_count(self.height) / T::from_count(h);
        Vector2::new(
            (T::from_count(col) + half) * sx,
            (T::from_count(row) + half) * sy,
        )
    }
}

/// Rigid world→camera transform.
#[derive(Clone, Debug, PartialEq)]
pub struct Extrinsics<T: Real> {
    r: Matrix3<T>,
    t: Vector3<T>,
}

impl<T: Real> Extrinsics<T> {
    /// Validates that `r` is a proper rotation.
    pub fn new(r: Matrix3<T>, t: Vector3<T>) -> Result<Self> {
        check_rotation(&r)?;
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("translation has non-finite entries"));
        }
        Ok(Self { r, t })
    }

    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    /// From a camera→world rotation and the camera center in world coordinates.
    pub fn from_camera_to_world(r_c2w: Matrix3<T>, center: Vector3<T>) -> Result<Self> {
        check_rotation(&r_c2w)?;
        let r = r_c2w.transpose();
        let t = -(r * center);
        Self::new(r, t)
    }

    // Products of valid rotations are valid; skipping the check keeps chained
    // operations from tripping over accumulated rounding.
    pub(crate) fn from_parts_unchecked(r: Matrix3<T>, t: Vector3<T>) -> Self {
        Self { r, t }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.t
    }

    /// Optical center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.r.transpose() * self.t)
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.r * p.coords + self.t)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.t))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_parts_unchecked(self.r * other.r, self.r * other.t + self.t)
    }

    /// Re-runs the rotation invariant check on this value.
    pub fn validate(&self) -> Result<()> {
        check_rotation(&self.r)
    }
}

/// Pose of a neighbor-frame point in the local camera frame.
///
/// Returns the world→camera transform that maps coordinates expressed in the
/// `neighbor` camera frame to the `local` camera frame:
/// `R = R_L R_Nᵀ`, `t = t_L − R t_N`.
///
/// Written on camera→world poses `(R_c2w, center)` the same transform reads
/// `R = R_Nᵀ R_L`, `t = R_Nᵀ (t_L − t_N)` and maps local-frame points into the
/// neighbor frame; [`relative_pose_camera_to_world`] implements that form.
pub fn relative_pose<T: Real>(local: &Extrinsics<T>, neighbor: &Extrinsics<T>) -> Extrinsics<T> {
    let r = local.r * neighbor.r.transpose();
    let t = local.t - r * neighbor.t;
    Extrinsics::from_parts_unchecked(r, t)
}

/// Relative pose on camera→world parameterised inputs `(rotation, center)`.
///
/// Returns `(R_Nᵀ R_L, R_Nᵀ (c_L − c_N))`, the camera→world pose of the local
/// camera expressed in the neighbor camera frame.
pub fn relative_pose_camera_to_world<T: Real>(
    local: (&Matrix3<T>, &Vector3<T>),
    neighbor: (&Matrix3<T>, &Vector3<T>),
) -> (Matrix3<T>, Vector3<T>) {
    let (r_l, t_l) = local;
    let (r_n, t_n) = neighbor;
    (r_n.transpose() * r_l, r_n.transpose() * (t_l - t_n))
}

/// Re-expresses every pose relative to the first one. `output[0]` is identity.
pub fn normalize_trajectory<T: Real>(poses: &[Extrinsics<T>]) -> Result<Vec<Extrinsics<T>>> {
    let first = poses.first().ok_or(Error::EmptyTrajectory)?;
    Ok(poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i == 0 {
                Extrinsics::identity()
            } else {
                relative_pose(p, first)
            }
        })
        .collect())
}

/// Intrinsics and extrinsics of one view at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose<T: Real> {
    pub intrinsics: Intrinsics<T>,
    pub extrinsics: Extrinsics<T>,
    pub frame_index: usize,
    pub view_id: String,
}

impl<T: Real> CameraPose<T> {
    pub fn new(
        intrinsics: Intrinsics<T>,
        extrinsics: Extrinsics<T>,
        frame_index: usize,
        view_id: impl Into<String>,
    ) -> Self {
        Self {
            intrinsics,
            extrinsics,
            frame_index,
            view_id: view_id.into(),
        }
    }

    /// Native-resolution pixel of a world point, `None` if behind the camera.
    pub fn project(&self, p: &Point3<T>) -> Option<Vector2<T>> {
        let pc = self.extrinsics.transform_point(p);
        if pc.z <= T::zero() {
            return None;
        }
        let x = self.intrinsics.k() * pc.coords;
        Some(Vector2::new(x.x / x.z, x.y / x.z))
    }
}

/// Left/right neighbors of one view.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Neighbors {
    pub left: Option<String>,
    pub right: Option<String>,
}

/// Fixed set of cameras with a symmetric left/right neighbor relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rig {
    views: Vec<String>,
    neighbor_map: BTreeMap<String, Neighbors>,
}

impl Rig {
    pub fn new(views: Vec<String>, neighbor_map: BTreeMap<String, Neighbors>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &views {
            if !seen.insert(v.as_str()) {
                return Err(Error::invalid(format!("duplicate view {v}")));
            }
        }
        for (view, n) in &neighbor_map {
            for name in [Some(view), n.left.as_ref(), n.right.as_ref()]
                .into_iter()
                .flatten()
            {
                if !seen.contains(name.as_str()) {
                    return Err(Error::invalid(format!(
                        "neighbor map references unknown view {name}"
                    )));
                }
            }
        }
        let right_of = |v: &str| neighbor_map.get(v).and_then(|n| n.right.as_deref());
        let left_of = |v: &str| neighbor_map.get(v).and_then(|n| n.left.as_deref());
        for (view, n) in &neighbor_map {
            if let Some(r) = n.right.as_deref() {
                if left_of(r) != Some(view.as_str()) {
                    return Err(Error::invalid(format!(
                        "asymmetric rig: {r} is right of {view} but {view} is not left of {r}"
                    )));
                }
            }
            if let Some(l) = n.left.as_deref() {
                if right_of(l) != Some(view.as_str()) {
                    return Err(Error::invalid(format!(
                        "asymmetric rig: {l} is left of {view} but {view} is not right of {l}"
                    )));
                }
            }
        }
        Ok(Self {
            views,
            neighbor_map,
        })
    }

    /// Ring topology: each view's right neighbor is the next view (wrapping).
    pub fn ring(views: Vec<String>) -> Result<Self> {
        let n = views.len();
        let mut map = BTreeMap::new();
        if n >= 2 {
            for (i, v) in views.iter().enumerate() {
                map.insert(
                    v.clone(),
                    Neighbors {
                        left: Some(views[(i + n - 1) % n].clone()),
                        right: Some(views[(i + 1) % n].clone()),
                    },
                );
            }
        }
        Self::new(views, map)
    }

    pub fn views(&self) -> &[String] {
        &self.views
    }

    pub fn neighbors(&self, view: &str) -> Option<&Neighbors> {
        self.neighbor_map.get(view)
    }

    /// Both neighbors of `view`, if it has them.
    pub fn neighbor_pair(&self, view: &str) -> Option<(&str, &str)> {
        let n = self.neighbor_map.get(view)?;
        Some((n.left.as_deref()?, n.right.as_deref()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_extrinsics, random_point};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skew_matches_definition() {
        let s = skew(&Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(
            s,
            Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0)
        );
        assert_eq!(skew(&Vector3::<f64>::zeros()), Matrix3::zeros());
        let v = Vector3::new(0.3, -1.1, 2.0);
        assert_eq!(skew(&v) * v, Vector3::zeros());
    }

    #[test]
    fn skew_is_cross_product() {
        let v = Vector3::new(0.3, -1.1, 2.0);
        let w = Vector3::new(-4.0, 0.5, 0.25);
        assert!((skew(&v) * w - v.cross(&w)).norm() < 1e-15);
        assert_eq!(skew(&v) + skew(&v).transpose(), Matrix3::zeros());
    }

    #[test]
    fn relative_pose_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_extrinsics::<f64, _>(&mut rng, 3.0);
        let rel = relative_pose(&p, &p);
        assert!((rel.rotation() - Matrix3::identity()).norm() < 1e-12);
        assert!(rel.translation().norm() < 1e-12);

        let rel = relative_pose(&p, &Extrinsics::identity());
        assert_eq!(rel.rotation(), p.rotation());
        assert_eq!(rel.translation(), p.translation());
    }

    #[test]
    fn relative_pose_maps_neighbor_frame_to_local_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let local = random_extrinsics::<f64, _>(&mut rng, 5.0);
            let neighbor = random_extrinsics::<f64, _>(&mut rng, 5.0);
            let rel = relative_pose(&local, &neighbor);
            rel.validate().unwrap();
            for _ in 0..20 {
                let x = random_point::<f64, _>(&mut rng, 10.0);
                let in_local = local.transform_point(&x);
                let via_neighbor = rel.transform_point(&neighbor.transform_point(&x));
                assert!((in_local - via_neighbor).amax() <= 1e-9);
            }
        }
    }

    #[test]
    fn camera_to_world_form_is_the_inverse_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let local = random_extrinsics::<f64, _>(&mut rng, 5.0);
        let neighbor = random_extrinsics::<f64, _>(&mut rng, 5.0);
        let (r, t) = relative_pose_camera_to_world(
            (&local.rotation().transpose(), &local.center()),
            (&neighbor.rotation().transpose(), &neighbor.center()),
        );
        let inv = relative_pose(&local, &neighbor).inverse();
        assert!((inv.rotation() - r).norm() < 1e-12);
        assert!((inv.translation() - t).norm() < 1e-12);
    }

    #[test]
    fn normalize_trajectory_cases() {
        assert!(matches!(
            normalize_trajectory::<f64>(&[]),
            Err(Error::EmptyTrajectory)
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_extrinsics::<f64, _>(&mut rng, 2.0);
        assert_eq!(
            normalize_trajectory(std::slice::from_ref(&p)).unwrap(),
            vec![Extrinsics::identity()]
        );

        let same = normalize_trajectory(&vec![p; 4]).unwrap();
        for q in same {
            assert!((q.rotation() - Matrix3::identity()).norm() < 1e-12);
            assert!(q.translation().norm() < 1e-12);
        }
    }

    #[test]
    fn pure_translation_trajectory() {
        // t_k = [k, 0, 0] with R = I: the camera center sits at [-k, 0, 0].
        let poses: Vec<_> = (0..4)
            .map(|k| {
                Extrinsics::new(Matrix3::identity(), Vector3::new(k as f64, 0.0, 0.0)).unwrap()
            })
            .collect();
        let norm = normalize_trajectory(&poses).unwrap();
        for (k, q) in norm.iter().enumerate() {
            assert_eq!(*q.translation(), Vector3::new(k as f64, 0.0, 0.0));
            // point-transform oracle: camera-0 coordinates map to camera-k coordinates
            let x0 = Point3::new(0.5, -2.0, 7.0);
            let world = poses[0].inverse().transform_point(&x0);
            let expect = poses[k].transform_point(&world);
            assert!((q.transform_point(&x0) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rotation_and_intrinsics() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = 1.0 + 1e-6;
        assert!(Extrinsics::new(r, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Extrinsics::new(reflect, Vector3::zeros()).is_err());

        assert!(Intrinsics::from_params(-1.0, 1.0, 0.5, 0.5, 1, 1).is_err());
        assert!(Intrinsics::from_params(1.0, 1.0, 2.0, 0.5, 1, 1).is_err());
        assert!(Intrinsics::from_params(1.0, 1.0, 0.5, 0.5, 0, 1).is_err());
        let mut k = Matrix3::identity();
        k[(2, 2)] = 2.0;
        assert!(Intrinsics::new(k, 4, 4).is_err());
    }

    #[test]
    fn rig_symmetry_is_enforced() {
        let views: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let ring = Rig::ring(views.clone()).unwrap();
        assert_eq!(ring.neighbor_pair("a"), Some(("c", "b")));

        let mut map = BTreeMap::new();
        map.insert(
            "a".to_string(),
            Neighbors {
                left: None,
                right: Some("b".into()),
            },
        );
        assert!(Rig::new(views.clone(), map.clone()).is_err());
        map.insert(
            "b".to_string(),
            Neighbors {
                left: Some("a".into()),
                right: None,
            },
        );
        let rig = Rig::new(views.clone(), map.clone()).unwrap();
        assert_eq!(rig.neighbor_pair("a"), None);

        map.insert(
            "c".to_string(),
            Neighbors {
                left: Some("zz".into()),
                right: None,
            },
        );
        assert!(Rig::new(views, map).is_err());
    }

    #[test]
    fn f32_poses_work() {
        let p = Extrinsics::<f32>::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let rel = relative_pose(&p, &p);
        assert!(rel.translation().norm() < 1e-6);
    }
}
