//! Seeded random generators for cameras, points and rigs.
//!
//! Used by the self-check suites and by tests; everything is driven by a
//! caller-supplied RNG so results are reproducible.

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use rand::Rng;

use crate::camera::{CameraPose, Extrinsics, Intrinsics};
use crate::scalar::Real;

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Rotation about a random axis by an angle in `[0, max_angle)`.
pub fn random_rotation_within<T: Real, R: Rng>(rng: &mut R, max_angle: f64) -> Matrix3<T> {
    let axis = Unit::new_normalize(unit_vector(rng));
    let angle = uniform(rng, 0.0, max_angle);
    let r = Rotation3::from_axis_angle(&axis, angle).into_inner();
    r.map(T::lit)
}

pub fn random_rotation<T: Real, R: Rng>(rng: &mut R) -> Matrix3<T> {
    random_rotation_within(rng, std::f64::consts::PI)
}

pub fn random_point<T: Real, R: Rng>(rng: &mut R, extent: f64) -> Point3<T> {
    Point3::new(
        T::lit(uniform(rng, -extent, extent)),
        T::lit(uniform(rng, -extent, extent)),
        T::lit(uniform(rng, -extent, extent)),
    )
}

/// Random rigid pose with translation components in `[-extent, extent]`.
pub fn random_extrinsics<T: Real, R: Rng>(rng: &mut R, extent: f64) -> Extrinsics<T> {
    let r = random_rotation(rng);
    let t = random_point::<T, R>(rng, extent).coords;
    Extrinsics::new(r, t).expect("random rotation is valid")
}

/// Plausible intrinsics for a `width × height` sensor.
pub fn random_intrinsics<T: Real, R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
) -> Intrinsics<T> {
    let w = width as f64;
    let h = height as f64;
    let f = uniform(rng, 0.6, 1.4) * w;
    let aspect = uniform(rng, 0.9, 1.1);
    Intrinsics::from_params(
        T::lit(f),
        T::lit(f * aspect),
        T::lit(uniform(rng, 0.4, 0.6) * w),
        T::lit(uniform(rng, 0.4, 0.6) * h),
        width,
        height,
    )
    .expect("random intrinsics are valid")
}

pub fn random_camera<T: Real, R: Rng>(rng: &mut R, view_id: &str) -> CameraPose<T> {
    let w = rng.random_range(64..1600);
    let h = rng.random_range(48..1000);
    CameraPose::new(
        random_intrinsics(rng, w, h),
        random_extrinsics(rng, 5.0),
        0,
        view_id,
    )
}

/// Camera at `center` looking towards `target` (y axis roughly down).
pub fn look_at<T: Real>(center: Vector3<f64>, target: Vector3<f64>) -> Extrinsics<T> {
    let z = (target - center).normalize();
    let mut up = Vector3::new(0.0, -1.0, 0.0);
    if z.cross(&up).norm() < 1e-6 {
        up = Vector3::new(1.0, 0.0, 0.0);
    }
    let x = up.cross(&z).normalize();
    let y = z.cross(&x);
    // rows of the world→camera rotation are the camera axes in world frame
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    Extrinsics::from_camera_to_world(r.transpose().map(T::lit), center.map(T::lit))
        .expect("look-at rotation is valid")
}

/// Point inside the viewing frustum of `cam` at a depth in `[near, far]`.
pub fn point_in_view<T: Real, R: Rng>(
    rng: &mut R,
    cam: &CameraPose<T>,
    near: f64,
    far: f64,
) -> Point3<T> {
    let u = uniform(rng, 0.0, cam.intrinsics.width() as f64);
    let v = uniform(rng, 0.0, cam.intrinsics.height() as f64);
    let depth = T::lit(uniform(rng, near, far));
    let ray = cam.intrinsics.k_inv() * Vector3::new(T::lit(u), T::lit(v), T::one());
    let pc = ray * depth;
    cam.extrinsics.inverse().transform_point(&Point3::from(pc))
}
