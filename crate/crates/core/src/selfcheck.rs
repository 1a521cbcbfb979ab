//! Small, seeded versions of the library's numerical contracts, runnable on
//! any install to confirm the build behaves.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{temporal_attention, AttentionParams, LatentFeature};
use crate::camera::CameraPose;
use crate::epipolar::{fundamental_matrix, EpipolarMask, FundamentalForm, TauMode};
use crate::error::Result;
use crate::gradcheck::{
    finite_difference_check, Differentiable, InjectCameraOp, MaskedCrossAttentionOp,
    TemporalAttentionOp,
};
use crate::injection::{inject_camera, InjectionBlockWeights};
use crate::plucker::plucker_grid;
use crate::sampling::{random_camera, random_point};

pub const GEOMETRY_TOLERANCE: f64 = 1e-9;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const GRADIENT_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Largest `|x_Lᵀ F x_N|` over projected random points, for random camera pairs.
pub fn fundamental_oracle(pairs: usize, points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let local = random_camera::<f64, _>(&mut rng, "local");
        let nb = random_camera::<f64, _>(&mut rng, "neighbor");
        let f = fundamental_matrix(&local, &nb, FundamentalForm::Geometric)?;
        for _ in 0..points {
            let x = random_point::<f64, _>(&mut rng, 20.0);
            let pixel = |p: &CameraPose<f64>| {
                let q = p.intrinsics.k() * p.extrinsics.transform_point(&x).coords;
                q / q.z
            };
            worst = worst.max(f.algebraic_residual(&pixel(&local), &pixel(&nb)));
        }
    }
    Ok(worst)
}

/// Worst (distance from the optical centre to each pixel ray, `|d · m|`) over
/// every pixel of random cameras.
pub fn plucker_incidence(poses: usize, h: usize, w: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dist, mut perp) = (0.0f64, 0.0f64);
    for _ in 0..poses {
        let cam = random_camera::<f64, _>(&mut rng, "cam");
        let c = cam.extrinsics.center();
        let t = plucker_grid(&cam, h, w)?;
        for row in 0..h {
            for col in 0..w {
                let d = t.direction(0, row, col);
                let m = t.moment(0, row, col);
                dist = dist.max((c.cross(&d) - m).norm() / d.norm());
                perp = perp.max(d.dot(&m).abs());
            }
        }
    }
    Ok((dist, perp))
}

/// Number of cases where a fresh injection block changes any output bit.
pub fn zero_init_mismatches(cases: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let weights = InjectionBlockWeights::<f64>::fresh(&mut rng, 2, 4);
        let z = LatentFeature::random(&mut rng, 4, weights.channels(), 3, 3);
        let cams: Vec<_> = (0..4)
            .map(|i| {
                let mut c = random_camera::<f64, _>(&mut rng, "v");
                c.frame_index = i;
                c
            })
            .collect();
        let p = crate::plucker::plucker_trajectory(&cams, 3, 3, true)?;
        let out = inject_camera(&z, &p, &weights)?;
        let reference = temporal_attention(&z, &weights.temporal_attn_pretrained)?;
        let same = out
            .data()
            .iter()
            .zip(reference.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        bad += usize::from(!same);
    }
    Ok(bad)
}

/// Max relative gradient error per operation, over `points` random points each.
pub fn gradient_errors(points: usize, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let check = |op: &dyn Differentiable<f64>| -> Result<f64> {
        Ok(finite_difference_check(op, &op.parameters(), GRADIENT_STEP)?.max_relative_error)
    };
    let (mut t, mut i, mut m) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..points {
        let op = TemporalAttentionOp {
            z: LatentFeature::random(&mut rng, 3, 4, 2, 2),
            params: AttentionParams::random(&mut rng, 2, 2, 4),
        };
        t = t.max(check(&op)?);

        let op = InjectCameraOp {
            z: LatentFeature::random(&mut rng, 3, 4, 2, 2),
            cond: LatentFeature::random(&mut rng, 3, 6, 2, 2),
            weights: InjectionBlockWeights::random(&mut rng, 2, 2),
        };
        i = i.max(check(&op)?);

        // every row keeps a varying subset of the 8 keys of a 2x2 grid
        let bits = (0..4 * 8).map(|j| (j * 7 + j / 8) % 3 != 0).collect();
        let op = MaskedCrossAttentionOp {
            z: LatentFeature::random(&mut rng, 2, 4, 2, 2),
            neighbor_cond: LatentFeature::random(&mut rng, 2, 3, 2, 4),
            mask: EpipolarMask::from_bits(bits, 2, 2, 1.0, TauMode::Global)?,
            params: AttentionParams::random(&mut rng, 2, 2, 3),
        };
        m = m.max(check(&op)?);
    }
    Ok(vec![
        ("temporal_attention", t),
        ("inject_camera", i),
        ("masked_cross_attention", m),
    ])
}

fn suite(name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> SuiteResult {
    match run() {
        Ok((passed, detail)) => SuiteResult {
            name,
            passed,
            detail,
        },
        Err(e) => SuiteResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every suite at small sizes. Output is deterministic.
pub fn run_selfcheck() -> Vec<SuiteResult> {
    vec![
        suite("zero_init_identity", || {
            let bad = zero_init_mismatches(10, 1)?;
            Ok((
                bad == 0,
                format!("{bad}/10 cases differ from the pretrained path"),
            ))
        }),
        suite("plucker_incidence", || {
            let (d, p) = plucker_incidence(10, 8, 8, 2)?;
            let ok = d <= GEOMETRY_TOLERANCE && p <= GEOMETRY_TOLERANCE;
            Ok((ok, format!("max distance {d:.3e}, max |d.m| {p:.3e}")))
        }),
        suite("fundamental_oracle", || {
            let r = fundamental_oracle(10, 20, 3)?;
            Ok((r <= GEOMETRY_TOLERANCE, format!("max residual {r:.3e}")))
        }),
        suite("gradient_check", || {
            let errs = gradient_errors(1, 4)?;
            let ok = errs.iter().all(|(_, e)| *e <= GRADIENT_TOLERANCE);
            let detail = errs
                .iter()
                .map(|(n, e)| format!("{n} {e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ");
            Ok((ok, detail))
        }),
    ]
}
