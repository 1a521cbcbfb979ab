//! Property tests over randomly generated geometry. Each case draws a seed
//! and builds its inputs from a seeded ChaCha stream, so failures shrink to a
//! single reproducible seed.

use std::collections::BTreeMap;

use camgeom::dropout::{dropout_schedule, sample_dropout, DropoutPolicy};
use camgeom::epipolar::keep_count;
use camgeom::io::{
    decode_mask, encode_mask, format_pose_file, parse_pose_file, PoseFile, TensorFile,
};
use camgeom::nalgebra::{Matrix3, Point3, Vector3};
use camgeom::sampling::{random_camera, random_extrinsics, random_point, random_rotation};
use camgeom::{
    epipolar_mask, evaluate, fundamental_matrix, inject_camera, normalize_trajectory, plucker_grid,
    plucker_trajectory, relative_pose, residual_field, rotation_geodesic, skew, temporal_attention,
    AttentionParams, CameraPose, EstimatedTrajectory, Extrinsics, FundamentalForm,
    InjectionBlockWeights, LatentFeature, ResidualKind, TauMode,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
    (a - b).abs().max() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skew_is_antisymmetric_cross_product(x in -1e3..1e3f64, y in -1e3..1e3f64, z in -1e3..1e3f64,
                                           a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
        let v = Vector3::new(x, y, z);
        let w = Vector3::new(a, b, c);
        let s = skew(&v);
        prop_assert_eq!(s.transpose(), -s);
        prop_assert!((s * w - v.cross(&w)).norm() <= 1e-9 * (1.0 + v.norm() * w.norm()));
    }

    #[test]
    fn relative_pose_maps_neighbor_frame_to_local_frame(seed in any::<u64>()) {
        let mut r = rng(seed);
        let local = random_extrinsics::<f64, _>(&mut r, 10.0);
        let nb = random_extrinsics::<f64, _>(&mut r, 10.0);
        let x = random_point::<f64, _>(&mut r, 20.0);
        let rel = relative_pose(&local, &nb);
        let via = rel.transform_point(&nb.transform_point(&x));
        prop_assert!((via - local.transform_point(&x)).norm() <= 1e-9);
        prop_assert!(rel.validate().is_ok());
        // swapping the arguments inverts the transform
        let back = relative_pose(&nb, &local).compose(&rel);
        prop_assert!(close(back.rotation(), &Matrix3::identity(), 1e-12));
        prop_assert!(back.translation().norm() <= 1e-9);
    }

    #[test]
    fn normalization_is_idempotent_and_rigid_invariant(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let poses: Vec<Extrinsics<f64>> = (0..n).map(|_| random_extrinsics(&mut r, 5.0)).collect();
        let once = normalize_trajectory(&poses).unwrap();
        let twice = normalize_trajectory(&once).unwrap();
        let g = random_extrinsics::<f64, _>(&mut r, 5.0).inverse();
        let moved: Vec<_> = poses.iter().map(|p| p.compose(&g)).collect();
        let moved_norm = normalize_trajectory(&moved).unwrap();
        for ((a, b), c) in once.iter().zip(&twice).zip(&moved_norm) {
            prop_assert!(close(a.rotation(), b.rotation(), 1e-12));
            prop_assert!((a.translation() - b.translation()).norm() <= 1e-9);
            prop_assert!(close(a.rotation(), c.rotation(), 1e-9));
            prop_assert!((a.translation() - c.translation()).norm() <= 1e-8);
        }
    }

    #[test]
    fn plucker_rays_are_lines_through_the_center(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let cam = random_camera::<f64, _>(&mut rng(seed), "v");
        let t = plucker_grid(&cam, h, w).unwrap();
        let c = cam.extrinsics.center();
        for row in 0..h {
            for col in 0..w {
                let d = t.direction(0, row, col);
                let m = t.moment(0, row, col);
                prop_assert!((d.norm() - 1.0).abs() <= 1e-12);
                prop_assert!(d.dot(&m).abs() <= 1e-9);
                prop_assert!((c.cross(&d) - m).norm() <= 1e-9);
                // the ray points into the scene: a point along it projects back to its pixel
                let p = Point3::from(c + d * 3.0);
                let px = cam.project(&p).unwrap();
                let want = cam.intrinsics.grid_center(h, w, col, row);
                prop_assert!((px - want).norm() <= 1e-6 * (1.0 + want.norm()));
            }
        }
    }

    #[test]
    fn plucker_tensor_is_invariant_to_a_shared_world_motion(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let cams: Vec<CameraPose<f64>> = (0..n)
            .map(|k| { let mut c = random_camera(&mut r, "v"); c.frame_index = k; c })
            .collect();
        let g = random_extrinsics::<f64, _>(&mut r, 5.0);
        let moved: Vec<_> = cams.iter().map(|c| {
            let mut c2 = c.clone();
            c2.extrinsics = c.extrinsics.compose(&g);
            c2
        }).collect();
        let a = plucker_trajectory(&cams, 4, 5, true).unwrap();
        let b = plucker_trajectory(&moved, 4, 5, true).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn fundamental_matrix_is_rank_two_and_transposes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_camera::<f64, _>(&mut r, "a");
        let b = random_camera::<f64, _>(&mut r, "b");
        let fab = fundamental_matrix(&a, &b, FundamentalForm::Geometric).unwrap();
        let fba = fundamental_matrix(&b, &a, FundamentalForm::Geometric).unwrap();
        let sv = fab.matrix().singular_values();
        prop_assert!(sv.min() <= 1e-9 * sv.max());
        prop_assert!((fab.matrix().norm() - 1.0).abs() <= 1e-12);
        let t = fba.matrix().transpose();
        let same = close(fab.matrix(), &t, 1e-9) || close(fab.matrix(), &(-t), 1e-9);
        prop_assert!(same);
    }

    #[test]
    fn mask_rows_have_exact_cardinality_and_nest(seed in any::<u64>(), h in 1usize..6, w in 1usize..6,
                                                 lo in 0.05..0.5f64, hi in 0.5..1.0f64) {
        let mut r = rng(seed);
        let local = random_camera::<f64, _>(&mut r, "l");
        let fl = fundamental_matrix(&local, &random_camera(&mut r, "a"), FundamentalForm::Geometric).unwrap();
        let fr = fundamental_matrix(&local, &random_camera(&mut r, "b"), FundamentalForm::Geometric).unwrap();
        let field = residual_field(&fl, &fr, h, w, ResidualKind::Sampson).unwrap();
        let small = epipolar_mask(&field, lo, TauMode::PerRow).unwrap();
        let large = epipolar_mask(&field, hi, TauMode::PerRow).unwrap();
        let n = 2 * h * w;
        for q in 0..h * w {
            prop_assert_eq!(small.row_popcount(q), keep_count(lo, n));
            prop_assert_eq!(large.row_popcount(q), keep_count(hi, n));
        }
        prop_assert!(small.bits().iter().zip(large.bits()).all(|(s, l)| !s || *l));
        prop_assert!(epipolar_mask(&field, 1.0, TauMode::PerRow).unwrap().bits().iter().all(|&b| b));
        let global = epipolar_mask(&field, lo, TauMode::Global).unwrap();
        prop_assert_eq!(global.bits().iter().filter(|&&b| b).count(), keep_count(lo, n * h * w));
    }

    #[test]
    fn temporal_attention_is_frame_permutation_equivariant(seed in any::<u64>(), frames in 1usize..5) {
        let mut r = rng(seed);
        let params = AttentionParams::<f64>::random(&mut r, 2, 3, 6);
        let z = LatentFeature::random(&mut r, frames, 6, 2, 3);
        let out = temporal_attention(&z, &params).unwrap();
        let plane = 6 * 2 * 3;
        let rotate = |data: &[f64]| {
            let mut v = data[plane..].to_vec();
            v.extend_from_slice(&data[..plane]);
            v
        };
        let zp = LatentFeature::new(rotate(z.data()), frames, 6, 2, 3).unwrap();
        let outp = temporal_attention(&zp, &params).unwrap();
        for (a, b) in outp.data().iter().zip(rotate(out.data())) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fresh_injection_block_is_an_exact_identity(seed in any::<u64>(), heads in 1usize..4,
                                                   frames in 1usize..5, h in 1usize..4, w in 1usize..4) {
        let mut r = rng(seed);
        let weights = InjectionBlockWeights::<f64>::fresh(&mut r, heads, 2);
        prop_assert!(weights.is_zero_initialized());
        let z = LatentFeature::random(&mut r, frames, weights.channels(), h, w);
        let cams: Vec<CameraPose<f64>> = (0..frames)
            .map(|k| { let mut c = random_camera(&mut r, "v"); c.frame_index = k; c })
            .collect();
        let p = plucker_trajectory(&cams, h, w, true).unwrap();
        let out = inject_camera(&z, &p, &weights).unwrap();
        let reference = temporal_attention(&z, &weights.temporal_attn_pretrained).unwrap();
        prop_assert!(out.data().iter().zip(reference.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn geodesic_is_a_symmetric_bounded_distance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a: Matrix3<f64> = random_rotation(&mut r);
        let b: Matrix3<f64> = random_rotation(&mut r);
        let d = rotation_geodesic(&a, &b);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&d));
        prop_assert!((d - rotation_geodesic(&b, &a)).abs() <= 1e-12);
        prop_assert_eq!(rotation_geodesic(&a, &a), 0.0);
    }

    #[test]
    fn evaluate_ignores_shared_rigid_motion_and_scale(seed in any::<u64>(), n in 2usize..7, s in 0.01..100.0f64) {
        let mut r = rng(seed);
        let gt: Vec<Extrinsics<f64>> = (0..n).map(|_| random_extrinsics(&mut r, 4.0)).collect();
        let gen: Vec<Extrinsics<f64>> = (0..n).map(|_| random_extrinsics(&mut r, 4.0)).collect();
        let base = evaluate(&[EstimatedTrajectory::succeeded("x", gen.clone())], std::slice::from_ref(&gt)).unwrap();

        let g = random_extrinsics::<f64, _>(&mut r, 10.0);
        let moved = |v: &[Extrinsics<f64>]| v.iter().map(|p| p.compose(&g)).collect::<Vec<_>>();
        let rigid = evaluate(&[EstimatedTrajectory::succeeded("x", moved(&gen))], &[moved(&gt)]).unwrap();

        let scaled = |v: &[Extrinsics<f64>]| v.iter()
            .map(|p| Extrinsics::new(*p.rotation(), p.translation() * s).unwrap())
            .collect::<Vec<_>>();
        let sc = evaluate(&[EstimatedTrajectory::succeeded("x", scaled(&gen))], &[scaled(&gt)]).unwrap();

        for other in [&rigid, &sc] {
            prop_assert!((base.rot_err.unwrap() - other.rot_err.unwrap()).abs() <= 1e-9);
            prop_assert!((base.trans_err.unwrap() - other.trans_err.unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn dropout_is_a_pure_function(seed in any::<u64>(), step in 0u64..10_000) {
        let p = DropoutPolicy::with_seed(seed);
        prop_assert_eq!(sample_dropout(&p, step), sample_dropout(&p.clone(), step));
        let sched = dropout_schedule(&p, step + 1);
        for (name, dropped) in sample_dropout(&p, step) {
            prop_assert_eq!(sched[&name][step as usize], dropped);
        }
    }

    #[test]
    fn tensor_bytes_round_trip(data in proptest::collection::vec(any::<f32>(), 0..64)) {
        let n = data.len();
        let t = TensorFile::new(vec![1, n], data).unwrap();
        let back = TensorFile::from_bytes(&t.to_bytes()).unwrap();
        prop_assert_eq!(back.dims(), t.dims());
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn mask_and_pose_files_round_trip(seed in any::<u64>(), h in 1usize..5, w in 1usize..5, ratio in 0.01..1.0f64) {
        let mut r = rng(seed);
        let local = random_camera::<f64, _>(&mut r, "l");
        let fl = fundamental_matrix(&local, &random_camera(&mut r, "a"), FundamentalForm::Geometric).unwrap();
        let fr = fundamental_matrix(&local, &random_camera(&mut r, "b"), FundamentalForm::Geometric).unwrap();
        let field = residual_field(&fl, &fr, h, w, ResidualKind::Algebraic).unwrap();
        for mode in [TauMode::PerRow, TauMode::Global] {
            let m = epipolar_mask(&field, ratio, mode).unwrap();
            prop_assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
        }

        let mut pf = PoseFile::default();
        for v in ["l", "a", "b"] {
            let cam = random_camera::<f64, _>(&mut r, v);
            pf.views.push(v.to_string());
            pf.intrinsics.insert(v.to_string(), cam.intrinsics.clone());
            let frames: BTreeMap<usize, Extrinsics<f64>> =
                (0..3).map(|k| (k * 2, random_extrinsics(&mut r, 50.0))).collect();
            pf.frames.insert(v.to_string(), frames);
        }
        prop_assert_eq!(parse_pose_file(&format_pose_file(&pf)).unwrap(), pf);
    }
}
