use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use camgeom::epipolar::keep_count;
use camgeom::io::{read_mask, read_pose_file, read_tensor};
use camgeom::plucker_trajectory;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn camgeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camgeom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn kv(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {out}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn identity_pose_has_zero_moments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("id.bin");
    let o = camgeom(&[
        "plucker",
        "--poses",
        s(&fixture("identity.poses")),
        "--view",
        "cam",
        "--height",
        "4",
        "--width",
        "5",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = read_tensor(&out).unwrap();
    assert_eq!(t.dims(), [1, 6, 4, 5]);
    let plane = 4 * 5;
    assert!(t.data()[3 * plane..].iter().all(|&m| m == 0.0));
    assert!(t.data()[2 * plane..3 * plane].iter().all(|&dz| dz > 0.0));
}

#[test]
fn plucker_file_matches_library_at_f32() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rig.bin");
    let o = camgeom(&[
        "plucker",
        "--poses",
        s(&fixture("rig6.poses")),
        "--view",
        "CAM_BACK",
        "--height",
        "9",
        "--width",
        "16",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pf = read_pose_file(&fixture("rig6.poses")).unwrap();
    let lib = plucker_trajectory(&pf.trajectory("CAM_BACK").unwrap(), 9, 16, true).unwrap();
    let file = read_tensor(&out).unwrap();
    assert_eq!(file.dims(), lib.shape());
    for (a, b) in file.data().iter().zip(lib.data()) {
        assert_eq!(a.to_bits(), (*b as f32).to_bits());
    }
}

#[test]
fn normalize_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |flag: &str, name: &str| {
        let out = dir.path().join(name);
        let o = camgeom(&[
            "plucker",
            "--poses",
            s(&fixture("realestate.poses")),
            "--view",
            "cam",
            "--height",
            "6",
            "--width",
            "8",
            "--normalize-first-frame",
            flag,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        read_tensor(&out).unwrap()
    };
    let on = run("true", "on.bin");
    let off = run("false", "off.bin");
    assert_eq!(on.dims(), [8, 6, 6, 8]);
    assert_ne!(on.data(), off.data());
    // first frame normalized to the identity pose: moments vanish
    let frame = 6 * 6 * 8;
    assert!(on.data()[3 * 48..frame].iter().all(|&m| m == 0.0));
}

#[test]
fn malformed_pose_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.bin");
    let o = camgeom(&[
        "plucker",
        "--poses",
        s(&fixture("malformed.poses")),
        "--view",
        "cam",
        "--height",
        "4",
        "--width",
        "4",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn mask_ratio_one_sets_every_bit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.bin");
    let o = camgeom(&[
        "mask",
        "--poses",
        s(&fixture("rig6.poses")),
        "--view",
        "CAM_FRONT",
        "--height",
        "4",
        "--width",
        "6",
        "--ratio",
        "1.0",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_mask(&out).unwrap();
    assert!(m.bits().iter().all(|&b| b));
}

#[test]
fn mask_default_ratio_row_cardinality_and_graymap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.bin");
    let pgm = dir.path().join("m.pgm");
    for view in ["CAM_FRONT", "CAM_BACK", "CAM_FRONT_LEFT"] {
        let o = camgeom(&[
            "mask",
            "--poses",
            s(&fixture("rig6.poses")),
            "--view",
            view,
            "--height",
            "9",
            "--width",
            "16",
            "--frame",
            "2",
            "--out",
            s(&out),
            "--pgm",
            s(&pgm),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let m = read_mask(&out).unwrap();
        let want = keep_count(0.25, 2 * 9 * 16);
        assert_eq!(want, 72);
        assert!((0..m.rows()).all(|q| m.row_popcount(q) == want));
        let g = std::fs::read(&pgm).unwrap();
        assert!(g.starts_with(b"P5\n288 144\n255\n"));
    }
}

#[test]
fn mask_global_mode_and_sampson() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.bin");
    let o = camgeom(&[
        "mask",
        "--poses",
        s(&fixture("stereo.poses")),
        "--view",
        "center",
        "--height",
        "8",
        "--width",
        "8",
        "--tau-mode",
        "global",
        "--residual",
        "sampson",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_mask(&out).unwrap();
    assert_eq!(m.mode(), camgeom::TauMode::Global);
    let total: usize = (0..m.rows()).map(|q| m.row_popcount(q)).sum();
    assert_eq!(total, keep_count(0.25, m.bits().len()));
}

#[test]
fn view_without_neighbors() {
    let dir = tempfile::tempdir().unwrap();
    let o = camgeom(&[
        "mask",
        "--poses",
        s(&fixture("dolly3.poses")),
        "--view",
        "cam",
        "--height",
        "4",
        "--width",
        "4",
        "--out",
        s(&dir.path().join("m.bin")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no neighbors"));
}

#[test]
fn pure_rotation_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let poses = dir.path().join("rot.poses");
    std::fs::write(
        &poses,
        "view a 10 10 5 5 10 10\nview b 10 10 5 5 10 10\n\
         frame a 0 1 0 0 0 1 0 0 0 1 0 0 0\n\
         frame b 0 0 -1 0 1 0 0 0 0 1 0 0 0\n",
    )
    .unwrap();
    let o = camgeom(&[
        "fundamental",
        "--poses",
        s(&poses),
        "--local",
        "a",
        "--neighbor",
        "b",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("pure rotation"));
}

#[test]
fn fundamental_and_relpose_on_stereo() {
    let f = fixture("stereo.poses");
    let o = camgeom(&[
        "fundamental",
        "--poses",
        s(&f),
        "--local",
        "center",
        "--neighbor",
        "right",
    ]);
    assert!(o.status.success());
    let rows: Vec<Vec<f64>> = stdout(&o)
        .lines()
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    // rectified pair: F ∝ [[0,0,0],[0,0,-a],[0,a,0]]
    assert_eq!(rows.len(), 3);
    for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0), (2, 2)] {
        assert!(rows[i][j].abs() < 1e-12, "F[{i}][{j}] = {}", rows[i][j]);
    }
    assert!((rows[1][2] + rows[2][1]).abs() < 1e-12);

    let lit = camgeom(&[
        "fundamental",
        "--poses",
        s(&f),
        "--local",
        "center",
        "--neighbor",
        "right",
        "--paper-literal-F",
    ]);
    assert!(lit.status.success());

    let o = camgeom(&[
        "relpose",
        "--poses",
        s(&f),
        "--local",
        "center",
        "--neighbor",
        "right",
    ]);
    assert_eq!(stdout(&o), "R\n1 0 0\n0 1 0\n0 0 1\nt\n1 0 0\n");
}

#[test]
fn missing_pose_and_unknown_view() {
    let o = camgeom(&[
        "fundamental",
        "--poses",
        s(&fixture("rig6.poses")),
        "--local",
        "CAM_FRONT",
        "--neighbor",
        "CAM_BACK",
        "--frame",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = camgeom(&[
        "relpose",
        "--poses",
        s(&fixture("rig6.poses")),
        "--local",
        "NOPE",
        "--neighbor",
        "CAM_BACK",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_fixtures() {
    let o = camgeom(&[
        "eval",
        "--gen",
        s(&fixture("eval_gen_identical.traj")),
        "--gt",
        s(&fixture("eval_gt.traj")),
    ]);
    let out = stdout(&o);
    assert_eq!(
        (kv(&out, "rot_err"), kv(&out, "trans_err")),
        ("0".into(), "0".into())
    );
    assert_eq!(kv(&out, "success_rate"), "1");

    let single = stdout(&camgeom(&[
        "eval",
        "--gen",
        s(&fixture("eval_gen_single.traj")),
        "--gt",
        s(&fixture("eval_gt_single.traj")),
    ]));
    let failed = stdout(&camgeom(&[
        "eval",
        "--gen",
        s(&fixture("eval_gen_one_failed.traj")),
        "--gt",
        s(&fixture("eval_gt.traj")),
    ]));
    assert_eq!(kv(&failed, "success_rate"), "0.5");
    for key in ["rot_err", "trans_err"] {
        let a: f64 = kv(&single, key).parse().unwrap();
        let b: f64 = kv(&failed, key).parse().unwrap();
        assert!(a > 0.0);
        assert_eq!(b, 2.0 * a, "{key}");
    }

    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let yaw = stdout(&camgeom(&[
        "eval",
        "--gen",
        s(&fixture("eval_gen_yaw5.traj")),
        "--gt",
        s(&fixture("eval_gt_dolly5.traj")),
        "--json",
        s(&json),
    ]));
    let oracle = (0..5)
        .map(|k| if k == 0 { 0.0 } else { 5f64.to_radians() })
        .sum::<f64>()
        / 5.0;
    let got: f64 = kv(&yaw, "rot_err").parse().unwrap();
    assert!((got - oracle).abs() <= 1e-12);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(doc["n_samples"], 1);
    assert!((doc["rot_err"].as_f64().unwrap() - oracle).abs() <= 1e-12);
}

#[test]
fn eval_rejects_mismatched_files() {
    let o = camgeom(&[
        "eval",
        "--gen",
        s(&fixture("eval_gen_yaw5.traj")),
        "--gt",
        s(&fixture("eval_gt.traj")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = camgeom(&[
        "eval",
        "--gen",
        s(&fixture("eval_gen_single.traj")),
        "--gt",
        s(&fixture("eval_gt_dolly5.traj")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dropout_schedule_csv() {
    let o = camgeom(&["dropout-schedule", "--steps", "10", "--seed", "42"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "step,bev_map,bounding_boxes,first_frame,neighbor_view"
    );
    assert_eq!(lines.len(), 11);
    let policy = camgeom::DropoutPolicy::with_seed(42);
    for (step, line) in lines[1..].iter().enumerate() {
        let d = camgeom::sample_dropout(&policy, step as u64);
        let want: Vec<&str> = d.values().map(|&b| if b { "1" } else { "0" }).collect();
        assert_eq!(*line, format!("{step},{}", want.join(",")));
    }
}

#[test]
fn selfcheck_passes() {
    let o = camgeom(&["selfcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(
        stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(),
        4
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(camgeom(&[]).status.code(), Some(1));
    assert_eq!(camgeom(&["mask", "--ratio", "x"]).status.code(), Some(1));
    assert_eq!(
        camgeom(&["mask", "--tau-mode", "median"]).status.code(),
        Some(1)
    );
    assert_eq!(camgeom(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_ratio_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = camgeom(&[
        "mask",
        "--poses",
        s(&fixture("stereo.poses")),
        "--view",
        "center",
        "--height",
        "4",
        "--width",
        "4",
        "--ratio",
        "1.5",
        "--out",
        s(&dir.path().join("m.bin")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
