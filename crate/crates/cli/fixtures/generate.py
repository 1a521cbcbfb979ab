"""Regenerates the pose and trajectory fixtures in this directory.

Conventions: world y points down, z forward, x right. Rotations are stored
world->camera, so R = R_c2w^T and t = -R C.
"""
import math
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def rot_y(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_x(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def w2c(r_c2w, center):
    r = r_c2w.T
    t = -r @ np.asarray(center, dtype=float)
    return r, t


def nums(r, t):
    return " ".join(repr(float(x)) for x in list(r.reshape(-1)) + list(t))


def write(name, text):
    (HERE / name).write_text(text)


def rig6():
    # name, yaw (deg), mount offset on the vehicle
    cams = [
        ("CAM_FRONT", 0.0, (0.0, -1.5, 1.7)),
        ("CAM_FRONT_RIGHT", 55.0, (0.5, -1.5, 1.5)),
        ("CAM_BACK_RIGHT", 110.0, (0.5, -1.5, -0.4)),
        ("CAM_BACK", 180.0, (0.0, -1.5, -1.0)),
        ("CAM_BACK_LEFT", -110.0, (-0.5, -1.5, -0.4)),
        ("CAM_FRONT_LEFT", -55.0, (-0.5, -1.5, 1.5)),
    ]
    lines = ["# six-camera surround rig, 3 frames of forward motion"]
    for name, _, _ in cams:
        fx = 1266.4 if name != "CAM_BACK" else 800.0
        lines.append(f"view {name} {fx} {fx} 816.3 491.5 1600 900")
    n = len(cams)
    for i, (name, _, _) in enumerate(cams):
        left = cams[(i - 1) % n][0]
        right = cams[(i + 1) % n][0]
        lines.append(f"neighbors {name} {left} {right}")
    for k in range(3):
        ego_center = np.array([0.0, 0.0, 2.0 * k])
        ego_yaw = 2.0 * k
        for name, yaw, offset in cams:
            r_ego = rot_y(ego_yaw)
            center = ego_center + r_ego @ np.array(offset)
            r, t = w2c(r_ego @ rot_y(yaw), center)
            lines.append(f"frame {name} {k} {nums(r, t)}")
    write("rig6.poses", "\n".join(lines) + "\n")


def realestate():
    lines = ["# single handheld camera walking forward while panning", "view cam 320.0 320.0 320.0 180.0 640 360"]
    for k in range(8):
        center = (1.0 + 0.1 * math.sin(0.5 * k), -1.6 + 0.02 * k, 2.0 + 0.3 * k)
        r, t = w2c(rot_y(30.0 + 3.0 * k) @ rot_x(-1.0 * k), center)
        lines.append(f"frame cam {k} {nums(r, t)}")
    write("realestate.poses", "\n".join(lines) + "\n")


def dolly3():
    lines = ["# straight forward dolly", "view cam 64.0 64.0 32.0 24.0 64 48"]
    for k in range(3):
        r, t = w2c(np.eye(3), (0.0, 0.0, 0.5 * k))
        lines.append(f"frame cam {k} {nums(r, t)}")
    write("dolly3.poses", "\n".join(lines) + "\n")


def stereo():
    lines = [
        "# rectified triple: centre camera with left and right neighbours",
        "view left 32.0 32.0 16.0 16.0 32 32",
        "view center 32.0 32.0 16.0 16.0 32 32",
        "view right 32.0 32.0 16.0 16.0 32 32",
        "neighbors center left right",
        "neighbors left - center",
        "neighbors right center -",
    ]
    for name, x in (("left", -1.0), ("center", 0.0), ("right", 1.0)):
        r, t = w2c(np.eye(3), (x, 0.0, 0.0))
        lines.append(f"frame {name} 0 {nums(r, t)}")
    write("stereo.poses", "\n".join(lines) + "\n")


def identity():
    write(
        "identity.poses",
        "view cam 50 50 16 16 32 32\nframe cam 0 1 0 0 0 1 0 0 0 1 0 0 0\n",
    )


def malformed():
    write(
        "malformed.poses",
        "view cam 50 50 16 16 32 32\n"
        "frame cam 0 1 0 0 0 1 0 0 0 1 0 0 0\n"
        "frame cam 1 1 0 0 0 1 0 0 0 1 0 0\n",
    )


def traj(samples):
    out = []
    for sid, poses in samples:
        if poses is None:
            out.append(f"sample {sid} failed")
            continue
        out.append(f"sample {sid}")
        for p in poses:
            out.append("pose -" if p is None else f"pose {nums(*p)}")
    return "\n".join(out) + "\n"


def dolly_poses(n, yaw_after_first=0.0):
    poses = []
    for k in range(n):
        r = rot_y(yaw_after_first) if k > 0 else np.eye(3)
        poses.append(w2c(r, (0.0, 0.0, float(k))))
    return poses


def orbit_poses(n, jitter=0.0):
    poses = []
    for k in range(n):
        a = 10.0 * k
        center = (3.0 * math.sin(math.radians(a)) + jitter * k, 0.1 * k, 3.0 - 3.0 * math.cos(math.radians(a)))
        poses.append(w2c(rot_y(a + 2.0 * jitter * k), center))
    return poses


def eval_fixtures():
    gt = [("walk", orbit_poses(6)), ("dolly", dolly_poses(5))]
    write("eval_gt.traj", traj(gt))
    write("eval_gen_identical.traj", traj(gt))
    perturbed = orbit_poses(6, jitter=0.05)
    write("eval_gt_single.traj", traj([gt[0]]))
    write("eval_gen_single.traj", traj([("walk", perturbed)]))
    write("eval_gen_one_failed.traj", traj([("walk", perturbed), ("dolly", None)]))
    write("eval_gt_dolly5.traj", traj([("dolly", dolly_poses(5))]))
    write("eval_gen_yaw5.traj", traj([("dolly", dolly_poses(5, yaw_after_first=5.0))]))


if __name__ == "__main__":
    rig6()
    realestate()
    dolly3()
    stereo()
    identity()
    malformed()
    eval_fixtures()
