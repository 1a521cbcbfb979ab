//! Fundamental matrices between rig neighbors and the quantile-thresholded
//! cross-attention masks derived from them.
//!
//! Masks have one row per local-view query pixel (`h·w` rows) and one column
//! per neighbor key pixel (`2·h·w` columns). Columns `0..h·w` address the
//! left neighbor and `h·w..2·h·w` the right neighbor, each in row-major pixel
//! order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use nalgebra::{Matrix3, Vector3};

use crate::camera::{relative_pose, skew, CameraPose, Rig};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Fraction of neighbor keys each query keeps by default.
pub const DEFAULT_MASK_RATIO: f64 = 0.25;

/// Which closed form produces `F`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FundamentalForm {
    /// `K_L⁻ᵀ [t]ₓ R K_N⁻¹` with `(R, t)` mapping neighbor to local camera
    /// coordinates; satisfies `x_Lᵀ F x_N = 0` for corresponding pixels.
    #[default]
    Geometric,
    /// `K_N⁻¹ R [t]ₓ K_L⁻¹` with `R = R_Nᵀ R_L`, `t = R_Nᵀ (t_L − t_N)` taken
    /// literally from the stored matrices. Compatibility only: it does not
    /// satisfy the epipolar constraint for general poses.
    Literal,
}

/// Rank-2, unit-Frobenius-norm map from neighbor pixels to local epipolar lines.
#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalMatrix<T: Real> {
    f: Matrix3<T>,
    source_view: String,
    target_view: String,
    source_size: (usize, usize),
    target_size: (usize, usize),
}

impl<T: Real> FundamentalMatrix<T> {
    /// Normalizes `f` to unit Frobenius norm and checks that it has rank 2.
    /// Sizes are native `(width, height)` of the neighbor and local images.
    pub fn new(
        f: Matrix3<T>,
        source_view: impl Into<String>,
        target_view: impl Into<String>,
        source_size: (usize, usize),
        target_size: (usize, usize),
    ) -> Result<Self> {
        let norm = f.norm();
        if !norm.is_finite() {
            return Err(Error::NonFinite("fundamental matrix".into()));
        }
        if norm <= T::zero() {
            return Err(Error::PureRotation);
        }
        let f = f / norm;
        let sv = f.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if lo > T::validation_tolerance() * hi {
            return Err(Error::invalid(format!(
                "fundamental matrix is not rank 2 (singular values {:?})",
                sv.iter().map(|s| s.as_f64()).collect::<Vec<_>>()
            )));
        }
        Ok(Self {
            f,
            source_view: source_view.into(),
            target_view: target_view.into(),
            source_size,
            target_size,
        })
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.f
    }

    pub fn source_view(&self) -> &str {
        &self.source_view
    }

    pub fn target_view(&self) -> &str {
        &self.target_view
    }

    /// Native `(width, height)` of the neighbor image.
    pub fn source_size(&self) -> (usize, usize) {
        self.source_size
    }

    /// Native `(width, height)` of the local image.
    pub fn target_size(&self) -> (usize, usize) {
        self.target_size
    }

    /// `|x_Lᵀ F x_N|` for native pixel coordinates.
    pub fn algebraic_residual(&self, local_px: &Vector3<T>, neighbor_px: &Vector3<T>) -> T {
        local_px.dot(&(self.f * neighbor_px)).abs()
    }
}

/// Fundamental matrix mapping `neighbor` pixels to epipolar lines in `local`.
pub fn fundamental_matrix<T: Real>(
    local: &CameraPose<T>,
    neighbor: &CameraPose<T>,
    form: FundamentalForm,
) -> Result<FundamentalMatrix<T>> {
    let f = match form {
        FundamentalForm::Geometric => {
            let rel = relative_pose(&local.extrinsics, &neighbor.extrinsics);
            let t = rel.translation();
            if t.norm() <= T::baseline_tolerance() {
                return Err(Error::PureRotation);
            }
            local.intrinsics.k_inv().transpose()
                * skew(t)
                * rel.rotation()
                * neighbor.intrinsics.k_inv()
        }
        FundamentalForm::Literal => {
            let (r_l, t_l) = (local.extrinsics.rotation(), local.extrinsics.translation());
            let (r_n, t_n) = (
                neighbor.extrinsics.rotation(),
                neighbor.extrinsics.translation(),
            );
            let r = r_n.transpose() * r_l;
            let t = r_n.transpose() * (t_l - t_n);
            if t.norm() <= T::baseline_tolerance() {
                return Err(Error::PureRotation);
            }
            neighbor.intrinsics.k_inv() * r * skew(&t) * local.intrinsics.k_inv()
        }
    };
    let size = |p: &CameraPose<T>| (p.intrinsics.width(), p.intrinsics.height());
    FundamentalMatrix::new(
        f,
        neighbor.view_id.clone(),
        local.view_id.clone(),
        size(neighbor),
        size(local),
    )
}

/// Per-pair residual used to rank neighbor keys.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResidualKind {
    /// `|x_Lᵀ F x_N|` with `F` at unit Frobenius norm.
    #[default]
    Algebraic,
    /// Square root of the Sampson error, a first-order pixel distance.
    Sampson,
}

/// Dense `(h·w) × (2·h·w)` matrix of non-negative residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct EpipolarResidualField<T: Real> {
    values: Vec<T>,
    h: usize,
    w: usize,
}

impl<T: Real> EpipolarResidualField<T> {
    pub fn from_values(values: Vec<T>, h: usize, w: usize) -> Result<Self> {
        let hw = h * w;
        if hw == 0 || values.len() != hw * 2 * hw {
            return Err(Error::shape(format!(
                "residual field of {} values does not match {h}x{w}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid("residuals must be finite and non-negative"));
        }
        Ok(Self { values, h, w })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn rows(&self) -> usize {
        self.h * self.w
    }

    pub fn cols(&self) -> usize {
        2 * self.h * self.w
    }

    pub fn get(&self, query: usize, key: usize) -> T {
        self.values[query * self.cols() + key]
    }

    pub fn row(&self, query: usize) -> &[T] {
        let c = self.cols();
        &self.values[query * c..(query + 1) * c]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

fn homogeneous_grid<T: Real>(size: (usize, usize), h: usize, w: usize) -> Vec<Vector3<T>> {
    let half = T::lit(0.5);
    let sx = T::from_count(size.0) / T::from_count(w);
    let sy = T::from_count(size.1) / T::from_count(h);
    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            out.push(Vector3::new(
                (T::from_count(col) + half) * sx,
                (T::from_count(row) + half) * sy,
                T::one(),
            ));
        }
    }
    out
}

/// Residuals of every local query pixel against every key pixel of the left
/// then right neighbor, sampled at pixel centers of an `h × w` grid.
pub fn residual_field<T: Real>(
    left: &FundamentalMatrix<T>,
    right: &FundamentalMatrix<T>,
    h: usize,
    w: usize,
    kind: ResidualKind,
) -> Result<EpipolarResidualField<T>> {
    if h == 0 || w == 0 {
        return Err(Error::shape("grid dimensions must be positive"));
    }
    if left.target_view != right.target_view || left.target_size != right.target_size {
        return Err(Error::invalid(format!(
            "neighbors target different views: {} and {}",
            left.target_view, right.target_view
        )));
    }
    let hw = h * w;
    let queries = homogeneous_grid::<T>(left.target_size, h, w);
    let sides = [left, right];
    let keys: Vec<Vec<Vector3<T>>> = sides
        .iter()
        .map(|f| homogeneous_grid(f.source_size, h, w))
        .collect();
    // F·x_N per key, shared by every query row
    let key_lines: Vec<Vec<Vector3<T>>> = sides
        .iter()
        .zip(&keys)
        .map(|(f, ks)| ks.iter().map(|k| f.f * k).collect())
        .collect();

    let mut values = Vec::with_capacity(hw * 2 * hw);
    for q in &queries {
        for side in 0..2 {
            let back = sides[side].f.transpose() * q;
            let back_sq = back.x * back.x + back.y * back.y;
            for fx in &key_lines[side] {
                let algebraic = q.dot(fx).abs();
                let v = match kind {
                    ResidualKind::Algebraic => algebraic,
                    ResidualKind::Sampson => {
                        let denom = fx.x * fx.x + fx.y * fx.y + back_sq;
                        if denom > T::zero() {
                            algebraic / denom.sqrt()
                        } else {
                            T::zero()
                        }
                    }
                };
                values.push(v);
            }
        }
    }
    EpipolarResidualField::from_values(values, h, w)
}

/// How the threshold τ is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TauMode {
    /// Every query keeps its own lowest-residual fraction of keys.
    #[default]
    PerRow,
    /// One threshold over the whole field; rows may end up empty.
    Global,
}

/// Number of entries kept out of `n` at `ratio`, i.e. `floor(ratio · n)`.
pub fn keep_count(ratio: f64, n: usize) -> usize {
    // guard against products like 0.29 · 100 = 28.999999999999996
    let k = (ratio * n as f64 * (1.0 + 1e-12)).floor() as usize;
    k.min(n)
}

/// Boolean `(h·w) × (2·h·w)` cross-attention mask.
#[derive(Clone, Debug, PartialEq)]
pub struct EpipolarMask {
    bits: Vec<bool>,
    h: usize,
    w: usize,
    ratio: f64,
    mode: TauMode,
}

impl EpipolarMask {
    /// In [`TauMode::PerRow`] every row must hold exactly
    /// `keep_count(ratio, 2hw)` set bits.
    pub fn from_bits(
        bits: Vec<bool>,
        h: usize,
        w: usize,
        ratio: f64,
        mode: TauMode,
    ) -> Result<Self> {
        let hw = h * w;
        if hw == 0 {
            return Err(Error::shape("mask dimensions must be positive"));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::invalid(format!("ratio {ratio} outside (0, 1]")));
        }
        if bits.len() != hw * 2 * hw {
            return Err(Error::shape(format!(
                "{} mask bits do not match {h}x{w}",
                bits.len()
            )));
        }
        let mask = Self {
            bits,
            h,
            w,
            ratio,
            mode,
        };
        if mode == TauMode::PerRow {
            let want = keep_count(ratio, 2 * hw);
            if let Some(q) = (0..hw).find(|&q| mask.row_popcount(q) != want) {
                return Err(Error::invalid(format!(
                    "mask row {q} has {} set bits, expected {want}",
                    mask.row_popcount(q)
                )));
            }
        }
        Ok(mask)
    }

    /// All-true mask.
    pub fn full(h: usize, w: usize) -> Self {
        let hw = h * w;
        Self {
            bits: vec![true; hw * 2 * hw],
            h,
            w,
            ratio: 1.0,
            mode: TauMode::PerRow,
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn mode(&self) -> TauMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.h * self.w
    }

    pub fn cols(&self) -> usize {
        2 * self.h * self.w
    }

    pub fn get(&self, query: usize, key: usize) -> bool {
        self.bits[query * self.cols() + key]
    }

    pub fn row(&self, query: usize) -> &[bool] {
        let c = self.cols();
        &self.bits[query * c..(query + 1) * c]
    }

    pub fn row_popcount(&self, query: usize) -> usize {
        self.row(query).iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

fn by_value_then_index<T: Real>(values: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| {
        values[*a]
            .partial_cmp(&values[*b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    }
}

fn select_smallest<T: Real>(values: &[T], keep: usize, out: &mut [bool]) {
    if keep == 0 {
        return;
    }
    if keep >= values.len() {
        out.iter_mut().for_each(|b| *b = true);
        return;
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let cmp = by_value_then_index(values);
    idx.select_nth_unstable_by(keep - 1, &cmp);
    for &i in &idx[..keep] {
        out[i] = true;
    }
}

/// Keeps the lowest-residual keys; ties at the threshold go to the smaller
/// key index.
pub fn epipolar_mask<T: Real>(
    field: &EpipolarResidualField<T>,
    ratio: f64,
    mode: TauMode,
) -> Result<EpipolarMask> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("ratio {ratio} outside (0, 1]")));
    }
    let (rows, cols) = (field.rows(), field.cols());
    let mut bits = vec![false; rows * cols];
    match mode {
        TauMode::PerRow => {
            let keep = keep_count(ratio, cols);
            for q in 0..rows {
                select_smallest(field.row(q), keep, &mut bits[q * cols..(q + 1) * cols]);
            }
        }
        TauMode::Global => {
            let keep = keep_count(ratio, rows * cols);
            select_smallest(field.values(), keep, &mut bits);
        }
    }
    EpipolarMask::from_bits(bits, field.h, field.w, ratio, mode)
}

/// Mask construction settings shared by the rig driver and the CLI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskOptions {
    pub ratio: f64,
    pub tau_mode: TauMode,
    pub residual: ResidualKind,
    pub form: FundamentalForm,
}

impl Default for MaskOptions {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_MASK_RATIO,
            tau_mode: TauMode::PerRow,
            residual: ResidualKind::Algebraic,
            form: FundamentalForm::Geometric,
        }
    }
}

fn pose_of<'a, T: Real>(
    poses: &'a BTreeMap<String, CameraPose<T>>,
    view: &str,
) -> Result<&'a CameraPose<T>> {
    poses
        .get(view)
        .ok_or_else(|| Error::MissingPose(view.to_string()))
}

/// Mask for a single rig view; errors if the view lacks either neighbor.
pub fn view_mask<T: Real>(
    rig: &Rig,
    poses: &BTreeMap<String, CameraPose<T>>,
    view: &str,
    h: usize,
    w: usize,
    opts: &MaskOptions,
) -> Result<EpipolarMask> {
    if !rig.views().iter().any(|v| v == view) {
        return Err(Error::invalid(format!("unknown view {view}")));
    }
    let (left, right) = rig
        .neighbor_pair(view)
        .ok_or_else(|| Error::NoNeighbors(view.to_string()))?;
    let local = pose_of(poses, view)?;
    let f_left = fundamental_matrix(local, pose_of(poses, left)?, opts.form)?;
    let f_right = fundamental_matrix(local, pose_of(poses, right)?, opts.form)?;
    let field = residual_field(&f_left, &f_right, h, w, opts.residual)?;
    epipolar_mask(&field, opts.ratio, opts.tau_mode)
}

/// Masks for every rig view, plus one warning per view skipped for lacking a
/// neighbor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RigMasks {
    pub masks: BTreeMap<String, EpipolarMask>,
    pub warnings: Vec<String>,
}

pub fn rig_masks<T: Real>(
    rig: &Rig,
    poses: &BTreeMap<String, CameraPose<T>>,
    h: usize,
    w: usize,
    opts: &MaskOptions,
) -> Result<RigMasks> {
    for v in rig.views() {
        pose_of(poses, v)?;
    }
    let mut out = RigMasks::default();
    for v in rig.views() {
        if rig.neighbor_pair(v).is_none() {
            let msg = format!("view {v} lacks a left or right neighbor; no mask emitted");
            warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        out.masks
            .insert(v.clone(), view_mask(rig, poses, v, h, w, opts)?);
    }
    Ok(out)
}
