//! Central-difference gradient verification.
//!
//! Every operation is reduced to a scalar loss `L = Σ outputs` over a flat
//! parameter vector; the harness compares the analytic gradient against
//! `(L(x + ε eᵢ) − L(x − ε eᵢ)) / 2ε` coordinate by coordinate.

use nalgebra::{DMatrix, DVector};

use crate::attention::{
    masked_cross_attention, masked_cross_attention_backward, temporal_attention,
    temporal_attention_backward, AttentionParams, LatentFeature,
};
use crate::epipolar::EpipolarMask;
use crate::error::{Error, Result};
use crate::injection::{inject_camera_backward, inject_camera_condition, InjectionBlockWeights};
use crate::scalar::Real;

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is ~0 are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// A scalar loss with an analytic gradient over a flat parameter vector.
pub trait Differentiable<T: Real> {
    /// Current parameter vector.
    fn parameters(&self) -> Vec<T>;

    fn loss(&self, params: &[T]) -> Result<T>;

    fn gradient(&self, params: &[T]) -> Result<Vec<T>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport<T: Real> {
    pub max_relative_error: T,
    /// Parameter index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: T,
    pub numeric: T,
    pub parameters: usize,
}

fn ensure_finite<T: Real>(x: T, what: &str) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Max relative error between analytic and central-difference gradients of
/// `op` at `point`. `eps` must lie in `[1e-7, 1e-3]`.
pub fn finite_difference_check<T: Real, D: Differentiable<T> + ?Sized>(
    op: &D,
    point: &[T],
    eps: T,
) -> Result<GradCheckReport<T>> {
    if eps < T::lit(1e-7) || eps > T::lit(1e-3) {
        return Err(Error::invalid(format!(
            "finite-difference step {} outside [1e-7, 1e-3]",
            eps.as_f64()
        )));
    }
    let analytic = op.gradient(point)?;
    if analytic.len() != point.len() {
        return Err(Error::shape("gradient length differs from parameter count"));
    }
    let floor = T::lit(RELATIVE_ERROR_FLOOR);
    let two_eps = eps + eps;
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: T::zero(),
        worst_index: 0,
        analytic: T::zero(),
        numeric: T::zero(),
        parameters: point.len(),
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = ensure_finite(op.loss(&x)?, "loss")?;
        x[i] = orig - eps;
        let minus = ensure_finite(op.loss(&x)?, "loss")?;
        x[i] = orig;
        let numeric = (plus - minus) / two_eps;
        let a = ensure_finite(analytic[i], "analytic gradient")?;
        let denom = a.abs().max(numeric.abs()).max(floor);
        let rel = (a - numeric).abs() / denom;
        if rel > report.max_relative_error || i == 0 {
            report = GradCheckReport {
                max_relative_error: rel,
                worst_index: i,
                analytic: a,
                numeric,
                parameters: point.len(),
            };
        }
    }
    Ok(report)
}

fn total<T: Real>(f: &LatentFeature<T>) -> T {
    f.data().iter().fold(T::zero(), |acc, x| acc + *x)
}

fn ones_like<T: Real>(f: &LatentFeature<T>) -> LatentFeature<T> {
    let [a, b, c, d] = f.shape();
    LatentFeature::new(vec![T::one(); f.data().len()], a, b, c, d).expect("shape is valid")
}

fn feature_like<T: Real>(f: &LatentFeature<T>, data: &[T]) -> Result<LatentFeature<T>> {
    let [a, b, c, d] = f.shape();
    LatentFeature::new(data.to_vec(), a, b, c, d)
}

fn split<'a, T>(xs: &'a [T], sizes: &[usize]) -> Vec<&'a [T]> {
    let mut off = 0;
    sizes
        .iter()
        .map(|&n| {
            let s = &xs[off..off + n];
            off += n;
            s
        })
        .collect()
}

/// `L(x) = Σ (A x + b)`; gradient is exact, used to validate the harness itself.
#[derive(Clone, Debug)]
pub struct LinearMapOp<T: Real> {
    pub a: DMatrix<T>,
    pub b: DVector<T>,
    pub x: DVector<T>,
}

impl<T: Real> Differentiable<T> for LinearMapOp<T> {
    fn parameters(&self) -> Vec<T> {
        self.x.as_slice().to_vec()
    }

    fn loss(&self, params: &[T]) -> Result<T> {
        let x = DVector::from_column_slice(params);
        Ok((&self.a * x + &self.b).sum())
    }

    fn gradient(&self, _params: &[T]) -> Result<Vec<T>> {
        Ok(self.a.row_sum().transpose().as_slice().to_vec())
    }
}

/// Temporal attention; parameters are `z` followed by the attention weights.
#[derive(Clone, Debug)]
pub struct TemporalAttentionOp<T: Real> {
    pub z: LatentFeature<T>,
    pub params: AttentionParams<T>,
}

impl<T: Real> TemporalAttentionOp<T> {
    fn unpack(&self, flat: &[T]) -> Result<(LatentFeature<T>, AttentionParams<T>)> {
        let parts = split(flat, &[self.z.data().len(), self.params.param_count()]);
        Ok((
            feature_like(&self.z, parts[0])?,
            self.params.with_flat(parts[1]),
        ))
    }
}

impl<T: Real> Differentiable<T> for TemporalAttentionOp<T> {
    fn parameters(&self) -> Vec<T> {
        let mut v = self.z.data().to_vec();
        v.extend(self.params.to_flat());
        v
    }

    fn loss(&self, flat: &[T]) -> Result<T> {
        let (z, p) = self.unpack(flat)?;
        Ok(total(&temporal_attention(&z, &p)?))
    }

    fn gradient(&self, flat: &[T]) -> Result<Vec<T>> {
        let (z, p) = self.unpack(flat)?;
        let (dz, dp) = temporal_attention_backward(&z, &p, &ones_like(&z))?;
        let mut g = dz.data().to_vec();
        g.extend(dp.to_flat());
        Ok(g)
    }
}

/// Camera injection; parameters are `z`, the camera condition, then every block weight.
#[derive(Clone, Debug)]
pub struct InjectCameraOp<T: Real> {
    pub z: LatentFeature<T>,
    pub cond: LatentFeature<T>,
    pub weights: InjectionBlockWeights<T>,
}

impl<T: Real> InjectCameraOp<T> {
    fn unpack(
        &self,
        flat: &[T],
    ) -> Result<(LatentFeature<T>, LatentFeature<T>, InjectionBlockWeights<T>)> {
        let parts = split(
            flat,
            &[
                self.z.data().len(),
                self.cond.data().len(),
                self.weights.param_count(),
            ],
        );
        Ok((
            feature_like(&self.z, parts[0])?,
            feature_like(&self.cond, parts[1])?,
            self.weights.with_flat(parts[2]),
        ))
    }
}

impl<T: Real> Differentiable<T> for InjectCameraOp<T> {
    fn parameters(&self) -> Vec<T> {
        let mut v = self.z.data().to_vec();
        v.extend_from_slice(self.cond.data());
        v.extend(self.weights.to_flat());
        v
    }

    fn loss(&self, flat: &[T]) -> Result<T> {
        let (z, c, w) = self.unpack(flat)?;
        Ok(total(&inject_camera_condition(&z, &c, &w)?))
    }

    fn gradient(&self, flat: &[T]) -> Result<Vec<T>> {
        let (z, c, w) = self.unpack(flat)?;
        let g = inject_camera_backward(&z, &c, &w, &ones_like(&z))?;
        let mut v = g.z.data().to_vec();
        v.extend_from_slice(g.cond.data());
        v.extend(g.weights.to_flat());
        Ok(v)
    }
}

/// Masked cross-attention; parameters are `z`, the neighbor condition, then
/// the attention weights. The mask is held fixed.
#[derive(Clone, Debug)]
pub struct MaskedCrossAttentionOp<T: Real> {
    pub z: LatentFeature<T>,
    pub neighbor_cond: LatentFeature<T>,
    pub mask: EpipolarMask,
    pub params: AttentionParams<T>,
}

impl<T: Real> MaskedCrossAttentionOp<T> {
    fn unpack(
        &self,
        flat: &[T],
    ) -> Result<(LatentFeature<T>, LatentFeature<T>, AttentionParams<T>)> {
        let parts = split(
            flat,
            &[
                self.z.data().len(),
                self.neighbor_cond.data().len(),
                self.params.param_count(),
            ],
        );
        Ok((
            feature_like(&self.z, parts[0])?,
            feature_like(&self.neighbor_cond, parts[1])?,
            self.params.with_flat(parts[2]),
        ))
    }
}

impl<T: Real> Differentiable<T> for MaskedCrossAttentionOp<T> {
    fn parameters(&self) -> Vec<T> {
        let mut v = self.z.data().to_vec();
        v.extend_from_slice(self.neighbor_cond.data());
        v.extend(self.params.to_flat());
        v
    }

    fn loss(&self, flat: &[T]) -> Result<T> {
        let (z, c, p) = self.unpack(flat)?;
        Ok(total(&masked_cross_attention(&z, &c, &self.mask, &p)?))
    }

    fn gradient(&self, flat: &[T]) -> Result<Vec<T>> {
        let (z, c, p) = self.unpack(flat)?;
        let (dz, dc, dp) = masked_cross_attention_backward(&z, &c, &self.mask, &p, &ones_like(&z))?;
        let mut v = dz.data().to_vec();
        v.extend_from_slice(dc.data());
        v.extend(dp.to_flat());
        Ok(v)
    }
}
