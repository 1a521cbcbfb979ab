//! Zero-initialized camera injection around a pretrained temporal attention.
//!
//! ```text
//! z_cam = Linear_in(concat(z, p))
//! z_cam = Linear_out(TemporalAttn_cam(z_cam))
//! z_out = z_cam + TemporalAttn_pretrained(z)
//! ```
//!
//! At initialization `Linear_in = [I | 0]` with zero bias and `Linear_out = 0`,
//! so the block reproduces the pretrained path exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::attention::{
    attend, attend_backward, temporal_attention, temporal_attention_backward, AttentionParams,
    LatentFeature,
};
use crate::error::{Error, Result};
use crate::plucker::{PluckerTensor, CHANNELS};
use crate::scalar::Real;

/// Affine map applied per token: `y = W x + b`, `W: out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T: Real> {
    pub weight: DMatrix<T>,
    pub bias: DVector<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(weight: DMatrix<T>, bias: DVector<T>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::shape("linear bias length differs from output size"));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Rows of `x` are tokens.
    pub fn forward(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut y = x * self.weight.transpose();
        for mut row in y.row_iter_mut() {
            row += self.bias.transpose();
        }
        y
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.weight.as_slice().to_vec();
        v.extend_from_slice(self.bias.as_slice());
        v
    }

    pub fn with_flat(&self, flat: &[T]) -> Self {
        let n = self.weight.len();
        Self {
            weight: DMatrix::from_column_slice(self.out_dim(), self.in_dim(), &flat[..n]),
            bias: DVector::from_column_slice(&flat[n..n + self.bias.len()]),
        }
    }
}

/// Parameters of the camera-injection block around one temporal attention.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionBlockWeights<T: Real> {
    /// `(c + 6) → c`
    pub linear_in: Linear<T>,
    pub temporal_attn_cam: AttentionParams<T>,
    /// `c → c`
    pub linear_out: Linear<T>,
    /// Frozen pretrained layer.
    pub temporal_attn_pretrained: AttentionParams<T>,
}

impl<T: Real> InjectionBlockWeights<T> {
    /// Fresh block around `pretrained`: the camera attention starts as a copy
    /// of it, `linear_in = [I | 0]`, `linear_out = 0`.
    pub fn zero_init(pretrained: AttentionParams<T>) -> Self {
        let c = pretrained.query_dim();
        let mut linear_in = Linear::zeros(c, c + CHANNELS);
        for i in 0..c {
            linear_in.weight[(i, i)] = T::one();
        }
        Self {
            linear_in,
            temporal_attn_cam: pretrained.clone(),
            linear_out: Linear::zeros(c, c),
            temporal_attn_pretrained: pretrained,
        }
    }

    /// Fresh block around a seeded random stand-in for pretrained weights.
    pub fn fresh<R: Rng>(rng: &mut R, heads: usize, head_dim: usize) -> Self {
        let c = heads * head_dim;
        Self::zero_init(AttentionParams::random(rng, heads, head_dim, c))
    }

    /// Every parameter drawn at random (a "trained" block).
    pub fn random<R: Rng>(rng: &mut R, heads: usize, head_dim: usize) -> Self {
        let c = heads * head_dim;
        let mut lin = |out: usize, inp: usize| {
            let b = 1.0 / (inp as f64).sqrt();
            Linear {
                weight: DMatrix::from_fn(out, inp, |_, _| T::lit(rng.random_range(-b..b))),
                bias: DVector::from_fn(out, |_, _| T::lit(rng.random_range(-b..b))),
            }
        };
        let linear_in = lin(c, c + CHANNELS);
        let linear_out = lin(c, c);
        Self {
            linear_in,
            linear_out,
            temporal_attn_cam: AttentionParams::random(rng, heads, head_dim, c),
            temporal_attn_pretrained: AttentionParams::random(rng, heads, head_dim, c),
        }
    }

    pub fn channels(&self) -> usize {
        self.linear_out.out_dim()
    }

    /// True when the block is in its zero-initialized state.
    pub fn is_zero_initialized(&self) -> bool {
        let c = self.channels();
        let lin_in_ok = self.linear_in.bias.iter().all(|b| *b == T::zero())
            && (0..c).all(|r| {
                (0..c + CHANNELS).all(|k| {
                    let want = if r == k { T::one() } else { T::zero() };
                    self.linear_in.weight[(r, k)] == want
                })
            });
        let lin_out_ok = self.linear_out.weight.iter().all(|x| *x == T::zero())
            && self.linear_out.bias.iter().all(|x| *x == T::zero());
        lin_in_ok && lin_out_ok
    }

    fn validate(&self) -> Result<()> {
        let c = self.channels();
        let ok = self.linear_in.out_dim() == c
            && self.linear_in.in_dim() == c + CHANNELS
            && self.linear_out.in_dim() == c
            && self.temporal_attn_cam.query_dim() == c
            && self.temporal_attn_cam.context_dim() == c
            && self.temporal_attn_pretrained.query_dim() == c
            && self.temporal_attn_pretrained.context_dim() == c;
        if !ok {
            return Err(Error::shape(format!(
                "injection block weights inconsistent with {c} channels"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.linear_in.param_count()
            + self.temporal_attn_cam.param_count()
            + self.linear_out.param_count()
            + self.temporal_attn_pretrained.param_count()
    }

    /// `linear_in, temporal_attn_cam, linear_out, temporal_attn_pretrained`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.linear_in.to_flat();
        v.extend(self.temporal_attn_cam.to_flat());
        v.extend(self.linear_out.to_flat());
        v.extend(self.temporal_attn_pretrained.to_flat());
        v
    }

    pub fn with_flat(&self, flat: &[T]) -> Self {
        let mut off = 0;
        let mut next = |n: usize| {
            let s = &flat[off..off + n];
            off += n;
            s
        };
        let linear_in = self.linear_in.with_flat(next(self.linear_in.param_count()));
        let cam = self
            .temporal_attn_cam
            .with_flat(next(self.temporal_attn_cam.param_count()));
        let linear_out = self
            .linear_out
            .with_flat(next(self.linear_out.param_count()));
        let pre = self
            .temporal_attn_pretrained
            .with_flat(next(self.temporal_attn_pretrained.param_count()));
        Self {
            linear_in,
            temporal_attn_cam: cam,
            linear_out,
            temporal_attn_pretrained: pre,
        }
    }
}

impl<T: Real> From<&PluckerTensor<T>> for LatentFeature<T> {
    fn from(p: &PluckerTensor<T>) -> Self {
        LatentFeature::new(
            p.data().to_vec(),
            p.frames(),
            CHANNELS,
            p.height(),
            p.width(),
        )
        .expect("plucker tensors are finite and non-empty")
    }
}

fn check_condition<T: Real>(
    z: &LatentFeature<T>,
    cond: &LatentFeature<T>,
    w: &InjectionBlockWeights<T>,
) -> Result<()> {
    w.validate()?;
    if cond.channels() != CHANNELS {
        return Err(Error::shape(format!(
            "camera condition must have {CHANNELS} channels, got {}",
            cond.channels()
        )));
    }
    if z.frames() != cond.frames() || z.height() != cond.height() || z.width() != cond.width() {
        return Err(Error::shape(format!(
            "latent {:?} and camera condition {:?} disagree on (frames, h, w)",
            z.shape(),
            cond.shape()
        )));
    }
    if z.channels() != w.channels() {
        return Err(Error::shape(format!(
            "latent has {} channels, block expects {}",
            z.channels(),
            w.channels()
        )));
    }
    Ok(())
}

fn concat_tokens<T: Real>(
    z: &LatentFeature<T>,
    cond: &LatentFeature<T>,
    row: usize,
    col: usize,
) -> DMatrix<T> {
    let (zt, pt) = (z.temporal_tokens(row, col), cond.temporal_tokens(row, col));
    let c = zt.ncols();
    DMatrix::from_fn(zt.nrows(), c + pt.ncols(), |f, k| {
        if k < c {
            zt[(f, k)]
        } else {
            pt[(f, k - c)]
        }
    })
}

/// The camera branch alone: `Linear_out(TemporalAttn_cam(Linear_in(concat(z, p))))`.
pub fn camera_branch<T: Real>(
    z: &LatentFeature<T>,
    cond: &LatentFeature<T>,
    w: &InjectionBlockWeights<T>,
) -> Result<LatentFeature<T>> {
    check_condition(z, cond, w)?;
    let mut out = LatentFeature::zeros(z.frames(), z.channels(), z.height(), z.width());
    for row in 0..z.height() {
        for col in 0..z.width() {
            let u = concat_tokens(z, cond, row, col);
            let z_in = w.linear_in.forward(&u);
            let a = attend(&z_in, &z_in, None, &w.temporal_attn_cam)?.out;
            out.add_temporal_tokens(row, col, &w.linear_out.forward(&a));
        }
    }
    Ok(out)
}

/// Injection with an arbitrary 6-channel camera condition.
pub fn inject_camera_condition<T: Real>(
    z: &LatentFeature<T>,
    cond: &LatentFeature<T>,
    w: &InjectionBlockWeights<T>,
) -> Result<LatentFeature<T>> {
    let cam = camera_branch(z, cond, w)?;
    let pre = temporal_attention(z, &w.temporal_attn_pretrained)?;
    let data = cam
        .data()
        .iter()
        .zip(pre.data())
        .map(|(a, b)| *a + *b)
        .collect();
    LatentFeature::new(data, z.frames(), z.channels(), z.height(), z.width())
}

/// Injects a plücker embedding into the temporal attention output of `z`.
pub fn inject_camera<T: Real>(
    z: &LatentFeature<T>,
    p: &PluckerTensor<T>,
    w: &InjectionBlockWeights<T>,
) -> Result<LatentFeature<T>> {
    inject_camera_condition(z, &LatentFeature::from(p), w)
}

/// Gradients of [`inject_camera_condition`].
#[derive(Clone, Debug)]
pub struct InjectionGrads<T: Real> {
    pub z: LatentFeature<T>,
    pub cond: LatentFeature<T>,
    pub weights: InjectionBlockWeights<T>,
}

pub fn inject_camera_backward<T: Real>(
    z: &LatentFeature<T>,
    cond: &LatentFeature<T>,
    w: &InjectionBlockWeights<T>,
    d_out: &LatentFeature<T>,
) -> Result<InjectionGrads<T>> {
    check_condition(z, cond, w)?;
    let c = z.channels();
    let (mut d_z, d_pre) = temporal_attention_backward(z, &w.temporal_attn_pretrained, d_out)?;
    let mut d_cond = LatentFeature::zeros(cond.frames(), CHANNELS, cond.height(), cond.width());
    let mut d_in = Linear::zeros(c, c + CHANNELS);
    let mut d_outl = Linear::zeros(c, c);
    let mut d_cam = w.temporal_attn_cam.zero_grads();
    for row in 0..z.height() {
        for col in 0..z.width() {
            let u = concat_tokens(z, cond, row, col);
            let z_in = w.linear_in.forward(&u);
            let cache = attend(&z_in, &z_in, None, &w.temporal_attn_cam)?;
            let dy = d_out.temporal_tokens(row, col);

            d_outl.weight += dy.transpose() * &cache.out;
            d_outl.bias += dy.row_sum().transpose();
            let d_a = &dy * &w.linear_out.weight;

            let b = attend_backward(&cache, &z_in, &z_in, &w.temporal_attn_cam, &d_a);
            d_cam.accumulate(&b.d_params);
            let d_zin = b.d_xq + b.d_xkv;

            d_in.weight += d_zin.transpose() * &u;
            d_in.bias += d_zin.row_sum().transpose();
            let d_u = &d_zin * &w.linear_in.weight;
            d_z.add_temporal_tokens(row, col, &d_u.columns(0, c).into_owned());
            d_cond.add_temporal_tokens(row, col, &d_u.columns(c, CHANNELS).into_owned());
        }
    }
    Ok(InjectionGrads {
        z: d_z,
        cond: d_cond,
        weights: InjectionBlockWeights {
            linear_in: d_in,
            temporal_attn_cam: d_cam,
            linear_out: d_outl,
            temporal_attn_pretrained: d_pre,
        },
    })
}
