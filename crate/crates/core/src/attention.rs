//! Dense multi-head attention with explicit backward passes.
//!
//! Two instantiations are provided: temporal self-attention along the frame
//! axis at every spatial location, and masked cross-attention from a local
//! view's pixels to the concatenated left/right neighbor pixels.

use nalgebra::DMatrix;
use rand::Rng;

use crate::epipolar::EpipolarMask;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `(frames, channels, h, w)` feature map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentFeature<T: Real> {
    data: Vec<T>,
    frames: usize,
    channels: usize,
    h: usize,
    w: usize,
}

impl<T: Real> LatentFeature<T> {
    pub fn new(data: Vec<T>, frames: usize, channels: usize, h: usize, w: usize) -> Result<Self> {
        if frames == 0 || channels == 0 || h == 0 || w == 0 {
            return Err(Error::shape("feature dimensions must be positive"));
        }
        if data.len() != frames * channels * h * w {
            return Err(Error::shape(format!(
                "{} values do not fill ({frames}, {channels}, {h}, {w})",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("latent feature".into()));
        }
        Ok(Self {
            data,
            frames,
            channels,
            h,
            w,
        })
    }

    pub fn zeros(frames: usize, channels: usize, h: usize, w: usize) -> Self {
        Self {
            data: vec![T::zero(); frames * channels * h * w],
            frames,
            channels,
            h,
            w,
        }
    }

    pub fn random<R: Rng>(rng: &mut R, frames: usize, channels: usize, h: usize, w: usize) -> Self {
        let data = (0..frames * channels * h * w)
            .map(|_| T::lit(rng.random_range(-1.0..1.0)))
            .collect();
        Self {
            data,
            frames,
            channels,
            h,
            w,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.channels, self.h, self.w]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn index(&self, frame: usize, channel: usize, row: usize, col: usize) -> usize {
        ((frame * self.channels + channel) * self.h + row) * self.w + col
    }

    pub fn get(&self, frame: usize, channel: usize, row: usize, col: usize) -> T {
        self.data[self.index(frame, channel, row, col)]
    }

    /// Tokens along the frame axis at one pixel: `frames × channels`.
    pub(crate) fn temporal_tokens(&self, row: usize, col: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.frames, self.channels, |f, c| self.get(f, c, row, col))
    }

    pub(crate) fn add_temporal_tokens(&mut self, row: usize, col: usize, tokens: &DMatrix<T>) {
        for f in 0..self.frames {
            for c in 0..self.channels {
                let i = self.index(f, c, row, col);
                self.data[i] += tokens[(f, c)];
            }
        }
    }

    /// Tokens over the spatial grid of one frame: `(h·w) × channels`.
    pub(crate) fn spatial_tokens(&self, frame: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.h * self.w, self.channels, |p, c| {
            self.get(frame, c, p / self.w, p % self.w)
        })
    }

    pub(crate) fn add_spatial_tokens(&mut self, frame: usize, tokens: &DMatrix<T>) {
        for p in 0..self.h * self.w {
            for c in 0..self.channels {
                let i = self.index(frame, c, p / self.w, p % self.w);
                self.data[i] += tokens[(p, c)];
            }
        }
    }
}

/// Projection matrices of one attention layer.
///
/// `wq: inner × query_dim`, `wk, wv: inner × context_dim`,
/// `wo: query_dim × inner`, with `inner = heads · head_dim = query_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T: Real> {
    pub heads: usize,
    pub head_dim: usize,
    pub wq: DMatrix<T>,
    pub wk: DMatrix<T>,
    pub wv: DMatrix<T>,
    pub wo: DMatrix<T>,
}

impl<T: Real> AttentionParams<T> {
    pub fn new(
        heads: usize,
        head_dim: usize,
        wq: DMatrix<T>,
        wk: DMatrix<T>,
        wv: DMatrix<T>,
        wo: DMatrix<T>,
    ) -> Result<Self> {
        let p = Self {
            heads,
            head_dim,
            wq,
            wk,
            wv,
            wo,
        };
        p.validate()?;
        Ok(p)
    }

    /// Uniform `±1/√fan_in` initialization.
    pub fn random<R: Rng>(rng: &mut R, heads: usize, head_dim: usize, context_dim: usize) -> Self {
        let c = heads * head_dim;
        let mut init = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-bound..bound)))
        };
        let wq = init(c, c);
        let wk = init(c, context_dim);
        let wv = init(c, context_dim);
        let wo = init(c, c);
        Self {
            heads,
            head_dim,
            wq,
            wk,
            wv,
            wo,
        }
    }

    pub fn query_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn context_dim(&self) -> usize {
        self.wk.ncols()
    }

    fn validate(&self) -> Result<()> {
        let c = self.query_dim();
        if c == 0 {
            return Err(Error::shape(
                "attention needs at least one head of size >= 1",
            ));
        }
        let kv = self.wk.ncols();
        let ok = self.wq.shape() == (c, c)
            && self.wk.shape() == (c, kv)
            && self.wv.shape() == (c, kv)
            && self.wo.shape() == (c, c);
        if !ok {
            return Err(Error::shape(format!(
                "attention projections inconsistent with {} heads x {}",
                self.heads, self.head_dim
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.wq.len() + self.wk.len() + self.wv.len() + self.wo.len()
    }

    /// Column-major concatenation of `wq, wk, wv, wo`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for m in [&self.wq, &self.wk, &self.wv, &self.wo] {
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat), reusing this layer's shapes.
    pub fn with_flat(&self, flat: &[T]) -> Self {
        let mut off = 0;
        let mut take = |m: &DMatrix<T>| {
            let n = m.len();
            let out = DMatrix::from_column_slice(m.nrows(), m.ncols(), &flat[off..off + n]);
            off += n;
            out
        };
        Self {
            heads: self.heads,
            head_dim: self.head_dim,
            wq: take(&self.wq),
            wk: take(&self.wk),
            wv: take(&self.wv),
            wo: take(&self.wo),
        }
    }

    pub(crate) fn zero_grads(&self) -> AttentionParams<T> {
        AttentionParams {
            heads: self.heads,
            head_dim: self.head_dim,
            wq: DMatrix::zeros(self.wq.nrows(), self.wq.ncols()),
            wk: DMatrix::zeros(self.wk.nrows(), self.wk.ncols()),
            wv: DMatrix::zeros(self.wv.nrows(), self.wv.ncols()),
            wo: DMatrix::zeros(self.wo.nrows(), self.wo.ncols()),
        }
    }

    pub(crate) fn accumulate(&mut self, other: &AttentionParams<T>) {
        self.wq += &other.wq;
        self.wk += &other.wk;
        self.wv += &other.wv;
        self.wo += &other.wo;
    }
}

/// Forward intermediates kept for the backward pass.
pub(crate) struct AttentionCache<T: Real> {
    q: DMatrix<T>,
    k: DMatrix<T>,
    v: DMatrix<T>,
    /// One `n_q × n_k` probability matrix per head.
    probs: Vec<DMatrix<T>>,
    o: DMatrix<T>,
    pub(crate) out: DMatrix<T>,
}

/// Row-wise softmax over unmasked entries; masked entries get weight 0 and are
/// excluded from the max subtraction.
fn masked_softmax<T: Real>(logits: &DMatrix<T>, mask: Option<&[bool]>) -> Result<DMatrix<T>> {
    let (nq, nk) = logits.shape();
    let mut p = DMatrix::zeros(nq, nk);
    for i in 0..nq {
        let keep = |j: usize| mask.is_none_or(|m| m[i * nk + j]);
        let mut max: Option<T> = None;
        for j in (0..nk).filter(|&j| keep(j)) {
            let x = logits[(i, j)];
            max = Some(match max {
                Some(m) if m >= x => m,
                _ => x,
            });
        }
        let max = max.ok_or(Error::EmptyAttentionRow { row: i })?;
        let mut sum = T::zero();
        for j in (0..nk).filter(|&j| keep(j)) {
            let e = (logits[(i, j)] - max).exp();
            p[(i, j)] = e;
            sum += e;
        }
        for j in 0..nk {
            p[(i, j)] /= sum;
        }
    }
    Ok(p)
}

/// `xq: n_q × query_dim`, `xkv: n_k × context_dim`, `mask: n_q × n_k` row-major.
pub(crate) fn attend<T: Real>(
    xq: &DMatrix<T>,
    xkv: &DMatrix<T>,
    mask: Option<&[bool]>,
    params: &AttentionParams<T>,
) -> Result<AttentionCache<T>> {
    if xq.ncols() != params.query_dim() || xkv.ncols() != params.context_dim() {
        return Err(Error::shape(format!(
            "attention expects {}/{} channels, got {}/{}",
            params.query_dim(),
            params.context_dim(),
            xq.ncols(),
            xkv.ncols()
        )));
    }
    let (nq, nk) = (xq.nrows(), xkv.nrows());
    if mask.is_some_and(|m| m.len() != nq * nk) {
        return Err(Error::shape("mask does not match query/key counts"));
    }
    let q = xq * params.wq.transpose();
    let k = xkv * params.wk.transpose();
    let v = xkv * params.wv.transpose();
    let scale = T::one() / T::from_count(params.head_dim).sqrt();
    let mut o = DMatrix::zeros(nq, params.query_dim());
    let mut probs = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let cols = h * params.head_dim;
        let qh = q.columns(cols, params.head_dim);
        let kh = k.columns(cols, params.head_dim);
        let vh = v.columns(cols, params.head_dim);
        let logits = (qh * kh.transpose()) * scale;
        let p = masked_softmax(&logits, mask)?;
        o.columns_mut(cols, params.head_dim).copy_from(&(&p * vh));
        probs.push(p);
    }
    let out = &o * params.wo.transpose();
    Ok(AttentionCache {
        q,
        k,
        v,
        probs,
        o,
        out,
    })
}

/// Gradients of `attend` with respect to its inputs and parameters.
pub(crate) struct AttentionBackward<T: Real> {
    pub(crate) d_xq: DMatrix<T>,
    pub(crate) d_xkv: DMatrix<T>,
    pub(crate) d_params: AttentionParams<T>,
}

pub(crate) fn attend_backward<T: Real>(
    cache: &AttentionCache<T>,
    xq: &DMatrix<T>,
    xkv: &DMatrix<T>,
    params: &AttentionParams<T>,
    d_out: &DMatrix<T>,
) -> AttentionBackward<T> {
    let scale = T::one() / T::from_count(params.head_dim).sqrt();
    let mut g = params.zero_grads();
    g.wo = d_out.transpose() * &cache.o;
    let d_o = d_out * &params.wo;

    let mut d_q = DMatrix::zeros(cache.q.nrows(), cache.q.ncols());
    let mut d_k = DMatrix::zeros(cache.k.nrows(), cache.k.ncols());
    let mut d_v = DMatrix::zeros(cache.v.nrows(), cache.v.ncols());
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = h * params.head_dim;
        let d_oh = d_o.columns(cols, params.head_dim);
        let qh = cache.q.columns(cols, params.head_dim);
        let kh = cache.k.columns(cols, params.head_dim);
        let vh = cache.v.columns(cols, params.head_dim);

        d_v.columns_mut(cols, params.head_dim)
            .copy_from(&(p.transpose() * d_oh));
        let d_p = d_oh * vh.transpose();
        // softmax backward: dS = P ⊙ (dP − rowsum(dP ⊙ P))
        let mut d_s = p.component_mul(&d_p);
        for i in 0..d_s.nrows() {
            let row_dot = d_s.row(i).sum();
            for j in 0..d_s.ncols() {
                d_s[(i, j)] = p[(i, j)] * (d_p[(i, j)] - row_dot);
            }
        }
        d_s *= scale;
        d_q.columns_mut(cols, params.head_dim)
            .copy_from(&(&d_s * kh));
        d_k.columns_mut(cols, params.head_dim)
            .copy_from(&(d_s.transpose() * qh));
    }
    g.wq = d_q.transpose() * xq;
    g.wk = d_k.transpose() * xkv;
    g.wv = d_v.transpose() * xkv;
    let d_xq = &d_q * &params.wq;
    let d_xkv = &d_k * &params.wk + &d_v * &params.wv;
    AttentionBackward {
        d_xq,
        d_xkv,
        d_params: g,
    }
}

fn check_temporal<T: Real>(z: &LatentFeature<T>, params: &AttentionParams<T>) -> Result<()> {
    params.validate()?;
    if z.channels != params.query_dim() || params.context_dim() != params.query_dim() {
        return Err(Error::shape(format!(
            "temporal attention over {} channels with a {}→{} layer",
            z.channels,
            params.context_dim(),
            params.query_dim()
        )));
    }
    Ok(())
}

/// Scaled dot-product self-attention along the frame axis at every pixel.
pub fn temporal_attention<T: Real>(
    z: &LatentFeature<T>,
    params: &AttentionParams<T>,
) -> Result<LatentFeature<T>> {
    check_temporal(z, params)?;
    let mut out = LatentFeature::zeros(z.frames, z.channels, z.h, z.w);
    for row in 0..z.h {
        for col in 0..z.w {
            let x = z.temporal_tokens(row, col);
            let cache = attend(&x, &x, None, params)?;
            out.add_temporal_tokens(row, col, &cache.out);
        }
    }
    Ok(out)
}

/// Backward of [`temporal_attention`] for an upstream gradient `d_out`.
pub(crate) fn temporal_attention_backward<T: Real>(
    z: &LatentFeature<T>,
    params: &AttentionParams<T>,
    d_out: &LatentFeature<T>,
) -> Result<(LatentFeature<T>, AttentionParams<T>)> {
    check_temporal(z, params)?;
    let mut d_z = LatentFeature::zeros(z.frames, z.channels, z.h, z.w);
    let mut d_params = params.zero_grads();
    for row in 0..z.h {
        for col in 0..z.w {
            let x = z.temporal_tokens(row, col);
            let cache = attend(&x, &x, None, params)?;
            let dy = d_out.temporal_tokens(row, col);
            let b = attend_backward(&cache, &x, &x, params, &dy);
            d_z.add_temporal_tokens(row, col, &(b.d_xq + b.d_xkv));
            d_params.accumulate(&b.d_params);
        }
    }
    Ok((d_z, d_params))
}

/// Neighbor condition `(frames, c', h, 2w)` arranged as key tokens in mask
/// column order: left half pixels first, then right half, each row-major.
fn neighbor_tokens<T: Real>(cond: &LatentFeature<T>, frame: usize, w: usize) -> DMatrix<T> {
    let hw = cond.h * w;
    DMatrix::from_fn(2 * hw, cond.channels, |k, c| {
        let (side, p) = (k / hw, k % hw);
        cond.get(frame, c, p / w, side * w + p % w)
    })
}

fn add_neighbor_tokens<T: Real>(
    cond: &mut LatentFeature<T>,
    frame: usize,
    w: usize,
    tokens: &DMatrix<T>,
) {
    let hw = cond.h * w;
    for k in 0..2 * hw {
        let (side, p) = (k / hw, k % hw);
        for c in 0..cond.channels {
            let i = cond.index(frame, c, p / w, side * w + p % w);
            cond.data[i] += tokens[(k, c)];
        }
    }
}

fn check_cross<T: Real>(
    z: &LatentFeature<T>,
    cond: &LatentFeature<T>,
    mask: &EpipolarMask,
    params: &AttentionParams<T>,
) -> Result<()> {
    params.validate()?;
    if z.channels != params.query_dim() || cond.channels != params.context_dim() {
        return Err(Error::shape(format!(
            "cross attention layer {}→{} does not fit query {} / context {} channels",
            params.context_dim(),
            params.query_dim(),
            z.channels,
            cond.channels
        )));
    }
    if cond.frames != z.frames || cond.h != z.h || cond.w != 2 * z.w {
        return Err(Error::shape(format!(
            "neighbor condition {:?} does not match latent {:?} (expected width 2w)",
            cond.shape(),
            z.shape()
        )));
    }
    if mask.height() != z.h || mask.width() != z.w {
        return Err(Error::shape(format!(
            "mask {}x{} does not match latent {}x{}",
            mask.height(),
            mask.width(),
            z.h,
            z.w
        )));
    }
    Ok(())
}

/// Per-frame cross-attention from local pixels to the concatenated neighbor
/// pixels, restricted to keys whose mask bit is set.
pub fn masked_cross_attention<T: Real>(
    z: &LatentFeature<T>,
    neighbor_cond: &LatentFeature<T>,
    mask: &EpipolarMask,
    params: &AttentionParams<T>,
) -> Result<LatentFeature<T>> {
    check_cross(z, neighbor_cond, mask, params)?;
    let mut out = LatentFeature::zeros(z.frames, z.channels, z.h, z.w);
    for f in 0..z.frames {
        let xq = z.spatial_tokens(f);
        let xkv = neighbor_tokens(neighbor_cond, f, z.w);
        let cache = attend(&xq, &xkv, Some(mask.bits()), params)?;
        out.add_spatial_tokens(f, &cache.out);
    }
    Ok(out)
}

pub(crate) fn masked_cross_attention_backward<T: Real>(
    z: &LatentFeature<T>,
    neighbor_cond: &LatentFeature<T>,
    mask: &EpipolarMask,
    params: &AttentionParams<T>,
    d_out: &LatentFeature<T>,
) -> Result<(LatentFeature<T>, LatentFeature<T>, AttentionParams<T>)> {
    check_cross(z, neighbor_cond, mask, params)?;
    let mut d_z = LatentFeature::zeros(z.frames, z.channels, z.h, z.w);
    let c = neighbor_cond;
    let mut d_cond = LatentFeature::zeros(c.frames, c.channels, c.h, c.w);
    let mut d_params = params.zero_grads();
    for f in 0..z.frames {
        let xq = z.spatial_tokens(f);
        let xkv = neighbor_tokens(neighbor_cond, f, z.w);
        let cache = attend(&xq, &xkv, Some(mask.bits()), params)?;
        let dy = d_out.spatial_tokens(f);
        let b = attend_backward(&cache, &xq, &xkv, params, &dy);
        d_z.add_spatial_tokens(f, &b.d_xq);
        add_neighbor_tokens(&mut d_cond, f, z.w, &b.d_xkv);
        d_params.accumulate(&b.d_params);
    }
    Ok((d_z, d_cond, d_params))
}
