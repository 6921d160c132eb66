//! Residual MedNeXt block: depthwise k³ conv → group norm → 1³ expansion to
//! R·C → GELU → 1³ compression → residual add.

use crate::error::{Error, Result};
use crate::nn::act::{gelu, gelu_backward};
use crate::nn::conv::{conv3d_backward, conv3d_forward};
use crate::nn::norm::{group_norm, group_norm_backward, GroupNormCache, GN_EPS};
use crate::nn::{ConvKernel, Padding, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub channels: usize,
    pub ratio: usize,
    pub kernel: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.ratio == 0 {
            return Err(Error::InvalidArgument("channels and ratio must be >= 1".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }
}

/// Block parameters. `skip` is present when the block changes resolution or
/// width (the downsampling variant); otherwise the residual is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub dw: ConvKernel<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub expand: ConvKernel<T>,
    pub compress: ConvKernel<T>,
    pub skip: Option<ConvKernel<T>>,
}

pub struct BlockCache<T> {
    x: Tensor<T>,
    gn: GroupNormCache<T>,
    gn_out: Tensor<T>,
    pre_act: Tensor<T>,
    act: Tensor<T>,
}

impl<T: Real> Block<T> {
    /// Zero-initialized block mapping `cfg.channels` to `out_ch` with the given
    /// depthwise stride. Norm scale starts at one.
    pub fn zeros(cfg: BlockConfig, out_ch: usize, stride: usize) -> Self {
        let c = cfg.channels;
        let hidden = cfg.ratio * c;
        let skip = (stride != 1 || out_ch != c)
            .then(|| ConvKernel::zeros(out_ch, c, [1; 3], 1).with_stride(stride));
        Self {
            dw: ConvKernel::zeros(c, 1, [cfg.kernel; 3], c).with_stride(stride),
            gamma: vec![T::one(); c],
            beta: vec![T::zero(); c],
            expand: ConvKernel::zeros(hidden, c, [1; 3], 1),
            compress: ConvKernel::zeros(out_ch, hidden, [1; 3], 1),
            skip,
        }
    }

    pub fn channels(&self) -> usize {
        self.dw.out_ch
    }

    pub fn out_channels(&self) -> usize {
        self.compress.out_ch
    }

    pub fn kernel(&self) -> usize {
        self.dw.size[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        if x.channels() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "block expects {} channels, got {}",
                self.channels(),
                x.channels()
            )));
        }
        let dw_out = conv3d_forward(x, &self.dw, Padding::Same)?;
        let (gn_out, gn) = group_norm(&dw_out, self.channels(), &self.gamma, &self.beta, GN_EPS)?;
        let pre_act = conv3d_forward(&gn_out, &self.expand, Padding::Same)?;
        let act = gelu(&pre_act);
        let mut y = conv3d_forward(&act, &self.compress, Padding::Same)?;
        match &self.skip {
            Some(s) => y.add_assign(&conv3d_forward(x, s, Padding::Same)?)?,
            None => y.add_assign(x)?,
        }
        let cache = BlockCache {
            x: x.clone(),
            gn,
            gn_out,
            pre_act,
            act,
        };
        Ok((y, cache))
    }

    /// Returns the input gradient and accumulates parameter gradients into
    /// `grads` (a block of identical shape).
    pub fn backward(&self, grad_out: &Tensor<T>, cache: &BlockCache<T>, grads: &mut Block<T>) -> Result<Tensor<T>> {
        let gc = conv3d_backward(&cache.act, &self.compress, Padding::Same, grad_out)?;
        accumulate(&mut grads.compress, &gc.grad_w, &gc.grad_b);
        let g_pre = gelu_backward(&cache.pre_act, &gc.grad_x);
        let ge = conv3d_backward(&cache.gn_out, &self.expand, Padding::Same, &g_pre)?;
        accumulate(&mut grads.expand, &ge.grad_w, &ge.grad_b);
        let gn = group_norm_backward(&ge.grad_x, &cache.gn, &self.gamma)?;
        add_into(&mut grads.gamma, &gn.grad_gamma);
        add_into(&mut grads.beta, &gn.grad_beta);
        let gd = conv3d_backward(&cache.x, &self.dw, Padding::Same, &gn.grad_x)?;
        accumulate(&mut grads.dw, &gd.grad_w, &gd.grad_b);
        let mut gx = gd.grad_x;
        match &self.skip {
            Some(s) => {
                let gs = conv3d_backward(&cache.x, s, Padding::Same, grad_out)?;
                if let Some(target) = grads.skip.as_mut() {
                    accumulate(target, &gs.grad_w, &gs.grad_b);
                }
                gx.add_assign(&gs.grad_x)?;
            }
            None => gx.add_assign(grad_out)?,
        }
        Ok(gx)
    }

    /// Parameter slices in declaration order with a depthwise flag.
    pub fn param_slices(&self) -> Vec<(&'static str, bool, &[T])> {
        let mut v: Vec<(&'static str, bool, &[T])> = vec![
            ("dw.weight", true, &self.dw.weights[..]),
            ("dw.bias", false, &self.dw.bias[..]),
            ("norm.gamma", false, &self.gamma[..]),
            ("norm.beta", false, &self.beta[..]),
            ("expand.weight", false, &self.expand.weights[..]),
            ("expand.bias", false, &self.expand.bias[..]),
            ("compress.weight", false, &self.compress.weights[..]),
            ("compress.bias", false, &self.compress.bias[..]),
        ];
        if let Some(s) = &self.skip {
            v.push(("skip.weight", false, &s.weights[..]));
            v.push(("skip.bias", false, &s.bias[..]));
        }
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = vec![
            &mut self.dw.weights[..],
            &mut self.dw.bias[..],
            &mut self.gamma[..],
            &mut self.beta[..],
            &mut self.expand.weights[..],
            &mut self.expand.bias[..],
            &mut self.compress.weights[..],
            &mut self.compress.bias[..],
        ];
        if let Some(s) = &mut self.skip {
            v.push(&mut s.weights[..]);
            v.push(&mut s.bias[..]);
        }
        v
    }
}

pub(crate) fn accumulate<T: Real>(k: &mut ConvKernel<T>, gw: &[T], gb: &[T]) {
    add_into(&mut k.weights, gw);
    add_into(&mut k.bias, gb);
}

pub(crate) fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Standalone block forward for a stride-1, width-preserving block.
pub fn mednext_block_forward<T: Real>(x: &Tensor<T>, cfg: BlockConfig, params: &Block<T>) -> Result<Tensor<T>> {
    cfg.validate()?;
    if params.channels() != cfg.channels || params.kernel() != cfg.kernel {
        return Err(Error::ShapeMismatch("block parameters do not match config".into()));
    }
    Ok(params.forward(x)?.0)
}
