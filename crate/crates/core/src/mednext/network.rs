//! Toy MedNeXt encoder-decoder with per-level segmentation heads.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mednext::block::{accumulate, Block, BlockCache, BlockConfig};
use crate::nn::conv::{conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward};
use crate::nn::{ConvKernel, ConvTranspose3d, Padding, Real, Tensor};
use crate::rng::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    DiceCe,
    DiceCeFocal,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::DiceCe => "dice_ce",
            LossVariant::DiceCeFocal => "dice_ce_focal",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dice_ce" => Ok(LossVariant::DiceCe),
            "dice_ce_focal" => Ok(LossVariant::DiceCeFocal),
            other => Err(Error::Parse(format!("unknown loss variant {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegArch {
    pub in_channels: usize,
    pub levels: usize,
    pub base_channels: usize,
    pub ratio: usize,
    pub kernel: usize,
}

impl Default for SegArch {
    fn default() -> Self {
        Self {
            in_channels: 3,
            levels: 3,
            base_channels: 8,
            ratio: 2,
            kernel: 3,
        }
    }
}

impl SegArch {
    pub fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidArgument(format!("levels {} must be >= 2", self.levels)));
        }
        if self.in_channels == 0 || self.base_channels == 0 {
            return Err(Error::InvalidArgument("zero channel count".into()));
        }
        BlockConfig {
            channels: self.base_channels,
            ratio: self.ratio,
            kernel: self.kernel,
        }
        .validate()
    }

    /// Spatial sizes must halve cleanly at every downsampling step.
    pub fn check_input(&self, spatial: [usize; 3]) -> Result<()> {
        let f = 1 << (self.levels - 1);
        if spatial.iter().any(|&n| n == 0 || n % f != 0) {
            return Err(Error::ShapeMismatch(format!(
                "spatial size {spatial:?} not divisible by {f}"
            )));
        }
        Ok(())
    }

    fn block_cfg(&self, level: usize) -> BlockConfig {
        BlockConfig {
            channels: self.width(level),
            ratio: self.ratio,
            kernel: self.kernel,
        }
    }
}

/// Segmentation network parameters. The `(kernel, loss_variant)` pair
/// identifies the model family: (3, dice_ce), (5, dice_ce) and
/// (5, dice_ce_focal).
#[derive(Clone, Debug, PartialEq)]
pub struct SegModel<T> {
    pub arch: SegArch,
    pub loss_variant: LossVariant,
    pub seed: u64,
    pub epochs: usize,
    pub stem: ConvKernel<T>,
    pub enc: Vec<Block<T>>,
    pub down: Vec<Block<T>>,
    pub bottleneck: Block<T>,
    pub up: Vec<ConvTranspose3d<T>>,
    pub dec: Vec<Block<T>>,
    /// `heads[l]` emits logits at resolution level `l` (0 = full).
    pub heads: Vec<ConvKernel<T>>,
}

/// Kind of a parameter tensor, used by kernel transfer and inventories.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Depthwise,
    Other,
}

#[derive(Clone, Debug)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    pub len: usize,
}

pub struct ForwardCache<T> {
    input: Tensor<T>,
    enc: Vec<BlockCache<T>>,
    down: Vec<BlockCache<T>>,
    bottleneck: BlockCache<T>,
    /// Input of each upsampling layer, indexed by level.
    up_in: Vec<Tensor<T>>,
    dec: Vec<BlockCache<T>>,
    /// Input of each head, indexed by level.
    head_in: Vec<Tensor<T>>,
}

impl<T: Real> SegModel<T> {
    /// Zero-valued model (norm scales at one) with the given architecture.
    pub fn zeros(arch: SegArch, loss_variant: LossVariant) -> Result<Self> {
        arch.validate()?;
        let l = arch.levels;
        let c0 = arch.base_channels;
        let mut stem = ConvKernel::zeros(c0, arch.in_channels, [1; 3], 1);
        stem.bias = vec![T::zero(); c0];
        let enc = (0..l - 1).map(|i| Block::zeros(arch.block_cfg(i), arch.width(i), 1)).collect();
        let down = (0..l - 1)
            .map(|i| Block::zeros(arch.block_cfg(i), arch.width(i + 1), 2))
            .collect();
        let bottleneck = Block::zeros(arch.block_cfg(l - 1), arch.width(l - 1), 1);
        let up = (0..l - 1)
            .map(|i| ConvTranspose3d::zeros(arch.width(i + 1), arch.width(i), 2, 2))
            .collect();
        let dec = (0..l - 1).map(|i| Block::zeros(arch.block_cfg(i), arch.width(i), 1)).collect();
        let heads = (0..l).map(|i| ConvKernel::zeros(1, arch.width(i), [1; 3], 1)).collect();
        Ok(Self {
            arch,
            loss_variant,
            seed: 0,
            epochs: 0,
            stem,
            enc,
            down,
            bottleneck,
            up,
            dec,
            heads,
        })
    }

    /// Parameter slices in declaration order (this is the MDL1 payload order).
    pub fn param_slices(&self) -> Vec<(String, ParamKind, &[T])> {
        let mut out: Vec<(String, ParamKind, &[T])> = Vec::new();
        out.push(("stem.weight".into(), ParamKind::Other, &self.stem.weights[..]));
        out.push(("stem.bias".into(), ParamKind::Other, &self.stem.bias[..]));
        for i in 0..self.enc.len() {
            push_block(format!("enc{i}"), &self.enc[i], &mut out);
            push_block(format!("down{i}"), &self.down[i], &mut out);
        }
        push_block("bottleneck".into(), &self.bottleneck, &mut out);
        for i in (0..self.up.len()).rev() {
            out.push((format!("up{i}.weight"), ParamKind::Other, &self.up[i].weights[..]));
            out.push((format!("up{i}.bias"), ParamKind::Other, &self.up[i].bias[..]));
            push_block(format!("dec{i}"), &self.dec[i], &mut out);
        }
        for (i, h) in self.heads.iter().enumerate() {
            out.push((format!("head{i}.weight"), ParamKind::Other, &h.weights[..]));
            out.push((format!("head{i}.bias"), ParamKind::Other, &h.bias[..]));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![&mut self.stem.weights[..], &mut self.stem.bias[..]];
        for (e, d) in self.enc.iter_mut().zip(self.down.iter_mut()) {
            out.extend(e.param_slices_mut());
            out.extend(d.param_slices_mut());
        }
        out.extend(self.bottleneck.param_slices_mut());
        for (u, d) in self.up.iter_mut().zip(self.dec.iter_mut()).rev() {
            out.push(&mut u.weights[..]);
            out.push(&mut u.bias[..]);
            out.extend(d.param_slices_mut());
        }
        for h in self.heads.iter_mut() {
            out.push(&mut h.weights[..]);
            out.push(&mut h.bias[..]);
        }
        out
    }

    pub fn inventory(&self) -> Vec<ParamInfo> {
        self.param_slices()
            .into_iter()
            .map(|(name, kind, s)| ParamInfo { name, kind, len: s.len() })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|(_, _, s)| s.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.param_slices().into_iter().flat_map(|(_, _, s)| s.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    /// Same architecture and metadata with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for s in g.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = T::zero());
        }
        g
    }

    pub fn cast<U: Real>(&self) -> SegModel<U> {
        let mut out = SegModel::<U>::zeros(self.arch, self.loss_variant).expect("valid arch");
        out.seed = self.seed;
        out.epochs = self.epochs;
        let flat: Vec<U> = self.flat_params().iter().map(|v| U::from_f64c(v.to_f64c())).collect();
        out.set_flat_params(&flat).expect("same inventory");
        out
    }

    /// Per-level logits, index 0 at full resolution.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Vec<Tensor<T>>, ForwardCache<T>)> {
        self.arch.check_input(x.spatial())?;
        let l = self.arch.levels;
        let stem_out = conv3d_forward(x, &self.stem, Padding::Same)?;
        let mut cur = stem_out;
        let mut enc_c = Vec::with_capacity(l - 1);
        let mut down_c = Vec::with_capacity(l - 1);
        let mut skips = Vec::with_capacity(l - 1);
        for i in 0..l - 1 {
            let (e, c) = self.enc[i].forward(&cur)?;
            enc_c.push(c);
            let (d, c) = self.down[i].forward(&e)?;
            down_c.push(c);
            skips.push(e);
            cur = d;
        }
        let (b, bottleneck) = self.bottleneck.forward(&cur)?;
        let mut logits: Vec<Option<Tensor<T>>> = vec![None; l];
        let mut head_in: Vec<Option<Tensor<T>>> = vec![None; l];
        logits[l - 1] = Some(conv3d_forward(&b, &self.heads[l - 1], Padding::Same)?);
        head_in[l - 1] = Some(b.clone());
        let mut up_in: Vec<Option<Tensor<T>>> = vec![None; l - 1];
        let mut dec_c: Vec<Option<BlockCache<T>>> = (0..l - 1).map(|_| None).collect();
        cur = b;
        for i in (0..l - 1).rev() {
            let mut a = conv_transpose3d_forward(&cur, &self.up[i], Padding::Valid, skips[i].spatial())?;
            a.add_assign(&skips[i])?;
            up_in[i] = Some(cur);
            let (d, c) = self.dec[i].forward(&a)?;
            dec_c[i] = Some(c);
            logits[i] = Some(conv3d_forward(&d, &self.heads[i], Padding::Same)?);
            head_in[i] = Some(d.clone());
            cur = d;
        }
        let cache = ForwardCache {
            input: x.clone(),
            enc: enc_c,
            down: down_c,
            bottleneck,
            up_in: up_in.into_iter().map(Option::unwrap).collect(),
            dec: dec_c.into_iter().map(Option::unwrap).collect(),
            head_in: head_in.into_iter().map(Option::unwrap).collect(),
        };
        Ok((logits.into_iter().map(Option::unwrap).collect(), cache))
    }

    /// Backpropagates per-level logit gradients; returns parameter gradients
    /// (as a model of identical shape) and the input gradient.
    pub fn backward(&self, grad_logits: &[Tensor<T>], cache: &ForwardCache<T>) -> Result<(SegModel<T>, Tensor<T>)> {
        let l = self.arch.levels;
        if grad_logits.len() != l {
            return Err(Error::ShapeMismatch(format!("{} logit gradients for {l} levels", grad_logits.len())));
        }
        let mut grads = self.zeros_like();
        let head_grad = |i: usize, grads: &mut SegModel<T>| -> Result<Tensor<T>> {
            let g = conv3d_backward(&cache.head_in[i], &self.heads[i], Padding::Same, &grad_logits[i])?;
            accumulate(&mut grads.heads[i], &g.grad_w, &g.grad_b);
            Ok(g.grad_x)
        };
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; l - 1];
        // Gradient flowing into the output of decoder level 0.
        let mut carry: Option<Tensor<T>> = None;
        for i in 0..l - 1 {
            let mut gd = head_grad(i, &mut grads)?;
            if let Some(c) = carry.take() {
                gd.add_assign(&c)?;
            }
            let ga = self.dec[i].backward(&gd, &cache.dec[i], &mut grads.dec[i])?;
            let gu = conv_transpose3d_backward(&cache.up_in[i], &self.up[i], Padding::Valid, &ga)?;
            accumulate_t(&mut grads.up[i], &gu.grad_w, &gu.grad_b);
            skip_grads[i] = Some(ga);
            carry = Some(gu.grad_x);
        }
        let mut gb = head_grad(l - 1, &mut grads)?;
        if let Some(c) = carry.take() {
            gb.add_assign(&c)?;
        }
        let mut g = self.bottleneck.backward(&gb, &cache.bottleneck, &mut grads.bottleneck)?;
        for i in (0..l - 1).rev() {
            let mut ge = self.down[i].backward(&g, &cache.down[i], &mut grads.down[i])?;
            ge.add_assign(skip_grads[i].as_ref().expect("set in decoder pass"))?;
            g = self.enc[i].backward(&ge, &cache.enc[i], &mut grads.enc[i])?;
        }
        let gs = conv3d_backward(&cache.input, &self.stem, Padding::Same, &g)?;
        accumulate(&mut grads.stem, &gs.grad_w, &gs.grad_b);
        Ok((grads, gs.grad_x))
    }
}

fn accumulate_t<T: Real>(k: &mut ConvTranspose3d<T>, gw: &[T], gb: &[T]) {
    for (d, &s) in k.weights.iter_mut().zip(gw) {
        *d += s;
    }
    for (d, &s) in k.bias.iter_mut().zip(gb) {
        *d += s;
    }
}

fn push_block<'a, T: Real>(prefix: String, b: &'a Block<T>, out: &mut Vec<(String, ParamKind, &'a [T])>) {
    for (n, dw, s) in b.param_slices() {
        let kind = if dw { ParamKind::Depthwise } else { ParamKind::Other };
        out.push((format!("{prefix}.{n}"), kind, s));
    }
}

/// Builds a deterministically initialized network: He-uniform (fan-in) conv
/// weights, zero biases, unit norm scales.
pub fn build_network(levels: usize, base_channels: usize, kernel: usize, seed: u64) -> Result<SegModel<f32>> {
    build_network_with(
        SegArch {
            levels,
            base_channels,
            kernel,
            ..SegArch::default()
        },
        LossVariant::DiceCe,
        seed,
    )
}

pub fn build_network_with<T: Real>(arch: SegArch, loss: LossVariant, seed: u64) -> Result<SegModel<T>> {
    let mut m = SegModel::<T>::zeros(arch, loss)?;
    m.seed = seed;
    let mut rng = rng_for(seed, 0, stream::INIT);
    let mut init = |k: &mut [T], fan_in: usize| {
        let bound = (6.0 / fan_in as f64).sqrt();
        for w in k.iter_mut() {
            *w = T::from_f64c(rng.random_range(-bound..bound));
        }
    };
    let fan = |k: &ConvKernel<T>| k.in_per_group * k.taps();
    let stem_fan = fan(&m.stem);
    init(&mut m.stem.weights, stem_fan);
    let init_block = |b: &mut Block<T>, init: &mut dyn FnMut(&mut [T], usize)| {
        let f = fan(&b.dw);
        init(&mut b.dw.weights, f);
        let f = fan(&b.expand);
        init(&mut b.expand.weights, f);
        let f = fan(&b.compress);
        init(&mut b.compress.weights, f);
        if let Some(s) = b.skip.as_mut() {
            let f = s.in_per_group * s.taps();
            init(&mut s.weights, f);
        }
    };
    for i in 0..m.enc.len() {
        init_block(&mut m.enc[i], &mut init);
        init_block(&mut m.down[i], &mut init);
    }
    init_block(&mut m.bottleneck, &mut init);
    for i in (0..m.up.len()).rev() {
        let f = m.up[i].in_ch * 8;
        init(&mut m.up[i].weights, f);
        init_block(&mut m.dec[i], &mut init);
    }
    for h in m.heads.iter_mut() {
        let f = h.in_per_group;
        init(&mut h.weights, f);
    }
    Ok(m)
}
