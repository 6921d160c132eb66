//! Segmentation losses on single-channel sigmoid logits, deep-supervision
//! weighting and target pyramids.

use crate::error::{Error, Result};
use crate::mednext::network::LossVariant;
use crate::nn::act::{sigmoid_scalar, softplus};
use crate::nn::{Real, Tensor};
use crate::volume::Mask3D;

pub const DICE_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { gamma: 2.0, alpha: 0.25 }
    }
}

/// Scalar loss value and its gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub grad: Tensor<T>,
}

fn check_pair<T: Real>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    logits.check_same(target)?;
    if target.data().iter().any(|&g| g != T::zero() && g != T::one()) {
        return Err(Error::InvalidArgument("target must be binary".into()));
    }
    if logits.is_empty() {
        return Err(Error::ShapeMismatch("empty logits".into()));
    }
    Ok(())
}

/// `L = L_dice + L_ce`: batch-global soft Dice on sigmoid probabilities plus
/// mean binary cross-entropy.
pub fn dice_ce_loss<T: Real>(logits: &Tensor<T>, target: &Tensor<T>, eps: f64) -> Result<LossOutput<T>> {
    check_pair(logits, target)?;
    let n = logits.len() as f64;
    let mut spg = 0.0;
    let mut sp = 0.0;
    let mut sg = 0.0;
    let mut ce = 0.0;
    let probs: Vec<f64> = logits.data().iter().map(|z| sigmoid_scalar(z.to_f64c())).collect();
    for ((&p, z), g) in probs.iter().zip(logits.data()).zip(target.data()) {
        let (z, g) = (z.to_f64c(), g.to_f64c());
        spg += p * g;
        sp += p;
        sg += g;
        ce += softplus(z) - g * z;
    }
    let num = 2.0 * spg + eps;
    let den = sp + sg + eps;
    let loss = 1.0 - num / den + ce / n;
    let mut grad = Tensor::zeros(logits.shape());
    for ((gv, &p), g) in grad.data_mut().iter_mut().zip(&probs).zip(target.data()) {
        let g = g.to_f64c();
        let d_dice = -(2.0 * g * den - num) / (den * den) * p * (1.0 - p);
        let d_ce = (p - g) / n;
        *gv = T::from_f64c(d_dice + d_ce);
    }
    Ok(LossOutput { loss, grad })
}

/// Mean over voxels of `-alpha_t (1 - p_t)^gamma log p_t`.
pub fn focal_loss<T: Real>(logits: &Tensor<T>, target: &Tensor<T>, params: FocalParams) -> Result<LossOutput<T>> {
    let FocalParams { gamma, alpha } = params;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("focal gamma {gamma} must be >= 0")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("focal alpha {alpha} must be in (0,1)")));
    }
    check_pair(logits, target)?;
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Tensor::zeros(logits.shape());
    for ((gv, z), g) in grad.data_mut().iter_mut().zip(logits.data()).zip(target.data()) {
        let positive = *g == T::one();
        let (s, sign, at) = if positive {
            (z.to_f64c(), 1.0, alpha)
        } else {
            (-z.to_f64c(), -1.0, 1.0 - alpha)
        };
        let pt = sigmoid_scalar(s);
        let qt = sigmoid_scalar(-s);
        let log_pt = -softplus(-s);
        let mod_ = qt.powf(gamma);
        total += -at * mod_ * log_pt;
        let dfds = at * mod_ * (gamma * pt * log_pt - qt);
        *gv = T::from_f64c(sign * dfds / n);
    }
    Ok(LossOutput { loss: total / n, grad })
}

/// `w_l = 2^-l`, renormalized to sum to one.
pub fn deep_supervision_weights(levels: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..levels).map(|l| 0.5f64.powi(l as i32)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Weighted sum of per-level losses and the per-level logit gradients.
pub fn segmentation_loss<T: Real>(
    logits: &[Tensor<T>],
    targets: &[Tensor<T>],
    weights: &[f64],
    variant: LossVariant,
    focal: FocalParams,
) -> Result<(f64, Vec<Tensor<T>>)> {
    if logits.len() != targets.len() || logits.len() != weights.len() {
        return Err(Error::ShapeMismatch("level count of logits, targets and weights".into()));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for ((z, g), &w) in logits.iter().zip(targets).zip(weights) {
        let mut out = dice_ce_loss(z, g, DICE_EPS)?;
        if variant == LossVariant::DiceCeFocal {
            let f = focal_loss(z, g, focal)?;
            out.loss += f.loss;
            out.grad.add_assign(&f.grad)?;
        }
        total += w * out.loss;
        let wt = T::from_f64c(w);
        out.grad.data_mut().iter_mut().for_each(|v| *v *= wt);
        grads.push(out.grad);
    }
    Ok((total, grads))
}

/// Repeated 2³ max-pooling: a coarse voxel is foreground if any voxel in its
/// window is.
pub fn downsample_target(mask: &Mask3D, level: usize) -> Result<Mask3D> {
    let d = mask.dims();
    let f = 1usize << level;
    if d.iter().any(|&n| n % f != 0) {
        return Err(Error::ShapeMismatch(format!("dims {d:?} not divisible by {f}")));
    }
    let out = [d[0] / f, d[1] / f, d[2] / f];
    let mut m = Mask3D::zeros(out);
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if mask.get(x, y, z) {
                    m.set(x / f, y / f, z / f, true);
                }
            }
        }
    }
    Ok(m)
}

/// Stacks masks into a `(batch, 1, ...)` target tensor.
pub fn masks_to_tensor<T: Real>(masks: &[&Mask3D]) -> Result<Tensor<T>> {
    let first = masks
        .first()
        .ok_or_else(|| Error::InvalidArgument("no masks".into()))?;
    let d = first.dims();
    let mut data = Vec::with_capacity(masks.len() * first.labels().len());
    for m in masks {
        if m.dims() != d {
            return Err(Error::ShapeMismatch("masks differ in dims".into()));
        }
        data.extend(m.labels().iter().map(|&l| if l != 0 { T::one() } else { T::zero() }));
    }
    Tensor::from_vec([masks.len(), 1, d[0], d[1], d[2]], data)
}

/// Target tensors for every supervision level.
pub fn target_pyramid<T: Real>(masks: &[&Mask3D], levels: usize) -> Result<Vec<Tensor<T>>> {
    (0..levels)
        .map(|l| {
            let down: Vec<Mask3D> = masks.iter().map(|m| downsample_target(m, l)).collect::<Result<_>>()?;
            masks_to_tensor(&down.iter().collect::<Vec<_>>())
        })
        .collect()
}
