//! Sliding-window inference with Gaussian blending, and probability
//! ensembling.

use crate::error::{Error, Result};
use crate::mednext::network::SegModel;
use crate::mednext::train::prepare_case;
use crate::nn::act::sigmoid_scalar;
use crate::nn::Tensor;
use crate::volume::{CaseBundle, Mask3D, Volume3D};

/// Window start positions along one axis of length `n` (already padded to at
/// least `patch`). The last window is flush with the far edge.
pub fn window_origins(n: usize, patch: usize, overlap: f64) -> Vec<usize> {
    let stride = ((patch as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        if o + patch >= n {
            let last = n.saturating_sub(patch);
            if out.last() != Some(&last) {
                out.push(last);
            }
            break;
        }
        out.push(o);
        o += stride;
    }
    out
}

/// Separable Gaussian window weights with sigma = patch / 8.
pub fn gaussian_weights(patch: [usize; 3]) -> Vec<f64> {
    let axis = |p: usize| -> Vec<f64> {
        let c = (p as f64 - 1.0) / 2.0;
        let s = p as f64 / 8.0;
        (0..p).map(|i| (-(i as f64 - c).powi(2) / (2.0 * s * s)).exp()).collect()
    };
    let (wx, wy, wz) = (axis(patch[0]), axis(patch[1]), axis(patch[2]));
    let mut w = Vec::with_capacity(patch.iter().product());
    for z in &wz {
        for y in &wy {
            for x in &wx {
                w.push(x * y * z);
            }
        }
    }
    w
}

/// Blended full-resolution logits for a normalized `(1, C, ...)` input.
pub fn predict_logits(model: &SegModel<f32>, input: &Tensor<f32>, patch: [usize; 3], overlap: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!("overlap {overlap} not in [0,1)")));
    }
    if input.batch() != 1 {
        return Err(Error::ShapeMismatch("inference expects a single case".into()));
    }
    model.arch.check_input(patch)?;
    let dims = input.spatial();
    let padded: [usize; 3] = std::array::from_fn(|a| dims[a].max(patch[a]));
    let offset: [usize; 3] = std::array::from_fn(|a| (padded[a] - dims[a]) / 2);
    let nc = input.channels();
    let mut big = Tensor::zeros([1, nc, padded[0], padded[1], padded[2]]);
    for c in 0..nc {
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    big.set(0, c, x + offset[0], y + offset[1], z + offset[2], input.get(0, c, x, y, z));
                }
            }
        }
    }
    let gw = gaussian_weights(patch);
    let n: usize = padded.iter().product();
    let mut acc = vec![0.0f64; n];
    let mut norm = vec![0.0f64; n];
    let ox = window_origins(padded[0], patch[0], overlap);
    let oy = window_origins(padded[1], patch[1], overlap);
    let oz = window_origins(padded[2], patch[2], overlap);
    for &z0 in &oz {
        for &y0 in &oy {
            for &x0 in &ox {
                let win = big.crop([x0, y0, z0], patch)?;
                let logits = model.forward(&win)?.swap_remove(0);
                let mut i = 0;
                for z in 0..patch[2] {
                    for y in 0..patch[1] {
                        let row = (x0) + padded[0] * ((y0 + y) + padded[1] * (z0 + z));
                        for x in 0..patch[0] {
                            let w = gw[i];
                            acc[row + x] += w * logits.data()[i] as f64;
                            norm[row + x] += w;
                            i += 1;
                        }
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let j = (x + offset[0]) + padded[0] * ((y + offset[1]) + padded[1] * (z + offset[2]));
                out.push(acc[j] / norm[j]);
            }
        }
    }
    Ok(out)
}

/// Per-voxel foreground probability for a raw case.
pub fn predict(model: &SegModel<f32>, case: &CaseBundle, patch: [usize; 3], overlap: f64) -> Result<Volume3D> {
    let prepared = prepare_case(case)?;
    let logits = predict_logits(model, &prepared.input, patch, overlap)?;
    let probs = logits.into_iter().map(|z| sigmoid_scalar(z) as f32).collect();
    Volume3D::new(case.dims(), case.spacing(), probs)
}

/// Voxelwise mean probability thresholded at `threshold`.
pub fn ensemble(probs: &[Volume3D], threshold: f64) -> Result<Mask3D> {
    let first = probs
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble of zero models".into()))?;
    if probs.iter().any(|p| p.dims() != first.dims()) {
        return Err(Error::ShapeMismatch("ensemble members differ in dims".into()));
    }
    let k = probs.len() as f64;
    let labels = (0..first.len())
        .map(|i| {
            let mean = probs.iter().map(|p| p.voxels()[i] as f64).sum::<f64>() / k;
            (mean >= threshold) as u8
        })
        .collect();
    Mask3D::new(first.dims(), labels)
}

/// Mean probability map of several models.
pub fn mean_probability(probs: &[Volume3D]) -> Result<Volume3D> {
    let first = probs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no probability maps".into()))?;
    if probs.iter().any(|p| p.dims() != first.dims()) {
        return Err(Error::ShapeMismatch("probability maps differ in dims".into()));
    }
    let k = probs.len() as f64;
    let v = (0..first.len())
        .map(|i| (probs.iter().map(|p| p.voxels()[i] as f64).sum::<f64>() / k) as f32)
        .collect();
    Volume3D::new(first.dims(), first.spacing(), v)
}

pub fn threshold(prob: &Volume3D, t: f64) -> Mask3D {
    let labels = prob.voxels().iter().map(|&p| (p as f64 >= t) as u8).collect();
    Mask3D::new(prob.dims(), labels).expect("binary labels")
}
