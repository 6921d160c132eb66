//! Kernel transfer: initialize a larger-kernel network from a trained
//! smaller-kernel one by trilinear resampling of depthwise filters.

use crate::error::{Error, Result};
use crate::mednext::network::{LossVariant, ParamKind, SegArch, SegModel};
use crate::nn::Real;

/// Resamples one `k_s³` filter (x fastest) onto a `k_t³` grid with corner
/// alignment: source index `i` sits at target coordinate `i (k_t-1)/(k_s-1)`.
pub fn resample_kernel<T: Real>(w: &[T], k_s: usize, k_t: usize) -> Result<Vec<T>> {
    if k_s % 2 == 0 || k_t % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel sizes {k_s} and {k_t} must be odd")));
    }
    if k_t < k_s {
        return Err(Error::InvalidArgument(format!("target size {k_t} smaller than source {k_s}")));
    }
    if w.len() != k_s * k_s * k_s {
        return Err(Error::ShapeMismatch(format!("filter of {} values for size {k_s}", w.len())));
    }
    if k_s == k_t {
        return Ok(w.to_vec());
    }
    if k_s == 1 {
        return Ok(vec![w[0]; k_t * k_t * k_t]);
    }
    // Per-axis (lower index, fraction) of every target node in source space.
    let nodes: Vec<(usize, f64)> = (0..k_t)
        .map(|j| {
            let s = j as f64 * (k_s - 1) as f64 / (k_t - 1) as f64;
            let i = (s.floor() as usize).min(k_s - 2);
            (i, s - i as f64)
        })
        .collect();
    let at = |x: usize, y: usize, z: usize| w[(z * k_s + y) * k_s + x].to_f64c();
    let mut out = Vec::with_capacity(k_t * k_t * k_t);
    for &(iz, fz) in &nodes {
        for &(iy, fy) in &nodes {
            for &(ix, fx) in &nodes {
                let line = |y: usize, z: usize| lerp(at(ix, y, z), at(ix + 1, y, z), fx);
                let plane = |z: usize| lerp(line(iy, z), line(iy + 1, z), fy);
                out.push(T::from_f64c(lerp(plane(iz), plane(iz + 1), fz)));
            }
        }
    }
    Ok(out)
}

/// `a + f (b - a)`, exact for `a == b` and at both endpoints.
fn lerp(a: f64, b: f64, f: f64) -> f64 {
    if f == 1.0 {
        b
    } else {
        a + f * (b - a)
    }
}

/// Copies every parameter of `small` into a model with depthwise kernel
/// `target_k`, resampling the depthwise filters. The result carries
/// `loss_variant` and an epoch counter of zero.
pub fn transfer_model<T: Real>(small: &SegModel<T>, target_k: usize, loss_variant: LossVariant) -> Result<SegModel<T>> {
    let k_s = small.arch.kernel;
    let arch = SegArch {
        kernel: target_k,
        ..small.arch
    };
    let mut big = SegModel::<T>::zeros(arch, loss_variant)?;
    big.seed = small.seed;
    let src: Vec<(String, ParamKind, Vec<T>)> = small
        .param_slices()
        .into_iter()
        .map(|(n, k, s)| (n, k, s.to_vec()))
        .collect();
    let names: Vec<(String, ParamKind, usize)> = big.inventory().into_iter().map(|p| (p.name, p.kind, p.len)).collect();
    if names.len() != src.len() {
        return Err(Error::ArchitectureMismatch(format!(
            "{} parameter tensors in source, {} in target",
            src.len(),
            names.len()
        )));
    }
    let taps_s = k_s * k_s * k_s;
    for ((dst, (name_t, kind_t, len_t)), (name_s, kind_s, vals)) in big.param_slices_mut().into_iter().zip(&names).zip(&src) {
        if name_t != name_s || kind_t != kind_s {
            return Err(Error::ArchitectureMismatch(format!("parameter {name_s} vs {name_t}")));
        }
        match kind_s {
            ParamKind::Depthwise => {
                if vals.len() % taps_s != 0 || vals.len() / taps_s * target_k.pow(3) != *len_t {
                    return Err(Error::ArchitectureMismatch(format!("depthwise tensor {name_s} has {} values", vals.len())));
                }
                for (f, chunk) in vals.chunks_exact(taps_s).enumerate() {
                    let r = resample_kernel(chunk, k_s, target_k)?;
                    dst[f * r.len()..(f + 1) * r.len()].copy_from_slice(&r);
                }
            }
            ParamKind::Other => {
                if vals.len() != *len_t {
                    return Err(Error::ArchitectureMismatch(format!("{name_s}: {} vs {len_t} values", vals.len())));
                }
                dst.copy_from_slice(vals);
            }
        }
    }
    Ok(big)
}
