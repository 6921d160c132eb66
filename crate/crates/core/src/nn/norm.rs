use crate::error::{Error, Result};
use crate::nn::tensor::{Real, Tensor};

pub const GN_EPS: f64 = 1e-5;

/// Saved statistics for the backward pass.
#[derive(Clone, Debug)]
pub struct GroupNormCache<T> {
    pub xhat: Tensor<T>,
    pub rstd: Vec<T>,
    pub groups: usize,
}

/// Standardizes each (batch, group) slab, then applies per-channel affine.
pub fn group_norm<T: Real>(
    x: &Tensor<T>,
    groups: usize,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> Result<(Tensor<T>, GroupNormCache<T>)> {
    let [nb, nc, ..] = x.shape();
    if groups == 0 || nc % groups != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{groups} groups do not divide {nc} channels"
        )));
    }
    if gamma.len() != nc || beta.len() != nc {
        return Err(Error::ShapeMismatch("affine parameter length".into()));
    }
    let cpg = nc / groups;
    let plane = x.plane_len();
    let m = (cpg * plane) as f64;
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    let mut rstd = Vec::with_capacity(nb * groups);
    for b in 0..nb {
        for g in 0..groups {
            let mut sum = 0.0;
            for c in g * cpg..(g + 1) * cpg {
                sum += x.plane(b, c).iter().map(|v| v.to_f64c()).sum::<f64>();
            }
            let mean = sum / m;
            let mut ss = 0.0;
            for c in g * cpg..(g + 1) * cpg {
                ss += x
                    .plane(b, c)
                    .iter()
                    .map(|v| (v.to_f64c() - mean).powi(2))
                    .sum::<f64>();
            }
            let r = 1.0 / (ss / m + eps).sqrt();
            rstd.push(T::from_f64c(r));
            let (mean_t, r_t) = (T::from_f64c(mean), T::from_f64c(r));
            for c in g * cpg..(g + 1) * cpg {
                let (ga, be) = (gamma[c], beta[c]);
                let src = x.plane(b, c);
                let xh = xhat.plane_mut(b, c);
                for (h, &v) in xh.iter_mut().zip(src) {
                    *h = (v - mean_t) * r_t;
                }
                let xh = xhat.plane(b, c).to_vec();
                for (o, h) in y.plane_mut(b, c).iter_mut().zip(xh) {
                    *o = ga * h + be;
                }
            }
        }
    }
    Ok((y, GroupNormCache { xhat, rstd, groups }))
}

#[derive(Clone, Debug)]
pub struct GroupNormGrads<T> {
    pub grad_x: Tensor<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
}

pub fn group_norm_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &GroupNormCache<T>,
    gamma: &[T],
) -> Result<GroupNormGrads<T>> {
    grad_out.check_same(&cache.xhat)?;
    let [nb, nc, ..] = grad_out.shape();
    let groups = cache.groups;
    let cpg = nc / groups;
    let m = T::from_f64c((cpg * grad_out.plane_len()) as f64);
    let mut grad_x = Tensor::zeros(grad_out.shape());
    let mut grad_gamma = vec![T::zero(); nc];
    let mut grad_beta = vec![T::zero(); nc];
    for b in 0..nb {
        for c in 0..nc {
            let go = grad_out.plane(b, c);
            let xh = cache.xhat.plane(b, c);
            grad_beta[c] += go.iter().copied().sum::<T>();
            grad_gamma[c] += go.iter().zip(xh).fold(T::zero(), |a, (&u, &v)| a + u * v);
        }
        for g in 0..groups {
            let r = cache.rstd[b * groups + g];
            let mut sum_d = T::zero();
            let mut sum_dx = T::zero();
            for c in g * cpg..(g + 1) * cpg {
                let ga = gamma[c];
                for (&u, &v) in grad_out.plane(b, c).iter().zip(cache.xhat.plane(b, c)) {
                    sum_d += u * ga;
                    sum_dx += u * ga * v;
                }
            }
            for c in g * cpg..(g + 1) * cpg {
                let ga = gamma[c];
                let go = grad_out.plane(b, c).to_vec();
                let xh = cache.xhat.plane(b, c).to_vec();
                for ((gx, u), v) in grad_x.plane_mut(b, c).iter_mut().zip(go).zip(xh) {
                    *gx = r / m * (m * u * ga - sum_d - v * sum_dx);
                }
            }
        }
    }
    Ok(GroupNormGrads {
        grad_x,
        grad_gamma,
        grad_beta,
    })
}
