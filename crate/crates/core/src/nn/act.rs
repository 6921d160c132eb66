//! Elementwise nonlinearities with closed-form derivatives.

use crate::nn::tensor::{Real, Tensor};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;
const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_K: f64 = 0.044715;

pub fn selu_scalar<T: Real>(x: T) -> T {
    let l = T::from_f64c(SELU_LAMBDA);
    if x > T::zero() {
        l * x
    } else {
        l * T::from_f64c(SELU_ALPHA) * x.exp_m1()
    }
}

pub fn selu_grad_scalar<T: Real>(x: T) -> T {
    let l = T::from_f64c(SELU_LAMBDA);
    if x > T::zero() {
        l
    } else {
        l * T::from_f64c(SELU_ALPHA) * x.exp()
    }
}

pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Tanh approximation of GELU.
pub fn gelu_scalar<T: Real>(x: T) -> T {
    let half = T::from_f64c(0.5);
    let inner = T::from_f64c(GELU_C) * (x + T::from_f64c(GELU_K) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

pub fn gelu_grad_scalar<T: Real>(x: T) -> T {
    let half = T::from_f64c(0.5);
    let c = T::from_f64c(GELU_C);
    let k = T::from_f64c(GELU_K);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * c * (T::one() + T::from_f64c(3.0) * k * x * x)
}

/// ln(1 + e^x) without overflow.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn selu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(selu_scalar)
}

pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

fn backward_with<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>, d: impl Fn(T) -> T) -> Tensor<T> {
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        *gv *= d(xv);
    }
    g
}

pub fn selu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    backward_with(x, grad_out, selu_grad_scalar)
}

pub fn gelu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    backward_with(x, grad_out, gelu_grad_scalar)
}

pub fn sigmoid_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    backward_with(x, grad_out, |v| {
        let s = sigmoid_scalar(v);
        s * (T::one() - s)
    })
}
