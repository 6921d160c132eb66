//! Central-difference checks for every differentiable op, shared by the unit
//! suites and the acceptance run. Each `check_*` panics on the first failing
//! instance.
#![allow(dead_code)]

use pcrseg::mednext::loss::{dice_ce_loss, focal_loss, segmentation_loss, target_pyramid, DICE_EPS};
use pcrseg::mednext::{build_network_with, FocalParams, LossVariant, SegArch, SegModel};
use pcrseg::nn::act;
use pcrseg::nn::conv::{conv3d_backward, conv3d_forward, conv_transpose3d_backward, conv_transpose3d_forward};
use pcrseg::nn::norm::{group_norm, group_norm_backward, GN_EPS};
use pcrseg::nn::{grad_check, ConvKernel, ConvTranspose3d, GradCheckConfig, Padding, Real, Tensor};
use pcrseg::rng::rng_for;
use pcrseg::snn::{bce_with_logits, init_lecun, DropoutMasks};
use pcrseg::volume::Mask3D;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_vec<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::from_f64c(rng.random_range(-1.0..1.0))).collect()
}

pub fn rand_tensor<T: Real>(rng: &mut ChaCha8Rng, shape: [usize; 5]) -> Tensor<T> {
    Tensor::from_vec(shape, rand_vec(rng, shape.iter().product())).unwrap()
}

pub fn rand_kernel<T: Real>(
    rng: &mut ChaCha8Rng,
    out_ch: usize,
    in_pg: usize,
    k: usize,
    groups: usize,
    stride: usize,
) -> ConvKernel<T> {
    let mut kern = ConvKernel::zeros(out_ch, in_pg, [k; 3], groups).with_stride(stride);
    kern.weights = rand_vec(rng, kern.weights.len());
    kern.bias = rand_vec(rng, out_ch);
    kern
}

/// Scalar probe loss <op(x), r> used to turn tensor ops into scalar functions.
fn probe(y: &Tensor<f64>, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&a| a as f64).collect()
}

fn cat32(parts: &[&[f32]]) -> Vec<f64> {
    parts.iter().flat_map(|p| to_f64(p)).collect()
}

pub fn cfg64(seed: u64) -> GradCheckConfig {
    GradCheckConfig::default().with_tol(1e-6).with_eps(1e-5).with_seed(seed)
}

pub fn cfg32(seed: u64) -> GradCheckConfig {
    GradCheckConfig::default().with_tol(1e-4).with_eps(1e-5).with_seed(seed)
}

fn expect(rep: pcrseg::nn::GradReport, what: &str) {
    assert!(rep.passed, "{what}: relative error {:e} over tolerance {:e}", rep.max_rel_error, rep.tol);
}

/// Dense, grouped, depthwise and strided convolutions; input, weight and bias
/// gradients at both precisions.
pub fn check_conv(seed: u64) {
    let mut rng = rng_for(6, seed, 0);
    let geoms = [
        (2, [5, 4, 6], 3, 2, 3, 1, 1),
        (3, [6, 6, 6], 3, 1, 3, 3, 1),
        (2, [6, 5, 4], 4, 2, 3, 1, 2),
        (2, [4, 4, 4], 2, 1, 5, 2, 1),
        (3, [4, 6, 4], 2, 3, 1, 1, 2),
    ];
    let (cin, sp, cout, ipg, kk, groups, stride) = geoms[seed as usize % geoms.len()];
    let xs = [1, cin, sp[0], sp[1], sp[2]];
    let x64: Tensor<f64> = rand_tensor(&mut rng, xs);
    let k64: ConvKernel<f64> = rand_kernel(&mut rng, cout, ipg, kk, groups, stride);
    let y = conv3d_forward(&x64, &k64, Padding::Same).unwrap();
    let r: Vec<f64> = rand_vec(&mut rng, y.len());
    let (nx, nw) = (x64.len(), k64.weights.len());

    let flat: Vec<f64> = x64.data().iter().chain(&k64.weights).chain(&k64.bias).copied().collect();
    let eval = |p: &[f64]| {
        let x = Tensor::from_vec(xs, p[..nx].to_vec()).unwrap();
        let mut k = k64.clone();
        k.weights = p[nx..nx + nw].to_vec();
        k.bias = p[nx + nw..].to_vec();
        probe(&conv3d_forward(&x, &k, Padding::Same).unwrap(), &r)
    };
    let go = Tensor::from_vec(y.shape(), r.clone()).unwrap();
    let g = conv3d_backward(&x64, &k64, Padding::Same, &go).unwrap();
    let an: Vec<f64> = g.grad_x.data().iter().chain(&g.grad_w).chain(&g.grad_b).copied().collect();
    expect(grad_check(eval, &flat, &an, cfg64(seed)), &format!("conv f64 seed {seed}"));

    let x32: Tensor<f32> = x64.cast();
    let k32 = ConvKernel {
        weights: k64.weights.iter().map(|&v| v as f32).collect(),
        bias: k64.bias.iter().map(|&v| v as f32).collect(),
        ..ConvKernel::zeros(cout, ipg, [kk; 3], groups).with_stride(stride)
    };
    let g32 = conv3d_backward(&x32, &k32, Padding::Same, &go.cast()).unwrap();
    let an32 = cat32(&[g32.grad_x.data(), &g32.grad_w, &g32.grad_b]);
    let flat32 = cat32(&[x32.data(), &k32.weights, &k32.bias]);
    expect(grad_check(eval, &flat32, &an32, cfg32(seed)), &format!("conv f32 seed {seed}"));
}

pub fn check_conv_transpose(seed: u64) {
    let mut rng = rng_for(7, seed, 0);
    let mut t = ConvTranspose3d::<f64>::zeros(3, 2, 2, 2);
    t.weights = rand_vec(&mut rng, t.weights.len());
    t.bias = rand_vec(&mut rng, 2);
    let ys = [1, 3, 3, 2, 4];
    let out = [6, 4, 8];
    let y: Tensor<f64> = rand_tensor(&mut rng, ys);
    let z = conv_transpose3d_forward(&y, &t, Padding::Valid, out).unwrap();
    let r: Vec<f64> = rand_vec(&mut rng, z.len());
    let (ny, nw) = (y.len(), t.weights.len());
    let flat: Vec<f64> = y.data().iter().chain(&t.weights).chain(&t.bias).copied().collect();
    let eval = |p: &[f64]| {
        let yy = Tensor::from_vec(ys, p[..ny].to_vec()).unwrap();
        let mut tt = t.clone();
        tt.weights = p[ny..ny + nw].to_vec();
        tt.bias = p[ny + nw..].to_vec();
        probe(&conv_transpose3d_forward(&yy, &tt, Padding::Valid, out).unwrap(), &r)
    };
    let go = Tensor::from_vec(z.shape(), r.clone()).unwrap();
    let g = conv_transpose3d_backward(&y, &t, Padding::Valid, &go).unwrap();
    let an: Vec<f64> = g.grad_x.data().iter().chain(&g.grad_w).chain(&g.grad_b).copied().collect();
    expect(grad_check(eval, &flat, &an, cfg64(seed)), &format!("transposed conv f64 seed {seed}"));

    let mut t32 = ConvTranspose3d::<f32>::zeros(3, 2, 2, 2);
    t32.weights = t.weights.iter().map(|&v| v as f32).collect();
    t32.bias = t.bias.iter().map(|&v| v as f32).collect();
    let y32: Tensor<f32> = y.cast();
    let g32 = conv_transpose3d_backward(&y32, &t32, Padding::Valid, &go.cast()).unwrap();
    let an32 = cat32(&[g32.grad_x.data(), &g32.grad_w, &g32.grad_b]);
    let flat32 = cat32(&[y32.data(), &t32.weights, &t32.bias]);
    expect(grad_check(eval, &flat32, &an32, cfg32(seed)), &format!("transposed conv f32 seed {seed}"));
}

pub fn check_group_norm(seed: u64) {
    let mut rng = rng_for(9, seed, 0);
    let shape = [2, 4, 3, 2, 3];
    let groups = [1, 2, 4][seed as usize % 3];
    let x: Tensor<f64> = rand_tensor(&mut rng, shape);
    let gamma: Vec<f64> = rand_vec(&mut rng, 4);
    let beta: Vec<f64> = rand_vec(&mut rng, 4);
    let r: Vec<f64> = rand_vec(&mut rng, x.len());
    let n = x.len();
    let flat: Vec<f64> = x.data().iter().chain(&gamma).chain(&beta).copied().collect();
    let eval = |p: &[f64]| {
        let xx = Tensor::from_vec(shape, p[..n].to_vec()).unwrap();
        let (y, _) = group_norm(&xx, groups, &p[n..n + 4], &p[n + 4..], GN_EPS).unwrap();
        probe(&y, &r)
    };
    let (_, cache) = group_norm(&x, groups, &gamma, &beta, GN_EPS).unwrap();
    let go = Tensor::from_vec(shape, r.clone()).unwrap();
    let g = group_norm_backward(&go, &cache, &gamma).unwrap();
    let an: Vec<f64> = g.grad_x.data().iter().chain(&g.grad_gamma).chain(&g.grad_beta).copied().collect();
    expect(grad_check(eval, &flat, &an, cfg64(seed)), &format!("group norm f64 seed {seed}"));

    let x32: Tensor<f32> = x.cast();
    let g32: Vec<f32> = gamma.iter().map(|&v| v as f32).collect();
    let b32: Vec<f32> = beta.iter().map(|&v| v as f32).collect();
    let (_, c32) = group_norm(&x32, groups, &g32, &b32, GN_EPS).unwrap();
    let gr = group_norm_backward(&go.cast(), &c32, &g32).unwrap();
    let an32 = cat32(&[gr.grad_x.data(), &gr.grad_gamma, &gr.grad_beta]);
    let flat32 = cat32(&[x32.data(), &g32, &b32]);
    expect(grad_check(eval, &flat32, &an32, cfg32(seed)), &format!("group norm f32 seed {seed}"));
}

pub fn check_activations(seed: u64) {
    fn one<F64, B64, B32>(name: &str, seed: u64, fwd: F64, bwd: B64, bwd32: B32)
    where
        F64: Fn(&Tensor<f64>) -> Tensor<f64>,
        B64: Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
        B32: Fn(&Tensor<f32>, &Tensor<f32>) -> Tensor<f32>,
    {
        let mut rng = rng_for(10, seed, 0);
        let shape = [1, 2, 4, 3, 2];
        let x: Tensor<f64> = Tensor::from_vec(shape, (0..48).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let r: Vec<f64> = rand_vec(&mut rng, x.len());
        let eval = |p: &[f64]| probe(&fwd(&Tensor::from_vec(shape, p.to_vec()).unwrap()), &r);
        let go = Tensor::from_vec(shape, r.clone()).unwrap();
        let an = bwd(&x, &go);
        expect(grad_check(eval, x.data(), an.data(), cfg64(seed).with_eps(1e-6)), &format!("{name} f64 seed {seed}"));
        let x32: Tensor<f32> = x.cast();
        let an32 = bwd32(&x32, &go.cast());
        expect(
            grad_check(eval, &to_f64(x32.data()), &to_f64(an32.data()), cfg32(seed)),
            &format!("{name} f32 seed {seed}"),
        );
    }
    one("selu", seed, act::selu, act::selu_backward, act::selu_backward::<f32>);
    one("gelu", seed, act::gelu, act::gelu_backward, act::gelu_backward::<f32>);
    one("sigmoid", seed, act::sigmoid, act::sigmoid_backward, act::sigmoid_backward::<f32>);
}

pub fn random_tensor(shape: [usize; 5], seed: u64) -> Tensor<f64> {
    let mut rng = rng_for(seed, 0, 99);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_mask(dims: [usize; 3], seed: u64, p: f64) -> Mask3D {
    let mut rng = rng_for(seed, 1, 99);
    let n = dims.iter().product();
    Mask3D::new(dims, (0..n).map(|_| (rng.random::<f64>() < p) as u8).collect()).unwrap()
}

/// Dice + cross-entropy and focal loss gradients with respect to the logits.
pub fn check_losses(seed: u64) {
    let z = random_tensor([2, 1, 4, 3, 2], seed).map(|v| 3.0 * v);
    let g = random_tensor([2, 1, 4, 3, 2], seed + 50).map(|v| (v > 0.0) as u8 as f64);
    let g32: Tensor<f32> = g.cast();
    let z32: Tensor<f32> = z.cast();
    let zs = z.shape();

    let out = dice_ce_loss(&z, &g, DICE_EPS).unwrap();
    let f = |v: &[f64]| dice_ce_loss(&Tensor::from_vec(zs, v.to_vec()).unwrap(), &g, DICE_EPS).unwrap().loss;
    expect(grad_check(f, z.data(), out.grad.data(), cfg64(seed)), &format!("dice_ce f64 seed {seed}"));
    assert!(out.loss >= 0.0);
    let out32 = dice_ce_loss(&z32, &g32, DICE_EPS).unwrap();
    expect(
        grad_check(f, &to_f64(z32.data()), &to_f64(out32.grad.data()), cfg32(seed)),
        &format!("dice_ce f32 seed {seed}"),
    );

    let fp = FocalParams { gamma: 2.0, alpha: 0.25 };
    let out = focal_loss(&z, &g, fp).unwrap();
    let f = |v: &[f64]| focal_loss(&Tensor::from_vec(zs, v.to_vec()).unwrap(), &g, fp).unwrap().loss;
    expect(grad_check(f, z.data(), out.grad.data(), cfg64(seed)), &format!("focal f64 seed {seed}"));
    assert!(out.loss >= 0.0);
    let out32 = focal_loss(&z32, &g32, fp).unwrap();
    expect(
        grad_check(f, &to_f64(z32.data()), &to_f64(out32.grad.data()), cfg32(seed)),
        &format!("focal f32 seed {seed}"),
    );
}

pub fn small_arch(kernel: usize) -> SegArch {
    SegArch { in_channels: 3, levels: 2, base_channels: 4, ratio: 2, kernel }
}

pub fn loss_of(model: &SegModel<f64>, x: &Tensor<f64>, targets: &[Tensor<f64>], variant: LossVariant) -> f64 {
    let logits = model.forward(x).unwrap();
    let w = [0.7, 0.3];
    segmentation_loss(&logits, targets, &w, variant, FocalParams::default()).unwrap().0
}

/// 2-level, 4-channel network on an 8^3 input, deep-supervised loss, all
/// parameters at once. Even seeds use k=3 with Dice + CE, odd seeds k=5 with
/// the focal term added.
pub fn check_full_network(seed: u64) {
    let (variant, kernel) = if seed % 2 == 0 { (LossVariant::DiceCe, 3) } else { (LossVariant::DiceCeFocal, 5) };
    let arch = small_arch(kernel);
    let m64 = build_network_with::<f64>(arch, variant, seed).unwrap();
    let x = random_tensor([1, 3, 8, 8, 8], seed + 100);
    let mask = random_mask([8, 8, 8], seed, 0.3);
    let t64: Vec<Tensor<f64>> = target_pyramid(&[&mask], 2).unwrap();
    let w = [0.7, 0.3];

    let x0 = m64.flat_params();
    let f = |p: &[f64]| {
        let mut m = m64.clone();
        m.set_flat_params(p).unwrap();
        loss_of(&m, &x, &t64, variant)
    };

    let (logits, cache) = m64.forward_cached(&x).unwrap();
    let (_, gl) = segmentation_loss(&logits, &t64, &w, variant, FocalParams::default()).unwrap();
    let (g, _) = m64.backward(&gl, &cache).unwrap();
    expect(
        grad_check(f, &x0, &g.flat_params(), GradCheckConfig::default().with_seed(seed).with_eps(1e-5)),
        &format!("network f64 {variant} k={kernel} seed {seed}"),
    );

    // single-precision analytic gradient against the f64 reference
    let m32: SegModel<f32> = m64.cast();
    let t32: Vec<Tensor<f32>> = target_pyramid(&[&mask], 2).unwrap();
    let (logits, cache) = m32.forward_cached(&x.cast()).unwrap();
    let (_, gl) = segmentation_loss(&logits, &t32, &w, variant, FocalParams::default()).unwrap();
    let (g, _) = m32.backward(&gl, &cache).unwrap();
    let g: Vec<f64> = g.flat_params().iter().map(|&v| v as f64).collect();
    expect(
        grad_check(f, &x0, &g, GradCheckConfig::default().with_seed(seed).with_tol(1e-4)),
        &format!("network f32 {variant} k={kernel} seed {seed}"),
    );
}

fn snn_masks(widths: &[usize], rows: usize, seed: u64) -> DropoutMasks {
    let mut r = rng_for(seed, 0, 3);
    widths[1..widths.len() - 1]
        .iter()
        .map(|&w| (0..rows).map(|_| (0..w).map(|_| r.random::<f64>() >= 0.2).collect()).collect())
        .collect()
}

/// Whole SNN (standardization, SELU layers, alpha-dropout, BCE) with and
/// without dropout masks.
pub fn check_snn(seed: u64) {
    let widths = [5, 7, 6, 4, 1];
    let mut m = init_lecun(&widths, seed).unwrap();
    m.dropout = 0.2;
    // redraw until no hidden unit sits within 1e-3 of the SELU kink at zero,
    // where central differences are meaningless
    let mut x = Vec::new();
    for attempt in 0.. {
        let mut r = rng_for(seed, 9 + attempt, 0);
        for b in m.biases.iter_mut() {
            b.iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
        }
        x = (0..6).map(|_| (0..5).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let acts = m.hidden_activations(&x).unwrap();
        if acts.iter().flatten().flatten().all(|a| a.abs() > 1e-3) {
            break;
        }
    }
    let y: Vec<u8> = (0..6).map(|i| (i % 2) as u8).collect();
    for mk in [None, Some(snn_masks(&widths, 6, seed))] {
        let (z, cache) = m.forward_cached(&x, mk.as_ref()).unwrap();
        let (_, gz) = bce_with_logits(&z, &y);
        let (gw, gb) = m.backward(&cache, &gz, mk.as_ref());
        let mut g = Vec::new();
        for l in 0..gw.len() {
            g.extend(&gw[l]);
            g.extend(&gb[l]);
        }
        let f = |p: &[f64]| {
            let mut mm = m.clone();
            mm.set_flat_params(p).unwrap();
            let (z, _) = mm.forward_cached(&x, mk.as_ref()).unwrap();
            bce_with_logits(&z, &y).0
        };
        expect(
            grad_check(f, &m.flat_params(), &g, GradCheckConfig::default().with_seed(seed)),
            &format!("snn seed {seed} masks {}", mk.is_some()),
        );
    }
}
