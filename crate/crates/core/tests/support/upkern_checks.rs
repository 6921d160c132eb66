//! Kernel resampling invariants and the per-axis interpolation oracle.
#![allow(dead_code)]

use pcrseg::mednext::{build_network, LossVariant, ParamKind};
use pcrseg::rng::rng_for;
use pcrseg::upkern::{resample_kernel, transfer_model};
use rand::Rng;

/// Independent oracle: value of the piecewise-linear interpolant through
/// nodes at `0..k_s` evaluated at source coordinate `s`, one axis at a time.
fn lerp1(vals: &[f64], s: f64) -> f64 {
    let mut acc = 0.0;
    for (i, &v) in vals.iter().enumerate() {
        let hat = (1.0 - (s - i as f64).abs()).max(0.0);
        acc += hat * v;
    }
    acc
}

fn oracle(w: &[f64], k_s: usize, k_t: usize) -> Vec<f64> {
    let scale = (k_s - 1) as f64 / (k_t - 1) as f64;
    let mut out = Vec::new();
    for z in 0..k_t {
        for y in 0..k_t {
            for x in 0..k_t {
                // collapse x, then y, then z
                let plane: Vec<f64> = (0..k_s)
                    .map(|sz| {
                        let row: Vec<f64> = (0..k_s)
                            .map(|sy| {
                                let line: Vec<f64> = (0..k_s).map(|sx| w[(sz * k_s + sy) * k_s + sx]).collect();
                                lerp1(&line, x as f64 * scale)
                            })
                            .collect();
                        lerp1(&row, y as f64 * scale)
                    })
                    .collect();
                out.push(lerp1(&plane, z as f64 * scale));
            }
        }
    }
    out
}

fn idx(k: usize, x: usize, y: usize, z: usize) -> usize {
    (z * k + y) * k + x
}

pub fn constant_filter_is_preserved_exactly() {
    for c in [0.0, 1.0, -0.37, 1e-3, 12.5] {
        let out = resample_kernel(&[c; 27], 3, 5).unwrap();
        assert!(out.iter().all(|&v| v == c));
    }
}

pub fn affine_filters_are_reproduced_at_nodes() {
    let mut rng = rng_for(1, 0, 0);
    for _ in 0..20 {
        // dyadic coefficients keep every intermediate exactly representable
        let mut q = || rng.random_range(-64i32..=64) as f64 / 16.0;
        let (a, b, c, d) = (q(), q(), q(), q());
        let f = |x: f64, y: f64, z: f64| a * x + b * y + c * z + d;
        let mut w = vec![0.0; 27];
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    w[idx(3, x, y, z)] = f(x as f64, y as f64, z as f64);
                }
            }
        }
        let out = resample_kernel(&w, 3, 5).unwrap();
        for z in 0..5 {
            for y in 0..5 {
                for x in 0..5 {
                    let want = f(x as f64 / 2.0, y as f64 / 2.0, z as f64 / 2.0);
                    assert_eq!(out[idx(5, x, y, z)], want, "({x},{y},{z})");
                }
            }
        }
    }
    // the ramp example
    let ramp: Vec<f64> = (0..27).map(|i| (i % 3) as f64).collect();
    let out = resample_kernel(&ramp, 3, 5).unwrap();
    for (i, v) in out.iter().enumerate() {
        assert_eq!(*v, (i % 5) as f64 / 2.0);
    }
}

pub fn same_size_is_identity() {
    let mut rng = rng_for(2, 0, 0);
    for k in [1, 3, 5] {
        let w: Vec<f32> = (0..k * k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(resample_kernel(&w, k, k).unwrap(), w);
    }
}

pub fn delta_filter_matches_scalar_oracle() {
    let mut w = vec![0.0; 27];
    w[idx(3, 1, 1, 1)] = 1.0;
    let out = resample_kernel(&w, 3, 5).unwrap();
    assert_eq!(out[idx(5, 2, 2, 2)], 1.0);
    assert_eq!(out[idx(5, 2, 2, 1)], 0.5);
    assert_eq!(out[idx(5, 2, 1, 1)], 0.25);
    assert_eq!(out[idx(5, 1, 1, 1)], 0.125);
    assert_eq!(out[idx(5, 0, 2, 2)], 0.0);
    assert_eq!(out, oracle(&w, 3, 5));
}

pub fn random_filters_match_oracle() {
    let mut rng = rng_for(3, 0, 0);
    for _ in 0..50 {
        let w: Vec<f64> = (0..27).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = resample_kernel(&w, 3, 5).unwrap();
        for (a, b) in out.iter().zip(oracle(&w, 3, 5)) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

pub fn transfer_copies_non_depthwise_and_grows_by_98c() {
    let small = build_network(3, 8, 3, 7).unwrap();
    let big = transfer_model(&small, 5, LossVariant::DiceCeFocal).unwrap();
    assert_eq!(big.arch.kernel, 5);
    assert_eq!(big.loss_variant, LossVariant::DiceCeFocal);
    let mut growth = 0;
    for ((n, k, a), (_, _, b)) in small.param_slices().into_iter().zip(big.param_slices()) {
        match k {
            ParamKind::Other => {
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "{n} changed")
            }
            ParamKind::Depthwise => {
                let c = a.len() / 27;
                assert_eq!(b.len(), c * 125);
                growth += c * 98;
                for f in 0..c {
                    assert_eq!(&b[f * 125..(f + 1) * 125], &resample_kernel(&a[f * 27..(f + 1) * 27], 3, 5).unwrap()[..]);
                }
            }
        }
    }
    assert_eq!(big.param_count(), small.param_count() + growth);
    // widths 8,8(down),16(down),32(bottleneck) ... summed over the seven depthwise layers
    assert_eq!(growth, 98 * (8 + 8 + 16 + 16 + 32 + 16 + 8));
}

pub fn transfer_to_same_kernel_is_bit_identical() {
    let small = build_network(3, 8, 3, 7).unwrap();
    let same = transfer_model(&small, 3, small.loss_variant).unwrap();
    let bits = |v: Vec<f32>| v.into_iter().map(f32::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(same.flat_params()), bits(small.flat_params()));
}
