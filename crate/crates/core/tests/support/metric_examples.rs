//! The fixed metric examples plus the correlation-filter recomputation check.
#![allow(dead_code)]

use pcrseg::featselect::{correlation_filter, pearson};
use pcrseg::metrics::{balanced_accuracy, dice_score, expected_calibration_error, norm_hausdorff};
use pcrseg::radiomics::FeatureTable;
use pcrseg::rng::rng_for;
use pcrseg::volume::Mask3D;
use rand::Rng;

fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> Mask3D {
    let mut m = Mask3D::zeros(dims);
    for p in on {
        m.set(p[0], p[1], p[2], true);
    }
    m
}

pub fn random_mask(dims: [usize; 3], seed: u64) -> Mask3D {
    let mut r = rng_for(seed, 0, 0);
    let c: [f64; 3] = std::array::from_fn(|a| r.random_range(2.0..dims[a] as f64 - 2.0));
    let rad = r.random_range(1.5..4.0);
    Mask3D::from_fn(dims, |x, y, z| {
        let d = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
        d.iter().map(|v| v * v).sum::<f64>() < rad * rad
    })
}

pub fn dice_examples() {
    let a = mask([4, 1, 1], &[[0, 0, 0], [1, 0, 0]]);
    assert_eq!(dice_score(&a, &a).unwrap(), 1.0);
    let b = mask([4, 1, 1], &[[2, 0, 0], [3, 0, 0]]);
    assert_eq!(dice_score(&a, &b).unwrap(), 0.0);
    let p = mask([8, 1, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
    let g = mask([8, 1, 1], &[[2, 0, 0], [3, 0, 0], [4, 0, 0], [5, 0, 0]]);
    assert_eq!(dice_score(&p, &g).unwrap(), 0.5);
    let e = Mask3D::zeros([2, 2, 2]);
    assert_eq!(dice_score(&e, &e).unwrap(), 1.0);
}

pub fn balanced_accuracy_examples() {
    let truth = [1, 1, 1, 1, 0, 0, 0, 0];
    let pred = [1, 1, 1, 0, 0, 0, 1, 1];
    assert_eq!(balanced_accuracy(&pred, &truth).unwrap(), 0.625);
    assert_eq!(balanced_accuracy(&truth, &truth).unwrap(), 1.0);
    assert_eq!(balanced_accuracy(&[1; 8], &truth).unwrap(), 0.5);
    assert!(balanced_accuracy(&[1, 0], &[1, 1]).is_err());
}

pub fn ece_examples() {
    assert_eq!(expected_calibration_error(&[1.0; 4], &[1; 4], 10).unwrap(), 0.0);
    assert_eq!(expected_calibration_error(&[1.0; 4], &[1, 1, 0, 0], 10).unwrap(), 0.5);
    assert!(expected_calibration_error(&[], &[], 10).is_err());
}

pub fn norm_hausdorff_examples() {
    let a = random_mask([10, 10, 10], 1);
    assert_eq!(norm_hausdorff(&a, &a, [1.0; 3], 95.0).unwrap(), 0.0);
    let empty = Mask3D::zeros([10, 10, 10]);
    assert_eq!(norm_hausdorff(&empty, &a, [1.0; 3], 95.0).unwrap(), 1.0);
    assert_eq!(norm_hausdorff(&a, &empty, [1.0; 3], 95.0).unwrap(), 1.0);
    assert_eq!(norm_hausdorff(&empty, &empty, [1.0; 3], 95.0).unwrap(), 0.0);

    // opposite corners: voxel-centre span over the physical diagonal
    let dims = [8, 6, 4];
    let s = [1.0f32, 2.0, 0.5];
    let mut p = Mask3D::zeros(dims);
    p.set(0, 0, 0, true);
    let mut g = Mask3D::zeros(dims);
    g.set(7, 5, 3, true);
    let span = ((7.0f64 * 1.0).powi(2) + (5.0f64 * 2.0).powi(2) + (3.0f64 * 0.5).powi(2)).sqrt();
    let diag = ((8.0f64 * 1.0).powi(2) + (6.0f64 * 2.0).powi(2) + (4.0f64 * 0.5).powi(2)).sqrt();
    let h = norm_hausdorff(&p, &g, s, 95.0).unwrap();
    assert!((h - span / diag).abs() < 1e-12);
    assert!(norm_hausdorff(&p, &Mask3D::zeros([2, 2, 2]), s, 95.0).is_err());
}

pub fn calibrated_simulator_has_small_ece() {
    let mut r = rng_for(3, 0, 0);
    let (mut p, mut y) = (Vec::new(), Vec::new());
    for _ in 0..100_000 {
        let q: f64 = r.random();
        p.push(q);
        y.push((r.random::<f64>() < q) as u8);
    }
    assert!(expected_calibration_error(&p, &y, 10).unwrap() < 0.02);
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng_for(seed, 0, 0);
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

/// Thirty columns mixed from six shared sources; after filtering, every kept
/// pair is recomputed from scratch.
pub fn filtered_set_has_no_pair_above_threshold() {
    let base: Vec<Vec<f64>> = (0..6).map(|s| noise(60, 10 + s)).collect();
    let mut rng = rng_for(0, 0, 1);
    let mut t = FeatureTable::new((0..30).map(|k| format!("c{k}")).collect());
    let mut cols = Vec::new();
    for k in 0..30 {
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        cols.push((0..60).map(|i| (0..6).map(|j| w[j] * base[j][i]).sum::<f64>() + 0.05 * k as f64).collect::<Vec<f64>>());
    }
    for i in 0..60 {
        t.push(&format!("case_{i:04}"), cols.iter().map(|c| c[i]).collect()).unwrap();
    }
    let (kept, log) = correlation_filter(&t, 0.9).unwrap();
    assert!(!log.is_empty());
    for i in 0..kept.names.len() {
        for j in 0..i {
            let r = pearson(&kept.column(i), &kept.column(j)).unwrap();
            assert!(r.abs() <= 0.9, "{} / {}: {r}", kept.names[i], kept.names[j]);
        }
    }
}
