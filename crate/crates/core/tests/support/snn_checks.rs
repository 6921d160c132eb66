//! Self-normalization and calibration properties of the SNN.
#![allow(dead_code)]

use pcrseg::rng::rng_for;
use pcrseg::snn::{fit_temperature, init_lecun};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng_for(seed, 0, 0);
    (0..n).map(|_| (0..d).map(|_| r.sample(StandardNormal)).collect()).collect()
}

/// Logits equal to the true log-odds of Bernoulli rates, with labels drawn
/// from those rates.
pub fn simulator(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng_for(seed, 0, 0);
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let logit: f64 = 1.5 * r.sample::<f64, _>(StandardNormal);
        let p = 1.0 / (1.0 + (-logit).exp());
        z.push(logit);
        y.push((r.random::<f64>() < p) as u8);
    }
    (z, y)
}

pub fn self_normalizing_fixed_point() {
    let mut means = vec![Vec::new(); 8];
    let mut vars = vec![Vec::new(); 8];
    for seed in 0..10 {
        let mut widths = vec![128; 9];
        widths.push(1);
        let m = init_lecun(&widths, seed).unwrap();
        let x = gaussian_rows(4096, 128, seed + 50);
        let acts = m.hidden_activations(&x).unwrap();
        assert_eq!(acts.len(), 8);
        for l in 0..8 {
            let v: Vec<f64> = acts[l].iter().flatten().copied().collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            means[l].push(mean);
            vars[l].push(v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64);
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    for l in 0..8 {
        let (m, v) = (median(&mut means[l]), median(&mut vars[l]));
        assert!((-0.25..=0.25).contains(&m) && (0.5..=1.5).contains(&v), "layer {l}: mean {m} var {v}");
    }
}

pub fn temperature_scaling_recovers_inflation() {
    let (z, y) = simulator(20_000, 1);
    let rep = fit_temperature(&z, &y).unwrap();
    assert!((rep.temperature - 1.0).abs() < 0.05, "{}", rep.temperature);
    let inflated: Vec<f64> = z.iter().map(|v| 5.0 * v).collect();
    let rep = fit_temperature(&inflated, &y).unwrap();
    assert!((rep.temperature / 5.0 - 1.0).abs() < 0.1, "{}", rep.temperature);
    assert!(rep.ece_after <= 0.5 * rep.ece_before);
    assert!(rep.bce_after <= rep.bce_before);
    for v in &inflated {
        assert_eq!(*v >= 0.0, v / rep.temperature >= 0.0);
    }
    assert!(fit_temperature(&z, &vec![1; z.len()]).is_err());
}

