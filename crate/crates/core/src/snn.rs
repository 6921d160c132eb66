//! Self-normalizing classifier: SELU layers with LeCun-normal weights,
//! alpha-dropout, binary cross-entropy training and temperature scaling.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io_util::fmt_f64;
use crate::mdl::{join_f64, split_f64, ModelFile};
use crate::metrics::expected_calibration_error;
use crate::nn::act::{selu_grad_scalar, selu_scalar, sigmoid_scalar, softplus, SELU_ALPHA, SELU_LAMBDA};
use crate::rng::{rng_for, stream};

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 32, 16];
pub const T_RANGE: (f64, f64) = (0.05, 20.0);
const GOLDEN_ITERS: usize = 60;

/// Alpha-dropout saturation value `-λα`.
pub fn alpha_prime() -> f64 {
    -SELU_LAMBDA * SELU_ALPHA
}

/// Affine correction `(a, b)` for keep probability `q`.
pub fn dropout_affine(p: f64) -> (f64, f64) {
    let q = 1.0 - p;
    let ap = alpha_prime();
    let a = (q + ap * ap * q * (1.0 - q)).powf(-0.5);
    (a, -a * (1.0 - q) * ap)
}

pub fn alpha_dropout_with_mask(x: &[f64], p: f64, keep: &[bool]) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0,1)")));
    }
    if keep.len() != x.len() {
        return Err(Error::ShapeMismatch(format!("mask of {} for {} units", keep.len(), x.len())));
    }
    let (a, b) = dropout_affine(p);
    let ap = alpha_prime();
    Ok(x.iter().zip(keep).map(|(&v, &k)| a * if k { v } else { ap } + b).collect())
}

pub fn alpha_dropout(x: &[f64], p: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let keep: Vec<bool> = x.iter().map(|_| rng.random::<f64>() >= p).collect();
    alpha_dropout_with_mask(x, p, &keep)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnnModel {
    /// Input, hidden..., 1.
    pub widths: Vec<usize>,
    /// Layer `l` weights, `widths[l+1] × widths[l]` row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub dropout: f64,
    pub temperature: f64,
    pub features: Vec<String>,
}

pub fn init_lecun(widths: &[usize], seed: u64) -> Result<SnnModel> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid widths {widths:?}")));
    }
    let mut rng = rng_for(seed, 0, stream::INIT);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..widths.len() - 1 {
        let normal = Normal::new(0.0, (1.0 / widths[l] as f64).sqrt()).expect("positive std");
        weights.push((0..widths[l] * widths[l + 1]).map(|_| normal.sample(&mut rng)).collect());
        biases.push(vec![0.0; widths[l + 1]]);
    }
    Ok(SnnModel {
        widths: widths.to_vec(),
        weights,
        biases,
        mean: vec![0.0; widths[0]],
        std: vec![1.0; widths[0]],
        dropout: 0.1,
        temperature: 1.0,
        features: (0..widths[0]).map(|i| format!("f{i}")).collect(),
    })
}

/// Per-hidden-layer keep masks for one batch (`[layer][row][unit]`).
pub type DropoutMasks = Vec<Vec<Vec<bool>>>;

pub struct SnnCache {
    /// Input to each layer (standardized input first).
    inputs: Vec<Vec<Vec<f64>>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<Vec<f64>>>,
}

impl SnnModel {
    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn standardize(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter()
            .map(|r| {
                if r.len() != self.widths[0] {
                    return Err(Error::ShapeMismatch(format!("{} features, model expects {}", r.len(), self.widths[0])));
                }
                if r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite input".into()));
                }
                Ok(r.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
            })
            .collect()
    }

    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let w = &self.weights[l];
        (0..n_out)
            .map(|o| self.biases[l][o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Logits (before temperature). Dropout is applied only when masks are
    /// given.
    pub fn forward_cached(&self, x: &[Vec<f64>], masks: Option<&DropoutMasks>) -> Result<(Vec<f64>, SnnCache)> {
        let mut h = self.standardize(x)?;
        let mut cache = SnnCache {
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let z: Vec<Vec<f64>> = h.iter().map(|r| self.affine(l, r)).collect();
            cache.inputs.push(h);
            if l == last {
                return Ok((z.into_iter().map(|r| r[0]).collect(), cache));
            }
            let mut a: Vec<Vec<f64>> = z.iter().map(|r| r.iter().map(|&v| selu_scalar(v)).collect()).collect();
            if let Some(m) = masks {
                for (row, keep) in a.iter_mut().zip(&m[l]) {
                    *row = alpha_dropout_with_mask(row, self.dropout, keep)?;
                }
            }
            cache.pre.push(z);
            h = a;
        }
        unreachable!("at least one layer")
    }

    pub fn forward(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x, None)?.0)
    }

    /// Hidden activations (after SELU) of every layer, eval mode.
    pub fn hidden_activations(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
        let (_, cache) = self.forward_cached(x, None)?;
        Ok(cache.inputs.into_iter().skip(1).collect())
    }

    /// Gradients `(weights, biases)` for upstream logit gradients.
    pub fn backward(&self, cache: &SnnCache, grad_logits: &[f64], masks: Option<&DropoutMasks>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut g: Vec<Vec<f64>> = grad_logits.iter().map(|&v| vec![v]).collect();
        let (a, _) = dropout_affine(self.dropout);
        for l in (0..self.layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let inp = &cache.inputs[l];
            let mut gin = vec![vec![0.0; n_in]; g.len()];
            for (r, gr) in g.iter().enumerate() {
                for o in 0..n_out {
                    let go = gr[o];
                    if go == 0.0 {
                        continue;
                    }
                    gb[l][o] += go;
                    let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                    let gwr = &mut gw[l][o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        gwr[i] += go * inp[r][i];
                        gin[r][i] += go * row[i];
                    }
                }
            }
            if l == 0 {
                break;
            }
            // through dropout and SELU of layer l-1
            for (r, gr) in gin.iter_mut().enumerate() {
                for (i, v) in gr.iter_mut().enumerate() {
                    let kept = masks.is_none_or(|m| m[l - 1][r][i]);
                    let scale = if masks.is_some() { a } else { 1.0 };
                    *v = if kept { *v * scale * selu_grad_scalar(cache.pre[l - 1][r][i]) } else { 0.0 };
                }
            }
            g = gin;
        }
        (gw, gb)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in 0..self.layers() {
            v.extend(&self.weights[l]);
            v.extend(&self.biases[l]);
        }
        v
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        let n: usize = self.weights.iter().chain(&self.biases).map(Vec::len).sum();
        if p.len() != n {
            return Err(Error::ShapeMismatch(format!("{} parameters, model has {n}", p.len())));
        }
        let mut k = 0;
        for l in 0..self.layers() {
            for d in [&mut self.weights[l], &mut self.biases[l]] {
                let len = d.len();
                d.copy_from_slice(&p[k..k + len]);
                k += len;
            }
        }
        Ok(())
    }
}

/// Mean binary cross-entropy of logits and its gradient.
pub fn bce_with_logits(z: &[f64], y: &[u8]) -> (f64, Vec<f64>) {
    let n = z.len() as f64;
    let loss = z.iter().zip(y).map(|(&s, &t)| if t != 0 { softplus(-s) } else { softplus(s) }).sum::<f64>() / n;
    let grad = z.iter().zip(y).map(|(&s, &t)| (sigmoid_scalar(s) - t as f64) / n).collect();
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnnConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for SnnConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            epochs: 500,
            batch_size: 32,
            lr: 0.01,
            dropout: 0.1,
            seed: 0,
        }
    }
}

/// Trains on `x` with labels `y`; returns the model and the mean loss of
/// every epoch.
pub fn train_snn(x: &[Vec<f64>], y: &[u8], features: &[String], cfg: &SnnConfig) -> Result<(SnnModel, Vec<f64>)> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} rows, {} labels", x.len(), y.len())));
    }
    let pos = y.iter().filter(|&&v| v != 0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Degenerate("training labels hold a single class".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("epochs, batch size and learning rate must be positive".into()));
    }
    let d = x[0].len();
    if features.len() != d {
        return Err(Error::ShapeMismatch(format!("{} feature names for {d} columns", features.len())));
    }
    let mut widths = vec![d];
    widths.extend(&cfg.hidden);
    widths.push(1);
    let mut m = init_lecun(&widths, cfg.seed)?;
    m.dropout = cfg.dropout;
    m.features = features.to_vec();
    let n = x.len() as f64;
    for k in 0..d {
        let mean = x.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(Error::Degenerate(format!("feature {} has zero variance", features[k])));
        }
        m.mean[k] = mean;
        m.std[k] = var.sqrt();
    }
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, epoch as u64, stream::EPOCH_ORDER));
        let mut drop_rng = rng_for(cfg.seed, epoch as u64, stream::DROPOUT);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb: Vec<Vec<f64>> = batch.iter().map(|&i| x[i].clone()).collect();
            let yb: Vec<u8> = batch.iter().map(|&i| y[i]).collect();
            let masks: DropoutMasks = cfg
                .hidden
                .iter()
                .map(|&w| (0..batch.len()).map(|_| (0..w).map(|_| drop_rng.random::<f64>() >= cfg.dropout).collect()).collect())
                .collect();
            let (z, cache) = m.forward_cached(&xb, Some(&masks))?;
            let (loss, gz) = bce_with_logits(&z, &yb);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss {loss} at epoch {epoch}")));
            }
            let (gw, gb) = m.backward(&cache, &gz, Some(&masks));
            for l in 0..m.layers() {
                m.weights[l].iter_mut().zip(&gw[l]).for_each(|(w, g)| *w -= cfg.lr * g);
                m.biases[l].iter_mut().zip(&gb[l]).for_each(|(b, g)| *b -= cfg.lr * g);
            }
            total += loss * batch.len() as f64;
        }
        losses.push(total / n);
    }
    Ok((m, losses))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationReport {
    pub temperature: f64,
    pub ece_before: f64,
    pub ece_after: f64,
    pub bce_before: f64,
    pub bce_after: f64,
}

fn bce_at(z: &[f64], y: &[u8], t: f64) -> f64 {
    let s: Vec<f64> = z.iter().map(|v| v / t).collect();
    bce_with_logits(&s, y).0
}

/// Fits `T` in [0.05, 20] by golden-section search on calibration BCE; keeps
/// `T = 1` if the search does not improve on it.
pub fn fit_temperature(z: &[f64], y: &[u8]) -> Result<CalibrationReport> {
    if z.is_empty() || z.len() != y.len() {
        return Err(Error::Degenerate("empty or misaligned calibration set".into()));
    }
    let pos = y.iter().filter(|&&v| v != 0).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Degenerate("calibration set holds a single class".into()));
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = T_RANGE;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (bce_at(z, y, c), bce_at(z, y, d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = bce_at(z, y, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = bce_at(z, y, d);
        }
    }
    let mut t = 0.5 * (a + b);
    let before = bce_at(z, y, 1.0);
    if bce_at(z, y, t) > before {
        t = 1.0;
    }
    let probs = |t: f64| z.iter().map(|v| sigmoid_scalar(v / t)).collect::<Vec<f64>>();
    Ok(CalibrationReport {
        temperature: t,
        ece_before: expected_calibration_error(&probs(1.0), y, 10)?,
        ece_after: expected_calibration_error(&probs(t), y, 10)?,
        bce_before: before,
        bce_after: bce_at(z, y, t),
    })
}

/// Calibrates `m` in place on held-out rows; weights are untouched.
pub fn temperature_scale(m: &mut SnnModel, x: &[Vec<f64>], y: &[u8]) -> Result<CalibrationReport> {
    let z = m.forward(x)?;
    let rep = fit_temperature(&z, y)?;
    m.temperature = rep.temperature;
    Ok(rep)
}

/// `(probability, label)` per row with `p = sigmoid(logit / T)`.
pub fn predict_pcr(m: &SnnModel, x: &[Vec<f64>]) -> Result<Vec<(f64, u8)>> {
    Ok(m.forward(x)?
        .into_iter()
        .map(|z| {
            let p = sigmoid_scalar(z / m.temperature);
            (p, (p >= 0.5) as u8)
        })
        .collect())
}

pub fn to_model_file(m: &SnnModel) -> ModelFile {
    let mut f = ModelFile::new();
    f.push("kind", "snn");
    f.push("widths", m.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","));
    f.push("dropout", fmt_f64(m.dropout));
    f.push("temperature", fmt_f64(m.temperature));
    f.push("features", m.features.join(","));
    f.push("mean", join_f64(&m.mean));
    f.push("std", join_f64(&m.std));
    f.payload = m.flat_params().iter().map(|&v| v as f32).collect();
    f
}

pub fn from_model_file(f: &ModelFile) -> Result<SnnModel> {
    if f.get("kind")? != "snn" {
        return Err(Error::MalformedModel(format!("kind {} is not snn", f.get("kind")?)));
    }
    let widths: Vec<usize> = f
        .get("widths")?
        .split(',')
        .map(|s| s.parse().map_err(|_| Error::MalformedModel(format!("bad width {s}"))))
        .collect::<Result<_>>()?;
    let mut m = init_lecun(&widths, 0)?;
    m.dropout = f.parse("dropout")?;
    m.temperature = f.parse("temperature")?;
    m.features = f.get("features")?.split(',').map(str::to_string).collect();
    m.mean = split_f64(f.get("mean")?)?;
    m.std = split_f64(f.get("std")?)?;
    if m.mean.len() != widths[0] || m.std.len() != widths[0] || m.features.len() != widths[0] {
        return Err(Error::MalformedModel("standardization length differs from input width".into()));
    }
    if !(m.temperature > 0.0) || m.std.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::MalformedModel("temperature and stds must be positive".into()));
    }
    let p: Vec<f64> = f.payload.iter().map(|&v| v as f64).collect();
    m.set_flat_params(&p).map_err(|e| Error::MalformedModel(e.to_string()))?;
    Ok(m)
}

pub fn save_snn(m: &SnnModel, path: &Path) -> Result<()> {
    to_model_file(m).write(path)
}

pub fn load_snn(path: &Path) -> Result<SnnModel> {
    from_model_file(&ModelFile::read(path)?)
}
