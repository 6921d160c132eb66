//! Correlation-based redundancy removal and sequential forward selection
//! scored by cross-validated balanced accuracy of a small logistic model.

use crate::error::{Error, Result};
use crate::io_util::fmt_f64;
use crate::metrics::balanced_accuracy;
use crate::radiomics::FeatureTable;
use crate::rng::hash_str;

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.90;
pub const CV_FOLDS: usize = 5;
const LOGISTIC_LR: f64 = 0.1;
const LOGISTIC_ITERS: usize = 200;

/// Pearson correlation; `None` when either column has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropEntry {
    pub feature: String,
    /// `None` for a constant column, else the kept feature it correlated with.
    pub correlated_with: Option<(String, f64)>,
}

/// Keeps a feature iff its |r| against every previously kept feature is at
/// most `threshold`; constant columns go first.
pub fn correlation_filter(t: &FeatureTable, threshold: f64) -> Result<(FeatureTable, Vec<DropEntry>)> {
    if t.rows.len() < 3 {
        return Err(Error::InvalidArgument(format!("correlation filter needs >= 3 rows, got {}", t.rows.len())));
    }
    let cols: Vec<Vec<f64>> = (0..t.names.len()).map(|k| t.column(k)).collect();
    let mut log = Vec::new();
    let varying: Vec<usize> = (0..cols.len())
        .filter(|&k| {
            let c = &cols[k];
            let constant = c.iter().all(|&v| v == c[0]);
            if constant {
                log.push(DropEntry {
                    feature: t.names[k].clone(),
                    correlated_with: None,
                });
            }
            !constant
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for &k in &varying {
        let hit = kept.iter().find_map(|&j| {
            let r = pearson(&cols[k], &cols[j]).unwrap_or(0.0);
            (r.abs() > threshold).then_some((j, r))
        });
        match hit {
            Some((j, r)) => log.push(DropEntry {
                feature: t.names[k].clone(),
                correlated_with: Some((t.names[j].clone(), r)),
            }),
            None => kept.push(k),
        }
    }
    let names: Vec<String> = kept.iter().map(|&k| t.names[k].clone()).collect();
    Ok((t.select(&names)?, log))
}

pub fn drop_log_csv(log: &[DropEntry]) -> String {
    let mut s = String::from("feature,reason,kept_feature,r\n");
    for e in log {
        match &e.correlated_with {
            None => s.push_str(&format!("{},constant,,\n", e.feature)),
            Some((k, r)) => s.push_str(&format!("{},correlated,{},{}\n", e.feature, k, fmt_f64(*r))),
        }
    }
    s
}

/// Stratified fold per row: rows of each class sorted by seeded hash of the
/// case id, then dealt round-robin.
pub fn stratified_folds(case_ids: &[String], labels: &[u8], folds: usize, seed: u64) -> Vec<usize> {
    let mut out = vec![0; case_ids.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| (labels[i] != 0) as u8 == class).collect();
        idx.sort_by_key(|&i| (hash_str(seed, &case_ids[i]), case_ids[i].clone()));
        for (r, &i) in idx.iter().enumerate() {
            out[i] = r % folds;
        }
    }
    out
}

/// Full-batch logistic regression on standardized inputs from zero weights.
pub struct Logistic {
    mean: Vec<f64>,
    std: Vec<f64>,
    w: Vec<f64>,
    b: f64,
}

impl Logistic {
    pub fn fit(x: &[Vec<f64>], y: &[u8]) -> Self {
        let d = x.first().map_or(0, |r| r.len());
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| x.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..d)
            .map(|k| {
                let v = x.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = x.iter().map(|r| (0..d).map(|k| (r[k] - mean[k]) / std[k]).collect()).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..LOGISTIC_ITERS {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (r, &t) in z.iter().zip(y) {
                let s: f64 = b + r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let e = 1.0 / (1.0 + (-s).exp()) - t as f64;
                for k in 0..d {
                    gw[k] += e * r[k];
                }
                gb += e;
            }
            for k in 0..d {
                w[k] -= LOGISTIC_LR * gw[k] / n;
            }
            b -= LOGISTIC_LR * gb / n;
        }
        Self { mean, std, w, b }
    }

    pub fn predict(&self, r: &[f64]) -> u8 {
        let s: f64 = self.b + (0..self.w.len()).map(|k| (r[k] - self.mean[k]) / self.std[k] * self.w[k]).sum::<f64>();
        (s >= 0.0) as u8
    }
}

/// Rows ordered by case id so that results never depend on input order.
struct Sorted {
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

fn sorted(t: &FeatureTable, labels: &[u8]) -> Result<Sorted> {
    if labels.len() != t.rows.len() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} rows", labels.len(), t.rows.len())));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| t.case_ids[a].cmp(&t.case_ids[b]));
    Ok(Sorted {
        ids: order.iter().map(|&i| t.case_ids[i].clone()).collect(),
        rows: order.iter().map(|&i| t.rows[i].clone()).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
    })
}

/// Mean balanced accuracy over stratified folds of the logistic scorer on
/// the given columns. Folds whose held-out part lacks a class are skipped.
fn cv_score(s: &Sorted, folds: &[usize], cols: &[usize]) -> f64 {
    let project = |r: &Vec<f64>| cols.iter().map(|&c| r[c]).collect::<Vec<f64>>();
    let mut total = 0.0;
    let mut used = 0;
    for f in 0..CV_FOLDS {
        let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..s.rows.len() {
            if folds[i] == f {
                xv.push(project(&s.rows[i]));
                yv.push(s.labels[i]);
            } else {
                xt.push(project(&s.rows[i]));
                yt.push(s.labels[i]);
            }
        }
        if xt.is_empty() {
            continue;
        }
        let model = Logistic::fit(&xt, &yt);
        let pred: Vec<u8> = xv.iter().map(|r| model.predict(r)).collect();
        if let Ok(b) = balanced_accuracy(&pred, &yv) {
            total += b;
            used += 1;
        }
    }
    if used == 0 {
        0.0
    } else {
        total / used as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionStep {
    pub round: usize,
    pub feature: String,
    pub cv_balanced_accuracy: f64,
}

/// Cross-validated score of every single feature (the first-round sweep).
pub fn single_feature_scores(t: &FeatureTable, labels: &[u8], seed: u64) -> Result<Vec<f64>> {
    let s = sorted(t, labels)?;
    let folds = stratified_folds(&s.ids, &s.labels, CV_FOLDS, seed);
    Ok((0..t.names.len()).map(|c| cv_score(&s, &folds, &[c])).collect())
}

/// Greedy forward selection of `k` features; ties go to the lowest column.
pub fn sequential_forward_select(t: &FeatureTable, labels: &[u8], k: usize, seed: u64) -> Result<Vec<SelectionStep>> {
    let s = sorted(t, labels)?;
    let pos = s.labels.iter().filter(|&&l| l != 0).count();
    if pos == 0 || pos == s.labels.len() {
        return Err(Error::Degenerate("selection needs both classes".into()));
    }
    if k > t.names.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds {} features", t.names.len())));
    }
    let folds = stratified_folds(&s.ids, &s.labels, CV_FOLDS, seed);
    let mut chosen: Vec<usize> = Vec::new();
    let mut steps = Vec::with_capacity(k);
    for round in 1..=k {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..t.names.len() {
            if chosen.contains(&c) {
                continue;
            }
            let mut cols = chosen.clone();
            cols.push(c);
            let sc = cv_score(&s, &folds, &cols);
            if best.is_none_or(|(_, b)| sc > b) {
                best = Some((c, sc));
            }
        }
        let (c, sc) = best.expect("candidates remain");
        chosen.push(c);
        steps.push(SelectionStep {
            round,
            feature: t.names[c].clone(),
            cv_balanced_accuracy: sc,
        });
    }
    Ok(steps)
}

pub fn selection_csv(steps: &[SelectionStep]) -> String {
    let mut s = String::from("round,feature_name,cv_balanced_accuracy\n");
    for st in steps {
        s.push_str(&format!("{},{},{}\n", st.round, st.feature, fmt_f64(st.cv_balanced_accuracy)));
    }
    s
}

pub fn parse_selection_csv(text: &str) -> Result<Vec<String>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("bad selection line: {l}")))
        })
        .collect()
}
