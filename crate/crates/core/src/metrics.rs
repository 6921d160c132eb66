//! Segmentation overlap and surface distance, classification accuracy,
//! calibration error and per-subgroup reports.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::volume::Mask3D;

fn check_dims(a: &Mask3D, b: &Mask3D) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!("mask dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `2|P∩G| / (|P|+|G|)`, 1 when both masks are empty.
pub fn dice_score(pred: &Mask3D, gt: &Mask3D) -> Result<f64> {
    check_dims(pred, gt)?;
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        let (a, b) = (a != 0, b != 0);
        inter += (a && b) as usize;
        p += a as usize;
        g += b as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// In-mask voxels with at least one 6-neighbour outside the mask. Neighbours
/// beyond the grid count as outside.
pub fn boundary_voxels(m: &Mask3D) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = m.dims();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !m.get(x, y, z) {
                    continue;
                }
                let edge = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                if edge
                    || !m.get(x - 1, y, z)
                    || !m.get(x + 1, y, z)
                    || !m.get(x, y - 1, z)
                    || !m.get(x, y + 1, z)
                    || !m.get(x, y, z - 1)
                    || !m.get(x, y, z + 1)
                {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// Linear-interpolated percentile (`q` in [0,100]) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn directed(a: &[[usize; 3]], b: &[[usize; 3]], spacing: [f64; 3], q: f64) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .map(|p| {
            b.iter()
                .map(|r| {
                    (0..3)
                        .map(|i| ((p[i] as f64 - r[i] as f64) * spacing[i]).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    percentile(&d, q)
}

/// Symmetric percentile Hausdorff distance (mm) between mask boundaries.
pub fn hausdorff_mm(pred: &Mask3D, gt: &Mask3D, spacing: [f32; 3], q: f64) -> Result<Option<f64>> {
    check_dims(pred, gt)?;
    let a = boundary_voxels(pred);
    let b = boundary_voxels(gt);
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    let s = spacing.map(f64::from);
    Ok(Some(directed(&a, &b, s, q).max(directed(&b, &a, s, q))))
}

/// Percentile Hausdorff distance divided by the physical image diagonal and
/// clamped to [0,1]. Both empty gives 0, exactly one empty gives 1.
pub fn norm_hausdorff(pred: &Mask3D, gt: &Mask3D, spacing: [f32; 3], q: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("percentile {q} outside [0,100]")));
    }
    match (pred.is_empty_mask(), gt.is_empty_mask()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(1.0),
        _ => {}
    }
    let hd = hausdorff_mm(pred, gt, spacing, q)?.unwrap_or(0.0);
    let diag = pred
        .dims()
        .iter()
        .zip(spacing)
        .map(|(&n, s)| (n as f64 * s as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((hd / diag).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", pred.len(), truth.len())));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p != 0, t != 0) {
                (true, true) => c.tp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
            }
        }
        Ok(c)
    }

    pub fn balanced_accuracy(&self) -> Result<f64> {
        let pos = self.tp + self.fn_;
        let neg = self.tn + self.fp;
        if pos == 0 || neg == 0 {
            return Err(Error::Degenerate("balanced accuracy needs both true classes".into()));
        }
        Ok((self.tp as f64 / pos as f64 + self.tn as f64 / neg as f64) / 2.0)
    }
}

pub fn balanced_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    Confusion::from_labels(pred, truth)?.balanced_accuracy()
}

/// Equal-width binning over confidence `max(p, 1-p)`; the predicted class is
/// `p >= 0.5`.
pub fn expected_calibration_error(probs: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("empty input".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} probabilities for {} labels", probs.len(), labels.len())));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    let mut count = vec![0usize; bins];
    let mut correct = vec![0f64; bins];
    let mut conf = vec![0f64; bins];
    for (&p, &y) in probs.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0,1]")));
        }
        let c = p.max(1.0 - p);
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += c;
        correct[b] += ((p >= 0.5) == (y != 0)) as u8 as f64;
    }
    let n = probs.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            k / n * (correct[b] / k - conf[b] / k).abs()
        })
        .sum())
}

/// Categorical case metadata: one row of column values per case id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<String>>,
}

impl Metadata {
    /// Parses a CSV with a `case_id` first column and a header row.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty metadata".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"case_id") {
            return Err(Error::Parse("metadata must start with a case_id column".into()));
        }
        let mut md = Metadata {
            columns: cols[1..].iter().map(|s| s.to_string()).collect(),
            rows: BTreeMap::new(),
        };
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != cols.len() {
                return Err(Error::Parse(format!("metadata line {}: {} fields, expected {}", i + 2, f.len(), cols.len())));
            }
            md.rows.insert(f[0].to_string(), f[1..].iter().map(|s| s.to_string()).collect());
        }
        Ok(md)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("case_id");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (id, vals) in &self.rows {
            s.push_str(id);
            for v in vals {
                s.push(',');
                s.push_str(v);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupScore {
    pub column: String,
    pub value: String,
    pub n: usize,
    /// `None` when the group holds a single true class.
    pub balanced_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubgroupReport {
    pub groups: Vec<GroupScore>,
    pub overall: Option<f64>,
    pub n: usize,
}

impl SubgroupReport {
    /// Mean balanced accuracy over the scored groups of one column.
    pub fn column_mean(&self, column: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .groups
            .iter()
            .filter(|g| g.column == column)
            .filter_map(|g| g.balanced_accuracy)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("column,group,n,balanced_accuracy\n");
        for g in &self.groups {
            let ba = match g.balanced_accuracy {
                Some(b) => format!("{:.1}%", 100.0 * b),
                None => "insufficient".to_string(),
            };
            s.push_str(&format!("{},{},{},{}\n", g.column, g.value, g.n, ba));
        }
        let overall = match self.overall {
            Some(b) => format!("{:.1}%", 100.0 * b),
            None => "insufficient".to_string(),
        };
        s.push_str(&format!("overall,all,{},{}\n", self.n, overall));
        s
    }
}

/// Balanced accuracy per value of every metadata column, groups in column
/// order then lexicographic value order.
pub fn subgroup_report(case_ids: &[String], pred: &[u8], truth: &[u8], md: &Metadata) -> Result<SubgroupReport> {
    if case_ids.len() != pred.len() || pred.len() != truth.len() {
        return Err(Error::ShapeMismatch("case ids, predictions and labels differ in length".into()));
    }
    let mut rows = Vec::with_capacity(case_ids.len());
    for id in case_ids {
        rows.push(md.rows.get(id).ok_or_else(|| Error::InvalidArgument(format!("missing metadata row for {id}")))?);
    }
    let mut groups = Vec::new();
    for (ci, col) in md.columns.iter().enumerate() {
        let mut by: BTreeMap<&str, (Vec<u8>, Vec<u8>)> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            let e = by.entry(r[ci].as_str()).or_default();
            e.0.push(pred[i]);
            e.1.push(truth[i]);
        }
        for (value, (p, t)) in by {
            groups.push(GroupScore {
                column: col.clone(),
                value: value.to_string(),
                n: p.len(),
                balanced_accuracy: balanced_accuracy(&p, &t).ok(),
            });
        }
    }
    Ok(SubgroupReport {
        groups,
        overall: balanced_accuracy(pred, truth).ok(),
        n: pred.len(),
    })
}
