//! Seeded synthetic DCE cases: an ellipsoidal breast region, 1-3 Gaussian-blob
//! tumors that enhance after contrast, and a pCR label planted from tumor
//! volume and pre-contrast heterogeneity.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io_util::{atomic_write, fmt_f64};
use crate::rng::{rng_for, stream};
use crate::volume::{linear_index, write_mask, write_volume, CaseBundle, Mask3D, Volume3D};

pub const AGE_BANDS: [&str; 5] = ["31-40", "41-50", "51-60", "61-70", "71+"];
pub const DENSITIES: [&str; 4] = ["a", "b", "c", "d"];
const MAX_RETRIES: u64 = 10;
const DRY_RUN_CASES: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcrRule {
    /// Tumor volume threshold in mm³.
    pub volume_thresh: f64,
    /// Threshold on the coefficient of variation of in-mask pre-contrast values.
    pub heterogeneity_thresh: f64,
}

impl PcrRule {
    pub fn label(&self, volume_mm3: f64, cv: f64) -> u8 {
        (volume_mm3 < self.volume_thresh && cv < self.heterogeneity_thresh) as u8
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub size: [usize; 3],
    pub spacing: [f32; 3],
    pub n_cases: usize,
    pub seed: u64,
    /// Blob radius interval in mm (the half-maximum radius of each blob).
    pub tumor_radius_range: (f64, f64),
    pub enhancement_gain: f64,
    pub noise_sigma: f64,
    /// Upper bound of the per-case heterogeneity amplitude.
    pub max_heterogeneity: f64,
    pub pcr_rule: PcrRule,
    /// Re-tune `pcr_rule` on a dry run before writing a dataset.
    pub auto_tune: bool,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: [32; 3],
            spacing: [1.0; 3],
            n_cases: 100,
            seed: 0,
            tumor_radius_range: (2.5, 5.5),
            enhancement_gain: 2.5,
            noise_sigma: 0.02,
            max_heterogeneity: 0.6,
            pcr_rule: PcrRule {
                volume_thresh: 250.0,
                heterogeneity_thresh: 0.2,
            },
            auto_tune: true,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 {
            return Err(Error::InvalidArgument("n_cases must be >= 1".into()));
        }
        let (lo, hi) = self.tumor_radius_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!("radius range ({lo}, {hi}) must be positive and ordered")));
        }
        if !(self.enhancement_gain > 1.0) {
            return Err(Error::InvalidArgument(format!("enhancement gain {} must exceed 1", self.enhancement_gain)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        if !(0.0..1.0).contains(&self.max_heterogeneity) {
            return Err(Error::InvalidArgument("heterogeneity must lie in [0,1)".into()));
        }
        if self.size.iter().any(|&n| n < 8) {
            return Err(Error::InvalidArgument(format!("phantom size {:?} below 8 voxels", self.size)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::NonPositiveSpacing(self.spacing));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PhantomCase {
    pub bundle: CaseBundle,
    pub pcr: u8,
    pub tags: BTreeMap<String, String>,
    pub volume_mm3: f64,
    pub cv: f64,
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

pub fn subgroup_tags(index: usize) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("age_group".to_string(), AGE_BANDS[index % AGE_BANDS.len()].to_string()),
        ("density".to_string(), DENSITIES[index % DENSITIES.len()].to_string()),
    ])
}

/// Tumor volume (mm³) and coefficient of variation of `pre` inside `mask`.
pub fn tumor_statistics(mask: &Mask3D, pre: &Volume3D) -> Result<(f64, f64)> {
    let vals: Vec<f64> = mask
        .labels()
        .iter()
        .zip(pre.voxels())
        .filter(|(&m, _)| m != 0)
        .map(|(_, &v)| v as f64)
        .collect();
    if vals.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((n * pre.voxel_volume(), var.sqrt() / mean.abs().max(1e-12)))
}

struct Layout {
    semi: [f64; 3],
    centre: [f64; 3],
    blobs: Vec<([f64; 3], f64)>,
    background: [f64; 4],
    heterogeneity: f64,
}

fn draw_layout(spec: &PhantomSpec, index: usize, attempt: u64) -> Layout {
    let mut rng = rng_for(spec.seed, index as u64, stream::PHANTOM_LAYOUT + 100 * attempt);
    let n = spec.size.map(|v| v as f64);
    let centre = n.map(|v| (v - 1.0) / 2.0);
    let semi = [
        n[0] * rng.random_range(0.40..0.46),
        n[1] * rng.random_range(0.36..0.44),
        n[2] * rng.random_range(0.40..0.46),
    ];
    let count = rng.random_range(1..=3);
    let (lo, hi) = spec.tumor_radius_range;
    let mut blobs = Vec::with_capacity(count);
    for _ in 0..count {
        let r = rng.random_range(lo..=hi);
        // Blob centres stay deep enough inside the ellipsoid that the
        // half-maximum shell (and the merged field) never leaves it.
        let margin = [0, 1, 2].map(|a| (r * 1.6 + 1.5) / spec.spacing[a] as f64);
        let c = loop {
            let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                break [0, 1, 2].map(|a| centre[a] + u[a] * (semi[a] - margin[a]).max(0.0));
            }
        };
        blobs.push((c, r));
    }
    let background = [
        rng.random_range(0.33..0.42),
        rng.random_range(-0.04..0.04),
        rng.random_range(-0.04..0.04),
        rng.random_range(0.0..std::f64::consts::TAU),
    ];
    Layout {
        semi,
        centre,
        blobs,
        background,
        heterogeneity: rng.random_range(0.0..spec.max_heterogeneity),
    }
}

fn inside(l: &Layout, p: [f64; 3]) -> bool {
    (0..3).map(|a| ((p[a] - l.centre[a]) / l.semi[a]).powi(2)).sum::<f64>() <= 1.0
}

fn build_mask(spec: &PhantomSpec, l: &Layout) -> Mask3D {
    let s = spec.spacing.map(f64::from);
    Mask3D::from_fn(spec.size, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        let f: f64 = l
            .blobs
            .iter()
            .map(|(c, r)| {
                let sigma2 = r * r / (2.0 * std::f64::consts::LN_2);
                let d2: f64 = (0..3).map(|a| ((p[a] - c[a]) * s[a]).powi(2)).sum();
                (-d2 / (2.0 * sigma2)).exp()
            })
            .sum();
        f > 0.5
    })
}

/// Every mask voxel and all its 6-neighbours lie inside the breast region.
fn strictly_inside(mask: &Mask3D, l: &Layout) -> bool {
    let d = mask.dims();
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if !mask.get(x, y, z) {
                    continue;
                }
                let p = [x as f64, y as f64, z as f64];
                for (a, s) in [(0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0), (2, -1.0), (2, 1.0)] {
                    let mut q = p;
                    q[a] += s;
                    if q[a] < 0.0 || q[a] > d[a] as f64 - 1.0 || !inside(l, q) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub fn generate_case(spec: &PhantomSpec, index: usize) -> Result<PhantomCase> {
    spec.validate()?;
    if index >= spec.n_cases {
        return Err(Error::OutOfBounds(format!("case index {index} >= n_cases {}", spec.n_cases)));
    }
    generate_case_unchecked(spec, index)
}

fn generate_case_unchecked(spec: &PhantomSpec, index: usize) -> Result<PhantomCase> {
    let (layout, mask) = (0..=MAX_RETRIES)
        .map(|attempt| {
            let l = draw_layout(spec, index, attempt);
            let m = build_mask(spec, &l);
            (l, m)
        })
        .find(|(l, m)| !m.is_empty_mask() && strictly_inside(m, l))
        .ok_or_else(|| Error::Degenerate(format!("case {index}: no valid tumor after {MAX_RETRIES} retries")))?;

    let dims = spec.size;
    let n: usize = dims.iter().product();
    let mut tex = rng_for(spec.seed, index as u64, stream::PHANTOM_TEXTURE);
    let [b0, gx, gy, phase] = layout.background;
    let mut pre = vec![0f64; n];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = linear_index(dims, x, y, z);
                let p = [x as f64, y as f64, z as f64];
                pre[i] = if !inside(&layout, p) {
                    0.05
                } else {
                    let u = [0, 1, 2].map(|a| (p[a] - layout.centre[a]) / layout.semi[a]);
                    b0 + gx * u[0] + gy * u[1] + 0.03 * (2.0 * u[2] + phase).sin()
                };
            }
        }
    }
    // Tumor voxels are drawn in linear order so the texture is order-free.
    for (i, &m) in mask.labels().iter().enumerate() {
        if m != 0 {
            let u: f64 = tex.random_range(-1.0..1.0);
            pre[i] = 0.5 * (1.0 + layout.heterogeneity * u);
        }
    }
    let gain = spec.enhancement_gain;
    let mut phases = Vec::with_capacity(3);
    for (p, factor) in [1.0, gain, 0.8 * gain].into_iter().enumerate() {
        let mut noise = rng_for(spec.seed, index as u64, stream::PHANTOM_NOISE + 100 * p as u64);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let vox: Vec<f32> = pre
            .iter()
            .zip(mask.labels())
            .map(|(&v, &m)| {
                // Scaling the stored single-precision value keeps noiseless
                // phases exact multiples of the pre-contrast phase.
                let v = v as f32 as f64;
                let clean = if m != 0 { v * factor } else { v };
                let eps = if spec.noise_sigma > 0.0 { normal.sample(&mut noise) } else { 0.0 };
                (clean + eps) as f32
            })
            .collect();
        phases.push(Volume3D::new(dims, spec.spacing, vox)?);
    }
    let phases: [Volume3D; 3] = phases.try_into().expect("three phases");
    let (volume_mm3, cv) = tumor_statistics(&mask, &phases[0])?;
    let pcr = spec.pcr_rule.label(volume_mm3, cv);
    Ok(PhantomCase {
        bundle: CaseBundle::new(case_id(index), phases, mask)?,
        pcr,
        tags: subgroup_tags(index),
        volume_mm3,
        cv,
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Places both thresholds at the same quantile `q` of a dry run's tumor
/// statistics and bisects `q` until half the dry-run cases are positive.
pub fn tune_thresholds(spec: &PhantomSpec) -> Result<PcrRule> {
    spec.validate()?;
    let stats: Vec<(f64, f64)> = (0..DRY_RUN_CASES)
        .map(|i| generate_case_unchecked(spec, i).map(|c| (c.volume_mm3, c.cv)))
        .collect::<Result<_>>()?;
    let mut vols: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let mut cvs: Vec<f64> = stats.iter().map(|s| s.1).collect();
    vols.sort_by(f64::total_cmp);
    cvs.sort_by(f64::total_cmp);
    let rule_at = |q: f64| {
        let v = quantile(&vols, q);
        let c = quantile(&cvs, q);
        PcrRule {
            volume_thresh: v,
            heterogeneity_thresh: c,
        }
    };
    let positive = |r: &PcrRule| stats.iter().filter(|(v, c)| r.label(*v, *c) == 1).count() as f64 / stats.len() as f64;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if positive(&rule_at(mid)) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(rule_at(hi))
}

pub fn labels_csv(cases: &[(String, u8)]) -> String {
    let mut s = String::from("case_id,pcr\n");
    for (id, y) in cases {
        s.push_str(&format!("{id},{y}\n"));
    }
    s
}

pub fn metadata_csv(cases: &[(String, BTreeMap<String, String>)]) -> String {
    let mut s = String::from("case_id,age_group,density\n");
    for (id, t) in cases {
        s.push_str(&format!("{id},{},{}\n", t["age_group"], t["density"]));
    }
    s
}

pub fn phase_file(id: &str, phase: usize) -> String {
    format!("{id}_{phase:04}.vol")
}

pub fn mask_file(id: &str) -> String {
    format!("{id}_mask.vol")
}

/// Writes every case plus `labels.csv` and `metadata.csv` into `dir`; returns
/// the rule actually used for labelling.
pub fn generate_dataset(spec: &PhantomSpec, dir: &Path) -> Result<PcrRule> {
    generate_dataset_with(spec, dir, |f| (0..spec.n_cases).map(f).collect())
}

/// As [`generate_dataset`], with a caller-supplied map over case indices
/// (for example a parallel one). Results must come back in index order.
pub fn generate_dataset_with(
    spec: &PhantomSpec,
    dir: &Path,
    map: impl Fn(&(dyn Fn(usize) -> Result<PhantomCase> + Sync)) -> Vec<Result<PhantomCase>>,
) -> Result<PcrRule> {
    spec.validate()?;
    let mut spec = spec.clone();
    if spec.auto_tune {
        spec.pcr_rule = tune_thresholds(&spec)?;
    }
    fs::create_dir_all(dir)?;
    let spec_ref = &spec;
    let write_one = move |i: usize| -> Result<PhantomCase> {
        let c = generate_case(spec_ref, i)?;
        let id = &c.bundle.case_id;
        for (p, v) in c.bundle.phases.iter().enumerate() {
            write_volume(v, &dir.join(phase_file(id, p)))?;
        }
        write_mask(&c.bundle.mask, spec_ref.spacing, &dir.join(mask_file(id)))?;
        Ok(c)
    };
    let cases = map(&write_one).into_iter().collect::<Result<Vec<_>>>()?;
    let labels: Vec<(String, u8)> = cases.iter().map(|c| (c.bundle.case_id.clone(), c.pcr)).collect();
    let tags: Vec<_> = cases.iter().map(|c| (c.bundle.case_id.clone(), c.tags.clone())).collect();
    atomic_write(&dir.join("labels.csv"), labels_csv(&labels).as_bytes())?;
    atomic_write(&dir.join("metadata.csv"), metadata_csv(&tags).as_bytes())?;
    Ok(spec.pcr_rule)
}

/// Human-readable record of the rule used for a dataset.
pub fn rule_summary(rule: &PcrRule) -> String {
    format!(
        "volume_thresh={}\nheterogeneity_thresh={}\n",
        fmt_f64(rule.volume_thresh),
        fmt_f64(rule.heterogeneity_thresh)
    )
}
