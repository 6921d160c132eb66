//! Texture matrices (GLCM, GLRLM, GLSZM, GLDM, NGTDM) and their features.

use crate::error::{Error, Result};
use crate::radiomics::{DiscretizedRoi, FeatureVector};

/// The 13 unique unit offsets of the 26-neighbourhood: those whose first
/// nonzero component (in x, y, z order) is positive.
pub const DIRECTIONS: [[i64; 3]; 13] = [
    [1, -1, -1],
    [1, -1, 0],
    [1, -1, 1],
    [1, 0, -1],
    [1, 0, 0],
    [1, 0, 1],
    [1, 1, -1],
    [1, 1, 0],
    [1, 1, 1],
    [0, 1, -1],
    [0, 1, 0],
    [0, 1, 1],
    [0, 0, 1],
];

pub const GLCM: [&str; 5] = [
    "glcm_Contrast",
    "glcm_JointEnergy",
    "glcm_JointEntropy",
    "glcm_Correlation",
    "glcm_InverseDifferenceMoment",
];
pub const GLRLM: [&str; 5] = [
    "glrlm_ShortRunEmphasis",
    "glrlm_LongRunEmphasis",
    "glrlm_GrayLevelNonUniformity",
    "glrlm_RunLengthNonUniformity",
    "glrlm_RunPercentage",
];
pub const GLSZM: [&str; 5] = [
    "glszm_SmallAreaEmphasis",
    "glszm_LargeAreaEmphasis",
    "glszm_ZonePercentage",
    "glszm_GrayLevelNonUniformity",
    "glszm_SizeZoneNonUniformity",
];
pub const GLDM: [&str; 5] = [
    "gldm_SmallDependenceEmphasis",
    "gldm_LargeDependenceEmphasis",
    "gldm_DependenceNonUniformity",
    "gldm_GrayLevelNonUniformity",
    "gldm_DependenceEntropy",
];
pub const NGTDM: [&str; 5] = [
    "ngtdm_Coarseness",
    "ngtdm_Contrast",
    "ngtdm_Busyness",
    "ngtdm_Complexity",
    "ngtdm_Strength",
];

fn add(p: [i64; 3], d: [i64; 3], k: i64) -> [i64; 3] {
    [p[0] + k * d[0], p[1] + k * d[1], p[2] + k * d[2]]
}

fn neighbours26() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1).flat_map(|dz| (-1..=1).flat_map(move |dy| (-1..=1).map(move |dx| [dx, dy, dz]))).filter(|d| *d != [0, 0, 0])
}

/// Raw (unsymmetrized) co-occurrence counts for one offset, `ng × ng`
/// row-major with `[i-1][j-1]` counting a voxel of level i whose neighbour at
/// `+d` has level j.
pub fn glcm_counts(roi: &DiscretizedRoi, d: [i64; 3]) -> Vec<u64> {
    let ng = roi.ng;
    let mut c = vec![0u64; ng * ng];
    for (p, i) in roi.positions() {
        let j = roi.at(add(p, d, 1));
        if j != 0 {
            c[(i as usize - 1) * ng + j as usize - 1] += 1;
        }
    }
    c
}

/// Features of one direction's counts, `None` when it has no pair.
pub fn glcm_direction_features(counts: &[u64], ng: usize) -> Option<[f64; 5]> {
    let mut sym = vec![0u64; ng * ng];
    for i in 0..ng {
        for j in 0..ng {
            sym[i * ng + j] = counts[i * ng + j] + counts[j * ng + i];
        }
    }
    let total: u64 = sym.iter().sum();
    if total == 0 {
        return None;
    }
    let p: Vec<f64> = sym.iter().map(|&c| c as f64 / total as f64).collect();
    let lv = |k: usize| (k + 1) as f64;
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for i in 0..ng {
        for j in 0..ng {
            mu_i += lv(i) * p[i * ng + j];
            mu_j += lv(j) * p[i * ng + j];
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    let (mut contrast, mut energy, mut entropy, mut idm) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..ng {
        for j in 0..ng {
            let q = p[i * ng + j];
            if q == 0.0 {
                continue;
            }
            let (a, b) = (lv(i), lv(j));
            var_i += (a - mu_i).powi(2) * q;
            var_j += (b - mu_j).powi(2) * q;
            cov += (a - mu_i) * (b - mu_j) * q;
            contrast += (a - b).powi(2) * q;
            energy += q * q;
            entropy -= q * q.log2();
            idm += q / (1.0 + (a - b).powi(2));
        }
    }
    let sd = (var_i * var_j).sqrt();
    let corr = if sd > 0.0 { cov / sd } else { 1.0 };
    Some([contrast, energy, entropy.max(0.0), corr, idm])
}

/// Mean of `per` over the directions that produced a value; all columns
/// flagged when none did.
fn average_directions(names: &[&str; 5], per: impl Iterator<Item = Option<[f64; 5]>>) -> FeatureVector {
    let mut sum = [0.0; 5];
    let mut n = 0usize;
    for v in per.flatten() {
        for k in 0..5 {
            sum[k] += v[k];
        }
        n += 1;
    }
    let mut f = FeatureVector::default();
    for k in 0..5 {
        f.push_checked(names[k], (n > 0).then(|| sum[k] / n as f64));
    }
    f
}

pub fn glcm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    Ok(average_directions(
        &GLCM,
        DIRECTIONS.iter().map(|&d| glcm_direction_features(&glcm_counts(roi, d), roi.ng)),
    ))
}

/// Longest possible run along any direction.
pub fn max_run(roi: &DiscretizedRoi) -> usize {
    roi.dims.iter().copied().max().unwrap_or(0)
}

/// Run-length counts for one direction, `ng × max_run` row-major with
/// `[i-1][r-1]` counting maximal runs of level i and length r.
pub fn glrlm_counts(roi: &DiscretizedRoi, d: [i64; 3]) -> Vec<u64> {
    let mr = max_run(roi);
    let mut c = vec![0u64; roi.ng * mr];
    for (p, l) in roi.positions() {
        if roi.at(add(p, d, -1)) == l {
            continue;
        }
        let mut r = 1;
        while roi.at(add(p, d, r as i64)) == l {
            r += 1;
        }
        c[(l as usize - 1) * mr + r - 1] += 1;
    }
    c
}

/// Emphasis/non-uniformity features of a `rows × cols` count grid where the
/// column index `c` stands for size `c + 1 + offset`. Returns
/// `[small, large, row_nonuniformity, col_nonuniformity, total]`.
fn size_matrix_stats(counts: &[u64], rows: usize, cols: usize, offset: usize) -> Option<[f64; 5]> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let nt = total as f64;
    let (mut small, mut large) = (0.0, 0.0);
    let mut row_sum = vec![0u64; rows];
    let mut col_sum = vec![0u64; cols];
    for i in 0..rows {
        for c in 0..cols {
            let v = counts[i * cols + c];
            if v == 0 {
                continue;
            }
            let s = (c + 1 + offset) as f64;
            small += v as f64 / (s * s);
            large += v as f64 * s * s;
            row_sum[i] += v;
            col_sum[c] += v;
        }
    }
    let sq = |v: &[u64]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / nt;
    Some([small / nt, large / nt, sq(&row_sum), sq(&col_sum), nt])
}

pub fn glrlm_direction_features(counts: &[u64], ng: usize, max_run: usize, n_voxels: usize) -> Option<[f64; 5]> {
    let [sre, lre, gln, rln, nr] = size_matrix_stats(counts, ng, max_run, 0)?;
    Some([sre, lre, gln, rln, nr / n_voxels as f64])
}

pub fn glrlm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    let mr = max_run(roi);
    let nv = roi.voxel_count();
    if nv == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(average_directions(
        &GLRLM,
        DIRECTIONS.iter().map(|&d| glrlm_direction_features(&glrlm_counts(roi, d), roi.ng, mr, nv)),
    ))
}

/// Zone counts, `ng × n_voxels` row-major with `[i-1][s-1]` counting
/// 26-connected equal-level zones of level i and size s.
pub fn glszm_counts(roi: &DiscretizedRoi) -> Vec<u64> {
    let nv = roi.voxel_count();
    let d = roi.dims;
    let mut seen = vec![false; roi.levels.len()];
    let mut c = vec![0u64; roi.ng * nv];
    let lin = |p: [i64; 3]| (p[2] as usize * d[1] + p[1] as usize) * d[0] + p[0] as usize;
    let mut stack = Vec::new();
    for (p, l) in roi.positions() {
        if seen[lin(p)] {
            continue;
        }
        seen[lin(p)] = true;
        stack.push(p);
        let mut size = 0;
        while let Some(q) = stack.pop() {
            size += 1;
            for n in neighbours26() {
                let r = add(q, n, 1);
                if roi.at(r) == l && !seen[lin(r)] {
                    seen[lin(r)] = true;
                    stack.push(r);
                }
            }
        }
        c[(l as usize - 1) * nv + size - 1] += 1;
    }
    c
}

pub fn glszm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    let nv = roi.voxel_count();
    if nv == 0 {
        return Err(Error::EmptyMask);
    }
    let stats = size_matrix_stats(&glszm_counts(roi), roi.ng, nv, 0);
    let mut f = FeatureVector::default();
    let v = stats.map(|[sae, lae, gln, szn, nz]| [sae, lae, nz / nv as f64, gln, szn]);
    for k in 0..5 {
        f.push_checked(GLSZM[k], v.map(|a| a[k]));
    }
    Ok(f)
}

/// Dependence counts, `ng × 27` row-major with `[i-1][k]` counting voxels of
/// level i with k in-mask 26-neighbours whose level differs by at most `alpha`.
pub fn gldm_counts(roi: &DiscretizedRoi, alpha: u16) -> Vec<u64> {
    let mut c = vec![0u64; roi.ng * 27];
    for (p, l) in roi.positions() {
        let k = neighbours26()
            .filter(|&n| {
                let m = roi.at(add(p, n, 1));
                m != 0 && m.abs_diff(l) <= alpha
            })
            .count();
        c[(l as usize - 1) * 27 + k] += 1;
    }
    c
}

pub fn gldm_features(roi: &DiscretizedRoi, alpha: u16) -> Result<FeatureVector> {
    let counts = gldm_counts(roi, alpha);
    let nd: u64 = counts.iter().sum();
    if nd == 0 {
        return Err(Error::EmptyMask);
    }
    let [sde, lde, gln, dn, _] = size_matrix_stats(&counts, roi.ng, 27, 0).expect("nonempty");
    let entropy = -counts
        .iter()
        .filter(|&&v| v > 0)
        .map(|&v| {
            let p = v as f64 / nd as f64;
            p * p.log2()
        })
        .sum::<f64>();
    let mut f = FeatureVector::default();
    for (k, v) in [sde, lde, dn, gln, entropy.max(0.0)].into_iter().enumerate() {
        f.push(GLDM[k], v);
    }
    Ok(f)
}

/// Per-level voxel counts `n_i` and absolute neighbourhood differences `s_i`
/// (index `i-1`), over voxels with at least one in-mask 26-neighbour.
pub fn ngtdm_table(roi: &DiscretizedRoi) -> (Vec<u64>, Vec<f64>) {
    let mut n = vec![0u64; roi.ng];
    let mut s = vec![0f64; roi.ng];
    for (p, l) in roi.positions() {
        let (mut sum, mut cnt) = (0u64, 0u64);
        for d in neighbours26() {
            let m = roi.at(add(p, d, 1));
            if m != 0 {
                sum += m as u64;
                cnt += 1;
            }
        }
        if cnt == 0 {
            continue;
        }
        let a = sum as f64 / cnt as f64;
        n[l as usize - 1] += 1;
        s[l as usize - 1] += (l as f64 - a).abs();
    }
    (n, s)
}

pub fn ngtdm_from_table(n: &[u64], s: &[f64]) -> Option<[f64; 5]> {
    let nv: u64 = n.iter().sum();
    if nv == 0 {
        return None;
    }
    let nvf = nv as f64;
    let present: Vec<(f64, f64, f64)> = n
        .iter()
        .zip(s)
        .enumerate()
        .filter(|(_, (&c, _))| c > 0)
        .map(|(i, (&c, &si))| ((i + 1) as f64, c as f64 / nvf, si))
        .collect();
    let ngp = present.len();
    let ps: f64 = present.iter().map(|&(_, p, si)| p * si).sum();
    let s_sum: f64 = s.iter().sum();
    let coarseness = 1.0 / (ps + 1e-6);
    let (mut c2, mut busy_den, mut complexity, mut strength) = (0.0, 0.0, 0.0, 0.0);
    for &(i, pi, si) in &present {
        for &(j, pj, sj) in &present {
            c2 += pi * pj * (i - j).powi(2);
            busy_den += (i * pi - j * pj).abs();
            complexity += (i - j).abs() * (pi * si + pj * sj) / (pi + pj);
            strength += (pi + pj) * (i - j).powi(2);
        }
    }
    let (contrast, busyness) = if ngp == 1 {
        (0.0, 0.0)
    } else {
        (c2 / (ngp * (ngp - 1)) as f64 * s_sum / nvf, ps / busy_den)
    };
    Some([coarseness, contrast, busyness, complexity / nvf, strength / (s_sum + 1e-6)])
}

pub fn ngtdm_features(roi: &DiscretizedRoi) -> Result<FeatureVector> {
    let (n, s) = ngtdm_table(roi);
    let v = ngtdm_from_table(&n, &s);
    let mut f = FeatureVector::default();
    for k in 0..5 {
        f.push_checked(NGTDM[k], v.map(|a| a[k]));
    }
    Ok(f)
}
