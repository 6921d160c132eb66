//! Brute-force texture matrix oracles on small ROIs.
#![allow(dead_code)]

use std::collections::BTreeMap;

use pcrseg::radiomics::texture::{
    gldm_counts, glcm_counts, glcm_direction_features, glrlm_counts, glrlm_direction_features, glszm_counts, max_run,
    ngtdm_from_table, ngtdm_table,
};
use pcrseg::radiomics::{
    gldm_features, glcm_features, glrlm_features, glszm_features, ngtdm_features, DiscretizedRoi, DIRECTIONS,
};
use pcrseg::rng::rng_for;
use rand::Rng;

const NG: usize = 8;

pub fn random_roi(seed: u64) -> DiscretizedRoi {
    let mut rng = rng_for(seed, 0, 77);
    let fill: f64 = [1.0, 0.8, 0.5][seed as usize % 3];
    // few levels on some seeds so that zones and runs get long
    let levels_used = [NG, 3, 2, 1][seed as usize % 4] as u16;
    let mut lv: Vec<u16> = (0..125)
        .map(|_| if rng.random::<f64>() < fill { rng.random_range(1..=levels_used) } else { 0 })
        .collect();
    if lv.iter().all(|&l| l == 0) {
        lv[62] = 1;
    }
    DiscretizedRoi::from_levels([5, 5, 5], lv, NG).unwrap()
}

fn voxels(roi: &DiscretizedRoi) -> Vec<([i64; 3], u16)> {
    let mut v = Vec::new();
    for z in 0..5 {
        for y in 0..5 {
            for x in 0..5 {
                let l = roi.levels[(z * 5 + y) * 5 + x];
                if l != 0 {
                    v.push(([x as i64, y as i64, z as i64], l));
                }
            }
        }
    }
    v
}

fn diff(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
}

fn chebyshev1(a: [i64; 3], b: [i64; 3]) -> bool {
    a != b && diff(a, b).iter().all(|c| c.abs() <= 1)
}

// ---------- brute-force matrix oracles ----------

fn oracle_glcm(roi: &DiscretizedRoi, d: [i64; 3]) -> Vec<u64> {
    let v = voxels(roi);
    let mut c = vec![0u64; NG * NG];
    for &(a, la) in &v {
        for &(b, lb) in &v {
            if diff(a, b) == d {
                c[(la as usize - 1) * NG + lb as usize - 1] += 1;
            }
        }
    }
    c
}

fn oracle_glrlm(roi: &DiscretizedRoi, d: [i64; 3]) -> Vec<u64> {
    let mr = 5;
    let mut c = vec![0u64; NG * mr];
    let inside = |p: [i64; 3]| p.iter().all(|&q| (0..5).contains(&q));
    for z in 0..5 {
        for y in 0..5 {
            for x in 0..5 {
                let s = [x, y, z];
                if inside([s[0] - d[0], s[1] - d[1], s[2] - d[2]]) {
                    continue; // not the first voxel of its line
                }
                // walk the whole line, splitting it into runs
                let mut line = Vec::new();
                let mut p = s;
                while inside(p) {
                    line.push(roi.levels[((p[2] * 5 + p[1]) * 5 + p[0]) as usize]);
                    p = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                }
                let mut k = 0;
                while k < line.len() {
                    let l = line[k];
                    let mut e = k;
                    while e < line.len() && line[e] == l {
                        e += 1;
                    }
                    if l != 0 {
                        c[(l as usize - 1) * mr + (e - k) - 1] += 1;
                    }
                    k = e;
                }
            }
        }
    }
    c
}

fn oracle_glszm(roi: &DiscretizedRoi) -> Vec<u64> {
    let v = voxels(roi);
    let n = v.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    for a in 0..n {
        for b in 0..n {
            if v[a].1 == v[b].1 && chebyshev1(v[a].0, v[b].0) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut sizes: BTreeMap<usize, (u16, usize)> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        sizes.entry(r).or_insert((v[i].1, 0)).1 += 1;
    }
    let mut c = vec![0u64; NG * n];
    for (l, s) in sizes.values() {
        c[(*l as usize - 1) * n + s - 1] += 1;
    }
    c
}

fn oracle_gldm(roi: &DiscretizedRoi) -> Vec<u64> {
    let v = voxels(roi);
    let mut c = vec![0u64; NG * 27];
    for &(a, la) in &v {
        let k = v.iter().filter(|&&(b, lb)| lb == la && chebyshev1(a, b)).count();
        c[(la as usize - 1) * 27 + k] += 1;
    }
    c
}

fn oracle_ngtdm(roi: &DiscretizedRoi) -> (Vec<u64>, Vec<f64>) {
    let v = voxels(roi);
    let mut n = vec![0u64; NG];
    let mut s = vec![0f64; NG];
    for &(a, la) in &v {
        let nb: Vec<f64> = v.iter().filter(|&&(b, _)| chebyshev1(a, b)).map(|&(_, lb)| lb as f64).collect();
        if nb.is_empty() {
            continue;
        }
        let mean = nb.iter().sum::<f64>() / nb.len() as f64;
        n[la as usize - 1] += 1;
        s[la as usize - 1] += (la as f64 - mean).abs();
    }
    (n, s)
}

// ---------- independent feature oracles ----------

fn feat_glcm(c: &[u64]) -> Option<[f64; 5]> {
    let total: u64 = (0..NG * NG).map(|k| c[k] + c[(k % NG) * NG + k / NG]).sum();
    if total == 0 {
        return None;
    }
    let p = |i: usize, j: usize| (c[i * NG + j] + c[j * NG + i]) as f64 / total as f64;
    let mu: f64 = (0..NG).flat_map(|i| (0..NG).map(move |j| (i, j))).map(|(i, j)| (i + 1) as f64 * p(i, j)).sum();
    let var: f64 = (0..NG)
        .flat_map(|i| (0..NG).map(move |j| (i, j)))
        .map(|(i, j)| ((i + 1) as f64 - mu).powi(2) * p(i, j))
        .sum();
    let mut out = [0.0; 5];
    for i in 0..NG {
        for j in 0..NG {
            let q = p(i, j);
            let dij = i as f64 - j as f64;
            out[0] += dij * dij * q;
            out[1] += q * q;
            if q > 0.0 {
                out[2] -= q * q.log2();
            }
            out[3] += ((i + 1) as f64 - mu) * ((j + 1) as f64 - mu) * q;
            out[4] += q / (1.0 + dij * dij);
        }
    }
    out[3] = if var > 0.0 { out[3] / var } else { 1.0 };
    Some(out)
}

/// small/large emphasis and the two non-uniformities of a count grid whose
/// column `c` means size `c + 1`.
fn emph(c: &[u64], cols: usize) -> (f64, f64, f64, f64, f64) {
    let n: f64 = c.iter().sum::<u64>() as f64;
    let mut r = (0.0, 0.0, 0.0, 0.0, n);
    for i in 0..NG {
        let row: f64 = (0..cols).map(|k| c[i * cols + k] as f64).sum();
        r.2 += row * row / n;
        for k in 0..cols {
            let s = (k + 1) as f64;
            r.0 += c[i * cols + k] as f64 / (s * s) / n;
            r.1 += c[i * cols + k] as f64 * s * s / n;
        }
    }
    for k in 0..cols {
        let col: f64 = (0..NG).map(|i| c[i * cols + k] as f64).sum();
        r.3 += col * col / n;
    }
    r
}

fn feat_ngtdm(n: &[u64], s: &[f64]) -> Option<[f64; 5]> {
    let nv: f64 = n.iter().sum::<u64>() as f64;
    if nv == 0.0 {
        return None;
    }
    let p: Vec<f64> = n.iter().map(|&c| c as f64 / nv).collect();
    let lv: Vec<usize> = (0..NG).filter(|&i| n[i] > 0).collect();
    let ngp = lv.len() as f64;
    let ps: f64 = (0..NG).map(|i| p[i] * s[i]).sum();
    let ssum: f64 = s.iter().sum();
    let mut c2 = 0.0;
    let mut bd = 0.0;
    let mut cx = 0.0;
    let mut st = 0.0;
    for &i in &lv {
        for &j in &lv {
            let (fi, fj) = ((i + 1) as f64, (j + 1) as f64);
            c2 += p[i] * p[j] * (fi - fj).powi(2);
            bd += (fi * p[i] - fj * p[j]).abs();
            cx += (fi - fj).abs() * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j]);
            st += (p[i] + p[j]) * (fi - fj).powi(2);
        }
    }
    let contrast = if ngp > 1.0 { c2 / (ngp * (ngp - 1.0)) * ssum / nv } else { 0.0 };
    let busy = if ngp > 1.0 { ps / bd } else { 0.0 };
    Some([1.0 / (ps + 1e-6), contrast, busy, cx / nv, st / (ssum + 1e-6)])
}

pub fn close(a: f64, b: f64, what: &str) {
    let ok = (a - b).abs() <= 1e-9 * (1.0 + b.abs()) || (a.is_infinite() && a == b);
    assert!(ok, "{what}: {a} vs {b}");
}

/// Every texture count matrix on 100 seeded 5x5x5 ROIs against exhaustive
/// enumeration, and every derived feature within 1e-9.
pub fn texture_matrices_match_brute_force_oracles() {
    let start = std::time::Instant::now();
    for seed in 0..100 {
        let roi = random_roi(seed);
        let nv = roi.voxel_count();
        assert_eq!(max_run(&roi), 5);
        // GLCM + GLRLM per direction
        let mut glcm_acc = ([0.0; 5], 0usize);
        let mut glrlm_acc = [0.0; 5];
        for d in DIRECTIONS {
            let c = glcm_counts(&roi, d);
            assert_eq!(c, oracle_glcm(&roi, d), "glcm seed {seed} dir {d:?}");
            let mine = glcm_direction_features(&c, NG);
            let want = feat_glcm(&c);
            assert_eq!(mine.is_some(), want.is_some());
            if let (Some(m), Some(w)) = (mine, want) {
                for k in 0..5 {
                    close(m[k], w[k], "glcm feature");
                    glcm_acc.0[k] += w[k];
                }
                glcm_acc.1 += 1;
            }
            let r = glrlm_counts(&roi, d);
            assert_eq!(r, oracle_glrlm(&roi, d), "glrlm seed {seed} dir {d:?}");
            let (sre, lre, gln, rln, nr) = emph(&r, 5);
            let want = [sre, lre, gln, rln, nr / nv as f64];
            let mine = glrlm_direction_features(&r, NG, 5, nv).unwrap();
            for k in 0..5 {
                close(mine[k], want[k], "glrlm feature");
                glrlm_acc[k] += want[k] / 13.0;
            }
        }
        let g = glcm_features(&roi).unwrap();
        if glcm_acc.1 > 0 {
            for k in 0..5 {
                close(g.values[k], glcm_acc.0[k] / glcm_acc.1 as f64, "glcm mean");
            }
        } else {
            assert_eq!(g.flags.len(), 5);
        }
        let g = glrlm_features(&roi).unwrap();
        for k in 0..5 {
            close(g.values[k], glrlm_acc[k], "glrlm mean");
        }

        // GLSZM
        let z = glszm_counts(&roi);
        assert_eq!(z, oracle_glszm(&roi), "glszm seed {seed}");
        let (sae, lae, gln, szn, nz) = emph(&z, nv);
        let want = [sae, lae, nz / nv as f64, gln, szn];
        for (k, v) in glszm_features(&roi).unwrap().values.iter().enumerate() {
            close(*v, want[k], "glszm");
        }

        // GLDM
        let dm = gldm_counts(&roi, 0);
        assert_eq!(dm, oracle_gldm(&roi), "gldm seed {seed}");
        let (sde, lde, gln, dn, n) = emph(&dm, 27);
        let ent: f64 = dm.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum();
        let want = [sde, lde, dn, gln, ent];
        for (k, v) in gldm_features(&roi, 0).unwrap().values.iter().enumerate() {
            close(*v, want[k], "gldm");
        }

        // NGTDM
        let (n, s) = ngtdm_table(&roi);
        let (on, os) = oracle_ngtdm(&roi);
        assert_eq!(n, on, "ngtdm counts seed {seed}");
        for (a, b) in s.iter().zip(&os) {
            close(*a, *b, "ngtdm s");
        }
        let f = ngtdm_features(&roi).unwrap();
        match feat_ngtdm(&on, &os) {
            Some(w) => {
                for k in 0..5 {
                    close(f.values[k], w[k], "ngtdm");
                }
                assert_eq!(ngtdm_from_table(&n, &s).is_some(), true);
            }
            None => assert_eq!(f.flags.len(), 5),
        }
    }
    assert!(start.elapsed().as_secs() < 60);
}

