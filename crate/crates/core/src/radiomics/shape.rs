use crate::error::{Error, Result};
use crate::radiomics::FeatureVector;
use crate::volume::Mask3D;

pub const NAMES: [&str; 6] = [
    "shape_VoxelVolume",
    "shape_SurfaceArea",
    "shape_MajorAxisLength",
    "shape_MinorAxisLength",
    "shape_LeastAxisLength",
    "shape_Elongation",
];

/// Eigenvalues of a symmetric 3×3 matrix in descending order (cyclic Jacobi).
pub fn symmetric_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let mut a = m;
    for _ in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let scale = (0..3).map(|i| a[i][i].powi(2)).sum::<f64>();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut b = a;
            for k in 0..3 {
                b[k][p] = c * a[k][p] - s * a[k][q];
                b[k][q] = s * a[k][p] + c * a[k][q];
            }
            a = b;
            for k in 0..3 {
                let (kp, kq) = (a[p][k], a[q][k]);
                a[p][k] = c * kp - s * kq;
                a[q][k] = s * kp + c * kq;
            }
        }
    }
    let mut e = [a[0][0], a[1][1], a[2][2]];
    e.sort_by(|x, y| y.total_cmp(x));
    e
}

/// Voxel-count volume, exposed-face surface area and principal-axis lengths
/// of the mask. Elongation is flagged when the covariance vanishes.
pub fn shape_features(m: &Mask3D, spacing: [f32; 3]) -> Result<FeatureVector> {
    let d = m.dims();
    let s = spacing.map(f64::from);
    let count = m.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let face = [s[1] * s[2], s[0] * s[2], s[0] * s[1]];
    let on = |x: i64, y: i64, z: i64| {
        x >= 0 && y >= 0 && z >= 0 && (x as usize) < d[0] && (y as usize) < d[1] && (z as usize) < d[2] && m.get(x as usize, y as usize, z as usize)
    };
    let mut area = 0.0;
    let mut pts = Vec::with_capacity(count);
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                if !m.get(x, y, z) {
                    continue;
                }
                let (xi, yi, zi) = (x as i64, y as i64, z as i64);
                for (axis, (dx, dy, dz)) in [(0, (1, 0, 0)), (1, (0, 1, 0)), (2, (0, 0, 1))] {
                    area += face[axis] * (!on(xi + dx, yi + dy, zi + dz) as u8 + !on(xi - dx, yi - dy, zi - dz) as u8) as f64;
                }
                pts.push([x, y, z]);
            }
        }
    }
    // Offsets from the bounding-box corner make the moments exactly
    // translation invariant.
    let lo: [usize; 3] = std::array::from_fn(|a| pts.iter().map(|p| p[a]).min().unwrap_or(0));
    let pts: Vec<[f64; 3]> = pts.iter().map(|p| std::array::from_fn(|a| (p[a] - lo[a]) as f64 * s[a])).collect();
    let n = pts.len() as f64;
    let mean: [f64; 3] = std::array::from_fn(|a| pts.iter().map(|p| p[a]).sum::<f64>() / n);
    let mut cov = [[0.0; 3]; 3];
    for p in &pts {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / n;
            }
        }
    }
    let ev = symmetric_eigenvalues(cov).map(|l| l.max(0.0));
    let mut f = FeatureVector::default();
    f.push(NAMES[0], count as f64 * s[0] * s[1] * s[2]);
    f.push(NAMES[1], area);
    f.push(NAMES[2], 4.0 * ev[0].sqrt());
    f.push(NAMES[3], 4.0 * ev[1].sqrt());
    f.push(NAMES[4], 4.0 * ev[2].sqrt());
    f.push_checked(NAMES[5], (ev[0] > 0.0).then(|| (ev[1] / ev[0]).sqrt()));
    Ok(f)
}
