use crate::error::{Error, Result};
use crate::radiomics::{DiscretizedRoi, FeatureVector};
use crate::volume::{Mask3D, Volume3D};

pub const NAMES: [&str; 11] = [
    "firstorder_Mean",
    "firstorder_Variance",
    "firstorder_Skewness",
    "firstorder_Kurtosis",
    "firstorder_Energy",
    "firstorder_TotalEnergy",
    "firstorder_Entropy",
    "firstorder_Minimum",
    "firstorder_Maximum",
    "firstorder_Range",
    "firstorder_Median",
];

/// Intensity statistics over in-mask voxels; entropy uses the discretized
/// histogram. Skewness and kurtosis are flagged on zero variance.
pub fn first_order_features(v: &Volume3D, m: &Mask3D, roi: &DiscretizedRoi) -> Result<FeatureVector> {
    if v.dims() != m.dims() {
        return Err(Error::ShapeMismatch(format!("volume {:?} vs mask {:?}", v.dims(), m.dims())));
    }
    let mut x: Vec<f64> = v
        .voxels()
        .iter()
        .zip(m.labels())
        .filter(|(_, &l)| l != 0)
        .map(|(&a, _)| a as f64)
        .collect();
    if x.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let moment = |k: i32| x.iter().map(|a| (a - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    let energy: f64 = x.iter().map(|a| a * a).sum();

    let mut hist = vec![0usize; roi.ng + 1];
    for &l in &roi.levels {
        if l != 0 {
            hist[l as usize] += 1;
        }
    }
    let total: usize = hist.iter().sum();
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            p * p.log2()
        })
        .sum::<f64>();

    x.sort_by(f64::total_cmp);
    let k = x.len();
    let median = if k % 2 == 1 { x[k / 2] } else { 0.5 * (x[k / 2 - 1] + x[k / 2]) };
    let (lo, hi) = (x[0], x[k - 1]);

    let mut f = FeatureVector::default();
    f.push(NAMES[0], mean);
    f.push(NAMES[1], m2);
    f.push_checked(NAMES[2], (m2 > 0.0).then(|| m3 / m2.powf(1.5)));
    f.push_checked(NAMES[3], (m2 > 0.0).then(|| m4 / (m2 * m2)));
    f.push(NAMES[4], energy);
    f.push(NAMES[5], v.voxel_volume() * energy);
    f.push(NAMES[6], entropy.max(0.0));
    f.push(NAMES[7], lo);
    f.push(NAMES[8], hi);
    f.push(NAMES[9], hi - lo);
    f.push(NAMES[10], median);
    Ok(f)
}
