//! Radiomic features of a masked volume: shape, first-order statistics and
//! five texture-matrix families over a discretized region of interest.

mod firstorder;
mod shape;
mod table;
pub mod texture;

pub use firstorder::first_order_features;
pub use shape::{shape_features, symmetric_eigenvalues};
pub use table::FeatureTable;
pub use texture::{gldm_features, glcm_features, glrlm_features, glszm_features, ngtdm_features, DIRECTIONS};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

pub const DEFAULT_NG: usize = 32;

/// Named feature values in schema order. Features that could not be computed
/// carry the sentinel 0.0 and are listed in `flags`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub flags: Vec<String>,
}

impl FeatureVector {
    pub fn push(&mut self, name: &str, value: f64) {
        self.names.push(name.to_string());
        self.values.push(value);
    }

    pub fn push_flagged(&mut self, name: &str) {
        self.push(name, 0.0);
        self.flags.push(name.to_string());
    }

    /// Pushes `value` when it is `Some` and finite, else flags the column.
    pub fn push_checked(&mut self, name: &str, value: Option<f64>) {
        match value {
            Some(v) if v.is_finite() => self.push(name, v),
            _ => self.push_flagged(name),
        }
    }

    pub fn extend(&mut self, other: FeatureVector) {
        self.names.extend(other.names);
        self.values.extend(other.values);
        self.flags.extend(other.flags);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gray levels of in-mask voxels (1..=ng), 0 outside the mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedRoi {
    pub dims: [usize; 3],
    pub levels: Vec<u16>,
    pub ng: usize,
    pub spacing: [f32; 3],
}

impl DiscretizedRoi {
    pub fn from_levels(dims: [usize; 3], levels: Vec<u16>, ng: usize) -> Result<Self> {
        if levels.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!("{} levels for dims {dims:?}", levels.len())));
        }
        if levels.iter().any(|&l| l as usize > ng) {
            return Err(Error::InvalidArgument(format!("level above ng = {ng}")));
        }
        if levels.iter().all(|&l| l == 0) {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            dims,
            levels,
            ng,
            spacing: [1.0; 3],
        })
    }

    /// Level at an integer position, 0 when outside the grid or the mask.
    #[inline]
    pub fn at(&self, p: [i64; 3]) -> u16 {
        let d = self.dims;
        if p.iter().zip(d).any(|(&c, n)| c < 0 || c >= n as i64) {
            return 0;
        }
        self.levels[(p[2] as usize * d[1] + p[1] as usize) * d[0] + p[0] as usize]
    }

    pub fn voxel_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l != 0).count()
    }

    /// In-mask positions in linear (x fastest) order.
    pub fn positions(&self) -> impl Iterator<Item = ([i64; 3], u16)> + '_ {
        let d = self.dims;
        self.levels.iter().enumerate().filter(|(_, &l)| l != 0).map(move |(i, &l)| {
            let x = i % d[0];
            let y = (i / d[0]) % d[1];
            let z = i / (d[0] * d[1]);
            ([x as i64, y as i64, z as i64], l)
        })
    }
}

/// Fixed-bin-count discretization over the in-mask intensity range.
pub fn discretize(v: &Volume3D, m: &Mask3D, ng: usize) -> Result<DiscretizedRoi> {
    if v.dims() != m.dims() {
        return Err(Error::ShapeMismatch(format!("volume {:?} vs mask {:?}", v.dims(), m.dims())));
    }
    if ng == 0 || ng > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("bin count {ng} out of range")));
    }
    let inside = || v.voxels().iter().zip(m.labels()).filter(|(_, &l)| l != 0).map(|(&x, _)| x as f64);
    let (lo, hi) = inside().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if lo > hi {
        return Err(Error::EmptyMask);
    }
    let levels = v
        .voxels()
        .iter()
        .zip(m.labels())
        .map(|(&x, &l)| {
            if l == 0 {
                0
            } else if hi == lo {
                1
            } else {
                let b = ((x as f64 - lo) / (hi - lo) * ng as f64).floor() as usize + 1;
                b.min(ng) as u16
            }
        })
        .collect();
    Ok(DiscretizedRoi {
        dims: v.dims(),
        levels,
        ng,
        spacing: v.spacing(),
    })
}

/// Every family in schema order: first-order, shape, GLCM, GLRLM, GLSZM,
/// GLDM, NGTDM.
pub fn extract_all(v: &Volume3D, m: &Mask3D) -> Result<FeatureVector> {
    extract_all_with(v, m, DEFAULT_NG)
}

pub fn extract_all_with(v: &Volume3D, m: &Mask3D, ng: usize) -> Result<FeatureVector> {
    let roi = discretize(v, m, ng)?;
    let mut f = first_order_features(v, m, &roi)?;
    f.extend(shape_features(m, v.spacing())?);
    f.extend(glcm_features(&roi)?);
    f.extend(glrlm_features(&roi)?);
    f.extend(glszm_features(&roi)?);
    f.extend(gldm_features(&roi, 0)?);
    f.extend(ngtdm_features(&roi)?);
    Ok(f)
}

/// Column names produced by [`extract_all`].
pub fn schema() -> Vec<String> {
    let mut v: Vec<String> = firstorder::NAMES.iter().map(|s| s.to_string()).collect();
    v.extend(shape::NAMES.iter().map(|s| s.to_string()));
    for names in [texture::GLCM, texture::GLRLM, texture::GLSZM, texture::GLDM, texture::NGTDM] {
        v.extend(names.iter().map(|s| s.to_string()));
    }
    v
}
