//! Volumes, masks, the VOL1 container, resampling, normalization and
//! patch extraction.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::nn::Tensor;

pub const VOL1_MAGIC: &[u8; 4] = b"VOL1";
const HEADER_LEN: usize = 4 + 12 + 12 + 1;

/// 3D scalar grid with physical spacing (mm); voxels are stored x-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    dims: [usize; 3],
    spacing: [f32; 3],
    voxels: Vec<f32>,
}

fn check_geometry(dims: [usize; 3], spacing: [f32; 3], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::NonPositiveDimension(dims.map(|d| d as u32)));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::NonPositiveSpacing(spacing));
    }
    let n: usize = dims.iter().product();
    if n != len {
        return Err(Error::InvalidVolume(format!(
            "dims {dims:?} need {n} voxels, got {len}"
        )));
    }
    Ok(())
}

#[inline]
pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

impl Volume3D {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], voxels: Vec<f32>) -> Result<Self> {
        check_geometry(dims, spacing, voxels.len())?;
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume("non-finite voxel".into()));
        }
        Ok(Self { dims, spacing, voxels })
    }

    pub fn filled(dims: [usize; 3], spacing: [f32; 3], value: f32) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.iter().product()])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[linear_index(self.dims, x, y, z)]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().map(|&s| s as f64).product()
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }
}

/// Binary label grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask3D {
    dims: [usize; 3],
    labels: Vec<u8>,
}

impl Mask3D {
    pub fn new(dims: [usize; 3], labels: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::NonPositiveDimension(dims.map(|d| d as u32)));
        }
        if labels.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidVolume("mask length does not match dims".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidVolume("mask values must be 0 or 1".into()));
        }
        Ok(Self { dims, labels })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            labels: vec![0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> Self {
        let mut labels = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    labels.push(f(x, y, z) as u8);
                }
            }
        }
        Self { dims, labels }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.labels[linear_index(self.dims, x, y, z)] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = linear_index(self.dims, x, y, z);
        self.labels[i] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.count() == 0
    }
}

/// Pre-contrast, post-contrast 1 and post-contrast 2 phases plus a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseBundle {
    pub case_id: String,
    pub phases: [Volume3D; 3],
    pub mask: Mask3D,
}

impl CaseBundle {
    pub fn new(case_id: impl Into<String>, phases: [Volume3D; 3], mask: Mask3D) -> Result<Self> {
        let dims = phases[0].dims();
        let spacing = phases[0].spacing();
        if phases.iter().any(|p| p.dims() != dims || p.spacing() != spacing) {
            return Err(Error::ShapeMismatch("phases differ in dims or spacing".into()));
        }
        if mask.dims() != dims {
            return Err(Error::ShapeMismatch("mask not aligned with phases".into()));
        }
        Ok(Self {
            case_id: case_id.into(),
            phases,
            mask,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.phases[0].dims()
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.phases[0].spacing()
    }

    /// Channel-stacked `(1, 3, nx, ny, nz)` tensor of the three phases.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let d = self.dims();
        let mut data = Vec::with_capacity(3 * self.phases[0].len());
        for p in &self.phases {
            data.extend_from_slice(p.voxels());
        }
        Tensor::from_vec([1, 3, d[0], d[1], d[2]], data).expect("consistent case geometry")
    }
}

// ---------------------------------------------------------------------------
// VOL1 container

fn encode(dims: [usize; 3], spacing: [f32; 3], dtype: u8, payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
    out.extend_from_slice(VOL1_MAGIC);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in spacing {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.push(dtype);
    out
}

pub fn encode_volume(v: &Volume3D) -> Vec<u8> {
    let mut out = encode(v.dims, v.spacing, 0, 4 * v.len());
    for x in &v.voxels {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_mask(m: &Mask3D, spacing: [f32; 3]) -> Vec<u8> {
    let mut out = encode(m.dims, spacing, 1, m.labels.len());
    out.extend_from_slice(&m.labels);
    out
}

/// Raw decoded VOL1 record.
#[derive(Clone, Debug, PartialEq)]
pub enum Vol1 {
    F32(Volume3D),
    U8 { dims: [usize; 3], spacing: [f32; 3], values: Vec<u8> },
}

pub fn decode(bytes: &[u8]) -> Result<Vol1> {
    if bytes.len() < 4 || &bytes[..4] != VOL1_MAGIC {
        return Err(Error::BadMagic {
            expected: "VOL1",
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let raw_dims = [u32_at(4), u32_at(8), u32_at(12)];
    if raw_dims.contains(&0) {
        return Err(Error::NonPositiveDimension(raw_dims));
    }
    let spacing = [f32_at(16), f32_at(20), f32_at(24)];
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::NonPositiveSpacing(spacing));
    }
    let dims = raw_dims.map(|d| d as usize);
    let n: usize = dims.iter().product();
    let dtype = bytes[28];
    let width = match dtype {
        0 => 4,
        1 => 1,
        other => return Err(Error::UnknownDtype(other)),
    };
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < n * width {
        return Err(Error::Truncated {
            expected: HEADER_LEN + n * width,
            found: bytes.len(),
        });
    }
    if payload.len() > n * width {
        return Err(Error::InvalidVolume(format!(
            "{} trailing bytes after payload",
            payload.len() - n * width
        )));
    }
    match dtype {
        0 => {
            let voxels = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Vol1::F32(Volume3D::new(dims, spacing, voxels)?))
        }
        _ => Ok(Vol1::U8 {
            dims,
            spacing,
            values: payload.to_vec(),
        }),
    }
}

pub fn write_volume(v: &Volume3D, path: &Path) -> Result<()> {
    atomic_write(path, &encode_volume(v))
}

pub fn write_mask(m: &Mask3D, spacing: [f32; 3], path: &Path) -> Result<()> {
    atomic_write(path, &encode_mask(m, spacing))
}

/// Reads a VOL1 file as an intensity volume; u8 payloads are widened.
pub fn read_volume(path: &Path) -> Result<Volume3D> {
    match decode(&fs::read(path)?)? {
        Vol1::F32(v) => Ok(v),
        Vol1::U8 { dims, spacing, values } => {
            Volume3D::new(dims, spacing, values.into_iter().map(f32::from).collect())
        }
    }
}

/// Reads a VOL1 mask (dtype 1) together with its spacing.
pub fn read_mask(path: &Path) -> Result<(Mask3D, [f32; 3])> {
    match decode(&fs::read(path)?)? {
        Vol1::U8 { dims, spacing, values } => Ok((Mask3D::new(dims, values)?, spacing)),
        Vol1::F32(_) => Err(Error::InvalidVolume("mask file has f32 payload".into())),
    }
}

// ---------------------------------------------------------------------------
// Resampling

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Trilinear sample at continuous voxel-index coordinates, clamped to the
/// grid edges.
pub fn sample_trilinear(v: &Volume3D, pos: [f64; 3]) -> f64 {
    let d = v.dims;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut t = [0f64; 3];
    for a in 0..3 {
        let p = pos[a].clamp(0.0, (d[a] - 1) as f64);
        let f = p.floor();
        lo[a] = f as usize;
        hi[a] = (lo[a] + 1).min(d[a] - 1);
        t[a] = p - f;
    }
    let g = |x: usize, y: usize, z: usize| v.get(x, y, z) as f64;
    let c00 = lerp(g(lo[0], lo[1], lo[2]), g(hi[0], lo[1], lo[2]), t[0]);
    let c10 = lerp(g(lo[0], hi[1], lo[2]), g(hi[0], hi[1], lo[2]), t[0]);
    let c01 = lerp(g(lo[0], lo[1], hi[2]), g(hi[0], lo[1], hi[2]), t[0]);
    let c11 = lerp(g(lo[0], hi[1], hi[2]), g(hi[0], hi[1], hi[2]), t[0]);
    lerp(lerp(c00, c10, t[1]), lerp(c01, c11, t[1]), t[2])
}

/// Output dims `max(1, round(n*s/target))` per axis.
pub fn isotropic_dims(dims: [usize; 3], spacing: [f32; 3], target: f64) -> [usize; 3] {
    let mut out = [0; 3];
    for a in 0..3 {
        out[a] = ((dims[a] as f64 * spacing[a] as f64 / target).round() as usize).max(1);
    }
    out
}

/// Trilinear resampling to isotropic spacing `target` (mm) with voxel-center
/// alignment and edge clamping.
pub fn resample_isotropic(v: &Volume3D, target: f64) -> Result<Volume3D> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::InvalidArgument(format!("target spacing {target} must be positive")));
    }
    let out_dims = isotropic_dims(v.dims, v.spacing, target);
    let mut voxels = Vec::with_capacity(out_dims.iter().product());
    let src = |i: usize, a: usize| (i as f64 + 0.5) * target / v.spacing[a] as f64 - 0.5;
    for z in 0..out_dims[2] {
        for y in 0..out_dims[1] {
            for x in 0..out_dims[0] {
                let p = [src(x, 0), src(y, 1), src(z, 2)];
                voxels.push(sample_trilinear(v, p) as f32);
            }
        }
    }
    Volume3D::new(out_dims, [target as f32; 3], voxels)
}

// ---------------------------------------------------------------------------
// Normalization and patches

/// Z-score normalization with population statistics over `mask` (or the
/// whole volume), applied to every voxel.
pub fn znormalize(v: &Volume3D, mask: Option<&Mask3D>) -> Result<Volume3D> {
    let region: Vec<f64> = match mask {
        Some(m) => {
            if m.dims() != v.dims {
                return Err(Error::ShapeMismatch("mask not aligned with volume".into()));
            }
            v.voxels
                .iter()
                .zip(m.labels())
                .filter(|(_, &l)| l != 0)
                .map(|(&x, _)| x as f64)
                .collect()
        }
        None => v.voxels.iter().map(|&x| x as f64).collect(),
    };
    if region.len() < 2 {
        return Err(Error::ConstantRegion);
    }
    let n = region.len() as f64;
    let mean = region.iter().sum::<f64>() / n;
    let var = region.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::ConstantRegion);
    }
    let sd = var.sqrt();
    let voxels = v.voxels.iter().map(|&x| ((x as f64 - mean) / sd) as f32).collect();
    Volume3D::new(v.dims, v.spacing, voxels)
}

/// Channel-stacked `(1, 3, size)` patch and the matching mask patch.
pub fn extract_patch(c: &CaseBundle, origin: [usize; 3], size: [usize; 3]) -> Result<(Tensor<f32>, Mask3D)> {
    let d = c.dims();
    for a in 0..3 {
        if size[a] == 0 || origin[a] + size[a] > d[a] {
            return Err(Error::OutOfBounds(format!(
                "patch {origin:?}+{size:?} outside {d:?}"
            )));
        }
    }
    let full = c.to_tensor();
    let patch = full.crop(origin, size)?;
    let mask = Mask3D::from_fn(size, |x, y, z| c.mask.get(origin[0] + x, origin[1] + y, origin[2] + z));
    Ok((patch, mask))
}
