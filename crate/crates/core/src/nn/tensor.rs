use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar types the layer zoo is instantiated for (`f32` for training,
/// `f64` for oracle tests).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_f64c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite conversion")
    }
    fn to_f64c(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense 5-D tensor laid out as (batch, channel, x, y, z) with x fastest.
/// Lower-rank data uses unit dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 5],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 5]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn full(shape: [usize; 5], value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 5], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    /// Voxels per (batch, channel) plane.
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3] * self.shape[4]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, b: usize, c: usize, x: usize, y: usize, z: usize) -> usize {
        let [_, nc, nx, ny, nz] = self.shape;
        debug_assert!(x < nx && y < ny && z < nz);
        x + nx * (y + ny * (z + nz * (c + nc * b)))
    }

    pub fn get(&self, b: usize, c: usize, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(b, c, x, y, z)]
    }

    pub fn set(&mut self, b: usize, c: usize, x: usize, y: usize, z: usize, v: T) {
        let i = self.index(b, c, x, y, z);
        self.data[i] = v;
    }

    /// Slice of one (batch, channel) plane.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let p = self.plane_len();
        let off = (b * self.shape[1] + c) * p;
        &self.data[off..off + p]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let p = self.plane_len();
        let off = (b * self.shape[1] + c) * p;
        &mut self.data[off..off + p]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn check_same(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::from_f64c(v.to_f64c())).collect(),
        }
    }

    /// Copies a spatial sub-block `[origin, origin + size)` of every plane.
    pub fn crop(&self, origin: [usize; 3], size: [usize; 3]) -> Result<Self> {
        let sp = self.spatial();
        for a in 0..3 {
            if origin[a] + size[a] > sp[a] {
                return Err(Error::OutOfBounds(format!(
                    "crop {origin:?}+{size:?} exceeds {sp:?}"
                )));
            }
        }
        let [nb, nc, ..] = self.shape;
        let mut out = Tensor::zeros([nb, nc, size[0], size[1], size[2]]);
        for b in 0..nb {
            for c in 0..nc {
                for z in 0..size[2] {
                    for y in 0..size[1] {
                        let src = self.index(b, c, origin[0], origin[1] + y, origin[2] + z);
                        let dst = out.index(b, c, 0, y, z);
                        out.data[dst..dst + size[0]]
                            .copy_from_slice(&self.data[src..src + size[0]]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Stacks equally shaped single-item tensors along the batch axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("stack of zero tensors".into()))?;
        let mut shape = first.shape;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape[1..] != first.shape[1..] {
                return Err(Error::ShapeMismatch("stack of unequal tensors".into()));
            }
            data.extend_from_slice(&t.data);
        }
        shape[0] = items.iter().map(|t| t.shape[0]).sum();
        Ok(Self { shape, data })
    }
}
