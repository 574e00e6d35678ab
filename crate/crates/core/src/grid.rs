use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::real::Real;

/// Dense `[C, D, H, W]` volume. `D` runs along voxel `z`, `H` along `x` and
/// `W` along `y`, matching the kernel axis order `(kz, kx, ky)`.
/// `origin` is the `(x, y, z)` voxel index of cell `(0, 0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid<S> {
    channels: usize,
    shape: [usize; 3],
    origin: [i32; 3],
    values: Vec<S>,
}

impl<S: Real> DenseGrid<S> {
    pub fn zeros(channels: usize, shape: [usize; 3], origin: [i32; 3]) -> Self {
        let n = channels * shape[0] * shape[1] * shape[2];
        Self { channels, shape, origin, values: vec![S::zero(); n] }
    }

    pub fn from_values(channels: usize, shape: [usize; 3], origin: [i32; 3], values: Vec<S>) -> Result<Self> {
        let n = channels * shape[0] * shape[1] * shape[2];
        if values.len() != n {
            bail!(Shape, "grid [{channels}, {shape:?}] needs {n} values, got {}", values.len());
        }
        if !values.iter().all(|v| v.is_finite()) {
            bail!(InvalidInput, "grid values must be finite");
        }
        Ok(Self { channels, shape, origin, values })
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `[D, H, W]`.
    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn origin(&self) -> [i32; 3] {
        self.origin
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    #[inline]
    pub fn index(&self, c: usize, d: usize, h: usize, w: usize) -> usize {
        ((c * self.shape[0] + d) * self.shape[1] + h) * self.shape[2] + w
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, h: usize, w: usize) -> S {
        self.values[self.index(c, d, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, d: usize, h: usize, w: usize, v: S) {
        let i = self.index(c, d, h, w);
        self.values[i] = v;
    }

    pub fn cast<T: Real>(&self) -> DenseGrid<T> {
        DenseGrid {
            channels: self.channels,
            shape: self.shape,
            origin: self.origin,
            values: self.values.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

/// Dense `[C, H, W]` image for the planar paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<S>,
}

impl<S: Real> Image<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, values: vec![S::zero(); channels * height * width] }
    }

    pub fn from_values(channels: usize, height: usize, width: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != channels * height * width {
            bail!(Shape, "image [{channels}, {height}, {width}] got {} values", values.len());
        }
        Ok(Self { channels, height, width, values })
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> S {
        self.values[(c * self.height + h) * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, v: S) {
        self.values[(c * self.height + h) * self.width + w] = v;
    }
}
