//! Dense row-major tensors over a generic float scalar.
//!
//! The network runs in `f32` for production and `f64` when gradients are
//! being compared against finite differences, so every kernel is generic
//! over [`Scalar`]. Shapes are dynamic (up to five axes in practice) and
//! data is always contiguous.

use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, NumCast};

/// Float scalar the network kernels operate on (`f32` or `f64`).
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static
{
    #[inline]
    fn from_f64(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("finite f64 converts to scalar")
    }

    #[inline]
    fn from_f32(v: f32) -> Self {
        <Self as NumCast>::from(v).expect("f32 converts to scalar")
    }

    /// Narrowing conversion used when persisting values as `f32`.
    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self.to_f32().expect("scalar converts to f32")
    }
}

impl<T> Scalar for T where
    T: Float + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static
{
}

/// Contiguous row-major tensor. The last axis varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {shape:?} does not match {} elements",
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterpret the same buffer under a new shape of equal volume.
    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "reshape to {shape:?} changes element count {}",
            self.data.len()
        );
        self.shape = shape.to_vec();
        self
    }

    /// Panic in debug builds if any element is non-finite. `context` names
    /// the producing layer so blowups point at their source.
    #[inline]
    pub fn debug_assert_finite(&self, context: &str) {
        if cfg!(debug_assertions) {
            if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
                panic!("non-finite value at index {pos} after {context}");
            }
        }
    }
}
