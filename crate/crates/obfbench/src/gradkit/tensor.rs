use std::fmt::Debug;

use crate::gradkit::{GradError, Result};

/// Scalar element of a [`Tensor`]: `f32` for model storage, `f64` for
/// gradient-check reference evaluation.
pub trait Element:
    Copy + PartialOrd + Debug + Send + Sync + 'static + num_like::NumLike
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn max(self, other: Self) -> Self;
}

/// Arithmetic supertraits kept out of the public path for readability.
mod num_like {
    use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

    pub trait NumLike:
        Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
        + AddAssign
        + Sized
    {
    }

    impl<T> NumLike for T where
        T: Add<Output = T>
            + Sub<Output = T>
            + Mul<Output = T>
            + Div<Output = T>
            + Neg<Output = T>
            + AddAssign
    {
    }
}

macro_rules! impl_element {
    ($ty:ty) => {
        impl Element for $ty {
            fn from_f64(x: f64) -> Self {
                x as $ty
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn is_finite(self) -> bool {
                <$ty>::is_finite(self)
            }
            fn exp(self) -> Self {
                <$ty>::exp(self)
            }
            fn ln(self) -> Self {
                <$ty>::ln(self)
            }
            fn tanh(self) -> Self {
                <$ty>::tanh(self)
            }
            fn sqrt(self) -> Self {
                <$ty>::sqrt(self)
            }
            fn abs(self) -> Self {
                <$ty>::abs(self)
            }
            fn max(self, other: Self) -> Self {
                <$ty>::max(self, other)
            }
        }
    };
}

impl_element!(f32);
impl_element!(f64);

/// Shorthand for converting an `f64` constant into any [`Element`].
pub(crate) fn c<T: Element>(x: f64) -> T {
    T::from_f64(x)
}

/// A dense row-major tensor. Rank 0 (shape `[]`) holds a single scalar;
/// rank 2 is the workhorse shape for sequences of embedding vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Element = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(GradError::ShapeMismatch {
                op: "tensor",
                detail: format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
        }
    }

    /// 1-D tensor from a slice.
    pub fn vector(values: &[T]) -> Self {
        Self {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// 2-D tensor from a flat row-major vector.
    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new([rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Rows of a rank-2 tensor (rank-1 counts as a single row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of shape {:?}", self.shape),
        }
    }

    /// Columns of a rank-2 tensor (length of a rank-1 tensor).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of shape {:?}", self.shape),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.cols();
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert between element precisions (via `f64`).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Stack rank-2 (or rank-1, treated as one row) tensors vertically.
    pub fn stack_rows(parts: &[&Tensor<T>]) -> Result<Self> {
        let cols = parts
            .first()
            .ok_or_else(|| GradError::ShapeMismatch {
                op: "stack_rows",
                detail: "no parts".into(),
            })?
            .cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(GradError::ShapeMismatch {
                    op: "stack_rows",
                    detail: format!("column mismatch: {} vs {}", p.cols(), cols),
                });
            }
            rows += p.rows();
            data.extend_from_slice(p.data());
        }
        Tensor::new([rows, cols], data)
    }

    /// Copy of the row range `[start, end)` of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if end < start || end > self.rows() {
            return Err(GradError::IndexOutOfRange {
                op: "slice_rows",
                index: end,
                bound: self.rows(),
            });
        }
        let cols = self.cols();
        Tensor::new(
            [end - start, cols],
            self.data[start * cols..end * cols].to_vec(),
        )
    }
}
