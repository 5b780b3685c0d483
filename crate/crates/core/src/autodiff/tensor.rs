//! Dense row-major n-dimensional arrays.

use super::scalar::Element;
use super::AdError;

/// Dense tensor with a row-major contiguous layout. A scalar has the empty
/// shape `[]` and one element.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<R: Element> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Element> Tensor<R> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![R::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: R) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: R) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<R>) -> Result<Self, AdError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(AdError::Shape {
                op: "from_vec",
                detail: format!("shape {:?} wants {} values, got {}", shape, n, data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[R] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> R {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, AdError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(AdError::Shape {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &d) in idx.iter().enumerate() {
            debug_assert!(d < self.shape[i]);
            off = off * self.shape[i] + d;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> R {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: R) {
        let o = self.offset(idx);
        self.data[o] = v;
    }
}
