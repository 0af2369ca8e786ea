use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Scalar;

/// Dense row-major tensor. Values are immutable once placed on a tape;
/// parameter updates go through `ModelParams`, never through tape nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor shape {shape:?} wants {numel} elements, got {}",
            data.len()
        );
        debug_assert!(data.iter().all(|v| v.is_finite()), "non-finite tensor entry");
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![S::zero(); numel] }
    }

    pub fn scalar(v: S) -> Self {
        Tensor::new(vec![1], vec![v])
    }

    pub fn vector(data: Vec<S>) -> Self {
        Tensor::new(vec![data.len()], data)
    }

    /// Entries drawn i.i.d. uniform from `[lo, hi)`. Samples in f64 and
    /// converts, so the stream of draws is identical across precisions.
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| S::c(rng.gen_range(lo..hi))).collect();
        Tensor::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows / row width for 2-D tensors.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() on non-matrix shape {:?}", self.shape);
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() on non-matrix shape {:?}", self.shape);
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_scalar_shape(&self) -> bool {
        self.numel() == 1
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite entry in {what}")))
        }
    }
}

/// Numerically stable softmax (max-subtracted). Errors on empty or
/// non-finite input; the output sums to 1 within 1e-9.
pub fn softmax<S: Scalar>(v: &[S]) -> Result<Vec<S>> {
    if v.is_empty() {
        return Err(Error::Numeric("softmax of empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("softmax of non-finite input".into()));
    }
    Ok(softmax_unchecked(v))
}

pub(crate) fn softmax_unchecked<S: Scalar>(v: &[S]) -> Vec<S> {
    let max = v.iter().cloned().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = v.iter().map(|&x| (x - max).exp()).collect();
    let mut sum = S::zero();
    for e in &exps {
        sum += *e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}
