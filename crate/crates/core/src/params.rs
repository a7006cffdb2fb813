//! Uniform access to the weight tensors of a model.
//!
//! Gradients of a model are stored as another value of the same type, so a
//! single trait covers optimizer updates, clipping, checkpoints and
//! finite-difference checks.

use crate::linalg::Matrix;

pub trait Parameters: Clone {
    /// Tensors in a fixed order, each with a stable name.
    fn named_tensors(&self) -> Vec<(String, &Matrix)>;

    /// Mutable tensors in the same order as [`Parameters::named_tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    fn global_norm(&self) -> f64 {
        self.named_tensors()
            .iter()
            .map(|(_, t)| t.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    fn scale_all(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v *= k);
        }
    }

    /// `self += k * other`, tensor by tensor.
    fn axpy_all(&mut self, k: f64, other: &Self) {
        let src: Vec<Vec<f64>> = other
            .named_tensors()
            .into_iter()
            .map(|(_, t)| t.as_slice().to_vec())
            .collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.as_mut_slice().iter_mut().zip(s) {
                *d += k * v;
            }
        }
    }

    fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }
}

/// Rescales `grads` so its global norm is at most `threshold`. Returns the
/// norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, threshold: f64) -> f64 {
    let norm = grads.global_norm();
    if threshold > 0.0 && norm > threshold {
        grads.scale_all(threshold / norm);
    }
    norm
}
