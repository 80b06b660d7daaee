use std::sync::atomic::{AtomicU64, Ordering};

use crate::model::LatentVariableModel;
use crate::real::Real;

/// Wraps a model and counts single-draw log-weight evaluations, the
/// deterministic cost measure used to compare samplers.
pub struct CountingModel<'a, M: ?Sized> {
    inner: &'a M,
    values: AtomicU64,
    gradients: AtomicU64,
}

impl<'a, M: ?Sized> CountingModel<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        CountingModel {
            inner,
            values: AtomicU64::new(0),
            gradients: AtomicU64::new(0),
        }
    }

    pub fn value_calls(&self) -> u64 {
        self.values.load(Ordering::Relaxed)
    }

    pub fn gradient_calls(&self) -> u64 {
        self.gradients.load(Ordering::Relaxed)
    }
}

impl<'a, F: Real, M: LatentVariableModel<F> + ?Sized> LatentVariableModel<F> for CountingModel<'a, M> {
    fn dim_theta(&self) -> usize {
        self.inner.dim_theta()
    }

    fn data_count(&self) -> usize {
        self.inner.data_count()
    }

    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        self.inner.prior_logpdf(theta)
    }

    fn prior_grad(&self, theta: &[F], grad: &mut [F]) {
        self.inner.prior_grad(theta, grad)
    }

    fn log_weight(&self, theta: &[F], k: usize, u: &[F], grad_theta: &mut [F], grad_u: &mut [F]) -> F {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.log_weight(theta, k, u, grad_theta, grad_u)
    }

    fn log_weight_value(&self, theta: &[F], k: usize, u: &[F]) -> F {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.log_weight_value(theta, k, u)
    }

    fn datum_log_likelihood(&self, theta: &[F], k: usize) -> Option<F> {
        self.inner.datum_log_likelihood(theta, k)
    }

    fn parameter_names(&self) -> Vec<String> {
        self.inner.parameter_names()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{evaluate, evaluate_value};
    use crate::model::GaussianHierarchicalModel;

    #[test]
    fn counts_each_draw() {
        let m = GaussianHierarchicalModel::<f64>::new(10.0, 0.1, 1.0, vec![0.0; 3]).unwrap();
        let c = CountingModel::new(&m);
        evaluate_value(&c, 4, &[0.0], &[0.0; 12]).unwrap();
        evaluate(&c, 4, &[0.0], &[0.0; 12]).unwrap();
        assert_eq!(c.value_calls(), 12);
        assert_eq!(c.gradient_calls(), 12);
    }
}
