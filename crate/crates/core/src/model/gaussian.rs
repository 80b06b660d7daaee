use super::LatentVariableModel;
use crate::error::{Error, Result};
use crate::real::{normal_logpdf, Real};

/// Hierarchical Gaussian model with a scalar parameter:
/// `θ ~ N(0, σ0²)`, `X_k ~ N(θ, σ1²)`, `Y_k | X_k ~ N(X_k, σ2²)`.
///
/// The importance density is the latent prior, so with `x = θ + σ1·u` the
/// weight reduces to `g(y_k | x)`. The marginal likelihood is available in
/// closed form, which makes this model the reference for exactness checks.
#[derive(Clone, Debug)]
pub struct GaussianHierarchicalModel<F = f64> {
    sigma0_sq: F,
    sigma1_sq: F,
    sigma2_sq: F,
    y: Vec<F>,
    sigma1: F,
    log_norm: F,
}

/// Normal law `N(mean, var)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalPosterior<F = f64> {
    pub mean: F,
    pub var: F,
}

impl<F: Real> NormalPosterior<F> {
    pub fn sd(&self) -> F {
        self.var.sqrt()
    }
}

impl<F: Real> GaussianHierarchicalModel<F> {
    pub fn new(sigma0_sq: F, sigma1_sq: F, sigma2_sq: F, y: Vec<F>) -> Result<Self> {
        for (name, v) in [
            ("sigma0_sq", sigma0_sq),
            ("sigma1_sq", sigma1_sq),
            ("sigma2_sq", sigma2_sq),
        ] {
            if !(v > F::zero() && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite observation".into()));
        }
        Ok(GaussianHierarchicalModel {
            sigma0_sq,
            sigma1_sq,
            sigma2_sq,
            sigma1: sigma1_sq.sqrt(),
            log_norm: -F::c(0.5) * (F::TAU() * sigma2_sq).ln(),
            y,
        })
    }

    pub fn observations(&self) -> &[F] {
        &self.y
    }

    pub fn variances(&self) -> (F, F, F) {
        (self.sigma0_sq, self.sigma1_sq, self.sigma2_sq)
    }

    /// Conjugate posterior of `θ`: precision `1/σ0² + T/(σ1²+σ2²)`.
    pub fn posterior(&self) -> NormalPosterior<F> {
        let marg = self.sigma1_sq + self.sigma2_sq;
        let t = F::from_usize(self.y.len()).unwrap();
        let precision = F::one() / self.sigma0_sq + t / marg;
        let sum: F = self.y.iter().copied().sum();
        NormalPosterior {
            mean: sum / marg / precision,
            var: F::one() / precision,
        }
    }

    /// Exact marginal score `∇_θ log p(y | θ)`.
    pub fn marginal_score(&self, theta: F) -> F {
        let marg = self.sigma1_sq + self.sigma2_sq;
        self.y.iter().map(|&y| (y - theta) / marg).sum()
    }
}

impl<F: Real> LatentVariableModel<F> for GaussianHierarchicalModel<F> {
    fn dim_theta(&self) -> usize {
        1
    }

    fn data_count(&self) -> usize {
        self.y.len()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        normal_logpdf(theta[0], F::zero(), self.sigma0_sq)
    }

    fn prior_grad(&self, theta: &[F], grad: &mut [F]) {
        grad[0] = -theta[0] / self.sigma0_sq;
    }

    #[inline]
    fn log_weight(
        &self,
        theta: &[F],
        k: usize,
        u: &[F],
        grad_theta: &mut [F],
        grad_u: &mut [F],
    ) -> F {
        let r = self.y[k] - theta[0] - self.sigma1 * u[0];
        let s = r / self.sigma2_sq;
        grad_theta[0] = s;
        grad_u[0] = self.sigma1 * s;
        self.log_norm - F::c(0.5) * r * s
    }

    #[inline]
    fn log_weight_value(&self, theta: &[F], k: usize, u: &[F]) -> F {
        let r = self.y[k] - theta[0] - self.sigma1 * u[0];
        self.log_norm - F::c(0.5) * r * r / self.sigma2_sq
    }

    fn datum_log_likelihood(&self, theta: &[F], k: usize) -> Option<F> {
        Some(normal_logpdf(
            self.y[k],
            theta[0],
            self.sigma1_sq + self.sigma2_sq,
        ))
    }

    fn parameter_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_weight_full;
    use crate::model::testutil::fd_check;
    use crate::rng::stream_rng;

    fn reference_model() -> GaussianHierarchicalModel {
        GaussianHierarchicalModel::new(10.0, 0.1, 1.0, vec![0.3, -0.2, 1.1]).unwrap()
    }

    #[test]
    fn zero_residual_weight() {
        let m = reference_model();
        let lw = log_weight_full(&m, &[0.3], 0, &[0.0]).unwrap();
        assert!((lw.value + 0.5 * (std::f64::consts::TAU * 1.0).ln()).abs() < 1e-15);
        assert_eq!(lw.grad_theta, vec![0.0]);
        assert_eq!(lw.grad_u, vec![0.0]);
    }

    #[test]
    fn rejects_non_positive_variance() {
        assert!(GaussianHierarchicalModel::new(10.0, 0.0, 1.0, vec![1.0]).is_err());
        assert!(GaussianHierarchicalModel::new(-1.0, 0.1, 1.0, vec![1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = reference_model();
        let mut rng = stream_rng(11, 0);
        for _ in 0..100 {
            let theta = [3.0 * f64::std_normal(&mut rng)];
            let u = [f64::std_normal(&mut rng)];
            let k = (f64::uniform(&mut rng) * 3.0) as usize;
            assert!(fd_check(&m, &theta, k, &u, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn single_sample_weight_is_unbiased() {
        let m = reference_model();
        let mut rng = stream_rng(5, 1);
        let theta = [0.4];
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let w = m.log_weight_value(&theta, 2, &[f64::std_normal(&mut rng)]).exp();
            s += w;
            s2 += w * w;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = m.datum_log_likelihood(&theta, 2).unwrap().exp();
        assert!(((mean - exact) / se).abs() < 3.0);
    }

    #[test]
    fn posterior_precision_is_conjugate() {
        let m = GaussianHierarchicalModel::<f64>::new(10.0, 0.1, 1.0, vec![0.0; 30]).unwrap();
        let post = m.posterior();
        assert!((1.0 / post.var - (0.1 + 30.0 / 1.1)).abs() < 1e-12);
        assert_eq!(post.mean, 0.0);
    }

    #[test]
    fn f32_instantiation_agrees() {
        let m32 = GaussianHierarchicalModel::<f32>::new(10.0, 0.1, 1.0, vec![0.3, -0.2]).unwrap();
        let m64 = GaussianHierarchicalModel::<f64>::new(10.0, 0.1, 1.0, vec![0.3, -0.2]).unwrap();
        let a = m32.log_weight_value(&[0.1], 1, &[0.7]) as f64;
        let b = m64.log_weight_value(&[0.1], 1, &[0.7]);
        assert!((a - b).abs() < 1e-5);
    }
}
