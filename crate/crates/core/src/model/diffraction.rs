use rand::Rng;

use super::{iid_normal_prior, iid_normal_prior_grad, LatentVariableModel};
use crate::error::{Error, Result};
use crate::real::Real;

const PRIOR_VAR: f64 = 100.0;
const SERIES_CUTOFF: f64 = 1e-4;

/// `log sinc²(z)` and its derivative, with `sinc(0) = 1`.
///
/// Returns `(-inf, 0)` at the nodes `z = jπ, j ≠ 0`.
#[inline]
pub fn log_sinc_sq<F: Real>(z: F) -> (F, F) {
    if z.abs() < F::c(SERIES_CUTOFF) {
        let z2 = z * z;
        let value = -z2 / F::c(3.0) - z2 * z2 / F::c(90.0);
        let deriv = -F::c(2.0) * z / F::c(3.0) - F::c(4.0) * z2 * z / F::c(90.0);
        return (value, deriv);
    }
    let (s, c) = z.sin_cos();
    if s == F::zero() {
        return (F::neg_infinity(), F::zero());
    }
    let value = F::c(2.0) * (s.abs().ln() - z.abs().ln());
    let deriv = F::c(2.0) * (c / s - z.recip());
    (value, deriv)
}

/// Draws from the density `sinc²(z)/π` by rejection from a Cauchy envelope
/// (acceptance probability 1/2).
pub fn sample_sinc_sq<F: Real, R: Rng + ?Sized>(rng: &mut R) -> F {
    loop {
        let z = (F::PI() * (F::uniform(rng) - F::c(0.5))).tan();
        if z == F::zero() {
            return z;
        }
        let s = z.sin();
        let accept = s * s * (F::one() + z * z) / (F::c(2.0) * z * z);
        if F::uniform(rng) < accept {
            return z;
        }
    }
}

/// Diffraction-intensity observation model:
/// `X_k ~ N(μ, σ²)`, `Y_k | X_k ~ (λπ)⁻¹ sinc²((y − X_k)/λ)`,
/// parameterized as `θ = (μ, log σ, log λ)` with independent `N(0, 10²)`
/// priors. Latents are non-centered, `x = μ + σu`, and the importance
/// density is the latent prior.
#[derive(Clone, Debug)]
pub struct DiffractionModel<F = f64> {
    y: Vec<F>,
}

impl<F: Real> DiffractionModel<F> {
    pub fn new(y: Vec<F>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite observation".into()));
        }
        Ok(DiffractionModel { y })
    }

    pub fn observations(&self) -> &[F] {
        &self.y
    }

    /// Observation log density `log g(y | x, λ)`.
    pub fn obs_logpdf(y: F, x: F, lambda: F) -> F {
        -(lambda * F::PI()).ln() + log_sinc_sq((y - x) / lambda).0
    }
}

impl<F: Real> LatentVariableModel<F> for DiffractionModel<F> {
    fn dim_theta(&self) -> usize {
        3
    }

    fn data_count(&self) -> usize {
        self.y.len()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        iid_normal_prior(theta, F::c(PRIOR_VAR))
    }

    fn prior_grad(&self, theta: &[F], grad: &mut [F]) {
        iid_normal_prior_grad(theta, F::c(PRIOR_VAR), grad)
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
        let sigma = theta[1].exp();
        let log_lambda = theta[2];
        let lambda = log_lambda.exp();
        let su = sigma * u[0];
        let z = (self.y[k] - theta[0] - su) / lambda;
        let (ls, dls) = log_sinc_sq(z);
        if ls == F::neg_infinity() {
            grad_theta[..3].fill(F::zero());
            grad_u[0] = F::zero();
            return ls;
        }
        let g = dls / lambda;
        grad_theta[0] = -g;
        grad_theta[1] = -g * su;
        grad_theta[2] = -F::one() - dls * z;
        grad_u[0] = -g * sigma;
        -log_lambda - F::PI().ln() + ls
    }

    #[inline]
    fn log_weight_value(&self, theta: &[F], k: usize, u: &[F]) -> F {
        let lambda = theta[2].exp();
        let z = (self.y[k] - theta[0] - theta[1].exp() * u[0]) / lambda;
        -theta[2] - F::PI().ln() + log_sinc_sq(z).0
    }

    fn parameter_names(&self) -> Vec<String> {
        vec!["mu".into(), "log_sigma".into(), "log_lambda".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_weight_full;
    use crate::model::testutil::fd_check;
    use crate::rng::stream_rng;

    #[test]
    fn peak_weight_at_zero_residual() {
        let m = DiffractionModel::new(vec![1.7]).unwrap();
        // μ + σu = y with σ = 1
        let theta = [1.2, 0.0, 0.1f64.ln()];
        let lw = log_weight_full(&m, &theta, 0, &[0.5]).unwrap();
        let expected = (1.0 / (0.1 * std::f64::consts::PI)).ln();
        assert!((lw.value - expected).abs() < 1e-12);
        assert!((expected.exp() - 3.183_098_86).abs() < 1e-8);
    }

    #[test]
    fn series_and_closed_form_agree_at_cutoff() {
        for &z in &[0.99e-4, 1.01e-4, -1.01e-4] {
            let (v, d) = log_sinc_sq(z);
            let direct = 2.0 * (f64::sin(z) / z).abs().ln();
            assert!((v - direct).abs() < 1e-15);
            assert!((d - (-2.0 * z / 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sinc_near_nodes() {
        let (v, d) = log_sinc_sq(0.0f64);
        assert_eq!((v, d), (0.0, 0.0));
        // The floating-point π is not an exact node, so the weight is tiny but positive.
        let (v, _) = log_sinc_sq(std::f64::consts::PI);
        assert!(v < -30.0 && v.is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream_rng(21, 0);
        let y: Vec<f64> = (0..5).map(|_| 1.0 + f64::std_normal(&mut rng)).collect();
        let m = DiffractionModel::new(y).unwrap();
        for _ in 0..100 {
            let theta = [
                1.0 + 0.5 * f64::std_normal(&mut rng),
                0.3 * f64::std_normal(&mut rng),
                -1.0 + 0.5 * f64::std_normal(&mut rng),
            ];
            let u = [f64::std_normal(&mut rng)];
            let k = (f64::uniform(&mut rng) * 5.0) as usize;
            let err = fd_check(&m, &theta, k, &u, 1e-6);
            assert!(err < 1e-5, "rel err {err} at {theta:?} {u:?}");
        }
    }

    /// Adaptive Simpson quadrature used as an independent normalization oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, depth)
    }

    #[test]
    fn observation_density_integrates_to_one() {
        for &lambda in &[0.05, 0.1, 1.0] {
            let f = |y: f64| DiffractionModel::<f64>::obs_logpdf(y, 0.0, lambda).exp();
            // Integrate over |z| < Z in units of λ and add the analytic
            // 1/(πZ) tail of the 1/z² envelope (sin² averages to 1/2).
            let zmax = 2000.0;
            let pieces = 4000;
            let width = 2.0 * zmax * lambda / pieces as f64;
            let body: f64 = (0..pieces)
                .map(|j| {
                    let a = -zmax * lambda + j as f64 * width;
                    adaptive_simpson(&f, a, a + width, 1e-10, 30)
                })
                .sum();
            let tail = 1.0 / (std::f64::consts::PI * zmax);
            assert!((body + tail - 1.0).abs() < 1e-3, "λ={lambda}: {}", body + tail);
            assert!((body - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn sinc_sampler_matches_density_on_an_interval() {
        let mut rng = stream_rng(8, 0);
        let n = 200_000;
        let inside = (0..n)
            .filter(|_| sample_sinc_sq::<f64, _>(&mut rng).abs() < 1.0)
            .count() as f64
            / n as f64;
        let f = |z: f64| log_sinc_sq(z).0.exp() / std::f64::consts::PI;
        let exact = adaptive_simpson(&f, -1.0, 1.0, 1e-12, 40);
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((inside - exact).abs() < 4.0 * se);
    }
}
