use super::{iid_normal_prior, iid_normal_prior_grad, LatentVariableModel};
use crate::error::{Error, Result};
use crate::real::{logistic, normal_logpdf, softplus, Real};

const PRIOR_VAR: f64 = 100.0;
/// Standard deviation of the `N(0, 3²)` importance density for the random effects.
const PROPOSAL_SD: f64 = 3.0;

/// Fixed effects used to simulate the reference data set (8 covariates).
pub const GLMM_BETA_TRUE: [f64; 8] = [
    -1.1671, 2.4665, -0.1918, -1.0080, 0.6212, 0.6524, 1.5410, 0.2653,
];

/// Shared initial fixed effects for every sampler.
pub const GLMM_BETA_INIT: [f64; 8] = [
    0.5838, 0.3805, -1.5062, -0.0442, 0.4717, -0.1435, 0.6371, -0.0522,
];

/// Log density of the two-component mixture `w1 N(μ1, 1/λ1) + (1−w1) N(μ2, 1/λ2)`.
pub fn mixture_logpdf<F: Real>(x: F, w1: F, mu1: F, lambda1: F, mu2: F, lambda2: F) -> F {
    let (log_w1, log_w2) = (w1.ln(), (F::one() - w1).ln());
    mixture_terms(x, [log_w1, log_w2], [mu1, mu2], [lambda1, lambda2]).0
}

/// Returns `(log density, responsibilities)`.
#[inline]
fn mixture_terms<F: Real>(x: F, log_w: [F; 2], mu: [F; 2], lambda: [F; 2]) -> (F, [F; 2]) {
    let half = F::c(0.5);
    let mut a = [F::zero(); 2];
    for j in 0..2 {
        let r = x - mu[j];
        a[j] = log_w[j] + half * (lambda[j] / F::TAU()).ln() - half * lambda[j] * r * r;
    }
    let m = a[0].max(a[1]);
    if m == F::neg_infinity() {
        return (m, [F::zero(); 2]);
    }
    let e = [(a[0] - m).exp(), (a[1] - m).exp()];
    let s = e[0] + e[1];
    (m + s.ln(), [e[0] / s, e[1] / s])
}

/// Covariates and binary responses for `T` subjects with `n_i` observations each.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmmData<F = f64> {
    pub subjects: usize,
    pub per_subject: usize,
    pub covariates: usize,
    /// Row-major `T × n_i × p_cov`.
    pub z: Vec<F>,
    /// Row-major `T × n_i`, entries 0 or 1.
    pub y: Vec<F>,
}

impl<F: Real> GlmmData<F> {
    pub fn validate(&self) -> Result<()> {
        let obs = self.subjects * self.per_subject;
        if self.subjects == 0 || self.per_subject == 0 {
            return Err(Error::InvalidSpec("GLMM data set is empty".into()));
        }
        if self.z.len() != obs * self.covariates || self.y.len() != obs {
            return Err(Error::InvalidSpec("GLMM array sizes disagree".into()));
        }
        if self.y.iter().any(|&v| v != F::zero() && v != F::one()) {
            return Err(Error::InvalidSpec("GLMM responses must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// Logistic mixed model with a two-component Gaussian mixture on the random
/// effects:
/// `logit P(Y_ij = 1) = X_i + Z_ijᵀβ`, `X_i ~ w1 N(μ1, 1/λ1) + w2 N(μ2, 1/λ2)`.
///
/// `θ = (β, μ1, μ2, log λ1, log λ2, logit w1)`, each coordinate with a
/// `N(0, 100)` prior. The random effect is drawn from `N(0, 3²)` via `x = 3u`.
#[derive(Clone, Debug)]
pub struct GlmmModel<F = f64> {
    data: GlmmData<F>,
}

impl<F: Real> GlmmModel<F> {
    pub fn new(data: GlmmData<F>) -> Result<Self> {
        data.validate()?;
        Ok(GlmmModel { data })
    }

    pub fn data(&self) -> &GlmmData<F> {
        &self.data
    }

    /// Index of `μ1` in `θ`; the mixture block follows `β`.
    pub fn mixture_offset(&self) -> usize {
        self.data.covariates
    }

    /// Maps natural parameters to the unconstrained `θ`.
    pub fn pack_theta(beta: &[F], mu: [F; 2], lambda: [F; 2], w1: F) -> Vec<F> {
        let mut theta = beta.to_vec();
        theta.extend_from_slice(&[
            mu[0],
            mu[1],
            lambda[0].ln(),
            lambda[1].ln(),
            (w1 / (F::one() - w1)).ln(),
        ]);
        theta
    }

    #[inline]
    fn eval(&self, theta: &[F], k: usize, u: F, grads: Option<(&mut [F], &mut F)>) -> F {
        let p = self.data.covariates;
        let n_i = self.data.per_subject;
        let (beta, mix) = theta.split_at(p);
        let lambda = [mix[2].exp(), mix[3].exp()];
        let logit_w = mix[4];
        let log_w = [-softplus(-logit_w), -softplus(logit_w)];
        let sd = F::c(PROPOSAL_SD);
        let x = sd * u;

        let (mix_lp, resp) = mixture_terms(x, log_w, [mix[0], mix[1]], lambda);
        let proposal_lp = normal_logpdf(x, F::zero(), sd * sd);

        let rows = &self.data.z[k * n_i * p..(k + 1) * n_i * p];
        let ys = &self.data.y[k * n_i..(k + 1) * n_i];

        match grads {
            None => {
                let mut ll = F::zero();
                for j in 0..n_i {
                    let eta = x + crate::real::dot(&rows[j * p..(j + 1) * p], beta);
                    ll = ll + ys[j] * eta - softplus(eta);
                }
                mix_lp + ll - proposal_lp
            }
            Some((gt, gu)) => {
                gt.fill(F::zero());
                let mut ll = F::zero();
                let mut gx = F::zero();
                for j in 0..n_i {
                    let zr = &rows[j * p..(j + 1) * p];
                    let eta = x + crate::real::dot(zr, beta);
                    let y = ys[j];
                    ll = ll + y * eta - softplus(eta);
                    let resid = y - logistic(eta);
                    gx = gx + resid;
                    for (g, &z) in gt[..p].iter_mut().zip(zr) {
                        *g = *g + resid * z;
                    }
                }
                let half = F::c(0.5);
                let d = [x - mix[0], x - mix[1]];
                gt[p] = resp[0] * lambda[0] * d[0];
                gt[p + 1] = resp[1] * lambda[1] * d[1];
                gt[p + 2] = resp[0] * (half - half * lambda[0] * d[0] * d[0]);
                gt[p + 3] = resp[1] * (half - half * lambda[1] * d[1] * d[1]);
                gt[p + 4] = resp[0] - logistic(logit_w);
                gx = gx - gt[p] - gt[p + 1] + x / (sd * sd);
                *gu = sd * gx;
                mix_lp + ll - proposal_lp
            }
        }
    }
}

impl<F: Real> LatentVariableModel<F> for GlmmModel<F> {
    fn dim_theta(&self) -> usize {
        self.data.covariates + 5
    }

    fn data_count(&self) -> usize {
        self.data.subjects
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        iid_normal_prior(theta, F::c(PRIOR_VAR))
    }

    fn prior_grad(&self, theta: &[F], grad: &mut [F]) {
        iid_normal_prior_grad(theta, F::c(PRIOR_VAR), grad)
    }

    fn log_weight(
        &self,
        theta: &[F],
        k: usize,
        u: &[F],
        grad_theta: &mut [F],
        grad_u: &mut [F],
    ) -> F {
        self.eval(theta, k, u[0], Some((grad_theta, &mut grad_u[0])))
    }

    fn log_weight_value(&self, theta: &[F], k: usize, u: &[F]) -> F {
        self.eval(theta, k, u[0], None)
    }

    fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.data.covariates)
            .map(|i| format!("beta_{i}"))
            .collect();
        names.extend(
            ["mu1", "mu2", "log_lambda1", "log_lambda2", "logit_w1"]
                .iter()
                .map(|s| s.to_string()),
        );
        names
    }
}
