//! Declarative model descriptions, synthetic data generation and the
//! enum-dispatched model used by the experiment harness.

use super::{
    sample_sinc_sq, DiffractionModel, GaussianHierarchicalModel, GlmmData, GlmmModel,
    LatentVariableModel, GLMM_BETA_INIT, GLMM_BETA_TRUE,
};
use crate::error::{Error, Result};
use crate::real::{logistic, Real};
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub data: usize,
    /// True parameter; drawn from the prior when absent.
    pub theta: Option<f64>,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        GaussianSpec {
            sigma0_sq: 10.0,
            sigma1_sq: 0.1,
            sigma2_sq: 1.0,
            data: 30,
            theta: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffractionSpec {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub data: usize,
}

impl Default for DiffractionSpec {
    fn default() -> Self {
        DiffractionSpec {
            mu: 1.0,
            sigma: 1.0,
            lambda: 0.1,
            data: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlmmSpec {
    pub subjects: usize,
    pub per_subject: usize,
    pub covariates: usize,
    /// True fixed effects; defaults to the reference vector (truncated, or
    /// extended with seeded standard-normal draws beyond eight covariates).
    pub beta: Option<Vec<f64>>,
    pub mu: [f64; 2],
    pub lambda: [f64; 2],
    pub w1: f64,
}

impl Default for GlmmSpec {
    fn default() -> Self {
        GlmmSpec {
            subjects: 500,
            per_subject: 6,
            covariates: 8,
            beta: None,
            mu: [0.0, 3.0],
            lambda: [10.0, 3.0],
            w1: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Gaussian(GaussianSpec),
    Diffraction(DiffractionSpec),
    Glmm(GlmmSpec),
}

/// Observed data for any of the supported models.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset<F = f64> {
    /// One scalar observation per datum.
    Scalar(Vec<F>),
    Glmm(GlmmData<F>),
}

impl<F: Real> Dataset<F> {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Scalar(y) => y.len(),
            Dataset::Glmm(d) => d.subjects,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("{name} must be positive, got {v}")))
    }
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Gaussian(_) => "gaussian",
            ModelSpec::Diffraction(_) => "diffraction",
            ModelSpec::Glmm(_) => "glmm",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Gaussian(s) => {
                positive("sigma0_sq", s.sigma0_sq)?;
                positive("sigma1_sq", s.sigma1_sq)?;
                positive("sigma2_sq", s.sigma2_sq)?;
                if s.data == 0 {
                    return Err(Error::InvalidSpec("data count T must be positive".into()));
                }
            }
            ModelSpec::Diffraction(s) => {
                positive("sigma", s.sigma)?;
                positive("lambda", s.lambda)?;
                if s.data == 0 {
                    return Err(Error::InvalidSpec("data count T must be positive".into()));
                }
            }
            ModelSpec::Glmm(s) => {
                if s.subjects == 0 || s.per_subject == 0 {
                    return Err(Error::InvalidSpec("GLMM needs T > 0 and n_i > 0".into()));
                }
                positive("lambda1", s.lambda[0])?;
                positive("lambda2", s.lambda[1])?;
                if !(0.0..=1.0).contains(&s.w1) {
                    return Err(Error::InvalidSpec(format!("w1 must lie in [0,1], got {}", s.w1)));
                }
                if let Some(b) = &s.beta {
                    if b.len() != s.covariates {
                        return Err(Error::InvalidSpec(format!(
                            "beta has {} entries, p_cov is {}",
                            b.len(),
                            s.covariates
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Simulates a data set; deterministic in `seed`.
    pub fn generate<F: Real>(&self, seed: u64) -> Result<Dataset<F>> {
        self.validate()?;
        let mut rng = stream_rng(seed, 0xda7a);
        match self {
            ModelSpec::Gaussian(s) => {
                let theta = match s.theta {
                    Some(t) => F::c(t),
                    None => F::c(s.sigma0_sq.sqrt()) * F::std_normal(&mut rng),
                };
                let (s1, s2) = (F::c(s.sigma1_sq.sqrt()), F::c(s.sigma2_sq.sqrt()));
                let y = (0..s.data)
                    .map(|_| {
                        let x = theta + s1 * F::std_normal(&mut rng);
                        x + s2 * F::std_normal(&mut rng)
                    })
                    .collect();
                Ok(Dataset::Scalar(y))
            }
            ModelSpec::Diffraction(s) => {
                let y = (0..s.data)
                    .map(|_| {
                        let x = F::c(s.mu) + F::c(s.sigma) * F::std_normal(&mut rng);
                        x + F::c(s.lambda) * sample_sinc_sq::<F, _>(&mut rng)
                    })
                    .collect();
                Ok(Dataset::Scalar(y))
            }
            ModelSpec::Glmm(s) => {
                let beta = self.glmm_true_beta::<F>(s, seed);
                let mut z = Vec::with_capacity(s.subjects * s.per_subject * s.covariates);
                let mut y = Vec::with_capacity(s.subjects * s.per_subject);
                for _ in 0..s.subjects {
                    let j = if F::uniform(&mut rng) < F::c(s.w1) { 0 } else { 1 };
                    let x = F::c(s.mu[j])
                        + F::std_normal(&mut rng) / F::c(s.lambda[j]).sqrt();
                    for _ in 0..s.per_subject {
                        let mut eta = x;
                        for b in &beta {
                            let zc = F::std_normal(&mut rng);
                            z.push(zc);
                            eta = eta + zc * *b;
                        }
                        let hit = F::uniform(&mut rng) < logistic(eta);
                        y.push(if hit { F::one() } else { F::zero() });
                    }
                }
                Ok(Dataset::Glmm(GlmmData {
                    subjects: s.subjects,
                    per_subject: s.per_subject,
                    covariates: s.covariates,
                    z,
                    y,
                }))
            }
        }
    }

    fn glmm_true_beta<F: Real>(&self, s: &GlmmSpec, seed: u64) -> Vec<F> {
        if let Some(b) = &s.beta {
            return b.iter().map(|&v| F::c(v)).collect();
        }
        let mut rng = stream_rng(seed, 0xbe7a);
        (0..s.covariates)
            .map(|i| match GLMM_BETA_TRUE.get(i) {
                Some(&v) => F::c(v),
                None => F::std_normal(&mut rng),
            })
            .collect()
    }

    /// Builds the model for an observed data set.
    pub fn build<F: Real>(&self, data: &Dataset<F>) -> Result<AnyModel<F>> {
        self.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidSpec("empty data set".into()));
        }
        match (self, data) {
            (ModelSpec::Gaussian(s), Dataset::Scalar(y)) => Ok(AnyModel::Gaussian(
                GaussianHierarchicalModel::new(
                    F::c(s.sigma0_sq),
                    F::c(s.sigma1_sq),
                    F::c(s.sigma2_sq),
                    y.clone(),
                )?,
            )),
            (ModelSpec::Diffraction(_), Dataset::Scalar(y)) => {
                Ok(AnyModel::Diffraction(DiffractionModel::new(y.clone())?))
            }
            (ModelSpec::Glmm(_), Dataset::Glmm(d)) => Ok(AnyModel::Glmm(GlmmModel::new(d.clone())?)),
            _ => Err(Error::InvalidSpec(format!(
                "data set does not match model '{}'",
                self.name()
            ))),
        }
    }

    /// Default initial `θ` for samplers.
    ///
    /// GLMM: reference `β` start (seeded normal draws beyond eight
    /// covariates), `μ = (0, 0)`, `λ = (1, 0.1)`, `w1 = 0.5`.
    pub fn default_initial_theta<F: Real>(&self, seed: u64) -> Vec<F> {
        match self {
            ModelSpec::Gaussian(_) => vec![F::zero()],
            ModelSpec::Diffraction(_) => vec![F::zero(); 3],
            ModelSpec::Glmm(s) => {
                let mut rng = stream_rng(seed, 0x1a17);
                let beta: Vec<F> = (0..s.covariates)
                    .map(|i| match GLMM_BETA_INIT.get(i) {
                        Some(&v) => F::c(v),
                        None => F::std_normal(&mut rng),
                    })
                    .collect();
                GlmmModel::pack_theta(
                    &beta,
                    [F::zero(), F::zero()],
                    [F::one(), F::c(0.1)],
                    F::c(0.5),
                )
            }
        }
    }
}

/// Any of the supported models, dispatched by enum.
#[derive(Clone, Debug)]
pub enum AnyModel<F = f64> {
    Gaussian(GaussianHierarchicalModel<F>),
    Diffraction(DiffractionModel<F>),
    Glmm(GlmmModel<F>),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyModel::Gaussian($m) => $e,
            AnyModel::Diffraction($m) => $e,
            AnyModel::Glmm($m) => $e,
        }
    };
}

impl<F: Real> LatentVariableModel<F> for AnyModel<F> {
    fn dim_theta(&self) -> usize {
        dispatch!(self, m => m.dim_theta())
    }

    fn data_count(&self) -> usize {
        dispatch!(self, m => m.data_count())
    }

    fn latent_dim(&self) -> usize {
        dispatch!(self, m => m.latent_dim())
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        dispatch!(self, m => m.prior_logpdf(theta))
    }

    fn prior_grad(&self, theta: &[F], grad: &mut [F]) {
        dispatch!(self, m => m.prior_grad(theta, grad))
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
        dispatch!(self, m => m.log_weight(theta, k, u, grad_theta, grad_u))
    }

    #[inline]
    fn log_weight_value(&self, theta: &[F], k: usize, u: &[F]) -> F {
        dispatch!(self, m => m.log_weight_value(theta, k, u))
    }

    fn datum_log_likelihood(&self, theta: &[F], k: usize) -> Option<F> {
        dispatch!(self, m => m.datum_log_likelihood(theta, k))
    }

    fn parameter_names(&self) -> Vec<String> {
        dispatch!(self, m => m.parameter_names())
    }
}
