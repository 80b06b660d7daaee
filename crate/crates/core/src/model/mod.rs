//! Latent variable models with importance-sampling likelihood estimators.
//!
//! Every model is written in a non-centered form: the latent draw for datum
//! `k` is a deterministic map `x = γ_k(θ, u)` of standard-normal noise `u`,
//! and the model reports the log importance weight
//! `log ω_θ(y_k, u) = log f_θ(x) + log g_θ(y_k | x) − log q_θ(x | y_k)`
//! together with its gradients in `θ` and `u`.

mod diffraction;
mod gaussian;
mod glmm;
mod spec;

pub use diffraction::{log_sinc_sq, sample_sinc_sq, DiffractionModel};
pub use gaussian::{GaussianHierarchicalModel, NormalPosterior};
pub use glmm::{mixture_logpdf, GlmmData, GlmmModel, GLMM_BETA_INIT, GLMM_BETA_TRUE};
pub use spec::{AnyModel, Dataset, DiffractionSpec, GaussianSpec, GlmmSpec, ModelSpec};

use crate::error::{check_len, Result};
use crate::real::Real;

/// Contract a concrete latent variable model fulfills.
pub trait LatentVariableModel<F: Real>: Sync {
    /// Dimension `d` of the unconstrained parameter.
    fn dim_theta(&self) -> usize;

    /// Number `T` of independent data items.
    fn data_count(&self) -> usize;

    /// Number `p` of standard-normal coordinates per latent draw.
    fn latent_dim(&self) -> usize {
        1
    }

    fn prior_logpdf(&self, theta: &[F]) -> F;

    /// Writes `∇_θ log p(θ)` into `grad`.
    fn prior_grad(&self, theta: &[F], grad: &mut [F]);

    /// Log weight of datum `k` at noise `u`, writing `∇_θ log ω` into
    /// `grad_theta` and `∇_u log ω` into `grad_u` (both overwritten).
    ///
    /// A weight of exactly zero is reported as `-inf` with zeroed gradients.
    fn log_weight(
        &self,
        theta: &[F],
        k: usize,
        u: &[F],
        grad_theta: &mut [F],
        grad_u: &mut [F],
    ) -> F;

    /// Value-only variant of [`log_weight`](Self::log_weight).
    fn log_weight_value(&self, theta: &[F], k: usize, u: &[F]) -> F {
        let mut gt = vec![F::zero(); self.dim_theta()];
        let mut gu = vec![F::zero(); self.latent_dim()];
        self.log_weight(theta, k, u, &mut gt, &mut gu)
    }

    /// Exact `log p(y_k | θ)` when the model admits one.
    fn datum_log_likelihood(&self, _theta: &[F], _k: usize) -> Option<F> {
        None
    }

    fn parameter_names(&self) -> Vec<String> {
        (0..self.dim_theta()).map(|i| format!("theta_{i}")).collect()
    }
}

/// Log weight with owned gradients, for callers outside hot loops.
#[derive(Clone, Debug, PartialEq)]
pub struct LogWeight<F> {
    pub value: F,
    pub grad_theta: Vec<F>,
    pub grad_u: Vec<F>,
}

pub fn log_weight_full<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    theta: &[F],
    k: usize,
    u: &[F],
) -> Result<LogWeight<F>> {
    check_len("theta entries", model.dim_theta(), theta.len())?;
    check_len("latent noise entries", model.latent_dim(), u.len())?;
    let mut grad_theta = vec![F::zero(); model.dim_theta()];
    let mut grad_u = vec![F::zero(); model.latent_dim()];
    let value = model.log_weight(theta, k, u, &mut grad_theta, &mut grad_u);
    Ok(LogWeight {
        value,
        grad_theta,
        grad_u,
    })
}

/// Shape `T × N × p` of the auxiliary noise block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuxShape {
    pub data: usize,
    pub samples: usize,
    pub latent: usize,
}

impl AuxShape {
    pub fn of<F: Real, M: LatentVariableModel<F> + ?Sized>(model: &M, samples: usize) -> Self {
        AuxShape {
            data: model.data_count(),
            samples,
            latent: model.latent_dim(),
        }
    }

    /// Flattened dimension `D = T·N·p`.
    pub fn len(&self) -> usize {
        self.data * self.samples * self.latent
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of `u_{k,i}` in the flattened block.
    #[inline]
    pub fn offset(&self, k: usize, i: usize) -> usize {
        (k * self.samples + i) * self.latent
    }
}

/// Phase point `(θ, ρ, u, p)` evolved by the extended dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedState<F> {
    /// Parameter position, length `d`.
    pub theta: Vec<F>,
    /// Parameter momentum, length `d`.
    pub rho: Vec<F>,
    /// Auxiliary noise, flattened `T × N × p`.
    pub u: Vec<F>,
    /// Auxiliary momentum, same shape as `u`.
    pub p: Vec<F>,
}

impl<F: Real> ExtendedState<F> {
    pub fn new(theta: Vec<F>, rho: Vec<F>, u: Vec<F>, p: Vec<F>) -> Result<Self> {
        check_len("momentum entries", theta.len(), rho.len())?;
        check_len("auxiliary momentum entries", u.len(), p.len())?;
        Ok(ExtendedState { theta, rho, u, p })
    }

    pub fn is_finite(&self) -> bool {
        self.theta
            .iter()
            .chain(&self.rho)
            .chain(&self.u)
            .chain(&self.p)
            .all(|x| x.is_finite())
    }

    /// Negates both momenta.
    pub fn flip_momenta(&mut self) {
        self.rho.iter_mut().for_each(|x| *x = -*x);
        self.p.iter_mut().for_each(|x| *x = -*x);
    }

    /// Flattened `(θ, ρ, u, p)` vector.
    pub fn to_flat(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(2 * (self.theta.len() + self.u.len()));
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.rho);
        v.extend_from_slice(&self.u);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_flat(flat: &[F], d: usize, aux: usize) -> Result<Self> {
        check_len("flattened phase entries", 2 * (d + aux), flat.len())?;
        Ok(ExtendedState {
            theta: flat[..d].to_vec(),
            rho: flat[d..2 * d].to_vec(),
            u: flat[2 * d..2 * d + aux].to_vec(),
            p: flat[2 * d + aux..].to_vec(),
        })
    }
}

/// Prior shared by the diffraction and GLMM models: independent `N(0, var)`
/// on every unconstrained coordinate.
pub(crate) fn iid_normal_prior<F: Real>(theta: &[F], var: F) -> F {
    theta
        .iter()
        .map(|&t| crate::real::normal_logpdf(t, F::zero(), var))
        .sum()
}

pub(crate) fn iid_normal_prior_grad<F: Real>(theta: &[F], var: F, grad: &mut [F]) {
    for (g, &t) in grad.iter_mut().zip(theta) {
        *g = -t / var;
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aux_shape_offsets_are_row_major() {
        let s = AuxShape {
            data: 3,
            samples: 4,
            latent: 2,
        };
        assert_eq!(s.len(), 24);
        assert_eq!(s.offset(0, 0), 0);
        assert_eq!(s.offset(1, 0), 8);
        assert_eq!(s.offset(2, 3), 22);
    }

    #[test]
    fn extended_state_rejects_mismatched_momenta() {
        assert!(ExtendedState::new(vec![0.0], vec![0.0, 1.0], vec![], vec![]).is_err());
        assert!(ExtendedState::new(vec![0.0], vec![1.0], vec![1.0], vec![]).is_err());
        let s = ExtendedState::new(vec![0.5], vec![1.0], vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        let back = ExtendedState::from_flat(&s.to_flat(), 1, 2).unwrap();
        assert_eq!(s, back);
    }
}
