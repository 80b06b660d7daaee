use super::TrajectoryStatus;
use crate::error::{check_len, Error, Result};
use crate::model::LatentVariableModel;
use crate::real::{norm_sq, Real};

/// Log density with gradient on a flat position vector.
pub trait DifferentiableTarget<F: Real> {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_and_grad(&self, x: &[F], grad: &mut [F]) -> Result<F>;

    fn log_density(&self, x: &[F]) -> Result<F> {
        let mut g = vec![F::zero(); self.dim()];
        self.log_density_and_grad(x, &mut g)
    }
}

/// Joint posterior of `(θ, u)` in the non-centered parameterization, one
/// noise draw per datum:
/// `log p(θ) + Σ_k log ω_θ(y_k, u_k) − ½ uᵀu`.
///
/// Positions are laid out as `[θ, u]`.
pub struct JointSpaceTarget<'a, M: ?Sized> {
    pub model: &'a M,
}

impl<'a, F: Real, M: LatentVariableModel<F> + ?Sized> DifferentiableTarget<F>
    for JointSpaceTarget<'a, M>
{
    fn dim(&self) -> usize {
        self.model.dim_theta() + self.model.data_count() * self.model.latent_dim()
    }

    fn log_density_and_grad(&self, x: &[F], grad: &mut [F]) -> Result<F> {
        check_len("joint position entries", DifferentiableTarget::<F>::dim(self), x.len())?;
        let d = self.model.dim_theta();
        let p = self.model.latent_dim();
        let (theta, u) = x.split_at(d);
        let (g_theta, g_u) = grad.split_at_mut(d);
        self.model.prior_grad(theta, g_theta);
        let mut lp = self.model.prior_logpdf(theta) - F::c(0.5) * norm_sq(u);
        let mut scratch = vec![F::zero(); d];
        for k in 0..self.model.data_count() {
            let uk = &u[k * p..(k + 1) * p];
            let gk = &mut g_u[k * p..(k + 1) * p];
            let lw = self.model.log_weight(theta, k, uk, &mut scratch, gk);
            if lw.is_nan() {
                return Err(Error::NonFinite("log importance weight"));
            }
            lp = lp + lw;
            for (g, &s) in g_theta.iter_mut().zip(&scratch) {
                *g = *g + s;
            }
            for (g, &uu) in gk.iter_mut().zip(uk) {
                *g = *g - uu;
            }
        }
        Ok(lp)
    }
}

/// Position Verlet over `steps` steps with unit mass: half drift, full kick,
/// half drift. Returns [`TrajectoryStatus::Aborted`] on a non-finite
/// gradient or log density.
pub fn leapfrog_trajectory<F: Real, T: DifferentiableTarget<F> + ?Sized>(
    target: &T,
    position: &mut [F],
    momentum: &mut [F],
    step_size: F,
    steps: usize,
) -> Result<TrajectoryStatus> {
    check_len("position entries", target.dim(), position.len())?;
    check_len("momentum entries", position.len(), momentum.len())?;
    let half = step_size * F::c(0.5);
    let mut grad = vec![F::zero(); position.len()];
    for _ in 0..steps {
        for (q, &m) in position.iter_mut().zip(momentum.iter()) {
            *q = *q + half * m;
        }
        let lp = match target.log_density_and_grad(position, &mut grad) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => return Ok(TrajectoryStatus::Aborted),
            Err(e) => return Err(e),
        };
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Ok(TrajectoryStatus::Aborted);
        }
        for (m, &g) in momentum.iter_mut().zip(&grad) {
            *m = *m + step_size * g;
        }
        for (q, &m) in position.iter_mut().zip(momentum.iter()) {
            *q = *q + half * m;
        }
    }
    Ok(TrajectoryStatus::Completed)
}
