//! Extended Hamiltonian dynamics on `(θ, ρ, u, p)` and the integrators used
//! by the samplers and the flow-convergence experiment.
//!
//! The extended Hamiltonian splits as `H = A + B` with
//! `A = ½(ρᵀρ + uᵀu + pᵀp)` and `B = −log p(θ) − log p̂(y | θ, u)`.
//! Both sub-flows are solved exactly; one integrator step is
//! `A(h/2)`, then `B(h)`, then `A(h/2)` (unit mass matrix).

mod leapfrog;
mod reference;

pub use leapfrog::{leapfrog_trajectory, DifferentiableTarget, JointSpaceTarget};
pub use reference::{rk4_dense, DenseTrajectory};

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::estimator::{evaluate_into, evaluate_value, EstimatorEvaluation};
use crate::model::{AuxShape, ExtendedState, LatentVariableModel};
use crate::real::{norm_sq, normal_logpdf, Real};

/// Step size `h` and step count `L`; the integration time is `hL`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig<F = f64> {
    pub step_size: F,
    pub steps: usize,
    /// Draw the step count uniformly from `1..=steps` on every trajectory.
    pub jitter: bool,
}

impl<F: Real> IntegratorConfig<F> {
    pub fn new(step_size: F, steps: usize) -> Result<Self> {
        let cfg = IntegratorConfig {
            step_size,
            steps,
            jitter: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > F::zero() && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("step count must be >= 1".into()));
        }
        Ok(())
    }

    /// Step count for one trajectory, honoring `jitter`.
    pub fn draw_steps<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.jitter {
            rng.random_range(1..=self.steps)
        } else {
            self.steps
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianValue<F = f64> {
    pub total: F,
    /// `B = −log p(θ) − log p̂(y | θ, u)`; `+inf` for a zero estimate.
    pub potential: F,
    /// `A = ½(ρᵀρ + uᵀu + pᵀp)`.
    pub kinetic: F,
}

impl<F: Real> HamiltonianValue<F> {
    pub fn from_parts(log_prior: F, log_phat: F, state: &ExtendedState<F>) -> Self {
        let potential = -log_prior - log_phat;
        let kinetic = quadratic_energy(state);
        HamiltonianValue {
            total: potential + kinetic,
            potential,
            kinetic,
        }
    }
}

/// `½(ρᵀρ + uᵀu + pᵀp)`, conserved by [`flow_a`].
pub fn quadratic_energy<F: Real>(state: &ExtendedState<F>) -> F {
    F::c(0.5) * (norm_sq(&state.rho) + norm_sq(&state.u) + norm_sq(&state.p))
}

/// Whether a trajectory ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Completed,
    /// A zero likelihood estimate (or a non-finite gradient) was met; the
    /// proposal must be rejected.
    Aborted,
}

/// Exact flow of the `A` sub-system for time `t`: `θ` drifts with `ρ`, and
/// each `(u, p)` pair rotates.
pub fn flow_a<F: Real>(state: &mut ExtendedState<F>, t: F) {
    for (th, &r) in state.theta.iter_mut().zip(&state.rho) {
        *th = *th + t * r;
    }
    let (s, c) = t.sin_cos();
    for (u, p) in state.u.iter_mut().zip(state.p.iter_mut()) {
        let (u0, p0) = (*u, *p);
        *u = p0 * s + u0 * c;
        *p = p0 * c - u0 * s;
    }
}

/// Phase point recorded by [`PseudoMarginalSystem::trace_strang`].
#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint<F = f64> {
    pub t: F,
    pub theta: Vec<F>,
    pub rho: Vec<F>,
    pub hamiltonian: F,
}

/// Extended dynamics for one model and importance sample size `N`.
pub struct PseudoMarginalSystem<'a, F: Real, M: ?Sized> {
    pub model: &'a M,
    pub samples: usize,
    eval: EstimatorEvaluation<F>,
    prior_grad: Vec<F>,
}

impl<'a, F: Real, M: LatentVariableModel<F> + ?Sized> PseudoMarginalSystem<'a, F, M> {
    pub fn new(model: &'a M, samples: usize) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidConfig("number of importance samples must be >= 1".into()));
        }
        Ok(PseudoMarginalSystem {
            model,
            samples,
            eval: EstimatorEvaluation::new(),
            prior_grad: vec![F::zero(); model.dim_theta()],
        })
    }

    pub fn aux_shape(&self) -> AuxShape {
        AuxShape::of(self.model, self.samples)
    }

    /// Fresh state at `(θ, u)` with zero momenta.
    pub fn state_at(&self, theta: Vec<F>, u: Vec<F>) -> Result<ExtendedState<F>> {
        check_len("theta entries", self.model.dim_theta(), theta.len())?;
        check_len("auxiliary noise entries", self.aux_shape().len(), u.len())?;
        let (d, n) = (theta.len(), u.len());
        ExtendedState::new(theta, vec![F::zero(); d], u, vec![F::zero(); n])
    }

    fn check(&self, state: &ExtendedState<F>) -> Result<()> {
        check_len("theta entries", self.model.dim_theta(), state.theta.len())?;
        check_len("momentum entries", state.theta.len(), state.rho.len())?;
        check_len("auxiliary noise entries", self.aux_shape().len(), state.u.len())?;
        check_len("auxiliary momentum entries", state.u.len(), state.p.len())
    }

    /// `H(θ, ρ, u, p)`; the total is `+inf` when the estimate is zero.
    pub fn hamiltonian(&self, state: &ExtendedState<F>) -> Result<HamiltonianValue<F>> {
        self.check(state)?;
        let val = evaluate_value(self.model, self.samples, &state.theta, &state.u)?;
        let log_prior = self.model.prior_logpdf(&state.theta);
        Ok(HamiltonianValue::from_parts(log_prior, val.log_phat, state))
    }

    /// Log density of the extended target
    /// `p(θ) p̂(y | θ, u) N(u; 0, I) N(ρ; 0, I) N(p; 0, I)`, unnormalized only
    /// by the evidence `p(y)`.
    pub fn extended_log_density(&self, state: &ExtendedState<F>) -> Result<F> {
        self.check(state)?;
        let val = evaluate_value(self.model, self.samples, &state.theta, &state.u)?;
        let std = |xs: &[F]| {
            xs.iter()
                .map(|&x| normal_logpdf(x, F::zero(), F::one()))
                .sum::<F>()
        };
        Ok(self.model.prior_logpdf(&state.theta)
            + val.log_phat
            + std(&state.u)
            + std(&state.rho)
            + std(&state.p))
    }

    /// Exact flow of the `B` sub-system for time `t`: momentum kicks along
    /// `∇_θ{log p(θ) + log p̂}` and `∇_u log p̂`, with one estimator pass.
    pub fn flow_b(&mut self, state: &mut ExtendedState<F>, t: F) -> Result<TrajectoryStatus> {
        self.check(state)?;
        match evaluate_into(self.model, self.samples, &state.theta, &state.u, &mut self.eval) {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => return Ok(TrajectoryStatus::Aborted),
            Err(e) => return Err(e),
        }
        if self.eval.is_zero() {
            return Ok(TrajectoryStatus::Aborted);
        }
        self.model.prior_grad(&state.theta, &mut self.prior_grad);
        let mut finite = true;
        for ((r, &gp), &ge) in state
            .rho
            .iter_mut()
            .zip(&self.prior_grad)
            .zip(&self.eval.grad_theta)
        {
            *r = *r + t * (gp + ge);
            finite &= r.is_finite();
        }
        for (p, &g) in state.p.iter_mut().zip(&self.eval.grad_u) {
            *p = *p + t * g;
            finite &= p.is_finite();
        }
        Ok(if finite {
            TrajectoryStatus::Completed
        } else {
            TrajectoryStatus::Aborted
        })
    }

    /// Symmetric Strang splitting: `steps` repetitions of
    /// `A(h/2) → B(h) → A(h/2)`, one gradient evaluation each.
    pub fn strang_trajectory(
        &mut self,
        state: &mut ExtendedState<F>,
        step_size: F,
        steps: usize,
    ) -> Result<TrajectoryStatus> {
        let half = step_size * F::c(0.5);
        for _ in 0..steps {
            flow_a(state, half);
            if self.flow_b(state, step_size)? == TrajectoryStatus::Aborted {
                return Ok(TrajectoryStatus::Aborted);
            }
            flow_a(state, half);
        }
        Ok(TrajectoryStatus::Completed)
    }

    /// As [`strang_trajectory`](Self::strang_trajectory), recording `θ`, `ρ`
    /// and `H` at the start and after every step.
    pub fn trace_strang(
        &mut self,
        state: &mut ExtendedState<F>,
        step_size: F,
        steps: usize,
    ) -> Result<(Vec<TracePoint<F>>, TrajectoryStatus)> {
        let mut points = Vec::with_capacity(steps + 1);
        let mut record = |sys: &Self, s: &ExtendedState<F>, i: usize| -> Result<()> {
            points.push(TracePoint {
                t: step_size * F::from_usize(i).unwrap(),
                theta: s.theta.clone(),
                rho: s.rho.clone(),
                hamiltonian: sys.hamiltonian(s)?.total,
            });
            Ok(())
        };
        record(self, state, 0)?;
        for i in 1..=steps {
            if self.strang_trajectory(state, step_size, 1)? == TrajectoryStatus::Aborted {
                return Ok((points, TrajectoryStatus::Aborted));
            }
            record(self, state, i)?;
        }
        Ok((points, TrajectoryStatus::Completed))
    }

    /// Right-hand side of the extended equations of motion at `state`:
    /// `(ρ, ∇log p(θ) + ∇_θ log p̂, p, −u + ∇_u log p̂)`, written into
    /// `out` (flattened like [`ExtendedState::to_flat`]).
    pub fn vector_field(&mut self, flat: &[F], out: &mut [F]) -> Result<()> {
        let d = self.model.dim_theta();
        let aux = self.aux_shape().len();
        check_len("flattened phase entries", 2 * (d + aux), flat.len())?;
        check_len("flattened phase entries", flat.len(), out.len())?;
        let (theta, rest) = flat.split_at(d);
        let (rho, rest) = rest.split_at(d);
        let (u, p) = rest.split_at(aux);
        evaluate_into(self.model, self.samples, theta, u, &mut self.eval)?;
        if self.eval.is_zero() {
            return Err(Error::NonFinite("zero likelihood estimate on reference path"));
        }
        self.model.prior_grad(theta, &mut self.prior_grad);
        let (o_theta, o_rest) = out.split_at_mut(d);
        let (o_rho, o_rest) = o_rest.split_at_mut(d);
        let (o_u, o_p) = o_rest.split_at_mut(aux);
        o_theta.copy_from_slice(rho);
        for j in 0..d {
            o_rho[j] = self.prior_grad[j] + self.eval.grad_theta[j];
        }
        o_u.copy_from_slice(p);
        for j in 0..aux {
            o_p[j] = self.eval.grad_u[j] - u[j];
        }
        Ok(())
    }
}
