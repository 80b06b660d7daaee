use rand::Rng;

use super::{ChainState, StepOutcome};
use crate::dynamics::{
    leapfrog_trajectory, DifferentiableTarget, HamiltonianValue, JointSpaceTarget,
    PseudoMarginalSystem, TrajectoryStatus,
};
use crate::error::{check_len, Error, Result};
use crate::estimator::evaluate_value;
use crate::model::{ExtendedState, LatentVariableModel};
use crate::real::{norm_sq, Real};

fn std_normal_vec<F: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<F> {
    (0..len).map(|_| F::std_normal(rng)).collect()
}

fn accept<F: Real, R: Rng + ?Sized>(h0: F, h1: F, rng: &mut R) -> bool {
    h1.is_finite() && F::uniform(rng).ln() < h0 - h1
}

/// One PM-HMC iteration: refresh `ρ` and `p`, integrate with the Strang
/// splitting, accept with probability `1 ∧ exp(H − H′)`. Aborted
/// trajectories are rejections. Momenta are not negated.
pub fn pm_hmc_step<F: Real, M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
    system: &mut PseudoMarginalSystem<'_, F, M>,
    state: &mut ChainState<F>,
    step_size: F,
    steps: usize,
    rng: &mut R,
) -> Result<StepOutcome<F>> {
    if state.log_phat == F::neg_infinity() {
        return Err(Error::ZeroLikelihoodState);
    }
    let d = state.theta.len();
    let mut ext = ExtendedState::new(
        state.theta.clone(),
        std_normal_vec(d, rng),
        state.u.clone(),
        std_normal_vec(state.u.len(), rng),
    )?;
    let h0 = HamiltonianValue::from_parts(state.log_prior, state.log_phat, &ext).total;
    let reject = StepOutcome {
        accepted: false,
        hamiltonian: h0,
    };
    if system.strang_trajectory(&mut ext, step_size, steps)? == TrajectoryStatus::Aborted
        || !ext.is_finite()
    {
        return Ok(reject);
    }
    let val = match evaluate_value(system.model, system.samples, &ext.theta, &ext.u) {
        Ok(v) => v,
        Err(Error::NonFinite(_)) => return Ok(reject),
        Err(e) => return Err(e),
    };
    let log_prior = system.model.prior_logpdf(&ext.theta);
    let h1 = HamiltonianValue::from_parts(log_prior, val.log_phat, &ext).total;
    if !accept(h0, h1, rng) {
        return Ok(reject);
    }
    state.theta = ext.theta;
    state.u = ext.u;
    state.log_prior = log_prior;
    state.log_phat = val.log_phat;
    Ok(StepOutcome {
        accepted: true,
        hamiltonian: h1,
    })
}

/// One standard HMC iteration on the joint `(θ, u)` space with one noise
/// draw per datum, using position Verlet.
pub fn joint_hmc_step<F: Real, M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    state: &mut ChainState<F>,
    step_size: F,
    steps: usize,
    rng: &mut R,
) -> Result<StepOutcome<F>> {
    if state.log_phat == F::neg_infinity() {
        return Err(Error::ZeroLikelihoodState);
    }
    let target = JointSpaceTarget { model };
    let d = model.dim_theta();
    check_len("joint noise entries", model.data_count() * model.latent_dim(), state.u.len())?;
    let mut q: Vec<F> = state.theta.iter().chain(&state.u).copied().collect();
    let mut m: Vec<F> = std_normal_vec(q.len(), rng);
    let half = F::c(0.5);
    let lp0 = state.log_prior + state.log_phat - half * norm_sq(&state.u);
    let h0 = -lp0 + half * norm_sq(&m);
    let reject = StepOutcome {
        accepted: false,
        hamiltonian: h0,
    };
    if leapfrog_trajectory(&target, &mut q, &mut m, step_size, steps)? == TrajectoryStatus::Aborted {
        return Ok(reject);
    }
    let lp1 = match DifferentiableTarget::<F>::log_density(&target, &q) {
        Ok(v) => v,
        Err(Error::NonFinite(_)) => return Ok(reject),
        Err(e) => return Err(e),
    };
    let h1 = -lp1 + half * norm_sq(&m);
    if !accept(h0, h1, rng) {
        return Ok(reject);
    }
    let (theta, u) = q.split_at(d);
    state.log_prior = model.prior_logpdf(theta);
    state.log_phat = lp1 - state.log_prior + half * norm_sq(u);
    state.theta = theta.to_vec();
    state.u = u.to_vec();
    Ok(StepOutcome {
        accepted: true,
        hamiltonian: h1,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::rng::stream_rng;

    /// `log p̂ ≡ 0` and a standard-normal prior on `θ`: the extended
    /// Hamiltonian is a pure quadratic and the Strang map is exact.
    struct Quadratic;

    impl LatentVariableModel<f64> for Quadratic {
        fn dim_theta(&self) -> usize {
            1
        }
        fn data_count(&self) -> usize {
            2
        }
        fn prior_logpdf(&self, th: &[f64]) -> f64 {
            -0.5 * th[0] * th[0]
        }
        fn prior_grad(&self, th: &[f64], g: &mut [f64]) {
            g[0] = -th[0];
        }
        fn log_weight(&self, _: &[f64], _: usize, _: &[f64], gt: &mut [f64], gu: &mut [f64]) -> f64 {
            gt.fill(0.0);
            gu.fill(0.0);
            0.0
        }
    }

    #[test]
    fn exact_flow_accepts_every_proposal() {
        // The θ part is a harmonic oscillator with unit frequency; the
        // splitting error is O(h²) but tiny for h = 1e-3.
        let mut sys = PseudoMarginalSystem::new(&Quadratic, 3).unwrap();
        let mut rng = stream_rng(1, 0);
        let mut state = ChainState::draw(&Quadratic, 3, vec![0.3], &mut rng).unwrap();
        for _ in 0..50 {
            let h_before = state.clone();
            let out = pm_hmc_step(&mut sys, &mut state, 1e-3, 100, &mut rng).unwrap();
            assert!(out.accepted);
            assert_ne!(state.theta, h_before.theta);
        }
    }

    #[test]
    fn rejection_keeps_position() {
        let m = gaussian(10, 1);
        let mut sys = PseudoMarginalSystem::new(&m, 2).unwrap();
        let mut rng = stream_rng(2, 0);
        let mut state = ChainState::draw(&m, 2, vec![m.posterior().mean], &mut rng).unwrap();
        let mut rejected = 0;
        for _ in 0..200 {
            let before = state.clone();
            // a deliberately unstable step size
            let out = pm_hmc_step(&mut sys, &mut state, 0.5, 10, &mut rng).unwrap();
            if !out.accepted {
                rejected += 1;
                assert_eq!(state, before);
            }
        }
        assert!(rejected > 0);
    }

    fn stationarity_ks(joint: bool) -> f64 {
        let m = gaussian(30, 3);
        let post = m.posterior();
        let mut rng = stream_rng(3, 0);
        let mut finals = Vec::new();
        for _ in 0..500 {
            let n = if joint { 1 } else { 16 };
            let (th, u) = exact_extended_draw(&m, n, &mut rng);
            let mut s = ChainState::new(&m, n, vec![th], u).unwrap();
            if joint {
                joint_hmc_step(&m, &mut s, 0.02, 50, &mut rng).unwrap();
            } else {
                let mut sys = PseudoMarginalSystem::new(&m, n).unwrap();
                pm_hmc_step(&mut sys, &mut s, 0.02, 50, &mut rng).unwrap();
            }
            finals.push(s.theta[0]);
        }
        ks_statistic(&finals, post.mean, post.sd())
    }

    #[test]
    fn one_step_from_posterior_stays_on_posterior() {
        // 1% critical value of the one-sample KS statistic at n = 500
        let crit = 1.628 / 500f64.sqrt();
        assert!(stationarity_ks(false) < crit);
        assert!(stationarity_ks(true) < crit);
    }

    #[test]
    fn joint_hmc_without_data_samples_prior() {
        let m = crate::model::GaussianHierarchicalModel::new(10.0, 0.1, 1.0, Vec::new()).unwrap();
        let draws = run_joint(&m);
        let crit = 1.628 / (draws.len() as f64).sqrt();
        assert!(ks_statistic(&draws, 0.0, 10f64.sqrt()) < crit);
    }

    fn run_joint<M: LatentVariableModel<f64>>(m: &M) -> Vec<f64> {
        let mut rng = stream_rng(5, 0);
        let mut s = ChainState::draw(m, 1, vec![0.0], &mut rng).unwrap();
        let mut out = Vec::new();
        for it in 0..4000 {
            joint_hmc_step(m, &mut s, 0.3, 10, &mut rng).unwrap();
            if it % 10 == 0 {
                out.push(s.theta[0]);
            }
        }
        out
    }
}
