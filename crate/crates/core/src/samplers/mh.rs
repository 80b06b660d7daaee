use rand::Rng;

use super::{ChainState, StepOutcome};
use crate::error::{check_len, Error, Result};
use crate::estimator::evaluate_value;
use crate::model::LatentVariableModel;
use crate::real::Real;

/// Log acceptance ratio of pseudo-marginal MH with a symmetric proposal:
/// `log[p(θ′) p̂′] − log[p(θ) p̂]`, and `-inf` whenever `p̂′ = 0`.
pub fn pm_mh_log_acceptance<F: Real>(log_prior: F, log_phat: F, log_prior_prop: F, log_phat_prop: F) -> F {
    if log_phat_prop == F::neg_infinity() || log_prior_prop == F::neg_infinity() {
        return F::neg_infinity();
    }
    (log_prior_prop + log_phat_prop) - (log_prior + log_phat)
}

/// One pseudo-marginal MH step: Gaussian random walk on `θ` with
/// per-coordinate `scales` and an independent fresh noise block.
pub fn pm_mh_step<F: Real, M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    n: usize,
    state: &mut ChainState<F>,
    scales: &[F],
    rng: &mut R,
) -> Result<StepOutcome<F>> {
    check_len("proposal scales", state.theta.len(), scales.len())?;
    let theta: Vec<F> = state
        .theta
        .iter()
        .zip(scales)
        .map(|(&t, &s)| t + s * F::std_normal(rng))
        .collect();
    let u: Vec<F> = (0..state.u.len()).map(|_| F::std_normal(rng)).collect();
    let rejected = StepOutcome {
        accepted: false,
        hamiltonian: F::nan(),
    };
    let val = match evaluate_value(model, n, &theta, &u) {
        Ok(v) => v,
        Err(Error::NonFinite(_)) => return Ok(rejected),
        Err(e) => return Err(e),
    };
    let log_prior = model.prior_logpdf(&theta);
    let log_alpha = pm_mh_log_acceptance(state.log_prior, state.log_phat, log_prior, val.log_phat);
    if !(F::uniform(rng).ln() < log_alpha) {
        return Ok(rejected);
    }
    *state = ChainState {
        theta,
        u,
        log_prior,
        log_phat: val.log_phat,
    };
    Ok(StepOutcome {
        accepted: true,
        hamiltonian: F::nan(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianHierarchicalModel;
    use crate::rng::stream_rng;

    #[test]
    fn identical_proposal_has_unit_acceptance() {
        assert_eq!(pm_mh_log_acceptance(-1.3, -7.2, -1.3, -7.2), 0.0);
    }

    #[test]
    fn zero_estimate_never_accepted() {
        assert_eq!(pm_mh_log_acceptance(-1.0, -2.0, 0.0, f64::NEG_INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn ratio_matches_hand_computation() {
        // T = 1, N = 2, y = 0.5, σ0² = 10, σ1² = 0.1, σ2² = 1
        let m = GaussianHierarchicalModel::new(10.0, 0.1, 1.0, vec![0.5]).unwrap();
        let s1 = 0.1f64.sqrt();
        let lik = |th: f64, u: [f64; 2]| {
            let w = |ui: f64| {
                let r: f64 = 0.5 - th - s1 * ui;
                (-0.5 * r * r).exp() / (2.0 * std::f64::consts::PI).sqrt()
            };
            0.5 * (w(u[0]) + w(u[1]))
        };
        let prior = |th: f64| (-th * th / 20.0).exp() / (20.0 * std::f64::consts::PI).sqrt();
        let (th0, u0, th1, u1) = (0.1, [0.3, -1.2], 0.4, [1.1, 0.2]);
        let hand = (prior(th1) * lik(th1, u1) / (prior(th0) * lik(th0, u0))).ln();
        let v0 = evaluate_value(&m, 2, &[th0], &u0).unwrap().log_phat;
        let v1 = evaluate_value(&m, 2, &[th1], &u1).unwrap().log_phat;
        let got = pm_mh_log_acceptance(m.prior_logpdf(&[th0]), v0, m.prior_logpdf(&[th1]), v1);
        assert!((got - hand).abs() < 1e-12);
    }

    /// Weights vanish for `θ > 0.5`.
    struct Cliff;

    impl LatentVariableModel<f64> for Cliff {
        fn dim_theta(&self) -> usize {
            1
        }
        fn data_count(&self) -> usize {
            1
        }
        fn prior_logpdf(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn prior_grad(&self, _: &[f64], g: &mut [f64]) {
            g.fill(0.0);
        }
        fn log_weight(&self, th: &[f64], _: usize, _: &[f64], gt: &mut [f64], gu: &mut [f64]) -> f64 {
            gt.fill(0.0);
            gu.fill(0.0);
            if th[0] > 0.5 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        }
    }

    #[test]
    fn chain_never_enters_zero_estimate_region() {
        let mut rng = stream_rng(1, 0);
        let mut state = ChainState::draw(&Cliff, 3, vec![0.0], &mut rng).unwrap();
        let mut moves = 0;
        for _ in 0..2000 {
            moves += pm_mh_step(&Cliff, 3, &mut state, &[1.0], &mut rng).unwrap().accepted as usize;
            assert!(state.theta[0] <= 0.5);
        }
        assert!(moves > 100);
    }
}
