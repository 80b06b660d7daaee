use rand::Rng;

use super::{ChainState, StepOutcome};
use crate::error::{check_len, Error, Result};
use crate::estimator::evaluate_value;
use crate::model::LatentVariableModel;
use crate::real::Real;

/// Bracket shrinks allowed before the slice update is declared degenerate.
pub const MAX_SHRINKS: usize = 1000;

/// Elliptical slice update of `u` under a `N(0, I)` prior and log likelihood
/// `log_lik`, starting from `log_lik(u) = current`. Returns the new point,
/// its log likelihood and the number of bracket shrinks.
pub fn elliptical_slice<F, R, L>(u: &[F], current: F, mut log_lik: L, rng: &mut R) -> Result<(Vec<F>, F, usize)>
where
    F: Real,
    R: Rng + ?Sized,
    L: FnMut(&[F]) -> Result<F>,
{
    let nu: Vec<F> = (0..u.len()).map(|_| F::std_normal(rng)).collect();
    let threshold = current + F::uniform(rng).ln();
    let tau = F::TAU();
    let mut phi = tau * F::uniform(rng);
    let (mut lo, mut hi) = (phi - tau, phi);
    let mut prop = vec![F::zero(); u.len()];
    for shrinks in 0..=MAX_SHRINKS {
        let (s, c) = phi.sin_cos();
        for ((p, &a), &b) in prop.iter_mut().zip(u).zip(&nu) {
            *p = a * c + b * s;
        }
        let l = log_lik(&prop)?;
        if l > threshold {
            return Ok((prop, l, shrinks));
        }
        if phi < F::zero() {
            lo = phi;
        } else {
            hi = phi;
        }
        phi = lo + (hi - lo) * F::uniform(rng);
    }
    Err(Error::SliceShrinkage(MAX_SHRINKS))
}

/// `log p̂` at `(θ, u)`, with a non-finite weight counted as a zero estimate.
pub(crate) fn log_phat_or_zero<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    n: usize,
    theta: &[F],
    u: &[F],
) -> Result<F> {
    match evaluate_value(model, n, theta, u) {
        Ok(v) => Ok(v.log_phat),
        Err(Error::NonFinite(_)) => Ok(F::neg_infinity()),
        Err(e) => Err(e),
    }
}

/// One random-walk MH update per `θ` coordinate, in order, targeting
/// `log p(θ) + log_lik(θ)`. Returns whether any coordinate moved.
pub(crate) fn coordinate_rw<F, R, L>(
    state: &mut ChainState<F>,
    scales: &[F],
    rng: &mut R,
    accepts: &mut [bool],
    prior: impl Fn(&[F]) -> F,
    mut log_lik: L,
) -> Result<bool>
where
    F: Real,
    R: Rng + ?Sized,
    L: FnMut(&[F]) -> Result<F>,
{
    check_len("proposal scales", state.theta.len(), scales.len())?;
    let mut moved = false;
    let mut prop = state.theta.clone();
    for j in 0..state.theta.len() {
        prop[j] = state.theta[j] + scales[j] * F::std_normal(rng);
        let lp = prior(&prop);
        let ll = log_lik(&prop)?;
        let log_alpha = if ll == F::neg_infinity() {
            F::neg_infinity()
        } else {
            lp + ll - state.log_prior - state.log_phat
        };
        accepts[j] = F::uniform(rng).ln() < log_alpha;
        if accepts[j] {
            state.theta[j] = prop[j];
            state.log_prior = lp;
            state.log_phat = ll;
            moved = true;
        } else {
            prop[j] = state.theta[j];
        }
    }
    Ok(moved)
}

/// One PM-slice iteration: an elliptical slice update of the whole noise
/// block at fixed `θ`, then coordinate-wise random-walk MH on `θ` at fixed
/// noise.
pub fn pm_slice_step<F: Real, M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    n: usize,
    state: &mut ChainState<F>,
    scales: &[F],
    rng: &mut R,
    accepts: &mut [bool],
) -> Result<StepOutcome<F>> {
    if state.log_phat == F::neg_infinity() {
        return Err(Error::ZeroLikelihoodState);
    }
    let theta = state.theta.clone();
    let (u, l, _) = elliptical_slice(
        &state.u,
        state.log_phat,
        |u| log_phat_or_zero(model, n, &theta, u),
        rng,
    )?;
    state.u = u;
    state.log_phat = l;
    let noise = std::mem::take(&mut state.u);
    let moved = coordinate_rw(
        state,
        scales,
        rng,
        accepts,
        |t| model.prior_logpdf(t),
        |t| log_phat_or_zero(model, n, t, &noise),
    );
    state.u = noise;
    Ok(StepOutcome {
        accepted: moved?,
        hamiltonian: F::nan(),
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn constant_likelihood_accepts_first_proposal() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let (_, _, shrinks) = elliptical_slice(&[0.3, -0.2, 1.0], 0.0, |_| Ok(0.0), &mut rng).unwrap();
            assert_eq!(shrinks, 0);
        }
    }

    #[test]
    fn degenerate_likelihood_is_reported() {
        let mut rng = stream_rng(2, 0);
        let err = elliptical_slice(&[0.3], 0.0, |_| Ok(f64::NEG_INFINITY), &mut rng);
        assert!(matches!(err, Err(Error::SliceShrinkage(MAX_SHRINKS))));
    }

    #[test]
    fn slice_targets_tilted_gaussian() {
        // likelihood N(u; 2, 1) times N(0, 1) prior gives N(1, 1/2)
        let mut rng = stream_rng(3, 0);
        let ll = |u: &[f64]| Ok(-0.5 * (u[0] - 2.0).powi(2));
        let mut u = vec![0.0];
        let mut cur = ll(&u).unwrap();
        let mut draws = Vec::new();
        for it in 0..20000 {
            let (nu, l, _) = elliptical_slice(&u, cur, ll, &mut rng).unwrap();
            u = nu;
            cur = l;
            if it % 5 == 0 {
                draws.push(u[0]);
            }
        }
        let crit = 1.628 / (draws.len() as f64).sqrt();
        assert!(ks_statistic(&draws, 1.0, 0.5f64.sqrt()) < crit);
    }

    #[test]
    fn invariance_from_exact_start() {
        let m = gaussian(30, 6);
        let post = m.posterior();
        let mut rng = stream_rng(4, 0);
        let mut finals = Vec::new();
        let mut acc = [false];
        for _ in 0..500 {
            let (th, u) = exact_extended_draw(&m, 8, &mut rng);
            let mut s = ChainState::new(&m, 8, vec![th], u).unwrap();
            pm_slice_step(&m, 8, &mut s, &[0.3], &mut rng, &mut acc).unwrap();
            finals.push(s.theta[0]);
        }
        assert!(ks_statistic(&finals, post.mean, post.sd()) < 1.628 / 500f64.sqrt());
    }
}
