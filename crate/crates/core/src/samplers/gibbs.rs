use rand::Rng;

use super::slice::{coordinate_rw, log_phat_or_zero};
use super::{ChainState, StepOutcome};
use crate::error::{check_len, Error, Result};
use crate::model::LatentVariableModel;
use crate::real::Real;

/// Draws an index with probability proportional to `exp(log_w[i])`.
/// Entries equal to `-inf` are never chosen while a finite entry exists.
pub fn cis_select<F: Real, R: Rng + ?Sized>(log_w: &[F], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(F::neg_infinity(), F::max);
    let total: F = log_w.iter().map(|&l| (l - max).exp()).sum();
    let mut target = F::uniform(rng) * total;
    let mut last = 0;
    for (i, &l) in log_w.iter().enumerate() {
        let w = (l - max).exp();
        if w > F::zero() {
            last = i;
            if target < w {
                return i;
            }
            target = target - w;
        }
    }
    last
}

/// One CIS-Gibbs iteration. The state keeps one retained noise draw per
/// datum. Each datum's draw competes with `n` fresh standard-normal draws
/// via normalized weights; then each `θ` coordinate gets a random-walk MH
/// update given the noise.
pub fn cis_gibbs_step<F: Real, M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
    model: &M,
    n: usize,
    state: &mut ChainState<F>,
    scales: &[F],
    rng: &mut R,
    accepts: &mut [bool],
) -> Result<StepOutcome<F>> {
    let t = model.data_count();
    let p = model.latent_dim();
    check_len("retained noise entries", t * p, state.u.len())?;
    let mut cand = vec![F::zero(); (n + 1) * p];
    let mut log_w = vec![F::zero(); n + 1];
    let mut total = F::zero();
    for k in 0..t {
        let retained = &mut state.u[k * p..(k + 1) * p];
        cand[..p].copy_from_slice(retained);
        for c in cand[p..].iter_mut() {
            *c = F::std_normal(rng);
        }
        for (i, lw) in log_w.iter_mut().enumerate() {
            *lw = model.log_weight_value(&state.theta, k, &cand[i * p..(i + 1) * p]);
            if lw.is_nan() {
                *lw = F::neg_infinity();
            }
        }
        if log_w[0] == F::neg_infinity() {
            return Err(Error::ZeroLikelihoodState);
        }
        let pick = cis_select(&log_w, rng);
        retained.copy_from_slice(&cand[pick * p..(pick + 1) * p]);
        total = total + log_w[pick];
    }
    state.log_phat = total;

    let noise = std::mem::take(&mut state.u);
    let moved = coordinate_rw(
        state,
        scales,
        rng,
        accepts,
        |th| model.prior_logpdf(th),
        |th| log_phat_or_zero(model, 1, th, &noise),
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
    fn selection_frequencies_follow_weights() {
        let mut rng = stream_rng(1, 0);
        let log_w = [0.0f64.ln() + 1.0, 2f64.ln() + 1.0, f64::NEG_INFINITY, 1.0];
        let mut counts = [0usize; 4];
        let m = 40000;
        for _ in 0..m {
            counts[cis_select(&log_w, &mut rng)] += 1;
        }
        // weights (0, 2, 0, 1) up to a common factor
        assert_eq!(counts[0], 0);
        assert_eq!(counts[2], 0);
        let f = counts[1] as f64 / m as f64;
        assert!((f - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn two_candidates_split_probability() {
        let mut rng = stream_rng(2, 0);
        let log_w = [0.2f64.ln(), 0.8f64.ln()];
        let hits = (0..20000).filter(|_| cis_select(&log_w, &mut rng) == 1).count();
        assert!((hits as f64 / 20000.0 - 0.8).abs() < 0.01);
    }

    #[test]
    fn invariance_from_exact_start() {
        let m = gaussian(30, 7);
        let post = m.posterior();
        let mut rng = stream_rng(5, 0);
        let mut finals = Vec::new();
        let mut acc = [false];
        for _ in 0..500 {
            let (th, u) = exact_extended_draw(&m, 1, &mut rng);
            let mut s = ChainState::new(&m, 1, vec![th], u).unwrap();
            cis_gibbs_step(&m, 8, &mut s, &[0.3], &mut rng, &mut acc).unwrap();
            finals.push(s.theta[0]);
        }
        assert!(ks_statistic(&finals, post.mean, post.sd()) < 1.628 / 500f64.sqrt());
    }

    #[test]
    fn cached_estimate_stays_consistent() {
        let m = gaussian(10, 8);
        let mut rng = stream_rng(6, 0);
        let mut s = ChainState::draw(&m, 1, vec![0.0], &mut rng).unwrap();
        let mut acc = [false];
        for _ in 0..50 {
            cis_gibbs_step(&m, 4, &mut s, &[0.3], &mut rng, &mut acc).unwrap();
            let fresh = ChainState::new(&m, 1, s.theta.clone(), s.u.clone()).unwrap();
            assert!((fresh.log_phat - s.log_phat).abs() < 1e-10);
            assert!((fresh.log_prior - s.log_prior).abs() < 1e-12);
        }
    }
}
