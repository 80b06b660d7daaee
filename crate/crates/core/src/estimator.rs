//! Importance-sampling likelihood estimator and its exact gradients.
//!
//! For `N` noise draws per datum the estimator is
//! `p̂(y_k | θ, u_k) = N⁻¹ Σ_i ω_θ(y_k, u_{k,i})` and
//! `p̂(y | θ, u) = Π_k p̂(y_k | θ, u_k)`. All arithmetic is done on log
//! weights with a per-datum log-sum-exp; the gradients are responsibility
//! weighted per-sample scores.

use crate::error::{check_len, Error, Result};
use crate::model::{AuxShape, LatentVariableModel};
use crate::real::Real;
use crate::rng::stream_rng;

/// `log p̂(y | θ, u)` with its gradients, produced in one pass.
///
/// When some datum has all weights equal to zero the estimate is zero:
/// `log_phat` is `-inf` and the gradients must not be used.
#[derive(Clone, Debug, Default)]
pub struct EstimatorEvaluation<F> {
    pub log_phat: F,
    pub grad_theta: Vec<F>,
    /// Same flattened `T × N × p` layout as the noise block.
    pub grad_u: Vec<F>,
    pub per_datum_log: Vec<F>,
    scratch_grad: Vec<F>,
    scratch_log_w: Vec<F>,
}

impl<F: Real> EstimatorEvaluation<F> {
    pub fn new() -> Self {
        EstimatorEvaluation {
            log_phat: F::zero(),
            grad_theta: Vec::new(),
            grad_u: Vec::new(),
            per_datum_log: Vec::new(),
            scratch_grad: Vec::new(),
            scratch_log_w: Vec::new(),
        }
    }

    /// True when the likelihood estimate is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.log_phat == F::neg_infinity()
    }
}

/// Value-only estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorValue<F> {
    pub log_phat: F,
    pub per_datum_log: Vec<F>,
}

impl<F: Real> EstimatorValue<F> {
    pub fn is_zero(&self) -> bool {
        self.log_phat == F::neg_infinity()
    }
}

fn check_inputs<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    n: usize,
    theta: &[F],
    u: &[F],
) -> Result<AuxShape> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of importance samples must be >= 1".into()));
    }
    check_len("theta entries", model.dim_theta(), theta.len())?;
    let shape = AuxShape::of(model, n);
    check_len("auxiliary noise entries", shape.len(), u.len())?;
    Ok(shape)
}

/// Evaluates the estimator and both gradients.
pub fn evaluate<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    n: usize,
    theta: &[F],
    u: &[F],
) -> Result<EstimatorEvaluation<F>> {
    let mut out = EstimatorEvaluation::new();
    evaluate_into(model, n, theta, u, &mut out)?;
    Ok(out)
}

/// As [`evaluate`], reusing the buffers of `out`.
pub fn evaluate_into<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    n: usize,
    theta: &[F],
    u: &[F],
    out: &mut EstimatorEvaluation<F>,
) -> Result<()> {
    let shape = check_inputs(model, n, theta, u)?;
    let d = theta.len();
    let p = shape.latent;
    out.grad_theta.clear();
    out.grad_theta.resize(d, F::zero());
    out.grad_u.clear();
    out.grad_u.resize(u.len(), F::zero());
    out.per_datum_log.clear();
    out.per_datum_log.resize(shape.data, F::zero());
    out.scratch_grad.clear();
    out.scratch_grad.resize(n * d, F::zero());
    out.scratch_log_w.clear();
    out.scratch_log_w.resize(n, F::zero());
    let log_n = F::from_usize(n).unwrap().ln();

    let mut total = F::zero();
    for k in 0..shape.data {
        let base = shape.offset(k, 0);
        let mut max = F::neg_infinity();
        for i in 0..n {
            let off = base + i * p;
            let lw = model.log_weight(
                theta,
                k,
                &u[off..off + p],
                &mut out.scratch_grad[i * d..(i + 1) * d],
                &mut out.grad_u[off..off + p],
            );
            if lw.is_nan() || lw == F::infinity() {
                return Err(Error::NonFinite("log importance weight"));
            }
            out.scratch_log_w[i] = lw;
            max = max.max(lw);
        }
        if max == F::neg_infinity() {
            out.per_datum_log[k] = max;
            out.grad_u[base..base + n * p].fill(F::zero());
            total = F::neg_infinity();
            continue;
        }
        let mut sum = F::zero();
        for lw in out.scratch_log_w.iter_mut() {
            *lw = (*lw - max).exp();
            sum = sum + *lw;
        }
        let inv = sum.recip();
        for i in 0..n {
            let w = out.scratch_log_w[i] * inv;
            let off = base + i * p;
            if w == F::zero() {
                out.grad_u[off..off + p].fill(F::zero());
                continue;
            }
            for (g, &s) in out
                .grad_theta
                .iter_mut()
                .zip(&out.scratch_grad[i * d..(i + 1) * d])
            {
                *g = *g + w * s;
            }
            for g in &mut out.grad_u[off..off + p] {
                *g = *g * w;
            }
        }
        let datum = max + sum.ln() - log_n;
        out.per_datum_log[k] = datum;
        total = total + datum;
    }
    out.log_phat = total;
    Ok(())
}

/// Evaluates `log p̂(y | θ, u)` without gradients.
pub fn evaluate_value<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    n: usize,
    theta: &[F],
    u: &[F],
) -> Result<EstimatorValue<F>> {
    let shape = check_inputs(model, n, theta, u)?;
    let p = shape.latent;
    let log_n = F::from_usize(n).unwrap().ln();
    let mut log_w = vec![F::zero(); n];
    let mut per_datum_log = Vec::with_capacity(shape.data);
    for k in 0..shape.data {
        let base = shape.offset(k, 0);
        for (i, lw) in log_w.iter_mut().enumerate() {
            let off = base + i * p;
            *lw = model.log_weight_value(theta, k, &u[off..off + p]);
            if lw.is_nan() || *lw == F::infinity() {
                return Err(Error::NonFinite("log importance weight"));
            }
        }
        per_datum_log.push(crate::real::log_sum_exp(&log_w) - log_n);
    }
    let log_phat = if per_datum_log.iter().any(|&v| v == F::neg_infinity()) {
        F::neg_infinity()
    } else {
        per_datum_log.iter().copied().sum()
    };
    Ok(EstimatorValue {
        log_phat,
        per_datum_log,
    })
}

/// Per-sample log weights and their per-datum normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix<F> {
    pub data: usize,
    pub samples: usize,
    /// Row-major `T × N`.
    pub log_w: Vec<F>,
    /// Row-major `T × N`; each row sums to one (all zero for a zero-estimate row).
    pub softmax: Vec<F>,
}

impl<F: Real> WeightMatrix<F> {
    pub fn row(&self, k: usize) -> (&[F], &[F]) {
        let r = k * self.samples..(k + 1) * self.samples;
        (&self.log_w[r.clone()], &self.softmax[r])
    }
}

pub fn weight_matrix<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    n: usize,
    theta: &[F],
    u: &[F],
) -> Result<WeightMatrix<F>> {
    let shape = check_inputs(model, n, theta, u)?;
    let p = shape.latent;
    let mut log_w = Vec::with_capacity(shape.data * n);
    let mut softmax = Vec::with_capacity(shape.data * n);
    for k in 0..shape.data {
        let row: Vec<F> = (0..n)
            .map(|i| {
                let off = shape.offset(k, i);
                model.log_weight_value(theta, k, &u[off..off + p])
            })
            .collect();
        let lse = crate::real::log_sum_exp(&row);
        if lse == F::neg_infinity() {
            softmax.extend(std::iter::repeat_n(F::zero(), n));
        } else {
            softmax.extend(row.iter().map(|&lw| (lw - lse).exp()));
        }
        log_w.extend(row);
    }
    Ok(WeightMatrix {
        data: shape.data,
        samples: n,
        log_w,
        softmax,
    })
}

/// Monte Carlo check of unbiasedness for one datum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatumCheck<F> {
    pub monte_carlo_mean: F,
    pub exact_likelihood: F,
    pub z_score: F,
}

/// Averages `p̂(y_k | θ, U_k)` over `draws` fresh noise blocks and compares
/// each datum with its exact likelihood.
///
/// Requires a model with a closed-form likelihood.
pub fn unbiasedness_check<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    theta: &[F],
    n: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<DatumCheck<F>>> {
    if draws == 0 {
        return Err(Error::InvalidConfig("unbiasedness check needs at least one draw".into()));
    }
    let t = model.data_count();
    let exact = (0..t)
        .map(|k| model.datum_log_likelihood(theta, k).map(F::exp))
        .collect::<Option<Vec<F>>>()
        .ok_or(Error::Unsupported("no closed-form likelihood"))?;
    let shape = AuxShape::of(model, n);
    let mut rng = stream_rng(seed, 0x0b1a5);
    let mut u = vec![F::zero(); shape.len()];
    // Welford accumulators per datum, in f64 to keep 10⁶-draw sums accurate.
    let mut mean = vec![0.0f64; t];
    let mut m2 = vec![0.0f64; t];
    for j in 0..draws {
        u.iter_mut().for_each(|v| *v = F::std_normal(&mut rng));
        let val = evaluate_value(model, n, theta, &u)?;
        for k in 0..t {
            let x = val.per_datum_log[k].exp().to_f64_lossy();
            let delta = x - mean[k];
            mean[k] += delta / (j + 1) as f64;
            m2[k] += delta * (x - mean[k]);
        }
    }
    Ok((0..t)
        .map(|k| {
            let var = if draws > 1 { m2[k] / (draws - 1) as f64 } else { 0.0 };
            let se = (var / draws as f64).sqrt();
            let ex = exact[k].to_f64_lossy();
            DatumCheck {
                monte_carlo_mean: F::c(mean[k]),
                exact_likelihood: exact[k],
                z_score: F::c((mean[k] - ex) / se),
            }
        })
        .collect())
}
