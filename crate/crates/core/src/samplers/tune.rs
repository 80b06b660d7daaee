use rand::Rng;

use super::{ChainState, Kernel, SamplerKind, HMC_TARGET_ACCEPTANCE, RW_TARGET_ACCEPTANCE};
use crate::error::Result;
use crate::model::LatentVariableModel;
use crate::real::Real;

const BATCH: usize = 50;

/// Stochastic-approximation pre-run. After each batch the log step size (or
/// log scales) moves by `gain · (rate − target)` with a decaying gain; the
/// final values average the second half of the batches. The chain state is
/// advanced by the pre-run.
pub(crate) fn tune<F: Real, M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
    kernel: &mut Kernel<'_, F, M>,
    state: &mut ChainState<F>,
    iterations: usize,
    rng: &mut R,
) -> Result<()> {
    let d = kernel.scales.len();
    let batches = iterations.div_ceil(BATCH);
    let mut log_h = kernel.integrator.step_size.to_f64_lossy().ln();
    let mut log_s: Vec<f64> = kernel.scales.iter().map(|s| s.to_f64_lossy().ln()).collect();
    let (mut sum_h, mut sum_s, mut averaged) = (0.0, vec![0.0; d], 0usize);

    let mut it = 0;
    for b in 0..batches {
        let len = BATCH.min(iterations - it);
        let mut acc = 0usize;
        let mut coord = vec![0usize; d];
        for _ in 0..len {
            acc += kernel.step(state, rng)?.accepted as usize;
            for (c, &a) in coord.iter_mut().zip(kernel.coordinate_acceptances()) {
                *c += a as usize;
            }
        }
        it += len;
        let gain = 2.0 / ((b + 1) as f64).sqrt();
        let rate = |count: usize| count as f64 / len as f64;
        match kernel.kind {
            SamplerKind::PmHmc | SamplerKind::JointHmc => {
                log_h += gain * (rate(acc) - HMC_TARGET_ACCEPTANCE);
            }
            SamplerKind::PmMh => {
                let step = gain * (rate(acc) - RW_TARGET_ACCEPTANCE);
                log_s.iter_mut().for_each(|s| *s += step);
            }
            SamplerKind::PmSlice | SamplerKind::CisGibbs => {
                for (s, &c) in log_s.iter_mut().zip(&coord) {
                    *s += gain * (rate(c) - RW_TARGET_ACCEPTANCE);
                }
            }
        }
        kernel.integrator.step_size = F::c(log_h.exp());
        for (k, &s) in kernel.scales.iter_mut().zip(&log_s) {
            *k = F::c(s.exp());
        }
        if 2 * (b + 1) > batches {
            sum_h += log_h;
            sum_s.iter_mut().zip(&log_s).for_each(|(a, &s)| *a += s);
            averaged += 1;
        }
    }
    if averaged > 0 {
        let a = averaged as f64;
        kernel.integrator.step_size = F::c((sum_h / a).exp());
        for (k, &s) in kernel.scales.iter_mut().zip(&sum_s) {
            *k = F::c((s / a).exp());
        }
    }
    Ok(())
}
