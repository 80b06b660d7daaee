//! PM-HMC and the comparator samplers, with a chain runner.
//!
//! Every sampler keeps a [`ChainState`] holding `θ`, a noise block `u` and
//! the cached `log p(θ)` and `log p̂(y | θ, u)`. PM-HMC, PM-MH and PM-slice
//! carry `T × N × p` noise entries; joint HMC and CIS-Gibbs carry one draw
//! per datum (`T × p`).

mod counting;
mod gibbs;
mod hmc;
mod mh;
mod slice;
mod tune;

pub use counting::CountingModel;
pub use gibbs::{cis_gibbs_step, cis_select};
pub use hmc::{joint_hmc_step, pm_hmc_step};
pub use mh::{pm_mh_log_acceptance, pm_mh_step};
pub use slice::{elliptical_slice, pm_slice_step, MAX_SHRINKS};

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::info;
use rand::Rng;

use crate::dynamics::{IntegratorConfig, PseudoMarginalSystem};
use crate::error::{check_len, Error, Result};
use crate::estimator::evaluate_value;
use crate::model::LatentVariableModel;
use crate::real::Real;
use crate::rng::{stream_rng, StreamRng};

/// Target acceptance rate of the HMC step-size pre-run.
pub const HMC_TARGET_ACCEPTANCE: f64 = 0.7;
/// Target acceptance rate of the random-walk scale pre-run.
pub const RW_TARGET_ACCEPTANCE: f64 = 0.25;

const STREAM_CHAIN: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_TUNE: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    PmHmc,
    JointHmc,
    PmMh,
    PmSlice,
    CisGibbs,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 5] = [
        SamplerKind::PmHmc,
        SamplerKind::JointHmc,
        SamplerKind::PmMh,
        SamplerKind::PmSlice,
        SamplerKind::CisGibbs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::PmHmc => "pm_hmc",
            SamplerKind::JointHmc => "joint_hmc",
            SamplerKind::PmMh => "pm_mh",
            SamplerKind::PmSlice => "pm_slice",
            SamplerKind::CisGibbs => "cis_gibbs",
        }
    }

    pub fn is_hamiltonian(self) -> bool {
        matches!(self, SamplerKind::PmHmc | SamplerKind::JointHmc)
    }

    /// Noise draws held per datum in the chain state.
    pub fn noise_per_datum(self, n: usize) -> usize {
        match self {
            SamplerKind::JointHmc | SamplerKind::CisGibbs => 1,
            _ => n,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sampler kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig<F = f64> {
    pub kind: SamplerKind,
    /// Importance samples per datum. CIS-Gibbs uses it as the number of
    /// fresh candidates; joint HMC ignores it.
    pub n: usize,
    pub integrator: IntegratorConfig<F>,
    /// Random-walk scales per `θ` coordinate (a single entry applies to all);
    /// `None` starts from 1.
    pub proposal_scales: Option<Vec<F>>,
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub initial_theta: Option<Vec<F>>,
    /// Length of the tuning pre-run (0 disables it). HMC kinds adapt the
    /// step size, the others adapt the random-walk scales.
    pub tune_iterations: usize,
}

impl<F: Real> SamplerConfig<F> {
    pub fn new(kind: SamplerKind, n: usize) -> Self {
        SamplerConfig {
            kind,
            n,
            integrator: IntegratorConfig {
                step_size: F::c(0.02),
                steps: 50,
                jitter: false,
            },
            proposal_scales: None,
            iterations: 1000,
            burn_in: 100,
            seed: 0,
            initial_theta: None,
            tune_iterations: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("N must be >= 1".into()));
        }
        if self.iterations > 0 && self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.kind.is_hamiltonian() {
            self.integrator.validate()?;
        }
        if let Some(s) = &self.proposal_scales {
            if s.iter().any(|&x| !(x > F::zero() && x.is_finite())) {
                return Err(Error::InvalidConfig("proposal scales must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Current position of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState<F = f64> {
    pub theta: Vec<F>,
    pub u: Vec<F>,
    pub log_prior: F,
    pub log_phat: F,
}

impl<F: Real> ChainState<F> {
    /// Evaluates the cached densities at `(θ, u)`, where `u` holds
    /// `samples` draws per datum.
    pub fn new<M: LatentVariableModel<F> + ?Sized>(
        model: &M,
        samples: usize,
        theta: Vec<F>,
        u: Vec<F>,
    ) -> Result<Self> {
        let val = evaluate_value(model, samples, &theta, &u)?;
        if val.is_zero() {
            return Err(Error::ZeroLikelihoodState);
        }
        Ok(ChainState {
            log_prior: model.prior_logpdf(&theta),
            log_phat: val.log_phat,
            theta,
            u,
        })
    }

    /// Standard-normal noise block at `θ`.
    pub fn draw<M: LatentVariableModel<F> + ?Sized, R: Rng + ?Sized>(
        model: &M,
        samples: usize,
        theta: Vec<F>,
        rng: &mut R,
    ) -> Result<Self> {
        let len = model.data_count() * samples * model.latent_dim();
        let u = (0..len).map(|_| F::std_normal(rng)).collect();
        Self::new(model, samples, theta, u)
    }
}

/// Result of one kernel application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<F = f64> {
    /// Whether `θ` moved.
    pub accepted: bool,
    /// `H` at the chain's new phase point for HMC kinds; NaN otherwise.
    pub hamiltonian: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord<F = f64> {
    pub iteration: usize,
    pub theta: Vec<F>,
    pub log_phat: F,
    pub hamiltonian: F,
    pub accepted: bool,
    pub burn_in: bool,
}

/// Cost and tuning summary of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    /// Single-draw log-weight evaluations without gradient.
    pub weight_evaluations: u64,
    /// Single-draw log-weight evaluations with gradient.
    pub gradient_evaluations: u64,
    pub elapsed: Duration,
    /// Acceptance rate over post-burn-in iterations.
    pub acceptance_rate: f64,
    pub step_size: f64,
    pub proposal_scales: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Chain<F = f64> {
    pub kind: SamplerKind,
    pub parameter_names: Vec<String>,
    pub records: Vec<ChainRecord<F>>,
    pub stats: RunStats,
}

impl<F: Real> Chain<F> {
    pub fn post_burn_in(&self) -> impl Iterator<Item = &ChainRecord<F>> {
        self.records.iter().filter(|r| !r.burn_in)
    }

    /// Post-burn-in draws of parameter `j`.
    pub fn column(&self, j: usize) -> Vec<F> {
        self.post_burn_in().map(|r| r.theta[j]).collect()
    }

    /// Plain-text table of acceptance rate and per-parameter mean and sd.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "sampler {}  iterations {}  acceptance {:.3}  weight evals {}  gradient evals {}\n",
            self.kind,
            self.records.len(),
            self.stats.acceptance_rate,
            self.stats.weight_evaluations,
            self.stats.gradient_evaluations,
        );
        out.push_str(&format!("{:<16} {:>12} {:>12}\n", "parameter", "mean", "sd"));
        for (j, name) in self.parameter_names.iter().enumerate() {
            let col: Vec<f64> = self.column(j).iter().map(|x| x.to_f64_lossy()).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            out.push_str(&format!("{name:<16} {mean:>12.5} {:>12.5}\n", var.sqrt()));
        }
        out
    }
}

/// The state `run_chain` starts from: `θ` from the config (zeros when
/// absent) and noise drawn from the config seed.
pub fn initial_chain_state<F: Real, M: LatentVariableModel<F> + ?Sized>(
    kernel: &Kernel<'_, F, M>,
    cfg: &SamplerConfig<F>,
) -> Result<ChainState<F>> {
    let theta0 = match &cfg.initial_theta {
        Some(t) => t.clone(),
        None => vec![F::zero(); kernel.model.dim_theta()],
    };
    kernel.initial_state(theta0, &mut stream_rng(cfg.seed, STREAM_INIT))
}

/// One sampler bound to a model, holding the adapted step size and scales.
pub struct Kernel<'a, F: Real, M: ?Sized> {
    pub kind: SamplerKind,
    pub n: usize,
    pub integrator: IntegratorConfig<F>,
    pub scales: Vec<F>,
    model: &'a M,
    system: PseudoMarginalSystem<'a, F, M>,
    coord_accepts: Vec<bool>,
}

impl<'a, F: Real, M: LatentVariableModel<F> + ?Sized> Kernel<'a, F, M> {
    pub fn new(model: &'a M, cfg: &SamplerConfig<F>) -> Result<Self> {
        cfg.validate()?;
        let d = model.dim_theta();
        let scales = match &cfg.proposal_scales {
            Some(s) if s.len() == 1 => vec![s[0]; d],
            Some(s) => {
                check_len("proposal scales", d, s.len())?;
                s.clone()
            }
            None => vec![F::one(); d],
        };
        Ok(Kernel {
            kind: cfg.kind,
            n: cfg.n,
            integrator: cfg.integrator,
            scales,
            model,
            system: PseudoMarginalSystem::new(model, cfg.n)?,
            coord_accepts: vec![false; d],
        })
    }

    /// Noise draws per datum in states this kernel acts on.
    pub fn noise_per_datum(&self) -> usize {
        self.kind.noise_per_datum(self.n)
    }

    pub fn initial_state<R: Rng + ?Sized>(&self, theta: Vec<F>, rng: &mut R) -> Result<ChainState<F>> {
        check_len("initial theta entries", self.model.dim_theta(), theta.len())?;
        ChainState::draw(self.model, self.noise_per_datum(), theta, rng)
    }

    /// Per-coordinate acceptance of the last step (coordinate-wise kernels).
    pub fn coordinate_acceptances(&self) -> &[bool] {
        &self.coord_accepts
    }

    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ChainState<F>, rng: &mut R) -> Result<StepOutcome<F>> {
        if state.log_phat == F::neg_infinity() {
            return Err(Error::ZeroLikelihoodState);
        }
        match self.kind {
            SamplerKind::PmHmc => {
                let steps = self.integrator.draw_steps(rng);
                pm_hmc_step(&mut self.system, state, self.integrator.step_size, steps, rng)
            }
            SamplerKind::JointHmc => {
                let steps = self.integrator.draw_steps(rng);
                joint_hmc_step(self.model, state, self.integrator.step_size, steps, rng)
            }
            SamplerKind::PmMh => {
                let out = pm_mh_step(self.model, self.n, state, &self.scales, rng)?;
                self.coord_accepts.fill(out.accepted);
                Ok(out)
            }
            SamplerKind::PmSlice => {
                pm_slice_step(self.model, self.n, state, &self.scales, rng, &mut self.coord_accepts)
            }
            SamplerKind::CisGibbs => {
                cis_gibbs_step(self.model, self.n, state, &self.scales, rng, &mut self.coord_accepts)
            }
        }
    }
}

/// Runs one chain: optional tuning pre-run, then `iterations` kernel steps.
/// Deterministic given the configuration.
pub fn run_chain<F: Real, M: LatentVariableModel<F> + ?Sized>(
    model: &M,
    cfg: &SamplerConfig<F>,
) -> Result<Chain<F>> {
    let counted = CountingModel::new(model);
    let mut kernel = Kernel::new(&counted, cfg)?;
    let names = model.parameter_names();
    let start = Instant::now();
    if cfg.iterations == 0 {
        return Ok(Chain {
            kind: cfg.kind,
            parameter_names: names,
            records: Vec::new(),
            stats: stats_of(&kernel, &counted, start.elapsed(), 0.0),
        });
    }

    let mut state = initial_chain_state(&kernel, cfg)?;
    if cfg.tune_iterations > 0 {
        let mut rng = stream_rng(cfg.seed, STREAM_TUNE);
        tune::tune(&mut kernel, &mut state, cfg.tune_iterations, &mut rng)?;
        info!(
            "{}: tuned step size {} scales {:?}",
            cfg.kind,
            kernel.integrator.step_size,
            kernel.scales.iter().map(|s| s.to_f64_lossy()).collect::<Vec<_>>()
        );
    }

    let mut rng: StreamRng = stream_rng(cfg.seed, STREAM_CHAIN);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut accepted_post = 0usize;
    let report_every = (cfg.iterations / 10).max(1);
    for it in 0..cfg.iterations {
        let out = kernel.step(&mut state, &mut rng)?;
        let burn_in = it < cfg.burn_in;
        if !burn_in && out.accepted {
            accepted_post += 1;
        }
        records.push(ChainRecord {
            iteration: it,
            theta: state.theta.clone(),
            log_phat: state.log_phat,
            hamiltonian: out.hamiltonian,
            accepted: out.accepted,
            burn_in,
        });
        if (it + 1) % report_every == 0 {
            info!(
                "{}: iteration {}/{}  log p-hat {:.3}",
                cfg.kind,
                it + 1,
                cfg.iterations,
                state.log_phat.to_f64_lossy()
            );
        }
    }
    let rate = accepted_post as f64 / (cfg.iterations - cfg.burn_in) as f64;
    let chain = Chain {
        kind: cfg.kind,
        parameter_names: names,
        records,
        stats: stats_of(&kernel, &counted, start.elapsed(), rate),
    };
    info!("{}", chain.summary().trim_end());
    Ok(chain)
}

fn stats_of<F: Real, M: ?Sized>(
    kernel: &Kernel<'_, F, CountingModel<'_, M>>,
    counted: &CountingModel<'_, M>,
    elapsed: Duration,
    acceptance_rate: f64,
) -> RunStats {
    RunStats {
        weight_evaluations: counted.value_calls(),
        gradient_evaluations: counted.gradient_calls(),
        elapsed,
        acceptance_rate,
        step_size: kernel.integrator.step_size.to_f64_lossy(),
        proposal_scales: kernel.scales.iter().map(|s| s.to_f64_lossy()).collect(),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::model::GaussianHierarchicalModel;
    use crate::real::Real;
    use crate::rng::stream_rng;

    /// Reference Gaussian model with `t` observations.
    pub fn gaussian(t: usize, seed: u64) -> GaussianHierarchicalModel {
        let mut rng = stream_rng(seed, 77);
        let theta = 10f64.sqrt() * f64::std_normal(&mut rng);
        let y = (0..t)
            .map(|_| theta + 1.1f64.sqrt() * f64::std_normal(&mut rng))
            .collect();
        GaussianHierarchicalModel::new(10.0, 0.1, 1.0, y).unwrap()
    }

    /// Exact draw of `(θ, u)` from the extended target of the Gaussian
    /// model: `θ` from the posterior, then per datum one uniformly chosen
    /// slot from the conditional of `u` given `y_k` and the rest from
    /// `N(0, 1)`.
    pub fn exact_extended_draw<R: rand::Rng>(
        m: &GaussianHierarchicalModel,
        n: usize,
        rng: &mut R,
    ) -> (f64, Vec<f64>) {
        let post = m.posterior();
        let theta = post.mean + post.sd() * f64::std_normal(rng);
        let (_, s1sq, s2sq) = m.variances();
        let prec = 1.0 + s1sq / s2sq;
        let mut u = Vec::with_capacity(m.observations().len() * n);
        for &y in m.observations() {
            let pick = rng.random_range(0..n);
            for i in 0..n {
                u.push(if i == pick {
                    s1sq.sqrt() * (y - theta) / s2sq / prec + f64::std_normal(rng) / prec.sqrt()
                } else {
                    f64::std_normal(rng)
                });
            }
        }
        (theta, u)
    }

    /// One-sample KS statistic against `N(mean, sd²)`.
    pub fn ks_statistic(xs: &[f64], mean: f64, sd: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        let nd = Normal::new(mean, sd).unwrap();
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len() as f64;
        v.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = nd.cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max)
    }
}
