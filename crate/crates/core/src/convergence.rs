//! Flow-convergence experiment on the hierarchical Gaussian model: the
//! pseudo-marginal flow of `θ` approaches the exact marginal Hamiltonian
//! flow at rate `N^{-1/2}`.

use rayon::prelude::*;

use crate::dynamics::{rk4_dense, PseudoMarginalSystem};
use crate::error::{Error, Result};
use crate::model::{AnyModel, GaussianHierarchicalModel, LatentVariableModel};
use crate::real::Real;
use crate::rng::stream_rng;

const STREAM_THETA: u64 = 0x7e7a;
const STREAM_AUX: u64 = 0xa0c5_0000_0000;

/// Analytic marginal flow for the Gaussian posterior `N(m, s²)`: a harmonic
/// oscillator with period `2πs`. Returns `(θ(t), ρ(t))`.
pub fn gaussian_marginal_flow<F: Real>(model: &GaussianHierarchicalModel<F>, theta0: F, rho0: F, t: F) -> (F, F) {
    let post = model.posterior();
    let s = post.sd();
    let (sin, cos) = (t / s).sin_cos();
    let dev = theta0 - post.mean;
    (post.mean + dev * cos + s * rho0 * sin, -dev / s * sin + rho0 * cos)
}

/// [`gaussian_marginal_flow`] for a dispatched model; other models have no
/// closed-form flow.
pub fn exact_marginal_flow<F: Real>(model: &AnyModel<F>, theta0: F, rho0: F, t: F) -> Result<(F, F)> {
    match model {
        AnyModel::Gaussian(g) => Ok(gaussian_marginal_flow(g, theta0, rho0, t)),
        _ => Err(Error::Unsupported("exact marginal flow needs the Gaussian model")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowExperimentConfig<F = f64> {
    pub sample_sizes: Vec<usize>,
    /// Seeds `0..seeds` are used for every `N`.
    pub seeds: u64,
    pub t_end: F,
    pub grid_points: usize,
    pub dt: F,
}

impl<F: Real> Default for FlowExperimentConfig<F> {
    fn default() -> Self {
        FlowExperimentConfig {
            sample_sizes: (0..=10).map(|k| 1 << k).collect(),
            seeds: 10,
            t_end: F::one(),
            grid_points: 1001,
            dt: F::c(1e-4),
        }
    }
}

impl<F: Real> FlowExperimentConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidConfig("sample sizes must be a non-empty list of N >= 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("at least one seed per N is required".into()));
        }
        if !(self.t_end > F::zero()) || !(self.dt > F::zero()) || self.grid_points < 2 {
            return Err(Error::InvalidConfig(
                "flow experiment needs t_end > 0, dt > 0 and at least two grid points".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowErrorSample<F = f64> {
    pub n: usize,
    pub seed: u64,
    /// `sup_t |θ(t) − θ̂^N(t)|` over the grid.
    pub sup_error: F,
}

/// A cell whose reference integration failed.
#[derive(Clone, Debug, PartialEq)]
pub struct DroppedCell {
    pub n: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct FlowExperiment<F = f64> {
    pub samples: Vec<FlowErrorSample<F>>,
    pub dropped: Vec<DroppedCell>,
}

/// Initial `(θ0, ρ0)` for `seed`, drawn from the posterior times `N(0, 1)`;
/// shared by every `N`.
pub fn initial_position<F: Real>(model: &GaussianHierarchicalModel<F>, seed: u64) -> (F, F) {
    let post = model.posterior();
    let mut rng = stream_rng(seed, STREAM_THETA);
    let theta0 = post.mean + post.sd() * F::std_normal(&mut rng);
    (theta0, F::std_normal(&mut rng))
}

/// Initial `(u0, p0)` for `(seed, N)`, both standard normal.
pub fn initial_noise<F: Real>(model: &GaussianHierarchicalModel<F>, n: usize, seed: u64) -> (Vec<F>, Vec<F>) {
    let len = model.data_count() * n;
    let mut rng = stream_rng(seed, STREAM_AUX + n as u64);
    let u = (0..len).map(|_| F::std_normal(&mut rng)).collect();
    let p = (0..len).map(|_| F::std_normal(&mut rng)).collect();
    (u, p)
}

/// Pseudo-marginal `θ̂^N(t)` and exact `θ(t)` on the grid for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FanTrajectory<F = f64> {
    pub n: usize,
    pub seed: u64,
    pub times: Vec<F>,
    pub theta_hat: Vec<F>,
    pub theta_exact: Vec<F>,
}

impl<F: Real> FanTrajectory<F> {
    pub fn sup_error(&self) -> F {
        self.theta_hat
            .iter()
            .zip(&self.theta_exact)
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max)
    }
}

/// Integrates the extended equations of motion for one `(N, seed)` cell.
pub fn flow_trajectory<F: Real>(
    model: &GaussianHierarchicalModel<F>,
    n: usize,
    seed: u64,
    cfg: &FlowExperimentConfig<F>,
) -> Result<FanTrajectory<F>> {
    let (theta0, rho0) = initial_position(model, seed);
    let (u0, p0) = initial_noise(model, n, seed);
    let mut y0 = vec![theta0, rho0];
    y0.extend_from_slice(&u0);
    y0.extend_from_slice(&p0);
    let mut sys = PseudoMarginalSystem::new(model, n)?;
    let (traj, _) = rk4_dense(
        |y, out| sys.vector_field(y, out),
        &y0,
        cfg.t_end,
        cfg.dt,
        cfg.grid_points,
        |y| vec![y[0]],
    )?;
    let theta_exact = traj
        .times
        .iter()
        .map(|&t| gaussian_marginal_flow(model, theta0, rho0, t).0)
        .collect();
    Ok(FanTrajectory {
        n,
        seed,
        theta_hat: traj.samples.into_iter().map(|s| s[0]).collect(),
        times: traj.times,
        theta_exact,
    })
}

/// Runs every `(N, seed)` cell in parallel. Cells whose integration fails
/// are listed in `dropped`; other errors abort the experiment.
pub fn flow_error_experiment<F: Real>(
    model: &GaussianHierarchicalModel<F>,
    cfg: &FlowExperimentConfig<F>,
) -> Result<FlowExperiment<F>> {
    cfg.validate()?;
    let cells: Vec<(usize, u64)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..cfg.seeds).map(move |s| (n, s)))
        .collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(n, seed)| (n, seed, flow_trajectory(model, n, seed, cfg)))
        .collect();
    let mut out = FlowExperiment::default();
    for (n, seed, r) in results {
        match r {
            Ok(traj) => out.samples.push(FlowErrorSample {
                n,
                seed,
                sup_error: traj.sup_error(),
            }),
            Err(Error::NonFinite(what)) => out.dropped.push(DroppedCell {
                n,
                seed,
                reason: what.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Flow error when the estimator gradient is replaced by the exact marginal
/// score: isolates reference-integrator error from estimator error.
pub fn surrogate_flow_error<F: Real>(
    model: &GaussianHierarchicalModel<F>,
    theta0: F,
    rho0: F,
    cfg: &FlowExperimentConfig<F>,
) -> Result<F> {
    let (s0, _, _) = model.variances();
    let (traj, _) = rk4_dense(
        |y, out| {
            out[0] = y[1];
            out[1] = -y[0] / s0 + model.marginal_score(y[0]);
            Ok(())
        },
        &[theta0, rho0],
        cfg.t_end,
        cfg.dt,
        cfg.grid_points,
        |y| vec![y[0]],
    )?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.samples)
        .map(|(&t, s)| (s[0] - gaussian_marginal_flow(model, theta0, rho0, t).0).abs())
        .fold(F::zero(), F::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    /// Least-squares slope of `log₂ error` against `log₂ N`.
    pub slope: f64,
    pub intercept: f64,
    /// `(N, error)` pairs used in the fit.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares fit of `log₂ sup_error` on `log₂ N` over all cells.
pub fn fit_slope<F: Real>(samples: &[FlowErrorSample<F>]) -> Result<SlopeFit> {
    let mut ns: Vec<usize> = samples.iter().map(|s| s.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 {
        return Err(Error::Diagnostic("slope fit needs at least two distinct N".into()));
    }
    let points: Vec<(usize, f64)> = samples.iter().map(|s| (s.n, s.sup_error.to_f64_lossy())).collect();
    if points.iter().any(|&(_, e)| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Diagnostic("slope fit needs positive finite errors".into()));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, e)| ((n as f64).log2(), e.log2())).collect();
    let m = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / m;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        points,
    })
}

/// Median sup-error per `N`, in increasing `N`.
pub fn median_by_n<F: Real>(samples: &[FlowErrorSample<F>]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = samples.iter().map(|s| s.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let mut e: Vec<f64> = samples
                .iter()
                .filter(|s| s.n == n)
                .map(|s| s.sup_error.to_f64_lossy())
                .collect();
            e.sort_by(f64::total_cmp);
            let k = e.len();
            let med = if k % 2 == 1 {
                e[k / 2]
            } else {
                0.5 * (e[k / 2 - 1] + e[k / 2])
            };
            (n, med)
        })
        .collect()
}
