//! Chain diagnostics: autocorrelation, effective sample size, a thinned
//! Kolmogorov–Smirnov test against a normal posterior, and mode occupancy
//! for the diffraction posterior.
//!
//! ESS estimates of strongly multimodal chains are unreliable; they are used
//! here only to thin unimodal validation chains.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::samplers::ChainRecord;

/// Minimum chain length accepted by [`ess`].
pub const MIN_ESS_LENGTH: usize = 100;
/// Minimum number of effective draws for [`ks_against_normal`].
pub const MIN_KS_SAMPLES: usize = 50;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased autocovariances `γ_0..=γ_max_lag` (normalized by `n`).
fn autocovariance(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    (0..=max_lag)
        .map(|k| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Autocorrelation at lags `0..=max_lag`, normalized by the lag-0
/// autocovariance. A constant chain has no defined autocorrelation.
pub fn autocorrelation(xs: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if xs.len() <= max_lag {
        return Err(Error::Diagnostic(format!(
            "chain of length {} is too short for lag {max_lag}",
            xs.len()
        )));
    }
    let gamma = autocovariance(xs, max_lag);
    if !(gamma[0] > 0.0) {
        return Err(Error::Diagnostic("autocorrelation of a constant chain is undefined".into()));
    }
    Ok(gamma.iter().map(|g| g / gamma[0]).collect())
}

/// Effective sample size by Geyer's initial monotone positive sequence.
pub fn ess(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < MIN_ESS_LENGTH {
        return Err(Error::Diagnostic(format!(
            "ESS needs at least {MIN_ESS_LENGTH} draws, got {n}"
        )));
    }
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let gamma = |k: usize| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let g0 = gamma(0);
    if !(g0 > 0.0) {
        return Err(Error::Diagnostic("ESS of a constant chain is undefined".into()));
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while k + 1 < n {
        let pair = (gamma(k) + gamma(k + 1)) / g0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// Monte Carlo standard error of the chain mean, `sd / √ESS`.
pub fn mcse(xs: &[f64]) -> Result<f64> {
    let e = ess(xs)?;
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Ok((var / e).sqrt())
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
pub fn kolmogorov_p_value(statistic: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        p += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Draws left after thinning.
    pub samples: usize,
    pub thin: usize,
}

/// Two-sided one-sample KS test of `xs` (used as is) against `N(mean, sd²)`.
pub fn ks_normal(xs: &[f64], mean: f64, sd: f64) -> Result<KsResult> {
    let nd = Normal::new(mean, sd).map_err(|e| Error::Diagnostic(e.to_string()))?;
    if xs.is_empty() {
        return Err(Error::Diagnostic("KS test of an empty sample".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let statistic = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = nd.cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_p_value(statistic, v.len()),
        samples: v.len(),
        thin: 1,
    })
}

/// KS test against `N(mean, sd²)` after thinning the chain by `⌈n / ESS⌉`.
pub fn ks_against_normal(xs: &[f64], mean: f64, sd: f64) -> Result<KsResult> {
    let e = ess(xs)?;
    let thin = ((xs.len() as f64 / e).ceil() as usize).max(1);
    let thinned: Vec<f64> = xs.iter().step_by(thin).copied().collect();
    if thinned.len() < MIN_KS_SAMPLES {
        return Err(Error::Diagnostic(format!(
            "only {} effective draws after thinning by {thin}; need {MIN_KS_SAMPLES}",
            thinned.len()
        )));
    }
    Ok(KsResult {
        thin,
        ..ks_normal(&thinned, mean, sd)?
    })
}

/// Half-plane `a_sigma·σ + a_lambda·λ ≥ offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfPlane {
    pub a_sigma: f64,
    pub a_lambda: f64,
    pub offset: f64,
}

impl HalfPlane {
    pub fn contains(&self, sigma: f64, lambda: f64) -> bool {
        self.a_sigma * sigma + self.a_lambda * lambda >= self.offset
    }
}

/// Labeled intersection of half-planes in `(σ, λ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub name: String,
    pub half_planes: Vec<HalfPlane>,
}

impl Region {
    pub fn contains(&self, sigma: f64, lambda: f64) -> bool {
        self.half_planes.iter().all(|h| h.contains(sigma, lambda))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeOccupancy {
    pub regions: Vec<String>,
    pub fractions: Vec<f64>,
}

/// Fraction of `(σ, λ)` draws falling in each region.
pub fn mode_occupancy(points: &[(f64, f64)], regions: &[Region]) -> Result<ModeOccupancy> {
    if regions.is_empty() || regions.iter().any(|r| r.half_planes.is_empty()) {
        return Err(Error::Diagnostic("mode occupancy needs non-empty region definitions".into()));
    }
    if points.is_empty() {
        return Err(Error::Diagnostic("mode occupancy of an empty chain".into()));
    }
    let n = points.len() as f64;
    Ok(ModeOccupancy {
        regions: regions.iter().map(|r| r.name.clone()).collect(),
        fractions: regions
            .iter()
            .map(|r| points.iter().filter(|&&(s, l)| r.contains(s, l)).count() as f64 / n)
            .collect(),
    })
}

/// `(σ, λ)` from diffraction parameters `(μ, log σ, log λ)`.
pub fn sigma_lambda(theta: &[f64]) -> (f64, f64) {
    (theta[1].exp(), theta[2].exp())
}

/// Per-parameter summary in a [`ChainReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterReport {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` when the chain is too short or constant.
    pub ess: Option<f64>,
    pub mcse: Option<f64>,
    /// Lags `0..=max_lag` (truncated to the chain length); empty for a constant chain.
    pub acf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainReport {
    pub draws: usize,
    pub acceptance_rate: f64,
    pub parameters: Vec<ParameterReport>,
    /// Thinned KS test of the first parameter, when a normal target is given.
    pub ks: Option<KsResult>,
    /// Diffraction mode occupancy, when regions are given.
    pub modes: Option<ModeOccupancy>,
}

/// Diagnostics of a stored chain. `normal_target` is the analytic
/// `(mean, sd)` of the first parameter; `regions` are applied to the
/// diffraction `(σ, λ)`.
pub fn diagnose_chain(
    records: &[ChainRecord<f64>],
    names: &[String],
    max_lag: usize,
    normal_target: Option<(f64, f64)>,
    regions: &[Region],
) -> Result<ChainReport> {
    if records.is_empty() {
        return Err(Error::Diagnostic("chain has no draws".into()));
    }
    let d = records[0].theta.len();
    let column = |j: usize| -> Vec<f64> { records.iter().map(|r| r.theta[j]).collect() };
    let mut parameters = Vec::with_capacity(d);
    for j in 0..d {
        let xs = column(j);
        let m = mean(&xs);
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        } else {
            0.0
        };
        parameters.push(ParameterReport {
            name: names.get(j).cloned().unwrap_or_else(|| format!("theta_{j}")),
            mean: m,
            sd: var.sqrt(),
            ess: ess(&xs).ok(),
            mcse: mcse(&xs).ok(),
            acf: autocorrelation(&xs, max_lag.min(xs.len() - 1)).unwrap_or_default(),
        });
    }
    let ks = match normal_target {
        Some((m, s)) if d > 0 => Some(ks_against_normal(&column(0), m, s)?),
        _ => None,
    };
    let modes = if regions.is_empty() {
        None
    } else {
        if d < 3 {
            return Err(Error::Diagnostic("mode regions need (mu, log sigma, log lambda) draws".into()));
        }
        let pts: Vec<(f64, f64)> = records.iter().map(|r| sigma_lambda(&r.theta)).collect();
        Some(mode_occupancy(&pts, regions)?)
    };
    Ok(ChainReport {
        draws: records.len(),
        acceptance_rate: records.iter().filter(|r| r.accepted).count() as f64 / records.len() as f64,
        parameters,
        ks,
        modes,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.5}"))
}

impl std::fmt::Display for ChainReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "draws {}  acceptance {:.4}", self.draws, self.acceptance_rate)?;
        writeln!(
            f,
            "{:<16} {:>12} {:>12} {:>12} {:>12} {:>10}",
            "parameter", "mean", "sd", "ess", "mcse", "acf[1]"
        )?;
        for p in &self.parameters {
            writeln!(
                f,
                "{:<16} {:>12.5} {:>12.5} {:>12} {:>12} {:>10}",
                p.name,
                p.mean,
                p.sd,
                opt(p.ess),
                opt(p.mcse),
                opt(p.acf.get(1).copied())
            )?;
        }
        if let Some(ks) = &self.ks {
            writeln!(
                f,
                "ks statistic {:.5}  p-value {:.5}  draws {}  thin {}",
                ks.statistic, ks.p_value, ks.samples, ks.thin
            )?;
        }
        if let Some(m) = &self.modes {
            for (name, frac) in m.regions.iter().zip(&m.fractions) {
                writeln!(f, "region {name:<12} {frac:.4}")?;
            }
        }
        Ok(())
    }
}
