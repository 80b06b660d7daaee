//! Experiment configuration files.
//!
//! A config is a flat list of `key = value` lines with `#` comments, parsed
//! with TOML value syntax: numbers, quoted strings, booleans and `[a, b]`
//! lists. Keys are dotted names; unknown keys are rejected.
//!
//! | key | meaning |
//! |-----|---------|
//! | `model.name` | `gaussian`, `diffraction` or `glmm` |
//! | `model.data` | data set CSV; simulated from the model keys when absent |
//! | `model.data_seed` | seed for simulated data (defaults to `seed`) |
//! | `model.t` | number of data / subjects |
//! | `model.sigma0_sq`, `model.sigma1_sq`, `model.sigma2_sq`, `model.theta` | Gaussian model |
//! | `model.mu`, `model.sigma`, `model.lambda` | diffraction true values |
//! | `model.n_i`, `model.p_cov`, `model.beta`, `model.mu`, `model.lambda`, `model.w1` | GLMM; `mu` and `lambda` are two-element lists |
//! | `sampler.kind` | `pm_hmc`, `joint_hmc`, `pm_mh`, `pm_slice`, `cis_gibbs` |
//! | `sampler.n` | importance samples per datum |
//! | `sampler.h`, `sampler.steps`, `sampler.jitter` | integrator |
//! | `sampler.iterations`, `sampler.burn_in` | total iterations (burn-in included) and burn-in |
//! | `sampler.scales` | random-walk scale (number or per-coordinate list) |
//! | `sampler.init` | initial `θ` list |
//! | `sampler.tune` | tuning pre-run length, 0 disables |
//! | `seed`, `out_dir` | master seed and output directory |
//! | `convergence.n`, `convergence.seeds`, `convergence.t_end`, `convergence.grid`, `convergence.dt` | flow-error study |
//! | `convergence.fan` | also write dense trajectories |
//! | `diagnose.max_lag` | longest autocorrelation lag reported |
//! | `region.<name>` | mode region as `"a_sigma a_lambda offset; ..."`, each term meaning `a_sigma σ + a_lambda λ >= offset` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::convergence::FlowExperimentConfig;
use crate::diagnostics::{HalfPlane, Region};
use crate::dynamics::IntegratorConfig;
use crate::error::{Error, Result};
use crate::model::{DiffractionSpec, GaussianSpec, GlmmSpec, ModelSpec};
use crate::samplers::{SamplerConfig, SamplerKind};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnoseConfig {
    pub max_lag: usize,
    pub regions: Vec<Region>,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            max_lag: 50,
            regions: Vec::new(),
        }
    }
}

/// Everything one CLI invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Observed data file; relative paths resolve against the config file.
    pub data: Option<PathBuf>,
    pub data_seed: Option<u64>,
    pub sampler: SamplerConfig<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub convergence: FlowExperimentConfig<f64>,
    pub write_fans: bool,
    pub diagnose: DiagnoseConfig,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(data), Some(dir)) = (&cfg.data, path.parent()) {
            if data.is_relative() {
                cfg.data = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut keys = Keys::new(text)?;
        let cfg = Self::from_keys(&mut keys)?;
        keys.finish()?;
        Ok(cfg)
    }

    /// Seed used to simulate data when no data file is given.
    pub fn effective_data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    fn from_keys(k: &mut Keys<'_>) -> Result<Self> {
        let seed = k.uint("seed")?.unwrap_or(0);
        let name = k.string("model.name")?.ok_or_else(|| Error::Config {
            line: 0,
            msg: "missing required key 'model.name'".into(),
        })?;
        let model = match name.as_str() {
            "gaussian" => {
                let d = GaussianSpec::default();
                ModelSpec::Gaussian(GaussianSpec {
                    sigma0_sq: k.float("model.sigma0_sq")?.unwrap_or(d.sigma0_sq),
                    sigma1_sq: k.float("model.sigma1_sq")?.unwrap_or(d.sigma1_sq),
                    sigma2_sq: k.float("model.sigma2_sq")?.unwrap_or(d.sigma2_sq),
                    data: k.uint("model.t")?.map_or(d.data, |v| v as usize),
                    theta: k.float("model.theta")?,
                })
            }
            "diffraction" => {
                let d = DiffractionSpec::default();
                ModelSpec::Diffraction(DiffractionSpec {
                    mu: k.float("model.mu")?.unwrap_or(d.mu),
                    sigma: k.float("model.sigma")?.unwrap_or(d.sigma),
                    lambda: k.float("model.lambda")?.unwrap_or(d.lambda),
                    data: k.uint("model.t")?.map_or(d.data, |v| v as usize),
                })
            }
            "glmm" => {
                let d = GlmmSpec::default();
                ModelSpec::Glmm(GlmmSpec {
                    subjects: k.uint("model.t")?.map_or(d.subjects, |v| v as usize),
                    per_subject: k.uint("model.n_i")?.map_or(d.per_subject, |v| v as usize),
                    covariates: k.uint("model.p_cov")?.map_or(d.covariates, |v| v as usize),
                    beta: k.floats("model.beta")?,
                    mu: k.pair("model.mu")?.unwrap_or(d.mu),
                    lambda: k.pair("model.lambda")?.unwrap_or(d.lambda),
                    w1: k.float("model.w1")?.unwrap_or(d.w1),
                })
            }
            other => {
                return Err(k.error(
                    "model.name",
                    format!("unknown model '{other}' (expected gaussian, diffraction or glmm)"),
                ))
            }
        };
        model.validate().map_err(|e| k.error("model.name", e.to_string()))?;

        let kind = match k.string("sampler.kind")? {
            Some(s) => s.parse().map_err(|e: Error| k.error("sampler.kind", e.to_string()))?,
            None => SamplerKind::PmHmc,
        };
        let mut sampler = SamplerConfig::<f64>::new(kind, 1);
        if let Some(n) = k.uint("sampler.n")? {
            sampler.n = n as usize;
        }
        sampler.integrator = IntegratorConfig {
            step_size: k.float("sampler.h")?.unwrap_or(sampler.integrator.step_size),
            steps: k.uint("sampler.steps")?.map_or(sampler.integrator.steps, |v| v as usize),
            jitter: k.boolean("sampler.jitter")?.unwrap_or(false),
        };
        if let Some(v) = k.uint("sampler.iterations")? {
            sampler.iterations = v as usize;
        }
        if let Some(v) = k.uint("sampler.burn_in")? {
            sampler.burn_in = v as usize;
        }
        if let Some(v) = k.uint("sampler.tune")? {
            sampler.tune_iterations = v as usize;
        }
        sampler.proposal_scales = k.floats("sampler.scales")?;
        sampler.initial_theta = k.floats("sampler.init")?;
        sampler.seed = seed;
        sampler.validate().map_err(|e| k.error("sampler.kind", e.to_string()))?;

        let mut convergence = FlowExperimentConfig::<f64>::default();
        if let Some(ns) = k.uints("convergence.n")? {
            convergence.sample_sizes = ns.into_iter().map(|v| v as usize).collect();
        }
        if let Some(v) = k.uint("convergence.seeds")? {
            convergence.seeds = v;
        }
        if let Some(v) = k.float("convergence.t_end")? {
            convergence.t_end = v;
        }
        if let Some(v) = k.uint("convergence.grid")? {
            convergence.grid_points = v as usize;
        }
        if let Some(v) = k.float("convergence.dt")? {
            convergence.dt = v;
        }
        convergence
            .validate()
            .map_err(|e| k.error("convergence.n", e.to_string()))?;

        let mut diagnose = DiagnoseConfig::default();
        if let Some(v) = k.uint("diagnose.max_lag")? {
            diagnose.max_lag = v as usize;
        }
        for name in k.prefixed("region.") {
            let key = format!("region.{name}");
            let text = k.string(&key)?.unwrap_or_default();
            let half_planes = parse_half_planes(&text).map_err(|msg| k.error(&key, msg))?;
            diagnose.regions.push(Region { name, half_planes });
        }

        Ok(ExperimentConfig {
            model,
            data: k.string("model.data")?.map(PathBuf::from),
            data_seed: k.uint("model.data_seed")?,
            sampler,
            seed,
            out_dir: PathBuf::from(k.string("out_dir")?.unwrap_or_else(|| "out".into())),
            convergence,
            write_fans: k.boolean("convergence.fan")?.unwrap_or(false),
            diagnose,
        })
    }
}

/// Parses `"a_sigma a_lambda offset; ..."`.
pub fn parse_half_planes(text: &str) -> std::result::Result<Vec<HalfPlane>, String> {
    let mut out = Vec::new();
    for term in text.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let v: Vec<f64> = term
            .split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|_| format!("bad number '{x}' in region term '{term}'")))
            .collect::<std::result::Result<_, _>>()?;
        if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
            return Err(format!(
                "region term '{term}' needs three finite numbers: a_sigma a_lambda offset"
            ));
        }
        out.push(HalfPlane {
            a_sigma: v[0],
            a_lambda: v[1],
            offset: v[2],
        });
    }
    if out.is_empty() {
        return Err("region has no half-planes".into());
    }
    Ok(out)
}

/// Flattened key/value view that remembers which keys were read.
struct Keys<'a> {
    text: &'a str,
    values: BTreeMap<String, Value>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            v => {
                out.insert(key, v);
            }
        }
    }
}

impl<'a> Keys<'a> {
    fn new(text: &'a str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            msg: e.message().trim().to_string(),
        })?;
        let mut values = BTreeMap::new();
        flatten("", table, &mut values);
        Ok(Keys { text, values })
    }

    fn line(&self, key: &str) -> usize {
        self.text
            .lines()
            .position(|l| {
                l.split_once('=')
                    .is_some_and(|(lhs, _)| lhs.replace([' ', '\t', '"'], "") == key)
            })
            .map_or(0, |i| i + 1)
    }

    fn error(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.line(key),
            msg: format!("{key}: {}", msg.into()),
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.values.remove(key)
    }

    fn prefixed(&self, prefix: &str) -> Vec<String> {
        self.values
            .keys()
            .filter_map(|k| k.strip_prefix(prefix).map(String::from))
            .collect()
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(self.error(key, format!("expected a string, got {}", v.type_str()))),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(b)),
            Some(v) => Err(self.error(key, format!("expected true or false, got {}", v.type_str()))),
        }
    }

    fn as_float(&self, key: &str, v: &Value) -> Result<f64> {
        match *v {
            Value::Float(x) if x.is_finite() => Ok(x),
            Value::Integer(i) => Ok(i as f64),
            _ => Err(self.error(key, format!("expected a finite number, got {v}"))),
        }
    }

    fn as_uint(&self, key: &str, v: &Value) -> Result<u64> {
        match *v {
            Value::Integer(i) if i >= 0 => Ok(i as u64),
            _ => Err(self.error(key, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key).map(|v| self.as_float(key, &v)).transpose()
    }

    fn uint(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key).map(|v| self.as_uint(key, &v)).transpose()
    }

    /// A list of numbers; a bare number is a one-element list.
    fn floats(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(|v| self.as_float(key, v)).collect::<Result<_>>().map(Some),
            Some(v) => Ok(Some(vec![self.as_float(key, &v)?])),
        }
    }

    fn uints(&mut self, key: &str) -> Result<Option<Vec<u64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a.iter().map(|v| self.as_uint(key, v)).collect::<Result<_>>().map(Some),
            Some(v) => Ok(Some(vec![self.as_uint(key, &v)?])),
        }
    }

    fn pair(&mut self, key: &str) -> Result<Option<[f64; 2]>> {
        match self.floats(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some([v[0], v[1]])),
            Some(v) => Err(self.error(key, format!("expected two numbers, got {}", v.len()))),
        }
    }

    /// Fails on any key that was never read.
    fn finish(self) -> Result<()> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(k) => Err(self.error(k, "unknown key")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
# diffraction run
model.name = "diffraction"
model.t = 100
model.lambda = 0.1
sampler.kind = "pm_hmc"
sampler.n = 16
sampler.h = 0.02
sampler.steps = 50
sampler.iterations = 50000
sampler.burn_in = 10000
seed = 7
out_dir = "runs/diffraction"
diagnose.max_lag = 100
region.low = "0 -1 -1.5"
region.high = "0 1 -1.5; 1 0 -10"
"#;

    #[test]
    fn full_config_parses() {
        let cfg = ExperimentConfig::parse(FULL).unwrap();
        assert_eq!(cfg.model.name(), "diffraction");
        match &cfg.model {
            ModelSpec::Diffraction(s) => {
                assert_eq!(s.data, 100);
                assert_eq!(s.lambda, 0.1);
                assert_eq!(s.mu, 1.0);
            }
            _ => panic!(),
        }
        assert_eq!(cfg.sampler.kind, SamplerKind::PmHmc);
        assert_eq!(cfg.sampler.n, 16);
        assert_eq!(cfg.sampler.iterations, 50000);
        assert_eq!(cfg.sampler.burn_in, 10000);
        assert_eq!(cfg.sampler.seed, 7);
        assert_eq!(cfg.out_dir, PathBuf::from("runs/diffraction"));
        assert_eq!(cfg.diagnose.max_lag, 100);
        let names: Vec<_> = cfg.diagnose.regions.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["high", "low"]);
        assert_eq!(cfg.diagnose.regions[0].half_planes.len(), 2);
    }

    #[test]
    fn defaults_apply() {
        let cfg = ExperimentConfig::parse("model.name = \"gaussian\"").unwrap();
        assert_eq!(cfg.model, ModelSpec::Gaussian(GaussianSpec::default()));
        assert_eq!(cfg.sampler.integrator.step_size, 0.02);
        assert_eq!(cfg.sampler.integrator.steps, 50);
        assert_eq!(cfg.convergence, FlowExperimentConfig::default());
        assert_eq!(cfg.effective_data_seed(), 0);
    }

    #[test]
    fn glmm_keys() {
        let cfg = ExperimentConfig::parse(
            "model.name = \"glmm\"\nmodel.t = 50\nmodel.p_cov = 2\nmodel.beta = [1, -1]\nmodel.mu = [0, 3]\nsampler.scales = 0.1\nconvergence.n = [1, 4]",
        )
        .unwrap();
        match &cfg.model {
            ModelSpec::Glmm(s) => {
                assert_eq!(s.subjects, 50);
                assert_eq!(s.beta, Some(vec![1.0, -1.0]));
            }
            _ => panic!(),
        }
        assert_eq!(cfg.sampler.proposal_scales, Some(vec![0.1]));
        assert_eq!(cfg.convergence.sample_sizes, vec![1, 4]);
    }

    fn line_of_error(text: &str) -> usize {
        match ExperimentConfig::parse(text) {
            Err(Error::Config { line, .. }) => line,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_report_lines() {
        assert_eq!(line_of_error("model.name = \"gaussian\"\nmodel.bogus = 1\n"), 2);
        assert_eq!(line_of_error("model.name = \"gaussian\"\nsampler.n = -3\n"), 2);
        assert_eq!(line_of_error("model.name = \"gaussian\"\nsampler.n = 3\nsampler.n = 4\n"), 3);
        assert_eq!(line_of_error("seed = 1\nmodel.name = \"lasso\"\n"), 2);
        assert_eq!(line_of_error("model.name = \"gaussian\"\nthis is not a pair\n"), 2);
        assert_eq!(line_of_error("model.name = \"gaussian\"\nsampler.kind = \"nuts\"\n"), 2);
        assert_eq!(line_of_error("model.name = \"gaussian\"\nregion.a = \"1 2\"\n"), 2);
        assert_eq!(line_of_error("model.name = \"gaussian\"\nmodel.sigma1_sq = -1\n"), 1);
        assert_eq!(line_of_error("sampler.n = 4\n"), 0);
    }

    #[test]
    fn half_plane_terms() {
        let hp = parse_half_planes("1 0 2; 0 -1 -3;").unwrap();
        assert_eq!(hp.len(), 2);
        assert!(hp[0].contains(2.0, 0.0) && !hp[0].contains(1.9, 0.0));
        assert!(parse_half_planes("").is_err());
        assert!(parse_half_planes("1 x 2").is_err());
        assert!(parse_half_planes("1 inf 2").is_err());
    }
}
