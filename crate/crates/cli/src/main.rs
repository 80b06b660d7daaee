use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use pmhmc::config::ExperimentConfig;
use pmhmc::convergence::{fit_slope, flow_error_experiment, flow_trajectory, median_by_n};
use pmhmc::diagnostics::diagnose_chain;
use pmhmc::dynamics::PseudoMarginalSystem;
use pmhmc::estimator::weight_matrix;
use pmhmc::io;
use pmhmc::model::{AnyModel, Dataset, ExtendedState, LatentVariableModel, ModelSpec};
use pmhmc::rng::stream_rng;
use pmhmc::samplers::{initial_chain_state, run_chain, Kernel, SamplerKind};
use pmhmc::Real;

#[derive(Parser, Debug)]
#[command(name = "pmhmc", version, about = "Pseudo-marginal HMC experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a data set and write it as CSV.
    Generate(Common),
    /// Run one chain; writes the post-burn-in draws and a summary.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Also write the importance weights of the initial state.
        #[arg(long)]
        dump_weights: bool,
        /// Also write one extended-dynamics trajectory from the initial state.
        #[arg(long)]
        trace: bool,
    },
    /// Flow-error study on the Gaussian model.
    Convergence(Common),
    /// Autocorrelation, ESS, KS and mode-occupancy report for a chain CSV.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Chain to analyse (default: <out>/chain.csv).
        #[arg(long)]
        chain: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Importance sample size; repeat for several sizes in `convergence`.
    #[arg(long = "n")]
    n: Vec<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures before any computation starts exit with 1, later ones with 2.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load(common: &Common, multi_n: bool) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&common.config)
        .with_context(|| format!("reading config {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.sampler.seed = seed;
    }
    match (common.n.as_slice(), multi_n) {
        ([], _) => {}
        (ns, true) => cfg.convergence.sample_sizes = ns.to_vec(),
        ([n], false) => cfg.sampler.n = *n,
        (_, false) => bail!("--n may be given once for this subcommand"),
    }
    if let Some(h) = common.h {
        cfg.sampler.integrator.step_size = h;
    }
    if let Some(l) = common.steps {
        cfg.sampler.integrator.steps = l;
    }
    if let Some(it) = common.iterations {
        cfg.sampler.iterations = it;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.sampler.validate()?;
    cfg.convergence.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    match &cfg.data {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening data {}", path.display()))?;
            Ok(io::read_dataset(f).with_context(|| format!("parsing data {}", path.display()))?)
        }
        None => Ok(cfg.model.generate(cfg.effective_data_seed())?),
    }
}

fn load_model(cfg: &ExperimentConfig) -> Result<AnyModel<f64>> {
    Ok(cfg.model.build(&load_data(cfg)?)?)
}

fn generate(cfg: &ExperimentConfig) -> Result<()> {
    let data: Dataset<f64> = cfg.model.generate(cfg.effective_data_seed())?;
    io::write_dataset(create(&cfg.out_dir, "data.csv")?, &data)?;
    info!("wrote {} data to {}", data.len(), cfg.out_dir.join("data.csv").display());
    Ok(())
}

fn sample(cfg: &mut ExperimentConfig, dump_weights: bool, trace: bool) -> Result<()> {
    let model = load_model(cfg)?;
    if cfg.sampler.initial_theta.is_none() {
        cfg.sampler.initial_theta = Some(cfg.model.default_initial_theta(cfg.seed));
    }
    let out = cfg.out_dir.clone();
    if dump_weights || trace {
        let kernel = Kernel::new(&model, &cfg.sampler)?;
        let state = initial_chain_state(&kernel, &cfg.sampler)?;
        if dump_weights {
            let w = weight_matrix(&model, kernel.noise_per_datum(), &state.theta, &state.u)?;
            io::write_weight_matrix(create(&out, "weights.csv")?, &w)?;
        }
        if trace {
            if cfg.sampler.kind != SamplerKind::PmHmc {
                bail!("--trace needs sampler.kind = pm_hmc");
            }
            let mut rng = stream_rng(cfg.seed, 0x7ace);
            let rho = (0..state.theta.len()).map(|_| f64::std_normal(&mut rng)).collect();
            let p = (0..state.u.len()).map(|_| f64::std_normal(&mut rng)).collect();
            let mut ext = ExtendedState::new(state.theta.clone(), rho, state.u.clone(), p)?;
            let mut sys = PseudoMarginalSystem::new(&model, cfg.sampler.n)?;
            let ig = &cfg.sampler.integrator;
            let (points, _) = sys.trace_strang(&mut ext, ig.step_size, ig.steps)?;
            io::write_trace(create(&out, "trace.csv")?, &points)?;
        }
    }
    let chain = run_chain(&model, &cfg.sampler)?;
    info!("chain finished in {:.2}s", chain.stats.elapsed.as_secs_f64());
    let kept: Vec<_> = chain.post_burn_in().cloned().collect();
    io::write_chain(create(&out, "chain.csv")?, &kept)?;
    let mut summary = chain.summary();
    summary.push_str(&format!(
        "step size {}  proposal scales {:?}\n",
        chain.stats.step_size, chain.stats.proposal_scales
    ));
    write_text(&out, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

fn convergence(cfg: &ExperimentConfig) -> Result<()> {
    let AnyModel::Gaussian(model) = load_model(cfg)? else {
        unreachable!("checked before running")
    };
    let exp = flow_error_experiment(&model, &cfg.convergence)?;
    io::write_flow_errors(create(&cfg.out_dir, "flow_errors.csv")?, &exp.samples)?;
    let mut report = String::new();
    for d in &exp.dropped {
        report.push_str(&format!("dropped N={} seed={}: {}\n", d.n, d.seed, d.reason));
    }
    for (n, med) in median_by_n(&exp.samples) {
        report.push_str(&format!("N {n:>6}  median sup error {med:.6e}\n"));
    }
    let fit = fit_slope(&exp.samples)?;
    report.push_str(&format!("slope {:.4}  intercept {:.4}\n", fit.slope, fit.intercept));
    write_text(&cfg.out_dir, "slope.txt", &report)?;
    print!("{report}");
    if cfg.write_fans {
        let dir = cfg.out_dir.join("fans");
        for &n in &cfg.convergence.sample_sizes {
            for seed in 0..cfg.convergence.seeds {
                let fan = flow_trajectory(&model, n, seed, &cfg.convergence)?;
                io::write_fan(create(&dir, &format!("fan_n{n}_seed{seed}.csv"))?, &fan)?;
            }
        }
    }
    Ok(())
}

fn diagnose(cfg: &ExperimentConfig, chain: Option<PathBuf>) -> Result<()> {
    let path = chain.unwrap_or_else(|| cfg.out_dir.join("chain.csv"));
    let f = File::open(&path).with_context(|| format!("opening chain {}", path.display()))?;
    let records = io::read_chain::<f64, _>(f).with_context(|| format!("parsing {}", path.display()))?;
    let model = load_model(cfg)?;
    let target = match &model {
        AnyModel::Gaussian(m) => {
            let post = m.posterior();
            Some((post.mean, post.sd()))
        }
        _ => None,
    };
    let regions = match cfg.model {
        ModelSpec::Diffraction(_) => cfg.diagnose.regions.as_slice(),
        _ => &[],
    };
    let report = diagnose_chain(
        &records,
        &model.parameter_names(),
        cfg.diagnose.max_lag,
        target,
        regions,
    )?;
    let mut acf = csv::Writer::from_writer(create(&cfg.out_dir, "acf.csv")?);
    let mut header = vec!["lag".to_string()];
    header.extend(report.parameters.iter().map(|p| p.name.clone()));
    acf.write_record(&header)?;
    let lags = report.parameters.iter().map(|p| p.acf.len()).max().unwrap_or(0);
    for lag in 0..lags {
        let mut row = vec![lag.to_string()];
        row.extend(
            report
                .parameters
                .iter()
                .map(|p| p.acf.get(lag).map_or_else(String::new, |v| v.to_string())),
        );
        acf.write_record(&row)?;
    }
    acf.flush()?;
    let text = report.to_string();
    write_text(&cfg.out_dir, "diagnostics.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = |common: &Common, multi| load(common, multi).map_err(Failure::Config);
    let runtime = |r: Result<()>| r.map_err(Failure::Runtime);
    match cli.command {
        Command::Generate(common) => runtime(generate(&config(&common, false)?)),
        Command::Sample {
            common,
            dump_weights,
            trace,
        } => {
            let mut cfg = config(&common, false)?;
            runtime(sample(&mut cfg, dump_weights, trace))
        }
        Command::Convergence(common) => {
            let cfg = config(&common, true)?;
            if !matches!(cfg.model, ModelSpec::Gaussian(_)) {
                return Err(Failure::Config(anyhow::anyhow!(
                    "convergence needs model.name = \"gaussian\" (exact flow known only there)"
                )));
            }
            runtime(convergence(&cfg))
        }
        Command::Diagnose { common, chain } => runtime(diagnose(&config(&common, false)?, chain)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
