use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use hashpop::dataset::{dataset_bytes, load_dataset, Format};
use hashpop::error::{Error, Result};
use hashpop::fitting::{empirical_popularity, initial_guess, lm_fit_gamma, moving_average, LmOptions};
use hashpop::model::{DegreeDistribution, NetworkParams, PopularitySpec};
use hashpop::moments::{asymptotic_moments, confidence_band};
use hashpop::output::{
    curves_csv, ensemble_csv, moments_csv, pmf_csv, popularity_csv, render_svg, report_json,
    trace_csv, write_atomic,
};
use hashpop::pipeline::{compute_network_params, default_bins, synthesize_dataset, validate, ValidateOptions};
use hashpop::simulator::{
    ensemble_statistics, evolve_master_equation, simulate_events, simulate_micro,
    MasterEquationConfig,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_NON_CONVERGENCE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "hashpop", version, about = "Master-equation model of hashtag popularity")]
struct Cli {
    #[command(flatten)]
    shared: SharedArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SharedArgs {
    /// key=value file mirroring the long flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Popularity bins (default: min(200, max(20, records/50))).
    #[arg(long, global = true)]
    bins: Option<usize>,
    /// Odd moving-average window.
    #[arg(long = "smooth-k", global = true)]
    smooth_k: Option<usize>,
    /// Confidence level of the band.
    #[arg(long, global = true)]
    level: Option<f64>,
    /// csv or jsonl.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Community size N.
    #[arg(long = "n-users")]
    n_users: Option<u64>,
    /// constant:C | gamma:A,B,C | table:T1:R1,T2:R2,...
    #[arg(long)]
    popularity: Option<String>,
    /// degenerate:K | discrete:K1:P1,K2:P2,... | empirical:K1,K2,... |
    /// lognormal:MU,SIGMA | pareto:ALPHA,M
    #[arg(long)]
    degree: Option<String>,
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Events,
    Micro,
    Master,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        <Method as ValueEnum>::from_str(s, true).map_err(Error::InvalidParameter)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the read-count process.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Ensemble size; above 1 writes ensemble statistics instead of a trace.
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long = "grid-points")]
        grid_points: Option<usize>,
        /// Step of the micro-simulation or of the RK4 integrator.
        #[arg(long)]
        dt: Option<f64>,
        /// State-space truncation for the master equation.
        #[arg(long = "x-max")]
        x_max: Option<usize>,
    },
    /// Generate a synthetic tweet-record dataset.
    Synth {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Fit the gamma popularity kernel to a dataset.
    Fit {
        input: PathBuf,
        /// Fit the raw instead of the smoothed popularity.
        #[arg(long)]
        raw: bool,
    },
    /// Evaluate analytic moments and the band on a grid.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "grid-points")]
        grid_points: Option<usize>,
    },
    /// Run the full calibration and validation pipeline on a dataset.
    Validate {
        input: PathBuf,
        #[arg(long)]
        raw: bool,
        /// Community size used instead of the count of active users.
        #[arg(long = "n-users")]
        n_users: Option<u64>,
        /// Also render figure.svg.
        #[arg(long)]
        svg: bool,
    },
}

/// Flag values from an optional config file.
struct Config(BTreeMap<String, String>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() || line.starts_with('[') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .or_else(|| line.split_once(':'))
                    .ok_or_else(|| {
                        Error::Schema(format!("{}:{}: expected key = value", path.display(), i + 1))
                    })?;
                let key = k.trim().trim_start_matches("--").replace('_', "-");
                let value = v.trim().trim_matches('"').to_string();
                map.insert(key, value);
            }
        }
        Ok(Self(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Schema(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    /// Flag value, else config value, else default.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }
}

fn numbers(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("{s:?}: {e}")))
        })
        .collect()
}

fn parse_popularity(text: &str) -> Result<PopularitySpec> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("popularity {text:?} needs KIND:PARAMS")))?;
    match kind {
        "constant" => PopularitySpec::constant(numbers(rest)?[0]),
        "gamma" => match numbers(rest)?.as_slice() {
            [a, b, c] => PopularitySpec::gamma_kernel(*a, *b, *c),
            _ => Err(Error::InvalidParameter("gamma popularity needs A,B,C".into())),
        },
        "table" => {
            let mut times = Vec::new();
            let mut rates = Vec::new();
            for knot in rest.split(',') {
                let (t, r) = knot
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidParameter(format!("knot {knot:?} needs T:R")))?;
                times.push(numbers(t)?[0]);
                rates.push(numbers(r)?[0]);
            }
            PopularitySpec::tabulated(times, rates)
        }
        other => Err(Error::InvalidParameter(format!("unknown popularity kind {other:?}"))),
    }
}

fn integers(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::InvalidParameter(format!("{s:?}: {e}")))
        })
        .collect()
}

fn parse_degree(text: &str) -> Result<DegreeDistribution> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameter(format!("degree law {text:?} needs KIND:PARAMS")))?;
    let dist = match kind {
        "degenerate" => DegreeDistribution::Degenerate { k: integers(rest)?[0] },
        "discrete" => {
            let mut support = Vec::new();
            let mut probs = Vec::new();
            for item in rest.split(',') {
                let (k, p) = item
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidParameter(format!("{item:?} needs K:P")))?;
                support.push(integers(k)?[0]);
                probs.push(numbers(p)?[0]);
            }
            DegreeDistribution::Discrete { support, probs }
        }
        "empirical" => DegreeDistribution::EmpiricalSample { counts: integers(rest)? },
        "lognormal" => match numbers(rest)?.as_slice() {
            [mu, sigma] => DegreeDistribution::LogNormalDiscretized { mu: *mu, sigma: *sigma },
            _ => return Err(Error::InvalidParameter("lognormal needs MU,SIGMA".into())),
        },
        "pareto" => match numbers(rest)?.as_slice() {
            [alpha, m] => DegreeDistribution::ParetoDiscrete {
                alpha: *alpha,
                m_min: *m as u64,
            },
            _ => return Err(Error::InvalidParameter("pareto needs ALPHA,M".into())),
        },
        other => return Err(Error::InvalidParameter(format!("unknown degree law {other:?}"))),
    };
    dist.validate()?;
    Ok(dist)
}

struct Model {
    params: NetworkParams,
    spec: PopularitySpec,
    dist: DegreeDistribution,
    horizon: f64,
}

fn resolve_model(args: ModelArgs, cfg: &Config) -> Result<Model> {
    let n_users = cfg.pick(args.n_users, "n-users", 1000)?;
    let popularity: String = cfg.pick(args.popularity, "popularity", "gamma:2,1,0.1".to_string())?;
    let degree: String = cfg.pick(args.degree, "degree", "degenerate:1".to_string())?;
    let spec = parse_popularity(&popularity)?;
    let dist = parse_degree(&degree)?;
    let horizon = match cfg.pick_opt(args.horizon, "horizon")? {
        Some(h) => h,
        None => match &spec {
            PopularitySpec::GammaKernel { .. } => {
                let l = spec.landmarks()?;
                l.t_inf + 4.0 * (l.t_inf - l.t_max)
            }
            PopularitySpec::Tabulated { times, .. } => times[times.len() - 1],
            PopularitySpec::Constant { .. } => 10.0,
        },
    };
    Ok(Model {
        params: NetworkParams::from_degree(n_users, &dist)?,
        spec,
        dist,
        horizon,
    })
}

fn grid(horizon: f64, points: usize) -> Vec<f64> {
    let points = points.max(1);
    (1..=points).map(|i| horizon * i as f64 / points as f64).collect()
}

fn input_format(cfg: &Config, shared: &Option<String>, path: &Path) -> Result<Format> {
    match cfg.pick_opt(shared.clone(), "format")? {
        Some(f) => f.parse(),
        None => Ok(Format::from_path(path)),
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = Config::load(cli.shared.config.as_deref())?;
    let shared = &cli.shared;
    let seed = cfg.pick(shared.seed, "seed", 42u64)?;
    let out_dir: PathBuf = cfg.pick(shared.out_dir.clone(), "out-dir", PathBuf::from("."))?;
    let level = cfg.pick(shared.level, "level", 0.95)?;
    let smooth_k = cfg.pick(shared.smooth_k, "smooth-k", 5usize)?;
    let bins = cfg.pick_opt(shared.bins, "bins")?;

    match cli.command {
        Command::Simulate {
            model,
            method,
            replications,
            grid_points,
            dt,
            x_max,
        } => {
            let m = resolve_model(model, &cfg)?;
            let method = cfg.pick(method, "method", Method::Events)?;
            let replications = cfg.pick(replications, "replications", 1usize)?;
            let times = grid(m.horizon, cfg.pick(grid_points, "grid-points", 20usize)?);
            let dt = cfg.pick_opt(dt, "dt")?;
            match method {
                Method::Master => {
                    let x_max = cfg.pick_opt(x_max, "x-max")?.unwrap_or_else(|| {
                        let mean = hashpop::moments::mean_reads(&m.params, &m.spec, m.horizon).unwrap_or(0.0);
                        let var = hashpop::moments::variance_reads(&m.params, &m.spec, m.horizon).unwrap_or(0.0);
                        (mean + 12.0 * var.sqrt()).ceil() as usize + 50
                    });
                    let mut config = MasterEquationConfig::new(x_max);
                    config.dt = dt;
                    let mut with_origin = vec![0.0];
                    with_origin.extend(&times);
                    let pmf = evolve_master_equation(&m.params, &m.spec, &m.dist, &with_origin, config)?;
                    write_atomic(&out_dir.join("pmf.csv"), pmf_csv(&pmf).as_bytes())?;
                }
                Method::Events | Method::Micro if replications > 1 => {
                    if matches!(method, Method::Micro) {
                        return Err(Error::InvalidParameter(
                            "ensembles use the event-level generator; drop --method micro".into(),
                        ));
                    }
                    let stats = ensemble_statistics(&m.params, &m.spec, &m.dist, m.horizon, &times, replications, seed)?;
                    let curves = confidence_band(&m.params, &m.spec, &times, 0.0)?;
                    let csv = ensemble_csv(&stats, &curves.mean, &curves.variance);
                    write_atomic(&out_dir.join("ensemble.csv"), csv.as_bytes())?;
                }
                Method::Events => {
                    let trace = simulate_events(&m.params, &m.spec, &m.dist, m.horizon, seed)?;
                    write_atomic(&out_dir.join("trace.csv"), trace_csv(&trace).as_bytes())?;
                }
                Method::Micro => {
                    let w_max = m.spec.peak_rate(m.horizon)?;
                    let dt = dt.unwrap_or_else(|| {
                        if w_max > 0.0 {
                            0.01 / (m.params.n() * w_max)
                        } else {
                            m.horizon / 1000.0
                        }
                    });
                    let trace = simulate_micro(&m.params, &m.spec, &m.dist, dt, m.horizon, seed)?;
                    write_atomic(&out_dir.join("trace.csv"), trace_csv(&trace).as_bytes())?;
                }
            }
            Ok(0)
        }
        Command::Synth { model } => {
            let m = resolve_model(model, &cfg)?;
            let format: Format = cfg.pick_opt(shared.format.clone(), "format")?
                .map(|f| f.parse())
                .transpose()?
                .unwrap_or(Format::Csv);
            let ds = synthesize_dataset(&m.params, &m.spec, &m.dist, m.horizon, seed)?;
            let path = out_dir.join(format!("dataset.{}", format.extension()));
            write_atomic(&path, &dataset_bytes(&ds, format)?)?;
            Ok(0)
        }
        Command::Fit { input, raw } => {
            let format = input_format(&cfg, &shared.format, &input)?;
            let ds = load_dataset(&input, format)?;
            let raw = cfg.flag(raw, "raw")?;
            let network = compute_network_params(&ds)?;
            let n_bins = bins.unwrap_or_else(|| default_bins(ds.len()));
            let w_raw = empirical_popularity(&ds.records, network.n_users, n_bins)?;
            let w_smooth = moving_average(&w_raw, smooth_k)?;
            let target = if raw { &w_raw } else { &w_smooth };
            let fit = lm_fit_gamma(target, initial_guess(target)?, LmOptions::default())?;
            let mut csv = String::from("t,w_raw,w_smooth,w_fit\n");
            for i in 0..w_raw.len() {
                let t = w_raw.times[i];
                csv += &format!("{},{},{},{}\n", t, w_raw.values[i], w_smooth.values[i], fit.predict(t));
            }
            write_atomic(&out_dir.join("w.csv"), csv.as_bytes())?;
            write_json(
                &out_dir.join("fit.json"),
                &json!({ "network": network, "n_bins": n_bins, "smooth_k": smooth_k, "fit": fit }),
            )?;
            Ok(if fit.converged { 0 } else { EXIT_NON_CONVERGENCE })
        }
        Command::Moments { model, grid_points } => {
            let m = resolve_model(model, &cfg)?;
            let mut times = vec![0.0];
            times.extend(grid(m.horizon, cfg.pick(grid_points, "grid-points", 100usize)?));
            let curves = confidence_band(&m.params, &m.spec, &times, level)?;
            write_atomic(&out_dir.join("moments.csv"), moments_csv(&curves).as_bytes())?;
            let limits = asymptotic_moments(&m.params, &m.spec).ok();
            let landmarks = m.spec.landmarks().ok();
            write_json(
                &out_dir.join("moments.json"),
                &json!({
                    "network": m.params,
                    "popularity": m.spec,
                    "landmarks": landmarks,
                    "asymptotics": limits,
                    "level": level,
                }),
            )?;
            Ok(0)
        }
        Command::Validate { input, raw, n_users, svg } => {
            let format = input_format(&cfg, &shared.format, &input)?;
            let ds = load_dataset(&input, format)?;
            let options = ValidateOptions {
                n_bins: bins,
                smooth_k,
                level,
                fit_raw: cfg.flag(raw, "raw")?,
                n_users: cfg.pick_opt(n_users, "n-users")?,
                lm: LmOptions::default(),
            };
            let report = validate(&ds, &options)?;
            write_atomic(&out_dir.join("report.json"), &report_json(&report)?)?;
            write_atomic(&out_dir.join("curves.csv"), curves_csv(&report).as_bytes())?;
            write_atomic(&out_dir.join("w.csv"), popularity_csv(&report).as_bytes())?;
            if cfg.flag(svg, "svg")? {
                write_atomic(&out_dir.join("figure.svg"), render_svg(&report).as_bytes())?;
            }
            if !report.converged {
                log::warn!("popularity fit did not converge in {} iterations", report.fit.iterations);
                return Ok(EXIT_NON_CONVERGENCE);
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = if err.is_schema() {
                EXIT_SCHEMA
            } else if err.is_non_convergence() {
                EXIT_NON_CONVERGENCE
            } else {
                EXIT_FAILURE
            };
            ExitCode::from(code)
        }
    }
}
