//! `deltavar` — delta-power-variation statistics for stochastic PDE
//! parameter estimation: limit-theory constants, exact path simulation,
//! spectral field simulation, estimation from observed slices, Monte Carlo
//! experiments, and CLT validation.

use anyhow::{Context, Result};
use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use deltavar::constants::CltConstants;
use deltavar::estimators::{
    estimate_sigma_q_bounded, estimate_sigma_whole_line, estimate_theta_bounded,
    estimate_theta_whole_line, select_order, EstimateTarget, EstimationInput, EstimationResult,
    Geometry, KnownParameter,
};
use deltavar::fbm::IteratedFbmSampler;
use deltavar::rng::Replication;
use deltavar::spde::{
    evaluate_field, simulate_linear_dirichlet, simulate_semilinear_dirichlet, simulate_whole_line,
    Nonlinearity, SpatialDomain, SpdeModel,
};
use deltavar_cli::config::ExperimentConfig;
use deltavar_cli::experiment::{run_clt_check, run_mc_experiment, write_experiment_outputs};
use deltavar_cli::io::{read_grid_csv, render_json, write_grid_csv, Json};
use deltavar_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "deltavar",
    version,
    about = "Delta-power-variation statistics for stochastic PDE parameter estimation",
    long_about = "Simulation and estimation built on power variations of higher-order \
                  finite differences: exact fractional path samplers, spectral \
                  field samplers, bias-aware drift/volatility estimators, and the \
                  limit-theory constants that calibrate them.\n\n\
                  Exit codes: 0 success; 2 invalid parameters or malformed input; \
                  3 numerical failure or diverging simulation; 4 Monte Carlo failure \
                  budget exceeded; 1 other (I/O) errors."
)]
struct Cli {
    /// Base RNG seed; identical seeds reproduce identical output bytes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for replication-level parallelism (0 = one per core).
    /// The result does not depend on the thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Override the output directory of `mc-experiment` configs.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Experiment configuration file (TOML) for `mc-experiment`.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the limit-theory constants for one parameter set as JSON.
    ///
    /// Reports the absolute moment tau_q, the difference variance mu_{M,s},
    /// the correlation sequence rho_{M,s} at lags 1..20, the summed powers
    /// rho^2_{k,M,s}, the limit variance sigma^2_{q,M,s}, the spectral
    /// normalization nu_H, and (when --alpha/--gamma are given) the spatial
    /// matching constant c_{alpha,gamma,m}. Entries whose defining series
    /// diverges are null.
    Constants {
        /// Power of the variation statistic.
        #[arg(long)]
        q: u32,
        /// Difference order M.
        #[arg(long = "M", value_name = "ORDER")]
        order: usize,
        /// Integration order m (regularity s = m + H).
        #[arg(long)]
        m: u32,
        /// Hurst index H in (0, 1).
        #[arg(long = "H", value_name = "HURST")]
        hurst: f64,
        /// Order of the fractional Laplacian (enables the matching constant;
        /// requires --gamma).
        #[arg(long, requires = "gamma")]
        alpha: Option<f64>,
        /// Noise smoothing exponent (enables the matching constant;
        /// requires --alpha).
        #[arg(long, requires = "alpha")]
        gamma: Option<f64>,
    },

    /// Sample an m-times integrated fractional Brownian path to CSV.
    ///
    /// The path is drawn exactly (Cholesky factorization of the true
    /// covariance) on n + 1 equally spaced points of [a, b] and written as
    /// `t,value` rows.
    SimulateFbm {
        /// Number of antiderivatives applied to the fractional path.
        #[arg(long)]
        m: u32,
        /// Hurst index H in (0, 1).
        #[arg(long = "H", value_name = "HURST")]
        hurst: f64,
        /// Left endpoint of the time interval.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        a: f64,
        /// Right endpoint of the time interval.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        b: f64,
        /// Number of grid intervals (the path has n + 1 samples).
        #[arg(long)]
        n: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Simulate a spatial slice of the stochastic heat-type equation to CSV.
    ///
    /// On the unit interval the linear equation is sampled exactly in the
    /// sine basis (a nonzero nonlinearity switches to an exponential Euler
    /// scheme in time); on the whole line the stationary solution is
    /// synthesized from its spectral measure on a frequency quadrature.
    SimulateSpde {
        /// Dissipation coefficient theta > 0.
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        /// Noise level sigma > 0.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Order of the fractional Laplacian alpha > 0.
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        /// Noise smoothing exponent gamma >= 0.
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        /// Nonlinearity: "zero", "poly:c0,c1,...", or "advection:v".
        #[arg(long, default_value = "zero", value_parser = parse_nonlinearity)]
        nonlinearity: Nonlinearity,
        /// Snapshot time t > 0.
        #[arg(long)]
        t: f64,
        /// Spectral modes for unit-interval simulation.
        #[arg(long, default_value_t = 1 << 14)]
        n_modes: usize,
        /// Time steps of the exponential Euler scheme (nonzero
        /// nonlinearity only).
        #[arg(long, default_value_t = 256)]
        n_time_steps: usize,
        /// Spatial domain of the equation.
        #[arg(long, value_enum, default_value_t = DomainArg::Dirichlet)]
        domain: DomainArg,
        /// Observation window "xmin,xmax" (inside [0, 1] on the unit
        /// interval; any interval on the whole line).
        #[arg(long, default_value = "0,1", value_parser = parse_pair, allow_hyphen_values = true)]
        window: (f64, f64),
        /// Frequency cutoff of the whole-line spectral quadrature.
        #[arg(long, default_value_t = 4096.0)]
        xi_cut: f64,
        /// Number of quadrature nodes on [0, xi_cut] (whole line).
        #[arg(long, default_value_t = 1 << 14)]
        n_xi: usize,
        /// Number of spatial samples written (n_points - 1 intervals).
        #[arg(long)]
        n_points: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },

    /// Estimate the drift or the volatility from an observed slice (CSV).
    ///
    /// Reads `t,value` rows on a uniform grid, computes the delta-power
    /// variation of order-M differences, inverts its limit around the known
    /// nuisance parameter, and prints the bias-corrected estimate with its
    /// delta-method standard error and 95% confidence interval as JSON.
    #[command(group = ArgGroup::new("order_choice").required(true).args(["order", "auto_m"]))]
    Estimate {
        /// Input CSV of `t,value` rows on a uniform grid.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Power of the variation statistic (even q gives confidence
        /// intervals).
        #[arg(long, default_value_t = 2)]
        q: u32,
        /// Difference order M (must exceed s*).
        #[arg(long = "M", value_name = "ORDER")]
        order: Option<usize>,
        /// Choose the difference order automatically from s*.
        #[arg(long = "auto-M")]
        auto_m: bool,
        /// Regularity s* of the observed field.
        #[arg(long)]
        s_star: f64,
        /// Known nuisance parameter, "theta=VALUE" or "sigma=VALUE"; the
        /// other parameter is estimated.
        #[arg(long, value_parser = parse_known)]
        known: KnownParameter,
        /// Geometry: "dirichlet" or "whole-line:alpha,gamma,m".
        #[arg(long, default_value = "dirichlet", value_parser = parse_geometry)]
        geometry: Geometry,
    },

    /// Run a Monte Carlo estimation experiment from a TOML config.
    ///
    /// Simulates the configured equation across replications and
    /// resolutions, estimates the target on every slice, and writes
    /// `summary.json`, `replications.csv`, plot data, and `plot.svg` to the
    /// output directory. Replication r uses seed `seed_base + r`, so runs
    /// are reproducible replication-by-replication. Exits with code 4 if
    /// more than 10% of the estimates fail (outputs are still written).
    McExperiment,

    /// Validate the Gaussian fluctuation limit of the variation statistic.
    ///
    /// Draws exact fractional paths, computes the standardized statistic
    /// sqrt(N) (V - tau_q mu^{q/2}) / (sigma_{q,M,s} mu^{q/2}) for each, and
    /// prints moments plus a Kolmogorov-Smirnov comparison against the
    /// standard normal as JSON. The process exits 0 whenever the check runs;
    /// the statistical verdict is the `pass` field of the report.
    CltCheck {
        /// Number of antiderivatives applied to the fractional path.
        #[arg(long)]
        m: u32,
        /// Hurst index H in (0, 1).
        #[arg(long = "H", value_name = "HURST")]
        hurst: f64,
        /// Difference order M.
        #[arg(long = "M", value_name = "ORDER")]
        order: usize,
        /// Power of the variation statistic (even, for a finite limit
        /// variance).
        #[arg(long)]
        q: u32,
        /// Grid intervals per path.
        #[arg(long)]
        n: usize,
        /// Number of independent paths.
        #[arg(long, default_value_t = 200)]
        n_replications: usize,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Dirichlet,
    WholeLine,
}

fn parse_nonlinearity(s: &str) -> Result<Nonlinearity, String> {
    if s == "zero" {
        return Ok(Nonlinearity::Zero);
    }
    if let Some(rest) = s.strip_prefix("poly:") {
        let coeffs: Result<Vec<f64>, String> = rest
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("polynomial coefficient is not a number: {c:?}"))
            })
            .collect();
        return Ok(Nonlinearity::Polynomial(coeffs?));
    }
    if let Some(v) = s.strip_prefix("advection:") {
        let velocity: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("advection velocity is not a number: {v:?}"))?;
        return Ok(Nonlinearity::Advection { velocity });
    }
    Err(format!(
        "unknown nonlinearity {s:?}; expected \"zero\", \"poly:c0,c1,...\", or \"advection:v\""
    ))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (first, second) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated numbers, got {s:?}"))?;
    let parse = |part: &str| {
        part.trim()
            .parse::<f64>()
            .map_err(|_| format!("not a number: {part:?}"))
    };
    Ok((parse(first)?, parse(second)?))
}

fn parse_known(s: &str) -> Result<KnownParameter, String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE (e.g. theta=1.0), got {s:?}"))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("not a number: {value:?}"))?;
    match name.trim() {
        "theta" => Ok(KnownParameter::Theta(v)),
        "sigma" => Ok(KnownParameter::Sigma(v)),
        other => Err(format!(
            "unknown parameter {other:?}; the known nuisance is \"theta\" or \"sigma\""
        )),
    }
}

fn parse_geometry(s: &str) -> Result<Geometry, String> {
    if s == "dirichlet" {
        return Ok(Geometry::Dirichlet01);
    }
    if let Some(rest) = s.strip_prefix("whole-line:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(format!(
                "whole-line geometry needs three values \"alpha,gamma,m\", got {rest:?}"
            ));
        }
        let alpha: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| format!("alpha is not a number: {:?}", parts[0]))?;
        let gamma: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| format!("gamma is not a number: {:?}", parts[1]))?;
        let m: u32 = parts[2]
            .trim()
            .parse()
            .map_err(|_| format!("m is not a nonnegative integer: {:?}", parts[2]))?;
        return Ok(Geometry::WholeLine { alpha, gamma, m });
    }
    Err(format!(
        "unknown geometry {s:?}; expected \"dirichlet\" or \"whole-line:alpha,gamma,m\""
    ))
}

fn target_name(target: EstimateTarget) -> &'static str {
    match target {
        EstimateTarget::SigmaPowQ => "sigma-pow-q",
        EstimateTarget::Theta => "theta",
        EstimateTarget::Sigma => "sigma",
    }
}

fn constants_to_json(c: &CltConstants) -> Result<Json> {
    let mut rho = Vec::with_capacity(20);
    for ell in 1..=20u64 {
        rho.push(Json::Num(c.rho(ell)?));
    }
    Ok(Json::Object(vec![
        ("q", Json::Int(c.q as i64)),
        ("order", Json::Int(c.order as i64)),
        ("m", Json::Int(c.m as i64)),
        ("hurst", Json::Num(c.hurst)),
        ("s", Json::Num(c.s)),
        ("tau_q", Json::Num(c.tau_q)),
        ("mu", Json::Num(c.mu)),
        ("nu", Json::num_or_null(c.nu)),
        ("rho", Json::Array(rho)),
        (
            "rho_sq_k",
            Json::Array(c.rho_sq_k.iter().map(|v| Json::num_or_null(*v)).collect()),
        ),
        ("sigma_sq", Json::num_or_null(c.sigma_sq)),
        ("c", Json::num_or_null(c.c)),
    ]))
}

fn estimation_result_to_json(r: &EstimationResult) -> Json {
    let c = &r.constants_used;
    Json::Object(vec![
        ("target", Json::Str(target_name(r.target).into())),
        ("estimate", Json::Num(r.estimate)),
        ("std_error", Json::num_or_null(r.std_error)),
        (
            "ci_95",
            match r.ci_95 {
                Some((lo, hi)) => Json::Array(vec![Json::Num(lo), Json::Num(hi)]),
                None => Json::Null,
            },
        ),
        ("v_stat", Json::Num(r.v_stat)),
        ("clt_valid", Json::Bool(r.clt_valid)),
        (
            "constants",
            Json::Object(vec![
                ("q", Json::Int(c.q as i64)),
                ("order", Json::Int(c.order as i64)),
                ("m", Json::Int(c.m as i64)),
                ("hurst", Json::Num(c.hurst)),
                ("tau_q", Json::Num(c.tau_q)),
                ("mu", Json::Num(c.mu)),
                ("sigma_sq", Json::num_or_null(c.sigma_sq)),
                ("nu", Json::num_or_null(c.nu)),
                ("c", Json::num_or_null(c.c)),
            ]),
        ),
        (
            "diagnostics",
            Json::Array(r.diagnostics.iter().map(|d| Json::Str(d.clone())).collect()),
        ),
    ])
}

fn ensure_parent_dir(path: &std::path::Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        // Ignore "already initialized" so tests can call run() repeatedly.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match cli.command {
        Command::Constants {
            q,
            order,
            m,
            hurst,
            alpha,
            gamma,
        } => {
            let mut constants = CltConstants::new(q, order, m, hurst)?;
            if let (Some(alpha), Some(gamma)) = (alpha, gamma) {
                constants = constants.with_spatial(alpha, gamma)?;
            }
            print!("{}", render_json(&constants_to_json(&constants)?));
            Ok(())
        }

        Command::SimulateFbm {
            m,
            hurst,
            a,
            b,
            n,
            out,
        } => {
            let sampler = IteratedFbmSampler::new(m, hurst, a, b, n + 1)?;
            let mut rng = Replication::new(cli.seed, 0);
            let path = sampler.sample(&mut rng)?;
            ensure_parent_dir(&out)?;
            write_grid_csv(&out, &path)?;
            eprintln!("wrote {} samples to {}", n + 1, out.display());
            Ok(())
        }

        Command::SimulateSpde {
            theta,
            sigma,
            alpha,
            gamma,
            nonlinearity,
            t,
            n_modes,
            n_time_steps,
            domain,
            window,
            xi_cut,
            n_xi,
            n_points,
            out,
        } => {
            let (a, b) = window;
            let field = match domain {
                DomainArg::Dirichlet => {
                    let model = SpdeModel::new(
                        theta,
                        sigma,
                        alpha,
                        gamma,
                        nonlinearity.clone(),
                        SpatialDomain::Dirichlet01,
                    )?;
                    let state = if nonlinearity.is_zero() {
                        simulate_linear_dirichlet(&model, t, n_modes, cli.seed)?
                    } else {
                        simulate_semilinear_dirichlet(&model, t, n_modes, n_time_steps, cli.seed)?
                    };
                    evaluate_field(&model, &state, a, b, n_points)?
                }
                DomainArg::WholeLine => {
                    let model = SpdeModel::new(
                        theta,
                        sigma,
                        alpha,
                        gamma,
                        nonlinearity.clone(),
                        SpatialDomain::WholeLine,
                    )?;
                    simulate_whole_line(&model, t, (a, b), n_points, (xi_cut, n_xi), cli.seed)?
                }
            };
            if let Some(meta) = &field.metadata {
                if meta.tail_warning {
                    eprintln!(
                        "warning: the truncated spectral tail ({:.3e}) is not negligible against \
                         the field variance ({:.3e}); increase the frequency cutoff",
                        meta.tail_integral, meta.spectral_variance
                    );
                }
            }
            ensure_parent_dir(&out)?;
            write_grid_csv(&out, &field.values)?;
            eprintln!("wrote {} samples to {}", n_points, out.display());
            Ok(())
        }

        Command::Estimate {
            input,
            q,
            order,
            auto_m,
            s_star,
            known,
            geometry,
        } => {
            let observations = read_grid_csv(&input)?;
            let order = match order {
                Some(order) => order,
                None => {
                    debug_assert!(auto_m, "clap group guarantees one choice");
                    select_order(s_star)?
                }
            };
            let input = EstimationInput::new(observations, q, order, s_star, known, geometry)?;
            let result = match (geometry, known) {
                (Geometry::Dirichlet01, KnownParameter::Theta(_)) => {
                    estimate_sigma_q_bounded(&input)?
                }
                (Geometry::Dirichlet01, KnownParameter::Sigma(_)) => {
                    estimate_theta_bounded(&input)?
                }
                (Geometry::WholeLine { .. }, KnownParameter::Theta(_)) => {
                    estimate_sigma_whole_line(&input)?
                }
                (Geometry::WholeLine { .. }, KnownParameter::Sigma(_)) => {
                    estimate_theta_whole_line(&input)?
                }
            };
            print!("{}", render_json(&estimation_result_to_json(&result)));
            Ok(())
        }

        Command::McExperiment => {
            let config_path = cli.config.as_deref().ok_or_else(|| {
                CliError::InvalidArguments(
                    "mc-experiment needs --config pointing at an experiment TOML file".into(),
                )
            })?;
            let config = ExperimentConfig::load(config_path)?;
            let out_dir = cli.out_dir.as_deref().unwrap_or(&config.output_dir);
            let results = run_mc_experiment(&config)?;
            let summary_path = write_experiment_outputs(&config, &results, out_dir)?;
            print!(
                "{}",
                render_json(&deltavar_cli::experiment::summary_to_json(&config, &results))
            );
            eprintln!("wrote {}", summary_path.display());
            if results.summary.failure_budget_exceeded {
                return Err(CliError::ExperimentFailed {
                    failed: results.summary.n_failed_estimates,
                    total: config.resolutions.len() * config.n_replications,
                }
                .into());
            }
            Ok(())
        }

        Command::CltCheck {
            m,
            hurst,
            order,
            q,
            n,
            n_replications,
        } => {
            let report = run_clt_check(m, hurst, order, q, n, n_replications, cli.seed)?;
            print!("{}", render_json(&report.to_json()));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(deltavar_cli::exit_code_for(&err))
        }
    }
}
