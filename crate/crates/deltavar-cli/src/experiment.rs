//! Monte Carlo experiment orchestration and CLT validation.
//!
//! [`run_mc_experiment`] simulates the configured equation across
//! replications and resolutions, estimates the target parameter on every
//! cell, and aggregates bias/spread/RMSE per resolution plus an empirical
//! convergence rate. [`write_experiment_outputs`] serializes the results
//! (summary JSON, per-replication CSV, plot data, and an SVG chart) with
//! byte-identical output for identical inputs.
//!
//! [`run_clt_check`] validates the Gaussian fluctuation limit of the
//! delta-power variation directly on exactly sampled paths.

use crate::config::{DomainConfig, ExperimentConfig, TargetConfig};
use crate::io::{render_json, Json};
use crate::CliError;
use anyhow::{Context, Result};
use deltavar::constants::CltConstants;
use deltavar::error::Error;
use deltavar::estimators::{
    estimate_sigma_q_bounded, estimate_sigma_whole_line, estimate_theta_bounded,
    estimate_theta_whole_line, EstimationInput, Geometry, KnownParameter,
};
use deltavar::fbm::IteratedFbmSampler;
use deltavar::findiff::{delta_power_variation, GridFunction, VariationParams};
use deltavar::rng::Replication;
use deltavar::spde::{
    evaluate_field, simulate_linear_dirichlet, simulate_semilinear_dirichlet, simulate_whole_line,
    SpdeModel,
};
use deltavar::special::{ks_test_standard_normal, linear_fit};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::Path;

/// One successful (replication, resolution) estimate.
#[derive(Debug, Clone, Copy)]
pub struct ReplicationCell {
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub ci_95: Option<(f64, f64)>,
}

/// Outcome of one estimation cell: an estimate, or the reason it failed.
pub type CellResult = std::result::Result<ReplicationCell, String>;

/// Aggregated statistics of one resolution across replications.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    /// Number of grid intervals `N`.
    pub n: usize,
    /// Grid spacing `(b - a) / N`.
    pub h: f64,
    /// Replications whose estimate failed at this resolution.
    pub n_failures: usize,
    /// Mean estimate over successful replications (NaN if none).
    pub mean_estimate: f64,
    /// Population standard deviation over successful replications, so that
    /// `rmse^2 = (mean - true)^2 + sd^2` holds exactly.
    pub empirical_sd: f64,
    /// Root mean squared error about the true value.
    pub rmse: f64,
    /// Mean of the per-replication delta-method standard errors; absent
    /// when the estimator reports none.
    pub mean_std_error: Option<f64>,
    /// Fraction of 95% confidence intervals containing the true value;
    /// absent when the Gaussian limit does not apply.
    pub coverage_95: Option<f64>,
}

/// Empirical convergence rate from regressing `ln rmse` on `ln h`.
#[derive(Debug, Clone, Copy)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Aggregated experiment results.
#[derive(Debug, Clone)]
pub struct McSummary {
    pub target: TargetConfig,
    pub true_value: f64,
    pub rows: Vec<SummaryRow>,
    pub rate_fit: Option<RateFit>,
    /// Total failed estimation cells across all resolutions.
    pub n_failed_estimates: usize,
    /// Whether failures exceeded the 10% budget.
    pub failure_budget_exceeded: bool,
}

/// Full experiment results: the summary plus every cell, indexed as
/// `cells[resolution][replication]`.
#[derive(Debug, Clone)]
pub struct McResults {
    pub summary: McSummary,
    pub cells: Vec<Vec<CellResult>>,
}

fn estimator_for(
    target: TargetConfig,
    domain: DomainConfig,
) -> fn(&EstimationInput) -> deltavar::error::Result<deltavar::estimators::EstimationResult> {
    match (target, domain) {
        (TargetConfig::Theta, DomainConfig::Dirichlet01) => estimate_theta_bounded,
        (TargetConfig::Theta, DomainConfig::WholeLine) => estimate_theta_whole_line,
        (TargetConfig::SigmaPowQ, DomainConfig::Dirichlet01) => estimate_sigma_q_bounded,
        (TargetConfig::Sigma, DomainConfig::WholeLine) => estimate_sigma_whole_line,
        // Ruled out by configuration validation.
        (TargetConfig::SigmaPowQ, DomainConfig::WholeLine)
        | (TargetConfig::Sigma, DomainConfig::Dirichlet01) => {
            unreachable!("target/domain mismatch survived validation")
        }
    }
}

fn estimate_cell(
    observations: GridFunction,
    config: &ExperimentConfig,
    order: usize,
    s_star: f64,
    known: KnownParameter,
    geometry: Geometry,
) -> deltavar::error::Result<ReplicationCell> {
    let input = EstimationInput::new(observations, config.q, order, s_star, known, geometry)?;
    let result = estimator_for(config.target, config.model.domain)(&input)?;
    Ok(ReplicationCell {
        estimate: result.estimate,
        std_error: result.std_error,
        ci_95: result.ci_95,
    })
}

/// Simulates and estimates one replication at every resolution.
///
/// On the unit interval the spectral coefficients are drawn once and the
/// field is evaluated on each grid, so coarser resolutions observe exactly
/// the same realization. On the whole line the sampler draws its spectral
/// amplitudes independently of the evaluation grid, so reusing the seed
/// across resolutions observes one realization at different resolutions
/// there as well.
fn run_one_replication(
    config: &ExperimentConfig,
    model: &SpdeModel,
    order: usize,
    s_star: f64,
    known: KnownParameter,
    geometry: Geometry,
    rep: u64,
) -> Vec<CellResult> {
    let seed = config.seed_base.wrapping_add(rep);
    let [a, b] = config.window;
    match config.model.domain {
        DomainConfig::Dirichlet01 => {
            let state = if model.nonlinearity().is_zero() {
                simulate_linear_dirichlet(model, config.t_obs, config.n_modes, seed)
            } else {
                let steps = config.n_time_steps.unwrap_or(256);
                simulate_semilinear_dirichlet(model, config.t_obs, config.n_modes, steps, seed)
            };
            let state = match state {
                Ok(state) => state,
                Err(e) => return vec![Err(e.to_string()); config.resolutions.len()],
            };
            config
                .resolutions
                .iter()
                .map(|&n| {
                    evaluate_field(model, &state, a, b, n + 1)
                        .and_then(|field| {
                            estimate_cell(field.values, config, order, s_star, known, geometry)
                        })
                        .map_err(|e| e.to_string())
                })
                .collect()
        }
        DomainConfig::WholeLine => {
            let wl = config.whole_line.as_ref().expect("validated");
            config
                .resolutions
                .iter()
                .map(|&n| {
                    simulate_whole_line(
                        model,
                        config.t_obs,
                        (a, b),
                        n + 1,
                        (wl.xi_cut, wl.n_xi),
                        seed,
                    )
                    .and_then(|field| {
                        estimate_cell(field.values, config, order, s_star, known, geometry)
                    })
                    .map_err(|e| e.to_string())
                })
                .collect()
        }
    }
}

fn summarize_resolution(n: usize, h: f64, cells: &[CellResult], true_value: f64) -> SummaryRow {
    let ok: Vec<&ReplicationCell> = cells.iter().filter_map(|c| c.as_ref().ok()).collect();
    let n_failures = cells.len() - ok.len();
    if ok.is_empty() {
        return SummaryRow {
            n,
            h,
            n_failures,
            mean_estimate: f64::NAN,
            empirical_sd: f64::NAN,
            rmse: f64::NAN,
            mean_std_error: None,
            coverage_95: None,
        };
    }
    let count = ok.len() as f64;
    let mean_estimate = ok.iter().map(|c| c.estimate).sum::<f64>() / count;
    let empirical_sd = (ok
        .iter()
        .map(|c| (c.estimate - mean_estimate).powi(2))
        .sum::<f64>()
        / count)
        .sqrt();
    let rmse = (ok
        .iter()
        .map(|c| (c.estimate - true_value).powi(2))
        .sum::<f64>()
        / count)
        .sqrt();
    let mean_std_error = ok
        .iter()
        .map(|c| c.std_error)
        .sum::<Option<f64>>()
        .map(|total| total / count);
    let coverage_95 = ok
        .iter()
        .map(|c| {
            c.ci_95
                .map(|(lo, hi)| if lo <= true_value && true_value <= hi { 1.0 } else { 0.0 })
        })
        .sum::<Option<f64>>()
        .map(|covered| covered / count);
    SummaryRow {
        n,
        h,
        n_failures,
        mean_estimate,
        empirical_sd,
        rmse,
        mean_std_error,
        coverage_95,
    }
}

/// Runs the configured Monte Carlo experiment. Per-cell failures are
/// recorded, not fatal; the failure budget is reported in the summary so
/// the caller can write outputs before deciding to fail.
pub fn run_mc_experiment(config: &ExperimentConfig) -> Result<McResults> {
    let model = config.build_model()?;
    let s_star = model.s_star();
    let order = config.resolved_order(s_star)?;
    let (known, true_value) = config.known_and_truth();
    let geometry = config.geometry();
    let [a, b] = config.window;

    let per_rep: Vec<Vec<CellResult>> = (0..config.n_replications as u64)
        .into_par_iter()
        .map(|rep| run_one_replication(config, &model, order, s_star, known, geometry, rep))
        .collect();

    // Transpose to cells[resolution][replication].
    let cells: Vec<Vec<CellResult>> = (0..config.resolutions.len())
        .map(|res| per_rep.iter().map(|row| row[res].clone()).collect())
        .collect();

    let rows: Vec<SummaryRow> = config
        .resolutions
        .iter()
        .zip(&cells)
        .map(|(&n, col)| summarize_resolution(n, (b - a) / n as f64, col, true_value))
        .collect();

    let fit_points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rmse.is_finite() && r.rmse > 0.0)
        .map(|r| (r.h.ln(), r.rmse.ln()))
        .collect();
    let rate_fit = if fit_points.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit_points.into_iter().unzip();
        let (slope, intercept, r_squared) = linear_fit(&xs, &ys)?;
        Some(RateFit {
            slope,
            intercept,
            r_squared,
        })
    } else {
        None
    };

    let n_failed_estimates: usize = rows.iter().map(|r| r.n_failures).sum();
    let total_cells = config.resolutions.len() * config.n_replications;
    let failure_budget_exceeded = 10 * n_failed_estimates > total_cells;

    Ok(McResults {
        summary: McSummary {
            target: config.target,
            true_value,
            rows,
            rate_fit,
            n_failed_estimates,
            failure_budget_exceeded,
        },
        cells,
    })
}

fn nonlinearity_json(config: &ExperimentConfig) -> Json {
    use crate::config::NonlinearityConfig;
    match &config.model.nonlinearity {
        NonlinearityConfig::Zero => Json::Str("zero".into()),
        NonlinearityConfig::Polynomial(coeffs) => Json::Object(vec![(
            "polynomial",
            Json::Array(coeffs.iter().map(|&c| Json::Num(c)).collect()),
        )]),
        NonlinearityConfig::Advection(v) => Json::Object(vec![("advection", Json::Num(*v))]),
    }
}

/// Serializes the experiment summary (with enough of the configuration
/// echoed back to make the file self-describing).
pub fn summary_to_json(config: &ExperimentConfig, results: &McResults) -> Json {
    let summary = &results.summary;
    let model = &config.model;
    let s_star = config
        .build_model()
        .expect("validated configuration")
        .s_star();
    let order = config
        .resolved_order(s_star)
        .expect("validated configuration");
    let mut model_fields = vec![
        ("theta", Json::Num(model.theta)),
        ("sigma", Json::Num(model.sigma)),
        ("alpha", Json::Num(model.alpha)),
        ("gamma", Json::Num(model.gamma)),
        ("nonlinearity", nonlinearity_json(config)),
        (
            "domain",
            Json::Str(
                match model.domain {
                    DomainConfig::Dirichlet01 => "dirichlet",
                    DomainConfig::WholeLine => "whole-line",
                }
                .into(),
            ),
        ),
    ];
    if let Some(wl) = &config.whole_line {
        model_fields.push((
            "whole_line",
            Json::Object(vec![
                ("m", Json::Int(wl.m as i64)),
                ("xi_cut", Json::Num(wl.xi_cut)),
                ("n_xi", Json::Int(wl.n_xi as i64)),
            ]),
        ));
    }
    let rows = summary
        .rows
        .iter()
        .map(|row| {
            Json::Object(vec![
                ("n", Json::Int(row.n as i64)),
                ("h", Json::Num(row.h)),
                ("mean_estimate", Json::num_or_null(Some(row.mean_estimate))),
                ("empirical_sd", Json::num_or_null(Some(row.empirical_sd))),
                ("rmse", Json::num_or_null(Some(row.rmse))),
                ("mean_std_error", Json::num_or_null(row.mean_std_error)),
                ("coverage_95", Json::num_or_null(row.coverage_95)),
                ("n_failures", Json::Int(row.n_failures as i64)),
            ])
        })
        .collect();
    let rate_fit = match &summary.rate_fit {
        Some(fit) => Json::Object(vec![
            ("slope", Json::Num(fit.slope)),
            ("intercept", Json::Num(fit.intercept)),
            ("r_squared", Json::Num(fit.r_squared)),
        ]),
        None => Json::Null,
    };
    Json::Object(vec![
        ("version", Json::Int(1)),
        ("target", Json::Str(summary.target.as_str().into())),
        ("true_value", Json::Num(summary.true_value)),
        ("q", Json::Int(config.q as i64)),
        ("order", Json::Int(order as i64)),
        ("s_star", Json::Num(s_star)),
        ("t_obs", Json::Num(config.t_obs)),
        (
            "window",
            Json::Array(vec![Json::Num(config.window[0]), Json::Num(config.window[1])]),
        ),
        ("n_modes", Json::Int(config.n_modes as i64)),
        ("n_replications", Json::Int(config.n_replications as i64)),
        ("seed_base", Json::Int(config.seed_base as i64)),
        ("model", Json::Object(model_fields)),
        ("resolutions", Json::Array(rows)),
        ("rate_fit", rate_fit),
        (
            "n_failed_estimates",
            Json::Int(summary.n_failed_estimates as i64),
        ),
        (
            "failure_budget_exceeded",
            Json::Bool(summary.failure_budget_exceeded),
        ),
    ])
}

fn push_cell_csv(out: &mut String, rep: usize, n: usize, cell: &CellResult) {
    write!(out, "{rep},{n},").expect("writing to a String cannot fail");
    match cell {
        Ok(c) => {
            write!(out, "{:.16e},", c.estimate).expect("writing to a String cannot fail");
            if let Some(se) = c.std_error {
                write!(out, "{se:.16e}").expect("writing to a String cannot fail");
            }
            out.push(',');
            if let Some((lo, hi)) = c.ci_95 {
                write!(out, "{lo:.16e},{hi:.16e}").expect("writing to a String cannot fail");
            } else {
                out.push(',');
            }
            out.push_str(",ok\n");
        }
        Err(msg) => {
            // Empty numeric columns; quote the message (it may contain commas).
            let quoted = msg.replace('"', "\"\"");
            writeln!(out, ",,,,\"{quoted}\"").expect("writing to a String cannot fail");
        }
    }
}

/// Writes `summary.json`, `replications.csv`, plot data CSVs, and the SVG
/// chart into `out_dir`. Returns the path of the summary file.
pub fn write_experiment_outputs(
    config: &ExperimentConfig,
    results: &McResults,
    out_dir: &Path,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let summary_path = out_dir.join("summary.json");
    std::fs::write(&summary_path, render_json(&summary_to_json(config, results)))
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let mut csv = String::from("replication,n,estimate,std_error,ci_low,ci_high,status\n");
    for (res, col) in results.cells.iter().enumerate() {
        let n = config.resolutions[res];
        for (rep, cell) in col.iter().enumerate() {
            push_cell_csv(&mut csv, rep, n, cell);
        }
    }
    let csv_path = out_dir.join("replications.csv");
    std::fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;

    emit_plot_data(&results.summary, out_dir)?;
    Ok(summary_path)
}

/// Reference curve `C sqrt(h)` anchored at the coarsest resolved RMSE
/// point (rows are ordered by increasing `n`, so the first valid row has
/// the largest `h`), for eyeballing the theoretical rate against the data.
fn sqrt_h_reference(rows: &[SummaryRow]) -> Option<f64> {
    rows.iter()
        .find(|r| r.rmse.is_finite() && r.rmse > 0.0)
        .map(|r| r.rmse / r.h.sqrt())
}

/// Writes `mean_estimate.csv` and `rmse.csv` (plot data) and `plot.svg`.
fn emit_plot_data(summary: &McSummary, out_dir: &Path) -> Result<()> {
    let anchor = sqrt_h_reference(&summary.rows);

    let mut mean_csv = String::from("h,mean_estimate,true_value\n");
    let mut rmse_csv = String::from("h,rmse,reference_sqrt_h\n");
    for row in &summary.rows {
        if row.mean_estimate.is_finite() {
            writeln!(
                mean_csv,
                "{:.16e},{:.16e},{:.16e}",
                row.h, row.mean_estimate, summary.true_value
            )
            .expect("writing to a String cannot fail");
        }
        if row.rmse.is_finite() {
            let reference = anchor.map_or(f64::NAN, |c| c * row.h.sqrt());
            writeln!(rmse_csv, "{:.16e},{:.16e},{:.16e}", row.h, row.rmse, reference)
                .expect("writing to a String cannot fail");
        }
    }
    std::fs::write(out_dir.join("mean_estimate.csv"), mean_csv)
        .context("writing mean_estimate.csv")?;
    std::fs::write(out_dir.join("rmse.csv"), rmse_csv).context("writing rmse.csv")?;
    std::fs::write(out_dir.join("plot.svg"), render_plot_svg(summary))
        .context("writing plot.svg")?;
    Ok(())
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let magnitude = v.abs();
    if (1e-3..1e4).contains(&magnitude) {
        let text = format!("{v:.4}");
        let trimmed = text.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Maps data coordinates into one panel's pixel rectangle.
struct Panel {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Panel {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(f64::MIN_POSITIVE);
        self.left + (v - self.x_min) / span * self.width
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(f64::MIN_POSITIVE);
        self.top + self.height - (v - self.y_min) / span * self.height
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = 0.08 * (hi - lo).max(0.05 * (lo.abs() + hi.abs()).max(1e-300));
    (lo - pad, hi + pad)
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "  <polyline points=\"{}\" fill=\"none\" {} />\n",
        coords.join(" "),
        style
    )
}

fn markers(points: &[(f64, f64)], fill: &str) -> String {
    points
        .iter()
        .map(|&(x, y)| format!("  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.2\" fill=\"{fill}\" />\n"))
        .collect()
}

fn panel_frame(svg: &mut String, panel: &Panel, title: &str, x_label: &str, y_label: &str) {
    write!(
        svg,
        "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#777777\" stroke-width=\"1\" />\n",
        panel.left, panel.top, panel.width, panel.height
    )
    .expect("writing to a String cannot fail");
    write!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" font-weight=\"bold\" fill=\"#222222\">{}</text>\n",
        panel.left,
        panel.top - 10.0,
        title
    )
    .expect("writing to a String cannot fail");
    write!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#222222\" text-anchor=\"middle\">{}</text>\n",
        panel.left + panel.width / 2.0,
        panel.top + panel.height + 34.0,
        x_label
    )
    .expect("writing to a String cannot fail");
    write!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"#222222\" text-anchor=\"middle\" transform=\"rotate(-90 {:.1} {:.1})\">{}</text>\n",
        panel.left - 52.0,
        panel.top + panel.height / 2.0,
        panel.left - 52.0,
        panel.top + panel.height / 2.0,
        y_label
    )
    .expect("writing to a String cannot fail");
}

fn x_ticks_log_h(svg: &mut String, panel: &Panel, hs: &[f64]) {
    for &h in hs {
        let px = panel.x(h.log10());
        write!(
            svg,
            "  <line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#777777\" stroke-width=\"1\" />\n",
            panel.top + panel.height,
            panel.top + panel.height + 5.0
        )
        .expect("writing to a String cannot fail");
        write!(
            svg,
            "  <text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"#222222\" text-anchor=\"middle\">{}</text>\n",
            panel.top + panel.height + 17.0,
            format_tick(h)
        )
        .expect("writing to a String cannot fail");
    }
}

fn y_ticks(svg: &mut String, panel: &Panel, values: &[f64], log_scale: bool) {
    for &v in values {
        let py = panel.y(if log_scale { v.log10() } else { v });
        write!(
            svg,
            "  <line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" stroke=\"#777777\" stroke-width=\"1\" />\n",
            panel.left - 5.0,
            panel.left
        )
        .expect("writing to a String cannot fail");
        write!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"#222222\" text-anchor=\"end\">{}</text>\n",
            panel.left - 8.0,
            py + 3.5,
            format_tick(v)
        )
        .expect("writing to a String cannot fail");
    }
}

/// Renders a two-panel SVG: mean estimate vs `h` (semi-log) and RMSE vs `h`
/// (log-log, with a `sqrt(h)` reference).
fn render_plot_svg(summary: &McSummary) -> String {
    const W: f64 = 960.0;
    const H: f64 = 420.0;
    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\">\n"
    )
    .expect("writing to a String cannot fail");
    svg.push_str("  <rect width=\"100%\" height=\"100%\" fill=\"#ffffff\" />\n");

    let rows: Vec<&SummaryRow> = summary
        .rows
        .iter()
        .filter(|r| r.mean_estimate.is_finite())
        .collect();
    if rows.is_empty() {
        svg.push_str(
            "  <text x=\"480\" y=\"210\" font-size=\"16\" fill=\"#222222\" text-anchor=\"middle\">no successful replications to plot</text>\n",
        );
        svg.push_str("</svg>\n");
        return svg;
    }

    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let (lx_min, lx_max) = padded_range(hs.iter().map(|h| h.log10()));

    // Left panel: mean estimate (linear y) with the true value line.
    let mean_panel = Panel {
        x_min: lx_min,
        x_max: lx_max,
        y_min: 0.0,
        y_max: 1.0,
        left: 70.0,
        top: 40.0,
        width: 370.0,
        height: 310.0,
    };
    let (y_min, y_max) = padded_range(
        rows.iter()
            .map(|r| r.mean_estimate)
            .chain(std::iter::once(summary.true_value)),
    );
    let mean_panel = Panel {
        y_min,
        y_max,
        ..mean_panel
    };
    panel_frame(&mut svg, &mean_panel, "mean estimate", "h (log scale)", "estimate");
    x_ticks_log_h(&mut svg, &mean_panel, &hs);
    let mid = 0.5 * (y_min + y_max);
    y_ticks(&mut svg, &mean_panel, &[y_min, mid, y_max, summary.true_value], false);
    let truth_px = [
        (mean_panel.x(lx_min), mean_panel.y(summary.true_value)),
        (mean_panel.x(lx_max), mean_panel.y(summary.true_value)),
    ];
    svg.push_str(&polyline(
        &truth_px,
        "stroke=\"#555555\" stroke-width=\"1.2\" stroke-dasharray=\"6 4\"",
    ));
    let mean_points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (mean_panel.x(r.h.log10()), mean_panel.y(r.mean_estimate)))
        .collect();
    svg.push_str(&polyline(&mean_points, "stroke=\"#1f6feb\" stroke-width=\"1.8\""));
    svg.push_str(&markers(&mean_points, "#1f6feb"));
    write!(
        svg,
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#555555\">dashed: true value</text>\n",
        mean_panel.left + 6.0,
        mean_panel.top + 16.0
    )
    .expect("writing to a String cannot fail");

    // Right panel: RMSE (log-log) with the sqrt(h) reference.
    let rmse_rows: Vec<&&SummaryRow> = rows
        .iter()
        .filter(|r| r.rmse.is_finite() && r.rmse > 0.0)
        .collect();
    let anchor = sqrt_h_reference(&summary.rows);
    if let (false, Some(anchor)) = (rmse_rows.is_empty(), anchor) {
        let reference: Vec<f64> = hs.iter().map(|h| anchor * h.sqrt()).collect();
        let (ly_min, ly_max) = padded_range(
            rmse_rows
                .iter()
                .map(|r| r.rmse.log10())
                .chain(reference.iter().map(|v| v.log10())),
        );
        let rmse_panel = Panel {
            x_min: lx_min,
            x_max: lx_max,
            y_min: ly_min,
            y_max: ly_max,
            left: 560.0,
            top: 40.0,
            width: 370.0,
            height: 310.0,
        };
        panel_frame(&mut svg, &rmse_panel, "RMSE", "h (log scale)", "RMSE (log scale)");
        x_ticks_log_h(&mut svg, &rmse_panel, &hs);
        y_ticks(
            &mut svg,
            &rmse_panel,
            &[10f64.powf(ly_min), 10f64.powf(0.5 * (ly_min + ly_max)), 10f64.powf(ly_max)],
            true,
        );
        let ref_points: Vec<(f64, f64)> = hs
            .iter()
            .zip(&reference)
            .map(|(&h, &v)| (rmse_panel.x(h.log10()), rmse_panel.y(v.log10())))
            .collect();
        svg.push_str(&polyline(
            &ref_points,
            "stroke=\"#d29922\" stroke-width=\"1.4\" stroke-dasharray=\"6 4\"",
        ));
        let rmse_points: Vec<(f64, f64)> = rmse_rows
            .iter()
            .map(|r| (rmse_panel.x(r.h.log10()), rmse_panel.y(r.rmse.log10())))
            .collect();
        svg.push_str(&polyline(&rmse_points, "stroke=\"#cf222e\" stroke-width=\"1.8\""));
        svg.push_str(&markers(&rmse_points, "#cf222e"));
        let slope_text = summary
            .rate_fit
            .map(|fit| format!("fitted rate: h^{}", format_tick(fit.slope)))
            .unwrap_or_else(|| "fitted rate: n/a".into());
        write!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"#555555\">dashed: C sqrt(h); {}</text>\n",
            rmse_panel.left + 6.0,
            rmse_panel.top + 16.0,
            slope_text
        )
        .expect("writing to a String cannot fail");
    }

    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// CLT validation
// ---------------------------------------------------------------------------

/// Results of a Monte Carlo check of the Gaussian fluctuation limit of the
/// delta-power variation on exactly sampled paths.
#[derive(Debug, Clone)]
pub struct CltReport {
    pub m: u32,
    pub hurst: f64,
    pub order: usize,
    pub q: u32,
    /// Grid intervals per path.
    pub n_intervals: usize,
    pub n_replications: usize,
    pub seed_base: u64,
    /// Limit variance `sigma^2_{q,M,s}` entering the standardization.
    pub theoretical_sigma_sq: f64,
    /// Sample mean of the standardized statistic (should be near 0).
    pub sample_mean: f64,
    /// Sample variance of the standardized statistic (should be near 1).
    pub sample_variance: f64,
    /// `sample_variance / 1`, kept as an explicitly named diagnostic.
    pub variance_ratio: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    /// Soft verdict at the documented thresholds (`p > 0.01`, ratio in
    /// `[0.8, 1.25]`).
    pub pass: bool,
}

impl CltReport {
    pub fn to_json(&self) -> Json {
        Json::Object(vec![
            ("m", Json::Int(self.m as i64)),
            ("hurst", Json::Num(self.hurst)),
            ("order", Json::Int(self.order as i64)),
            ("q", Json::Int(self.q as i64)),
            ("n", Json::Int(self.n_intervals as i64)),
            ("n_replications", Json::Int(self.n_replications as i64)),
            ("seed_base", Json::Int(self.seed_base as i64)),
            ("theoretical_sigma_sq", Json::Num(self.theoretical_sigma_sq)),
            ("sample_mean", Json::Num(self.sample_mean)),
            ("sample_variance", Json::Num(self.sample_variance)),
            ("variance_ratio", Json::Num(self.variance_ratio)),
            ("ks_statistic", Json::Num(self.ks_statistic)),
            ("ks_p_value", Json::Num(self.ks_p_value)),
            ("pass", Json::Bool(self.pass)),
            (
                "pass_thresholds",
                Json::Object(vec![
                    ("ks_p_value_min", Json::Num(0.01)),
                    (
                        "variance_ratio_range",
                        Json::Array(vec![Json::Num(0.8), Json::Num(1.25)]),
                    ),
                ]),
            ),
        ])
    }
}

/// Simulates `n_replications` exact paths of the `m`-times integrated
/// fractional Brownian motion on `[0, 1]`, computes the standardized
/// variation statistic `sqrt(N) (V - tau_q mu^{q/2}) / (sigma mu^{q/2})`
/// for each, and compares the sample against the standard normal limit.
pub fn run_clt_check(
    m: u32,
    hurst: f64,
    order: usize,
    q: u32,
    n_intervals: usize,
    n_replications: usize,
    seed_base: u64,
) -> Result<CltReport> {
    if n_replications < 2 {
        return Err(CliError::InvalidArguments(
            "the normality check needs at least 2 replications".into(),
        )
        .into());
    }
    if n_intervals < order + 1 {
        return Err(CliError::InvalidArguments(format!(
            "a path of {n_intervals} intervals has no order-{order} differences"
        ))
        .into());
    }
    let constants = CltConstants::new(q, order, m, hurst)?;
    let s = constants.s;
    if !(order >= m as usize + 2 || hurst < 0.75) {
        return Err(Error::invalid(format!(
            "the Gaussian fluctuation limit requires the difference order to exceed \
             the regularity comfortably: either M >= m + 2, or M = m + 1 with H < 3/4 \
             (got M = {order}, m = {m}, H = {hurst})"
        ))
        .into());
    }
    let sigma_sq = constants.sigma_sq.ok_or_else(|| {
        Error::invalid(format!(
            "no Gaussian limit variance exists for q = {q} at M = {order}, s = {s}: \
             the variance is defined for even powers with square-summable correlations \
             (s < M - 1/4)"
        ))
    })?;
    let sigma = sigma_sq.sqrt();
    let mu_half_q = constants.mu.powf(q as f64 / 2.0);
    let center = constants.tau_q * mu_half_q;
    let scale = sigma * mu_half_q;

    let sampler = IteratedFbmSampler::new(m, hurst, 0.0, 1.0, n_intervals + 1)?;
    let params = VariationParams::new(q, order, s)?;
    let sqrt_n = (n_intervals as f64).sqrt();

    let stats: Vec<f64> = (0..n_replications as u64)
        .into_par_iter()
        .map(|rep| -> deltavar::error::Result<f64> {
            let mut rng = Replication::new(seed_base, rep);
            let path = sampler.sample(&mut rng)?;
            let v = delta_power_variation(&path, &params)?;
            Ok(sqrt_n * (v - center) / scale)
        })
        .collect::<deltavar::error::Result<Vec<f64>>>()?;

    let count = stats.len() as f64;
    let sample_mean = stats.iter().sum::<f64>() / count;
    let sample_variance =
        stats.iter().map(|x| (x - sample_mean).powi(2)).sum::<f64>() / (count - 1.0);
    let (ks_statistic, ks_p_value) = ks_test_standard_normal(&stats)?;
    let variance_ratio = sample_variance;
    let pass = ks_p_value > 0.01 && (0.8..=1.25).contains(&variance_ratio);

    Ok(CltReport {
        m,
        hurst,
        order,
        q,
        n_intervals,
        n_replications,
        seed_base,
        theoretical_sigma_sq: sigma_sq,
        sample_mean,
        sample_variance,
        variance_ratio,
        ks_statistic,
        ks_p_value,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(estimate: f64, se: f64, half_width: f64) -> CellResult {
        Ok(ReplicationCell {
            estimate,
            std_error: Some(se),
            ci_95: Some((estimate - half_width, estimate + half_width)),
        })
    }

    #[test]
    fn resolution_summary_decomposes_rmse_into_bias_and_spread() {
        let cells = vec![cell(1.1, 0.2, 0.4), cell(0.9, 0.3, 0.4), cell(1.3, 0.25, 0.25)];
        let row = summarize_resolution(128, 0.6 / 128.0, &cells, 1.0);
        assert_eq!(row.n_failures, 0);
        let mean: f64 = (1.1 + 0.9 + 1.3) / 3.0;
        assert!((row.mean_estimate - mean).abs() < 1e-15);
        let bias = mean - 1.0;
        assert!(
            (row.rmse.powi(2) - (bias.powi(2) + row.empirical_sd.powi(2))).abs() < 1e-15,
            "rmse^2 = bias^2 + sd^2 must hold exactly with the population sd"
        );
        // Intervals 1.1±0.4 and 0.9±0.4 contain 1.0; 1.3±0.25 does not.
        assert_eq!(row.coverage_95, Some(2.0 / 3.0));
        assert!((row.mean_std_error.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn failed_cells_are_counted_and_excluded() {
        let cells = vec![cell(1.0, 0.1, 0.2), Err("simulation diverged".into())];
        let row = summarize_resolution(64, 0.01, &cells, 1.0);
        assert_eq!(row.n_failures, 1);
        assert_eq!(row.mean_estimate, 1.0);
        assert_eq!(row.rmse, 0.0);
        assert_eq!(row.coverage_95, Some(1.0));

        let all_failed = vec![Err("boom".to_string()); 3];
        let row = summarize_resolution(64, 0.01, &all_failed, 1.0);
        assert_eq!(row.n_failures, 3);
        assert!(row.mean_estimate.is_nan());
        assert!(row.coverage_95.is_none());
    }

    #[test]
    fn missing_intervals_suppress_coverage() {
        let no_ci = Ok(ReplicationCell {
            estimate: 1.0,
            std_error: None,
            ci_95: None,
        });
        let row = summarize_resolution(64, 0.01, &[no_ci, cell(1.0, 0.1, 0.2)], 1.0);
        assert!(row.coverage_95.is_none());
        assert!(row.mean_std_error.is_none());
    }

    #[test]
    fn single_replication_reports_zero_spread_and_bias_as_rmse() {
        let cells = vec![cell(1.25, 0.1, 0.2)];
        let row = summarize_resolution(32, 0.02, &cells, 1.0);
        assert_eq!(row.empirical_sd, 0.0);
        assert!((row.rmse - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reference_curve_anchors_at_the_coarsest_valid_row() {
        let rows = vec![
            SummaryRow {
                n: 64,
                h: 0.01,
                n_failures: 3,
                mean_estimate: f64::NAN,
                empirical_sd: f64::NAN,
                rmse: f64::NAN,
                mean_std_error: None,
                coverage_95: None,
            },
            SummaryRow {
                n: 128,
                h: 0.005,
                n_failures: 0,
                mean_estimate: 1.0,
                empirical_sd: 0.1,
                rmse: 0.2,
                mean_std_error: None,
                coverage_95: None,
            },
            SummaryRow {
                n: 256,
                h: 0.0025,
                n_failures: 0,
                mean_estimate: 1.0,
                empirical_sd: 0.05,
                rmse: 0.1,
                mean_std_error: None,
                coverage_95: None,
            },
        ];
        let anchor = sqrt_h_reference(&rows).unwrap();
        assert!((anchor - 0.2 / 0.005f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn clt_check_rejects_an_unsupported_hypothesis() {
        // M = m + 1 with H >= 3/4: correlations are not square-summable.
        let err = run_clt_check(0, 0.8, 1, 2, 64, 8, 0).unwrap_err();
        assert_eq!(crate::exit_code_for(&err), 2);
        assert!(err.to_string().contains("M = m + 1 with H < 3/4"), "got: {err}");

        // Odd power: no Gaussian limit variance.
        let err = run_clt_check(0, 0.5, 2, 3, 64, 8, 0).unwrap_err();
        assert_eq!(crate::exit_code_for(&err), 2);
        assert!(err.to_string().contains("even powers"), "got: {err}");
    }

    #[test]
    fn clt_check_standardizes_with_the_module_constants() {
        let report = run_clt_check(0, 0.5, 1, 2, 256, 48, 0xC0FFEE).unwrap();
        // For Brownian motion with first differences and q = 2 the limit
        // variance is exactly 2 (tau_4 - tau_2^2 with vanishing correlations
        // at H = 1/2 ... rho(l) = 0 for l >= 1), so the constant must match.
        assert!((report.theoretical_sigma_sq - 2.0).abs() < 1e-10);
        assert_eq!(report.n_replications, 48);
        assert!(report.sample_mean.is_finite());
        assert!(report.sample_variance > 0.0);
        assert!(report.ks_p_value >= 0.0 && report.ks_p_value <= 1.0);
    }

    #[test]
    fn svg_rendering_handles_empty_and_normal_summaries() {
        let empty = McSummary {
            target: TargetConfig::Theta,
            true_value: 1.0,
            rows: vec![],
            rate_fit: None,
            n_failed_estimates: 0,
            failure_budget_exceeded: false,
        };
        let svg = render_plot_svg(&empty);
        assert!(svg.contains("no successful replications"));

        let rows = vec![
            SummaryRow {
                n: 128,
                h: 0.005,
                n_failures: 0,
                mean_estimate: 1.05,
                empirical_sd: 0.1,
                rmse: 0.2,
                mean_std_error: Some(0.09),
                coverage_95: Some(0.94),
            },
            SummaryRow {
                n: 256,
                h: 0.0025,
                n_failures: 0,
                mean_estimate: 0.98,
                empirical_sd: 0.07,
                rmse: 0.12,
                mean_std_error: Some(0.06),
                coverage_95: Some(0.95),
            },
        ];
        let summary = McSummary {
            target: TargetConfig::Theta,
            true_value: 1.0,
            rows,
            rate_fit: Some(RateFit {
                slope: 0.52,
                intercept: -1.0,
                r_squared: 0.99,
            }),
            n_failed_estimates: 0,
            failure_budget_exceeded: false,
        };
        let svg = render_plot_svg(&summary);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("RMSE"));
        assert!(svg.contains("polyline"));
        assert_eq!(svg, render_plot_svg(&summary), "rendering is deterministic");
    }
}
