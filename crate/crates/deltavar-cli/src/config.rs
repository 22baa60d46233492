//! TOML experiment configuration: schema, parsing, and validation.
//!
//! A configuration describes one Monte Carlo estimation experiment — a
//! model, an observation scheme across several resolutions, and an
//! estimation target. Unknown keys are rejected so that typos fail loudly
//! instead of silently running a different experiment.

use crate::CliError;
use anyhow::{Context, Result};
use deltavar::estimators::{select_order, Geometry, KnownParameter};
use deltavar::spde::{Nonlinearity, SpatialDomain, SpdeModel};
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Schema version this build understands.
pub const CONFIG_VERSION: u32 = 1;

fn default_n_modes() -> usize {
    1 << 14
}

/// Root of the experiment configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; must equal [`CONFIG_VERSION`].
    pub version: u32,
    /// Equation parameters.
    pub model: ModelConfig,
    /// Snapshot time at which the field is observed.
    pub t_obs: f64,
    /// Observation window `[a, b]` in space.
    pub window: [f64; 2],
    /// Grid interval counts `N`, strictly increasing; each resolution
    /// observes the field at `N + 1` uniformly spaced points.
    pub resolutions: Vec<usize>,
    /// Power of the variation statistic.
    pub q: u32,
    /// Difference order `M`; chosen automatically from the regularity when
    /// omitted.
    #[serde(default)]
    pub order: Option<usize>,
    /// Number of independent Monte Carlo replications.
    pub n_replications: usize,
    /// Base seed; replication `r` uses seed `seed_base + r`, so a batch can
    /// be reproduced replication-by-replication with single runs.
    pub seed_base: u64,
    /// Directory for `summary.json`, `replications.csv`, and plot data.
    pub output_dir: PathBuf,
    /// Which parameter the experiment estimates.
    pub target: TargetConfig,
    /// Number of spectral modes for unit-interval simulation.
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// Time steps for the exponential Euler solver; only meaningful for a
    /// nonzero nonlinearity.
    #[serde(default)]
    pub n_time_steps: Option<usize>,
    /// Whole-line sampling parameters; required exactly when the domain is
    /// the whole line.
    #[serde(default)]
    pub whole_line: Option<WholeLineConfig>,
}

/// The `[model]` table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub theta: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    pub domain: DomainConfig,
}

/// Nonlinearity selector: `"zero"`, `{ polynomial = [c0, c1, ...] }`, or
/// `{ advection = v }`.
#[derive(Debug, Clone, Deserialize, Default, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityConfig {
    #[default]
    Zero,
    Polynomial(Vec<f64>),
    Advection(f64),
}

impl NonlinearityConfig {
    pub fn build(&self) -> Nonlinearity {
        match self {
            NonlinearityConfig::Zero => Nonlinearity::Zero,
            NonlinearityConfig::Polynomial(coeffs) => Nonlinearity::Polynomial(coeffs.clone()),
            NonlinearityConfig::Advection(v) => Nonlinearity::Advection { velocity: *v },
        }
    }
}

/// Spatial domain selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainConfig {
    #[serde(rename = "dirichlet", alias = "dirichlet01")]
    Dirichlet01,
    WholeLine,
}

impl DomainConfig {
    pub fn build(self) -> SpatialDomain {
        match self {
            DomainConfig::Dirichlet01 => SpatialDomain::Dirichlet01,
            DomainConfig::WholeLine => SpatialDomain::WholeLine,
        }
    }
}

/// Estimation target selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetConfig {
    /// Dissipation coefficient (noise level known).
    Theta,
    /// `sigma^q` on the unit interval (dissipation known).
    SigmaPowQ,
    /// Noise level on the whole line (dissipation known).
    Sigma,
}

impl TargetConfig {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetConfig::Theta => "theta",
            TargetConfig::SigmaPowQ => "sigma-pow-q",
            TargetConfig::Sigma => "sigma",
        }
    }
}

/// The `[whole_line]` table: spectral quadrature for whole-line sampling.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WholeLineConfig {
    /// Smoothing order of the benchmark (`H = s* - m` must land in (0,1)).
    pub m: u32,
    /// Frequency cutoff of the spectral quadrature.
    pub xi_cut: f64,
    /// Number of quadrature nodes on `[0, xi_cut]`.
    pub n_xi: usize,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    CliError::InvalidArguments(msg.into()).into()
}

impl ExperimentConfig {
    /// Parses and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!(
                "config version {} is not supported; this build reads version {}",
                self.version, CONFIG_VERSION
            )));
        }
        if self.resolutions.is_empty() {
            return Err(invalid("resolutions must list at least one grid size"));
        }
        if !self.resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid(format!(
                "resolutions must be strictly increasing, got {:?}",
                self.resolutions
            )));
        }
        if self.n_replications == 0 {
            return Err(invalid("n_replications must be at least 1"));
        }
        if self.n_modes == 0 {
            return Err(invalid("n_modes must be at least 1"));
        }
        let [a, b] = self.window;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid(format!(
                "window must be a non-degenerate interval, got [{a}, {b}]"
            )));
        }
        match self.model.domain {
            DomainConfig::Dirichlet01 => {
                if !(0.0 < a && b < 1.0) {
                    return Err(invalid(format!(
                        "on the unit interval the observation window must lie strictly \
                         inside (0, 1), got [{a}, {b}]"
                    )));
                }
                if self.whole_line.is_some() {
                    return Err(invalid(
                        "the [whole_line] table applies only to domain = \"whole-line\"",
                    ));
                }
                if self.target == TargetConfig::Sigma {
                    return Err(invalid(
                        "target \"sigma\" is the whole-line estimand; on the unit interval \
                         use \"sigma-pow-q\"",
                    ));
                }
            }
            DomainConfig::WholeLine => {
                let wl = self.whole_line.as_ref().ok_or_else(|| {
                    invalid("domain = \"whole-line\" requires a [whole_line] table (m, xi_cut, n_xi)")
                })?;
                if !(wl.xi_cut.is_finite() && wl.xi_cut > 0.0) {
                    return Err(invalid(format!(
                        "whole_line.xi_cut must be positive and finite, got {}",
                        wl.xi_cut
                    )));
                }
                if wl.n_xi == 0 {
                    return Err(invalid("whole_line.n_xi must be at least 1"));
                }
                if self.target == TargetConfig::SigmaPowQ {
                    return Err(invalid(
                        "target \"sigma-pow-q\" is the unit-interval estimand; on the whole \
                         line use \"sigma\"",
                    ));
                }
                if self.n_time_steps.is_some() {
                    return Err(invalid(
                        "n_time_steps applies to the unit-interval time stepper; the \
                         whole-line model is linear and sampled exactly",
                    ));
                }
            }
        }
        if self.n_time_steps.is_some() && self.model.nonlinearity == NonlinearityConfig::Zero {
            return Err(invalid(
                "n_time_steps applies only to a nonzero nonlinearity; the linear equation \
                 is sampled exactly",
            ));
        }
        if let Some(steps) = self.n_time_steps {
            if steps == 0 {
                return Err(invalid("n_time_steps must be at least 1"));
            }
        }
        // Delegate the model's own parameter constraints, then make sure the
        // variation order and the estimator's geometry are constructible, so
        // a bad configuration fails before any simulation starts.
        let model = self.build_model()?;
        let s_star = model.s_star();
        let order = self.resolved_order(s_star)?;
        if order as f64 <= s_star {
            return Err(invalid(format!(
                "difference order {order} does not exceed the regularity s* = {s_star}; \
                 the rescaled differences would not be order-1"
            )));
        }
        Ok(())
    }

    /// Builds the validated equation model.
    pub fn build_model(&self) -> Result<SpdeModel> {
        Ok(SpdeModel::new(
            self.model.theta,
            self.model.sigma,
            self.model.alpha,
            self.model.gamma,
            self.model.nonlinearity.build(),
            self.model.domain.build(),
        )?)
    }

    /// The difference order to use: explicit `order` if present, otherwise
    /// the automatic choice for regularity `s*`.
    pub fn resolved_order(&self, s_star: f64) -> Result<usize> {
        match self.order {
            Some(m) => {
                if m == 0 {
                    return Err(invalid("order must be at least 1"));
                }
                Ok(m)
            }
            None => Ok(select_order(s_star)?),
        }
    }

    /// The estimator geometry matching the configured domain.
    pub fn geometry(&self) -> Geometry {
        match self.model.domain {
            DomainConfig::Dirichlet01 => Geometry::Dirichlet01,
            DomainConfig::WholeLine => Geometry::WholeLine {
                alpha: self.model.alpha,
                gamma: self.model.gamma,
                m: self.whole_line.as_ref().expect("validated").m,
            },
        }
    }

    /// The known nuisance parameter implied by the target, and the true
    /// value of the estimand (available here because simulation uses the
    /// same configured model).
    pub fn known_and_truth(&self) -> (KnownParameter, f64) {
        match self.target {
            TargetConfig::Theta => (KnownParameter::Sigma(self.model.sigma), self.model.theta),
            TargetConfig::SigmaPowQ => (
                KnownParameter::Theta(self.model.theta),
                self.model.sigma.powi(self.q as i32),
            ),
            TargetConfig::Sigma => (KnownParameter::Theta(self.model.theta), self.model.sigma),
        }
    }
}
