//! JSON run configuration.

use std::path::{Path, PathBuf};

use mmn_predict::mixing::MixingLaw;
use mmn_predict::posterior::NormalPrior;
use mmn_predict::predictive::{Estimator, PredictionProblem};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    TruncNormal {
        #[serde(default)]
        loc: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Gamma {
        shape: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    SqrtChisq {
        dof: f64,
    },
    Degenerate {
        value: f64,
    },
    Kummer2 {
        a: f64,
        b: f64,
        c: f64,
        sigma: f64,
    },
    Tabulated {
        grid: Vec<f64>,
        density: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl LawSpec {
    pub fn build(&self) -> Result<MixingLaw, CliError> {
        let law = match self {
            LawSpec::TruncNormal { loc, scale } => MixingLaw::trunc_normal_with(*loc, *scale),
            LawSpec::Gamma { shape, scale } => MixingLaw::gamma(*shape, *scale),
            LawSpec::SqrtChisq { dof } => MixingLaw::sqrt_chisq(*dof),
            LawSpec::Degenerate { value } => MixingLaw::degenerate(*value),
            LawSpec::Kummer2 { a, b, c, sigma } => MixingLaw::kummer2(*a, *b, *c, *sigma),
            LawSpec::Tabulated { grid, density } => {
                MixingLaw::tabulated(grid.clone(), density.clone())
            }
        };
        law.map_err(CliError::config)
    }
}

/// `X ~ MMN_d(θ, a, σ²_X I, law_x)`, `Y ~ MMN_d(θ, a, σ²_Y I, law_y)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub a: Vec<f64>,
    pub sigma2_x: f64,
    pub sigma2_y: f64,
    pub law_x: LawSpec,
    /// Defaults to `law_x`.
    #[serde(default)]
    pub law_y: Option<LawSpec>,
}

impl ModelSpec {
    pub fn problem(&self) -> Result<PredictionProblem, CliError> {
        self.problem_with_sigma2_y(self.sigma2_y)
    }

    pub fn problem_with_sigma2_y(&self, sigma2_y: f64) -> Result<PredictionProblem, CliError> {
        let law_x = self.law_x.build()?;
        let law_y = match &self.law_y {
            Some(l) => l.build()?,
            None => law_x.clone(),
        };
        PredictionProblem::new(
            DVector::from_vec(self.a.clone()),
            self.sigma2_x,
            sigma2_y,
            law_x,
            law_y,
        )
        .map_err(CliError::config)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform,
    /// `N(mu, tau2 I)` or `N(mu, covariance)`.
    Normal {
        mu: Vec<f64>,
        #[serde(default)]
        tau2: Option<f64>,
        #[serde(default)]
        covariance: Option<Vec<Vec<f64>>>,
    },
}

impl PriorSpec {
    pub fn build(&self, d: usize) -> Result<NormalPrior, CliError> {
        match self {
            PriorSpec::Uniform => Ok(NormalPrior::uniform(d)),
            PriorSpec::Normal {
                mu,
                tau2,
                covariance,
            } => {
                let mu = DVector::from_vec(mu.clone());
                match (tau2, covariance) {
                    (Some(t), None) => NormalPrior::isotropic(mu, *t).map_err(CliError::config),
                    (None, Some(rows)) => {
                        let n = rows.len();
                        if rows.iter().any(|r| r.len() != n) {
                            return Err(CliError::Config("prior covariance must be square".into()));
                        }
                        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                        NormalPrior::new(mu, m).map_err(CliError::config)
                    }
                    _ => Err(CliError::Config(
                        "normal prior needs exactly one of tau2 and covariance".into(),
                    )),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    /// Ratios `σ²_Y/σ²_X`; each gives its own sweep with `σ²_Y = c σ²_X`.
    #[serde(default)]
    pub c_values: Vec<f64>,
    /// True parameter for `sample`; zero when absent.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let d = self.model.a.len();
        if let Some(theta) = &self.theta {
            if theta.len() != d {
                return Err(CliError::Config(format!(
                    "theta has length {}, model has dimension {d}",
                    theta.len()
                )));
            }
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(CliError::Config(format!(
                "t_grid entries must be finite and nonnegative, got {t}"
            )));
        }
        if let Some(c) = self.c_values.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(CliError::Config(format!(
                "c_values must be positive, got {c}"
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        self.model.problem()?;
        if let Some(p) = &self.prior {
            p.build(d)?;
        }
        Ok(())
    }
}
