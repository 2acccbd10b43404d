//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use pathgreeks::{AllocationFunction, Contract, VegaDirection, VolatilityModel, WeightSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub contract: ContractConfig,
    #[serde(default)]
    pub greeks: GreeksConfig,
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub surface: Option<SurfaceConfig>,
    pub strong: Option<StrongConfig>,
    pub classify: Option<ClassifyConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    BlackScholes { x0: f64, vol: f64 },
    Bachelier { x0: f64, vol: f64 },
    Cev { x0: f64, vol: f64, beta: f64 },
    QvFeedback { x0: f64, vol: f64, alpha: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContractConfig {
    EuropeanCall { strike: f64 },
    VkoCall { strike: f64, barrier: f64 },
    AsianForwardStart { t1: f64, maturity: f64 },
    FixedStrikeAverage { strike: Option<f64>, maturity: f64 },
    TerminalValue,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreeksConfig {
    pub delta: Option<DeltaConfig>,
    #[serde(default)]
    pub gamma: bool,
    pub vega: Option<VegaConfig>,
    pub baseline: Option<f64>,
    /// Bump-and-reprice cross-checks.
    pub fd: Option<FdConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "weight", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeltaConfig {
    Weakly,
    Delayed {
        t1: f64,
        #[serde(default)]
        allocation: AllocationConfig,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum AllocationConfig {
    /// `a ≡ 1/t1` on `[0, t1)`.
    #[default]
    Uniform,
    /// `a(t) = 2t/t1²` on `[0, t1)`.
    Linear,
    /// `a ≡ value` on `[0, until)`; not normalised, so it can violate the constraints.
    Constant { value: f64, until: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VegaConfig {
    #[serde(default)]
    pub scaling: VegaScaling,
    #[serde(default = "one")]
    pub scale: f64,
    /// Restrict the direction to `[0, until)`.
    pub until: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum VegaScaling {
    /// `u(t, x) · x²`: a bump of the lognormal variance.
    #[default]
    Lognormal,
    /// `u(t, x)`: a bump of the local variance itself.
    Absolute,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    pub delta_bump: Option<f64>,
    pub gamma_bump: Option<f64>,
    pub vega_bump: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Defaults to the contract maturity (1 for contracts without one).
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_points_per_decade")]
    pub points_per_decade: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            points_per_decade: default_points_per_decade(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub x_low: f64,
    pub x_high: f64,
    pub n_bins: usize,
    #[serde(default = "one_usize")]
    pub time_stride: usize,
    pub min_occupancy: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongConfig {
    pub outer_paths: usize,
    pub inner_paths: usize,
    #[serde(default = "default_stride")]
    pub s_stride: usize,
    pub max_inner_rel_se: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub probe_paths: usize,
    pub probe_times: Vec<f64>,
    pub inner_paths: usize,
    pub tolerance: f64,
    pub h: Option<f64>,
    pub dt_steps: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_stride() -> usize {
    10
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_points_per_decade() -> usize {
    4
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {}", e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {}", path.display(), e)))?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.mc.n_paths < 2 {
            return Err(CliError::Validation(format!("mc.n_paths must be at least 2, got {}", self.mc.n_paths)));
        }
        if self.mc.n_steps == 0 {
            return Err(CliError::Validation("mc.n_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn x0(&self) -> f64 {
        match self.model {
            ModelConfig::BlackScholes { x0, .. }
            | ModelConfig::Bachelier { x0, .. }
            | ModelConfig::Cev { x0, .. }
            | ModelConfig::QvFeedback { x0, .. } => x0,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.mc.horizon.unwrap_or(match self.contract {
            ContractConfig::AsianForwardStart { maturity, .. }
            | ContractConfig::FixedStrikeAverage { maturity, .. } => maturity,
            _ => 1.0,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.horizon() / self.mc.n_steps as f64
    }

    pub fn volatility_model(&self) -> VolatilityModel {
        match self.model {
            ModelConfig::BlackScholes { vol, .. } => VolatilityModel::black_scholes(vol),
            ModelConfig::Bachelier { vol, .. } => VolatilityModel::bachelier(vol),
            ModelConfig::Cev { x0, vol, beta } => VolatilityModel::cev(vol, beta, x0),
            ModelConfig::QvFeedback { vol, alpha, .. } => VolatilityModel::qv_feedback(vol, alpha),
        }
    }

    pub fn contract(&self) -> pathgreeks::Result<Contract> {
        match self.contract {
            ContractConfig::EuropeanCall { strike } => Contract::european_call(strike),
            ContractConfig::VkoCall { strike, barrier } => Contract::vko_call(strike, barrier),
            ContractConfig::AsianForwardStart { t1, maturity } => Contract::asian_forward_start(t1, maturity),
            ContractConfig::FixedStrikeAverage { strike, maturity } => Contract::fixed_strike_average(strike, maturity),
            ContractConfig::TerminalValue => Ok(Contract::terminal_value()),
        }
    }

    pub fn weight_spec(&self) -> pathgreeks::Result<Option<WeightSpec>> {
        let (dt, n) = (self.grid_step(), self.mc.n_steps);
        let Some(delta) = &self.greeks.delta else {
            return Ok(None);
        };
        Ok(Some(match delta {
            DeltaConfig::Weakly => WeightSpec::Weakly,
            DeltaConfig::Delayed { t1, allocation } => {
                let t1 = *t1;
                let alloc = match allocation {
                    AllocationConfig::Uniform => AllocationFunction::constant_until(1.0 / t1, t1, dt, n)?,
                    AllocationConfig::Linear => {
                        AllocationFunction::from_fn(|t| if t < t1 { 2.0 * t / (t1 * t1) } else { 0.0 }, dt, n)?
                    }
                    AllocationConfig::Constant { value, until } => {
                        AllocationFunction::constant_until(*value, *until, dt, n)?
                    }
                };
                WeightSpec::Delayed { alloc, t1 }
            }
        }))
    }

    pub fn vega_direction(&self) -> Option<VegaDirection> {
        self.greeks.vega.as_ref().map(|v| {
            let dir = match v.scaling {
                VegaScaling::Lognormal => VegaDirection::lognormal_constant(v.scale),
                VegaScaling::Absolute => VegaDirection::absolute_constant(v.scale),
            };
            match v.until {
                Some(t) => dir.restricted(t),
                None => dir,
            }
        })
    }
}
