//! Plain-text run configuration.
//!
//! Files hold `key = value` lines grouped under `[section]` headers; `#`
//! starts a comment. Every key must be known, so a typo fails instead of
//! silently falling back to a default.
//!
//! ```text
//! [noise]
//! sigma_gyr = 0.01
//! [environment]
//! sample_period = 1.0
//! dip_deg = 71
//! [scenario]
//! kind = orientation
//! seed = 3
//! [estimator]
//! algorithm = ekf-dev
//! ```

use nalgebra::Vector3;

use crate::calibration::MlSettings;
use crate::error::{Error, Result};
use crate::estimators::{Algorithm, EstimatorConfig};
use crate::sensor_models::{Environment, NoiseModel};
use crate::simulator::{MagDisturbance, ScenarioConfig, ScenarioKind};

/// Everything a command-line run can configure.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorConfig,
    pub algorithm: Algorithm,
    pub ml: MlSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scenario = ScenarioConfig::new(ScenarioKind::Orientation, 0);
        let estimator = EstimatorConfig::new(scenario.noise, scenario.env);
        Self { scenario, estimator, algorithm: Algorithm::EkfDev, ml: MlSettings::default() }
    }
}

impl RunConfig {
    /// Sets the noise model and environment used by both the simulator and
    /// the estimator.
    pub fn set_models(&mut self, noise: NoiseModel, env: Environment) {
        self.scenario.noise = noise;
        self.scenario.env = env;
        self.estimator.noise = noise;
        self.estimator.env = env;
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.estimator.validate()?;
        self.ml.validate()
    }
}

fn number(v: &str, line: usize, column: usize) -> Result<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Parse { line, column, message: format!("`{v}` is not a finite number") })
}

fn count(v: &str, line: usize, column: usize) -> Result<usize> {
    v.parse::<usize>().map_err(|_| Error::Parse { line, column, message: format!("`{v}` is not a nonnegative integer") })
}

fn flag(v: &str, line: usize, column: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse { line, column, message: format!("`{v}` is not a boolean") }),
    }
}

/// Parses a configuration on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut noise = NoiseModel::default();
    let mut dip = 71f64.to_radians();
    let mut gravity = 9.82;
    let mut sample_period = cfg.scenario.env.sample_period;
    let mut alg_name: Option<String> = None;
    let mut alpha = 0.07;
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name =
                rest.strip_suffix(']').ok_or_else(|| Error::Parse { line, column: body.len(), message: "unterminated section header".into() })?;
            section = name.trim().to_string();
            if !["noise", "environment", "scenario", "estimator", "ml"].contains(&section.as_str()) {
                return Err(Error::Parse { line, column: 2, message: format!("unknown section [{section}]") });
            }
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse { line, column: 1, message: "expected `key = value`".into() })?;
        let (key, value) = (key.trim(), value.trim());
        let col = raw.find('=').map_or(1, |c| c + 2);
        let num = || number(value, line, col);
        let unknown = || Error::Parse { line, column: 1, message: format!("unknown key `{key}` in [{section}]") };
        match section.as_str() {
            "noise" => {
                let v = num()?;
                match key {
                    "sigma_gyr" => noise.sigma_gyr = v,
                    "sigma_acc" => noise.sigma_acc = v,
                    "sigma_mag" => noise.sigma_mag = v,
                    "sigma_pos" => noise.sigma_pos = v,
                    "sigma_ori_prior_deg" => noise.sigma_ori_prior = v.to_radians(),
                    "sigma_vel_prior" => noise.sigma_vel_prior = v,
                    "sigma_bias_prior" => noise.sigma_bias_prior = v,
                    "sigma_bias_walk" => noise.sigma_bias_walk = v,
                    _ => return Err(unknown()),
                }
            }
            "environment" => match key {
                "sample_period" => sample_period = num()?,
                "dip_deg" => dip = num()?.to_radians(),
                "gravity" => gravity = num()?,
                _ => return Err(unknown()),
            },
            "scenario" => match key {
                "kind" => cfg.scenario.kind = ScenarioKind::parse(value)?,
                "n" => cfg.scenario.n = count(value, line, col)?,
                "seed" => cfg.scenario.seed = count(value, line, col)? as u64,
                "stationary_samples" => cfg.scenario.stationary_samples = count(value, line, col)?,
                "rotation_per_axis_deg" => cfg.scenario.rotation_per_axis = num()?.to_radians(),
                "gyro_bias_x" => cfg.scenario.gyro_bias.x = num()?,
                "gyro_bias_y" => cfg.scenario.gyro_bias.y = num()?,
                "gyro_bias_z" => cfg.scenario.gyro_bias.z = num()?,
                "mag_disturbance" => cfg.scenario.mag_disturbance = flag(value, line, col)?.then(MagDisturbance::default),
                _ => return Err(unknown()),
            },
            "estimator" => match key {
                "algorithm" => alg_name = Some(value.to_string()),
                "alpha" => alpha = num()?,
                "use_mag" => cfg.estimator.use_mag = flag(value, line, col)?,
                "estimate_bias" => cfg.estimator.estimate_bias = flag(value, line, col)?,
                "max_iterations" => cfg.estimator.settings.max_iterations = count(value, line, col)?,
                "convergence_tol" => cfg.estimator.settings.convergence_tol = num()?,
                "line_search" => cfg.estimator.settings.line_search = flag(value, line, col)?,
                _ => return Err(unknown()),
            },
            "ml" => match key {
                "relative_step" => cfg.ml.relative_step = num()?,
                "max_iterations" => cfg.ml.max_iterations = count(value, line, col)?,
                "gradient_tol" => cfg.ml.gradient_tol = num()?,
                "initial_step" => cfg.ml.initial_step = num()?,
                _ => return Err(unknown()),
            },
            _ => return Err(Error::Parse { line, column: 1, message: format!("key `{key}` outside a section") }),
        }
    }
    let mut env = Environment::with_dip(dip, sample_period);
    env.gravity_n = Vector3::new(0.0, 0.0, -gravity);
    cfg.set_models(noise, env);
    if let Some(name) = alg_name {
        cfg.algorithm = Algorithm::parse(&name, alpha)?;
    } else if let Algorithm::Complementary { .. } = cfg.algorithm {
        cfg.algorithm = Algorithm::Complementary { alpha };
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<std::path::Path>) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config("# nothing\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_override_fields() {
        let cfg = parse_config(
            "[noise]\nsigma_gyr = 0.02\n[environment]\nsample_period = 0.01\n[scenario]\nkind = pose-rand-acc:5\nseed = 9\n[estimator]\nalgorithm = compl\nalpha = 0.7 # blend\n",
        )
        .unwrap();
        assert_eq!(cfg.estimator.noise.sigma_gyr, 0.02);
        assert_eq!(cfg.scenario.noise.sigma_gyr, 0.02);
        assert_eq!(cfg.scenario.env.sample_period, 0.01);
        assert_eq!(cfg.scenario.kind, ScenarioKind::PoseRandAcc { variance: 5.0 });
        assert_eq!(cfg.scenario.seed, 9);
        assert_eq!(cfg.algorithm, Algorithm::Complementary { alpha: 0.7 });
    }

    #[test]
    fn unknown_keys_and_sections_fail() {
        assert!(matches!(parse_config("[noise]\nsigma_gyro = 1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config("[nosie]\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("seed = 1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("[scenario]\nn = -3\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_config("[noise]\nsigma_acc = 0\n").is_err());
    }
}
