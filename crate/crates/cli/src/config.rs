//! Layered run configuration: built-in defaults, then a `key = value`
//! config file, then command-line overrides, in that order.
//!
//! The effective configuration is echoed verbatim into every output file
//! (as `# cfg.key=value` comment lines) so artifacts are auditable. The
//! echo covers every result-determining field; execution details like the
//! output directory or the worker thread count are not part of it.

use std::fmt::Write as _;
use std::path::Path;

use bdcsense::cfnn::CfnnTopology;
use bdcsense::motor::{calibrate_unstated_params, CalibrationTargets, DriveProfile, MotorParams};
use bdcsense::pipeline::StopCriteria;
use bdcsense::rng::derive_seed;
use bdcsense::rprop::{RpropConfig, RpropVariant};

use crate::CliError;

/// Everything a run needs. One master `seed` deterministically derives the
/// noise, weight-init and fold sub-seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub motor: MotorParams,
    pub profile: DriveProfile,
    /// Integration step, s.
    pub dt: f64,
    /// Simulation horizon, s.
    pub t_end: f64,
    /// Dataset sampling rate, Hz.
    pub rate_hz: f64,
    /// Input noise levels, V and A.
    pub sigma_v: f64,
    pub sigma_i: f64,
    /// Network topology spec, e.g. `2-10-8-3`.
    pub topology: String,
    pub rprop: RpropConfig,
    pub stop: StopCriteria,
    /// Number of folds for the train/validation split (fold 0 is used).
    pub folds: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    /// The continuous-duty run of the studied machine: calibrated motor
    /// constants, rated voltage, the load torque that holds the
    /// calibrated operating point, and a horizon of five zero-speed
    /// thermal time constants.
    fn default() -> Self {
        let motor = MotorParams::calibrated_default();
        let cal = calibrate_unstated_params(&motor, &CalibrationTargets::default())
            .expect("default calibration is consistent");
        Self {
            motor,
            profile: cal.s1_profile(&motor),
            dt: 1e-4,
            t_end: (5.0 * motor.h_th / motor.k_th).floor(),
            rate_hz: 0.5,
            sigma_v: 0.24,
            sigma_i: 1.25e-3,
            topology: "2-10-8-3".to_string(),
            rprop: RpropConfig::default(),
            stop: StopCriteria::default(),
            folds: 5,
            seed: 42,
        }
    }
}

impl RunConfig {
    /// Applies one dotted-key override. Unknown keys and malformed values
    /// are validation errors naming the field.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad =
            |what: &str| CliError::Validation(format!("config key {key}: bad {what} {value:?}"));
        let f = |what: &str| -> Result<f64, CliError> {
            value.trim().parse::<f64>().map_err(|_| bad(what))
        };
        let u = |what: &str| -> Result<u64, CliError> {
            value.trim().parse::<u64>().map_err(|_| bad(what))
        };
        match key {
            "motor.v_rated" => self.motor.v_rated = f("voltage")?,
            "motor.p_rated" => self.motor.p_rated = f("power")?,
            "motor.tl_rated" => self.motor.tl_rated = f("torque")?,
            "motor.r_a0" => self.motor.r_a0 = f("resistance")?,
            "motor.l_a" => self.motor.l_a = f("inductance")?,
            "motor.k_e" => self.motor.k_e = f("torque constant")?,
            "motor.j" => self.motor.j = f("inertia")?,
            "motor.b" => self.motor.b = f("friction")?,
            "motor.alpha_cu" => self.motor.alpha_cu = f("temperature coefficient")?,
            "motor.k_ir" => self.motor.k_ir = f("iron loss constant")?,
            "motor.k_th" => self.motor.k_th = f("thermal transfer coefficient")?,
            "motor.ks" => self.motor.ks = f("speed transfer coefficient")?,
            "motor.h_th" => self.motor.h_th = f("thermal capacity")?,
            "profile" => {
                self.profile = DriveProfile::parse(value)
                    .map_err(|e| CliError::Validation(format!("config key {key}: {e}")))?
            }
            "sim.dt" => self.dt = f("step size")?,
            "sim.t_end" => self.t_end = f("horizon")?,
            "dataset.rate" => self.rate_hz = f("rate")?,
            "dataset.sigma_v" => self.sigma_v = f("sigma")?,
            "dataset.sigma_i" => self.sigma_i = f("sigma")?,
            "net.topology" => self.topology = value.trim().to_string(),
            "rprop.variant" => {
                self.rprop.variant = RpropVariant::parse(value)
                    .map_err(|e| CliError::Validation(format!("config key {key}: {e}")))?
            }
            "rprop.eta_plus" => self.rprop.eta_plus = f("factor")?,
            "rprop.eta_minus" => self.rprop.eta_minus = f("factor")?,
            "rprop.delta0" => self.rprop.delta0 = f("step size")?,
            "rprop.delta_max" => self.rprop.delta_max = f("step size")?,
            "rprop.delta_min" => self.rprop.delta_min = f("step size")?,
            "stop.max_epochs" => self.stop.max_epochs = u("count")? as usize,
            "stop.goal_sse" => self.stop.goal_sse = f("error goal")?,
            "stop.patience" => self.stop.patience = u("count")? as usize,
            "train.folds" => self.folds = u("count")? as usize,
            "seed" => self.seed = u("seed")?,
            _ => return Err(CliError::Validation(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a config file: `key = value` lines, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config file {}: {e}", path.display())))?;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Validation(format!(
                    "config file {}, line {}: expected key = value",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Validates every sub-configuration before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.motor.validate()?;
        self.profile.validate()?;
        if !self.dt.is_finite() || self.dt <= 0.0 || self.dt > self.motor.max_stable_dt() {
            return Err(CliError::Validation(format!(
                "sim.dt = {} must be positive and at most {:.3e} (stability bound)",
                self.dt,
                self.motor.max_stable_dt()
            )));
        }
        if !self.t_end.is_finite() || self.t_end < 0.0 {
            return Err(CliError::Validation(format!(
                "sim.t_end = {} must be non-negative",
                self.t_end
            )));
        }
        if !self.rate_hz.is_finite() || self.rate_hz <= 0.0 {
            return Err(CliError::Validation(format!(
                "dataset.rate = {} must be positive",
                self.rate_hz
            )));
        }
        let record_per_dt = 1.0 / self.rate_hz / self.dt;
        if (record_per_dt - record_per_dt.round()).abs() > 1e-6 {
            return Err(CliError::Validation(format!(
                "1/dataset.rate = {} must be an integer multiple of sim.dt = {}",
                1.0 / self.rate_hz,
                self.dt
            )));
        }
        if self.sigma_v < 0.0 || self.sigma_i < 0.0 {
            return Err(CliError::Validation(
                "dataset.sigma_v and dataset.sigma_i must be non-negative".into(),
            ));
        }
        let topo = self.parsed_topology()?;
        if topo.n_in() != 2 || topo.n_out() != 3 {
            return Err(CliError::Validation(format!(
                "net.topology must map 2 inputs to 3 outputs, got {}",
                self.topology
            )));
        }
        self.rprop.validate()?;
        self.stop.validate()?;
        if self.folds < 2 {
            return Err(CliError::Validation(format!(
                "train.folds = {} must be at least 2",
                self.folds
            )));
        }
        Ok(())
    }

    pub fn parsed_topology(&self) -> Result<CfnnTopology, CliError> {
        CfnnTopology::parse(&self.topology).map_err(CliError::from)
    }

    pub fn noise_seed(&self) -> u64 {
        derive_seed(self.seed, "noise")
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, "init")
    }

    pub fn fold_seed(&self) -> u64 {
        derive_seed(self.seed, "folds")
    }

    /// The effective configuration as sorted `(key, value)` pairs; the
    /// source of both `--print-config` and the artifact echo.
    pub fn entries(&self) -> Vec<(String, String)> {
        let m = &self.motor;
        vec![
            ("dataset.rate".into(), format!("{}", self.rate_hz)),
            ("dataset.sigma_i".into(), format!("{}", self.sigma_i)),
            ("dataset.sigma_v".into(), format!("{}", self.sigma_v)),
            ("motor.alpha_cu".into(), format!("{}", m.alpha_cu)),
            ("motor.b".into(), format!("{}", m.b)),
            ("motor.h_th".into(), format!("{}", m.h_th)),
            ("motor.j".into(), format!("{}", m.j)),
            ("motor.k_e".into(), format!("{}", m.k_e)),
            ("motor.k_ir".into(), format!("{}", m.k_ir)),
            ("motor.k_th".into(), format!("{}", m.k_th)),
            ("motor.ks".into(), format!("{}", m.ks)),
            ("motor.l_a".into(), format!("{}", m.l_a)),
            ("motor.p_rated".into(), format!("{}", m.p_rated)),
            ("motor.r_a0".into(), format!("{}", m.r_a0)),
            ("motor.tl_rated".into(), format!("{}", m.tl_rated)),
            ("motor.v_rated".into(), format!("{}", m.v_rated)),
            ("net.topology".into(), self.topology.clone()),
            ("profile".into(), self.profile.spec_string()),
            ("rprop.delta0".into(), format!("{}", self.rprop.delta0)),
            (
                "rprop.delta_max".into(),
                format!("{}", self.rprop.delta_max),
            ),
            (
                "rprop.delta_min".into(),
                format!("{}", self.rprop.delta_min),
            ),
            (
                "rprop.eta_minus".into(),
                format!("{}", self.rprop.eta_minus),
            ),
            ("rprop.eta_plus".into(), format!("{}", self.rprop.eta_plus)),
            (
                "rprop.variant".into(),
                self.rprop.variant.name().to_string(),
            ),
            ("seed".into(), format!("{}", self.seed)),
            ("sim.dt".into(), format!("{}", self.dt)),
            ("sim.t_end".into(), format!("{}", self.t_end)),
            ("stop.goal_sse".into(), format!("{}", self.stop.goal_sse)),
            (
                "stop.max_epochs".into(),
                format!("{}", self.stop.max_epochs),
            ),
            ("stop.patience".into(), format!("{}", self.stop.patience)),
            ("train.folds".into(), format!("{}", self.folds)),
        ]
    }

    /// `key = value` text of the effective configuration; valid as a
    /// config file for a later run.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    /// Comment pairs (`cfg.key`, value) prepended to every artifact.
    pub fn echo_comments(&self) -> Vec<(String, String)> {
        self.entries()
            .into_iter()
            .map(|(k, v)| (format!("cfg.{k}"), v))
            .collect()
    }
}
