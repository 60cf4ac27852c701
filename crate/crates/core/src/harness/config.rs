use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::profile::ReferenceProfile;
use crate::anfis::{ExcitationConfig, LearnConfig};
use crate::error::{Error, Result};
use crate::mhe::MheConfig;
use crate::mpc::MpcConfig;
use crate::ts::{TsModel, DEFAULT_DT};
use crate::vehicle::{DynamicState, NoiseSpec, VehicleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Seconds to simulate; the profile length when absent.
    pub duration: Option<f64>,
    pub dt: f64,
    pub seed: u64,
    /// Initial plant state `[vx, vy, ω]`.
    pub initial_state: [f64; 3],
    /// Apply each input one tick after it was computed.
    pub compute_delay: bool,
    pub model: Option<PathBuf>,
    /// Reference profile file; the bundled racing profile when absent and no
    /// inline `[profile]` table is given.
    pub profile: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            duration: None,
            dt: DEFAULT_DT,
            seed: 0,
            initial_state: [0.8, 0.0, 0.0],
            compute_delay: false,
            model: None,
            profile: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub co_vx: f64,
    pub co_omega: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = NoiseSpec::default();
        Self {
            co_vx: n.co_vx,
            co_omega: n.co_omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    pub excitation: ExcitationConfig,
    pub learn: LearnConfig,
    /// Seed of the independent holdout run used by `validate`.
    pub holdout_seed: u64,
    /// Seconds of holdout data.
    pub holdout_duration: f64,
    /// Train from this CSV instead of generating excitation data.
    pub dataset: Option<PathBuf>,
}

impl Default for IdentifySection {
    fn default() -> Self {
        Self {
            excitation: ExcitationConfig::default(),
            learn: LearnConfig::default(),
            holdout_seed: 1,
            holdout_duration: 150.0,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub plant: VehicleParams,
    pub noise: NoiseSection,
    pub mpc: MpcConfig,
    pub mhe: MheConfig,
    pub identify: IdentifySection,
    pub profile: Option<ReferenceProfile>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.run.model,
            &mut cfg.run.profile,
            &mut cfg.identify.dataset,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return Err(Error::InvalidParameter("run.dt must be positive".into()));
        }
        if let Some(d) = r.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(
                    "run.duration must be positive".into(),
                ));
            }
        }
        if !DynamicState::from_array(r.initial_state).is_finite() {
            return Err(Error::InvalidParameter(
                "run.initial_state must be finite".into(),
            ));
        }
        self.plant.validate()?;
        self.noise_spec().validate()?;
        self.mpc.validate()?;
        self.mhe.validate()?;
        self.identify.learn.validate()?;
        if !(self.identify.holdout_duration > 0.0 && self.identify.holdout_duration.is_finite()) {
            return Err(Error::InvalidParameter(
                "identify.holdout_duration must be positive".into(),
            ));
        }
        if let Some(p) = &self.profile {
            p.validate()?;
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            co_vx: self.noise.co_vx,
            co_omega: self.noise.co_omega,
            seed: self.run.seed,
        }
    }

    pub fn initial_state(&self) -> DynamicState {
        DynamicState::from_array(self.run.initial_state)
    }

    /// Inline profile, then the profile file, then the bundled racing profile.
    pub fn reference_profile(&self) -> Result<ReferenceProfile> {
        if let Some(p) = &self.profile {
            return Ok(p.clone());
        }
        match &self.run.profile {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                ReferenceProfile::from_toml(&text)
            }
            None => Ok(ReferenceProfile::racing()),
        }
    }

    /// Sets the run seed and the seeds derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self.identify.learn.seed = seed;
        self
    }

    /// The run must step at the rate the model was identified at.
    pub fn check_model(&self, model: &TsModel) -> Result<()> {
        if (model.dt() - self.run.dt).abs() > 1e-9 * self.run.dt {
            return Err(Error::InvalidParameter(format!(
                "run.dt = {} does not match the model sampling time {}",
                self.run.dt,
                model.dt()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.mpc.hp, 6);
        assert_eq!(cfg.mhe.hp, 10);
    }

    #[test]
    fn dotted_keys_reach_the_controllers() {
        let cfg = RunConfig::from_toml(
            "[mpc]\nhp = 8\nq = [1.0, 0.0, 2.0]\n[mpc.bounds]\ndelta = [-0.2, 0.2]\n\
             [mhe]\nhp = 12\n[mhe.state_box]\nvy = [-0.2, 0.2]\n",
        )
        .unwrap();
        assert_eq!(cfg.mpc.hp, 8);
        assert_eq!(cfg.mpc.bounds.delta, [-0.2, 0.2]);
        assert_eq!(cfg.mpc.bounds.a, [-1.0, 4.0]);
        assert_eq!(cfg.mhe.hp, 12);
        assert_eq!(cfg.mhe.state_box.vy, [-0.2, 0.2]);
    }

    #[test]
    fn bad_values_and_unknown_keys_are_errors() {
        assert!(RunConfig::from_toml("[mpc]\nhp = 0\n").is_err());
        assert!(RunConfig::from_toml("[mpc]\nhorizon = 6\n").is_err());
        assert!(RunConfig::from_toml("[run]\ndt = -1.0\n").is_err());
        assert!(RunConfig::from_toml("[mhe.state_box]\nvx = [2.0, 1.0]\n").is_err());
    }

    #[test]
    fn seed_override_and_noise() {
        let cfg = RunConfig::default().with_seed(9);
        assert_eq!(cfg.noise_spec().seed, 9);
        assert_eq!(cfg.noise_spec().co_vx, 1e-6);
        assert_eq!(cfg.identify.learn.seed, 9);
    }
}
