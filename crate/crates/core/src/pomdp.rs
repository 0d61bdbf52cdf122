//! Observation corruption wrappers turning a fully observable task into a
//! partially observable one.
//!
//! | version | effect                                               |
//! |---------|------------------------------------------------------|
//! | `Mdp`   | observation passed through                           |
//! | `Rv`    | velocity entries removed                             |
//! | `Flk`   | whole observation zeroed with probability `p_flk`    |
//! | `Rn`    | `N(0, σ_rn)` noise added to every entry              |
//! | `Rsm`   | each entry zeroed independently with prob. `p_rsm`   |
//!
//! The wrapper owns its own random stream, so changing corruption settings
//! never perturbs environment or agent randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvSpec, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PomdpVersion {
    Mdp,
    Rv,
    Flk,
    Rn,
    Rsm,
}

impl PomdpVersion {
    pub fn name(self) -> &'static str {
        match self {
            PomdpVersion::Mdp => "mdp",
            PomdpVersion::Rv => "rv",
            PomdpVersion::Flk => "flk",
            PomdpVersion::Rn => "rn",
            PomdpVersion::Rsm => "rsm",
        }
    }
}

impl std::fmt::Display for PomdpVersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PomdpVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mdp" => Ok(PomdpVersion::Mdp),
            "rv" => Ok(PomdpVersion::Rv),
            "flk" => Ok(PomdpVersion::Flk),
            "rn" => Ok(PomdpVersion::Rn),
            "rsm" => Ok(PomdpVersion::Rsm),
            other => Err(Error::Config(format!("unknown POMDP version `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PomdpConfig {
    pub version: PomdpVersion,
    pub p_flk: f64,
    pub sigma_rn: f64,
    pub p_rsm: f64,
    pub rng_seed: u64,
}

impl Default for PomdpConfig {
    fn default() -> Self {
        Self {
            version: PomdpVersion::Mdp,
            p_flk: 0.2,
            sigma_rn: 0.1,
            p_rsm: 0.1,
            rng_seed: 0,
        }
    }
}

impl PomdpConfig {
    pub fn new(version: PomdpVersion) -> Self {
        Self {
            version,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("p_flk", self.p_flk)?;
        prob("p_rsm", self.p_rsm)?;
        if !(self.sigma_rn >= 0.0 && self.sigma_rn.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_rn must be >= 0, got {}",
                self.sigma_rn
            )));
        }
        Ok(())
    }

    /// Interface of the environment as seen through this corruption.
    pub fn wrapped_spec(&self, spec: &EnvSpec) -> Result<EnvSpec> {
        self.validate()?;
        if self.version != PomdpVersion::Rv {
            return Ok(spec.clone());
        }
        if spec.velocity_indices.is_empty() {
            return Err(Error::Config(
                "POMDP-RV is undefined for an environment without velocity entries".into(),
            ));
        }
        Ok(EnvSpec {
            obs_dim: spec.obs_dim - spec.velocity_indices.len(),
            velocity_indices: Vec::new(),
            ..spec.clone()
        })
    }
}

/// Removes the velocity entries named by `spec`, preserving the order of the rest.
pub fn wrap_rv(obs: &[f64], spec: &EnvSpec) -> Result<Vec<f64>> {
    if spec.velocity_indices.is_empty() {
        return Err(Error::Config(
            "POMDP-RV is undefined for an environment without velocity entries".into(),
        ));
    }
    Ok(obs
        .iter()
        .enumerate()
        .filter(|(i, _)| !spec.velocity_indices.contains(i))
        .map(|(_, &v)| v)
        .collect())
}

/// Zeroes the whole observation with probability `p_flk` (one draw per call).
pub fn wrap_flk<R: Rng + ?Sized>(obs: &[f64], p_flk: f64, rng: &mut R) -> Vec<f64> {
    if rng.random::<f64>() < p_flk {
        vec![0.0; obs.len()]
    } else {
        obs.to_vec()
    }
}

/// Adds independent `N(0, sigma_rn)` noise to every entry.
pub fn wrap_rn<R: Rng + ?Sized>(obs: &[f64], sigma_rn: f64, rng: &mut R) -> Vec<f64> {
    if sigma_rn == 0.0 {
        return obs.to_vec();
    }
    let noise = Normal::new(0.0, sigma_rn).expect("sigma_rn validated as finite and >= 0");
    obs.iter().map(|v| v + noise.sample(rng)).collect()
}

/// Zeroes each entry independently with probability `p_rsm`.
pub fn wrap_rsm<R: Rng + ?Sized>(obs: &[f64], p_rsm: f64, rng: &mut R) -> Vec<f64> {
    obs.iter()
        .map(|&v| if rng.random::<f64>() < p_rsm { 0.0 } else { v })
        .collect()
}

/// Stateful corruption applied to each observation of a rollout.
#[derive(Clone, Debug)]
pub struct ObservationCorruptor {
    config: PomdpConfig,
    spec: EnvSpec,
    rng: ChaCha8Rng,
}

impl ObservationCorruptor {
    /// `spec` is the clean environment's interface.
    pub fn new(config: PomdpConfig, spec: EnvSpec) -> Result<Self> {
        config.wrapped_spec(&spec)?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self { config, spec, rng })
    }

    pub fn with_rng(config: PomdpConfig, spec: EnvSpec, rng: ChaCha8Rng) -> Result<Self> {
        config.wrapped_spec(&spec)?;
        Ok(Self { config, spec, rng })
    }

    pub fn config(&self) -> &PomdpConfig {
        &self.config
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn apply(&mut self, obs: &[f64]) -> Vec<f64> {
        match self.config.version {
            PomdpVersion::Mdp => obs.to_vec(),
            PomdpVersion::Rv => wrap_rv(obs, &self.spec).expect("validated at construction"),
            PomdpVersion::Flk => wrap_flk(obs, self.config.p_flk, &mut self.rng),
            PomdpVersion::Rn => wrap_rn(obs, self.config.sigma_rn, &mut self.rng),
            PomdpVersion::Rsm => wrap_rsm(obs, self.config.p_rsm, &mut self.rng),
        }
    }
}

/// An environment whose observations pass through an [`ObservationCorruptor`].
/// Rewards, done flags and dynamics are untouched.
pub struct PomdpEnv {
    inner: Box<dyn Env>,
    corruptor: ObservationCorruptor,
    spec: EnvSpec,
}

impl PomdpEnv {
    pub fn new(inner: Box<dyn Env>, config: PomdpConfig) -> Result<Self> {
        let clean = inner.spec();
        let spec = config.wrapped_spec(&clean)?;
        let corruptor = ObservationCorruptor::new(config, clean)?;
        Ok(Self {
            inner,
            corruptor,
            spec,
        })
    }

    pub fn with_rng(inner: Box<dyn Env>, config: PomdpConfig, rng: ChaCha8Rng) -> Result<Self> {
        let clean = inner.spec();
        let spec = config.wrapped_spec(&clean)?;
        let corruptor = ObservationCorruptor::with_rng(config, clean, rng)?;
        Ok(Self {
            inner,
            corruptor,
            spec,
        })
    }

    pub fn corruptor(&self) -> &ObservationCorruptor {
        &self.corruptor
    }
}

impl Env for PomdpEnv {
    fn spec(&self) -> EnvSpec {
        self.spec.clone()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let obs = self.inner.reset(seed);
        self.corruptor.apply(&obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        r.observation = self.corruptor.apply(&r.observation);
        Ok(r)
    }
}
