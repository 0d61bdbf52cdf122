use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{Ablation, AgentConfig, Variant};
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::pomdp::{PomdpConfig, PomdpVersion};

pub const DEFAULT_EVAL_EVERY: u64 = 4_000;
pub const DEFAULT_EVAL_EPISODES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub env: EnvKind,
    pub pomdp: PomdpConfig,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(agent: AgentConfig, env: EnvKind, pomdp: PomdpConfig) -> Self {
        Self {
            agent,
            env,
            pomdp,
            total_steps: 50_000,
            eval_every: DEFAULT_EVAL_EVERY,
            eval_episodes: DEFAULT_EVAL_EPISODES,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.pomdp.validate()?;
        self.pomdp.wrapped_spec(&self.env.make().spec())?;
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        Ok(())
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(format!("seed-{seed}"))
    }
}

/// Flat key-value settings mirroring the `train` flags. Every field is
/// optional so a config file and the command line can be layered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainSettings {
    pub algo: Option<Variant>,
    pub env: Option<EnvKind>,
    pub pomdp: Option<PomdpVersion>,
    pub p_flk: Option<f64>,
    pub sigma_rn: Option<f64>,
    pub p_rsm: Option<f64>,
    pub history_len: Option<usize>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub steps: Option<u64>,
    pub eval_every: Option<u64>,
    pub eval_episodes: Option<usize>,
    pub out: Option<PathBuf>,
    pub no_dc: Option<bool>,
    pub no_tps: Option<bool>,
    pub no_cfe: Option<bool>,
    pub no_pa: Option<bool>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub lr_actor: Option<f64>,
    pub lr_critic: Option<f64>,
    pub batch_size: Option<usize>,
    pub sigma_act: Option<f64>,
    pub sigma_targ: Option<f64>,
    pub noise_clip: Option<f64>,
    pub policy_delay: Option<u64>,
    pub start_steps: Option<u64>,
    pub update_after: Option<u64>,
    pub replay_capacity: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $over:expr, $($field:ident),* $(,)?) => {
        TrainSettings { $($field: $over.$field.or($base.$field)),* }
    };
}

impl TrainSettings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bad config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` win.
    pub fn overlaid_with(self, over: TrainSettings) -> Self {
        overlay!(
            self,
            over,
            algo,
            env,
            pomdp,
            p_flk,
            sigma_rn,
            p_rsm,
            history_len,
            seed,
            seeds,
            steps,
            eval_every,
            eval_episodes,
            out,
            no_dc,
            no_tps,
            no_cfe,
            no_pa,
            gamma,
            tau,
            lr_actor,
            lr_critic,
            batch_size,
            sigma_act,
            sigma_targ,
            noise_clip,
            policy_delay,
            start_steps,
            update_after,
            replay_capacity,
        )
    }

    pub fn to_run_config(&self) -> Result<RunConfig> {
        let variant = self.algo.ok_or_else(|| {
            Error::Config("`algo` must be given on the command line or in the config file".into())
        })?;
        let mut agent = AgentConfig::new(variant);
        if let Some(l) = self.history_len {
            agent.history_len = l;
        }
        for (flag, ablation) in [
            (self.no_dc, Ablation::Dc),
            (self.no_tps, Ablation::Tps),
            (self.no_cfe, Ablation::Cfe),
            (self.no_pa, Ablation::Pa),
        ] {
            if flag == Some(true) {
                agent = agent.without(ablation);
            }
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { agent.$field = v; })* };
        }
        set!(
            gamma,
            tau,
            lr_actor,
            lr_critic,
            batch_size,
            sigma_act,
            sigma_targ,
            noise_clip,
            policy_delay,
            start_steps,
            update_after,
            replay_capacity
        );

        let mut pomdp = PomdpConfig::new(self.pomdp.unwrap_or(PomdpVersion::Mdp));
        if let Some(p) = self.p_flk {
            pomdp.p_flk = p;
        }
        if let Some(s) = self.sigma_rn {
            pomdp.sigma_rn = s;
        }
        if let Some(p) = self.p_rsm {
            pomdp.p_rsm = p;
        }

        let mut run = RunConfig::new(agent, self.env.unwrap_or(EnvKind::Pendulum), pomdp);
        run.seeds = match (&self.seeds, self.seed) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => vec![0],
        };
        if let Some(t) = self.steps {
            run.total_steps = t;
        }
        if let Some(k) = self.eval_every {
            run.eval_every = k;
        }
        if let Some(e) = self.eval_episodes {
            run.eval_episodes = e;
        }
        if let Some(o) = &self.out {
            run.out_dir = o.clone();
        }
        run.validate()?;
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_are_overridden_by_cli() {
        let file = TrainSettings::from_toml_str(
            r#"
            algo = "lstm-td3"
            env = "pendulum"
            pomdp = "flk"
            p-flk = 0.3
            history-len = 3
            steps = 1000
            no-dc = true
            "#,
        )
        .unwrap();
        let cli = TrainSettings {
            history_len: Some(5),
            seed: Some(7),
            ..Default::default()
        };
        let run = file.overlaid_with(cli).to_run_config().unwrap();
        assert_eq!(run.agent.history_len, 5);
        assert_eq!(run.seeds, vec![7]);
        assert_eq!(run.pomdp.version, PomdpVersion::Flk);
        assert_eq!(run.pomdp.p_flk, 0.3);
        assert_eq!(run.total_steps, 1000);
        assert!(!run.agent.use_double_critics);
        assert!(run.agent.use_target_policy_smoothing);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            TrainSettings::from_toml_str("algo = \"td3\"\nbogus = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn algo_is_required_and_validated() {
        assert!(TrainSettings::default().to_run_config().is_err());
        let s = TrainSettings {
            algo: Some(Variant::Td3),
            no_cfe: Some(true),
            ..Default::default()
        };
        assert!(s.to_run_config().is_err());
        let s = TrainSettings {
            algo: Some(Variant::Td3OwAddPastAct),
            ..Default::default()
        };
        assert_eq!(s.to_run_config().unwrap().agent.history_len, 5);
    }

    #[test]
    fn apa_key_spelling() {
        let s = TrainSettings::from_toml_str("algo = \"td3-ow-apa\"").unwrap();
        assert_eq!(s.algo, Some(Variant::Td3OwAddPastAct));
    }
}
