use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::DEFAULT_CAPACITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ddpg,
    Td3,
    /// TD3 whose input is the observation window followed by `o_t`.
    Td3Ow,
    /// TD3 whose input is the observation-and-action window followed by `o_t`.
    #[serde(rename = "td3-ow-apa")]
    Td3OwAddPastAct,
    LstmTd3,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ddpg => "ddpg",
            Variant::Td3 => "td3",
            Variant::Td3Ow => "td3-ow",
            Variant::Td3OwAddPastAct => "td3-ow-apa",
            Variant::LstmTd3 => "lstm-td3",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self == Variant::LstmTd3
    }

    pub fn uses_window(self) -> bool {
        matches!(
            self,
            Variant::Td3Ow | Variant::Td3OwAddPastAct | Variant::LstmTd3
        )
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddpg" => Ok(Variant::Ddpg),
            "td3" => Ok(Variant::Td3),
            "td3-ow" => Ok(Variant::Td3Ow),
            "td3-ow-apa" | "td3-ow-addpastact" => Ok(Variant::Td3OwAddPastAct),
            "lstm-td3" => Ok(Variant::LstmTd3),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Components that can be removed from the full LSTM-TD3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Double critics.
    Dc,
    /// Target policy smoothing.
    Tps,
    /// Current feature extraction.
    Cfe,
    /// Past actions inside the history.
    Pa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkWidths {
    /// Hidden layers of the feed-forward baselines.
    pub mlp_hidden: Vec<usize>,
    pub memory_lstm: usize,
    pub memory_dense: usize,
    pub current_feature: usize,
    pub perception: Vec<usize>,
}

impl Default for NetworkWidths {
    fn default() -> Self {
        Self {
            mlp_hidden: vec![256, 256],
            memory_lstm: 128,
            memory_dense: 128,
            current_feature: 128,
            perception: vec![128, 128],
        }
    }
}

impl NetworkWidths {
    /// Uniformly narrow networks, handy for tests.
    pub fn uniform(width: usize) -> Self {
        Self {
            mlp_hidden: vec![width, width],
            memory_lstm: width,
            memory_dense: width,
            current_feature: width,
            perception: vec![width, width],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub variant: Variant,
    pub history_len: usize,
    pub use_double_critics: bool,
    pub use_target_policy_smoothing: bool,
    pub use_cfe: bool,
    pub include_past_actions: bool,
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    pub sigma_act: f64,
    pub sigma_targ: f64,
    pub noise_clip: f64,
    pub policy_delay: u64,
    pub start_steps: u64,
    pub update_after: u64,
    pub replay_capacity: usize,
    pub widths: NetworkWidths,
}

impl AgentConfig {
    /// Defaults of the hyperparameter table for `variant`.
    pub fn new(variant: Variant) -> Self {
        let ddpg = variant == Variant::Ddpg;
        Self {
            variant,
            history_len: if variant.uses_window() { 5 } else { 0 },
            use_double_critics: !ddpg,
            use_target_policy_smoothing: !ddpg,
            use_cfe: true,
            include_past_actions: true,
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            batch_size: 100,
            sigma_act: 0.1,
            sigma_targ: 0.2,
            noise_clip: 0.5,
            policy_delay: if ddpg { 1 } else { 2 },
            start_steps: 10_000,
            update_after: 1_000,
            replay_capacity: DEFAULT_CAPACITY,
            widths: NetworkWidths::default(),
        }
    }

    pub fn lstm_td3(history_len: usize) -> Self {
        Self {
            history_len,
            ..Self::new(Variant::LstmTd3)
        }
    }

    /// Removes one component. Dropping both `Dc` and `Tps` yields LSTM-DDPG.
    pub fn without(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::Dc => self.use_double_critics = false,
            Ablation::Tps => self.use_target_policy_smoothing = false,
            Ablation::Cfe => self.use_cfe = false,
            Ablation::Pa => self.include_past_actions = false,
        }
        self
    }

    pub fn num_critics(&self) -> usize {
        if self.use_double_critics {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let v = self.variant;
        if v == Variant::Ddpg
            && (self.use_double_critics
                || self.use_target_policy_smoothing
                || self.policy_delay != 1)
        {
            return fail(
                "DDPG uses a single critic, no target smoothing and no policy delay".into(),
            );
        }
        if !v.is_recurrent() && !(self.use_cfe && self.include_past_actions) {
            return fail(format!(
                "--no-cfe and --no-pa only apply to lstm-td3, not {v}"
            ));
        }
        if !v.uses_window() && self.history_len != 0 {
            return fail(format!("{v} takes no history; history_len must be 0"));
        }
        if self.policy_delay == 0 || self.batch_size == 0 {
            return fail("policy_delay and batch_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.tau) {
            return fail("gamma and tau must lie in [0, 1]".into());
        }
        let nonneg = [
            self.sigma_act,
            self.sigma_targ,
            self.noise_clip,
            self.lr_actor,
            self.lr_critic,
        ];
        if nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return fail("noise scales and learning rates must be finite and non-negative".into());
        }
        if self.replay_capacity == 0 {
            return fail("replay_capacity must be positive".into());
        }
        if self.update_after == 0 {
            return fail("update_after must be at least 1".into());
        }
        let w = &self.widths;
        let all_widths = w.mlp_hidden.iter().chain(&w.perception).chain([
            &w.memory_lstm,
            &w.memory_dense,
            &w.current_feature,
        ]);
        if all_widths.clone().any(|&x| x == 0) || w.mlp_hidden.is_empty() || w.perception.is_empty()
        {
            return fail("network widths must be positive and non-empty".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_hyperparameter_table() {
        let c = AgentConfig::new(Variant::LstmTd3);
        assert_eq!(
            (c.gamma, c.tau, c.lr_actor, c.lr_critic),
            (0.99, 0.005, 1e-3, 1e-3)
        );
        assert_eq!((c.batch_size, c.policy_delay), (100, 2));
        assert_eq!((c.sigma_act, c.sigma_targ, c.noise_clip), (0.1, 0.2, 0.5));
        assert_eq!(
            (c.start_steps, c.update_after, c.replay_capacity),
            (10_000, 1_000, 1_000_000)
        );
        c.validate().unwrap();
    }

    #[test]
    fn ddpg_defaults_and_constraints() {
        let c = AgentConfig::new(Variant::Ddpg);
        assert!(!c.use_double_critics && !c.use_target_policy_smoothing);
        assert_eq!(c.policy_delay, 1);
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.use_double_critics = true;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn ablation_flags_only_for_lstm() {
        assert!(AgentConfig::new(Variant::Td3)
            .without(Ablation::Cfe)
            .validate()
            .is_err());
        assert!(AgentConfig::lstm_td3(3)
            .without(Ablation::Cfe)
            .validate()
            .is_ok());
        let mut td3 = AgentConfig::new(Variant::Td3);
        td3.history_len = 3;
        assert!(td3.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [
            Variant::Ddpg,
            Variant::Td3,
            Variant::Td3Ow,
            Variant::Td3OwAddPastAct,
            Variant::LstmTd3,
        ] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
    }
}
