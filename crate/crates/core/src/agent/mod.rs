//! Deterministic actor-critic agents: DDPG, TD3, the window baselines and
//! LSTM-TD3 with its ablations.

mod config;
mod networks;

use rand::Rng;
use rand_distr::StandardNormal;

pub use config::{Ablation, AgentConfig, NetworkWidths, Variant};
pub use networks::{build_observation_window, Forward, Network, Role};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{Adam, Binding};
use crate::replay::{Batch, HistoryWindow, WindowBatch};
use crate::rng::{stream, RngStream};
use crate::tensor::{Tape, Tensor, Var};

/// Result of one call to [`Agent::train_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: Option<f64>,
}

/// Greedy action with the quantities tracked during evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActStats {
    pub action: Vec<f64>,
    pub q1: f64,
    pub actor_memory: Option<Vec<f64>>,
    pub critic_memory: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Agent {
    config: AgentConfig,
    spec: EnvSpec,
    actor: Network,
    actor_target: Network,
    actor_opt: Adam,
    critics: Vec<Network>,
    critic_targets: Vec<Network>,
    critic_opts: Vec<Adam>,
    critic_updates: u64,
    actor_updates: u64,
}

impl Agent {
    /// Builds main and target networks; initialization draws from the
    /// `Init` stream of `seed`.
    pub fn build(config: AgentConfig, spec: &EnvSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        if spec.obs_dim == 0 || spec.act_dim == 0 || !(spec.act_limit > 0.0) {
            return Err(Error::Config(format!("unusable environment spec {spec:?}")));
        }
        let mut rng = stream(seed, RngStream::Init);
        let actor = Network::new(
            &config,
            spec,
            Role::Actor {
                act_limit: spec.act_limit,
            },
            &mut rng,
        )?;
        let critics = (0..config.num_critics())
            .map(|_| Network::new(&config, spec, Role::Critic, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            actor_opt: Adam::new(actor.params(), config.lr_actor),
            critic_opts: critics
                .iter()
                .map(|c| Adam::new(c.params(), config.lr_critic))
                .collect(),
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            spec: spec.clone(),
            config,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn actor_target(&self) -> &Network {
        &self.actor_target
    }

    pub fn critics(&self) -> &[Network] {
        &self.critics
    }

    pub fn critic_targets(&self) -> &[Network] {
        &self.critic_targets
    }

    pub fn num_critics(&self) -> usize {
        self.critics.len()
    }

    /// Standard deviation of the target-policy smoothing noise actually used.
    pub fn target_noise_std(&self) -> f64 {
        if self.config.use_target_policy_smoothing {
            self.config.sigma_targ
        } else {
            0.0
        }
    }

    pub fn critic_updates(&self) -> u64 {
        self.critic_updates
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub(crate) fn set_update_counts(&mut self, critic: u64, actor: u64) {
        self.critic_updates = critic;
        self.actor_updates = actor;
    }

    /// Every network with a stable name, in checkpoint order.
    pub fn named_networks(&self) -> Vec<(String, &Network)> {
        let mut out = vec![
            ("actor".to_string(), &self.actor),
            ("actor_target".to_string(), &self.actor_target),
        ];
        for (j, (c, t)) in self.critics.iter().zip(&self.critic_targets).enumerate() {
            out.push((format!("critic{}", j + 1), c));
            out.push((format!("critic{}_target", j + 1), t));
        }
        out
    }

    pub fn named_networks_mut(&mut self) -> Vec<(String, &mut Network)> {
        let mut out = vec![
            ("actor".to_string(), &mut self.actor),
            ("actor_target".to_string(), &mut self.actor_target),
        ];
        for (j, (c, t)) in self
            .critics
            .iter_mut()
            .zip(self.critic_targets.iter_mut())
            .enumerate()
        {
            out.push((format!("critic{}", j + 1), c));
            out.push((format!("critic{}_target", j + 1), t));
        }
        out
    }

    /// A fresh live history for this agent's configured length.
    pub fn new_history(&self) -> HistoryWindow {
        HistoryWindow::empty(
            self.config.history_len,
            self.spec.obs_dim,
            self.spec.act_dim,
        )
    }

    /// `μ(o, h)` of the main actor, `[N×act]`.
    pub fn actor_forward(&self, input: &WindowBatch) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.actor.params().bind(&mut tape, false);
        let f = self.actor.forward(&mut tape, &b, input, None)?;
        Ok(tape.value(f.output).clone())
    }

    /// `Q_j(o, a, h)` of main critic `j` (0-based), `[N×1]`.
    pub fn critic_forward(&self, j: usize, input: &WindowBatch, action: &Tensor) -> Result<Tensor> {
        let critic = self
            .critics
            .get(j)
            .ok_or_else(|| Error::Contract(format!("critic index {j} out of range")))?;
        let mut tape = Tape::new();
        let b = critic.params().bind(&mut tape, false);
        let a = tape.constant(action.clone());
        let f = critic.forward(&mut tape, &b, input, Some(a))?;
        Ok(tape.value(f.output).clone())
    }

    /// `r + γ(1−d)·min_j Q_j⁻(o', a⁻, h')` with clipped target-policy
    /// smoothing. Noise is drawn row-major over `[N×act]` from `rng`.
    pub fn compute_target_q<R: Rng + ?Sized>(
        &self,
        batch: &Batch,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let q = self.target_min_q(&mut tape, batch, rng)?;
        Ok(bellman_target(
            &batch.reward,
            &batch.done,
            tape.value(q).data(),
            self.config.gamma,
        ))
    }

    fn target_min_q<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        rng: &mut R,
    ) -> Result<Var> {
        let lim = self.spec.act_limit;
        let ab = self.actor_target.params().bind(tape, false);
        let mu = self
            .actor_target
            .forward(tape, &ab, &batch.next, None)?
            .output;
        let mut a = mu;
        if self.config.use_target_policy_smoothing {
            let shape = tape.shape(mu).to_vec();
            let n: usize = shape.iter().product();
            let sigma = self.config.sigma_targ;
            let noise: Vec<f64> = (0..n)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let eps = tape.constant(Tensor::new(shape, noise)?);
            let c = self.config.noise_clip;
            let eps = tape.clamp(eps, -c, c);
            a = tape.add(a, eps)?;
        }
        let a = tape.clamp(a, -lim, lim);
        let mut q_min: Option<Var> = None;
        for target in &self.critic_targets {
            let cb = target.params().bind(tape, false);
            let q = target.forward(tape, &cb, &batch.next, Some(a))?.output;
            q_min = Some(match q_min {
                None => q,
                Some(m) => tape.min_pairwise(m, q)?,
            });
        }
        Ok(q_min.expect("at least one critic"))
    }

    /// Mean over critics of `mean((Q_j − y)²)`, recorded with every critic
    /// trainable.
    fn critic_loss(
        &self,
        tape: &mut Tape,
        batch: &Batch,
        target: &[f64],
    ) -> Result<(Var, Vec<Binding>)> {
        let n = batch.size();
        let y = tape.constant(Tensor::new(vec![n, 1], target.to_vec())?);
        let act = tape.constant(batch.act.clone());
        let mut binds = Vec::with_capacity(self.critics.len());
        let mut total: Option<Var> = None;
        for critic in &self.critics {
            let b = critic.params().bind(tape, true);
            let q = critic.forward(tape, &b, &batch.current, Some(act))?.output;
            let d = tape.sub(q, y)?;
            let sq = tape.mul(d, d)?;
            let mse = tape.mean(sq);
            total = Some(match total {
                None => mse,
                Some(t) => tape.add(t, mse)?,
            });
            binds.push(b);
        }
        let loss = tape.scale(
            total.expect("at least one critic"),
            1.0 / self.critics.len() as f64,
        );
        Ok((loss, binds))
    }

    /// Critic loss against a fixed target and its gradient, indexed
    /// `[critic][parameter]`. Parameters are left untouched.
    pub fn critic_loss_and_grads(
        &self,
        batch: &Batch,
        target: &[f64],
    ) -> Result<(f64, Vec<Vec<Vec<f64>>>)> {
        let mut tape = Tape::new();
        let (loss, binds) = self.critic_loss(&mut tape, batch, target)?;
        let grads = tape.backward(loss)?;
        let per_critic = self
            .critics
            .iter()
            .zip(&binds)
            .map(|(c, b)| {
                c.params()
                    .iter()
                    .zip(b.vars())
                    .map(|(p, &v)| {
                        grads
                            .get(v)
                            .map_or_else(|| vec![0.0; p.value.numel()], <[f64]>::to_vec)
                    })
                    .collect()
            })
            .collect();
        Ok((tape.value(loss).item(), per_critic))
    }

    /// One Adam step on every critic against the shared target; returns the
    /// loss before the step.
    pub fn update_critics<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let target = self.compute_target_q(batch, rng)?;
        let mut tape = Tape::new();
        let (loss, binds) = self.critic_loss(&mut tape, batch, &target)?;
        let grads = tape.backward(loss)?;
        for ((critic, b), opt) in self
            .critics
            .iter_mut()
            .zip(&binds)
            .zip(&mut self.critic_opts)
        {
            critic.params_mut().accumulate_grads(b, &grads);
            opt.step(critic.params_mut());
        }
        self.critic_updates += 1;
        Ok(tape.value(loss).item())
    }

    /// One Adam step ascending `mean Q1(o, μ(o, h), h)`; the critic enters as
    /// constants. Returns the objective before the step.
    pub fn update_actor(&mut self, batch: &Batch) -> Result<f64> {
        let mut tape = Tape::new();
        let ab = self.actor.params().bind(&mut tape, true);
        let cb = self.critics[0].params().bind(&mut tape, false);
        let a = self
            .actor
            .forward(&mut tape, &ab, &batch.current, None)?
            .output;
        let q = self.critics[0]
            .forward(&mut tape, &cb, &batch.current, Some(a))?
            .output;
        let objective = tape.mean(q);
        let loss = tape.scale(objective, -1.0);
        let grads = tape.backward(loss)?;
        self.actor.params_mut().accumulate_grads(&ab, &grads);
        self.actor_opt.step(self.actor.params_mut());
        self.actor_updates += 1;
        Ok(tape.value(objective).item())
    }

    /// Polyak-averages every target toward its main network.
    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.config.tau;
        self.actor_target
            .params_mut()
            .soft_update(self.actor.params(), tau)?;
        for (t, m) in self.critic_targets.iter_mut().zip(&self.critics) {
            t.params_mut().soft_update(m.params(), tau)?;
        }
        Ok(())
    }

    /// Critic update, then every `policy_delay` critic updates an actor
    /// update followed by target updates.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let critic_loss = self.update_critics(batch, rng)?;
        let actor_objective = if self.critic_updates % self.config.policy_delay == 0 {
            let obj = self.update_actor(batch)?;
            self.update_targets()?;
            Some(obj)
        } else {
            None
        };
        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }

    /// `clamp(μ(o, h) + ε)`, with `ε ~ N(0, σ_act)` when exploring.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        history: &HistoryWindow,
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let input = WindowBatch::single(obs, history)?;
        let mut a = self.actor_forward(&input)?.into_data();
        let lim = self.spec.act_limit;
        for x in &mut a {
            if explore {
                *x += self.config.sigma_act * rng.sample::<f64, _>(StandardNormal);
            }
            *x = x.clamp(-lim, lim);
        }
        Ok(a)
    }

    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let lim = self.spec.act_limit;
        (0..self.spec.act_dim)
            .map(|_| rng.random_range(-lim..=lim))
            .collect()
    }

    /// Action for environment step `t` (1-based) during training: uniform
    /// random for the first `start_steps`, noisy policy afterwards.
    pub fn exploration_action<R: Rng + ?Sized>(
        &self,
        t: u64,
        obs: &[f64],
        history: &HistoryWindow,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if t <= self.config.start_steps {
            Ok(self.random_action(rng))
        } else {
            self.select_action(obs, history, true, rng)
        }
    }

    /// Greedy action plus `Q1` of that action and the memory activations.
    pub fn act_with_stats(&self, obs: &[f64], history: &HistoryWindow) -> Result<ActStats> {
        let input = WindowBatch::single(obs, history)?;
        let mut tape = Tape::new();
        let ab = self.actor.params().bind(&mut tape, false);
        let af = self.actor.forward(&mut tape, &ab, &input, None)?;
        let cb = self.critics[0].params().bind(&mut tape, false);
        let cf = self.critics[0].forward(&mut tape, &cb, &input, Some(af.output))?;
        let lim = self.spec.act_limit;
        let action = tape
            .value(af.output)
            .data()
            .iter()
            .map(|x| x.clamp(-lim, lim))
            .collect();
        Ok(ActStats {
            action,
            q1: tape.value(cf.output).item(),
            actor_memory: af.memory.map(|m| tape.value(m).data().to_vec()),
            critic_memory: cf.memory.map(|m| tape.value(m).data().to_vec()),
        })
    }
}

/// `r + γ(1−d)q` elementwise.
pub fn bellman_target(reward: &[f64], done: &[f64], q_next: &[f64], gamma: f64) -> Vec<f64> {
    reward
        .iter()
        .zip(done)
        .zip(q_next)
        .map(|((r, d), q)| r + gamma * (1.0 - d) * q)
        .collect()
}
