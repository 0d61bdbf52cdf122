//! Actor and critic networks for every variant.

use rand::Rng;

use super::config::{AgentConfig, Variant};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{Activation, Binding, Linear, Lstm, Mlp, ParamSet};
use crate::replay::WindowBatch;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Role {
    Actor { act_limit: f64 },
    Critic,
}

#[derive(Clone, Debug)]
enum Body {
    Recurrent {
        lstm: Lstm,
        memory: Linear,
        current: Option<Linear>,
        perception: Mlp,
        include_past_actions: bool,
    },
    Feedforward {
        mlp: Mlp,
        window_actions: bool,
    },
}

/// Output of a forward pass. `memory` is the extracted history feature of
/// recurrent networks, `[N×memory_dense]`.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub output: Var,
    pub memory: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Network {
    params: ParamSet,
    body: Body,
    role: Role,
    obs_dim: usize,
    act_dim: usize,
    history_len: usize,
}

impl Network {
    pub fn new<R: Rng + ?Sized>(
        config: &AgentConfig,
        spec: &EnvSpec,
        role: Role,
        rng: &mut R,
    ) -> Result<Self> {
        let (od, ad, l) = (spec.obs_dim, spec.act_dim, config.history_len);
        let w = &config.widths;
        let action_in = if role == Role::Critic { ad } else { 0 };
        let (out_dim, out_act) = match role {
            Role::Actor { .. } => (ad, Activation::Tanh),
            Role::Critic => (1, Activation::Identity),
        };
        let mut params = ParamSet::new();
        let body = match config.variant {
            Variant::LstmTd3 => {
                let lstm = Lstm::new(&mut params, "mem.lstm", od + ad, w.memory_lstm, rng);
                let memory = Linear::new(
                    &mut params,
                    "mem.dense",
                    w.memory_lstm,
                    w.memory_dense,
                    Activation::Relu,
                    rng,
                );
                let current = config.use_cfe.then(|| {
                    Linear::new(
                        &mut params,
                        "cfe",
                        od + action_in,
                        w.current_feature,
                        Activation::Relu,
                        rng,
                    )
                });
                let current_width = if config.use_cfe {
                    w.current_feature
                } else {
                    od + action_in
                };
                let perception = head(
                    &mut params,
                    "pi",
                    w.memory_dense + current_width,
                    &w.perception,
                    out_dim,
                    out_act,
                    rng,
                )?;
                Body::Recurrent {
                    lstm,
                    memory,
                    current,
                    perception,
                    include_past_actions: config.include_past_actions,
                }
            }
            v => {
                let window_actions = v == Variant::Td3OwAddPastAct;
                let per_row = od + if window_actions { ad } else { 0 };
                let window_width = if v.uses_window() { l * per_row } else { 0 };
                let in_dim = window_width + od + action_in;
                let mlp = head(
                    &mut params,
                    "mlp",
                    in_dim,
                    &w.mlp_hidden,
                    out_dim,
                    out_act,
                    rng,
                )?;
                Body::Feedforward {
                    mlp,
                    window_actions,
                }
            }
        };
        Ok(Self {
            params,
            body,
            role,
            obs_dim: od,
            act_dim: ad,
            history_len: l,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.body, Body::Recurrent { .. })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Width of the layer that consumes the combined features: memory plus
    /// current feature for recurrent networks, the full flat input otherwise.
    pub fn perception_input_width(&self) -> usize {
        match &self.body {
            Body::Recurrent { perception, .. } => perception.in_dim(),
            Body::Feedforward { mlp, .. } => mlp.in_dim(),
        }
    }

    pub fn has_current_feature_extraction(&self) -> bool {
        matches!(
            &self.body,
            Body::Recurrent {
                current: Some(_),
                ..
            }
        )
    }

    /// Runs the network on `input`; critics also take `action: [N×act]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        input: &WindowBatch,
        action: Option<Var>,
    ) -> Result<Forward> {
        let n = input.size();
        if input.obs_dim() != self.obs_dim || input.act_dim() != self.act_dim {
            return Err(Error::ObsDimMismatch {
                expected: self.obs_dim,
                actual: input.obs_dim(),
            });
        }
        let action = match (self.role, action) {
            (Role::Critic, Some(a)) => {
                let expect = [n, self.act_dim];
                if tape.shape(a) != expect {
                    return Err(Error::dim("critic_action", tape.shape(a), &expect));
                }
                Some(a)
            }
            (Role::Critic, None) => {
                return Err(Error::Contract("critic forward needs an action".into()))
            }
            (Role::Actor { .. }, None) => None,
            (Role::Actor { .. }, Some(_)) => {
                return Err(Error::Contract("actor forward takes no action".into()))
            }
        };
        let obs = tape.constant(input.obs.clone());
        let current = match action {
            Some(a) => tape.concat(obs, a, 1)?,
            None => obs,
        };
        let (out, memory) = match &self.body {
            Body::Recurrent {
                lstm,
                memory,
                current: cfe,
                perception,
                include_past_actions,
            } => {
                let seq = tape.constant(history_sequence(input, *include_past_actions)?);
                let h = lstm.sequence(tape, bind, seq)?;
                let mem = memory.forward(tape, bind, h)?;
                let cur = match cfe {
                    Some(layer) => layer.forward(tape, bind, current)?,
                    None => current,
                };
                let z = tape.concat(mem, cur, 1)?;
                (perception.forward(tape, bind, z)?, Some(mem))
            }
            Body::Feedforward {
                mlp,
                window_actions,
            } => {
                if input.history_len != self.history_len && self.history_len > 0 {
                    return Err(Error::dim(
                        "window_input",
                        &[input.history_len],
                        &[self.history_len],
                    ));
                }
                let x = if self.history_len > 0 {
                    let win = tape.constant(flat_window(input, *window_actions)?);
                    tape.concat(win, current, 1)?
                } else {
                    current
                };
                (mlp.forward(tape, bind, x)?, None)
            }
        };
        let output = match self.role {
            Role::Actor { act_limit } => tape.scale(out, act_limit),
            Role::Critic => out,
        };
        Ok(Forward { output, memory })
    }
}

fn head<R: Rng + ?Sized>(
    params: &mut ParamSet,
    name: &str,
    in_dim: usize,
    hidden: &[usize],
    out_dim: usize,
    out_act: Activation,
    rng: &mut R,
) -> Result<Mlp> {
    let mut widths = vec![in_dim];
    widths.extend_from_slice(hidden);
    widths.push(out_dim);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(out_act);
    Mlp::new(params, name, &widths, &acts, rng)
}

/// `[N×R×(obs+act)]` LSTM input; past actions are zeroed when excluded.
fn history_sequence(input: &WindowBatch, include_actions: bool) -> Result<Tensor> {
    let (n, r, od, ad) = (input.size(), input.rows(), input.obs_dim(), input.act_dim());
    let (ho, ha) = (input.hist_obs.data(), input.hist_act.data());
    let mut data = Vec::with_capacity(n * r * (od + ad));
    for row in 0..n * r {
        data.extend_from_slice(&ho[row * od..(row + 1) * od]);
        if include_actions {
            data.extend_from_slice(&ha[row * ad..(row + 1) * ad]);
        } else {
            data.extend(std::iter::repeat_n(0.0, ad));
        }
    }
    Tensor::new(vec![n, r, od + ad], data)
}

/// `[N×l·row]` flattened window, oldest pair first.
fn flat_window(input: &WindowBatch, include_actions: bool) -> Result<Tensor> {
    let (n, r, od, ad) = (input.size(), input.rows(), input.obs_dim(), input.act_dim());
    let per_row = od + if include_actions { ad } else { 0 };
    let (ho, ha) = (input.hist_obs.data(), input.hist_act.data());
    let mut data = Vec::with_capacity(n * r * per_row);
    for row in 0..n * r {
        data.extend_from_slice(&ho[row * od..(row + 1) * od]);
        if include_actions {
            data.extend_from_slice(&ha[row * ad..(row + 1) * ad]);
        }
    }
    Tensor::new(vec![n, r * per_row], data)
}

/// The flat network input a window-based feed-forward variant sees for a
/// single step: the `l` window rows followed by `o_t`.
pub fn build_observation_window(
    variant: Variant,
    obs: &[f64],
    window: &crate::replay::HistoryWindow,
) -> Result<Vec<f64>> {
    let l = window.len();
    let input = WindowBatch::single(obs, window)?;
    let mut out = match variant {
        Variant::Td3Ow if l > 0 => flat_window(&input, false)?.into_data(),
        Variant::Td3OwAddPastAct if l > 0 => flat_window(&input, true)?.into_data(),
        Variant::Td3Ow | Variant::Td3OwAddPastAct => Vec::new(),
        v => {
            return Err(Error::Contract(format!(
                "{v} does not take a flat observation window"
            )))
        }
    };
    out.extend_from_slice(obs);
    Ok(out)
}
