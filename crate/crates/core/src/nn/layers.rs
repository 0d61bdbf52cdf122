use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform_weights, Binding, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// `y = act(x·Wᵀ + b)` with `W: [out×in]`, `b: [out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(
            format!("{name}.weight"),
            uniform_weights(out_dim, in_dim, in_dim, rng),
        );
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        let z = tape.matmul_t(x, bind.var(self.weight))?;
        let z = tape.add_bias(z, bind.var(self.bias))?;
        Ok(self.activation.apply(tape, z))
    }
}

/// Stack of linear layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists every layer width including input and output;
    /// `activations` has one entry per layer (`widths.len() - 1`).
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        widths: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "mlp `{name}` needs n+1 widths for n activations, got {} and {}",
                widths.len(),
                activations.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config(format!("mlp `{name}` has a zero width")));
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .enumerate()
            .map(|(i, (w, &act))| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], act, rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(tape, bind, x)?;
        }
        Ok(x)
    }
}

/// Single LSTM layer with separate per-gate weights over `[x, h]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    w_i: ParamId,
    w_f: ParamId,
    w_o: ParamId,
    w_g: ParamId,
    b_i: ParamId,
    b_f: ParamId,
    b_o: ParamId,
    b_g: ParamId,
    in_dim: usize,
    hidden: usize,
}

impl Lstm {
    /// Gate weights are uniform in `±sqrt(1/(in+hidden))`; biases are zero
    /// except the forget gate, which starts at 1.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_dim + hidden;
        let mut weight = |gate: &str, rng: &mut R| {
            params.add(
                format!("{name}.w_{gate}"),
                uniform_weights(hidden, fan_in, fan_in, rng),
            )
        };
        let w_i = weight("i", rng);
        let w_f = weight("f", rng);
        let w_o = weight("o", rng);
        let w_g = weight("g", rng);
        let b_i = params.add(format!("{name}.b_i"), Tensor::zeros(&[hidden]));
        let b_f = params.add(format!("{name}.b_f"), Tensor::vector(vec![1.0; hidden]));
        let b_o = params.add(format!("{name}.b_o"), Tensor::zeros(&[hidden]));
        let b_g = params.add(format!("{name}.b_g"), Tensor::zeros(&[hidden]));
        Self {
            w_i,
            w_f,
            w_o,
            w_g,
            b_i,
            b_f,
            b_o,
            b_g,
            in_dim,
            hidden,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One cell update. `x: [batch×in]`, `h, c: [batch×hidden]`.
    pub fn step(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let batch = tape.shape(x)[0];
        let expect_x = [batch, self.in_dim];
        let expect_h = [batch, self.hidden];
        if tape.shape(x) != expect_x {
            return Err(Error::dim("lstm_step", tape.shape(x), &expect_x));
        }
        if tape.shape(h) != expect_h || tape.shape(c) != expect_h {
            return Err(Error::dim("lstm_step", tape.shape(h), &expect_h));
        }
        let stacked = self.stack_gates(tape, bind)?;
        self.fused_step(tape, stacked, x, h, c)
    }

    /// Gate weights `[4H×(in+H)]` and biases `[4H]` in `i, f, o, g` order.
    fn stack_gates(&self, tape: &mut Tape, bind: &Binding) -> Result<(Var, Var)> {
        let mut w = bind.var(self.w_i);
        let mut b = bind.var(self.b_i);
        for (wg, bg) in [
            (self.w_f, self.b_f),
            (self.w_o, self.b_o),
            (self.w_g, self.b_g),
        ] {
            w = tape.concat(w, bind.var(wg), 0)?;
            b = tape.concat(b, bind.var(bg), 0)?;
        }
        Ok((w, b))
    }

    fn fused_step(
        &self,
        tape: &mut Tape,
        (w, b): (Var, Var),
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let xh = tape.concat(x, h, 1)?;
        let z = tape.matmul_t(xh, w)?;
        let z = tape.add_bias(z, b)?;
        let state = tape.lstm_cell(z, c)?;
        Ok((tape.select(state, 1, 0)?, tape.select(state, 1, 1)?))
    }

    /// Runs the cell over `xs: [batch×T×in]` from a zero state and returns
    /// the final hidden state `[batch×hidden]`.
    pub fn sequence(&self, tape: &mut Tape, bind: &Binding, xs: Var) -> Result<Var> {
        let (batch, steps) = match *tape.shape(xs) {
            [b, t, d] if d == self.in_dim => (b, t),
            ref s => return Err(Error::dim("lstm_sequence", s, &[0, 0, self.in_dim])),
        };
        if steps == 0 {
            return Err(Error::Contract(
                "lstm_sequence needs at least one step; supply a zero dummy row instead".into(),
            ));
        }
        let mut h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let mut c = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let stacked = self.stack_gates(tape, bind)?;
        for t in 0..steps {
            let x = tape.select(xs, 1, t)?;
            (h, c) = self.fused_step(tape, stacked, x, h, c)?;
        }
        Ok(h)
    }
}
