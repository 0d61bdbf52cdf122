//! Layers, parameter sets, the Adam optimizer and target-network updates.

mod adam;
mod layers;
mod params;

pub use adam::Adam;
pub use layers::{Activation, Linear, Lstm, Mlp};
pub use params::{uniform_weights, Binding, Param, ParamId, ParamSet};
