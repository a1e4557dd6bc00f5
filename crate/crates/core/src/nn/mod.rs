//! Layers assembled on top of the autodiff graph.

mod attention;
mod dropout;
mod encoder;
mod linear;
mod lstm;
mod params;

pub use attention::{AttentionTrace, MultiHeadAttention};
pub use dropout::{check_rate, dropout, Dropout, Mode};
pub use encoder::{
    sinusoidal_encoding, EncoderConfig, LayerNorm, TransformerEncoder, LAYER_NORM_EPS,
};
pub use linear::{linear_forward, Activation, Linear};
pub use lstm::{lstm_forward, Lstm};
pub use params::{uniform_init, Bound, ParamStore};
