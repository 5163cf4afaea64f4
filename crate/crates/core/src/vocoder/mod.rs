//! LPC-residual neural vocoder.

mod fastmath;
mod lpc;
mod net;
mod synth;

pub use lpc::{cepstrum_to_lpc, levinson_durbin, LpcFilter, LpcHistory, LPC_ORDER};
pub use net::{
    frame_condition, VocoderWeights, BLOCK, CLASSES, COND_DIM, EMBED_DIM, GRU_A, GRU_A_INPUT,
    GRU_B, GRU_B_INPUT,
};
pub use synth::{
    bypass_reconstruction, bypass_synthesize, synthesize, synthesize_preemphasized,
    synthesize_with, SampleNet, TemperaturePolicy,
};
